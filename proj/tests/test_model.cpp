#include "support.hpp"

#include "quadfit/model.hpp"
#include "quadfit/synth.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace quadfit;
using model::FrameParams;
using model::QuadModel;

TEST_CASE("rest params reproduce the rest mesh exactly") {
  const QuadModel m(synth::quadruped_template());
  const Points3 v = m.pose(FrameParams::rest(m.tpl()));
  CHECK((v - m.tpl().rest_vertices).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("child rotation on a two-bone chain moves the tip by hand-computed FK") {
  const QuadModel m(qtest::chain_template());
  FrameParams p = FrameParams::rest(m.tpl());
  p.theta.segment<3>(3) = Eigen::Vector3d(0, 0, M_PI / 2);
  const Points3 v = m.pose(p);
  // Tip offset (1,0,0) from the child joint rotates onto +y.
  CHECK(v(4, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v(4, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(v(4, 2)) < 1e-12);
  // (1.5, 0.1) is (0.5, 0.1) from the joint -> (-0.1, 0.5).
  CHECK(v(3, 0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(v(3, 1) == doctest::Approx(0.5).epsilon(1e-12));
  // Root-bone vertices are untouched.
  CHECK((v.topRows(2) - m.tpl().rest_vertices.topRows(2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("limb scale stretches the child bone") {
  const QuadModel m(qtest::chain_template());
  FrameParams p = FrameParams::rest(m.tpl());
  p.limb_scales(0) = 2.0;
  const Points3 v = m.pose(p);
  // Child joint moves from (1,0,0) to (2,0,0); vertices skinned to it follow rigidly.
  CHECK(v(2, 0) == doctest::Approx(2.0));
  CHECK(v(4, 0) == doctest::Approx(3.0));
  CHECK(v(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("pure translation shifts every vertex") {
  const QuadModel m(synth::quadruped_template());
  FrameParams p = FrameParams::rest(m.tpl());
  p.translation = Eigen::Vector3d(1, 2, 3);
  const Points3 v = m.pose(p);
  const Points3 expect = m.tpl().rest_vertices.rowwise() + Eigen::RowVector3d(1, 2, 3);
  CHECK((v - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("global rotation of root pose and translation rotates the mesh") {
  const QuadModel m(synth::quadruped_template());
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    FrameParams p = qtest::random_params(m.tpl(), rng);
    const Eigen::Matrix3d R = rodrigues(Eigen::Vector3d::Random() * 1.2);
    FrameParams q = p;
    q.theta.head<3>() = matrix_to_axis_angle(R * rodrigues(p.theta.head<3>()));
    q.translation = R * p.translation;
    const Points3 a = m.pose(p), b = m.pose(q);
    const Points3 rotated = (a * R.transpose());
    CHECK((b - rotated).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("unit limb scales match the unscaled code path bit for bit") {
  const QuadModel m(synth::quadruped_template());
  std::mt19937_64 rng(11);
  FrameParams p = qtest::random_params(m.tpl(), rng);
  p.limb_scales.setOnes();
  const Points3 a = m.pose(p, true), b = m.pose(p, false);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("pose gradient matches central differences over 25 draws") {
  const QuadModel m(synth::quadruped_template());
  double worst = 0.0;
  for (int seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(seed);
    const FrameParams p = qtest::random_params(m.tpl(), rng, 0.6);
    Points3 W = Points3::Random(m.num_vertices(), 3);
    auto f = [&](const Eigen::VectorXd& x) { return (m.pose(qtest::unflatten(p, x)).array() * W.array()).sum(); };
    const Eigen::VectorXd analytic = qtest::flatten(m.pose_vjp(p, W));
    const Eigen::VectorXd numeric = qtest::numeric_gradient(f, qtest::flatten(p));
    worst = std::max(worst, qtest::relative_error(analytic, numeric));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("dimension mismatch names the field") {
  const QuadModel m(synth::quadruped_template());
  FrameParams p = FrameParams::rest(m.tpl());
  p.theta.resize(5);
  try {
    m.pose(p);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("theta") != std::string::npos);
  }
  p = FrameParams::rest(m.tpl());
  p.limb_scales(0) = -1.0;
  CHECK_THROWS_AS(m.pose(p), InputError);
}

TEST_CASE("part vertex lists follow a y-band labelling rule") {
  model::QuadTemplate tpl = synth::quadruped_template();
  auto band = [](double y) {
    if (y > 0.2) return Part::Head;
    if (y > -0.2) return Part::Body;
    if (y > -0.5) return Part::Tail;
    return Part::Feet;
  };
  for (int v = 0; v < tpl.num_vertices(); ++v) tpl.part_labels[v] = band(tpl.rest_vertices(v, 1));
  for (Part part : kAllParts) {
    std::vector<int> expect;
    for (int v = 0; v < tpl.num_vertices(); ++v)
      if (band(tpl.rest_vertices(v, 1)) == part) expect.push_back(v);
    CHECK(model::part_vertex_ids(tpl, part_name(part)) == expect);
  }
  CHECK_THROWS_AS(model::part_vertex_ids(tpl, "wing"), InputError);
}

TEST_CASE("part vertex lists partition the bundled template") {
  const model::QuadTemplate tpl = synth::quadruped_template();
  std::set<int> all;
  std::size_t total = 0;
  for (Part part : kAllParts) {
    const auto ids = model::part_vertex_ids(tpl, part_name(part));
    CHECK(!ids.empty());
    total += ids.size();
    all.insert(ids.begin(), ids.end());
  }
  CHECK(total == static_cast<std::size_t>(tpl.num_vertices()));
  CHECK(all.size() == static_cast<std::size_t>(tpl.num_vertices()));
  const auto head = model::part_vertex_ids(tpl, "head"), tail = model::part_vertex_ids(tpl, "tail");
  std::vector<int> both;
  std::set_intersection(head.begin(), head.end(), tail.begin(), tail.end(), std::back_inserter(both));
  CHECK(both.empty());
}

TEST_CASE("template validation rejects broken invariants") {
  model::QuadTemplate t = qtest::chain_template();
  CHECK_NOTHROW(t.validate());
  auto bad = t;
  bad.skin_weights(0, 0) = 0.9;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = t;
  bad.faces(0, 2) = 7;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = t;
  bad.joints[1].parent = 1;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = t;
  bad.pose_limits[0][1] = {1.0, -1.0};
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = t;
  bad.part_labels.pop_back();
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("template file round trip and OBJ export") {
  const auto dir = qtest::scratch_dir("model_io");
  const model::QuadTemplate t = synth::quadruped_template();
  model::save_template(t, dir / "t.json");
  const model::QuadTemplate u = model::load_template(dir / "t.json");
  CHECK(u.rest_vertices == t.rest_vertices);
  CHECK(u.faces == t.faces);
  CHECK(u.skin_weights == t.skin_weights);
  CHECK(u.part_labels == t.part_labels);
  CHECK(u.landmarks == t.landmarks);
  CHECK(u.num_limbs == t.num_limbs);

  model::write_obj(dir / "m.obj", t.rest_vertices, t.faces);
  std::ifstream in(dir / "m.obj");
  int nv = 0, nf = 0, min_index = 1 << 30;
  std::string tag;
  while (in >> tag) {
    if (tag == "v") {
      double x, y, z;
      in >> x >> y >> z;
      ++nv;
    } else if (tag == "f") {
      int a, b, c;
      in >> a >> b >> c;
      min_index = std::min({min_index, a, b, c});
      ++nf;
    }
  }
  CHECK(nv == t.num_vertices());
  CHECK(nf == t.faces.rows());
  CHECK(min_index == 1);
}

TEST_CASE("bundled template is a closed, positively oriented quadruped") {
  const model::QuadTemplate t = synth::quadruped_template();
  CHECK(t.num_vertices() == 600);
  CHECK(t.num_joints() == 13);
  CHECK(t.num_limbs == 4);
  CHECK(t.num_betas() == 8);
  CHECK(t.landmarks.size() == 4);
  // Every edge shared by exactly two faces.
  std::map<std::pair<int, int>, int> edges;
  double vol = 0.0;
  for (int f = 0; f < t.faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int a = t.faces(f, k), b = t.faces(f, (k + 1) % 3);
      edges[{std::min(a, b), std::max(a, b)}]++;
    }
    const Eigen::Vector3d a = t.rest_vertices.row(t.faces(f, 0)), b = t.rest_vertices.row(t.faces(f, 1)),
                          c = t.rest_vertices.row(t.faces(f, 2));
    vol += a.dot(b.cross(c)) / 6.0;
  }
  for (const auto& [e, n] : edges) CHECK(n == 2);
  CHECK(vol > 0.0);
}

#include "support.hpp"

#include "quadfit/eval.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace quadfit;
using namespace quadfit::eval;

namespace {

cues::ObjectMask rect(int W, int H, int x0, int y0, int x1, int y1) {
  cues::ObjectMask m(W, H);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(x, y);
  return m;
}

DepthMap constant_depth(int W, int H, double v) {
  return {W, H, std::vector<double>(std::size_t(W) * H, v)};
}

}  // namespace

TEST_CASE("IoU of a rectangle shifted by half its width is one third") {
  const auto a = rect(64, 64, 10, 10, 30, 40), b = rect(64, 64, 20, 10, 40, 40);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(cues::ObjectMask(8, 8), cues::ObjectMask(8, 8)) == 1.0);
  CHECK(iou(a, cues::ObjectMask(64, 64)) == 0.0);
}

TEST_CASE("IoU series: mean, worst five percent and exclusions") {
  std::vector<cues::ObjectMask> ref, fit;
  for (int t = 0; t < 40; ++t) {
    ref.push_back(rect(32, 32, 4, 4, 24, 24));
    fit.push_back(t == 7 ? rect(32, 32, 14, 4, 34 - 2, 24) : ref.back());
  }
  ref[3] = cues::ObjectMask(32, 32);
  const IouSeries s = iou_series(fit, ref);
  CHECK(s.excluded == 1);
  CHECK(!s.per_frame[3].has_value());
  const double low = iou(fit[7], ref[7]);
  CHECK(s.mean == doctest::Approx((38.0 + low) / 39.0));
  // ceil(0.05 * 39) = 2 frames: the bad one and a perfect one.
  CHECK(s.worst5 == doctest::Approx((low + 1.0) / 2.0));
  CHECK(s.worst5 <= s.mean);
  for (const auto& v : s.per_frame)
    if (v) CHECK((*v >= 0.0 && *v <= 1.0));
}

TEST_CASE("identical series score one") {
  std::vector<cues::ObjectMask> m{rect(16, 16, 2, 2, 9, 9), rect(16, 16, 3, 1, 12, 5)};
  const IouSeries s = iou_series(m, m);
  CHECK(s.mean == 1.0);
  CHECK(s.worst5 == 1.0);
}

TEST_CASE("depth metrics at ground truth are perfect") {
  const DepthMap d = constant_depth(8, 8, 2.5f);
  const auto f = depth_frame(d, d);
  REQUIRE(f);
  CHECK(f->abs_rel == 0.0);
  CHECK(f->delta == std::array<double, 3>{1.0, 1.0, 1.0});
  CHECK(f->pixels == 64);
}

TEST_CASE("uniformly doubled depth has zero error after median scaling") {
  DepthMap ref = constant_depth(6, 6, 1.0f);
  for (std::size_t i = 0; i < ref.values.size(); ++i) ref.values[i] = 1.0f + 0.1f * (i % 7);
  DepthMap ren = ref;
  for (double& v : ren.values) v *= 2.0f;
  const auto f = depth_frame(ren, ref);
  REQUIRE(f);
  CHECK(f->scale == doctest::Approx(2.0));
  CHECK(f->abs_rel < 1e-7);
}

TEST_CASE("two-population depth error matches the closed form") {
  SUBCASE("minority inflated: the median is the majority ratio") {
    DepthMap ref = constant_depth(10, 10, 1.0f), ren = ref;
    for (int i = 0; i < 40; ++i) ren.values[i] = 1.3f;
    const auto f = depth_frame(ren, ref);
    REQUIRE(f);
    CHECK(f->scale == doctest::Approx(1.0));
    CHECK(f->abs_rel == doctest::Approx(0.4 * 0.3).epsilon(1e-6));
    // 1.3 exceeds the first threshold of 1.25 only.
    CHECK(f->delta[0] == doctest::Approx(0.6));
    CHECK(f->delta[1] == doctest::Approx(1.0));
  }
  SUBCASE("half inflated: the median averages the two middle ratios") {
    DepthMap ref = constant_depth(10, 10, 1.0f), ren = ref;
    for (int i = 0; i < 50; ++i) ren.values[i] = 1.3f;
    const auto f = depth_frame(ren, ref);
    REQUIRE(f);
    CHECK(f->scale == doctest::Approx(1.15).epsilon(1e-6));
    CHECK(f->abs_rel == doctest::Approx(0.15 / 1.15).epsilon(1e-6));
  }
  SUBCASE("large error crosses the delta thresholds") {
    DepthMap ref = constant_depth(10, 10, 1.0f), ren = ref;
    for (int i = 0; i < 30; ++i) ren.values[i] = 1.5f;
    for (int i = 30; i < 40; ++i) ren.values[i] = 2.0f;
    const auto f = depth_frame(ren, ref);
    REQUIRE(f);
    CHECK(f->delta[0] == doctest::Approx(0.6));
    // 1.5 lies in (1.25, 1.5625]; 2.0 is above 1.25^3.
    CHECK(f->delta[1] == doctest::Approx(0.9));
    CHECK(f->delta[2] == doctest::Approx(0.9));
  }
}

TEST_CASE("depth metrics are invariant to global scaling of the rendering") {
  DepthMap ref = constant_depth(12, 12, 0.0f), ren = ref;
  for (int i = 0; i < 144; ++i) {
    if (i % 5 == 0) continue;
    ref.values[i] = 2.0f + 0.01f * i;
    ren.values[i] = ref.values[i] * (1.0f + 0.2f * std::sin(float(i)));
  }
  const DepthMetrics a = depth_metrics({ren}, {ref});
  for (double s : {0.5, 3.0, 17.0}) {
    DepthMap scaled = ren;
    for (double& v : scaled.values) v *= s;
    const DepthMetrics b = depth_metrics({scaled}, {ref});
    CHECK(std::abs(a.abs_rel - b.abs_rel) < 1e-12);
    CHECK(a.delta == b.delta);
  }
}

TEST_CASE("frames without joint foreground are excluded") {
  const DepthMap ref = constant_depth(4, 4, 1.0f), empty = constant_depth(4, 4, 0.0f);
  CHECK(!depth_frame(empty, ref));
  const DepthMetrics m = depth_metrics({empty, ref}, {ref, ref});
  CHECK(m.excluded == 1);
  CHECK(m.abs_rel == 0.0);
}

TEST_CASE("metrics CSV layout") {
  const auto dir = qtest::scratch_dir("eval_csv");
  std::vector<cues::ObjectMask> m{rect(8, 8, 1, 1, 5, 5), rect(8, 8, 1, 1, 5, 5)};
  std::vector<cues::ObjectMask> r{m[0], cues::ObjectMask(8, 8)};
  const IouSeries s = iou_series(m, r);
  write_csv(dir / "m.csv", s, std::nullopt);
  std::ifstream in(dir / "m.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "frame,iou,abs_rel,delta1,delta2,delta3");
  CHECK(lines[1].rfind("0,1", 0) == 0);
  CHECK(lines[2].rfind("1,,", 0) == 0);
  CHECK(lines[3].rfind("mean,", 0) == 0);
  CHECK(lines[4].rfind("worst5,", 0) == 0);
}

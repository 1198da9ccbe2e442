#include "support.hpp"

#include "quadfit/diff.hpp"

#include <doctest.h>

#include <random>

using namespace quadfit;
using diff::Var;

TEST_CASE("squared norm gradient") {
  auto [value, g] = diff::grad({{"x", {1.0, 2.0}}}, [](diff::Tape&, auto& v) {
    const auto& x = v.at("x");
    return x[0] * x[0] + x[1] * x[1];
  });
  CHECK(value == 5.0);
  CHECK(g.at("x") == std::vector<double>{2.0, 4.0});
}

TEST_CASE("constant function has exactly zero gradient, untouched slots too") {
  auto [value, g] = diff::grad({{"x", {1.0, 2.0}}, {"y", {3.0}}}, [](diff::Tape&, auto& v) {
    return v.at("y")[0] * 0.0 + Var(7.0);
  });
  CHECK(value == 7.0);
  CHECK(g.at("x") == std::vector<double>{0.0, 0.0});
  CHECK(g.at("y") == std::vector<double>{0.0});
}

namespace {

// Symmetric Chamfer between two 3-point clouds with nearest assignments held
// fixed at the current values.
template <class GetA, class GetB>
Var chamfer3(GetA a, GetB b) {
  Var total = 0.0;
  for (int dir = 0; dir < 2; ++dir) {
    for (int i = 0; i < 3; ++i) {
      Var best;
      double best_v = 1e300;
      for (int j = 0; j < 3; ++j) {
        Var d = 0.0;
        for (int c = 0; c < 3; ++c) {
          Var e = (dir == 0 ? a(i, c) - b(j, c) : b(i, c) - a(j, c));
          d += e * e;
        }
        if (d.value() < best_v) {
          best_v = d.value();
          best = d;
        }
      }
      total += best / 3.0;
    }
  }
  return total;
}

}  // namespace

TEST_CASE("chamfer of two small clouds matches central differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> a(9), b(9);
    for (double& x : a) x = n(rng);
    for (double& x : b) x = n(rng);
    auto [value, g] = diff::grad({{"a", a}, {"b", b}}, [](diff::Tape&, auto& v) {
      const auto& A = v.at("a");
      const auto& B = v.at("b");
      return chamfer3([&](int i, int c) { return A[3 * i + c]; }, [&](int i, int c) { return B[3 * i + c]; });
    });
    auto f = [&](const Eigen::VectorXd& x) {
      return chamfer3([&](int i, int c) { return Var(x(3 * i + c)); },
                      [&](int i, int c) { return Var(x(9 + 3 * i + c)); })
          .value();
    };
    Eigen::VectorXd x(18), analytic(18);
    for (int i = 0; i < 9; ++i) {
      x(i) = a[i];
      x(9 + i) = b[i];
      analytic(i) = g.at("a")[i];
      analytic(9 + i) = g.at("b")[i];
    }
    CHECK(value == doctest::Approx(f(x)));
    CHECK(qtest::relative_error(analytic, qtest::numeric_gradient(f, x)) < 1e-4);
  }
}

TEST_CASE("gradients are linear in the function") {
  auto f = [](const auto& x) { return diff::sin(x[0]) * x[1]; };
  auto g = [](const auto& x) { return diff::exp(x[0] * x[1]) + diff::tanh(x[1]); };
  const std::map<std::string, std::vector<double>> slots{{"x", {0.3, -0.7}}};
  auto [vf, gf] = diff::grad(slots, [&](diff::Tape&, auto& v) { return f(v.at("x")); });
  auto [vg, gg] = diff::grad(slots, [&](diff::Tape&, auto& v) { return g(v.at("x")); });
  auto [vs, gs] = diff::grad(slots, [&](diff::Tape&, auto& v) { return f(v.at("x")) + g(v.at("x")); });
  CHECK(vs == doctest::Approx(vf + vg));
  for (int i = 0; i < 2; ++i) CHECK(gs.at("x")[i] == doctest::Approx(gf.at("x")[i] + gg.at("x")[i]));
}

TEST_CASE("elementary functions differentiate correctly") {
  const std::vector<double> x0{0.4, 1.3};
  auto fn = [](const auto& x) {
    using diff::cos, diff::log, diff::log1p, diff::sqrt;
    return cos(x[0]) / sqrt(x[1]) + log(x[1]) * log1p(x[0]) - x[0];
  };
  auto [value, g] = diff::grad({{"x", x0}}, [&](diff::Tape&, auto& v) { return fn(v.at("x")); });
  auto f = [&](const Eigen::VectorXd& x) { return fn(std::vector<Var>{Var(x(0)), Var(x(1))}).value(); };
  Eigen::VectorXd x(2);
  x << x0[0], x0[1];
  Eigen::VectorXd analytic(2);
  analytic << g.at("x")[0], g.at("x")[1];
  CHECK(qtest::relative_error(analytic, qtest::numeric_gradient(f, x)) < 1e-6);
}

TEST_CASE("non-finite forward values name the term") {
  diff::GradTape gt;
  auto x = gt.register_slot("x", std::vector<double>{-1.0});
  gt.tape().set_term("loss_obj");
  try {
    (void)diff::log(x[0]);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("loss_obj") != std::string::npos);
  }
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    return diff::grad({{"x", {0.1, 0.2, 0.3}}}, [](diff::Tape&, auto& v) {
             const auto& x = v.at("x");
             Var s = 0.0;
             for (int k = 0; k < 50; ++k) s += diff::sin(x[k % 3] * double(k)) * x[(k + 1) % 3];
             return s;
           })
        .second;
  };
  CHECK(run() == run());
}

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "nashmeta/rng.hpp"
#include "nashmeta/synthetic.hpp"

using namespace nashmeta;
using namespace nashmeta::synthetic;
using Catch::Approx;

namespace {

// independent transcription of the printed objectives, kept deliberately
// separate from eval_losses
Eigen::Vector2d losses_reference(double t1, double t2) {
  const double f1 = std::log(std::max(std::abs(0.5 * (-t1 - 7) - std::tanh(-t2)), 5e-6)) + 6;
  const double f2 =
      std::log(std::max(std::abs(0.5 * (-t1 + 3) - std::tanh(-t2) + 2), 5e-6)) + 6;
  const double g1 = (std::pow(-t1 + 7, 2) + 0.1 * std::pow(-t2 - 8, 2)) / 10 - 20;
  const double g2 = (std::pow(-t1 - 7, 2) + 0.1 * std::pow(-t2 - 8, 2)) / 10 - 20;
  const double c1 = std::max(std::tanh(0.5 * t2), 0.0);
  const double c2 = std::max(std::tanh(-0.5 * t2), 0.0);
  return {c1 * f1 + c2 * g1, c1 * f2 + c2 * g2};
}

bool near_kink(const Eigen::Vector2d& theta) {
  if (std::abs(theta[1]) < 1e-3) return true;
  const double u1 = -0.5 * theta[0] - 3.5 + std::tanh(theta[1]);
  const double u2 = -0.5 * theta[0] + 3.5 + std::tanh(theta[1]);
  return std::abs(u1) < 1e-3 || std::abs(u2) < 1e-3;
}

}  // namespace

TEST_CASE("losses match the printed formulas") {
  SECTION("origin vanishes") {
    const Eigen::Vector2d l = eval_losses({0, 0});
    CHECK(l[0] == 0.0);
    CHECK(l[1] == 0.0);
  }
  SECTION("golden value at (0, 10)") {
    const Eigen::Vector2d l = eval_losses({0, 10});
    CHECK(l[0] == Approx(6.9156627638058213).margin(1e-12));
    CHECK(l[1] == Approx(7.5033960576195055).margin(1e-12));
    // close to tanh(5) * (log 2.5 + 6) up to the tanh(10) tail
    CHECK(l[0] == Approx(std::tanh(5.0) * (std::log(2.5) + 6.0)).margin(1e-8));
  }
  SECTION("golden value at (9, 9)") {
    const Eigen::Vector2d l = eval_losses({9, 9});
    CHECK(l[0] == Approx(7.9439491889783274).margin(1e-12));
    CHECK(l[1] == Approx(-6.2045410541249038).margin(1e-12));
  }
  SECTION("agrees with an independent transcription at random points") {
    Rng rng(61);
    for (int i = 0; i < 200; ++i) {
      const double t1 = 30.0 * (rng.uniform() - 0.5);
      const double t2 = 30.0 * (rng.uniform() - 0.5);
      const Eigen::Vector2d a = eval_losses({t1, t2});
      const Eigen::Vector2d b = losses_reference(t1, t2);
      CHECK(a[0] == Approx(b[0]).margin(1e-13));
      CHECK(a[1] == Approx(b[1]).margin(1e-13));
    }
  }
}

TEST_CASE("gradients") {
  SECTION("kink convention at theta2 = 0") {
    const auto [g1, g2] = eval_gradients({4.0, 0.0});
    CHECK(g1.norm() == 0.0);
    CHECK(g2.norm() == 0.0);
  }
  SECTION("clamp plateau contributes zero gradient") {
    // u1 = -0.5 t1 - 3.5 + tanh(t2) = 0 at t1 = 2(tanh(t2) - 3.5)
    const double t2 = 2.0;
    const double t1 = 2.0 * (std::tanh(t2) - 3.5);
    const auto [g1, g2] = eval_gradients({t1 + 1e-9, t2});
    // f1's branch is clamped; what remains for l1 is c1' * f1 in theta2
    const double f1 = std::log(5e-6) + 6.0;
    const double th = std::tanh(0.5 * t2);
    CHECK(g1[0] == Approx(0.0).margin(1e-12));
    CHECK(g1[1] == Approx(0.5 * (1 - th * th) * f1).margin(1e-9));
  }
  SECTION("finite differences at 1000 random points") {
    Rng rng(62);
    int checked = 0;
    while (checked < 1000) {
      const Eigen::Vector2d theta(24.0 * (rng.uniform() - 0.5), 24.0 * (rng.uniform() - 0.5));
      if (near_kink(theta)) continue;
      const auto [g1, g2] = eval_gradients(theta);
      const double h = 1e-6;
      for (int d = 0; d < 2; ++d) {
        Eigen::Vector2d tp = theta, tm = theta;
        tp[d] += h;
        tm[d] -= h;
        if (near_kink(tp) || near_kink(tm)) continue;
        const Eigen::Vector2d lp = eval_losses(tp), lm = eval_losses(tm);
        const double fd1 = (lp[0] - lm[0]) / (2 * h);
        const double fd2 = (lp[1] - lm[1]) / (2 * h);
        CHECK(g1[d] == Approx(fd1).epsilon(1e-5).margin(1e-7));
        CHECK(g2[d] == Approx(fd2).epsilon(1e-5).margin(1e-7));
      }
      ++checked;
    }
  }
}

TEST_CASE("pareto stationarity") {
  CHECK(pareto_stationarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)) == Approx(0.0));
  CHECK(pareto_stationarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)) == Approx(1.0));
  CHECK(pareto_stationarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) ==
        Approx(std::sqrt(0.5)));

  SECTION("permutation symmetric, scales like a norm") {
    Rng rng(63);
    for (int i = 0; i < 100; ++i) {
      const Eigen::Vector2d a(rng.normal(), rng.normal());
      const Eigen::Vector2d b(rng.normal(), rng.normal());
      const double v = pareto_stationarity(a, b);
      CHECK(pareto_stationarity(b, a) == Approx(v).margin(1e-12));
      const double c = 0.1 + 5.0 * rng.uniform();
      CHECK(pareto_stationarity(c * a, c * b) == Approx(c * v).epsilon(1e-10).margin(1e-12));
    }
  }
}

TEST_CASE("fairness gap") {
  CHECK(fairness_gap(make_point({0, 0})) == 0.0);
  SyntheticPoint p;
  p.losses = Eigen::Vector2d(2, 5);
  CHECK(fairness_gap(p) == Approx(3.0));
}

TEST_CASE("trajectory runner") {
  SECTION("zero mean gradient gives a zero step") {
    // at the origin both gradients vanish under the kink convention
    const auto tr = run_trajectory("ltr", {0, 0}, 10, 0.1);
    REQUIRE(tr.points.size() == 11);
    for (const auto& p : tr.points) {
      CHECK(p.theta[0] == 0.0);
      CHECK(p.theta[1] == 0.0);
    }
  }
  SECTION("two-stage schedule engages bargaining exactly for t < bargain_steps") {
    const auto tr = run_trajectory("nbs-two-stage", {9, -1}, 150, 0.1, 100);
    REQUIRE(tr.steps.size() == 150);
    for (int t = 0; t < 150; ++t) {
      CHECK(tr.steps[t].bargain.has_value() == (t < 100));
    }
  }
  SECTION("trajectory length is steps + 1") {
    const auto tr = run_trajectory("gdro", {9, 9}, 25, 0.1);
    CHECK(tr.points.size() == 26);
  }
  SECTION("agreed steps record positive minimum utility") {
    for (const char* method : {"nbs-full", "nbs-two-stage"}) {
      const auto tr = run_trajectory(method, {-8.5, 7.5}, 300, 0.1, 100);
      int agreed = 0;
      for (const auto& s : tr.steps) {
        if (s.bargain && *s.bargain == BargainStatus::Agreed) {
          ++agreed;
          CHECK(s.min_utility > 0.0);
        }
      }
      CHECK(agreed > 0);
    }
  }
  SECTION("unknown method rejected") {
    CHECK_THROWS_AS(run_trajectory("mgda", {0, 0}, 10, 0.1), std::invalid_argument);
  }
  SECTION("deterministic across calls") {
    const auto a = run_trajectory("nbs-two-stage", {9, 9}, 200, 0.1, 50);
    const auto b = run_trajectory("nbs-two-stage", {9, 9}, 200, 0.1, 50);
    for (size_t i = 0; i < a.points.size(); ++i) {
      CHECK(a.points[i].theta == b.points[i].theta);
    }
  }
}

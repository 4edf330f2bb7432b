#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "nashmeta/metrics.hpp"
#include "nashmeta/rng.hpp"

using namespace nashmeta;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(v.size());
  int i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

Eigen::VectorXi ivec(std::initializer_list<int> v) {
  Eigen::VectorXi x(v.size());
  int i = 0;
  for (int e : v) x[i++] = e;
  return x;
}

}  // namespace

TEST_CASE("auc") {
  SECTION("perfect ranking") {
    CHECK(auc(vec({0.9, 0.8, 0.2, 0.1}), ivec({1, 1, 0, 0})) == Approx(1.0));
  }
  SECTION("full tie") {
    CHECK(auc(vec({0.5, 0.5}), ivec({1, 0})) == Approx(0.5));
  }
  SECTION("single class is degenerate") {
    bool deg = false;
    CHECK(auc(vec({0.3, 0.7}), ivec({1, 1}), &deg) == 0.5);
    CHECK(deg);
  }
  SECTION("empty input rejected") {
    CHECK_THROWS_AS(auc(Eigen::VectorXd(), Eigen::VectorXi()), std::invalid_argument);
  }
  SECTION("invariant under strictly increasing transforms") {
    Rng rng(91);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 5 + static_cast<int>(rng.next() % 20);
      Eigen::VectorXd s(n);
      Eigen::VectorXi y(n);
      for (int i = 0; i < n; ++i) {
        s[i] = rng.normal();
        y[i] = static_cast<int>(rng.next() % 2);
      }
      const double base = auc(s, y);
      Eigen::VectorXd t(n);
      for (int i = 0; i < n; ++i) t[i] = std::exp(2.0 * s[i]) + 3.0;
      CHECK(auc(t, y) == Approx(base).margin(1e-12));
    }
  }
  SECTION("mann-whitney against a brute-force pair count") {
    Rng rng(92);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 4 + static_cast<int>(rng.next() % 12);
      Eigen::VectorXd s(n);
      Eigen::VectorXi y(n);
      for (int i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.next() % 5);  // coarse scores force ties
        y[i] = static_cast<int>(rng.next() % 2);
      }
      int n_pos = 0;
      for (int i = 0; i < n; ++i) n_pos += y[i];
      if (n_pos == 0 || n_pos == n) continue;
      double wins = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (y[i] == 1 && y[j] == 0) {
            wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
          }
        }
      }
      const double expect = wins / (static_cast<double>(n_pos) * (n - n_pos));
      CHECK(auc(s, y) == Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("group metrics") {
  SECTION("definition arithmetic") {
    // group 0 perfectly ranked, group 1 at 0.6 (3 of 5 pair wins... use 4
    // examples with one inversion -> auc 0.75)
    const auto m = group_auc_metrics(vec({0.9, 0.8, 0.2, 0.1, 0.9, 0.2, 0.8, 0.1}),
                                     ivec({1, 1, 0, 0, 1, 1, 0, 0}),
                                     ivec({0, 0, 0, 0, 1, 1, 1, 1}), 2);
    CHECK(m.group_auc[0] == Approx(1.0));
    CHECK(m.group_auc[1] == Approx(0.75));
    CHECK(m.max_gaucd == Approx(0.25));
    CHECK(m.worst_gauc == Approx(0.75));
  }
  SECTION("single group has zero disparity") {
    const auto m = group_auc_metrics(vec({0.9, 0.1}), ivec({1, 0}), ivec({0, 0}), 1);
    CHECK(m.max_gaucd == 0.0);
    CHECK(m.worst_gauc == m.overall_auc);
  }
  SECTION("identical groups have zero disparity") {
    const auto m = group_auc_metrics(vec({0.9, 0.1, 0.9, 0.1}), ivec({1, 0, 1, 0}),
                                     ivec({0, 0, 1, 1}), 2);
    CHECK(m.max_gaucd == 0.0);
  }
  SECTION("degenerate group flagged and scored 0.5") {
    const auto m = group_auc_metrics(vec({0.9, 0.8, 0.9, 0.1}), ivec({1, 1, 1, 0}),
                                     ivec({0, 0, 1, 1}), 2);
    CHECK(m.degenerate[0]);
    CHECK(m.group_auc[0] == 0.5);
    CHECK_FALSE(m.degenerate[1]);
  }
  SECTION("empty group rejected") {
    CHECK_THROWS_AS(group_auc_metrics(vec({0.9, 0.1}), ivec({1, 0}), ivec({0, 0}), 2),
                    std::invalid_argument);
  }
  SECTION("worst and disparity track the group vector exactly") {
    Rng rng(93);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 40;
      Eigen::VectorXd s(n);
      Eigen::VectorXi y(n), g(n);
      for (int i = 0; i < n; ++i) {
        s[i] = rng.normal();
        y[i] = static_cast<int>(rng.next() % 2);
        g[i] = static_cast<int>(rng.next() % 3);
      }
      bool all_groups = true;
      for (int gg = 0; gg < 3; ++gg) {
        bool seen = false;
        for (int i = 0; i < n; ++i) seen |= g[i] == gg;
        all_groups &= seen;
      }
      if (!all_groups) continue;
      const auto m = group_auc_metrics(s, y, g, 3);
      CHECK(m.worst_gauc == Approx(m.group_auc.minCoeff()));
      CHECK(m.max_gaucd == Approx(m.group_auc.maxCoeff() - m.group_auc.minCoeff()));
      CHECK(m.overall_auc >= 0.0);
      CHECK(m.overall_auc <= 1.0);
    }
  }
}

TEST_CASE("alignment rate") {
  SECTION("all positive steps give rate 1") {
    const auto stats = alignment_rate(std::vector<double>{0.1, 0.4, 0.2}, {0});
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].rate.value() == 1.0);
    CHECK(stats[0].min_utility == Approx(0.1));
  }
  SECTION("negative utilities count as misaligned") {
    const auto stats = alignment_rate(std::vector<double>{0.1, -0.4, 0.2, 0.0}, {0});
    CHECK(stats[0].rate.value() == Approx(0.5));
  }
  SECTION("empty epoch yields a null rate") {
    const auto stats = alignment_rate(std::vector<double>{0.1, 0.2}, {0, 2});
    REQUIRE(stats.size() == 2);
    CHECK(stats[0].rate.value() == 1.0);
    CHECK_FALSE(stats[1].rate.has_value());
  }
  SECTION("epoch boundaries partition the sequence") {
    const auto stats = alignment_rate(std::vector<double>{1, -1, 1, -1, -1, 1}, {0, 2, 4});
    REQUIRE(stats.size() == 3);
    CHECK(stats[0].rate.value() == Approx(0.5));
    CHECK(stats[1].rate.value() == Approx(0.5));
    CHECK(stats[2].rate.value() == Approx(0.5));
  }
}

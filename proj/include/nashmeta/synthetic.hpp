#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nashmeta/aggregators.hpp"
#include "nashmeta/bargain.hpp"

namespace nashmeta::synthetic {

// Two-objective 2-D benchmark. The tanh mixing weights hand over from the
// log-of-affine objectives (upper half plane) to the quadratic bowls
// (lower half plane); the 5e-6 clamp keeps the logs finite.
struct SyntheticPoint {
  Eigen::Vector2d theta;
  Eigen::Vector2d losses;
  Eigen::Vector2d grad1;
  Eigen::Vector2d grad2;
};

inline Eigen::Vector2d eval_losses(const Eigen::Vector2d& theta) {
  const double t1 = theta[0];
  const double t2 = theta[1];
  const double f1 = std::log(std::max(std::abs(0.5 * (-t1 - 7.0) - std::tanh(-t2)), 5e-6)) + 6.0;
  const double f2 =
      std::log(std::max(std::abs(0.5 * (-t1 + 3.0) - std::tanh(-t2) + 2.0), 5e-6)) + 6.0;
  const double g1 = ((-t1 + 7.0) * (-t1 + 7.0) + 0.1 * (-t2 - 8.0) * (-t2 - 8.0)) / 10.0 - 20.0;
  const double g2 = ((-t1 - 7.0) * (-t1 - 7.0) + 0.1 * (-t2 - 8.0) * (-t2 - 8.0)) / 10.0 - 20.0;
  const double c1 = std::max(std::tanh(0.5 * t2), 0.0);
  const double c2 = std::max(std::tanh(-0.5 * t2), 0.0);
  return {c1 * f1 + c2 * g1, c1 * f2 + c2 * g2};
}

// Analytic gradients; subgradient 0 at the max/abs kinks and inside the
// clamp plateau.
inline std::pair<Eigen::Vector2d, Eigen::Vector2d> eval_gradients(const Eigen::Vector2d& theta) {
  const double t1 = theta[0];
  const double t2 = theta[1];
  const double sech2 = 1.0 - std::tanh(t2) * std::tanh(t2);

  const double u1 = -0.5 * t1 - 3.5 + std::tanh(t2);
  const double u2 = -0.5 * t1 + 3.5 + std::tanh(t2);
  const double f1 = std::log(std::max(std::abs(u1), 5e-6)) + 6.0;
  const double f2 = std::log(std::max(std::abs(u2), 5e-6)) + 6.0;
  Eigen::Vector2d df1 = Eigen::Vector2d::Zero();
  Eigen::Vector2d df2 = Eigen::Vector2d::Zero();
  if (std::abs(u1) > 5e-6) df1 = Eigen::Vector2d(-0.5 / u1, sech2 / u1);
  if (std::abs(u2) > 5e-6) df2 = Eigen::Vector2d(-0.5 / u2, sech2 / u2);

  const double g1 = ((-t1 + 7.0) * (-t1 + 7.0) + 0.1 * (-t2 - 8.0) * (-t2 - 8.0)) / 10.0 - 20.0;
  const double g2 = ((-t1 - 7.0) * (-t1 - 7.0) + 0.1 * (-t2 - 8.0) * (-t2 - 8.0)) / 10.0 - 20.0;
  const Eigen::Vector2d dg1((t1 - 7.0) / 5.0, 0.02 * (t2 + 8.0));
  const Eigen::Vector2d dg2((t1 + 7.0) / 5.0, 0.02 * (t2 + 8.0));

  const double th = std::tanh(0.5 * t2);
  const double dth = 0.5 * (1.0 - th * th);
  const double c1 = std::max(th, 0.0);
  const double c2 = std::max(-th, 0.0);
  const Eigen::Vector2d dc1(0.0, th > 0.0 ? dth : 0.0);
  const Eigen::Vector2d dc2(0.0, -th > 0.0 ? -dth : 0.0);

  const Eigen::Vector2d grad1 = dc1 * f1 + c1 * df1 + dc2 * g1 + c2 * dg1;
  const Eigen::Vector2d grad2 = dc1 * f2 + c1 * df2 + dc2 * g2 + c2 * dg2;
  return {grad1, grad2};
}

inline SyntheticPoint make_point(const Eigen::Vector2d& theta) {
  SyntheticPoint p;
  p.theta = theta;
  p.losses = eval_losses(theta);
  const auto [g1, g2] = eval_gradients(theta);
  p.grad1 = g1;
  p.grad2 = g2;
  return p;
}

// min over lambda in [0,1] of ||lambda g1 + (1-lambda) g2||; zero certifies
// a first-order Pareto point. Quadratic in lambda, solved in closed form.
inline double pareto_stationarity(const Eigen::Vector2d& grad1, const Eigen::Vector2d& grad2) {
  const Eigen::Vector2d d = grad1 - grad2;
  const double dd = d.squaredNorm();
  double lambda = 0.0;
  if (dd > 0.0) {
    lambda = std::clamp((grad2.squaredNorm() - grad2.dot(grad1)) / dd, 0.0, 1.0);
  }
  return (lambda * grad1 + (1.0 - lambda) * grad2).norm();
}

inline double pareto_stationarity(const SyntheticPoint& p) {
  return pareto_stationarity(p.grad1, p.grad2);
}

inline double fairness_gap(const SyntheticPoint& p) {
  return std::abs(p.losses[0] - p.losses[1]);
}

struct TrajectoryStep {
  std::optional<BargainStatus> bargain;  // empty when bargaining was off
  std::optional<Eigen::Vector2d> alpha;
  double min_utility = 0.0;
};

struct Trajectory {
  std::string method;
  Eigen::Vector2d init;
  std::vector<SyntheticPoint> points;  // steps + 1 entries
  std::vector<TrajectoryStep> steps;
};

// the six standard benchmark initial points
inline const std::array<Eigen::Vector2d, 6>& standard_inits() {
  static const std::array<Eigen::Vector2d, 6> inits = {
      Eigen::Vector2d(-8.5, 7.5), Eigen::Vector2d(0.0, 0.0),  Eigen::Vector2d(9.0, 9.0),
      Eigen::Vector2d(-7.5, -0.5), Eigen::Vector2d(9.0, -1.0), Eigen::Vector2d(9.0, -20.0)};
  return inits;
}

namespace detail {

inline Eigen::Vector2d protocol_direction(ProtocolKind kind, const SyntheticPoint& p) {
  const Eigen::VectorXd w = protocol_weights(kind, p.losses).weights;
  return w[0] * p.grad1 + w[1] * p.grad2;
}

}  // namespace detail

// Plain gradient descent on the aggregated direction. bargain_steps only
// applies to the nbs methods; the fallback protocol covers infeasible
// bargains and stage 2.
inline Trajectory run_trajectory(const std::string& method, const Eigen::Vector2d& init,
                                 int steps = 1000, double lr = 0.1, int bargain_steps = 0,
                                 ProtocolKind fallback = ProtocolKind::LtR) {
  const bool is_nbs_full = method == "nbs-full";
  const bool is_nbs_two_stage = method == "nbs-two-stage";
  if (method != "ltr" && method != "forml" && method != "gdro" && method != "pcgrad" &&
      method != "cagrad" && method != "gm" && !is_nbs_full && !is_nbs_two_stage) {
    throw std::invalid_argument("run_trajectory: unknown method " + method);
  }

  Trajectory traj;
  traj.method = method;
  traj.init = init;
  traj.points.reserve(steps + 1);
  traj.steps.reserve(steps);

  Eigen::Vector2d theta = init;
  traj.points.push_back(make_point(theta));

  for (int t = 0; t < steps; ++t) {
    const SyntheticPoint& p = traj.points.back();
    TrajectoryStep meta;
    Eigen::Vector2d dir = Eigen::Vector2d::Zero();

    const auto gradient_matrix = [&]() {
      Eigen::MatrixXd g(2, 2);
      g.col(0) = p.grad1;
      g.col(1) = p.grad2;
      return g;
    };

    if (method == "ltr") {
      dir = detail::protocol_direction(ProtocolKind::LtR, p);
    } else if (method == "forml") {
      dir = detail::protocol_direction(ProtocolKind::FORML, p);
    } else if (method == "gdro") {
      dir = detail::protocol_direction(ProtocolKind::MetaGDRO, p);
    } else if (method == "pcgrad") {
      if (p.grad1.norm() > 0.0 && p.grad2.norm() > 0.0) {
        dir = pcgrad_aggregate(GradientMatrix(gradient_matrix()));
      }
    } else if (method == "cagrad") {
      if (p.grad1.norm() > 0.0 && p.grad2.norm() > 0.0) {
        dir = cagrad_aggregate(GradientMatrix(gradient_matrix()));
      }
    } else if (method == "gm") {
      // the power mean needs positive losses; fall back to the plain mean
      // when a loss is non-positive
      if (p.grad1.norm() > 0.0 && p.grad2.norm() > 0.0 && p.losses.minCoeff() > 0.0) {
        dir = generalized_mean_aggregate(GradientMatrix(gradient_matrix()), p.losses, 2.0);
      } else {
        dir = 0.5 * (p.grad1 + p.grad2);
      }
    } else {
      const bool bargaining = is_nbs_full || t < bargain_steps;
      if (bargaining && p.grad1.norm() > 0.0 && p.grad2.norm() > 0.0) {
        const auto out = nbs_solve(GradientMatrix(gradient_matrix()));
        meta.bargain = out.status;
        if (out.agreed()) {
          dir = out.delta;
          meta.alpha = Eigen::Vector2d(out.alpha[0], out.alpha[1]);
        } else {
          dir = detail::protocol_direction(fallback, p);
        }
      } else if (bargaining) {
        meta.bargain = BargainStatus::Infeasible;  // zero gradient: no game
        dir = detail::protocol_direction(fallback, p);
      } else {
        dir = detail::protocol_direction(fallback, p);
      }
    }

    meta.min_utility = std::min(p.grad1.dot(dir), p.grad2.dot(dir));
    traj.steps.push_back(meta);
    theta -= lr * dir;
    traj.points.push_back(make_point(theta));
  }
  return traj;
}

}  // namespace nashmeta::synthetic

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

#include "nashmeta/bargain.hpp"

namespace nashmeta {

enum class ProtocolKind { LtR, FORML, MetaGDRO, Bargained };

inline const char* to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::LtR: return "ltr";
    case ProtocolKind::FORML: return "forml";
    case ProtocolKind::MetaGDRO: return "gdro";
    case ProtocolKind::Bargained: return "bargained";
  }
  return "?";
}

inline ProtocolKind protocol_from_string(const std::string& s) {
  if (s == "ltr") return ProtocolKind::LtR;
  if (s == "forml") return ProtocolKind::FORML;
  if (s == "gdro") return ProtocolKind::MetaGDRO;
  if (s == "bargained") return ProtocolKind::Bargained;
  throw std::invalid_argument("unknown protocol: " + s);
}

// The aggregation weight vector over K groups, tagged with its kind.
struct Protocol {
  ProtocolKind kind;
  Eigen::VectorXd weights;
};

// LtR averages, FORML is +1 on the max-loss group and -1 on the min-loss
// group (zero vector when all losses tie), Meta-gDRO is one-hot on the max.
// Ties break toward the lowest group index.
inline Protocol protocol_weights(ProtocolKind kind, const Eigen::VectorXd& group_losses) {
  const int k = static_cast<int>(group_losses.size());
  if (k < 1) {
    throw std::invalid_argument("protocol_weights: empty loss vector");
  }
  Protocol p{kind, Eigen::VectorXd::Zero(k)};
  switch (kind) {
    case ProtocolKind::LtR:
      p.weights.setConstant(1.0 / static_cast<double>(k));
      break;
    case ProtocolKind::FORML: {
      int imax = 0;
      int imin = 0;
      for (int i = 1; i < k; ++i) {
        if (group_losses[i] > group_losses[imax]) imax = i;
        if (group_losses[i] < group_losses[imin]) imin = i;
      }
      if (group_losses[imax] > group_losses[imin]) {
        p.weights[imax] = 1.0;
        p.weights[imin] = -1.0;
      }
      break;
    }
    case ProtocolKind::MetaGDRO: {
      int imax = 0;
      for (int i = 1; i < k; ++i) {
        if (group_losses[i] > group_losses[imax]) imax = i;
      }
      p.weights[imax] = 1.0;
      break;
    }
    case ProtocolKind::Bargained:
      throw std::invalid_argument("protocol_weights: bargained weights come from nbs_solve");
  }
  return p;
}

// Pairwise conflict projection in fixed order j = 1..K, then summed.
inline Eigen::VectorXd pcgrad_aggregate(const GradientMatrix& g) {
  const int k = g.players();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(g.dim());
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd gi = g.column(i);
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      const Eigen::VectorXd gj = g.column(j);
      const double dot = gi.dot(gj);
      if (dot < 0.0) {
        gi -= (dot / gj.squaredNorm()) * gj;
      }
    }
    sum += gi;
  }
  return sum;
}

// Two-objective CAGrad update: minimize over the simplex
// h(w) = <g_w, g_0> + c ||g_0|| ||g_w||, then return
// g_0 + c ||g_0|| g_w / ||g_w||. h is convex in the 1-D simplex parameter,
// so golden-section search applies.
inline Eigen::VectorXd cagrad_aggregate(const GradientMatrix& g, double c = 0.5) {
  if (g.players() != 2) {
    throw std::invalid_argument("cagrad_aggregate: only K = 2 is supported");
  }
  const Eigen::VectorXd g1 = g.column(0);
  const Eigen::VectorXd g2 = g.column(1);
  const Eigen::VectorXd g0 = 0.5 * (g1 + g2);
  const double g0_norm = g0.norm();
  if (g0_norm == 0.0 || c == 0.0) {
    return g0;
  }

  const auto objective = [&](double lam) {
    const Eigen::VectorXd gw = lam * g1 + (1.0 - lam) * g2;
    return gw.dot(g0) + c * g0_norm * gw.norm();
  };

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    }
  }
  const double lam = 0.5 * (lo + hi);
  const Eigen::VectorXd gw = lam * g1 + (1.0 - lam) * g2;
  const double gw_norm = gw.norm();
  if (gw_norm == 0.0) {
    return g0;
  }
  return g0 + (c * g0_norm / gw_norm) * gw;
}

// Gradient of the power mean ((1/K) sum L_i^p)^(1/p): columns weighted by
// (1/K) L_i^(p-1) M^(1-p) with M the mean value itself.
inline Eigen::VectorXd generalized_mean_aggregate(const GradientMatrix& g,
                                                  const Eigen::VectorXd& group_losses,
                                                  double p = 2.0) {
  const int k = g.players();
  if (group_losses.size() != k) {
    throw std::invalid_argument("generalized_mean_aggregate: loss count != K");
  }
  if (p < 1.0) {
    throw std::invalid_argument("generalized_mean_aggregate: p must be >= 1");
  }
  for (int i = 0; i < k; ++i) {
    if (!(group_losses[i] > 0.0)) {
      throw std::invalid_argument("generalized_mean_aggregate: losses must be positive");
    }
  }
  const double mean_p = group_losses.array().pow(p).mean();
  const double gm = std::pow(mean_p, 1.0 / p);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.dim());
  for (int i = 0; i < k; ++i) {
    const double w = std::pow(group_losses[i], p - 1.0) * std::pow(gm, 1.0 - p) /
                     static_cast<double>(k);
    out += w * g.column(i);
  }
  return out;
}

}  // namespace nashmeta

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace nashmeta {

// Group hypergradients g_1..g_K as the columns of G. The Gram matrix
// G^T G is cached on construction; columns must be nonzero and finite.
class GradientMatrix {
 public:
  explicit GradientMatrix(Eigen::MatrixXd columns) : g_(std::move(columns)) {
    if (g_.cols() < 1) {
      throw std::invalid_argument("GradientMatrix: at least one column required");
    }
    if (!g_.allFinite()) {
      throw std::invalid_argument("GradientMatrix: non-finite entry");
    }
    for (Eigen::Index j = 0; j < g_.cols(); ++j) {
      if (g_.col(j).isZero(0.0)) {
        throw std::invalid_argument("GradientMatrix: column " + std::to_string(j) +
                                    " is the zero vector");
      }
    }
    gram_ = g_.transpose() * g_;
  }

  int players() const { return static_cast<int>(g_.cols()); }
  Eigen::Index dim() const { return g_.rows(); }
  const Eigen::MatrixXd& columns() const { return g_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  Eigen::VectorXd column(int i) const { return g_.col(i); }
  double column_norm(int i) const { return g_.col(i).norm(); }

 private:
  Eigen::MatrixXd g_;
  Eigen::MatrixXd gram_;
};

enum class BargainStatus { Agreed, Infeasible };

enum class BargainFailure { NoPositiveRoot, ResidualNotConverged, AlignmentViolated };

inline const char* to_string(BargainFailure f) {
  switch (f) {
    case BargainFailure::NoPositiveRoot: return "no-positive-root";
    case BargainFailure::ResidualNotConverged: return "residual-not-converged";
    case BargainFailure::AlignmentViolated: return "alignment-violated";
  }
  return "?";
}

// Result of the bargaining game. On Agreed, alpha solves G^T G a = 1/a and
// delta = G a with every utility g_i^T delta = 1/a_i > 0.
struct BargainOutcome {
  BargainStatus status = BargainStatus::Infeasible;
  Eigen::VectorXd alpha;
  Eigen::VectorXd delta;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::optional<BargainFailure> failure;

  bool agreed() const { return status == BargainStatus::Agreed; }
};

// u_i(delta) = g_i^T delta, the portion of the proposed update applied in
// the direction of player i's hypergradient.
inline double utility(const Eigen::VectorXd& g_i, const Eigen::VectorXd& delta) {
  if (g_i.size() != delta.size()) {
    throw std::invalid_argument("utility: dimension mismatch");
  }
  return g_i.dot(delta);
}

// Solve G^T G a = 1/a for a > 0 by damped Newton in log coordinates
// (a = exp(b) keeps the iterate positive). Initialized at
// a_i = 1/(sqrt(K) * ||g_i||). Returns Infeasible on divergence,
// non-convergence, or a final update that fails the agreement condition
// g_i^T delta > 0.
inline BargainOutcome nbs_solve(const GradientMatrix& g, double tol = 1e-8,
                                int max_iter = 100) {
  const int k = g.players();
  const Eigen::MatrixXd& gram = g.gram();
  const double sqrt_k = std::sqrt(static_cast<double>(k));

  BargainOutcome out;

  Eigen::VectorXd beta(k);
  for (int i = 0; i < k; ++i) {
    beta[i] = -std::log(sqrt_k * g.column_norm(i));
  }

  const auto eval_residual = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd {
    const Eigen::ArrayXd a = b.array().exp();
    return (gram * a.matrix()).array() - (-b).array().exp();
  };

  Eigen::VectorXd f = eval_residual(beta);
  double fnorm = f.lpNorm<Eigen::Infinity>();
  int iter = 0;
  int polish_left = 2;

  while (iter < max_iter) {
    if (!beta.allFinite() || beta.lpNorm<Eigen::Infinity>() > 200.0) {
      out.failure = BargainFailure::NoPositiveRoot;
      out.iterations = iter;
      out.residual = fnorm;
      return out;
    }
    if (fnorm <= tol) {
      if (polish_left == 0) break;
      --polish_left;  // extra full steps sharpen the root well past tol
    }

    const Eigen::ArrayXd a = beta.array().exp();
    Eigen::MatrixXd jac = gram * a.matrix().asDiagonal();
    jac.diagonal().array() += (-beta).array().exp();
    const Eigen::VectorXd step = jac.partialPivLu().solve(-f);
    if (!step.allFinite()) {
      out.failure = BargainFailure::NoPositiveRoot;
      out.iterations = iter;
      out.residual = fnorm;
      return out;
    }

    double lambda = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      const Eigen::VectorXd trial = beta + lambda * step;
      const Eigen::VectorXd ft = eval_residual(trial);
      const double fn = ft.allFinite() ? ft.lpNorm<Eigen::Infinity>()
                                       : std::numeric_limits<double>::infinity();
      if (fn < fnorm) {
        beta = trial;
        f = ft;
        fnorm = fn;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    ++iter;
    if (!accepted) break;  // stalled
  }

  out.iterations = iter;
  out.residual = fnorm;
  if (!(fnorm <= tol)) {
    out.failure = BargainFailure::ResidualNotConverged;
    return out;
  }

  const Eigen::VectorXd alpha = beta.array().exp();
  const Eigen::VectorXd delta = g.columns() * alpha;
  for (int i = 0; i < k; ++i) {
    if (!(g.column(i).dot(delta) > 0.0)) {
      out.failure = BargainFailure::AlignmentViolated;
      return out;
    }
  }
  if (std::abs(delta.norm() - sqrt_k) > 1e-6) {
    out.failure = BargainFailure::ResidualNotConverged;
    return out;
  }

  out.status = BargainStatus::Agreed;
  out.alpha = alpha;
  out.delta = delta;
  return out;
}

// Per-player split of the stationarity identity: each row
// ||a_i g_i||^2 + sum_{j != i} (a_i g_i)^T (a_j g_j) equals 1.
struct DecompositionReport {
  Eigen::VectorXd self_term;
  Eigen::VectorXd interaction_term;
  Eigen::VectorXd row_sum;
};

inline DecompositionReport decomposition_report(const BargainOutcome& outcome,
                                                const GradientMatrix& g) {
  if (!outcome.agreed()) {
    throw std::logic_error("decomposition_report: outcome is not Agreed");
  }
  const int k = g.players();
  DecompositionReport rep;
  rep.self_term.resize(k);
  rep.interaction_term.resize(k);
  rep.row_sum.resize(k);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd scaled = outcome.alpha[i] * g.column(i);
    rep.self_term[i] = scaled.squaredNorm();
    rep.interaction_term[i] = scaled.dot(outcome.delta - scaled);
    rep.row_sum[i] = rep.self_term[i] + rep.interaction_term[i];
  }
  return rep;
}

}  // namespace nashmeta

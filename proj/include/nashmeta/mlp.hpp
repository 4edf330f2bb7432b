#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "nashmeta/rng.hpp"

namespace nashmeta {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ForwardMode { Eval, Train };

// input -> hidden -> hidden -> output, ReLU and inverted dropout after each
// hidden activation. Everything is double precision; momentum buffers live
// with the parameters.
struct MlpModel {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  Eigen::MatrixXd v_w1, v_w2, v_w3;
  Eigen::VectorXd v_b1, v_b2, v_b3;
  double dropout_p = 0.0;

  static MlpModel zeros(int in, int hidden, int out, double dropout_p = 0.0) {
    if (in < 1 || hidden < 1 || out < 1) {
      throw std::invalid_argument("MlpModel: layer widths must be positive");
    }
    if (dropout_p < 0.0 || dropout_p > 1.0) {
      throw std::invalid_argument("MlpModel: dropout probability must be in [0,1]");
    }
    MlpModel m;
    m.w1 = Eigen::MatrixXd::Zero(hidden, in);
    m.w2 = Eigen::MatrixXd::Zero(hidden, hidden);
    m.w3 = Eigen::MatrixXd::Zero(out, hidden);
    m.b1 = Eigen::VectorXd::Zero(hidden);
    m.b2 = Eigen::VectorXd::Zero(hidden);
    m.b3 = Eigen::VectorXd::Zero(out);
    m.v_w1 = m.w1;
    m.v_w2 = m.w2;
    m.v_w3 = m.w3;
    m.v_b1 = m.b1;
    m.v_b2 = m.b2;
    m.v_b3 = m.b3;
    m.dropout_p = dropout_p;
    return m;
  }

  // He-style init for the ReLU stack, biases at zero
  static MlpModel random(int in, int hidden, int out, double dropout_p, std::uint64_t seed) {
    MlpModel m = zeros(in, hidden, out, dropout_p);
    Rng rng(seed);
    const auto fill = [&rng](Eigen::MatrixXd& w, int fan_in) {
      const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          w(r, c) = s * rng.normal();
        }
      }
    };
    fill(m.w1, in);
    fill(m.w2, hidden);
    fill(m.w3, hidden);
    // small random biases keep pre-activations off the ReLU kink
    const auto jitter = [&rng](Eigen::VectorXd& b) {
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * rng.normal();
    };
    jitter(m.b1);
    jitter(m.b2);
    jitter(m.b3);
    return m;
  }

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w3.rows()); }

  int param_count() const {
    return static_cast<int>(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() +
                            b3.size());
  }

  // flattened layout: w1 row-major, b1, w2 row-major, b2, w3 row-major, b3
  Eigen::VectorXd parameters() const {
    Eigen::VectorXd out(param_count());
    Eigen::Index off = 0;
    const auto pack_w = [&](const Eigen::MatrixXd& w) {
      Eigen::Map<RowMatrixXd>(out.data() + off, w.rows(), w.cols()) = w;
      off += w.size();
    };
    const auto pack_b = [&](const Eigen::VectorXd& b) {
      out.segment(off, b.size()) = b;
      off += b.size();
    };
    pack_w(w1);
    pack_b(b1);
    pack_w(w2);
    pack_b(b2);
    pack_w(w3);
    pack_b(b3);
    return out;
  }

  void set_parameters(const Eigen::VectorXd& theta) {
    if (theta.size() != param_count()) {
      throw std::invalid_argument("MlpModel::set_parameters: size mismatch");
    }
    Eigen::Index off = 0;
    const auto unpack_w = [&](Eigen::MatrixXd& w) {
      w = Eigen::Map<const RowMatrixXd>(theta.data() + off, w.rows(), w.cols());
      off += w.size();
    };
    const auto unpack_b = [&](Eigen::VectorXd& b) {
      b = theta.segment(off, b.size());
      off += b.size();
    };
    unpack_w(w1);
    unpack_b(b1);
    unpack_w(w2);
    unpack_b(b2);
    unpack_w(w3);
    unpack_b(b3);
  }
};

// per-instance smoothness data used by the convergence property tests
struct SmoothnessBounds {
  double lipschitz_c = 0.0;
  double grad_bound_m = 0.0;

  SmoothnessBounds(double c, double m) : lipschitz_c(c), grad_bound_m(m) {
    if (!(c > 0.0) || !(m > 0.0)) {
      throw std::invalid_argument("SmoothnessBounds: C and M must be positive");
    }
  }
};

namespace detail {

inline Eigen::MatrixXd dropout_multipliers(int rows, int cols, double p,
                                           std::uint64_t seed) {
  Eigen::MatrixXd m(rows, cols);
  if (p >= 1.0) {
    m.setZero();
    return m;
  }
  Rng rng(seed);
  const double scale = 1.0 / (1.0 - p);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      m(i, j) = rng.uniform() >= p ? scale : 0.0;
    }
  }
  return m;
}

}  // namespace detail

struct ForwardCache {
  Eigen::MatrixXd a1, h1, a2, h2, logits;
  Eigen::MatrixXd m1, m2;  // dropout multipliers; empty in eval / p = 0
  bool masked = false;
};

inline ForwardCache mlp_forward_cached(const MlpModel& model, const Eigen::MatrixXd& batch,
                                       ForwardMode mode, std::uint64_t mask_seed = 0) {
  if (batch.cols() != model.input_dim()) {
    throw std::invalid_argument("mlp_forward: feature width " + std::to_string(batch.cols()) +
                                " does not match input layer " +
                                std::to_string(model.input_dim()));
  }
  const int b = static_cast<int>(batch.rows());
  const int h = model.hidden_dim();
  ForwardCache c;
  c.masked = mode == ForwardMode::Train && model.dropout_p > 0.0;

  c.a1 = (batch * model.w1.transpose()).rowwise() + model.b1.transpose();
  c.h1 = c.a1.cwiseMax(0.0);
  if (c.masked) {
    c.m1 = detail::dropout_multipliers(b, h, model.dropout_p, Rng::mix(mask_seed, 1));
    c.h1 = c.h1.cwiseProduct(c.m1);
  }
  c.a2 = (c.h1 * model.w2.transpose()).rowwise() + model.b2.transpose();
  c.h2 = c.a2.cwiseMax(0.0);
  if (c.masked) {
    c.m2 = detail::dropout_multipliers(b, h, model.dropout_p, Rng::mix(mask_seed, 2));
    c.h2 = c.h2.cwiseProduct(c.m2);
  }
  c.logits = (c.h2 * model.w3.transpose()).rowwise() + model.b3.transpose();
  return c;
}

inline Eigen::MatrixXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& batch,
                                   ForwardMode mode, std::uint64_t mask_seed = 0) {
  return mlp_forward_cached(model, batch, mode, mask_seed).logits;
}

inline Eigen::VectorXd cross_entropy_per_example(const Eigen::MatrixXd& logits,
                                                 const Eigen::VectorXi& labels) {
  if (logits.rows() != labels.size()) {
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  }
  const int classes = static_cast<int>(logits.cols());
  Eigen::VectorXd losses(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " out of range at row " + std::to_string(i));
    }
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    losses[i] = lse - logits(i, y);
  }
  return losses;
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
    probs.row(i) = (e / e.sum()).matrix();
  }
  return probs;
}

struct PerExampleGrads {
  RowMatrixXd rows;        // |B| x P, row i = grad of example i's loss
  Eigen::VectorXd losses;  // |B|
};

namespace detail {

// shared backward pass; delta3 rows are dL/dlogits scaled however the
// caller wants (per-example one-hot rows, or weighted rows for aggregates)
inline void backward_flatten(const MlpModel& model, const Eigen::MatrixXd& x,
                             const ForwardCache& c, const Eigen::MatrixXd& delta3,
                             double* out) {
  const Eigen::MatrixXd dh2 = delta3 * model.w3;
  Eigen::MatrixXd da2 = dh2;
  if (c.masked) da2 = da2.cwiseProduct(c.m2);
  da2 = da2.cwiseProduct((c.a2.array() > 0.0).cast<double>().matrix());

  const Eigen::MatrixXd dh1 = da2 * model.w2;
  Eigen::MatrixXd da1 = dh1;
  if (c.masked) da1 = da1.cwiseProduct(c.m1);
  da1 = da1.cwiseProduct((c.a1.array() > 0.0).cast<double>().matrix());

  const int in = model.input_dim();
  const int h = model.hidden_dim();
  const int o = model.output_dim();
  Eigen::Index off = 0;
  Eigen::Map<RowMatrixXd>(out + off, h, in) = da1.transpose() * x;
  off += static_cast<Eigen::Index>(h) * in;
  Eigen::Map<Eigen::VectorXd>(out + off, h) = da1.colwise().sum().transpose();
  off += h;
  Eigen::Map<RowMatrixXd>(out + off, h, h) = da2.transpose() * c.h1;
  off += static_cast<Eigen::Index>(h) * h;
  Eigen::Map<Eigen::VectorXd>(out + off, h) = da2.colwise().sum().transpose();
  off += h;
  Eigen::Map<RowMatrixXd>(out + off, o, h) = delta3.transpose() * c.h2;
  off += static_cast<Eigen::Index>(o) * h;
  Eigen::Map<Eigen::VectorXd>(out + off, o) = delta3.colwise().sum().transpose();
}

}  // namespace detail

inline PerExampleGrads per_example_gradients(const MlpModel& model, const Eigen::MatrixXd& batch,
                                             const Eigen::VectorXi& labels, ForwardMode mode,
                                             std::uint64_t mask_seed = 0) {
  const ForwardCache cache = mlp_forward_cached(model, batch, mode, mask_seed);
  const int b = static_cast<int>(batch.rows());
  PerExampleGrads pe;
  pe.losses = cross_entropy_per_example(cache.logits, labels);
  pe.rows.resize(b, model.param_count());

  const Eigen::MatrixXd probs = softmax_rows(cache.logits);
  for (int i = 0; i < b; ++i) {
    Eigen::MatrixXd delta3 = probs.row(i);
    delta3(0, labels[i]) -= 1.0;
    // single-row caches keep the shared backward applicable per example
    ForwardCache ci;
    ci.a1 = cache.a1.row(i);
    ci.h1 = cache.h1.row(i);
    ci.a2 = cache.a2.row(i);
    ci.h2 = cache.h2.row(i);
    ci.masked = cache.masked;
    if (cache.masked) {
      ci.m1 = cache.m1.row(i);
      ci.m2 = cache.m2.row(i);
    }
    detail::backward_flatten(model, batch.row(i), ci, delta3, pe.rows.row(i).data());
  }
  return pe;
}

// gradient of sum_i weights[i] * loss_i in the flattened layout
inline Eigen::VectorXd weighted_loss_gradient(const MlpModel& model, const Eigen::MatrixXd& batch,
                                              const Eigen::VectorXi& labels,
                                              const Eigen::VectorXd& weights, ForwardMode mode,
                                              std::uint64_t mask_seed = 0) {
  if (weights.size() != batch.rows()) {
    throw std::invalid_argument("weighted_loss_gradient: weight count mismatch");
  }
  const ForwardCache cache = mlp_forward_cached(model, batch, mode, mask_seed);
  Eigen::MatrixXd delta3 = softmax_rows(cache.logits);
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    delta3(i, labels[i]) -= 1.0;
    delta3.row(i) *= weights[i];
  }
  Eigen::VectorXd grad(model.param_count());
  detail::backward_flatten(model, batch, cache, delta3, grad.data());
  return grad;
}

inline Eigen::VectorXd mean_loss_gradient(const MlpModel& model, const Eigen::MatrixXd& batch,
                                          const Eigen::VectorXi& labels, ForwardMode mode,
                                          std::uint64_t mask_seed = 0) {
  const Eigen::VectorXd w =
      Eigen::VectorXd::Constant(batch.rows(), 1.0 / static_cast<double>(batch.rows()));
  return weighted_loss_gradient(model, batch, labels, w, mode, mask_seed);
}

// buffer <- momentum * buffer + (grad + weight_decay * theta);
// theta <- theta - lr * buffer
inline MlpModel sgd_momentum_step(MlpModel model, const Eigen::VectorXd& gradient, double lr,
                                  double momentum = 0.9, double weight_decay = 5e-4) {
  if (gradient.size() != model.param_count()) {
    throw std::invalid_argument("sgd_momentum_step: gradient size mismatch");
  }
  if (!gradient.allFinite()) {
    throw std::domain_error("sgd_momentum_step: non-finite gradient");
  }
  Eigen::Index off = 0;
  const auto step_w = [&](Eigen::MatrixXd& w, Eigen::MatrixXd& v) {
    const auto g = Eigen::Map<const RowMatrixXd>(gradient.data() + off, w.rows(), w.cols());
    v = momentum * v + (g + weight_decay * w);
    w -= lr * v;
    off += w.size();
  };
  const auto step_b = [&](Eigen::VectorXd& b, Eigen::VectorXd& v) {
    const auto g = gradient.segment(off, b.size());
    v = momentum * v + (g + weight_decay * b);
    b -= lr * v;
    off += b.size();
  };
  step_w(model.w1, model.v_w1);
  step_b(model.b1, model.v_b1);
  step_w(model.w2, model.v_w2);
  step_b(model.b2, model.v_b2);
  step_w(model.w3, model.v_w3);
  step_b(model.b3, model.v_b3);
  return model;
}

}  // namespace nashmeta

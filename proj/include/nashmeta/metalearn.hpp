#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nashmeta/aggregators.hpp"
#include "nashmeta/bargain.hpp"
#include "nashmeta/data.hpp"
#include "nashmeta/metrics.hpp"
#include "nashmeta/mlp.hpp"

namespace nashmeta {

struct GroupBatch {
  Eigen::MatrixXd features;
  Eigen::VectorXi labels;
};

// Hypergradients over the per-example weights: row k of `hypergrads` is
// g_k with g_k[i] = -lr * a_k . b_i, where a_k is group k's mean validation
// loss gradient and b_i the i-th training example's loss gradient, both at
// the current parameters.
struct HypergradientSet {
  Eigen::MatrixXd hypergrads;      // K x |B|
  RowMatrixXd val_grads;           // K x P, rows a_k
  RowMatrixXd train_grads;         // |B| x P, rows b_i
  Eigen::VectorXd group_val_losses;  // K

  int groups() const { return static_cast<int>(hypergrads.rows()); }
  int batch() const { return static_cast<int>(hypergrads.cols()); }
};

// theta_hat = theta - lr * grad(eps . L); the epsilon vector is zero in
// Algorithm 1, making this the identity — it exists to pin down the
// differentiation path, and callers exploit the closed form instead.
inline MlpModel unroll_inner_step(const MlpModel& model, const Eigen::MatrixXd& batch,
                                  const Eigen::VectorXi& labels, const Eigen::VectorXd& eps,
                                  double lr) {
  if (eps.size() != batch.rows()) {
    throw std::invalid_argument("unroll_inner_step: eps length != batch size");
  }
  if (eps.isZero(0.0)) {
    return model;
  }
  const Eigen::VectorXd grad =
      weighted_loss_gradient(model, batch, labels, eps, ForwardMode::Eval);
  MlpModel unrolled = model;
  unrolled.set_parameters(model.parameters() - lr * grad);
  return unrolled;
}

inline HypergradientSet group_hypergradients(const MlpModel& model,
                                             const Eigen::MatrixXd& batch,
                                             const Eigen::VectorXi& labels,
                                             const std::vector<GroupBatch>& val_groups,
                                             double lr) {
  const int k = static_cast<int>(val_groups.size());
  if (k < 1) {
    throw std::invalid_argument("group_hypergradients: no validation groups");
  }
  HypergradientSet hg;
  const PerExampleGrads pe = per_example_gradients(model, batch, labels, ForwardMode::Eval);
  hg.train_grads = pe.rows;
  hg.val_grads.resize(k, model.param_count());
  hg.group_val_losses.resize(k);
  for (int g = 0; g < k; ++g) {
    if (val_groups[g].features.rows() == 0) {
      throw std::invalid_argument("group_hypergradients: validation group " +
                                  std::to_string(g) + " is empty");
    }
    hg.val_grads.row(g) =
        mean_loss_gradient(model, val_groups[g].features, val_groups[g].labels,
                           ForwardMode::Eval)
            .transpose();
    const Eigen::MatrixXd logits =
        mlp_forward(model, val_groups[g].features, ForwardMode::Eval);
    hg.group_val_losses[g] =
        cross_entropy_per_example(logits, val_groups[g].labels).mean();
  }
  hg.hypergrads = -lr * (hg.val_grads * hg.train_grads.transpose());
  return hg;
}

enum class Stage { Bargain, Fairness };

enum class StepBargainStatus { NotAttempted, Agreed, Infeasible };

inline const char* to_string(Stage s) {
  return s == Stage::Bargain ? "bargain" : "fairness";
}

inline const char* to_string(StepBargainStatus s) {
  switch (s) {
    case StepBargainStatus::NotAttempted: return "not-attempted";
    case StepBargainStatus::Agreed: return "agreed";
    case StepBargainStatus::Infeasible: return "infeasible";
  }
  return "?";
}

struct StepRecord {
  int step = 0;
  int epoch = 0;
  Stage stage = Stage::Fairness;
  StepBargainStatus bargain = StepBargainStatus::NotAttempted;
  std::optional<Eigen::VectorXd> alpha;
  std::optional<BargainFailure> bargain_failure;
  double min_utility = 0.0;  // min_k g_k . eps
  ProtocolKind protocol_used = ProtocolKind::LtR;
  Eigen::VectorXd group_val_losses;
  double weight_fraction_nonzero = 0.0;
  double weight_max = 0.0;
  double lr = 0.0;
  double meta_lr = 0.0;
};

// Stage 1 (t < t_bar) bargains over the K hypergradients and falls back to
// the protocol weights when the game is infeasible; stage 2 uses the
// protocol directly. eps = sum_k phi_k g_k.
inline std::pair<Eigen::VectorXd, StepRecord> epsilon_update(
    const HypergradientSet& hg, int t, int t_bar, ProtocolKind protocol_kind,
    const Eigen::VectorXd& group_val_losses) {
  StepRecord rec;
  rec.step = t;
  rec.stage = t < t_bar ? Stage::Bargain : Stage::Fairness;
  rec.group_val_losses = group_val_losses;

  const int k = hg.groups();
  Eigen::VectorXd phi;
  if (rec.stage == Stage::Bargain) {
    bool has_zero_column = false;
    for (int g = 0; g < k; ++g) {
      has_zero_column |= hg.hypergrads.row(g).isZero(0.0);
    }
    if (!has_zero_column) {
      const auto outcome = nbs_solve(GradientMatrix(hg.hypergrads.transpose()));
      if (outcome.agreed()) {
        rec.bargain = StepBargainStatus::Agreed;
        rec.alpha = outcome.alpha;
        rec.protocol_used = ProtocolKind::Bargained;
        phi = outcome.alpha;
      } else {
        rec.bargain = StepBargainStatus::Infeasible;
        rec.bargain_failure = outcome.failure;
      }
    } else {
      rec.bargain = StepBargainStatus::Infeasible;  // zero hypergradient: no game
    }
  }
  if (phi.size() == 0) {
    phi = protocol_weights(protocol_kind, group_val_losses).weights;
    rec.protocol_used = protocol_kind;
  }

  const Eigen::VectorXd eps = hg.hypergrads.transpose() * phi;
  rec.min_utility = (hg.hypergrads * eps).minCoeff();
  return {eps, rec};
}

struct UpdateOptions {
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool l1_normalize = false;  // default is l2
  std::uint64_t mask_seed = 0;
};

struct UpdateResult {
  MlpModel model;
  Eigen::VectorXd weights;
};

// w = normalize(max(-eps, 0)); theta steps on grad(w . L) through the
// momentum optimizer. An all-zero w skips the descent term but the decay
// and momentum still apply.
inline UpdateResult weighted_param_update(const MlpModel& model, const Eigen::MatrixXd& batch,
                                          const Eigen::VectorXi& labels,
                                          const Eigen::VectorXd& eps, double lr,
                                          const UpdateOptions& opts = {}) {
  if (eps.size() != batch.rows()) {
    throw std::invalid_argument("weighted_param_update: eps length != batch size");
  }
  Eigen::VectorXd w = (-eps).cwiseMax(0.0);
  const double scale = opts.l1_normalize ? w.lpNorm<1>() : w.norm();
  if (scale > 0.0) {
    w /= scale;
  }

  Eigen::VectorXd grad;
  if (scale > 0.0) {
    const ForwardMode mode = model.dropout_p > 0.0 ? ForwardMode::Train : ForwardMode::Eval;
    grad = weighted_loss_gradient(model, batch, labels, w, mode, opts.mask_seed);
  } else {
    grad = Eigen::VectorXd::Zero(model.param_count());
  }
  UpdateResult res{sgd_momentum_step(model, grad, lr, opts.momentum, opts.weight_decay),
                   std::move(w)};
  return res;
}

struct TrainConfig {
  int epochs = 50;
  int bargain_epochs = 15;
  ProtocolKind protocol = ProtocolKind::LtR;
  double lr = 1e-3;
  double dropout = 0.2;
  int batch_size = 32;
  int hidden = 128;
  std::uint64_t seed = 1;
  bool l1_normalize = false;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || hidden < 1) {
      throw std::invalid_argument("TrainConfig: epochs, batch_size, hidden must be positive");
    }
    if (bargain_epochs < 0 || bargain_epochs > epochs) {
      throw std::invalid_argument("TrainConfig: bargain budget exceeds total budget");
    }
  }
};

struct EpochMetrics {
  int epoch = 0;
  GroupMetrics test;
  Eigen::VectorXd group_val_losses;
  AlignmentStats alignment;
};

struct TrainResult {
  MlpModel model;
  std::vector<StepRecord> steps;
  std::vector<EpochMetrics> epochs;
};

inline std::vector<GroupBatch> validation_groups(const GroupedDataset& ds) {
  std::vector<GroupBatch> out;
  for (int g = 0; g < ds.group_count(); ++g) {
    GroupBatch b;
    b.features = ds.rows(ds.val_by_group[g]);
    b.labels = ds.labels_at(ds.val_by_group[g]);
    out.push_back(std::move(b));
  }
  return out;
}

// favorable-class softmax probability, used for AUC scoring
inline Eigen::VectorXd score_favorable(const MlpModel& model, const Eigen::MatrixXd& x) {
  return softmax_rows(mlp_forward(model, x, ForwardMode::Eval)).col(1);
}

// Algorithm: one unrolled inner step per minibatch, bargaining during the
// first bargain_epochs, protocol weights afterwards or on infeasible games,
// then the clipped-normalized weighted update. Deterministic given
// (config, dataset, seed).
inline TrainResult train_two_stage(const TrainConfig& config, const GroupedDataset& dataset) {
  config.validate();
  if (dataset.train_idx.empty()) {
    throw std::invalid_argument("train_two_stage: empty train split");
  }
  if (dataset.test_idx.empty()) {
    throw std::invalid_argument("train_two_stage: empty test split");
  }
  for (int g = 0; g < dataset.group_count(); ++g) {
    if (dataset.val_by_group[g].empty()) {
      throw std::invalid_argument("train_two_stage: validation group " +
                                  std::to_string(g) + " (" + dataset.group_names[g] +
                                  ") is empty");
    }
  }

  TrainResult result;
  result.model = MlpModel::random(dataset.feature_dim(), config.hidden, 2, config.dropout,
                                  Rng::mix(config.seed, 0xa11ce));
  const std::vector<GroupBatch> val_groups = validation_groups(dataset);

  const int n_train = static_cast<int>(dataset.train_idx.size());
  const int steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
  const int t_bar = config.bargain_epochs * steps_per_epoch;

  const Eigen::MatrixXd test_x = dataset.rows(dataset.test_idx);
  const Eigen::VectorXi test_y = dataset.labels_at(dataset.test_idx);
  const Eigen::VectorXi test_g = dataset.groups_at(dataset.test_idx);

  int t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order = dataset.train_idx;
    Rng shuffle_rng(Rng::mix(config.seed, 0x5e00 + epoch));
    for (int i = n_train - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.next() % (i + 1)]);
    }

    std::vector<double> epoch_min_utils;
    for (int start = 0; start < n_train; start += config.batch_size) {
      const int len = std::min(config.batch_size, n_train - start);
      const std::vector<int> batch_idx(order.begin() + start, order.begin() + start + len);
      const Eigen::MatrixXd bx = dataset.rows(batch_idx);
      const Eigen::VectorXi by = dataset.labels_at(batch_idx);

      const HypergradientSet hg =
          group_hypergradients(result.model, bx, by, val_groups, config.lr);
      auto [eps, rec] =
          epsilon_update(hg, t, t_bar, config.protocol, hg.group_val_losses);

      UpdateOptions opts;
      opts.momentum = config.momentum;
      opts.weight_decay = config.weight_decay;
      opts.l1_normalize = config.l1_normalize;
      opts.mask_seed = Rng::mix(config.seed, 0xd0 + static_cast<std::uint64_t>(t));
      UpdateResult upd = weighted_param_update(result.model, bx, by, eps, config.lr, opts);
      result.model = std::move(upd.model);

      rec.epoch = epoch;
      rec.lr = config.lr;
      rec.meta_lr = config.lr;
      rec.weight_fraction_nonzero =
          (upd.weights.array() > 0.0).count() / static_cast<double>(len);
      rec.weight_max = upd.weights.size() > 0 ? upd.weights.maxCoeff() : 0.0;
      epoch_min_utils.push_back(rec.min_utility);
      result.steps.push_back(std::move(rec));
      ++t;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.test = group_auc_metrics(score_favorable(result.model, test_x), test_y, test_g,
                                dataset.group_count());
    em.group_val_losses.resize(dataset.group_count());
    for (int g = 0; g < dataset.group_count(); ++g) {
      const Eigen::MatrixXd logits =
          mlp_forward(result.model, val_groups[g].features, ForwardMode::Eval);
      em.group_val_losses[g] =
          cross_entropy_per_example(logits, val_groups[g].labels).mean();
    }
    em.alignment = alignment_rate(epoch_min_utils, {0}).front();
    result.epochs.push_back(std::move(em));
  }
  return result;
}

// record-based overload of the metrics module's alignment_rate
inline std::vector<AlignmentStats> alignment_rate(const std::vector<StepRecord>& records,
                                                  const std::vector<int>& epoch_boundaries) {
  std::vector<double> utils;
  utils.reserve(records.size());
  for (const auto& r : records) utils.push_back(r.min_utility);
  return alignment_rate(utils, epoch_boundaries);
}

}  // namespace nashmeta

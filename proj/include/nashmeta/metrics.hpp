#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nashmeta {

// Mann-Whitney AUC with ties counted 0.5. Single-class input returns 0.5
// and raises the degenerate flag.
inline double auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels,
                  bool* degenerate = nullptr) {
  const int n = static_cast<int>(scores.size());
  if (n == 0 || labels.size() != n) {
    throw std::invalid_argument("auc: empty input or size mismatch");
  }
  int n_pos = 0;
  for (int i = 0; i < n; ++i) n_pos += labels[i] == 1 ? 1 : 0;
  const int n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    if (degenerate) *degenerate = true;
    return 0.5;
  }
  if (degenerate) *degenerate = false;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  // average ranks over tied score runs
  double rank_sum_pos = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (int t = i; t < j; ++t) {
      if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * n_pos * (n_pos + 1.0);
  return u / (static_cast<double>(n_pos) * n_neg);
}

struct GroupMetrics {
  Eigen::VectorXd group_auc;
  std::vector<bool> degenerate;
  double overall_auc = 0.5;
  bool overall_degenerate = false;
  double max_gaucd = 0.0;  // max_i AUC_i - min_i AUC_i
  double worst_gauc = 0.5;  // min_i AUC_i
};

inline GroupMetrics group_auc_metrics(const Eigen::VectorXd& scores,
                                      const Eigen::VectorXi& labels,
                                      const Eigen::VectorXi& groups, int n_groups) {
  const int n = static_cast<int>(scores.size());
  if (n == 0 || labels.size() != n || groups.size() != n || n_groups < 1) {
    throw std::invalid_argument("group_auc_metrics: bad input sizes");
  }
  GroupMetrics m;
  m.group_auc.resize(n_groups);
  m.degenerate.resize(n_groups);
  for (int g = 0; g < n_groups; ++g) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (groups[i] == g) idx.push_back(i);
    }
    if (idx.empty()) {
      throw std::invalid_argument("group_auc_metrics: group " + std::to_string(g) +
                                  " is empty");
    }
    Eigen::VectorXd s(idx.size());
    Eigen::VectorXi y(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      s[i] = scores[idx[i]];
      y[i] = labels[idx[i]];
    }
    bool deg = false;
    m.group_auc[g] = auc(s, y, &deg);
    m.degenerate[g] = deg;
  }
  m.overall_auc = auc(scores, labels, &m.overall_degenerate);
  m.max_gaucd = m.group_auc.maxCoeff() - m.group_auc.minCoeff();
  m.worst_gauc = m.group_auc.minCoeff();
  return m;
}

struct AlignmentStats {
  double min_utility = 0.0;           // smallest per-step minimum in the epoch
  int aligned_steps = 0;
  int total_steps = 0;
  std::optional<double> rate;         // empty for an empty epoch
};

// per-epoch fraction of steps whose minimum group utility is positive;
// epoch e covers [boundaries[e], boundaries[e+1]) with an implicit final
// boundary at the end of the sequence
inline std::vector<AlignmentStats> alignment_rate(const std::vector<double>& min_utilities,
                                                  const std::vector<int>& epoch_boundaries) {
  std::vector<AlignmentStats> out;
  const int n = static_cast<int>(min_utilities.size());
  for (size_t e = 0; e < epoch_boundaries.size(); ++e) {
    const int lo = epoch_boundaries[e];
    const int hi = e + 1 < epoch_boundaries.size() ? epoch_boundaries[e + 1] : n;
    AlignmentStats s;
    s.min_utility = std::numeric_limits<double>::infinity();
    for (int t = lo; t < hi && t < n; ++t) {
      ++s.total_steps;
      s.min_utility = std::min(s.min_utility, min_utilities[t]);
      if (min_utilities[t] > 0.0) ++s.aligned_steps;
    }
    if (s.total_steps > 0) {
      s.rate = static_cast<double>(s.aligned_steps) / s.total_steps;
    } else {
      s.min_utility = 0.0;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace nashmeta

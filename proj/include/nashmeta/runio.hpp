#pragma once

#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nashmeta/metalearn.hpp"
#include "nashmeta/metrics.hpp"
#include "nashmeta/synthetic.hpp"

namespace nashmeta {

inline constexpr const char* kCodeVersion = "0.1.0";

// relative output paths honor the NASHMETA_OUT_DIR override
inline std::string resolve_output_path(const std::string& path) {
  const char* dir = std::getenv("NASHMETA_OUT_DIR");
  if (dir == nullptr || path.empty() || path.front() == '/') {
    return path;
  }
  return std::string(dir) + "/" + path;
}

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline nlohmann::json to_json(const GroupMetrics& m) {
  nlohmann::json j;
  j["overall_auc"] = m.overall_auc;
  j["max_gaucd"] = m.max_gaucd;
  j["worst_gauc"] = m.worst_gauc;
  j["group_auc"] = to_json(m.group_auc);
  j["degenerate"] = m.degenerate;
  return j;
}

inline nlohmann::json step_row(const StepRecord& r, int seed) {
  nlohmann::json j;
  j["kind"] = "step";
  j["seed"] = seed;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["stage"] = to_string(r.stage);
  j["bargain"] = to_string(r.bargain);
  if (r.alpha) j["alpha"] = to_json(*r.alpha);
  if (r.bargain_failure) j["failure"] = to_string(*r.bargain_failure);
  j["min_utility"] = r.min_utility;
  j["protocol"] = to_string(r.protocol_used);
  j["group_val_losses"] = to_json(r.group_val_losses);
  j["weight_fraction_nonzero"] = r.weight_fraction_nonzero;
  j["weight_max"] = r.weight_max;
  j["lr"] = r.lr;
  j["meta_lr"] = r.meta_lr;
  return j;
}

inline nlohmann::json epoch_row(const EpochMetrics& e, int seed) {
  nlohmann::json j;
  j["kind"] = "epoch";
  j["seed"] = seed;
  j["epoch"] = e.epoch;
  j["test"] = to_json(e.test);
  j["group_val_losses"] = to_json(e.group_val_losses);
  if (e.alignment.rate) {
    j["alignment_rate"] = *e.alignment.rate;
  } else {
    j["alignment_rate"] = nullptr;
  }
  j["min_utility"] = e.alignment.min_utility;
  return j;
}

inline nlohmann::json trajectory_point_row(const synthetic::Trajectory& tr, int init_index,
                                           int step) {
  const auto& p = tr.points[step];
  nlohmann::json j;
  j["kind"] = "traj_point";
  j["method"] = tr.method;
  j["init"] = init_index;
  j["step"] = step;
  j["theta"] = {p.theta[0], p.theta[1]};
  j["losses"] = {p.losses[0], p.losses[1]};
  if (step > 0) {
    const auto& meta = tr.steps[step - 1];
    if (meta.bargain) {
      j["bargain"] = *meta.bargain == BargainStatus::Agreed ? "agreed" : "infeasible";
      if (meta.alpha) j["alpha"] = {(*meta.alpha)[0], (*meta.alpha)[1]};
    } else {
      j["bargain"] = nullptr;
    }
    j["min_utility"] = meta.min_utility;
  }
  return j;
}

inline nlohmann::json endpoint_row(const synthetic::Trajectory& tr, int init_index,
                                   double pareto_tol, double fairness_tol) {
  const auto& end = tr.points.back();
  const double ps = synthetic::pareto_stationarity(end);
  const double fg = synthetic::fairness_gap(end);
  nlohmann::json j;
  j["kind"] = "endpoint";
  j["method"] = tr.method;
  j["init"] = init_index;
  j["init_theta"] = {tr.init[0], tr.init[1]};
  j["theta"] = {end.theta[0], end.theta[1]};
  j["losses"] = {end.losses[0], end.losses[1]};
  j["pareto_stationarity"] = ps;
  j["fairness_gap"] = fg;
  j["pareto_pass"] = ps <= pareto_tol;
  j["fairness_pass"] = fg <= fairness_tol;
  return j;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path) : out_(path) {
    if (!out_) {
      throw std::runtime_error("cannot open output file: " + path);
    }
  }

  void row(const nlohmann::json& j) { out_ << j.dump() << "\n"; }

 private:
  std::ofstream out_;
};

}  // namespace nashmeta

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nashmeta/data.hpp"
#include "nashmeta/metalearn.hpp"
#include "nashmeta/runio.hpp"
#include "nashmeta/synthetic.hpp"

using nlohmann::json;

namespace {

constexpr double kParetoTol = 1e-2;
constexpr double kFairnessTol = 0.1;

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::vector<Eigen::Vector2d> parse_inits(const std::string& spec) {
  if (spec == "standard" || spec == "paper") {
    const auto& p = nashmeta::synthetic::standard_inits();
    return {p.begin(), p.end()};
  }
  std::vector<Eigen::Vector2d> out;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    const auto comma = part.find(',');
    if (comma == std::string::npos) {
      throw CLI::ValidationError("--inits", "expected 'standard' or 'x,y;x,y;...'");
    }
    out.emplace_back(std::stod(part.substr(0, comma)), std::stod(part.substr(comma + 1)));
  }
  if (out.empty()) {
    throw CLI::ValidationError("--inits", "no initial points given");
  }
  return out;
}

std::vector<int> expand_seeds(int seeds, const std::string& seed_list) {
  std::vector<int> out;
  if (!seed_list.empty()) {
    std::stringstream ss(seed_list);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(std::stoi(part));
  } else {
    for (int s = 1; s <= seeds; ++s) out.push_back(s);
  }
  if (out.empty()) {
    throw CLI::ValidationError("--seeds", "seed list is empty");
  }
  return out;
}

struct SimulateArgs {
  std::string method = "nbs-two-stage";
  std::string inits = "standard";
  int steps = 1000;
  double lr = 0.1;
  int bargain_steps = 100;
  std::string protocol = "ltr";
  std::string out = "simulate.jsonl";
};

int run_simulate(const SimulateArgs& args) {
  const auto inits = parse_inits(args.inits);
  const auto protocol = nashmeta::protocol_from_string(args.protocol);
  nashmeta::JsonlWriter w(nashmeta::resolve_output_path(args.out));

  json config;
  config["kind"] = "config";
  config["command"] = "simulate";
  config["method"] = args.method;
  config["steps"] = args.steps;
  config["lr"] = args.lr;
  config["bargain_steps"] = args.bargain_steps;
  config["protocol"] = args.protocol;
  {
    json ji = json::array();
    for (const auto& p : inits) ji.push_back({p[0], p[1]});
    config["inits"] = ji;
  }
  config["pareto_tol"] = kParetoTol;
  config["fairness_tol"] = kFairnessTol;
  config["code_version"] = nashmeta::kCodeVersion;
  config["created_at"] = timestamp();
  w.row(config);

  for (size_t i = 0; i < inits.size(); ++i) {
    const auto tr = nashmeta::synthetic::run_trajectory(args.method, inits[i], args.steps,
                                                        args.lr, args.bargain_steps, protocol);
    for (size_t t = 0; t < tr.points.size(); ++t) {
      w.row(nashmeta::trajectory_point_row(tr, static_cast<int>(i), static_cast<int>(t)));
    }
    w.row(nashmeta::endpoint_row(tr, static_cast<int>(i), kParetoTol, kFairnessTol));
  }
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string csv_override;
  std::string protocol = "ltr";
  bool two_stage = false;
  int epochs = 50;
  int bargain_epochs = -1;  // resolved against --two-stage
  int seeds = 5;
  std::string seed_list;
  double lr = -1.0;  // negative: take the dataset spec default
  double dropout = -1.0;
  int batch_size = -1;
  int hidden = 128;
  bool l1_normalize = false;
  std::string out = "train.jsonl";
};

int run_train(const TrainArgs& args) {
  nashmeta::DatasetSpec spec = nashmeta::load_dataset_spec(args.dataset);
  if (!args.csv_override.empty()) {
    spec.source = args.csv_override;
  }
  const auto table = nashmeta::load_csv(spec);

  nashmeta::TrainConfig base;
  base.epochs = args.epochs;
  base.bargain_epochs = args.bargain_epochs >= 0 ? args.bargain_epochs
                        : args.two_stage        ? 15
                                                : 0;
  base.protocol = nashmeta::protocol_from_string(args.protocol);
  base.lr = args.lr > 0 ? args.lr : spec.learning_rate;
  base.dropout = args.dropout >= 0 ? args.dropout : spec.dropout;
  base.batch_size = args.batch_size > 0 ? args.batch_size : spec.batch_size;
  base.hidden = args.hidden;
  base.l1_normalize = args.l1_normalize;
  base.validate();

  const std::vector<int> seeds = expand_seeds(args.seeds, args.seed_list);
  nashmeta::JsonlWriter w(nashmeta::resolve_output_path(args.out));

  json config;
  config["kind"] = "config";
  config["command"] = "train";
  config["dataset"] = spec.name;
  config["dataset_spec"] = args.dataset;
  config["source"] = spec.source;
  config["protocol"] = args.protocol;
  config["two_stage"] = base.bargain_epochs > 0;
  config["epochs"] = base.epochs;
  config["bargain_epochs"] = base.bargain_epochs;
  config["lr"] = base.lr;
  config["dropout"] = base.dropout;
  config["batch_size"] = base.batch_size;
  config["hidden"] = base.hidden;
  config["normalize"] = base.l1_normalize ? "l1" : "l2";
  config["seeds"] = seeds;
  config["code_version"] = nashmeta::kCodeVersion;
  config["created_at"] = timestamp();
  w.row(config);

  std::vector<nashmeta::GroupMetrics> finals;
  for (int seed : seeds) {
    auto ds = nashmeta::standardize(
        nashmeta::balanced_split(table, spec, static_cast<std::uint64_t>(seed)));
    for (const auto& warning : ds.warnings) {
      json jw;
      jw["kind"] = "warning";
      jw["seed"] = seed;
      jw["message"] = warning;
      w.row(jw);
    }
    nashmeta::TrainConfig cfg = base;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto result = nashmeta::train_two_stage(cfg, ds);

    for (const auto& step : result.steps) w.row(nashmeta::step_row(step, seed));
    for (const auto& epoch : result.epochs) w.row(nashmeta::epoch_row(epoch, seed));

    json fin;
    fin["kind"] = "final";
    fin["seed"] = seed;
    fin["metrics"] = nashmeta::to_json(result.epochs.back().test);
    w.row(fin);
    finals.push_back(result.epochs.back().test);
  }

  const auto mean_std = [&](auto pick) {
    double mean = 0.0;
    for (const auto& f : finals) mean += pick(f);
    mean /= finals.size();
    double var = 0.0;
    for (const auto& f : finals) var += std::pow(pick(f) - mean, 2);
    const double sd = finals.size() > 1 ? std::sqrt(var / (finals.size() - 1)) : 0.0;
    return std::pair<double, double>(mean, sd);
  };
  json agg;
  agg["kind"] = "aggregate";
  const auto [am, as] = mean_std([](const auto& f) { return f.overall_auc; });
  const auto [dm, dsd] = mean_std([](const auto& f) { return f.max_gaucd; });
  const auto [wm, wsd] = mean_std([](const auto& f) { return f.worst_gauc; });
  agg["overall_auc"] = {{"mean", am}, {"std", as}};
  agg["max_gaucd"] = {{"mean", dm}, {"std", dsd}};
  agg["worst_gauc"] = {{"mean", wm}, {"std", wsd}};
  agg["n_seeds"] = finals.size();
  w.row(agg);
  return 0;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string csv;
};

struct RunSummary {
  std::string label;
  double auc_mean = 0, auc_std = 0;
  double gap_mean = 0, gap_std = 0;
  double worst_mean = 0, worst_std = 0;
  int n_seeds = 0;
  std::map<int, std::pair<double, int>> alignment_by_epoch;  // sum, count
};

int run_report(const ReportArgs& args) {
  std::vector<RunSummary> runs;
  for (const auto& path : args.inputs) {
    std::ifstream in(path);
    if (!in) {
      std::cerr << "report: cannot open " << path << "\n";
      return 1;
    }
    RunSummary run;
    run.label = path;
    std::string line;
    int lineno = 0;
    bool any = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error&) {
        std::cerr << "report: malformed JSONL at " << path << ":" << lineno << "\n";
        return 1;
      }
      any = true;
      const std::string kind = j.value("kind", "");
      if (kind == "config") {
        const std::string dataset = j.value("dataset", j.value("method", "?"));
        const bool two_stage = j.value("two_stage", false);
        const std::string protocol = j.value("protocol", "?");
        run.label = dataset + "/" + protocol + (two_stage ? "/two-stage" : "/one-stage");
      } else if (kind == "aggregate") {
        run.auc_mean = j["overall_auc"]["mean"].get<double>();
        run.auc_std = j["overall_auc"]["std"].get<double>();
        run.gap_mean = j["max_gaucd"]["mean"].get<double>();
        run.gap_std = j["max_gaucd"]["std"].get<double>();
        run.worst_mean = j["worst_gauc"]["mean"].get<double>();
        run.worst_std = j["worst_gauc"]["std"].get<double>();
        run.n_seeds = j.value("n_seeds", 0);
      } else if (kind == "epoch" && !j["alignment_rate"].is_null()) {
        auto& cell = run.alignment_by_epoch[j["epoch"].get<int>()];
        cell.first += j["alignment_rate"].get<double>();
        cell.second += 1;
      }
    }
    if (!any) {
      std::cerr << "report: empty input " << path << "\n";
      return 1;
    }
    if (run.n_seeds == 0) {
      std::cerr << "report: no aggregate row in " << path << "\n";
      return 1;
    }
    runs.push_back(std::move(run));
  }

  std::printf("%-40s %7s %22s %22s %22s\n", "run", "seeds", "Overall AUC", "Max-gAUCD",
              "Worst-gAUC");
  for (const auto& r : runs) {
    std::printf("%-40s %7d   %8.4f +/- %-8.4f %8.4f +/- %-8.4f %8.4f +/- %-8.4f\n",
                r.label.c_str(), r.n_seeds, r.auc_mean, r.auc_std, r.gap_mean, r.gap_std,
                r.worst_mean, r.worst_std);
  }
  for (const auto& r : runs) {
    if (r.alignment_by_epoch.empty()) continue;
    std::printf("alignment %s:", r.label.c_str());
    for (const auto& [epoch, cell] : r.alignment_by_epoch) {
      std::printf(" e%d=%.3f", epoch, cell.first / cell.second);
    }
    std::printf("\n");
  }

  if (!args.csv.empty()) {
    std::ofstream out(nashmeta::resolve_output_path(args.csv));
    if (!out) {
      std::cerr << "report: cannot open csv output " << args.csv << "\n";
      return 1;
    }
    out << "run,seeds,overall_auc_mean,overall_auc_std,max_gaucd_mean,max_gaucd_std,"
           "worst_gauc_mean,worst_gauc_std\n";
    for (const auto& r : runs) {
      out << r.label << "," << r.n_seeds << "," << r.auc_mean << "," << r.auc_std << ","
          << r.gap_mean << "," << r.gap_std << "," << r.worst_mean << "," << r.worst_std
          << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nash-bargaining hypergradient aggregation and two-stage meta-learning"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run the 2-D two-objective benchmark");
  simulate->add_option("--method", sim.method, "aggregation method")
      ->check(CLI::IsMember(
          {"ltr", "forml", "gdro", "nbs-full", "nbs-two-stage", "pcgrad", "cagrad", "gm"}));
  simulate->add_option("--inits", sim.inits, "'standard' (six benchmark points) or 'x,y;x,y;...'");
  simulate->add_option("--steps", sim.steps)->check(CLI::PositiveNumber);
  simulate->add_option("--lr", sim.lr)->check(CLI::PositiveNumber);
  simulate->add_option("--bargain-steps", sim.bargain_steps)->check(CLI::NonNegativeNumber);
  simulate->add_option("--protocol", sim.protocol, "stage-2 / fallback protocol")
      ->check(CLI::IsMember({"ltr", "forml", "gdro"}));
  simulate->add_option("--out", sim.out, "output JSONL path");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "two-stage meta-learning on a tabular dataset");
  train->add_option("--dataset", tr.dataset, "dataset spec JSON")->required();
  train->add_option("--csv", tr.csv_override, "override the spec's CSV source path");
  train->add_option("--protocol", tr.protocol)->check(CLI::IsMember({"ltr", "forml", "gdro"}));
  train->add_flag("--two-stage", tr.two_stage, "enable the bargaining stage");
  train->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  train->add_option("--bargain-epochs", tr.bargain_epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--seeds", tr.seeds, "run seeds 1..N")->check(CLI::PositiveNumber);
  train->add_option("--seed-list", tr.seed_list, "explicit comma-separated seeds");
  train->add_option("--lr", tr.lr);
  train->add_option("--dropout", tr.dropout);
  train->add_option("--batch-size", tr.batch_size);
  train->add_option("--hidden", tr.hidden)->check(CLI::PositiveNumber);
  train->add_flag("--l1-normalize", tr.l1_normalize, "l1 weight normalization");
  train->add_option("--out", tr.out, "output JSONL path");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "summarize run files");
  report->add_option("--in", rep.inputs, "input JSONL files")->required()->expected(-1);
  report->add_option("--csv", rep.csv, "also export the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (train->parsed()) return run_train(tr);
    return run_report(rep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

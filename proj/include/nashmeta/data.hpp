#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nashmeta/rng.hpp"

namespace nashmeta {

// Dataset description: source CSV, label/group columns, split sizes and the
// training hyperparameters shipped alongside each benchmark.
struct DatasetSpec {
  std::string name;
  std::string source;
  std::string label_column;
  std::string favorable_label;
  std::string group_column;
  std::vector<std::string> categorical_columns;
  double test_fraction = 0.03;
  int val_cell_count = 1;
  std::uint64_t split_seed = 0;

  double learning_rate = 1e-3;
  double dropout = 0.2;
  int batch_size = 32;

  void validate() const {
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
      throw std::invalid_argument("DatasetSpec: test_fraction must be in (0,1)");
    }
    if (val_cell_count < 1) {
      throw std::invalid_argument("DatasetSpec: val_cell_count must be >= 1");
    }
  }
};

inline DatasetSpec load_dataset_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open dataset spec: " + path);
  }
  nlohmann::json j;
  in >> j;
  DatasetSpec s;
  s.name = j.at("name").get<std::string>();
  s.source = j.at("source").get<std::string>();
  // relative sources resolve against the spec file's directory
  if (!s.source.empty() && s.source.front() != '/') {
    s.source = (std::filesystem::path(path).parent_path() / s.source).string();
  }
  s.label_column = j.at("label_column").get<std::string>();
  s.favorable_label = j.at("favorable_label").get<std::string>();
  s.group_column = j.at("group_column").get<std::string>();
  if (j.contains("categorical_columns")) {
    s.categorical_columns = j["categorical_columns"].get<std::vector<std::string>>();
  }
  s.test_fraction = j.value("test_fraction", 0.03);
  s.val_cell_count = j.value("val_cell_count", 1);
  s.split_seed = j.value("split_seed", std::uint64_t{0});
  s.learning_rate = j.value("learning_rate", 1e-3);
  s.dropout = j.value("dropout", 0.2);
  s.batch_size = j.value("batch_size", 32);
  s.validate();
  return s;
}

// minimal RFC-4180 reader: quoted fields, doubled quotes, CRLF endings
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline RawTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::invalid_argument("cannot open csv: " + path);
  }
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  size_t i = 0;
  const auto end_field = [&]() {
    record.push_back(field);
    field.clear();
  };
  const auto end_record = [&]() {
    end_field();
    records.push_back(record);
    record.clear();
  };
  while (i < content.size()) {
    const char ch = content[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r') {
      // swallow; newline handling follows
    } else if (ch == '\n') {
      end_record();
    } else {
      field.push_back(ch);
    }
    ++i;
  }
  if (!field.empty() || !record.empty()) {
    end_record();
  }

  if (records.empty()) {
    throw std::invalid_argument("csv has no header row: " + path);
  }
  RawTable t;
  t.columns = records.front();
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.columns.size()) {
      throw std::invalid_argument("csv row " + std::to_string(r + 1) + " has " +
                                  std::to_string(records[r].size()) + " cells, expected " +
                                  std::to_string(t.columns.size()));
    }
    t.rows.push_back(records[r]);
  }
  return t;
}

// CSV rows turned into numbers: one-hot categoricals (lexicographic
// category order), binary labels with favorable mapped to 1, group ids in
// lexicographic group-name order.
struct EncodedTable {
  Eigen::MatrixXd features;
  std::vector<std::string> feature_names;
  Eigen::VectorXi labels;
  Eigen::VectorXi groups;
  std::vector<std::string> group_names;
};

inline EncodedTable load_csv(const DatasetSpec& spec) {
  spec.validate();
  const RawTable raw = read_csv(spec.source);
  const auto col_index = [&](const std::string& name) {
    const auto it = std::find(raw.columns.begin(), raw.columns.end(), name);
    if (it == raw.columns.end()) {
      throw std::invalid_argument("column not found: " + name);
    }
    return static_cast<int>(it - raw.columns.begin());
  };

  const int label_col = col_index(spec.label_column);
  const int group_col = col_index(spec.group_column);
  std::set<int> categorical;
  for (const auto& c : spec.categorical_columns) {
    categorical.insert(col_index(c));
  }

  const int n = static_cast<int>(raw.rows.size());
  const auto cell = [&](int r, int c) -> const std::string& {
    const std::string& v = raw.rows[r][c];
    if (v.empty()) {
      throw std::invalid_argument("missing value at row " + std::to_string(r + 2) +
                                  " column " + raw.columns[c]);
    }
    return v;
  };

  EncodedTable out;

  // labels: exactly two raw values, favorable -> 1
  std::set<std::string> label_values;
  for (int r = 0; r < n; ++r) label_values.insert(cell(r, label_col));
  if (label_values.size() != 2 || label_values.count(spec.favorable_label) == 0) {
    throw std::invalid_argument("label column " + spec.label_column +
                                " must be binary and contain the favorable value '" +
                                spec.favorable_label + "'");
  }
  out.labels.resize(n);
  for (int r = 0; r < n; ++r) {
    out.labels[r] = cell(r, label_col) == spec.favorable_label ? 1 : 0;
  }

  // groups in lexicographic name order
  std::set<std::string> group_values;
  for (int r = 0; r < n; ++r) group_values.insert(cell(r, group_col));
  out.group_names.assign(group_values.begin(), group_values.end());
  std::map<std::string, int> group_id;
  for (size_t g = 0; g < out.group_names.size(); ++g) group_id[out.group_names[g]] = g;
  out.groups.resize(n);
  for (int r = 0; r < n; ++r) out.groups[r] = group_id.at(cell(r, group_col));

  // feature layout: original column order; categoricals expand in
  // lexicographic category order
  struct ColumnPlan {
    int source = 0;
    bool one_hot = false;
    std::vector<std::string> categories;
  };
  std::vector<ColumnPlan> plan;
  int width = 0;
  for (int c = 0; c < static_cast<int>(raw.columns.size()); ++c) {
    if (c == label_col) continue;
    ColumnPlan p;
    p.source = c;
    if (categorical.count(c)) {
      p.one_hot = true;
      std::set<std::string> values;
      for (int r = 0; r < n; ++r) values.insert(cell(r, c));
      p.categories.assign(values.begin(), values.end());
      for (const auto& v : p.categories) {
        out.feature_names.push_back(raw.columns[c] + "=" + v);
      }
      width += static_cast<int>(p.categories.size());
    } else if (c == group_col) {
      continue;  // group column is a feature only when listed as categorical
    } else {
      out.feature_names.push_back(raw.columns[c]);
      width += 1;
    }
    plan.push_back(p);
  }

  out.features = Eigen::MatrixXd::Zero(n, width);
  for (int r = 0; r < n; ++r) {
    int f = 0;
    for (const auto& p : plan) {
      const std::string& v = cell(r, p.source);
      if (p.one_hot) {
        const auto it = std::lower_bound(p.categories.begin(), p.categories.end(), v);
        out.features(r, f + static_cast<int>(it - p.categories.begin())) = 1.0;
        f += static_cast<int>(p.categories.size());
      } else {
        try {
          size_t used = 0;
          out.features(r, f) = std::stod(v, &used);
          if (used != v.size()) throw std::invalid_argument(v);
        } catch (const std::exception&) {
          throw std::invalid_argument("unparseable cell '" + v + "' at row " +
                                      std::to_string(r + 2) + " column " +
                                      raw.columns[p.source]);
        }
        f += 1;
      }
    }
  }
  return out;
}

struct GroupedDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXi labels;
  Eigen::VectorXi groups;
  std::vector<std::string> group_names;
  std::vector<int> train_idx, val_idx, test_idx;
  std::vector<std::vector<int>> val_by_group;
  std::vector<std::string> warnings;
  bool standardized = false;

  int group_count() const { return static_cast<int>(group_names.size()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  Eigen::MatrixXd rows(const std::vector<int>& idx) const {
    Eigen::MatrixXd m(idx.size(), features.cols());
    for (size_t i = 0; i < idx.size(); ++i) m.row(i) = features.row(idx[i]);
    return m;
  }
  Eigen::VectorXi labels_at(const std::vector<int>& idx) const {
    Eigen::VectorXi y(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) y[i] = labels[idx[i]];
    return y;
  }
  Eigen::VectorXi groups_at(const std::vector<int>& idx) const {
    Eigen::VectorXi g(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) g[i] = groups[idx[i]];
    return g;
  }
};

// Seeded sampling without replacement: balanced test cells first, then
// balanced validation cells, remainder is train. Per-cell test size is
// floor(n * test_fraction / (2K)). Cells short of the target are filled to
// their maximum with a recorded warning.
inline GroupedDataset balanced_split(const EncodedTable& table, const DatasetSpec& spec,
                                     std::uint64_t seed) {
  const int n = static_cast<int>(table.labels.size());
  const int k = static_cast<int>(table.group_names.size());
  GroupedDataset ds;
  ds.features = table.features;
  ds.labels = table.labels;
  ds.groups = table.groups;
  ds.group_names = table.group_names;
  ds.val_by_group.resize(k);

  const int cells = 2 * k;
  const int test_cells =
      static_cast<int>(std::floor(n * spec.test_fraction / static_cast<double>(cells)));

  Rng rng(Rng::mix(spec.split_seed, seed));
  for (int g = 0; g < k; ++g) {
    bool group_seen = false;
    for (int label = 0; label < 2; ++label) {
      std::vector<int> cell_rows;
      for (int r = 0; r < n; ++r) {
        if (table.groups[r] == g && table.labels[r] == label) cell_rows.push_back(r);
      }
      group_seen |= !cell_rows.empty();
      for (int i = static_cast<int>(cell_rows.size()) - 1; i > 0; --i) {
        std::swap(cell_rows[i], cell_rows[rng.next() % (i + 1)]);
      }
      const int want = test_cells + spec.val_cell_count;
      if (static_cast<int>(cell_rows.size()) < want) {
        ds.warnings.push_back("cell (" + table.group_names[g] + ", label " +
                              std::to_string(label) + ") has " +
                              std::to_string(cell_rows.size()) + " rows, short of " +
                              std::to_string(want));
      }
      size_t pos = 0;
      for (int t = 0; t < test_cells && pos < cell_rows.size(); ++t) {
        ds.test_idx.push_back(cell_rows[pos++]);
      }
      for (int v = 0; v < spec.val_cell_count && pos < cell_rows.size(); ++v) {
        ds.val_idx.push_back(cell_rows[pos]);
        ds.val_by_group[g].push_back(cell_rows[pos]);
        ++pos;
      }
      while (pos < cell_rows.size()) {
        ds.train_idx.push_back(cell_rows[pos++]);
      }
    }
    if (!group_seen) {
      throw std::invalid_argument("group " + table.group_names[g] + " has no rows");
    }
  }
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.val_idx.begin(), ds.val_idx.end());
  std::sort(ds.test_idx.begin(), ds.test_idx.end());
  if (ds.train_idx.empty()) {
    ds.warnings.push_back("train split is empty; all rows consumed by val+test");
  }
  return ds;
}

// per-feature affine transform fit on the train split only; constant
// features map to 0
inline GroupedDataset standardize(GroupedDataset ds) {
  if (ds.train_idx.empty()) {
    throw std::invalid_argument("standardize: train split is empty");
  }
  const int d = ds.feature_dim();
  const double m = static_cast<double>(ds.train_idx.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (int r : ds.train_idx) mean += ds.features.row(r).transpose();
  mean /= m;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (int r : ds.train_idx) {
    var += (ds.features.row(r).transpose() - mean).array().square().matrix();
  }
  var /= m;
  Eigen::VectorXd scale(d);
  for (int j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j]);
    scale[j] = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
  ds.features = (ds.features.rowwise() - mean.transpose()).array().rowwise() *
                scale.transpose().array();
  ds.standardized = true;
  return ds;
}

}  // namespace nashmeta

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "nashmeta/data.hpp"

using namespace nashmeta;
using Catch::Approx;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = std::string("/tmp/nashmeta_") + name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

DatasetSpec tiny_spec(const std::string& source) {
  DatasetSpec s;
  s.name = "tiny";
  s.source = source;
  s.label_column = "label";
  s.favorable_label = "1";
  s.group_column = "grp";
  s.categorical_columns = {"color"};
  s.test_fraction = 0.25;
  s.val_cell_count = 1;
  return s;
}

// 16 rows, 2 groups x 2 labels x 4 rows each
std::string balanced_csv() {
  std::string csv = "grp,color,x,label\n";
  for (int g = 0; g < 2; ++g) {
    for (int label = 0; label < 2; ++label) {
      for (int i = 0; i < 4; ++i) {
        csv += std::string(g == 0 ? "a" : "b") + "," + (i % 2 ? "red" : "blue") + "," +
               std::to_string(g + label + i) + "," + std::to_string(label) + "\n";
      }
    }
  }
  return csv;
}

}  // namespace

TEST_CASE("csv encoding") {
  SECTION("one categorical column of two categories becomes two one-hot columns") {
    const auto path = write_temp("two_rows.csv",
                                 "grp,color,label\n"
                                 "a,red,1\n"
                                 "b,blue,0\n");
    auto spec = tiny_spec(path);
    const auto table = load_csv(spec);
    REQUIRE(table.feature_names.size() == 2);
    CHECK(table.feature_names[0] == "color=blue");
    CHECK(table.feature_names[1] == "color=red");
    CHECK(table.features(0, 1) == 1.0);
    CHECK(table.features(0, 0) == 0.0);
    CHECK(table.features(1, 0) == 1.0);
    CHECK(table.labels[0] == 1);
    CHECK(table.labels[1] == 0);
    CHECK(table.group_names == std::vector<std::string>{"a", "b"});
  }
  SECTION("missing label cell errors at the row") {
    const auto path = write_temp("missing.csv",
                                 "grp,color,label\n"
                                 "a,red,1\n"
                                 "b,blue,\n");
    CHECK_THROWS_WITH(load_csv(tiny_spec(path)), Catch::Matchers::ContainsSubstring("row 3"));
  }
  SECTION("unparseable numeric cell names row and column") {
    const auto path = write_temp("badnum.csv",
                                 "grp,color,x,label\n"
                                 "a,red,1.5,1\n"
                                 "b,blue,oops,0\n");
    CHECK_THROWS_WITH(load_csv(tiny_spec(path)),
                      Catch::Matchers::ContainsSubstring("oops") &&
                          Catch::Matchers::ContainsSubstring("column x"));
  }
  SECTION("quoted fields with commas and doubled quotes") {
    const auto path = write_temp("quoted.csv",
                                 "grp,color,label\n"
                                 "\"a\",\"re,d\",1\n"
                                 "b,\"bl\"\"ue\",0\n");
    const auto table = load_csv(tiny_spec(path));
    CHECK(table.feature_names[0] == "color=bl\"ue");
    CHECK(table.feature_names[1] == "color=re,d");
  }
  SECTION("missing column is reported") {
    const auto path = write_temp("nocol.csv", "grp,label\na,1\nb,0\n");
    auto spec = tiny_spec(path);
    CHECK_THROWS_WITH(load_csv(spec), Catch::Matchers::ContainsSubstring("color"));
  }
  SECTION("group column is a feature only when listed as categorical") {
    const auto path = write_temp("grpfeat.csv",
                                 "grp,color,label\n"
                                 "a,red,1\n"
                                 "b,blue,0\n");
    auto spec = tiny_spec(path);
    spec.categorical_columns = {"color", "grp"};
    const auto table = load_csv(spec);
    CHECK(table.feature_names.size() == 4);
  }
}

TEST_CASE("balanced split") {
  const auto path = write_temp("balanced.csv", balanced_csv());
  const auto spec = tiny_spec(path);
  const auto table = load_csv(spec);

  SECTION("cell counts, disjointness, exhaustiveness") {
    // 16 rows * 0.25 / 4 cells = 1 test row per cell
    const auto ds = balanced_split(table, spec, 3);
    CHECK(ds.test_idx.size() == 4);
    CHECK(ds.val_idx.size() == 4);
    CHECK(ds.train_idx.size() == 8);
    std::vector<bool> seen(16, false);
    for (const auto* part : {&ds.train_idx, &ds.val_idx, &ds.test_idx}) {
      for (int r : *part) {
        CHECK(!seen[r]);
        seen[r] = true;
      }
    }
    for (bool s : seen) CHECK(s);
    // balance over (group, label) cells
    for (const auto* part : {&ds.val_idx, &ds.test_idx}) {
      int count[2][2] = {{0, 0}, {0, 0}};
      for (int r : *part) count[table.groups[r]][table.labels[r]]++;
      CHECK(count[0][0] == count[0][1]);
      CHECK(count[0][0] == count[1][0]);
      CHECK(count[0][0] == count[1][1]);
    }
    CHECK(ds.warnings.empty());
  }
  SECTION("deterministic given the seed") {
    const auto a = balanced_split(table, spec, 11);
    const auto b = balanced_split(table, spec, 11);
    const auto c = balanced_split(table, spec, 12);
    CHECK(a.test_idx == b.test_idx);
    CHECK(a.val_idx == b.val_idx);
    CHECK(a.train_idx == b.train_idx);
    CHECK(a.test_idx != c.test_idx);
  }
  SECTION("exhaustion leaves an empty train and a warning") {
    std::string csv = "grp,color,x,label\n";
    csv += "a,red,0,0\na,red,1,1\nb,red,2,0\nb,red,3,1\n";
    const auto p4 = write_temp("four.csv", csv);
    auto s4 = tiny_spec(p4);
    s4.test_fraction = 0.25;  // 4 * 0.25 / 4 = 0.25 -> 0 test rows per cell
    s4.val_cell_count = 2;    // wants 2, each cell has only 1
    const auto t4 = load_csv(s4);
    const auto ds = balanced_split(t4, s4, 1);
    CHECK(ds.train_idx.empty());
    CHECK_FALSE(ds.warnings.empty());
  }
}

TEST_CASE("standardize") {
  // rows 0..3 train (x alternates 0/2, c constant), rows 4/5 val + test
  GroupedDataset ds;
  ds.features.resize(6, 2);
  ds.features << 0, 5, 2, 5, 0, 5, 2, 5, 7, 5, -3, 5;
  ds.labels = Eigen::VectorXi::Zero(6);
  ds.groups = Eigen::VectorXi::Zero(6);
  ds.group_names = {"a"};
  ds.train_idx = {0, 1, 2, 3};
  ds.val_idx = {4};
  ds.test_idx = {5};
  ds.val_by_group = {{4}};
  const auto std1 = standardize(ds);

  SECTION("two-point feature maps to -1/+1, constant column to zero") {
    for (int r = 0; r < 4; ++r) {
      CHECK(std::abs(std1.features(r, 0)) == Approx(1.0));
      CHECK(std1.features(r, 1) == 0.0);
    }
    // statistics come from the train split, so held-out rows scale with them
    CHECK(std1.features(4, 0) == Approx(6.0));
    CHECK(std1.features(5, 0) == Approx(-4.0));
  }
  SECTION("idempotent on standardized data") {
    const auto twice = standardize(std1);
    CHECK((twice.features - std1.features).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SECTION("no leakage: test rows do not move the transform") {
    GroupedDataset perturbed = ds;
    perturbed.features(5, 0) = 1e6;
    const auto std2 = standardize(perturbed);
    for (int r : ds.train_idx) {
      CHECK(std2.features(r, 0) == Approx(std1.features(r, 0)).margin(1e-12));
    }
  }
  SECTION("empty train split rejected") {
    GroupedDataset empty = ds;
    empty.train_idx.clear();
    CHECK_THROWS_AS(standardize(empty), std::invalid_argument);
  }
}

TEST_CASE("dataset spec loading") {
  SECTION("missing file") {
    CHECK_THROWS_AS(load_dataset_spec("/tmp/nashmeta_no_such_spec.json"),
                    std::invalid_argument);
  }
  SECTION("missing required field") {
    const auto path = write_temp("spec_missing.json", "{\"name\": \"x\"}");
    CHECK_THROWS(load_dataset_spec(path));
  }
  SECTION("bad fraction rejected") {
    const auto path = write_temp("spec_badfrac.json",
                                 "{\"name\":\"x\",\"source\":\"s\",\"label_column\":\"l\","
                                 "\"favorable_label\":\"1\",\"group_column\":\"g\","
                                 "\"test_fraction\":1.5}");
    CHECK_THROWS_AS(load_dataset_spec(path), std::invalid_argument);
  }
  SECTION("defaults fill the optional fields") {
    const auto path = write_temp("spec_min.json",
                                 "{\"name\":\"x\",\"source\":\"s\",\"label_column\":\"l\","
                                 "\"favorable_label\":\"1\",\"group_column\":\"g\"}");
    const auto spec = load_dataset_spec(path);
    CHECK(spec.test_fraction == 0.03);
    CHECK(spec.val_cell_count == 1);
    CHECK(spec.batch_size == 32);
  }
}

TEST_CASE("bundled sample loads through the shipped spec") {
  const std::string root = NASHMETA_SOURCE_DIR;
  const auto spec = load_dataset_spec(root + "/configs/titanic.json");
  const auto table = load_csv(spec);
  CHECK(table.labels.size() == 1309);
  CHECK(table.group_names == std::vector<std::string>{"female", "male"});

  const auto ds = standardize(balanced_split(table, spec, 1));
  // floor(1309 * 0.03 / 4) = 9 rows per test cell
  CHECK(ds.test_idx.size() == 4 * 9);
  CHECK(ds.val_idx.size() == 4);
  CHECK(ds.train_idx.size() == 1309 - 36 - 4);
  CHECK(ds.warnings.empty());
}

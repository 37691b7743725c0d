#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "synthetic.hpp"
#include "tcl/data.hpp"
#include "tcl/error.hpp"
#include "tcl/log.hpp"
#include "tcl/persist.hpp"
#include "tcl/rng.hpp"

using namespace tcl;
namespace fs = std::filesystem;

namespace {

SchemaOptions target_y() {
  SchemaOptions o;
  o.target = "y";
  return o;
}

Dataset ingest_text(const std::string& text, SchemaOptions opts = target_y()) {
  const RawTable t = parse_csv(text);
  return encode_features(t, infer_schema(t, opts));
}

// Same column layout as the UCI Adult census file (14 features + income),
// with generated values.
std::string adult_like(std::size_t rows) {
  const char* work[] = {"Private", "Self-emp-not-inc", "Local-gov", "State-gov", "?"};
  const char* edu[] = {"Bachelors", "HS-grad", "11th", "Masters", "Some-college"};
  const char* marital[] = {"Never-married", "Married-civ-spouse", "Divorced"};
  const char* occ[] = {"Adm-clerical", "Exec-managerial", "Handlers-cleaners", "Prof-specialty"};
  const char* rel[] = {"Not-in-family", "Husband", "Wife", "Own-child"};
  const char* race[] = {"White", "Black", "Asian-Pac-Islander"};
  const char* sex[] = {"Male", "Female"};
  const char* country[] = {"United-States", "Cuba", "Jamaica", "India"};
  RngStream rng(48842);
  std::string s =
      "age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,"
      "race,sex,capital-gain,capital-loss,hours-per-week,native-country,income\n";
  auto pick = [&](const auto& arr) { return std::string(arr[rng.below(std::size(arr))]); };
  for (std::size_t i = 0; i < rows; ++i) {
    s += std::to_string(17 + i % 60) + "," + pick(work) + "," +
         std::to_string(20000 + 997 * i) + "," + pick(edu) + "," + std::to_string(1 + i % 16) +
         "," + pick(marital) + "," + pick(occ) + "," + pick(rel) + "," + pick(race) + "," +
         pick(sex) + "," + std::to_string(i % 3 == 0 ? 0 : 100 * i) + "," +
         std::to_string(i % 4 == 0 ? 0 : 37 * i) + "," + std::to_string(20 + i % 45) + "," +
         pick(country) + "," + (i % 4 == 0 ? ">50K" : "<=50K") + "\n";
  }
  return s;
}

}  // namespace

TEST(Csv, QuotedFieldsAndCrLf) {
  const RawTable t = parse_csv("a,b\r\n\"x,1\",\"he said \"\"hi\"\"\"\r\n");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "he said \"hi\"");
}

TEST(Csv, RaggedRowNamesTheLine) {
  try {
    parse_csv("a,b\n1,2\n3\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Csv, UnterminatedQuote) { EXPECT_THROW(parse_csv("a\n\"x\n"), FormatError); }

TEST(Csv, AlternateDelimiter) {
  CsvOptions o;
  o.delimiter = ';';
  EXPECT_EQ(parse_csv("a;b\n1;2\n", o).rows[0][1], "2");
}

TEST(Ingest, MinimalFile) {
  const Dataset ds = ingest_text("a,b,y\n1.5,2,0\n2.5,3,1\n3.5,5,0\n",
                                 [] {
                                   auto o = target_y();
                                   o.cardinality_cutoff = 2;
                                   return o;
                                 }());
  EXPECT_EQ(ds.n(), 3u);
  EXPECT_EQ(ds.schema.numeric_count(), 2u);
  EXPECT_EQ(ds.d(), 2u);
  EXPECT_EQ(ds.task(), TaskKind::Classification);
  EXPECT_EQ(ds.schema.class_count(), 2u);
}

TEST(Ingest, MissingNumericCellGetsMedian) {
  auto o = target_y();
  o.overrides["a"] = ColumnKind::Numeric;
  const RawTable t = parse_csv("a,y\n1,0\n?,1\n4,0\n10,1\n");
  const Schema s = infer_schema(t, o);
  const FeatureStats st = fit_stats(t, s);
  // observed {1, 4, 10}: median 4
  EXPECT_EQ(st.columns[0].median, 4.0);
  const Dataset ds = encode_features(t, s, &st);
  const double z = (4.0 - st.columns[0].mean) / st.columns[0].std;
  EXPECT_DOUBLE_EQ(ds.features(1, 0), z);
}

TEST(Ingest, MissingCategoricalGetsOwnCategory) {
  const Dataset ds = ingest_text("c,y\na,0\nNA,1\nb,0\n");
  const auto& vocab = ds.schema.columns[0].vocabulary;
  EXPECT_NE(std::find(vocab.begin(), vocab.end(), kMissingCategory), vocab.end());
}

TEST(Ingest, AdultColumnLayout) {
  const fs::path dir = fs::temp_directory_path() / "tcl-adult-fixture";
  fs::create_directories(dir);
  const fs::path csv = dir / "adult.csv";
  write_text(adult_like(200), csv);
  SchemaOptions o;
  o.target = "income";
  // education-num has 16 levels, under the cardinality cutoff
  o.overrides["education-num"] = ColumnKind::Numeric;
  const Dataset ds = ingest_csv(csv, o);
  EXPECT_EQ(ds.schema.numeric_count(), 6u);
  EXPECT_EQ(ds.schema.categorical_count(), 8u);
  EXPECT_EQ(ds.schema.class_count(), 2u);
  EXPECT_EQ(ds.n(), 200u);
  fs::remove_all(dir);
}

TEST(Ingest, UnknownClassAgainstFixedSchemaFails) {
  const RawTable fit = parse_csv("a,y\n1,0\n2,1\n");
  auto o = target_y();
  o.overrides["a"] = ColumnKind::Numeric;
  const Schema s = infer_schema(fit, o);
  EXPECT_THROW(encode_features(parse_csv("a,y\n1,2\n"), s), FormatError);
}

TEST(InferSchema, CutoffRule) {
  SchemaOptions o = target_y();
  o.cardinality_cutoff = 10;
  std::string text = "b,r,s,y\n";
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    text += std::to_string(i % 2) + "," + format_double(rng.normal()) + ",w" +
            std::to_string(i % 3) + "," + std::to_string(i % 2) + "\n";
  }
  const Schema s = infer_schema(parse_csv(text), o);
  EXPECT_EQ(s.columns[0].kind, ColumnKind::Categorical);
  EXPECT_EQ(s.columns[1].kind, ColumnKind::Numeric);
  EXPECT_EQ(s.columns[2].kind, ColumnKind::Categorical);
  EXPECT_EQ(s.columns[3].kind, ColumnKind::Target);
}

TEST(InferSchema, Errors) {
  EXPECT_THROW(infer_schema(parse_csv("a,y\n1,0\n"), SchemaOptions{}), ConfigError);
  SchemaOptions o;
  o.target = "z";
  EXPECT_THROW(infer_schema(parse_csv("a,y\n1,0\n"), o), ConfigError);
  EXPECT_THROW(infer_schema(parse_csv("a,y\n"), target_y()), FormatError);
  o = target_y();
  o.overrides["a"] = ColumnKind::Numeric;
  EXPECT_THROW(infer_schema(parse_csv("a,y\nfoo,0\n"), o), FormatError);
}

TEST(InferSchema, RegressionTargetByCardinality) {
  std::string text = "a,y\n";
  for (int i = 0; i < 50; ++i) text += std::to_string(i) + "," + std::to_string(i * 0.5) + "\n";
  const Schema s = infer_schema(parse_csv(text), target_y());
  EXPECT_EQ(s.task, TaskKind::Regression);
}

TEST(Encode, ZScore) {
  auto o = target_y();
  o.overrides["a"] = ColumnKind::Numeric;
  const Dataset ds = ingest_text("a,y\n1,0\n2,1\n3,0\n", o);
  EXPECT_NEAR(ds.features(0, 0), -1.2247, 1e-4);
  EXPECT_NEAR(ds.features(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(ds.features(2, 0), 1.2247, 1e-4);
}

TEST(Encode, ConstantColumnIsZero) {
  auto o = target_y();
  o.overrides["a"] = ColumnKind::Numeric;
  const Dataset ds = ingest_text("a,y\n5,0\n5,1\n", o);
  EXPECT_EQ(ds.features(0, 0), 0.0);
  EXPECT_EQ(ds.stats.columns[0].std, 1.0);
}

TEST(Encode, OneHotWithUnknownSlot) {
  const RawTable fit = parse_csv("c,y\na,0\nb,1\n");
  const Schema s = infer_schema(fit, target_y());
  const FeatureStats st = fit_stats(fit, s);
  const Dataset known = encode_features(parse_csv("c,y\nb,0\n"), s, &st);
  EXPECT_EQ(known.d(), 3u);
  EXPECT_EQ((Vector(known.features.data())), (Vector{0, 1, 0}));
  const Dataset unseen = encode_features(parse_csv("c,y\nc,0\n"), s, &st);
  EXPECT_EQ((Vector(unseen.features.data())), (Vector{0, 0, 1}));
}

TEST(Split, SizesAndDeterminism) {
  auto o = target_y();
  o.task = TaskKind::Regression;
  std::string text = "a,y\n";
  for (int i = 0; i < 10; ++i) text += std::to_string(i) + "," + std::to_string(i) + "\n";
  const Dataset ds = ingest_text(text, o);
  RngStream r1(9), r2(9);
  const SplitIndices a = split_indices(ds, 0.8, 0.2, r1), b = split_indices(ds, 0.8, 0.2, r2);
  EXPECT_EQ(a.first.size(), 8u);
  EXPECT_EQ(a.second.size(), 2u);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Split, StratifiedCounts) {
  std::string text = "a,y\n";
  for (int i = 0; i < 100; ++i) text += std::to_string(i) + "," + std::to_string(i % 2) + "\n";
  const Dataset ds = ingest_text(text);
  RngStream rng(10);
  const auto [train, test] = split(ds, 0.8, 0.2, rng);
  auto ones = [](const Dataset& d) { return std::count(d.labels.begin(), d.labels.end(), 1.0); };
  ASSERT_EQ(train.n(), 80u);
  EXPECT_NEAR(static_cast<double>(ones(train)), 40.0, 1.0);
  EXPECT_NEAR(static_cast<double>(ones(test)), 10.0, 1.0);
}

TEST(Split, TinyClassFallsBackWithWarning) {
  std::string text = "a,y\n";
  for (int i = 0; i < 20; ++i) text += std::to_string(i) + "," + (i == 0 ? "1" : "0") + "\n";
  const Dataset ds = ingest_text(text);
  std::vector<std::string> warnings;
  const auto prev = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  RngStream rng(11);
  const SplitIndices idx = split_indices(ds, 0.8, 0.2, rng);
  set_warning_sink(prev);
  EXPECT_EQ(idx.first.size(), 16u);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Split, BadFractions) {
  const Dataset ds = ingest_text("a,y\n1,0\n2,1\n");
  RngStream rng(12);
  EXPECT_THROW(split_indices(ds, 0.7, 0.2, rng), ArgumentError);
}

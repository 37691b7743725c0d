#include "tcl/persist.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tcl {

using nlohmann::json;

namespace {

ColumnKind parse_kind(const std::string& s) {
  if (s == "numeric") return ColumnKind::Numeric;
  if (s == "categorical") return ColumnKind::Categorical;
  if (s == "target") return ColumnKind::Target;
  throw FormatError("unknown column kind '" + s + "'");
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// FNV-1a, 64 bit.
std::string checksum(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dataset_csv(const Dataset& ds, std::span<const std::size_t> row_ids) {
  std::string out = "row_id";
  for (const auto& name : ds.schema.encoded_names()) out += "," + csv_quote(name);
  out += ",label\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out += std::to_string(row_ids.empty() ? i : row_ids[i]);
    for (double v : ds.features.row(i)) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += format_double(ds.labels[i]);
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text, const std::string& what, Schema schema,
                         FeatureStats stats, std::size_t expected_rows,
                         std::vector<std::size_t>* row_ids) {
  RawTable t = parse_csv(text);
  const std::size_t d = schema.encoded_width();
  if (t.header.size() != d + 2) {
    throw FormatError(what + ": expected " + std::to_string(d + 2) + " columns, found " +
                      std::to_string(t.header.size()));
  }
  if (t.rows.size() != expected_rows) {
    throw FormatError(what + ": expected " + std::to_string(expected_rows) + " rows, found " +
                      std::to_string(t.rows.size()) + " (truncated?)");
  }
  Dataset ds;
  ds.schema = std::move(schema);
  ds.stats = std::move(stats);
  ds.features = Matrix(t.rows.size(), d);
  ds.labels.resize(t.rows.size());
  if (row_ids) row_ids->clear();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    if (row_ids) row_ids->push_back(static_cast<std::size_t>(parse_double(row[0])));
    for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = parse_double(row[j + 1]);
    ds.labels[i] = parse_double(row[d + 1]);
  }
  return ds;
}

void check_version(const json& j, const std::filesystem::path& p) {
  if (!j.contains("schema-version") || j.at("schema-version").get<int>() != kSchemaVersion) {
    throw FormatError(p.string() + ": unsupported schema-version (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw NumericError("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("malformed number '" + std::string(s) + "'");
  }
  return v;
}

json to_json(const Schema& s) {
  json cols = json::array();
  for (const auto& c : s.columns) {
    cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}, {"vocabulary", c.vocabulary}});
  }
  return {{"task", to_string(s.task)}, {"columns", cols}};
}

Schema schema_from_json(const json& j) {
  try {
    Schema s;
    s.task = parse_task(j.at("task").get<std::string>());
    for (const auto& c : j.at("columns")) {
      ColumnSpec spec;
      spec.name = c.at("name").get<std::string>();
      spec.kind = parse_kind(c.at("kind").get<std::string>());
      spec.vocabulary = c.at("vocabulary").get<std::vector<std::string>>();
      s.columns.push_back(std::move(spec));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("schema: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
}

json to_json(const FeatureStats& s) {
  json cols = json::array();
  for (const auto& c : s.columns) {
    cols.push_back({{"mean", c.mean}, {"std", c.std}, {"median", c.median}});
  }
  return cols;
}

FeatureStats stats_from_json(const json& j) {
  try {
    FeatureStats s;
    for (const auto& c : j) {
      s.columns.push_back({c.at("mean").get<double>(), c.at("std").get<double>(),
                           c.at("median").get<double>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("stats: ") + e.what());
  }
}

json to_json(const Head& h) {
  return {{"kind", to_string(h.kind)},
          {"input_dim", h.input_dim},
          {"classes", h.classes},
          {"rows", h.weights.rows()},
          {"cols", h.weights.cols()},
          {"weights", h.weights.data()},
          {"bias", h.bias}};
}

Head head_from_json(const json& j) {
  try {
    Head h;
    h.kind = parse_head_kind(j.at("kind").get<std::string>());
    h.input_dim = j.at("input_dim").get<std::size_t>();
    h.classes = j.at("classes").get<std::size_t>();
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != rows * cols || rows != h.input_dim) {
      throw FormatError("head: weight shape does not match input_dim");
    }
    h.weights = Matrix(rows, cols, w);
    h.bias = j.at("bias").get<std::vector<double>>();
    if (h.bias.size() != cols) throw FormatError("head: bias length does not match weights");
    return h;
  } catch (const json::exception& e) {
    throw FormatError(std::string("head: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("head: ") + e.what());
  }
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const json& j, const std::filesystem::path& path) {
  write_text(j.dump(2) + "\n", path);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                  std::span<const std::size_t> row_ids) {
  const std::string csv = dataset_csv(ds, row_ids);
  write_text(csv, dir / "data.csv");
  write_json({{"schema-version", kSchemaVersion},
              {"rows", ds.n()},
              {"schema", to_json(ds.schema)},
              {"stats", to_json(ds.stats)},
              {"checksum", checksum(csv)}},
             dir / "dataset.json");
}

Dataset load_dataset(const std::filesystem::path& dir, std::vector<std::size_t>* row_ids) {
  const json meta = read_json(dir / "dataset.json");
  check_version(meta, dir / "dataset.json");
  const std::string csv = read_file(dir / "data.csv");
  if (checksum(csv) != meta.value("checksum", "")) {
    throw FormatError((dir / "data.csv").string() + ": checksum mismatch (truncated or modified)");
  }
  return dataset_from_csv(csv, (dir / "data.csv").string(), schema_from_json(meta.at("schema")),
                          stats_from_json(meta.at("stats")), meta.at("rows").get<std::size_t>(),
                          row_ids);
}

void save_split(const SplitPair& pair, const std::filesystem::path& dir) {
  const std::string in_csv = dataset_csv(pair.d_in, pair.in_rows);
  const std::string ood_csv = dataset_csv(pair.d_ood, pair.ood_rows);
  write_text(in_csv, dir / "in.csv");
  write_text(ood_csv, dir / "ood.csv");
  write_json({{"schema-version", kSchemaVersion},
              {"threshold", pair.threshold},
              {"detector", pair.detector},
              {"norm", to_string(pair.norm)},
              {"seed", pair.seed},
              {"m", pair.m()},
              {"n", pair.n()},
              {"anomalous", pair.anomalous()},
              {"schema", to_json(pair.d_in.schema)},
              {"stats", to_json(pair.d_in.stats)},
              {"checksums", {{"in", checksum(in_csv)}, {"ood", checksum(ood_csv)}}}},
             dir / "split.json");
}

SplitPair load_split(const std::filesystem::path& dir) {
  const json meta = read_json(dir / "split.json");
  check_version(meta, dir / "split.json");
  try {
    const std::string in_csv = read_file(dir / "in.csv");
    const std::string ood_csv = read_file(dir / "ood.csv");
    const auto& sums = meta.at("checksums");
    if (checksum(in_csv) != sums.at("in").get<std::string>() ||
        checksum(ood_csv) != sums.at("ood").get<std::string>()) {
      throw FormatError(dir.string() + ": split csv checksum mismatch (truncated or modified)");
    }
    const Schema schema = schema_from_json(meta.at("schema"));
    const FeatureStats stats = stats_from_json(meta.at("stats"));
    SplitPair p;
    p.d_in = dataset_from_csv(in_csv, "in.csv", schema, stats, meta.at("m").get<std::size_t>(),
                              &p.in_rows);
    p.d_ood = dataset_from_csv(ood_csv, "ood.csv", schema, stats,
                               meta.at("n").get<std::size_t>(), &p.ood_rows);
    p.threshold = meta.at("threshold").get<double>();
    p.detector = meta.at("detector").get<std::string>();
    p.norm = parse_norm(meta.at("norm").get<std::string>());
    p.seed = meta.at("seed").get<std::uint64_t>();
    return p;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
}

}  // namespace tcl

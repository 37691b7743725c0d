#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcl/data.hpp"
#include "tcl/heads.hpp"
#include "json.hpp"

namespace tcl {

inline constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const Schema& s);
Schema schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureStats& s);
FeatureStats stats_from_json(const nlohmann::json& j);

// Shortest round-trip decimal representation of a double.
std::string format_double(double x);
double parse_double(std::string_view s);

// Directory layout: data.csv (row_id, encoded features, label) + dataset.json.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                  std::span<const std::size_t> row_ids = {});
Dataset load_dataset(const std::filesystem::path& dir,
                     std::vector<std::size_t>* row_ids = nullptr);

// Directory layout: in.csv, ood.csv, split.json. Round trip is bit-exact.
void save_split(const SplitPair& pair, const std::filesystem::path& dir);
SplitPair load_split(const std::filesystem::path& dir);

nlohmann::json to_json(const Head& h);
Head head_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace tcl

#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "opsdann/data/series.hpp"

namespace opsdann::data {

/// Per-unit facts that the CSV rows cannot carry.
struct UnitMetadata {
  int fault_onset_cycle = 0;
  int eol_cycle = 0;
};

/// Sidecar next to a CSV file (`<csv>.meta.json`):
///   {"sample_rate_hz": 1.0,
///    "units": {"<unit_id>": {"fault_onset_cycle": int, "eol_cycle": int}, ...},
///    "generator": {...}}            // optional, free-form
struct SeriesMetadata {
  double sample_rate_hz = 1.0;
  std::map<std::string, UnitMetadata> units;
  nlohmann::json generator;
};

std::filesystem::path metadata_path(const std::filesystem::path& csv_path);
SeriesMetadata read_metadata(const std::filesystem::path& path);
void write_metadata(const std::filesystem::path& path, const SeriesMetadata& meta);

/// Parses the CSV schema: header row with unit_id, cycle and the 18 channel names
/// (any column order, no extra columns), one row per timestep. Rows are grouped by
/// unit_id in order of first appearance. Errors name the row and column.
///
/// Without metadata the unit spans its own first..last cycle at 1 Hz.
std::vector<MultivariateSeries> parse_csv(std::istream& in, const SeriesMetadata* meta = nullptr);

/// Reads the CSV and, if present, its metadata sidecar.
std::vector<MultivariateSeries> load_csv(const std::filesystem::path& path);

/// Writes rows in schema order with round-trip precision, plus the metadata sidecar.
void write_csv(const std::filesystem::path& path, const std::vector<MultivariateSeries>& units,
               const nlohmann::json& generator = {});

}  // namespace opsdann::data

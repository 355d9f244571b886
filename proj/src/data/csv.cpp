#include "opsdann/data/csv.hpp"

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

#include "opsdann/error.hpp"

namespace opsdann::data {

namespace {

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t begin = 0;
  while (true) {
    const auto comma = line.find(',', begin);
    auto cell = line.substr(begin, comma == std::string_view::npos ? std::string_view::npos : comma - begin);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    begin = comma + 1;
  }
  return cells;
}

template <typename T>
std::optional<T> parse_number(std::string_view cell) {
  T value{};
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || end != cell.data() + cell.size()) return std::nullopt;
  return value;
}

std::string context(std::size_t row, std::string_view column) {
  return "row " + std::to_string(row) + ", column '" + std::string(column) + "'";
}

}  // namespace

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  return std::filesystem::path(csv_path.string() + ".meta.json");
}

SeriesMetadata read_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  SeriesMetadata meta;
  try {
    meta.sample_rate_hz = doc.value("sample_rate_hz", 1.0);
    if (doc.contains("units")) {
      for (const auto& [id, unit] : doc.at("units").items()) {
        meta.units[id] = {unit.at("fault_onset_cycle").get<int>(), unit.at("eol_cycle").get<int>()};
      }
    }
    if (doc.contains("generator")) meta.generator = doc.at("generator");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return meta;
}

void write_metadata(const std::filesystem::path& path, const SeriesMetadata& meta) {
  nlohmann::ordered_json doc;
  doc["sample_rate_hz"] = meta.sample_rate_hz;
  nlohmann::ordered_json units = nlohmann::ordered_json::object();
  for (const auto& [id, unit] : meta.units) {
    units[id] = {{"fault_onset_cycle", unit.fault_onset_cycle}, {"eol_cycle", unit.eol_cycle}};
  }
  doc["units"] = units;
  if (!meta.generator.is_null()) doc["generator"] = nlohmann::ordered_json::parse(meta.generator.dump());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

std::vector<MultivariateSeries> parse_csv(std::istream& in, const SeriesMetadata* meta) {
  std::string line;
  if (!std::getline(in, line) || split_row(line).size() <= 1) {
    throw FormatError("CSV is empty or has no header row");
  }
  const auto header = split_row(line);
  std::optional<std::size_t> unit_col, cycle_col;
  std::array<std::optional<std::size_t>, kChannels> channel_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = header[i];
    if (name == "unit_id") {
      unit_col = i;
      continue;
    }
    if (name == "cycle") {
      cycle_col = i;
      continue;
    }
    bool known = false;
    for (std::size_t c = 0; c < kChannels; ++c) {
      if (name == kChannelNames[c]) {
        if (channel_col[c]) throw FormatError("duplicate column '" + std::string(name) + "'");
        channel_col[c] = i;
        known = true;
      }
    }
    if (!known) throw FormatError("unknown column '" + std::string(name) + "' in header");
  }
  if (!unit_col) throw FormatError("missing column 'unit_id'");
  if (!cycle_col) throw FormatError("missing column 'cycle'");
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (!channel_col[c]) throw FormatError("missing column '" + std::string(kChannelNames[c]) + "'");
  }

  struct Rows {
    std::vector<int> cycles;
    std::array<std::vector<double>, kChannels> channels;
  };
  std::vector<std::string> order;
  std::map<std::string, Rows> by_unit;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw FormatError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                        " cells, found " + std::to_string(cells.size()));
    }
    const std::string unit(cells[*unit_col]);
    if (unit.empty()) throw FormatError(context(row, "unit_id") + ": empty unit id");
    auto [it, inserted] = by_unit.try_emplace(unit);
    if (inserted) order.push_back(unit);
    const auto cycle = parse_number<int>(cells[*cycle_col]);
    if (!cycle) throw FormatError(context(row, "cycle") + ": not an integer: '" + std::string(cells[*cycle_col]) + "'");
    it->second.cycles.push_back(*cycle);
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto cell = cells[*channel_col[c]];
      const auto value = parse_number<double>(cell);
      if (!value) {
        throw FormatError(context(row, kChannelNames[c]) + ": not a number: '" + std::string(cell) + "'");
      }
      it->second.channels[c].push_back(*value);
    }
  }
  if (order.empty()) throw FormatError("CSV has a header but no data rows");

  std::vector<MultivariateSeries> result;
  for (const auto& id : order) {
    auto& rows = by_unit[id];
    MultivariateSeries s;
    s.unit_id = id;
    s.length = rows.cycles.size();
    s.values.reserve(kChannels * s.length);
    for (const auto& channel : rows.channels) s.values.insert(s.values.end(), channel.begin(), channel.end());
    s.cycle_index = std::move(rows.cycles);
    s.fault_onset_cycle = s.cycle_index.front();
    s.eol_cycle = s.cycle_index.back();
    if (meta) {
      s.sample_rate_hz = meta->sample_rate_hz;
      if (auto found = meta->units.find(id); found != meta->units.end()) {
        s.fault_onset_cycle = found->second.fault_onset_cycle;
        s.eol_cycle = found->second.eol_cycle;
      }
    }
    if (s.fault_onset_cycle == s.eol_cycle) ++s.eol_cycle;  // single-cycle unit without metadata
    s.validate();
    result.push_back(std::move(s));
  }
  return result;
}

std::vector<MultivariateSeries> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  const auto sidecar = metadata_path(path);
  if (std::filesystem::exists(sidecar)) {
    const auto meta = read_metadata(sidecar);
    return parse_csv(in, &meta);
  }
  return parse_csv(in);
}

void write_csv(const std::filesystem::path& path, const std::vector<MultivariateSeries>& units,
               const nlohmann::json& generator) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "unit_id,cycle";
  for (auto name : kChannelNames) out << ',' << name;
  out << '\n';
  char buf[32];
  SeriesMetadata meta;
  meta.generator = generator;
  for (const auto& s : units) {
    s.validate();
    meta.sample_rate_hz = s.sample_rate_hz;
    meta.units[s.unit_id] = {s.fault_onset_cycle, s.eol_cycle};
    for (std::size_t t = 0; t < s.length; ++t) {
      out << s.unit_id << ',' << s.cycle_index[t];
      for (std::size_t c = 0; c < kChannels; ++c) {
        const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), s.at(c, t));
        out << ',' << std::string_view(buf, end - buf);
      }
      out << '\n';
    }
  }
  if (!out) throw Error("failed writing " + path.string());
  write_metadata(metadata_path(path), meta);
}

}  // namespace opsdann::data

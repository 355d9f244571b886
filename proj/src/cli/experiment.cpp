#include "opsdann/cli/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "opsdann/data/csv.hpp"
#include "opsdann/error.hpp"

namespace opsdann::cli {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Tasks

std::string_view task_name(Task task) {
  switch (task) {
    case Task::s2m:
      return "S2M";
    case Task::s2l:
      return "S2L";
    case Task::m2l:
      return "M2L";
    case Task::custom:
      return "custom";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  std::string s;
  for (std::size_t i = 0; i < name.size(); ++i) {
    // accept "->" and the UTF-8 arrow as separators
    if (name.substr(i, 2) == "->") {
      s += '2', ++i;
    } else if (name.substr(i, 3) == "\xE2\x86\x92") {
      s += '2', i += 2;
    } else {
      s += static_cast<char>(std::toupper(static_cast<unsigned char>(name[i])));
    }
  }
  if (s == "S2M") return Task::s2m;
  if (s == "S2L") return Task::s2l;
  if (s == "M2L") return Task::m2l;
  if (s == "CUSTOM") return Task::custom;
  throw ConfigError("task: unknown task '" + std::string(name) + "' (S2M, S2L, M2L, custom)");
}

synth::FlightClass source_class(Task task) {
  switch (task) {
    case Task::s2m:
    case Task::s2l:
      return synth::FlightClass::short_haul;
    case Task::m2l:
      return synth::FlightClass::medium_haul;
    case Task::custom:
      break;
  }
  throw ConfigError("task: custom tasks have no flight class");
}

synth::FlightClass target_class(Task task) {
  switch (task) {
    case Task::s2m:
      return synth::FlightClass::medium_haul;
    case Task::s2l:
    case Task::m2l:
      return synth::FlightClass::long_haul;
    case Task::custom:
      break;
  }
  throw ConfigError("task: custom tasks have no flight class");
}

da::TrainConfig tuned_train_config(da::Method method) {
  // alpha0 0.01 won for every searched method; only the trade-offs differ
  da::TrainConfig c;
  c.method = method;
  switch (method) {
    case da::Method::dann:
    case da::Method::ops_dann_hard:
      c.lambda_d = 0.1;
      break;
    case da::Method::ops_dann_soft:
      c.lambda_d = 0.1;
      c.lambda_z = 0.1;
      break;
    case da::Method::multiclass_ops_dann:
      c.lambda_d = 0.3;
      break;
    case da::Method::source_only:
    case da::Method::adabn:
    case da::Method::mk_mmd:  // not searched; base settings
      break;
  }
  return c;
}

ExperimentConfig make_config(Task task, da::Method method) {
  ExperimentConfig c;
  c.task = task;
  c.train = tuned_train_config(method);
  return c;
}

int default_epochs(Task task, da::Method method) {
  const bool baseline = method == da::Method::source_only || method == da::Method::adabn;
  switch (task) {
    case Task::s2m:
      return baseline ? 40 : 25;
    case Task::s2l:
      return baseline ? 40 : 15;
    case Task::m2l:
      return baseline ? 20 : 15;
    case Task::custom:
      return baseline ? 40 : 15;
  }
  return 15;
}

int effective_epochs(const ExperimentConfig& config) {
  return config.epochs_explicit ? config.train.epochs : default_epochs(config.task, config.train.method);
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

template <typename T>
T field(const json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

[[noreturn]] void unknown_key(const std::string& path, const std::string& key) {
  throw ConfigError((path.empty() ? key : path + "." + key) + ": unknown key");
}

template <typename Fn>
auto prefixed(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json to_json(const eval::PadConfig& c) {
  return {{"hidden", c.hidden},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"train_fraction", c.train_fraction},
          {"repeats", c.repeats},
          {"min_per_domain", c.min_per_domain}};
}

eval::PadConfig pad_from_json(const json& j) {
  eval::PadConfig c;
  expect_object(j, "eval.pad");
  for (const auto& [key, v] : j.items()) {
    const std::string path = "eval.pad." + key;
    if (key == "hidden") {
      c.hidden = field<std::size_t>(v, path);
    } else if (key == "epochs") {
      c.epochs = field<int>(v, path);
    } else if (key == "learning_rate") {
      c.learning_rate = field<double>(v, path);
    } else if (key == "momentum") {
      c.momentum = field<double>(v, path);
    } else if (key == "batch_size") {
      c.batch_size = field<std::size_t>(v, path);
    } else if (key == "train_fraction") {
      c.train_fraction = field<double>(v, path);
    } else if (key == "repeats") {
      c.repeats = field<int>(v, path);
    } else if (key == "min_per_domain") {
      c.min_per_domain = field<std::size_t>(v, path);
    } else {
      unknown_key("eval.pad", key);
    }
  }
  return c;
}

DataConfig data_from_json(const json& j) {
  DataConfig d;
  expect_object(j, "data");
  for (const auto& [key, v] : j.items()) {
    const std::string path = "data." + key;
    if (key == "synthetic") {
      d.synthetic = field<bool>(v, path);
    } else if (key == "seed") {
      d.seed = field<std::uint64_t>(v, path);
    } else if (key == "units_per_class") {
      d.units_per_class = field<std::size_t>(v, path);
    } else if (key == "degradation") {
      d.degradation = prefixed(path, [&] { return synth::degradation_spec_from_json(v); });
    } else if (key == "flights") {
      expect_object(v, path);
      for (const auto& [cls, spec] : v.items()) {
        const auto parsed = prefixed(path, [&] { return synth::parse_class(cls); });
        prefixed(path + "." + cls, [&] { return synth::flight_spec_from_json(parsed, spec); });
      }
      d.flight_overrides = v;
    } else if (key == "source_csv") {
      d.source_csv = field<std::string>(v, path);
    } else if (key == "target_csv") {
      d.target_csv = field<std::string>(v, path);
    } else if (key == "train_stride") {
      d.train_stride = field<std::size_t>(v, path);
    } else if (key == "eval_stride") {
      d.eval_stride = field<std::size_t>(v, path);
    } else {
      unknown_key("data", key);
    }
  }
  return d;
}

EvalConfig eval_from_json(const json& j) {
  EvalConfig e;
  expect_object(j, "eval");
  for (const auto& [key, v] : j.items()) {
    const std::string path = "eval." + key;
    if (key == "held_out_units") {
      e.held_out_units = field<std::size_t>(v, path);
    } else if (key == "pad") {
      e.pad = pad_from_json(v);
    } else if (key == "pad_samples") {
      e.pad_samples = field<std::size_t>(v, path);
    } else if (key == "pca_samples") {
      e.pca_samples = field<std::size_t>(v, path);
    } else if (key == "pad_enabled") {
      e.pad_enabled = field<bool>(v, path);
    } else {
      unknown_key("eval", key);
    }
  }
  return e;
}

void validate(const ExperimentConfig& c) {
  const auto& d = c.data;
  if (d.synthetic) {
    if (c.task == Task::custom) throw ConfigError("task: custom tasks need data.synthetic = false and CSV paths");
    if (d.units_per_class < 1) throw ConfigError("data.units_per_class must be at least 1");
  } else {
    if (d.source_csv.empty()) throw ConfigError("data.source_csv: required when data.synthetic is false");
    if (d.target_csv.empty()) throw ConfigError("data.target_csv: required when data.synthetic is false");
  }
  if (d.train_stride < 1) throw ConfigError("data.train_stride must be at least 1");
  if (d.eval_stride < 1) throw ConfigError("data.eval_stride must be at least 1");
  if (c.seeds.empty()) throw ConfigError("seeds: at least one seed required");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    throw ConfigError("seeds: duplicates");
  }
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (c.eval.pad_enabled && c.eval.pad_samples < c.eval.pad.min_per_domain) {
    throw ConfigError("eval.pad_samples must be at least eval.pad.min_per_domain");
  }
  if (c.eval.pca_samples < 2) throw ConfigError("eval.pca_samples must be at least 2");
  if (d.synthetic && c.eval.held_out_units >= d.units_per_class) {
    throw ConfigError("eval.held_out_units must leave at least one target unit for training");
  }
  if (c.epochs_explicit && c.train.epochs < 1) throw ConfigError("train.epochs must be at least 1");
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json train = da::to_json(c.train);
  train.erase("seed");
  train["epochs"] = c.epochs_explicit ? json(c.train.epochs) : json(nullptr);
  json data = {{"synthetic", c.data.synthetic},
               {"seed", c.data.seed},
               {"units_per_class", c.data.units_per_class},
               {"degradation", synth::to_json(c.data.degradation)},
               {"flights", c.data.flight_overrides},
               {"source_csv", c.data.source_csv.generic_string()},
               {"target_csv", c.data.target_csv.generic_string()},
               {"train_stride", c.data.train_stride},
               {"eval_stride", c.data.eval_stride}};
  json ev = {{"held_out_units", c.eval.held_out_units},
             {"pad_enabled", c.eval.pad_enabled},
             {"pad_samples", c.eval.pad_samples},
             {"pca_samples", c.eval.pca_samples},
             {"pad", to_json(c.eval.pad)}};
  return {{"task", task_name(c.task)}, {"data", data},        {"train", train},
          {"eval", ev},                {"seeds", c.seeds},    {"output", c.output.generic_string()},
          {"jobs", c.jobs}};
}

ExperimentConfig config_from_json(const json& in) {
  const json& j = in.is_object() && in.contains("config") && in.contains("config_hash") ? in.at("config") : in;
  expect_object(j, "config");
  ExperimentConfig c;
  json train = json::object();
  for (const auto& [key, v] : j.items()) {
    if (key == "task") {
      c.task = parse_task(field<std::string>(v, key));
    } else if (key == "data") {
      c.data = data_from_json(v);
    } else if (key == "train") {
      expect_object(v, "train");
      train = v;
    } else if (key == "eval") {
      c.eval = eval_from_json(v);
    } else if (key == "seeds") {
      c.seeds = v.is_string() ? prefixed("seeds", [&] { return parse_seeds(v.get<std::string>()); })
                              : field<std::vector<std::uint64_t>>(v, key);
    } else if (key == "output") {
      c.output = field<std::string>(v, key);
    } else if (key == "jobs") {
      c.jobs = field<int>(v, key);
    } else {
      unknown_key("", key);
    }
  }
  if (train.contains("seed")) throw ConfigError("train.seed: use the top-level seeds list");
  std::optional<int> epochs;
  if (train.contains("epochs")) {
    if (!train["epochs"].is_null()) epochs = field<int>(train["epochs"], "train.epochs");
    train.erase("epochs");
  }
  da::Method method = c.train.method;
  if (train.contains("method")) {
    method = prefixed("train", [&] { return da::parse_method(field<std::string>(train["method"], "train.method")); });
  }
  c.train = da::train_config_from_json(train, tuned_train_config(method));
  if (epochs) c.train.epochs = *epochs, c.epochs_explicit = true;
  validate(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  auto number = [&](const std::string& s) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
      throw ConfigError("seeds: '" + text + "' is not a seed list (e.g. 0..4 or 1,3,7)");
    }
    return static_cast<std::uint64_t>(std::stoull(s));
  };
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = number(text.substr(0, dots)), hi = number(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("seeds: empty range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number(item));
  if (out.empty()) throw ConfigError("seeds: empty list");
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

fs::path output_root() {
  const char* env = std::getenv("OPSDANN_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path resolve_output(const ExperimentConfig& c) {
  fs::path out = c.output;
  if (out.empty()) out = std::string(task_name(c.task)) + "-" + std::string(da::method_name(c.train.method));
  return out.is_absolute() ? out : output_root() / out;
}

// ---------------------------------------------------------------------------
// Data

namespace {

template <typename T>
std::uint64_t hash_values(std::span<const T> values, std::uint64_t h) {
  return fnv1a({reinterpret_cast<const char*>(values.data()), values.size_bytes()}, h);
}

std::uint64_t hash_units(const std::vector<data::PreparedUnit>& units, std::uint64_t h) {
  for (const auto& u : units) {
    h = fnv1a(u.series.unit_id, h);
    h = hash_values(std::span<const double>(u.series.values), h);
    h = hash_values(std::span<const int>(u.series.cycle_index), h);
    h = hash_values(std::span<const double>(u.rul), h);
    h = hash_values(std::span<const data::Phase>(u.phase), h);
    h = hash_values(std::span<const double>(&u.rul_span_cycles, 1), h);
  }
  return h;
}

std::vector<data::MultivariateSeries> synthetic_domain(const ExperimentConfig& c, synth::FlightClass cls) {
  const auto name = std::string(synth::class_name(cls));
  const json overrides = c.data.flight_overrides.contains(name) ? c.data.flight_overrides.at(name) : json();
  const auto fleet = synth::gen_fleet(synth::flight_spec_from_json(cls, overrides), c.data.degradation,
                                      c.data.units_per_class, c.data.seed);
  std::vector<data::MultivariateSeries> out;
  for (const auto& u : fleet.units) out.push_back(u.series);
  return out;
}

std::vector<data::PreparedUnit> prepare_all(const std::vector<data::MultivariateSeries>& raw) {
  std::vector<data::PreparedUnit> out;
  out.reserve(raw.size());
  for (const auto& s : raw) out.push_back(data::prepare_unit(s));
  return out;
}

}  // namespace

TaskData load_task_data(const ExperimentConfig& c) {
  validate(c);
  std::vector<data::MultivariateSeries> raw_source, raw_target;
  if (c.data.synthetic) {
    raw_source = synthetic_domain(c, source_class(c.task));
    raw_target = synthetic_domain(c, target_class(c.task));
  } else {
    raw_source = data::load_csv(c.data.source_csv);
    raw_target = data::load_csv(c.data.target_csv);
  }
  if (c.eval.held_out_units >= raw_target.size()) {
    throw ConfigError("eval.held_out_units must leave at least one target unit for training");
  }

  TaskData d;
  d.source_units = prepare_all(raw_source);
  d.target_units = prepare_all(raw_target);
  std::vector<data::MultivariateSeries> fit;
  for (const auto& u : d.source_units) fit.push_back(u.series);
  d.scaler = data::fit_scaler(fit);
  for (auto& u : d.source_units) data::apply_scaler(u.series, d.scaler);
  for (auto& u : d.target_units) data::apply_scaler(u.series, d.scaler);

  const std::size_t k = c.eval.held_out_units;
  const std::vector<data::PreparedUnit> train_units(d.target_units.begin(), d.target_units.end() - static_cast<std::ptrdiff_t>(k));
  const std::vector<data::PreparedUnit> eval_units =
      k == 0 ? d.target_units : std::vector<data::PreparedUnit>(d.target_units.end() - static_cast<std::ptrdiff_t>(k), d.target_units.end());

  d.source = data::WindowDataset(d.source_units, data::Domain::source, true, data::kWindowLength, c.data.train_stride);
  d.target_train = data::WindowDataset(train_units, data::Domain::target, false, data::kWindowLength, c.data.train_stride);
  d.target_eval = data::WindowDataset(eval_units, data::Domain::target, true, data::kWindowLength, c.data.eval_stride);
  if (d.source.empty() || d.target_train.empty() || d.target_eval.empty()) {
    throw Error("load_task_data: a domain yields no windows");
  }

  std::uint64_t h = fnv1a("opsdann-data-v1");
  h = hash_units(d.source_units, h);
  h = hash_units(d.target_units, h);
  const std::size_t layout[] = {c.data.train_stride, c.data.eval_stride, k};
  d.hash = hash_values(std::span<const std::size_t>(layout), h);
  return d;
}

void write_prepared(const TaskData& d, const fs::path& dir) {
  fs::create_directories(dir);
  json scaler = {{"fitted_on", d.scaler.fitted_on}, {"channels", json::array()}};
  for (std::size_t ch = 0; ch < d.scaler.min.size(); ++ch) {
    scaler["channels"].push_back({{"name", data::kChannelNames[ch]}, {"min", d.scaler.min[ch]}, {"max", d.scaler.max[ch]}});
  }
  std::ofstream(dir / "scaler.json") << scaler.dump(2) << '\n';
  d.source.to_container().save(dir / "source.bin");
  d.target_train.to_container().save(dir / "target.bin");
  d.target_eval.to_container().save(dir / "target_eval.bin");
}

// ---------------------------------------------------------------------------
// Runs

std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t count) {
  const std::size_t m = std::min(n, count);
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i * n / m;
  return idx;
}

EmbeddingSample sample_embeddings(const da::ModelBundle& model, const data::WindowDataset& source,
                                  const data::WindowDataset& target, std::size_t per_domain) {
  EmbeddingSample s;
  const auto si = evenly_spaced(source.size(), per_domain), ti = evenly_spaced(target.size(), per_domain);
  s.source = da::embed(model, source, si);
  s.target = da::embed(model, target, ti);
  for (auto i : si) s.domains.push_back(data::Domain::source), s.phases.push_back(source.phase(i));
  for (auto i : ti) s.domains.push_back(data::Domain::target), s.phases.push_back(target.phase(i));
  return s;
}

Projection project(const EmbeddingSample& s) {
  const std::size_t ns = s.source.dim(0), nt = s.target.dim(0), d = s.source.dim(1);
  nn::Tensor pooled({ns + nt, d});
  std::copy_n(s.source.data(), ns * d, pooled.data());
  std::copy_n(s.target.data(), nt * d, pooled.data() + ns * d);
  Projection p;
  p.pca = eval::pca_project(pooled, 2);
  std::vector<int> labels;
  for (auto ph : s.phases) labels.push_back(static_cast<int>(ph));
  const std::set<int> distinct(labels.begin(), labels.end());
  p.phase_silhouette = distinct.size() < 2 ? 0.0 : eval::silhouette(p.pca.projected, labels);
  return p;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

fs::path seed_directory(const fs::path& run_dir, std::uint64_t seed) { return run_dir / ("seed-" + std::to_string(seed)); }

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> median_of(const std::vector<std::optional<double>>& values) {
  std::vector<double> present;
  for (const auto& v : values) {
    if (v) present.push_back(*v);
  }
  if (present.empty()) return std::nullopt;
  return quantile(present, 0.5);
}

}  // namespace

SeedResult run_seed(const ExperimentConfig& c, const TaskData& d, std::uint64_t seed, const fs::path& seed_dir) {
  if (d.target_train.labeled()) throw Error("run: target training windows must not carry labels");
  da::TrainConfig tc = c.train;
  tc.seed = seed;
  tc.epochs = effective_epochs(c);
  const auto trained = da::train(tc, d.source, &d.target_train);

  SeedResult r;
  r.seed = seed;
  r.report = eval::evaluate_predictions(d.target_eval, da::predict_rul(trained.model, d.target_eval));

  const std::size_t per_domain = std::max(c.eval.pca_samples, c.eval.pad_enabled ? c.eval.pad_samples : 0);
  const auto sample = sample_embeddings(trained.model, d.source, d.target_eval, per_domain);
  if (c.eval.pad_enabled) {
    auto pc = c.eval.pad;
    pc.seed = seed;
    const auto sub = [&](const nn::Tensor& t) {
      const auto idx = evenly_spaced(t.dim(0), c.eval.pad_samples);
      nn::Tensor out({idx.size(), t.dim(1)});
      for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(t.data() + idx[i] * t.dim(1), t.dim(1), out.data() + i * t.dim(1));
      return out;
    };
    r.report.pad = eval::proxy_a_distance(sub(sample.source), sub(sample.target), pc).pad;
  }
  EmbeddingSample pca_sample;
  {
    const auto si = evenly_spaced(sample.source.dim(0), c.eval.pca_samples);
    const auto ti = evenly_spaced(sample.target.dim(0), c.eval.pca_samples);
    const std::size_t w = sample.source.dim(1);
    pca_sample.source = nn::Tensor({si.size(), w});
    pca_sample.target = nn::Tensor({ti.size(), w});
    for (std::size_t i = 0; i < si.size(); ++i) {
      std::copy_n(sample.source.data() + si[i] * w, w, pca_sample.source.data() + i * w);
      pca_sample.domains.push_back(data::Domain::source), pca_sample.phases.push_back(sample.phases[si[i]]);
    }
    const std::size_t ns = sample.source.dim(0);
    for (std::size_t i = 0; i < ti.size(); ++i) {
      std::copy_n(sample.target.data() + ti[i] * w, w, pca_sample.target.data() + i * w);
      pca_sample.domains.push_back(data::Domain::target), pca_sample.phases.push_back(sample.phases[ns + ti[i]]);
    }
  }
  const auto projection = project(pca_sample);
  r.report.phase_silhouette = projection.phase_silhouette;

  fs::create_directories(seed_dir);
  trained.model.to_container().save(seed_dir / "model.bin");
  std::ostringstream trace, preds, proj;
  da::write_trace_csv(trace, trained.epochs);
  eval::write_traces_csv(preds, r.report.traces);
  eval::write_projection_csv(proj, projection.pca, pca_sample.domains, pca_sample.phases);
  write_file(seed_dir / "trace.csv", trace.str());
  write_file(seed_dir / "predictions.csv", preds.str());
  write_file(seed_dir / "projection.csv", proj.str());
  write_file(seed_dir / "metrics.json", eval::to_json(r.report).dump(2) + "\n");
  return r;
}

RunSummary run_experiment(const ExperimentConfig& c) {
  validate(c);
  const TaskData d = load_task_data(c);
  RunSummary summary;
  summary.directory = resolve_output(c);
  fs::create_directories(summary.directory);

  summary.seeds.resize(c.seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < c.seeds.size(); i = next++) {
      try {
        summary.seeds[i] = run_seed(c, d, c.seeds[i], seed_directory(summary.directory, c.seeds[i]));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = c.seeds.size();
      }
    }
  };
  const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(c.jobs), c.seeds.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const std::string method(da::method_name(c.train.method));
  std::ostringstream metrics;
  eval::write_metrics_header(metrics);
  for (const auto& s : summary.seeds) eval::write_metrics_row(metrics, method, s.seed, s.report);
  write_file(summary.directory / "metrics.csv", metrics.str());

  json seeds = json::array();
  std::vector<double> rmse, rmse_norm, nasa;
  std::vector<std::optional<double>> pads, sils;
  for (const auto& s : summary.seeds) {
    json row = eval::to_json(s.report);
    row["seed"] = s.seed;
    seeds.push_back(row);
    rmse.push_back(s.report.rmse_cycles), rmse_norm.push_back(s.report.rmse_norm), nasa.push_back(s.report.nasa.mean);
    pads.push_back(s.report.pad), sils.push_back(s.report.phase_silhouette);
  }
  const json sum = {{"task", task_name(c.task)},
                    {"method", method},
                    {"epochs", effective_epochs(c)},
                    {"data_hash", hex64(d.hash)},
                    {"seeds", seeds},
                    {"median",
                     {{"rmse_cycles", quantile(rmse, 0.5)},
                      {"rmse_norm", quantile(rmse_norm, 0.5)},
                      {"nasa_score_mean", quantile(nasa, 0.5)},
                      {"pad", nullable(median_of(pads))},
                      {"phase_silhouette", nullable(median_of(sils))}}}};
  write_file(summary.directory / "summary.json", sum.dump(2) + "\n");

  const json config = to_json(c);
  const json manifest = {{"tool", "opsdann"},
                         {"version", kVersion},
                         {"config", config},
                         {"config_hash", hex64(fnv1a(config.dump()))},
                         {"data_hash", hex64(d.hash)},
                         {"metrics_hash", hex64(fnv1a(metrics.str()))},
                         {"epochs", effective_epochs(c)},
                         {"windows",
                          {{"source", d.source.size()}, {"target_train", d.target_train.size()}, {"target_eval", d.target_eval.size()}}}};
  write_file(summary.directory / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

ExperimentConfig run_config(const fs::path& run_dir) { return load_config(run_dir / "manifest.json"); }

da::ModelBundle load_seed_model(const fs::path& run_dir, const ExperimentConfig& c, std::uint64_t seed) {
  const fs::path path = seed_directory(run_dir, seed) / "model.bin";
  if (!fs::exists(path)) throw Error("no model for seed " + std::to_string(seed) + " in '" + run_dir.string() + "'");
  auto model = da::build_model(c.train.method, seed, c.train.n_phases);
  model.load(nn::Container::load(path));
  return model;
}

// ---------------------------------------------------------------------------
// Comparison

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<CompareRow> compare_runs(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.size() < 2) throw Error("compare: at least two runs required");
  std::vector<CompareRow> rows;
  std::string hash;
  for (const auto& dir : run_dirs) {
    std::ifstream in(dir / "summary.json");
    if (!in) throw Error("compare: no summary.json in '" + dir.string() + "'");
    json s;
    try {
      s = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError("compare: '" + (dir / "summary.json").string() + "': " + e.what());
    }
    const auto h = s.at("data_hash").get<std::string>();
    if (hash.empty()) hash = h;
    if (h != hash) {
      throw Error("compare: data hash of '" + dir.string() + "' (" + h + ") differs from the first run (" + hash + ")");
    }
    CompareRow row;
    row.method = s.at("method").get<std::string>();
    std::vector<double> rmse, nasa;
    std::vector<std::optional<double>> pads, sils;
    for (const auto& seed : s.at("seeds")) {
      rmse.push_back(seed.at("rmse_cycles").get<double>());
      nasa.push_back(seed.at("nasa_score_mean").get<double>());
      pads.push_back(seed.at("pad").is_null() ? std::nullopt : std::optional<double>(seed.at("pad").get<double>()));
      sils.push_back(seed.at("phase_silhouette").is_null() ? std::nullopt
                                                           : std::optional<double>(seed.at("phase_silhouette").get<double>()));
    }
    if (rmse.empty()) throw FormatError("compare: '" + dir.string() + "' has no seeds");
    row.seeds = rmse.size();
    row.rmse_median = quantile(rmse, 0.5), row.rmse_q1 = quantile(rmse, 0.25), row.rmse_q3 = quantile(rmse, 0.75);
    row.nasa_median = quantile(nasa, 0.5), row.nasa_q1 = quantile(nasa, 0.25), row.nasa_q3 = quantile(nasa, 0.75);
    row.pad_median = median_of(pads);
    row.silhouette_median = median_of(sils);
    rows.push_back(row);
  }
  const auto base = std::find_if(rows.begin(), rows.end(), [](const CompareRow& r) { return r.method == "source-only"; });
  if (base != rows.end()) {
    const double ref = base->rmse_median;
    for (auto& r : rows) r.improvement = ref > 0.0 ? 1.0 - r.rmse_median / ref : 0.0;
  }
  return rows;
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  using eval::format_real;
  const auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  out << "method,seeds,rmse_median,rmse_q1,rmse_q3,nasa_median,nasa_q1,nasa_q3,pad_median,silhouette_median,"
         "improvement_vs_source_only\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.seeds << ',' << format_real(r.rmse_median) << ',' << format_real(r.rmse_q1) << ','
        << format_real(r.rmse_q3) << ',' << format_real(r.nasa_median) << ',' << format_real(r.nasa_q1) << ','
        << format_real(r.nasa_q3) << ',' << opt(r.pad_median) << ',' << opt(r.silhouette_median) << ','
        << opt(r.improvement) << '\n';
  }
}

}  // namespace opsdann::cli

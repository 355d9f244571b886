#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "opsdann/cli/experiment.hpp"
#include "opsdann/data/csv.hpp"
#include "opsdann/error.hpp"

using namespace opsdann;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Options shared by run and prep; each one overrides the matching config field.
struct ConfigOptions {
  std::string config_file, manifest_file;
  std::optional<std::string> task, method, seeds, output, source_csv, target_csv;
  std::optional<int> epochs, jobs;
  std::optional<std::size_t> held_out, stride, eval_stride, units;
  std::optional<std::uint64_t> data_seed;
  std::optional<double> lambda_d, lambda_z;
  bool synthetic = false, no_pad = false;
  std::vector<std::string> sets;

  void add(CLI::App* app, bool training) {
    auto* cfg = app->add_option("--config", config_file, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--manifest", manifest_file, "Re-run the config recorded in a manifest.json")
        ->check(CLI::ExistingFile)
        ->excludes(cfg);
    app->add_option("--task", task, "S2M, S2L, M2L or custom");
    app->add_flag("--synthetic", synthetic, "Generate both domains (default unless CSV paths are given)");
    app->add_option("--source-csv", source_csv, "Source-domain CSV (custom data)");
    app->add_option("--target-csv", target_csv, "Target-domain CSV (custom data)");
    app->add_option("--units", units, "Synthetic units per flight class");
    app->add_option("--data-seed", data_seed, "Synthetic fleet seed");
    app->add_option("--stride", stride, "Training window stride");
    app->add_option("--eval-stride", eval_stride, "Evaluation window stride");
    app->add_option("--held-out-units", held_out, "Withhold the last k target units from training and score only them");
    if (training) {
      app->add_option("--method", method, "source-only, dann, ops-dann-hard, ops-dann-soft, multiclass-ops-dann, mk-mmd, adabn");
      app->add_option("--seeds", seeds, "Seed list: 0..4 or 1,3,7");
      app->add_option("--epochs", epochs, "Override the per-task epoch default");
      app->add_option("--lambda-d", lambda_d, "Adversarial / MMD trade-off");
      app->add_option("--lambda-z", lambda_z, "Phase-classifier trade-off");
      app->add_option("--jobs", jobs, "Seeds trained concurrently");
      app->add_flag("--no-pad", no_pad, "Skip the proxy A-distance probe");
    }
    app->add_option("--output,-o", output, "Output directory (relative to $OPSDANN_OUTPUT_ROOT)");
    app->add_option("--set", sets, "Override any config field: path.to.key=json-value")->take_all();
  }

  json build() const {
    json j = json::object();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      j = json::parse(in);
    } else if (!manifest_file.empty()) {
      std::ifstream in(manifest_file);
      j = json::parse(in).at("config");
    }
    if (task) j["task"] = *task;
    if (source_csv || target_csv) j["data"]["synthetic"] = false;
    if (synthetic) j["data"]["synthetic"] = true;
    if (source_csv) j["data"]["source_csv"] = *source_csv;
    if (target_csv) j["data"]["target_csv"] = *target_csv;
    if (units) j["data"]["units_per_class"] = *units;
    if (data_seed) j["data"]["seed"] = *data_seed;
    if (stride) j["data"]["train_stride"] = *stride;
    if (eval_stride) j["data"]["eval_stride"] = *eval_stride;
    if (held_out) j["eval"]["held_out_units"] = *held_out;
    if (no_pad) j["eval"]["pad_enabled"] = false;
    if (method) j["train"]["method"] = *method;
    if (epochs) j["train"]["epochs"] = *epochs;
    if (lambda_d) j["train"]["lambda_d"] = *lambda_d;
    if (lambda_z) j["train"]["lambda_z"] = *lambda_z;
    if (seeds) j["seeds"] = *seeds;
    if (jobs) j["jobs"] = *jobs;
    if (output) j["output"] = *output;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set '" + s + "': expected path=value");
      json value;
      try {
        value = json::parse(s.substr(eq + 1));
      } catch (const json::exception&) {
        value = s.substr(eq + 1);
      }
      std::string pointer = "/" + s.substr(0, eq);
      for (auto& ch : pointer) {
        if (ch == '.') ch = '/';
      }
      j[json::json_pointer(pointer)] = value;
    }
    return j;
  }
};

std::ostream& open_or_stdout(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw Error("cannot write '" + path + "'");
  return file;
}

int cmd_gen(const std::string& cls, std::size_t units, std::uint64_t seed, const std::string& degradation,
            const std::string& out) {
  const auto fc = synth::parse_class(cls);
  json deg;
  if (!degradation.empty()) {
    std::ifstream in(degradation);
    deg = json::parse(in);
  }
  const auto dspec = synth::degradation_spec_from_json(deg);
  const auto fspec = synth::FlightClassSpec::preset(fc);
  const auto fleet = synth::gen_fleet(fspec, dspec, units, seed);
  std::vector<data::MultivariateSeries> series;
  for (const auto& u : fleet.units) series.push_back(u.series);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  data::write_csv(out, series, {{"class", cls}, {"seed", seed}, {"flights", synth::to_json(fspec)}, {"degradation", synth::to_json(dspec)}});
  std::cout << "wrote " << series.size() << " units to " << out << "\n";
  return 0;
}

int cmd_prep(const ConfigOptions& o) {
  const auto config = cli::config_from_json(o.build());
  const auto d = cli::load_task_data(config);
  const fs::path dir = cli::resolve_output(config);
  cli::write_prepared(d, dir);
  std::cout << "source " << d.source.size() << " windows, target " << d.target_train.size() << " (train) / "
            << d.target_eval.size() << " (eval), data hash " << cli::hex64(d.hash) << "\nwrote " << dir.string() << "\n";
  return 0;
}

int cmd_run(const ConfigOptions& o) {
  const auto config = cli::config_from_json(o.build());
  std::cerr << "running " << cli::task_name(config.task) << " " << da::method_name(config.train.method) << ", "
            << config.seeds.size() << " seed(s), " << cli::effective_epochs(config) << " epochs\n";
  const auto summary = cli::run_experiment(config);
  std::ifstream metrics(summary.directory / "metrics.csv");
  std::cout << metrics.rdbuf();
  std::cerr << "wrote " << summary.directory.string() << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  std::ofstream file;
  cli::write_compare_csv(open_or_stdout(out, file), cli::compare_runs(dirs));
  return 0;
}

std::vector<std::uint64_t> seeds_of(const cli::ExperimentConfig& c, const std::string& text) {
  return text.empty() ? c.seeds : cli::parse_seeds(text);
}

int cmd_pad(const std::string& run, const std::string& seeds, const std::string& out) {
  const auto c = cli::run_config(run);
  const auto d = cli::load_task_data(c);
  std::ofstream file;
  auto& os = open_or_stdout(out, file);
  os << "seed,pad,pad_min,pad_max\n";
  for (auto seed : seeds_of(c, seeds)) {
    const auto model = cli::load_seed_model(run, c, seed);
    const auto s = cli::sample_embeddings(model, d.source, d.target_eval, c.eval.pad_samples);
    auto pc = c.eval.pad;
    pc.seed = seed;
    const auto r = eval::proxy_a_distance(s.source, s.target, pc);
    const auto [lo, hi] = std::minmax_element(r.pads.begin(), r.pads.end());
    os << seed << ',' << eval::format_real(r.pad) << ',' << eval::format_real(*lo) << ',' << eval::format_real(*hi) << '\n';
  }
  return 0;
}

int cmd_pca(const std::string& run, std::uint64_t seed, const std::string& out) {
  const auto c = cli::run_config(run);
  const auto d = cli::load_task_data(c);
  const auto model = cli::load_seed_model(run, c, seed);
  const auto p = cli::project(cli::sample_embeddings(model, d.source, d.target_eval, c.eval.pca_samples));
  const auto s = cli::sample_embeddings(model, d.source, d.target_eval, c.eval.pca_samples);
  std::ofstream file;
  eval::write_projection_csv(open_or_stdout(out, file), p.pca, s.domains, s.phases);
  std::cerr << "phase silhouette " << eval::format_real(p.phase_silhouette) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operation-profile-aware domain adaptation for remaining-useful-life prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::kVersion));

  auto* gen = app.add_subcommand("gen", "Generate a synthetic fleet as CSV (plus metadata sidecar)");
  std::string gen_class = "short", gen_degradation, gen_out;
  std::size_t gen_units = 5;
  std::uint64_t gen_seed = 0;
  gen->add_option("--class", gen_class, "short, medium or long")->capture_default_str();
  gen->add_option("--units", gen_units, "Number of units")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Fleet seed")->capture_default_str();
  gen->add_option("--degradation", gen_degradation, "Degradation overrides (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--out,-o", gen_out, "CSV path")->required();

  auto* prep = app.add_subcommand("prep", "Preprocess both domains and cache the window sets");
  ConfigOptions prep_opts;
  prep_opts.add(prep, false);

  auto* run = app.add_subcommand("run", "Train and evaluate one method over a list of seeds");
  ConfigOptions run_opts;
  run_opts.add(run, true);

  auto* compare = app.add_subcommand("compare", "Aggregate finished runs into a ranking table");
  std::vector<std::string> compare_dirs;
  std::string compare_out;
  compare->add_option("runs", compare_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  compare->add_option("--out,-o", compare_out, "CSV path (default stdout)");

  auto* pad = app.add_subcommand("pad", "Proxy A-distance of a finished run's embeddings");
  std::string pad_run, pad_seeds, pad_out;
  pad->add_option("run", pad_run, "Run directory")->required()->check(CLI::ExistingDirectory);
  pad->add_option("--seeds", pad_seeds, "Subset of the run's seeds");
  pad->add_option("--out,-o", pad_out, "CSV path (default stdout)");

  auto* pca = app.add_subcommand("pca", "2-D PCA projection of a finished run's embeddings");
  std::string pca_run, pca_out;
  std::uint64_t pca_seed = 0;
  pca->add_option("run", pca_run, "Run directory")->required()->check(CLI::ExistingDirectory);
  pca->add_option("--seed", pca_seed, "Seed")->capture_default_str();
  pca->add_option("--out,-o", pca_out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(gen_class, gen_units, gen_seed, gen_degradation, gen_out);
    if (*prep) return cmd_prep(prep_opts);
    if (*run) return cmd_run(run_opts);
    if (*compare) return cmd_compare(compare_dirs, compare_out);
    if (*pad) return cmd_pad(pad_run, pad_seeds, pad_out);
    if (*pca) return cmd_pca(pca_run, pca_seed, pca_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

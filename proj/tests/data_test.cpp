#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "opsdann/data/csv.hpp"
#include "opsdann/data/decimate.hpp"
#include "opsdann/data/preprocess.hpp"
#include "opsdann/data/windows.hpp"
#include "opsdann/error.hpp"

using namespace opsdann;
using namespace opsdann::data;

namespace {

std::string header() {
  std::string h = "unit_id,cycle";
  for (auto name : kChannelNames) h += "," + std::string(name);
  return h;
}

MultivariateSeries random_series(std::string id, std::size_t n, int onset, int eol, std::mt19937_64& rng) {
  MultivariateSeries s;
  s.unit_id = std::move(id);
  s.length = n;
  s.values.resize(kChannels * n);
  std::normal_distribution<double> g(0.0, 1000.0);
  for (double& v : s.values) v = g(rng);
  for (std::size_t t = 0; t < n; ++t) s.cycle_index.push_back(onset + static_cast<int>(t * (eol - onset + 1) / n));
  s.fault_onset_cycle = onset;
  s.eol_cycle = eol;
  return s;
}

std::vector<double> sine(std::size_t n, double freq_hz, double amplitude) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * t);
  return x;
}

std::vector<Phase> ramp_labels(double rate, std::size_t n) {
  std::vector<double> alt(n);
  for (std::size_t t = 0; t < n; ++t) alt[t] = 10000.0 + rate * static_cast<double>(t);
  std::vector<int> cycles(n, 1);
  return label_phases(alt, cycles, 1.0);
}

bool all_equal(const std::vector<Phase>& labels, Phase p) {
  return std::all_of(labels.begin(), labels.end(), [p](Phase q) { return q == p; });
}

}  // namespace

TEST_CASE("csv ingestion") {
  SUBCASE("three well-formed rows") {
    std::stringstream in;
    in << header() << "\n";
    for (int r = 0; r < 3; ++r) {
      in << "u1," << r + 1;
      for (std::size_t c = 0; c < kChannels; ++c) in << "," << (c * 10 + r);
      in << "\n";
    }
    const auto units = parse_csv(in);
    REQUIRE(units.size() == 1);
    CHECK(units[0].length == 3);
    CHECK(units[0].channels() == 18);
    CHECK(units[0].at(5, 2) == 52.0);
  }
  SUBCASE("missing altitude column names it") {
    std::string h = header();
    h.replace(h.find(",alt,"), 5, ",");
    std::stringstream in(h + "\n");
    try {
      parse_csv(in);
      FAIL("expected a schema error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("'alt'") != std::string::npos);
    }
  }
  SUBCASE("non-numeric cell reports row and column") {
    std::stringstream in;
    in << header() << "\nu1,1";
    for (std::size_t c = 0; c < kChannels; ++c) in << (c == 3 ? ",abc" : ",1");
    in << "\n";
    try {
      parse_csv(in);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("'T2'") != std::string::npos);
    }
  }
  SUBCASE("empty file") {
    std::stringstream in;
    CHECK_THROWS_AS(parse_csv(in), Error);
  }
  SUBCASE("round trip is exact") {
    std::mt19937_64 rng(3);
    std::vector<MultivariateSeries> units{random_series("a", 40, 3, 9, rng), random_series("b", 25, 1, 4, rng)};
    const auto dir = std::filesystem::temp_directory_path() / "opsdann_data_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "roundtrip.csv";
    write_csv(path, units);
    const auto back = load_csv(path);
    REQUIRE(back.size() == 2);
    for (std::size_t u = 0; u < 2; ++u) {
      CHECK(back[u].unit_id == units[u].unit_id);
      CHECK(back[u].values == units[u].values);
      CHECK(back[u].cycle_index == units[u].cycle_index);
      CHECK(back[u].fault_onset_cycle == units[u].fault_onset_cycle);
      CHECK(back[u].eol_cycle == units[u].eol_cycle);
    }
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("chebyshev design matches reference response") {
  // |H(f)| / |H(0)| of an order-8, 0.05 dB, cutoff 0.08 design, from an independent
  // reference implementation.
  const auto sections = chebyshev1_lowpass(8, 0.05, 0.08);
  CHECK(sections.size() == 4);
  const std::vector<std::pair<double, double>> reference = {
      {0.02, 1.004716296418256}, {0.05, 1.0035458921951304}, {0.08, 0.9999999999999899},
      {0.1, 0.07000393358267117}, {0.2, 5.256689863395955e-05}};
  CHECK(magnitude_response(sections, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  for (auto [f, expected] : reference) {
    CHECK(magnitude_response(sections, f) == doctest::Approx(expected).epsilon(1e-9));
  }
  CHECK_THROWS_AS(chebyshev1_lowpass(7, 0.05, 0.08), Error);
}

TEST_CASE("decimation") {
  SUBCASE("constant is preserved") {
    std::vector<double> x(3000, 42.5);
    for (double v : decimate_signal(x)) CHECK(std::abs(v - 42.5) < 1e-6);
  }
  SUBCASE("slow sine keeps its amplitude") {
    const std::size_t n = 20000;
    const auto x = sine(n, 0.005, 3.0);
    const auto y = decimate_signal(x);
    REQUIRE(y.size() == 2000);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      worst = std::max(worst, std::abs(y[i] - x[i * 10]));
    }
    CHECK(worst / 3.0 < 0.02);
  }
  SUBCASE("fast sine is attenuated by 20 dB") {
    const std::size_t n = 20000;
    const auto y = decimate_signal(sine(n, 0.45, 1.0));
    double peak = 0.0;
    for (std::size_t i = 50; i + 50 < y.size(); ++i) peak = std::max(peak, std::abs(y[i]));
    CHECK(20.0 * std::log10(peak) <= -20.0);
  }
  SUBCASE("too short") {
    CHECK_THROWS_AS(decimate_signal(std::vector<double>(80, 1.0)), Error);
    CHECK_NOTHROW(decimate_signal(std::vector<double>(81, 1.0)));
  }
  SUBCASE("series bookkeeping") {
    std::mt19937_64 rng(1);
    auto s = random_series("u", 1000, 5, 14, rng);
    const auto d = decimate(s);
    CHECK(d.length == 100);
    CHECK(d.sample_rate_hz == doctest::Approx(0.1));
    CHECK(d.channels() == 18);
    for (std::size_t t = 0; t < d.length; ++t) CHECK(d.cycle_index[t] == s.cycle_index[t * 10]);
  }
}

TEST_CASE("min-max scaler") {
  MultivariateSeries s;
  s.unit_id = "s";
  s.length = 3;
  s.values.resize(kChannels * 3, 7.0);  // constant channels
  s.cycle_index = {1, 1, 2};
  s.fault_onset_cycle = 1;
  s.eol_cycle = 2;
  s.channel(4)[0] = 0.0;
  s.channel(4)[1] = 5.0;
  s.channel(4)[2] = 10.0;
  std::vector<MultivariateSeries> source{s};
  const auto scaler = fit_scaler(source);
  CHECK(scaler.min[4] == 0.0);
  CHECK(scaler.max[4] == 10.0);
  CHECK(scale_value(5.0, 0.0, 10.0) == 0.0);
  CHECK(scale_value(0.0, 0.0, 10.0) == -1.0);
  CHECK(scale_value(10.0, 0.0, 10.0) == 1.0);
  CHECK(scale_value(20.0, 0.0, 10.0) == 3.0);  // target values are not clipped
  auto scaled = s;
  apply_scaler(scaled, scaler);
  CHECK(scaled.at(0, 1) == 0.0);
  CHECK(scaled.at(4, 0) == -1.0);

  // every source sample lands in [-1, 1]
  std::mt19937_64 rng(11);
  std::vector<MultivariateSeries> fleet{random_series("a", 60, 1, 5, rng), random_series("b", 70, 1, 5, rng)};
  const auto fitted = fit_scaler(fleet);
  for (auto unit : fleet) {
    apply_scaler(unit, fitted);
    for (double v : unit.values) CHECK((v >= -1.0 && v <= 1.0));
  }
}

TEST_CASE("RUL normalization") {
  CHECK(normalized_rul(60, 60, 80) == 1.0);
  CHECK(normalized_rul(80, 60, 80) == 0.0);
  CHECK(normalized_rul(70, 60, 80) == 0.5);
  CHECK(normalized_rul(70, 60, 80, RulNormalization::max_cycles) == doctest::Approx(10.0 / 80.0));
  CHECK_THROWS_AS(normalized_rul(70, 80, 80), Error);

  std::mt19937_64 rng(5);
  auto s = random_series("u", 200, 60, 80, rng);
  const auto rul = normalize_rul(s);
  CHECK(rul.front() == 1.0);
  CHECK(rul.back() == 0.0);
  for (std::size_t t = 1; t < rul.size(); ++t) CHECK(rul[t] <= rul[t - 1]);
  s.cycle_index[0] = 59;
  CHECK_THROWS_AS(normalize_rul(s), Error);
}

TEST_CASE("phase labeling") {
  CHECK(all_equal(ramp_labels(0.0, 300), Phase::steady));
  CHECK(all_equal(ramp_labels(1.0, 300), Phase::ascending));
  CHECK(all_equal(ramp_labels(-1.0, 300), Phase::descending));
  CHECK(all_equal(ramp_labels(0.4, 300), Phase::steady));
  CHECK(all_equal(ramp_labels(-0.4, 300), Phase::steady));
  CHECK(all_equal(ramp_labels(0.5, 300), Phase::ascending));
  CHECK(all_equal(ramp_labels(-0.5, 300), Phase::descending));

  SUBCASE("median filter removes short blips and replicates edges") {
    std::vector<int> labels(101, 1);
    for (int i = 40; i < 60; ++i) labels[i] = 0;
    labels[0] = 2;
    const auto out = median_filter(labels, 51);
    CHECK(out[0] == 2);  // replicated edge holds the majority of its own window
    CHECK(std::all_of(out.begin() + 1, out.end(), [](int v) { return v == 1; }));
    CHECK_THROWS_AS(median_filter(labels, 50), Error);
  }

  SUBCASE("flights are labeled independently") {
    // flight 1 climbs, flight 2 descends; the jump between them is not a derivative
    std::vector<double> alt;
    std::vector<int> cycles;
    for (int t = 0; t < 200; ++t) alt.push_back(t * 2.0), cycles.push_back(1);
    for (int t = 0; t < 200; ++t) alt.push_back(30000.0 - t * 2.0), cycles.push_back(2);
    const auto labels = label_phases(alt, cycles, 1.0);
    for (int t = 0; t < 200; ++t) CHECK(labels[t] == Phase::ascending);
    for (int t = 200; t < 400; ++t) CHECK(labels[t] == Phase::descending);
  }

  SUBCASE("relabeling is idempotent") {
    std::mt19937_64 rng(9);
    std::vector<double> alt{0.0};
    std::uniform_real_distribution<double> step(-3.0, 3.0);
    for (int t = 1; t < 2000; ++t) alt.push_back(alt.back() + (t / 300 % 2 ? 1.5 : -0.2) + 0.1 * step(rng));
    std::vector<int> cycles(alt.size(), 4);
    const auto first = label_phases(alt, cycles, 1.0);
    // Reconstruct an altitude whose raw derivative labels equal the smoothed labels.
    std::vector<double> rebuilt{0.0};
    for (std::size_t t = 0; t + 1 < first.size(); ++t) {
      const double rate = first[t] == Phase::ascending ? 1.0 : first[t] == Phase::descending ? -1.0 : 0.0;
      rebuilt.push_back(rebuilt.back() + rate);
    }
    CHECK(label_phases(rebuilt, cycles, 1.0) == first);
  }
}

TEST_CASE("windows") {
  CHECK(window_count(50, 50, 1) == 1);
  CHECK(window_count(100, 50, 1) == 51);
  CHECK_THROWS_AS(window_count(49, 50, 1), Error);
  for (std::size_t n = 50; n < 120; n += 7)
    for (std::size_t stride = 1; stride < 9; ++stride) {
      std::size_t brute = 0;
      for (std::size_t start = 0; start + 50 <= n; start += stride) ++brute;
      CHECK(window_count(n, 50, stride) == brute);
    }

  std::mt19937_64 rng(2);
  PreparedUnit unit;
  unit.series = random_series("u7", 120, 10, 30, rng);
  for (std::size_t t = 0; t < 120; ++t) unit.phase.push_back(static_cast<Phase>(t % 3));
  unit.rul = normalize_rul(unit.series);

  const auto windows = make_windows(unit, Domain::source, true, 50, 1);
  REQUIRE(windows.size() == 71);
  CHECK(windows[0].phase == unit.phase[49]);
  CHECK(*windows[0].rul_norm == unit.rul[49]);
  CHECK(windows[3].data[2 * 50 + 10] == unit.series.at(2, 13));
  CHECK_FALSE(make_windows(unit, Domain::target, false)[0].rul_norm.has_value());

  WindowDataset source({unit}, Domain::source, true, 50, 4);
  CHECK(source.size() == window_count(120, 50, 4));
  std::vector<std::size_t> pick{0, 2};
  const auto batch = source.gather(pick);
  CHECK(batch.shape() == nn::Shape{2, 18, 50});
  CHECK(batch[(1 * 18 + 5) * 50 + 7] == unit.series.at(5, 8 + 7));
  CHECK(source.rul(2) == unit.rul[8 + 49]);
  CHECK(source.phase(2) == unit.phase[8 + 49]);

  const auto target = source.without_labels();
  CHECK_FALSE(target.labeled());
  CHECK_THROWS_AS(target.rul(0), Error);
  CHECK(target.units()[0].rul.empty());

  const auto restored = WindowDataset::windows_from_container(source.to_container());
  REQUIRE(restored.size() == source.size());
  CHECK(restored[2].data == make_windows(unit, Domain::source, true, 50, 4)[2].data);
  CHECK(*restored[2].rul_norm == source.rul(2));
}

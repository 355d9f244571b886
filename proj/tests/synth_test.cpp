#include <cmath>
#include <set>

#include "doctest.h"
#include "opsdann/data/preprocess.hpp"
#include "opsdann/data/windows.hpp"
#include "opsdann/synth/flights.hpp"

using namespace opsdann;
using namespace opsdann::synth;

namespace {

double steady_fraction(FlightClass cls, int flights) {
  std::size_t steady = 0, total = 0;
  for (int i = 0; i < flights; ++i) {
    const auto f = gen_flight(FlightClassSpec::preset(cls), 500 + i);
    for (auto p : f.phase) steady += p == Phase::steady;
    total += f.size();
  }
  return static_cast<double>(steady) / static_cast<double>(total);
}

// Agreement on timesteps at least `margin` samples away from either end of a flight.
double interior_agreement(const std::vector<Phase>& truth, const std::vector<Phase>& labels, std::size_t margin) {
  std::size_t agree = 0, total = 0;
  for (std::size_t t = margin; t + margin < truth.size(); ++t) {
    agree += truth[t] == labels[t];
    ++total;
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("flight profiles") {
  for (auto cls : {FlightClass::short_haul, FlightClass::medium_haul, FlightClass::long_haul}) {
    const auto spec = FlightClassSpec::preset(cls);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto f = gen_flight(spec, seed);
      CHECK(f.phase.front() == Phase::ascending);
      CHECK(f.phase.back() == Phase::descending);
      CHECK(f.size() >= spec.min_hours * 3600.0);
      CHECK(f.size() <= spec.max_hours * 3600.0);
      CHECK(f.mach.size() == f.size());
      CHECK(f.tra.size() == f.size());
    }
  }
  const auto a = gen_flight(FlightClassSpec::preset(FlightClass::medium_haul), 7);
  const auto b = gen_flight(FlightClassSpec::preset(FlightClass::medium_haul), 7);
  CHECK(a.altitude == b.altitude);
  CHECK(a.phase == b.phase);
  CHECK(gen_flight(FlightClassSpec::preset(FlightClass::medium_haul), 8).altitude != a.altitude);

  CHECK(steady_fraction(FlightClass::long_haul, 10) > steady_fraction(FlightClass::short_haul, 10));
}

TEST_CASE("phase labeler recovers generator phases") {
  const std::size_t margin = data::kPhaseMedianLength / 2;
  for (auto cls : {FlightClass::short_haul, FlightClass::medium_haul, FlightClass::long_haul}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto f = gen_flight(FlightClassSpec::preset(cls), 1000 + seed);
      std::vector<int> cycles(f.size(), 1);
      const auto labels = data::label_phases(f.altitude, cycles, 1.0);
      CHECK(interior_agreement(f.phase, labels, margin) >= 0.99);
    }
  }
}

TEST_CASE("degradation trajectory") {
  const auto deg = DegradationSpec::preset();
  CHECK(health_at(0, 8, 16, 0.98, 0.002, 0.2, 0.6) == 0.98);
  CHECK(health_at(8, 8, 16, 0.98, 0.002, 0.2, 0.6) == 0.98 - 0.002 * 8);
  CHECK(health_at(16, 8, 16, 0.98, 0.002, 0.2, 0.6) == doctest::Approx(0.6).epsilon(1e-12));

  const auto unit = gen_unit(FlightClassSpec::preset(FlightClass::short_haul), deg, 42, "u");
  const auto& s = unit.series;
  CHECK_NOTHROW(s.validate());
  CHECK(s.channels() == 18);
  CHECK(s.fault_onset_cycle > 0);
  CHECK(s.fault_onset_cycle < s.eol_cycle);
  CHECK(unit.h0 >= 0.95);
  CHECK(unit.h0 <= 1.0);
  const int onset = s.fault_onset_cycle;
  CHECK(unit.cycle_health[onset - 1] == unit.h0 - unit.slope * onset);
  for (int c = onset + 1; c <= s.eol_cycle; ++c) CHECK(unit.cycle_health[c - 1] < unit.cycle_health[c - 2]);
  // the EOL threshold is first reached at the last cycle, consistent with RUL = 0 there
  for (int c = 1; c < s.eol_cycle; ++c) CHECK(unit.cycle_health[c - 1] > deg.eol_health);
  CHECK(unit.cycle_health.back() == doctest::Approx(deg.eol_health).epsilon(1e-12));
  for (double h : unit.cycle_health) CHECK((h > 0.0 && h <= 1.0));

  // wear raises hot-section temperatures
  const auto fresh = sensor_means(30000, 0.8, 70, 1.0, deg);
  const auto worn = sensor_means(30000, 0.8, 70, 0.7, deg);
  CHECK(worn[2] > fresh[2]);
  CHECK(worn[5] == fresh[5]);

  const auto again = gen_unit(FlightClassSpec::preset(FlightClass::short_haul), deg, 42, "u");
  CHECK(again.series.values == s.values);
}

TEST_CASE("fleets") {
  auto deg = DegradationSpec::preset();
  deg.min_cycles = 4, deg.max_cycles = 5;
  const auto short_fleet = gen_fleet(FlightClassSpec::preset(FlightClass::short_haul), deg, 5, 3);
  const auto long_fleet = gen_fleet(FlightClassSpec::preset(FlightClass::long_haul), deg, 5, 3);
  CHECK(short_fleet.units.size() == 5);
  double short_mean = 0.0, long_mean = 0.0;
  for (const auto& u : short_fleet.units) short_mean += static_cast<double>(u.series.length) / 5.0;
  for (const auto& u : long_fleet.units) long_mean += static_cast<double>(u.series.length) / 5.0;
  CHECK(long_mean > short_mean);

  std::set<std::vector<double>> distinct;
  for (const auto& u : short_fleet.units) distinct.insert(u.series.values);
  CHECK(distinct.size() == 5);
  CHECK(unit_seed(3, FlightClass::short_haul, 0) != unit_seed(4, FlightClass::short_haul, 0));
  CHECK(unit_seed(3, FlightClass::short_haul, 0) != unit_seed(3, FlightClass::long_haul, 0));

  // generator output passes the pipeline
  for (const auto& u : short_fleet.units) {
    const auto prepared = data::prepare_unit(u.series);
    CHECK(prepared.rul.front() == 1.0);
    CHECK(prepared.rul.back() == 0.0);
    CHECK(prepared.phase.size() == prepared.series.length);
    CHECK_NOTHROW(data::make_windows(prepared, data::Domain::source, true));
  }

  const auto j = to_json(deg);
  CHECK(degradation_spec_from_json(j).min_cycles == 4);
  CHECK(flight_spec_from_json(FlightClass::long_haul, {{"max_hours", 6.5}}).max_hours == 6.5);
  CHECK_THROWS(degradation_spec_from_json({{"bogus", 1}}));
}

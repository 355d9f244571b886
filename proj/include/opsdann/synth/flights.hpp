#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "opsdann/data/series.hpp"

namespace opsdann::synth {

using data::Phase;

enum class FlightClass : int { short_haul = 0, medium_haul = 1, long_haul = 2 };

std::string_view class_name(FlightClass cls);  // "short", "medium", "long"
FlightClass parse_class(std::string_view name);

/// Mission envelope of one flight class. Durations in hours, altitudes in ft,
/// rates in ft/s.
struct FlightClassSpec {
  FlightClass cls = FlightClass::short_haul;
  double min_hours = 1.0, max_hours = 3.0;
  double cruise_alt_min = 15000.0, cruise_alt_max = 24000.0;
  double climb_rate_min = 20.0, climb_rate_max = 40.0;
  double descent_rate_min = 20.0, descent_rate_max = 35.0;
  double cruise_mach_min = 0.55, cruise_mach_max = 0.65;
  double climb_tra = 88.0, cruise_tra = 62.0, descent_tra = 35.0;
  // cruise is broken into plateaus by step climbs/descents roughly this often
  double step_interval_s = 5400.0;
  double step_alt_min = 1000.0, step_alt_max = 4000.0;
  double step_rate_min = 8.0, step_rate_max = 20.0;
  double min_segment_s = 300.0;
  double alt_noise_ft = 0.1;

  static FlightClassSpec preset(FlightClass cls);
};

/// One flight at 1 Hz with its generating-segment phases.
struct FlightProfile {
  std::vector<double> altitude, mach, tra;
  std::vector<Phase> phase;
  double cruise_altitude = 0.0;
  double cruise_mach = 0.0;
  std::size_t size() const { return altitude.size(); }
};

FlightProfile gen_flight(const FlightClassSpec& spec, std::uint64_t seed);

inline constexpr std::size_t kSensors = 14;

/// Health trajectory and sensor coupling. All constants are synthetic.
///
/// Health is h0 - slope * c up to the fault onset; afterwards it follows
/// h_on - A (exp(rate (c - onset)) - 1), with A chosen so that health hits
/// `eol_health` exactly at the last cycle.
struct DegradationSpec {
  int min_cycles = 14, max_cycles = 20;
  double onset_fraction_min = 0.4, onset_fraction_max = 0.6;
  double h0_min = 0.95, h0_max = 1.0;
  double slope_min = 0.001, slope_max = 0.003;
  double rate_min = 0.15, rate_max = 0.35;
  double eol_health = 0.6;
  // sensor k = base_k(op) + health_gain_k (1 - h) (1 + throttle_gain_k tra/100) + N(0, noise_k)
  std::array<double, kSensors> health_gain{};
  std::array<double, kSensors> throttle_gain{};
  std::array<double, kSensors> noise{};

  static DegradationSpec preset();
};

struct GeneratedUnit {
  data::MultivariateSeries series;
  std::vector<Phase> true_phase;      // per timestep, from the generating segments
  std::vector<double> cycle_health;   // index c - 1 for cycle c
  double h0 = 1.0, slope = 0.0, rate = 0.0;
};

/// Health at cycle c (1-based) for the given trajectory parameters.
double health_at(int cycle, int onset, int eol, double h0, double slope, double rate, double eol_health);

/// Sensor channels from operating conditions and health, without noise.
std::array<double, kSensors> sensor_means(double altitude, double mach, double tra, double health,
                                          const DegradationSpec& spec);
/// Total inlet temperature [K] from the standard atmosphere and Mach number.
double inlet_temperature(double altitude_ft, double mach);

GeneratedUnit gen_unit(const FlightClassSpec& flights, const DegradationSpec& degradation, std::uint64_t seed,
                       std::string unit_id);

/// Independent seed for unit `index` of a fleet of class `cls`.
std::uint64_t unit_seed(std::uint64_t fleet_seed, FlightClass cls, std::size_t index);
std::string unit_name(FlightClass cls, std::size_t index);

struct Fleet {
  FlightClass cls;
  std::vector<GeneratedUnit> units;
};

Fleet gen_fleet(FlightClass cls, std::size_t n_units, std::uint64_t seed);
Fleet gen_fleet(const FlightClassSpec& flights, const DegradationSpec& degradation, std::size_t n_units,
                std::uint64_t seed);

nlohmann::json to_json(const FlightClassSpec& spec);
nlohmann::json to_json(const DegradationSpec& spec);
/// Starts from the preset and overrides the keys present in `j`; unknown keys throw.
FlightClassSpec flight_spec_from_json(FlightClass cls, const nlohmann::json& j);
DegradationSpec degradation_spec_from_json(const nlohmann::json& j);

}  // namespace opsdann::synth

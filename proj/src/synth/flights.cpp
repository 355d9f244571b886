#include "opsdann/synth/flights.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "opsdann/error.hpp"

namespace opsdann::synth {

std::string_view class_name(FlightClass cls) {
  switch (cls) {
    case FlightClass::short_haul:
      return "short";
    case FlightClass::medium_haul:
      return "medium";
    case FlightClass::long_haul:
      return "long";
  }
  return "?";
}

FlightClass parse_class(std::string_view name) {
  if (name == "short" || name == "S") return FlightClass::short_haul;
  if (name == "medium" || name == "M") return FlightClass::medium_haul;
  if (name == "long" || name == "L") return FlightClass::long_haul;
  throw ConfigError("unknown flight class '" + std::string(name) + "' (short, medium, long)");
}

FlightClassSpec FlightClassSpec::preset(FlightClass cls) {
  FlightClassSpec s;
  s.cls = cls;
  switch (cls) {
    case FlightClass::short_haul:
      break;
    case FlightClass::medium_haul:
      s.min_hours = 3.0, s.max_hours = 5.0;
      s.cruise_alt_min = 24000.0, s.cruise_alt_max = 32000.0;
      s.cruise_mach_min = 0.66, s.cruise_mach_max = 0.76;
      s.cruise_tra = 68.0;
      break;
    case FlightClass::long_haul:
      s.min_hours = 5.0, s.max_hours = 7.0;
      s.cruise_alt_min = 32000.0, s.cruise_alt_max = 39000.0;
      s.cruise_mach_min = 0.78, s.cruise_mach_max = 0.85;
      s.cruise_tra = 74.0;
      break;
  }
  return s;
}

DegradationSpec DegradationSpec::preset() {
  DegradationSpec d;
  //              T24   T30   T48   T50   P15    P2   P21    P24   Ps30  P40   P50    Nf    Nc    Wf
  d.health_gain = {0.05, 0.10, 0.20, 0.15, -0.05, 0.0, -0.05, -0.08, -0.10, -0.10, -0.12, -0.03, 0.05, 0.15};
  d.throttle_gain = {1.0, 1.2, 1.5, 1.3, 0.5, 0.0, 0.5, 0.8, 1.0, 1.0, 1.2, 0.6, 0.8, 1.5};
  d.noise.fill(0.002);
  return d;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  if (hi < lo) throw ConfigError("range with max < min");
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Segment {
  Phase phase;
  std::size_t seconds;
  double start_alt, end_alt;
  double tra;
};

// Standard atmosphere below/above the tropopause, altitude in ft.
double static_temperature(double alt) { return alt < 36089.0 ? 288.15 - 0.0019812 * alt : 216.65; }
double static_pressure(double alt) {
  if (alt < 36089.0) return 14.696 * std::pow(1.0 - 6.8756e-6 * alt, 5.2559);
  return 3.2835 * std::exp(-4.8063e-5 * (alt - 36089.0));
}

}  // namespace

double inlet_temperature(double altitude_ft, double mach) {
  return static_temperature(altitude_ft) * (1.0 + 0.2 * mach * mach);
}

FlightProfile gen_flight(const FlightClassSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const double duration = std::round(uniform(rng, spec.min_hours, spec.max_hours) * 3600.0);
  const double climb_rate = uniform(rng, spec.climb_rate_min, spec.climb_rate_max);
  const double descent_rate = uniform(rng, spec.descent_rate_min, spec.descent_rate_max);
  double cruise_alt = uniform(rng, spec.cruise_alt_min, spec.cruise_alt_max);
  const double cruise_mach = uniform(rng, spec.cruise_mach_min, spec.cruise_mach_max);
  // leave room for at least one plateau
  const double fit = (duration - spec.min_segment_s) / (1.0 / climb_rate + 1.0 / descent_rate);
  cruise_alt = std::min(cruise_alt, 0.95 * fit);

  const auto climb_s = static_cast<std::size_t>(std::ceil(cruise_alt / climb_rate));

  // Step climbs/descents during cruise.
  std::vector<Segment> steps;
  double alt = cruise_alt;
  const double cruise_budget = duration - static_cast<double>(climb_s);
  const int wanted = static_cast<int>(cruise_budget / spec.step_interval_s);
  for (int i = 0; i < wanted; ++i) {
    double delta = uniform(rng, spec.step_alt_min, spec.step_alt_max);
    const bool up = uniform(rng, 0.0, 1.0) < 0.6;
    double next = up ? alt + delta : alt - delta;
    if (next > 43000.0 || next < 0.7 * cruise_alt) next = up ? alt - delta : alt + delta;
    next = std::clamp(next, 0.7 * cruise_alt, 43000.0);
    delta = std::abs(next - alt);
    if (delta < spec.step_alt_min) continue;
    const double rate = uniform(rng, spec.step_rate_min, spec.step_rate_max);
    const auto secs = static_cast<std::size_t>(std::ceil(delta / rate));
    steps.push_back({next > alt ? Phase::ascending : Phase::descending, secs, alt, next,
                     next > alt ? 0.5 * (spec.climb_tra + spec.cruise_tra) : 0.5 * (spec.cruise_tra + spec.descent_tra)});
    alt = next;
  }
  // Drop steps until the plateaus fit.
  auto plateau_time = [&]() {
    double used = static_cast<double>(climb_s);
    for (const auto& s : steps) used += static_cast<double>(s.seconds);
    const double final_alt = steps.empty() ? cruise_alt : steps.back().end_alt;
    used += std::ceil(final_alt / descent_rate);
    return duration - used;
  };
  while (!steps.empty() && plateau_time() < spec.min_segment_s * static_cast<double>(steps.size() + 1)) {
    steps.pop_back();
  }
  const double final_alt = steps.empty() ? cruise_alt : steps.back().end_alt;
  const auto descent_s = static_cast<std::size_t>(std::ceil(final_alt / descent_rate));
  const double plateau_total = plateau_time();
  if (plateau_total < spec.min_segment_s) throw Error("gen_flight: flight too short for its envelope");

  // Split plateau time: minimum each, remainder by random weights.
  const std::size_t n_plateaus = steps.size() + 1;
  std::vector<double> weights(n_plateaus);
  for (double& w : weights) w = uniform(rng, 0.5, 1.5);
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double spare = plateau_total - spec.min_segment_s * static_cast<double>(n_plateaus);
  std::vector<std::size_t> plateau_s(n_plateaus);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n_plateaus; ++i) {
    plateau_s[i] = static_cast<std::size_t>(spec.min_segment_s + std::floor(spare * weights[i] / wsum));
    assigned += plateau_s[i];
  }
  plateau_s.back() += static_cast<std::size_t>(plateau_total) - assigned;

  std::vector<Segment> segments;
  segments.push_back({Phase::ascending, climb_s, 0.0, cruise_alt, spec.climb_tra});
  double level = cruise_alt;
  for (std::size_t i = 0; i < n_plateaus; ++i) {
    segments.push_back({Phase::steady, plateau_s[i], level, level, spec.cruise_tra});
    if (i < steps.size()) {
      segments.push_back(steps[i]);
      level = steps[i].end_alt;
    }
  }
  segments.push_back({Phase::descending, descent_s, level, 0.0, spec.descent_tra});

  FlightProfile f;
  f.cruise_altitude = cruise_alt;
  f.cruise_mach = cruise_mach;
  std::normal_distribution<double> alt_noise(0.0, spec.alt_noise_ft);
  std::normal_distribution<double> tra_noise(0.0, 0.3);
  double tra = spec.climb_tra;
  for (const auto& seg : segments) {
    const double slope = (seg.end_alt - seg.start_alt) / static_cast<double>(seg.seconds);
    for (std::size_t t = 0; t < seg.seconds; ++t) {
      const double a = seg.start_alt + slope * static_cast<double>(t);
      f.altitude.push_back(a + alt_noise(rng));
      f.phase.push_back(seg.phase);
      tra += (seg.tra - tra) / 20.0;  // throttle lag
      f.tra.push_back(tra + tra_noise(rng));
      f.mach.push_back(cruise_mach * (0.3 + 0.7 * std::min(a / cruise_alt, 1.1)));
    }
  }
  return f;
}

double health_at(int cycle, int onset, int eol, double h0, double slope, double rate, double eol_health) {
  const double h_on = h0 - slope * onset;
  if (cycle <= onset) return h0 - slope * cycle;
  const double amplitude = (h_on - eol_health) / std::expm1(rate * (eol - onset));
  return h_on - amplitude * std::expm1(rate * (cycle - onset));
}

std::array<double, kSensors> sensor_means(double altitude, double mach, double tra, double health,
                                          const DegradationSpec& spec) {
  const double t2 = inlet_temperature(altitude, mach);
  const double p2 = static_pressure(altitude) * std::pow(1.0 + 0.2 * mach * mach, 3.5);
  const double theta = t2 / 288.15, delta = p2 / 14.696;
  const double x = tra / 100.0, x2 = x * x;
  std::array<double, kSensors> s = {
      t2 * (1.0 + 0.35 * x + 0.15 * x2),          // T24
      t2 * (1.6 + 0.9 * x + 0.3 * x2),            // T30
      t2 * (2.6 + 1.8 * x + 0.5 * x2),            // T48
      t2 * (2.2 + 1.2 * x + 0.4 * x2),            // T50
      p2 * (1.2 + 0.5 * x),                       // P15
      p2,                                         // P2
      p2 * (1.25 + 0.55 * x),                     // P21
      p2 * (1.8 + 1.5 * x),                       // P24
      p2 * (6.0 + 14.0 * x + 4.0 * x2),           // Ps30
      p2 * (6.5 + 15.0 * x + 4.0 * x2),           // P40
      p2 * (1.1 + 0.6 * x),                       // P50
      1000.0 * std::sqrt(theta) * (1.2 + 1.8 * x),  // Nf
      3000.0 * std::sqrt(theta) * (2.0 + 0.8 * x),  // Nc
      delta * std::sqrt(theta) * (0.3 + 2.5 * x2),  // Wf
  };
  const double wear = 1.0 - health;
  for (std::size_t k = 0; k < kSensors; ++k) s[k] *= 1.0 + spec.health_gain[k] * wear * (1.0 + spec.throttle_gain[k] * x);
  return s;
}

GeneratedUnit gen_unit(const FlightClassSpec& flights, const DegradationSpec& deg, std::uint64_t seed,
                       std::string unit_id) {
  if (deg.min_cycles < 2 || deg.max_cycles < deg.min_cycles) throw ConfigError("degradation: invalid cycle range");
  if (!(deg.onset_fraction_min > 0.0 && deg.onset_fraction_max < 1.0)) {
    throw ConfigError("degradation: onset fraction must lie in (0,1)");
  }
  Rng rng(seed);
  GeneratedUnit unit;
  const int cycles = std::uniform_int_distribution<int>(deg.min_cycles, deg.max_cycles)(rng);
  const int onset = std::clamp(static_cast<int>(std::lround(uniform(rng, deg.onset_fraction_min, deg.onset_fraction_max) * cycles)),
                               1, cycles - 1);
  unit.h0 = uniform(rng, deg.h0_min, deg.h0_max);
  unit.slope = uniform(rng, deg.slope_min, deg.slope_max);
  unit.rate = uniform(rng, deg.rate_min, deg.rate_max);
  if (!(unit.h0 - unit.slope * onset > deg.eol_health)) throw ConfigError("degradation: health at onset below EOL threshold");

  auto& s = unit.series;
  s.unit_id = std::move(unit_id);
  s.fault_onset_cycle = onset;
  s.eol_cycle = cycles;
  s.sample_rate_hz = 1.0;
  std::array<std::vector<double>, data::kChannels> channels;
  std::normal_distribution<double> unit_noise(0.0, 1.0);
  for (int c = 1; c <= cycles; ++c) {
    const double h = health_at(c, onset, cycles, unit.h0, unit.slope, unit.rate, deg.eol_health);
    unit.cycle_health.push_back(h);
    const auto flight = gen_flight(flights, rng());
    for (std::size_t t = 0; t < flight.size(); ++t) {
      const double alt = flight.altitude[t], mach = flight.mach[t], tra = flight.tra[t];
      channels[0].push_back(alt);
      channels[1].push_back(mach);
      channels[2].push_back(tra);
      channels[3].push_back(inlet_temperature(alt, mach));
      const auto means = sensor_means(alt, mach, tra, h, deg);
      for (std::size_t k = 0; k < kSensors; ++k) {
        channels[4 + k].push_back(means[k] * (1.0 + deg.noise[k] * unit_noise(rng)));
      }
      s.cycle_index.push_back(c);
      unit.true_phase.push_back(flight.phase[t]);
    }
  }
  s.length = s.cycle_index.size();
  s.values.reserve(data::kChannels * s.length);
  for (auto& ch : channels) s.values.insert(s.values.end(), ch.begin(), ch.end());
  return unit;
}

std::uint64_t unit_seed(std::uint64_t fleet_seed, FlightClass cls, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(fleet_seed), static_cast<std::uint32_t>(fleet_seed >> 32),
                    static_cast<std::uint32_t>(cls), static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string unit_name(FlightClass cls, std::size_t index) {
  return std::string(class_name(cls)) + "-" + std::to_string(index);
}

Fleet gen_fleet(FlightClass cls, std::size_t n_units, std::uint64_t seed) {
  return gen_fleet(FlightClassSpec::preset(cls), DegradationSpec::preset(), n_units, seed);
}

Fleet gen_fleet(const FlightClassSpec& flights, const DegradationSpec& degradation, std::size_t n_units,
                std::uint64_t seed) {
  if (n_units == 0) throw ConfigError("gen_fleet: n_units must be at least 1");
  Fleet fleet{flights.cls, {}};
  for (std::size_t i = 0; i < n_units; ++i) {
    fleet.units.push_back(gen_unit(flights, degradation, unit_seed(seed, flights.cls, i), unit_name(flights.cls, i)));
  }
  return fleet;
}

// ---------------------------------------------------------------------------
// JSON

#define OPSDANN_FLIGHT_FIELDS(X)                                                                        \
  X(min_hours) X(max_hours) X(cruise_alt_min) X(cruise_alt_max) X(climb_rate_min) X(climb_rate_max)     \
  X(descent_rate_min) X(descent_rate_max) X(cruise_mach_min) X(cruise_mach_max) X(climb_tra) X(cruise_tra) \
  X(descent_tra) X(step_interval_s) X(step_alt_min) X(step_alt_max) X(step_rate_min) X(step_rate_max)    \
  X(min_segment_s) X(alt_noise_ft)

#define OPSDANN_DEGRADATION_FIELDS(X)                                                                   \
  X(min_cycles) X(max_cycles) X(onset_fraction_min) X(onset_fraction_max) X(h0_min) X(h0_max) X(slope_min) \
  X(slope_max) X(rate_min) X(rate_max) X(eol_health) X(health_gain) X(throttle_gain) X(noise)

nlohmann::json to_json(const FlightClassSpec& spec) {
  nlohmann::json j;
  j["class"] = class_name(spec.cls);
#define X(f) j[#f] = spec.f;
  OPSDANN_FLIGHT_FIELDS(X)
#undef X
  return j;
}

nlohmann::json to_json(const DegradationSpec& spec) {
  nlohmann::json j;
#define X(f) j[#f] = spec.f;
  OPSDANN_DEGRADATION_FIELDS(X)
#undef X
  return j;
}

FlightClassSpec flight_spec_from_json(FlightClass cls, const nlohmann::json& j) {
  auto spec = FlightClassSpec::preset(cls);
  if (j.is_null()) return spec;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "class") {
        if (parse_class(value.get<std::string>()) != cls) throw ConfigError("flight spec class mismatch");
        continue;
      }
#define X(f)                   \
  if (key == #f) {             \
    value.get_to(spec.f);      \
    continue;                  \
  }
      OPSDANN_FLIGHT_FIELDS(X)
#undef X
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("flight spec '" + key + "': " + e.what());
    }
    throw ConfigError("flight spec: unknown key '" + key + "'");
  }
  return spec;
}

DegradationSpec degradation_spec_from_json(const nlohmann::json& j) {
  auto spec = DegradationSpec::preset();
  if (j.is_null()) return spec;
  for (const auto& [key, value] : j.items()) {
    try {
#define X(f)                   \
  if (key == #f) {             \
    value.get_to(spec.f);      \
    continue;                  \
  }
      OPSDANN_DEGRADATION_FIELDS(X)
#undef X
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("degradation spec '" + key + "': " + e.what());
    }
    throw ConfigError("degradation spec: unknown key '" + key + "'");
  }
  return spec;
}

}  // namespace opsdann::synth

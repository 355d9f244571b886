#pragma once

#include <random>
#include <string>
#include <vector>

#include "opsdann/data/windows.hpp"

namespace test_support {

using namespace opsdann;
using data::Domain;
using data::Phase;
using data::WindowDataset;

// Units whose channels carry the RUL plus noise, with phases in contiguous blocks and an
// additive offset standing in for a domain shift.
inline std::vector<data::PreparedUnit> toy_units(int units, std::size_t length, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<data::PreparedUnit> out;
  for (int u = 0; u < units; ++u) {
    data::PreparedUnit p;
    auto& s = p.series;
    s.unit_id = "toy-" + std::to_string(u);
    s.length = length;
    s.values.resize(data::kChannels * length);
    s.cycle_index.assign(length, 1);
    s.fault_onset_cycle = 1;
    s.eol_cycle = 2;
    p.rul.resize(length);
    p.phase.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
      p.rul[t] = 1.0 - static_cast<double>(t) / static_cast<double>(length - 1);
      p.phase[t] = static_cast<Phase>((t / 40) % 3);
    }
    for (std::size_t c = 0; c < data::kChannels; ++c) {
      const double gain = 0.2 + 0.05 * static_cast<double>(c % 5);
      const double phase_offset = 0.3 * static_cast<double>(c % 3);
      for (std::size_t t = 0; t < length; ++t) {
        s.values[c * length + t] = gain * p.rul[t] + phase_offset * static_cast<int>(p.phase[t]) +
                                   shift * (c % 2 ? 1.0 : -0.5) + noise(rng);
      }
    }
    p.rul_span_cycles = 1.0;
    out.push_back(std::move(p));
  }
  return out;
}

struct Toy {
  WindowDataset source, target;
};

inline Toy toy(int units, std::size_t length, double shift = 0.5, std::size_t stride = 1) {
  return {WindowDataset(toy_units(units, length, 0.0, 1), Domain::source, true, data::kWindowLength, stride),
          WindowDataset(toy_units(units, length, shift, 2), Domain::target, false, data::kWindowLength, stride)};
}

inline std::vector<std::size_t> iota_rows(std::size_t begin, std::size_t count, std::size_t step = 1) {
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = begin + i * step;
  return out;
}

}  // namespace test_support

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opsdann::data {

inline constexpr std::size_t kChannels = 18;

/// Channel order after ingestion: 4 scenario descriptors, then 14 sensors.
inline constexpr std::array<std::string_view, kChannels> kChannelNames = {
    "alt", "Mach", "TRA", "T2",  "T24", "T30", "T48", "T50", "P15",
    "P2",  "P21",  "P24", "Ps30", "P40", "P50", "Nf",  "Nc",  "Wf"};

inline constexpr std::size_t kAltitudeChannel = 0;

enum class Phase : int { ascending = 0, steady = 1, descending = 2 };
inline constexpr int kNumPhases = 3;

enum class Domain : int { source = 0, target = 1 };

std::string_view phase_name(Phase phase);
std::string_view domain_name(Domain domain);

/// One unit's recording, stored channel-major (channels x length).
struct MultivariateSeries {
  std::string unit_id;
  std::vector<double> values;
  std::size_t length = 0;
  double sample_rate_hz = 1.0;
  std::size_t altitude_channel = kAltitudeChannel;
  std::vector<int> cycle_index;
  int fault_onset_cycle = 0;
  int eol_cycle = 0;

  std::size_t channels() const { return length == 0 ? 0 : values.size() / length; }
  std::span<double> channel(std::size_t c) { return {values.data() + c * length, length}; }
  std::span<const double> channel(std::size_t c) const { return {values.data() + c * length, length}; }
  double at(std::size_t c, std::size_t t) const { return values[c * length + t]; }
  std::span<const double> altitude() const { return channel(altitude_channel); }

  /// Throws opsdann::Error when an invariant is broken.
  void validate() const;
};

/// Index ranges [begin, end) of constant cycle number.
struct FlightSpan {
  std::size_t begin, end;
  int cycle;
};
std::vector<FlightSpan> flight_spans(std::span<const int> cycle_index);

/// Keeps timesteps whose cycle lies in [first_cycle, last_cycle].
MultivariateSeries crop_cycles(const MultivariateSeries& series, int first_cycle, int last_cycle);

}  // namespace opsdann::data

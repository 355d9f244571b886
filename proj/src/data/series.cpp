#include "opsdann/data/series.hpp"

#include <cmath>

#include "opsdann/error.hpp"

namespace opsdann::data {

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::ascending:
      return "ascending";
    case Phase::steady:
      return "steady";
    case Phase::descending:
      return "descending";
  }
  return "?";
}

std::string_view domain_name(Domain domain) { return domain == Domain::source ? "source" : "target"; }

void MultivariateSeries::validate() const {
  const std::string who = "unit '" + unit_id + "': ";
  if (length == 0) throw Error(who + "empty series");
  if (values.size() != kChannels * length) {
    throw Error(who + "expected " + std::to_string(kChannels) + " channels");
  }
  if (cycle_index.size() != length) throw Error(who + "cycle index length mismatch");
  if (!(sample_rate_hz > 0.0)) throw Error(who + "sample rate must be positive");
  if (altitude_channel >= kChannels) throw Error(who + "altitude channel out of range");
  for (std::size_t i = 1; i < length; ++i) {
    if (cycle_index[i] < cycle_index[i - 1]) throw Error(who + "cycle index decreases at row " + std::to_string(i));
  }
  if (fault_onset_cycle >= eol_cycle) throw Error(who + "fault onset must precede end of life");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(who + "non-finite sensor value");
  }
}

std::vector<FlightSpan> flight_spans(std::span<const int> cycle_index) {
  std::vector<FlightSpan> spans;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= cycle_index.size(); ++i) {
    if (i == cycle_index.size() || cycle_index[i] != cycle_index[begin]) {
      spans.push_back({begin, i, cycle_index[begin]});
      begin = i;
    }
  }
  return spans;
}

MultivariateSeries crop_cycles(const MultivariateSeries& series, int first_cycle, int last_cycle) {
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < series.length; ++t) {
    const int c = series.cycle_index[t];
    if (c >= first_cycle && c <= last_cycle) keep.push_back(t);
  }
  if (keep.empty()) {
    throw Error("unit '" + series.unit_id + "': no samples in cycles [" + std::to_string(first_cycle) +
                ", " + std::to_string(last_cycle) + "]");
  }
  MultivariateSeries out = series;
  out.length = keep.size();
  out.values.assign(series.channels() * keep.size(), 0.0);
  out.cycle_index.resize(keep.size());
  for (std::size_t c = 0; c < series.channels(); ++c) {
    auto src = series.channel(c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < keep.size(); ++i) dst[i] = src[keep[i]];
  }
  for (std::size_t i = 0; i < keep.size(); ++i) out.cycle_index[i] = series.cycle_index[keep[i]];
  return out;
}

}  // namespace opsdann::data

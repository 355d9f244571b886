#include "opsdann/data/windows.hpp"

#include "opsdann/error.hpp"

namespace opsdann::data {

std::size_t window_count(std::size_t n, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0) throw Error("window length and stride must be positive");
  if (n < length) {
    throw Error("series of length " + std::to_string(n) + " is shorter than the window length " +
                std::to_string(length));
  }
  return (n - length) / stride + 1;
}

std::vector<Window> make_windows(const PreparedUnit& unit, Domain domain, bool labeled, std::size_t length,
                                 std::size_t stride) {
  const auto& s = unit.series;
  const std::size_t count = window_count(s.length, length, stride);
  std::vector<Window> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride, last = start + length - 1;
    Window win;
    win.length = length;
    win.domain = domain;
    win.phase = unit.phase[last];
    if (labeled) win.rul_norm = unit.rul[last];
    win.unit_id = s.unit_id;
    win.cycle = s.cycle_index[last];
    win.data.resize(s.channels() * length);
    for (std::size_t c = 0; c < s.channels(); ++c) {
      auto src = s.channel(c);
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(start), length, win.data.begin() + static_cast<std::ptrdiff_t>(c * length));
    }
    windows.push_back(std::move(win));
  }
  return windows;
}

WindowDataset::WindowDataset(std::vector<PreparedUnit> units, Domain domain, bool labeled, std::size_t length,
                             std::size_t stride)
    : units_(std::move(units)), domain_(domain), labeled_(labeled), length_(length) {
  for (std::size_t u = 0; u < units_.size(); ++u) {
    const auto& unit = units_[u];
    if (unit.phase.size() != unit.series.length) throw Error("prepared unit has mismatched phase labels");
    if (labeled_ && unit.rul.size() != unit.series.length) throw Error("labeled unit lacks RUL labels");
    const std::size_t count = window_count(unit.series.length, length, stride);
    for (std::size_t w = 0; w < count; ++w) {
      refs_.push_back({u, w * stride});
      phases_.push_back(unit.phase[w * stride + length - 1]);
    }
  }
  if (!labeled_) {
    for (auto& unit : units_) unit.rul.clear();
  }
}

nn::Tensor WindowDataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw Error("cannot gather an empty batch");
  nn::Tensor batch({indices.size(), kChannels, length_});
  double* out = batch.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& ref = refs_.at(indices[b]);
    const auto& s = units_[ref.unit].series;
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double* src = s.values.data() + c * s.length + ref.start;
      std::copy_n(src, length_, out + (b * kChannels + c) * length_);
    }
  }
  return batch;
}

double WindowDataset::rul(std::size_t i) const {
  if (!labeled_) throw Error("RUL requested from an unlabeled window set");
  const auto& ref = refs_[i];
  return units_[ref.unit].rul[ref.start + length_ - 1];
}

int WindowDataset::cycle(std::size_t i) const {
  const auto& ref = refs_[i];
  return units_[ref.unit].series.cycle_index[ref.start + length_ - 1];
}

WindowDataset WindowDataset::without_labels() const {
  WindowDataset copy = *this;
  copy.labeled_ = false;
  for (auto& unit : copy.units_) unit.rul.clear();
  return copy;
}

WindowDataset WindowDataset::subset(std::span<const std::size_t> indices) const {
  WindowDataset copy;
  copy.units_ = units_;
  copy.domain_ = domain_;
  copy.labeled_ = labeled_;
  copy.length_ = length_;
  for (auto i : indices) {
    copy.refs_.push_back(refs_.at(i));
    copy.phases_.push_back(phases_.at(i));
  }
  return copy;
}

nn::Container WindowDataset::to_container() const {
  nn::Container out;
  const std::size_t n = size();
  if (n == 0) throw Error("cannot serialize an empty window set");
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  out.add("windows/data", gather(all));
  std::vector<double> phase(n), cycle(n), unit(n), domain(n, static_cast<double>(domain_));
  for (std::size_t i = 0; i < n; ++i) {
    phase[i] = static_cast<double>(phases_[i]);
    cycle[i] = static_cast<double>(this->cycle(i));
    unit[i] = static_cast<double>(refs_[i].unit);
  }
  out.add("windows/phase", nn::Tensor({n}, std::move(phase)));
  out.add("windows/domain", nn::Tensor({n}, std::move(domain)));
  out.add("windows/cycle", nn::Tensor({n}, std::move(cycle)));
  out.add("windows/unit", nn::Tensor({n}, std::move(unit)));
  if (labeled_) {
    std::vector<double> rul_values(n);
    for (std::size_t i = 0; i < n; ++i) rul_values[i] = rul(i);
    out.add("windows/rul", nn::Tensor({n}, std::move(rul_values)));
  }
  return out;
}

std::vector<Window> WindowDataset::windows_from_container(const nn::Container& container) {
  const auto& data = container.get("windows/data");
  if (data.rank() != 3) throw FormatError("windows/data must be n x channels x length");
  const std::size_t n = data.dim(0), channels = data.dim(1), length = data.dim(2);
  const auto& phase = container.get("windows/phase");
  const auto& domain = container.get("windows/domain");
  const auto& cycle = container.get("windows/cycle");
  const auto& unit = container.get("windows/unit");
  const nn::Tensor* rul = container.contains("windows/rul") ? &container.get("windows/rul") : nullptr;
  std::vector<Window> windows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& w = windows[i];
    w.length = length;
    w.data.assign(data.values().begin() + static_cast<std::ptrdiff_t>(i * channels * length),
                  data.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * channels * length));
    w.phase = static_cast<Phase>(static_cast<int>(phase[i]));
    w.domain = static_cast<Domain>(static_cast<int>(domain[i]));
    w.cycle = static_cast<int>(cycle[i]);
    w.unit_id = std::to_string(static_cast<long>(unit[i]));
    if (rul) w.rul_norm = (*rul)[i];
  }
  return windows;
}

}  // namespace opsdann::data

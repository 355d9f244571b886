#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opsdann/data/preprocess.hpp"
#include "opsdann/data/series.hpp"
#include "opsdann/nn/container.hpp"
#include "opsdann/nn/tensor.hpp"

namespace opsdann::data {

inline constexpr std::size_t kWindowLength = 50;

/// A p x T slice labeled by its last timestep.
struct Window {
  std::vector<double> data;  // channel-major, kChannels x length
  std::size_t length = kWindowLength;
  Domain domain = Domain::source;
  Phase phase = Phase::steady;
  std::optional<double> rul_norm;  // absent for unlabeled windows
  std::string unit_id;
  int cycle = 0;
};

/// floor((n - length) / stride) + 1
std::size_t window_count(std::size_t n, std::size_t length, std::size_t stride);

/// Materializes the windows of one prepared unit. Labels are attached only when
/// `labeled` is true.
std::vector<Window> make_windows(const PreparedUnit& unit, Domain domain, bool labeled,
                                 std::size_t length = kWindowLength, std::size_t stride = 1);

/// Windows over a set of prepared units without copying the data until a batch is
/// gathered. Target-domain sets are built unlabeled; evaluation labels live in a
/// separate vector that training code never receives.
class WindowDataset {
 public:
  struct Ref {
    std::size_t unit;
    std::size_t start;
  };

  WindowDataset() = default;
  WindowDataset(std::vector<PreparedUnit> units, Domain domain, bool labeled,
                std::size_t length = kWindowLength, std::size_t stride = 1);

  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  bool labeled() const { return labeled_; }
  Domain domain() const { return domain_; }
  std::size_t window_length() const { return length_; }

  /// batch x channels x length tensor of the selected windows.
  nn::Tensor gather(std::span<const std::size_t> indices) const;
  Phase phase(std::size_t i) const { return phases_[i]; }
  /// Throws when the set is unlabeled.
  double rul(std::size_t i) const;
  int cycle(std::size_t i) const;
  std::size_t unit_of(std::size_t i) const { return refs_[i].unit; }
  const std::vector<PreparedUnit>& units() const { return units_; }
  const Ref& ref(std::size_t i) const { return refs_[i]; }

  /// Same windows with labels stripped.
  WindowDataset without_labels() const;
  /// Keeps only the given windows (used for held-out splits).
  WindowDataset subset(std::span<const std::size_t> indices) const;

  /// Serializes data, labels and provenance into a container.
  nn::Container to_container() const;
  static std::vector<Window> windows_from_container(const nn::Container& container);

 private:
  std::vector<PreparedUnit> units_;
  std::vector<Ref> refs_;
  std::vector<Phase> phases_;
  Domain domain_ = Domain::source;
  bool labeled_ = false;
  std::size_t length_ = kWindowLength;
};

}  // namespace opsdann::data

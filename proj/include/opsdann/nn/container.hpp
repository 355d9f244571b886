#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "opsdann/nn/tensor.hpp"

namespace opsdann::nn {

/// Self-describing binary snapshot: ordered named tensors.
///
/// Layout (all integers and floats little-endian):
///   8 bytes   magic "OPSDANN\0"
///   u32       version (1)
///   u64       entry count
///   per entry: u32 name length, name bytes, u32 rank, u64 extents[rank], f64 values
class Container {
 public:
  static constexpr char kMagic[8] = {'O', 'P', 'S', 'D', 'A', 'N', 'N', '\0'};
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  /// Throws FormatError when the entry is absent.
  const Tensor& get(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  void write(std::ostream& out) const;
  static Container read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace opsdann::nn

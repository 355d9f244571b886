#include "opsdann/nn/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "opsdann/error.hpp"

namespace opsdann::nn {

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T take(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw FormatError(std::string("container truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void Container::add(std::string name, Tensor tensor) {
  if (contains(name)) throw Error("duplicate container entry '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor)});
}

bool Container::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const Tensor& Container::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw FormatError("container has no entry '" + name + "'");
}

void Container::write(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto extent : e.tensor.shape()) put<std::uint64_t>(out, extent);
    for (double v : e.tensor.values()) put<double>(out, v);
  }
  if (!out) throw Error("failed writing container");
}

Container Container::read(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw FormatError("not an OPSDANN container (bad magic)");
  }
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto count = take<std::uint64_t>(in, "entry count");
  Container result;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_length = take<std::uint32_t>(in, "name length");
    std::string name(name_length, '\0');
    if (!in.read(name.data(), name_length)) throw FormatError("container truncated in entry name");
    const auto rank = take<std::uint32_t>(in, "rank");
    if (rank == 0 || rank > 8) throw FormatError("entry '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& extent : shape) extent = take<std::uint64_t>(in, "extent");
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = take<double>(in, "values");
    result.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return result;
}

void Container::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out);
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read(in);
}

}  // namespace opsdann::nn

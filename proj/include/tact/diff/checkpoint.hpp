#pragma once

#include "tact/diff/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tact::diff {

/// On-disk element types of the named-tensor container.
enum class DType : std::uint8_t { F64 = 0, F32 = 1, U8 = 2 };

/// One named entry. Numeric entries carry `tensor`; U8 entries carry an
/// opaque byte string in `bytes` (used for RNG engine state).
struct Entry {
  std::string name;
  DType dtype = DType::F64;
  Tensor tensor;
  std::string bytes;
};

/// Named-tensor container.
///
/// Layout, all integers little-endian:
///   u8   version (currently 1)
///   u32  entry count
///   per entry header: u32 name length, name bytes, u8 dtype, u32 rank,
///                     u64 dims[rank]
///   payloads in header order, row-major (f64 / f32 / raw bytes)
class Checkpoint {
 public:
  static constexpr std::uint8_t kVersion = 1;

  void put(std::string name, Tensor tensor, DType dtype = DType::F64);
  void put_bytes(std::string name, std::string bytes);
  void put_scalar(std::string name, double v);
  /// Adds every tensor of `params` as "<prefix><name>".
  void put_params(const std::string& prefix, const ParamSet& params, DType dtype = DType::F64);

  bool contains(const std::string& name) const;
  const Entry& get(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const { return get(name).tensor; }
  double scalar(const std::string& name) const;
  const std::string& bytes(const std::string& name) const;
  /// Overwrites `params` from entries "<prefix><name>"; shapes must match.
  void read_params(const std::string& prefix, ParamSet& params) const;
  /// Builds a ParamSet from every entry whose name starts with `prefix`.
  ParamSet params_with_prefix(const std::string& prefix) const;

  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace tact::diff

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "pltts/numerics/layers.hpp"

namespace pltts {

/// Named-tensor container shared by model checkpoints, feature caches and
/// style-feature exports.
///
/// Layout (all integers little-endian):
///   8 bytes   magic "PLTTSCKP"
///   u32       format version (1)
///   u32       metadata entry count, then per entry:
///               u32 key length, key bytes, u32 value length, value bytes
///   u32       tensor count, then per tensor:
///               u32 name length, UTF-8 name, u32 rank, rank × u64 extents,
///               numel × f64 payload
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  TensorList tensors;

  void add(const std::string& name, const Tensor& t) { tensors.push_back({name, t}); }
  void add_all(const TensorList& list) {
    for (const auto& e : list) tensors.push_back(e);
  }
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;

  /// Copies stored values into the given tensors, matching by name and
  /// checking shapes.
  void restore_into(const TensorList& targets) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace pltts

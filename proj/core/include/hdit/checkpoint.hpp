// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdit/tensor.hpp"

namespace hdit {

/// Named tensor archive. Layout: "HDIT", u32 version, u32 entry count, then
/// per entry (u32 name length, name, u8 dtype, u32 rank, i64 dims..., u64
/// offset, u64 byte size), then the payload region. Offsets are relative to
/// the payload start; all integers and payloads are little-endian.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  enum class Kind : std::uint8_t { f32 = 0, f64 = 1, i64 = 2 };

  struct Entry {
    std::string name;
    Kind kind = Kind::f32;
    Shape shape;
    std::vector<std::uint8_t> bytes;
  };

  void put(const std::string& name, const Shape& shape, std::span<const float> values);
  void put(const std::string& name, const Shape& shape, std::span<const double> values);
  void put_int(const std::string& name, std::int64_t value);

  bool contains(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  /// Values converted to T; throws IoError if the entry is missing or its
  /// shape differs from `expected`.
  template <typename T>
  std::vector<T> get(const std::string& name, const Shape& expected) const;
  std::int64_t get_int(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  Entry& slot(const std::string& name);
  std::vector<Entry> entries_;
};

/// Stores each parameter under prefix + name.
template <typename T>
void store_params(Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& params);
/// Overwrites parameter values in place (autodiff state untouched).
template <typename T>
void load_params(const Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& params);

}  // namespace hdit

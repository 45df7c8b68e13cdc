// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "erde/error.hpp"
#include "erde/model/network.hpp"

// Weight file layout (all integers little-endian):
//   "ERDE" | version u32 | tensor count u32 |
//   per tensor: name length u16 | UTF-8 name | dtype u8 | rank u8 | dims u32[rank] | raw elements
namespace erde::model {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i32 = 2 };

class WeightFileError : public Error {
 public:
  enum class Kind { bad_magic, version_mismatch, truncated, name_collision, bad_dtype, missing_tensor, shape_mismatch, io };

  WeightFileError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// One entry of a weight archive. Values are held in double regardless of
/// the on-disk dtype; f32 and i32 entries round-trip exactly.
struct ArchiveTensor {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

std::vector<std::uint8_t> encode_archive(const std::vector<ArchiveTensor>& tensors);
std::vector<ArchiveTensor> decode_archive(const std::vector<std::uint8_t>& bytes);

/// Architecture plus every parameter and BN statistic of `net`. Floating
/// tensors are written as `precision` (f32 or f64).
std::vector<ArchiveTensor> to_archive(const MultiExitNetwork& net, DType precision = DType::f64);
MultiExitNetwork from_archive(const std::vector<ArchiveTensor>& tensors);

void save_weights(const MultiExitNetwork& net, const std::filesystem::path& path, DType precision = DType::f64);
MultiExitNetwork load_weights(const std::filesystem::path& path);

}  // namespace erde::model

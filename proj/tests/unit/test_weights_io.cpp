// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "erde/model/weights_io.hpp"

namespace {

using namespace erde::model;
using Kind = WeightFileError::Kind;

MultiExitNetwork sample_net(BlockKind kind = BlockKind::plain_conv) {
  ArchConfig a = preset("tiny8", 4, 1, 16, 16, 4, kind);
  a.seed = 77;
  a.dropout_p = 0.3;
  MultiExitNetwork net(a);
  // Non-default BN statistics so buffers are exercised.
  for (auto& b : net.mutable_blocks()) {
    for (auto& n : b.norms) {
      for (std::size_t i = 0; i < n.running_mean.size(); ++i) {
        n.running_mean[i] = 0.1 * static_cast<double>(i) - 0.3;
        n.running_var[i] = 1.0 + 0.01 * static_cast<double>(i);
      }
    }
  }
  return net;
}

void expect_bitwise_equal(const MultiExitNetwork& a, const MultiExitNetwork& b) {
  EXPECT_EQ(a.arch(), b.arch());
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i].tensor.shape(), pb[i].tensor.shape());
    for (std::size_t j = 0; j < pa[i].tensor.size(); ++j) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(pa[i].tensor[j]), std::bit_cast<std::uint64_t>(pb[i].tensor[j]))
          << pa[i].name;
    }
  }
  const auto ba = a.buffers(), bb = b.buffers();
  ASSERT_EQ(ba.size(), bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) EXPECT_EQ(*ba[i].values, *bb[i].values) << ba[i].name;
}

Kind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    (void)from_archive(decode_archive(bytes));
  } catch (const WeightFileError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a WeightFileError";
  return Kind::io;
}

TEST(WeightFile, RoundTripF64Bitwise) {
  for (BlockKind kind : {BlockKind::plain_conv, BlockKind::residual}) {
    const auto net = sample_net(kind);
    const auto path = std::filesystem::temp_directory_path() / "erde_roundtrip_f64.bin";
    save_weights(net, path);
    expect_bitwise_equal(net, load_weights(path));
    std::filesystem::remove(path);
  }
}

TEST(WeightFile, RoundTripF32Lossless) {
  auto net = sample_net();
  for (auto& p : net.parameters()) {
    auto t = p.tensor;
    for (double& v : t.mutable_data()) v = static_cast<float>(v);
  }
  for (auto& b : net.buffers()) {
    for (double& v : *b.values) v = static_cast<float>(v);
  }
  const auto bytes = encode_archive(to_archive(net, DType::f32));
  expect_bitwise_equal(net, from_archive(decode_archive(bytes)));
  // Re-encoding reproduces the file byte for byte.
  EXPECT_EQ(encode_archive(to_archive(from_archive(decode_archive(bytes)), DType::f32)), bytes);
}

TEST(WeightFile, HeaderLayout) {
  const auto bytes = encode_archive({{"a.b", DType::f64, {2}, {1.5, -2.0}}, {"c", DType::i32, {1, 1}, {7}}});
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "ERDE", 4), 0);
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  EXPECT_EQ(bytes[8], 2);  // tensor count
  EXPECT_EQ(bytes[12], 3);  // name length u16
  EXPECT_EQ(bytes[13], 0);
  EXPECT_EQ(std::string(bytes.begin() + 14, bytes.begin() + 17), "a.b");
  EXPECT_EQ(bytes[17], 1);  // dtype f64
  EXPECT_EQ(bytes[18], 1);  // rank
  EXPECT_EQ(bytes[19], 2);  // dim 0
  double first;
  std::memcpy(&first, bytes.data() + 23, 8);
  EXPECT_EQ(first, 1.5);
  const std::size_t expected = 12 + (2 + 3 + 1 + 1 + 4 + 16) + (2 + 1 + 1 + 1 + 8 + 4);
  EXPECT_EQ(bytes.size(), expected);
  const auto back = decode_archive(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].values[0], 7.0);
}

TEST(WeightFile, BadMagic) {
  auto bytes = encode_archive(to_archive(sample_net()));
  bytes[0] = 'X';
  EXPECT_EQ(decode_error(bytes), Kind::bad_magic);
  EXPECT_EQ(decode_error({}), Kind::bad_magic);
}

TEST(WeightFile, VersionMismatch) {
  auto bytes = encode_archive(to_archive(sample_net()));
  bytes[4] = 2;
  EXPECT_EQ(decode_error(bytes), Kind::version_mismatch);
}

TEST(WeightFile, TruncatedPayload) {
  const auto bytes = encode_archive(to_archive(sample_net()));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}}) {
    EXPECT_EQ(decode_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(cut))),
              Kind::truncated)
        << "cut at " << cut;
  }
}

TEST(WeightFile, NameCollision) {
  auto tensors = to_archive(sample_net());
  tensors.push_back(tensors.back());
  EXPECT_EQ(decode_error(encode_archive(tensors)), Kind::name_collision);
}

TEST(WeightFile, MissingAndMisshapenTensors) {
  auto tensors = to_archive(sample_net());
  auto dropped = tensors;
  dropped.pop_back();
  EXPECT_EQ(decode_error(encode_archive(dropped)), Kind::missing_tensor);
  auto reshaped = tensors;
  reshaped[2].dims = {static_cast<std::uint32_t>(reshaped[2].values.size())};
  EXPECT_EQ(decode_error(encode_archive(reshaped)), Kind::shape_mismatch);
}

TEST(WeightFile, UnknownDtype) {
  auto bytes = encode_archive({{"x", DType::f64, {1}, {1.0}}});
  bytes[12 + 2 + 1] = 9;
  EXPECT_EQ(decode_error(bytes), Kind::bad_dtype);
}

TEST(WeightFile, MissingFileIsIoError) {
  try {
    (void)load_weights("/nonexistent/erde/weights.bin");
    FAIL();
  } catch (const WeightFileError& e) {
    EXPECT_EQ(e.kind(), Kind::io);
  }
}

}  // namespace

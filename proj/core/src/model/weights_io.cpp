// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/model/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>
#include <unordered_set>

namespace erde::model {

namespace {

using Kind = WeightFileError::Kind;

constexpr char kMagic[4] = {'E', 'R', 'D', 'E'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw WeightFileError(Kind::truncated, std::string("weights: truncated file while reading ") + what);
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::size_t count_of(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode_archive(const std::vector<ArchiveTensor>& tensors) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kWeightFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const ArchiveTensor& t : tensors) {
    if (t.name.size() > 0xFFFF) throw WeightFileError(Kind::io, "weights: tensor name too long: " + t.name);
    if (t.dims.size() > 0xFF) throw WeightFileError(Kind::io, "weights: rank too large for " + t.name);
    if (count_of(t.dims) != t.values.size()) {
      throw WeightFileError(Kind::shape_mismatch, "weights: element count does not match dims for " + t.name);
    }
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.le<std::uint32_t>(d);
    for (double v : t.values) {
      switch (t.dtype) {
        case DType::f32: w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v))); break;
        case DType::f64: w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(v)); break;
        case DType::i32: w.le<std::int32_t>(static_cast<std::int32_t>(v)); break;
      }
    }
  }
  return w.take();
}

std::vector<ArchiveTensor> decode_archive(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw WeightFileError(Kind::bad_magic, "weights: bad magic (not an ERDE weight file)");
  }
  Reader r(bytes);
  r.text(4, "magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw WeightFileError(Kind::version_mismatch, "weights: version mismatch (file " + std::to_string(version) +
                                                      ", supported " + std::to_string(kWeightFormatVersion) + ")");
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  std::vector<ArchiveTensor> out;
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveTensor t;
    const auto name_len = r.le<std::uint16_t>("name length");
    t.name = r.text(name_len, "name");
    if (!seen.insert(t.name).second) {
      throw WeightFileError(Kind::name_collision, "weights: name collision, '" + t.name + "' appears twice");
    }
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype > static_cast<std::uint8_t>(DType::i32)) {
      throw WeightFileError(Kind::bad_dtype, "weights: unknown dtype code " + std::to_string(dtype) + " for " + t.name);
    }
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.le<std::uint8_t>("rank");
    for (std::uint8_t d = 0; d < rank; ++d) t.dims.push_back(r.le<std::uint32_t>("dims"));
    const std::size_t n = count_of(t.dims);
    const std::size_t width = t.dtype == DType::f64 ? 8 : 4;
    r.need(n * width, "tensor payload");
    t.values.resize(n);
    for (double& v : t.values) {
      switch (t.dtype) {
        case DType::f32: v = std::bit_cast<float>(r.le<std::uint32_t>("payload")); break;
        case DType::f64: v = std::bit_cast<double>(r.le<std::uint64_t>("payload")); break;
        case DType::i32: v = r.le<std::int32_t>("payload"); break;
      }
    }
    out.push_back(std::move(t));
  }
  if (!r.done()) throw WeightFileError(Kind::truncated, "weights: trailing bytes after last tensor");
  return out;
}

namespace {

constexpr int kArchLayout = 1;

ArchiveTensor encode_arch(const ArchConfig& arch) {
  std::vector<double> v = {kArchLayout,
                           static_cast<double>(arch.in_channels),
                           static_cast<double>(arch.height),
                           static_cast<double>(arch.width),
                           static_cast<double>(arch.class_count),
                           static_cast<double>(arch.blocks.size()),
                           static_cast<double>(static_cast<std::int32_t>(arch.seed & 0xFFFFFFFFu)),
                           static_cast<double>(static_cast<std::int32_t>(arch.seed >> 32))};
  for (const BlockSpec& b : arch.blocks) {
    v.push_back(static_cast<double>(b.kind));
    v.push_back(static_cast<double>(b.in_channels));
    v.push_back(static_cast<double>(b.out_channels));
    v.push_back(static_cast<double>(b.stride));
    v.push_back(static_cast<double>(b.conv_count));
  }
  return {"arch", DType::i32, {static_cast<std::uint32_t>(v.size())}, std::move(v)};
}

ArchConfig decode_arch(const ArchiveTensor& t, double dropout) {
  const auto& v = t.values;
  auto bad = [] { return WeightFileError(Kind::shape_mismatch, "weights: malformed architecture record"); };
  if (v.size() < 8 || v[0] != kArchLayout) throw bad();
  ArchConfig arch;
  arch.in_channels = static_cast<std::size_t>(v[1]);
  arch.height = static_cast<std::size_t>(v[2]);
  arch.width = static_cast<std::size_t>(v[3]);
  arch.class_count = static_cast<std::size_t>(v[4]);
  const auto blocks = static_cast<std::size_t>(v[5]);
  const auto lo = static_cast<std::uint32_t>(static_cast<std::int32_t>(v[6]));
  const auto hi = static_cast<std::uint32_t>(static_cast<std::int32_t>(v[7]));
  arch.seed = (static_cast<std::uint64_t>(hi) << 32) | lo;
  if (v.size() != 8 + 5 * blocks) throw bad();
  for (std::size_t i = 0; i < blocks; ++i) {
    const double* b = v.data() + 8 + 5 * i;
    if (b[0] != 0 && b[0] != 1) throw bad();
    arch.blocks.push_back({static_cast<BlockKind>(static_cast<int>(b[0])), static_cast<std::size_t>(b[1]),
                           static_cast<std::size_t>(b[2]), static_cast<std::size_t>(b[3]),
                           static_cast<std::size_t>(b[4])});
  }
  arch.dropout_p = dropout;
  return arch;
}

std::vector<std::uint32_t> dims_of(const ad::Shape& shape) {
  return std::vector<std::uint32_t>(shape.begin(), shape.end());
}

}  // namespace

std::vector<ArchiveTensor> to_archive(const MultiExitNetwork& net, DType precision) {
  if (precision == DType::i32) throw WeightFileError(Kind::bad_dtype, "weights: parameters must be f32 or f64");
  std::vector<ArchiveTensor> out;
  out.push_back(encode_arch(net.arch()));
  out.push_back({"arch.dropout", DType::f64, {1}, {net.arch().dropout_p}});
  for (const NamedTensor& p : net.parameters()) {
    out.push_back({p.name, precision, dims_of(p.tensor.shape()),
                   std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  for (const NamedBuffer& b : net.buffers()) {
    out.push_back({b.name, precision, {static_cast<std::uint32_t>(b.values->size())}, *b.values});
  }
  return out;
}

MultiExitNetwork from_archive(const std::vector<ArchiveTensor>& tensors) {
  std::unordered_map<std::string, const ArchiveTensor*> by_name;
  for (const ArchiveTensor& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) {
      throw WeightFileError(Kind::name_collision, "weights: name collision, '" + t.name + "' appears twice");
    }
  }
  auto find = [&](const std::string& name) -> const ArchiveTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw WeightFileError(Kind::missing_tensor, "weights: missing tensor '" + name + "'");
    return *it->second;
  };
  const ArchiveTensor& dropout = find("arch.dropout");
  if (dropout.values.size() != 1) throw WeightFileError(Kind::shape_mismatch, "weights: malformed arch.dropout");
  ArchConfig arch = decode_arch(find("arch"), dropout.values[0]);
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw WeightFileError(Kind::shape_mismatch, std::string("weights: invalid architecture: ") + e.what());
  }
  MultiExitNetwork net(arch);
  for (NamedTensor& p : net.parameters()) {
    const ArchiveTensor& t = find(p.name);
    if (t.dims != dims_of(p.tensor.shape())) {
      throw WeightFileError(Kind::shape_mismatch, "weights: shape mismatch for '" + p.name + "'");
    }
    std::copy(t.values.begin(), t.values.end(), p.tensor.mutable_data().begin());
  }
  for (NamedBuffer& b : net.buffers()) {
    const ArchiveTensor& t = find(b.name);
    if (t.values.size() != b.values->size()) {
      throw WeightFileError(Kind::shape_mismatch, "weights: shape mismatch for '" + b.name + "'");
    }
    *b.values = t.values;
  }
  return net;
}

void save_weights(const MultiExitNetwork& net, const std::filesystem::path& path, DType precision) {
  const auto bytes = encode_archive(to_archive(net, precision));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightFileError(Kind::io, "weights: cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightFileError(Kind::io, "weights: write failed for '" + path.string() + "'");
}

MultiExitNetwork load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError(Kind::io, "weights: cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_archive(decode_archive(bytes));
}

}  // namespace erde::model

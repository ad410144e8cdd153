#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "taotree/dataset.hpp"
#include "taotree/error.hpp"
#include "taotree/mimic.hpp"

namespace taotree {

// FTRS feature file, all little-endian:
//   "FTRS" u32 version=1 u64 N u64 F u32 K u8 dtype=0
//   N*F float32 row-major, then N u32 labels.
// HEAD classifier-head file:
//   "HEAD" u32 version=1 u32 num_layers
//   per layer: u32 out u32 in u8 activation (0 none, 1 relu)
//              out*in float32 row-major, out float32 bias.

struct ReadLimits {
  // Cap on any header-declared element count, checked before allocating.
  std::uint64_t max_elements = std::uint64_t{1} << 32;
};

namespace binio {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
  const std::vector<std::uint8_t>& data() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw InputError("failed writing '" + path + "'");
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::string what) : data_(data), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::uint64_t n, const char* field) const {
    if (n > remaining()) {
      throw ParseError(what_ + ": truncated while reading " + field + " (need " + std::to_string(n) +
                           " bytes, " + std::to_string(remaining()) + " left)",
                       pos_);
    }
  }
  std::uint8_t u8(const char* field) {
    need(1, field);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* field) { return static_cast<std::uint32_t>(get(4, field)); }
  std::uint64_t u64(const char* field) { return get(8, field); }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

  void magic(const char (&expected)[5]) {
    need(4, "magic");
    if (std::memcmp(data_.data() + pos_, expected, 4) != 0) {
      char hex[64];
      std::snprintf(hex, sizeof hex, "%02x %02x %02x %02x", data_[pos_], data_[pos_ + 1], data_[pos_ + 2],
                    data_[pos_ + 3]);
      throw ParseError(what_ + ": bad magic bytes [" + hex + "], expected \"" + expected + "\"", pos_);
    }
    pos_ += 4;
  }

  void expect_end() const {
    if (remaining() != 0) throw ParseError(what_ + ": " + std::to_string(remaining()) + " trailing bytes", pos_);
  }

 private:
  std::uint64_t get(int n, const char* field) {
    need(static_cast<std::uint64_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace binio

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::uint32_t kHeadFormatVersion = 1;

inline std::vector<std::uint8_t> encode_features(const Dataset& data) {
  binio::Writer w;
  w.bytes("FTRS", 4);
  w.u32(kFeatureFormatVersion);
  w.u64(data.size());
  w.u64(data.num_features());
  w.u32(static_cast<std::uint32_t>(data.num_classes()));
  w.u8(0);
  for (double v : data.features()) w.f32(static_cast<float>(v));
  for (Label y : data.labels()) w.u32(static_cast<std::uint32_t>(y));
  return w.data();
}

inline Dataset decode_features(std::span<const std::uint8_t> bytes, const ReadLimits& limits = {}) {
  binio::Reader r(bytes, "feature file");
  r.magic("FTRS");
  const std::size_t at_version = r.offset();
  const auto version = r.u32("version");
  if (version != kFeatureFormatVersion) {
    throw ParseError("feature file: unsupported version " + std::to_string(version), at_version);
  }
  const auto n = r.u64("N");
  const auto f = r.u64("F");
  const std::size_t at_k = r.offset();
  const auto k = r.u32("K");
  const std::size_t at_dtype = r.offset();
  const auto dtype = r.u8("dtype");
  if (dtype != 0) throw ParseError("feature file: unsupported dtype " + std::to_string(dtype), at_dtype);
  if (k < 2) throw ParseError("feature file: K must be >= 2", at_k);
  if (f != 0 && n > limits.max_elements / f) throw ParseError("feature file: N*F exceeds the read limit", at_version);
  if (n > limits.max_elements) throw ParseError("feature file: N exceeds the read limit", at_version);
  r.need(n * f * 4 + n * 4, "feature payload");
  std::vector<double> features(n * f);
  for (auto& v : features) v = static_cast<double>(r.f32("feature"));
  std::vector<Label> labels(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const auto y = r.u32("label");
    if (y >= k) throw ParseError("feature file: label " + std::to_string(y) + " >= K", at);
    labels[i] = static_cast<Label>(y);
  }
  r.expect_end();
  return Dataset(n, f, std::move(features), std::move(labels), static_cast<int>(k));
}

inline void write_features(const Dataset& data, const std::string& path) {
  binio::Writer w;
  const auto bytes = encode_features(data);
  w.bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  w.save(path);
}

inline Dataset read_features(const std::string& path, const ReadLimits& limits = {}) {
  const auto bytes = binio::slurp(path);
  return decode_features(bytes, limits);
}

inline std::vector<std::uint8_t> encode_head(const ClassifierHead& head) {
  head.validate();
  binio::Writer w;
  w.bytes("HEAD", 4);
  w.u32(kHeadFormatVersion);
  w.u32(static_cast<std::uint32_t>(head.layers.size()));
  for (const auto& L : head.layers) {
    w.u32(static_cast<std::uint32_t>(L.out));
    w.u32(static_cast<std::uint32_t>(L.in));
    w.u8(static_cast<std::uint8_t>(L.activation));
    for (double v : L.weights) w.f32(static_cast<float>(v));
    for (double v : L.bias) w.f32(static_cast<float>(v));
  }
  return w.data();
}

inline ClassifierHead decode_head(std::span<const std::uint8_t> bytes, const ReadLimits& limits = {}) {
  binio::Reader r(bytes, "head file");
  r.magic("HEAD");
  const std::size_t at_version = r.offset();
  const auto version = r.u32("version");
  if (version != kHeadFormatVersion) {
    throw ParseError("head file: unsupported version " + std::to_string(version), at_version);
  }
  const auto num_layers = r.u32("num_layers");
  if (num_layers == 0) throw ParseError("head file: no layers", at_version + 4);
  ClassifierHead head;
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    const std::size_t at = r.offset();
    DenseLayer L;
    L.out = r.u32("layer out");
    L.in = r.u32("layer in");
    const auto act = r.u8("activation");
    if (act > 1) throw ParseError("head file: unknown activation " + std::to_string(act), r.offset() - 1);
    L.activation = static_cast<Activation>(act);
    const std::uint64_t elems = static_cast<std::uint64_t>(L.out) * L.in;
    if (elems > limits.max_elements) throw ParseError("head file: layer exceeds the read limit", at);
    r.need((elems + L.out) * 4, "layer parameters");
    L.weights.resize(elems);
    for (auto& v : L.weights) v = static_cast<double>(r.f32("weight"));
    L.bias.resize(L.out);
    for (auto& v : L.bias) v = static_cast<double>(r.f32("bias"));
    head.layers.push_back(std::move(L));
  }
  r.expect_end();
  head.validate();
  return head;
}

inline void write_head(const ClassifierHead& head, const std::string& path) {
  binio::Writer w;
  const auto bytes = encode_head(head);
  w.bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  w.save(path);
}

inline ClassifierHead read_head(const std::string& path, const ReadLimits& limits = {}) {
  const auto bytes = binio::slurp(path);
  return decode_head(bytes, limits);
}

}  // namespace taotree

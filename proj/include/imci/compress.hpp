#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "imci/common.hpp"

namespace imci {

// Frame-of-reference integers: store base = min(values) and per-value deltas
// (value - base, computed in uint64 so the full int64 range round-trips) at a
// fixed byte-aligned width. width_bits = bit_width(max delta) rounded up to
// the next multiple of 8; a constant column packs to width 0.
struct PackedInts {
  int64_t base = 0;
  uint8_t width_bits = 0;
  uint32_t count = 0;
  std::vector<uint8_t> data;

  size_t byte_size() const { return sizeof(PackedInts) + data.size(); }
};

inline PackedInts pack_int64(const int64_t* values, size_t n) {
  PackedInts p;
  p.count = static_cast<uint32_t>(n);
  if (n == 0) return p;
  int64_t base = *std::min_element(values, values + n);
  uint64_t max_delta = 0;
  for (size_t i = 0; i < n; ++i) {
    uint64_t d = static_cast<uint64_t>(values[i]) - static_cast<uint64_t>(base);
    if (d > max_delta) max_delta = d;
  }
  int bits = std::bit_width(max_delta);
  bits = (bits + 7) / 8 * 8;
  p.base = base;
  p.width_bits = static_cast<uint8_t>(bits);
  size_t bytes = static_cast<size_t>(bits / 8);
  p.data.resize(n * bytes);
  uint8_t* out = p.data.data();
  for (size_t i = 0; i < n; ++i) {
    uint64_t d = static_cast<uint64_t>(values[i]) - static_cast<uint64_t>(base);
    for (size_t b = 0; b < bytes; ++b) out[i * bytes + b] = (d >> (b * 8)) & 0xff;
  }
  return p;
}

inline int64_t packed_int_at(const PackedInts& p, size_t i) {
  size_t bytes = p.width_bits / 8;
  if (bytes == 0) return p.base;
  uint64_t d = 0;
  const uint8_t* s = p.data.data() + i * bytes;
  for (size_t b = 0; b < bytes; ++b) d |= static_cast<uint64_t>(s[b]) << (b * 8);
  return static_cast<int64_t>(static_cast<uint64_t>(p.base) + d);
}

inline std::vector<int64_t> unpack_int64(const PackedInts& p) {
  std::vector<int64_t> out(p.count);
  size_t bytes = p.width_bits / 8;
  if (bytes == 0) {
    std::fill(out.begin(), out.end(), p.base);
    return out;
  }
  const uint8_t* s = p.data.data();
  for (size_t i = 0; i < p.count; ++i) {
    uint64_t d = 0;
    for (size_t b = 0; b < bytes; ++b)
      d |= static_cast<uint64_t>(s[i * bytes + b]) << (b * 8);
    out[i] = static_cast<int64_t>(static_cast<uint64_t>(p.base) + d);
  }
  return out;
}

// Dictionary-coded strings: dictionary in first-appearance order, one u32
// code per row.
struct PackedStrings {
  std::vector<std::string> dict;
  std::vector<uint32_t> codes;

  size_t byte_size() const {
    size_t s = sizeof(PackedStrings) + codes.size() * 4;
    for (const auto& d : dict) s += d.size() + sizeof(std::string);
    return s;
  }
};

inline PackedStrings pack_strings(const std::string* values, size_t n) {
  PackedStrings p;
  p.codes.reserve(n);
  std::unordered_map<std::string, uint32_t> seen;
  for (size_t i = 0; i < n; ++i) {
    auto [it, inserted] = seen.emplace(values[i], static_cast<uint32_t>(p.dict.size()));
    if (inserted) p.dict.push_back(values[i]);
    p.codes.push_back(it->second);
  }
  return p;
}

inline std::vector<std::string> unpack_strings(const PackedStrings& p) {
  std::vector<std::string> out;
  out.reserve(p.codes.size());
  for (uint32_t c : p.codes) out.push_back(p.dict[c]);
  return out;
}

// Flat serialization for checkpoint pack files.

inline void serialize_packed_ints(const PackedInts& p, std::vector<uint8_t>& out) {
  put_i64(out, p.base);
  put_u8(out, p.width_bits);
  put_u32(out, p.count);
  put_u32(out, static_cast<uint32_t>(p.data.size()));
  put_bytes(out, p.data.data(), p.data.size());
}

inline PackedInts deserialize_packed_ints(ByteReader& in) {
  PackedInts p;
  p.base = in.i64();
  p.width_bits = in.u8();
  p.count = in.u32();
  uint32_t len = in.u32();
  std::string raw = in.bytes(len);
  p.data.assign(raw.begin(), raw.end());
  return p;
}

inline void serialize_packed_strings(const PackedStrings& p, std::vector<uint8_t>& out) {
  put_u32(out, static_cast<uint32_t>(p.dict.size()));
  for (const auto& d : p.dict) {
    put_u32(out, static_cast<uint32_t>(d.size()));
    put_bytes(out, d.data(), d.size());
  }
  put_u32(out, static_cast<uint32_t>(p.codes.size()));
  for (uint32_t c : p.codes) put_u32(out, c);
}

inline PackedStrings deserialize_packed_strings(ByteReader& in) {
  PackedStrings p;
  uint32_t nd = in.u32();
  p.dict.reserve(nd);
  for (uint32_t i = 0; i < nd; ++i) p.dict.push_back(in.bytes(in.u32()));
  uint32_t nc = in.u32();
  p.codes.reserve(nc);
  for (uint32_t i = 0; i < nc; ++i) p.codes.push_back(in.u32());
  return p;
}

}  // namespace imci

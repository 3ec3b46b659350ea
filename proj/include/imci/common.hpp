#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

namespace imci {

using Lsn = uint64_t;
using Tid = uint64_t;
using Rid = uint64_t;
using TableId = uint32_t;
using PageId = uint64_t;

// Version id sentinel: "not yet visible" for insert VIDs, "+infinity" for
// delete VIDs. Slot state bitmaps disambiguate the two uses.
inline constexpr uint64_t kInvalidVid = ~uint64_t{0};

enum class ErrorCode {
  DuplicateKey,
  KeyNotFound,
  TxnNotActive,
  IoFailure,
  CorruptEntry,
  DuplicatePk,
  NotFound,
  ConflictingPk,
  PageStateMismatch,
  ApplyConflict,
  SnapshotAhead,
  NotLeader,
  NoLiveRo,
  ChecksumMismatch,
  MissingPackFile,
  UnknownVerb,
  NoAvailableNode,
  ClusterDown,
  InvalidArgument,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::KeyNotFound: return "KeyNotFound";
    case ErrorCode::TxnNotActive: return "TxnNotActive";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::CorruptEntry: return "CorruptEntry";
    case ErrorCode::DuplicatePk: return "DuplicatePk";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ConflictingPk: return "ConflictingPk";
    case ErrorCode::PageStateMismatch: return "PageStateMismatch";
    case ErrorCode::ApplyConflict: return "ApplyConflict";
    case ErrorCode::SnapshotAhead: return "SnapshotAhead";
    case ErrorCode::NotLeader: return "NotLeader";
    case ErrorCode::NoLiveRo: return "NoLiveRo";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::MissingPackFile: return "MissingPackFile";
    case ErrorCode::UnknownVerb: return "UnknownVerb";
    case ErrorCode::NoAvailableNode: return "NoAvailableNode";
    case ErrorCode::ClusterDown: return "ClusterDown";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

inline bool error_code_from_name(const std::string& name, ErrorCode& out) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::InvalidArgument); ++i) {
    auto c = static_cast<ErrorCode>(i);
    if (name == error_code_name(c)) {
      out = c;
      return true;
    }
  }
  return false;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code),
        msg_(what) {}
  ErrorCode code() const { return code_; }
  // The message without the code-name prefix that what() carries.
  const std::string& msg() const { return msg_; }

 private:
  ErrorCode code_;
  std::string msg_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

// FNV-1a over the 8 little-endian bytes of a 64-bit key. Fixed constants so
// dispatch decisions are reproducible across runs and platforms.
inline uint64_t fnv1a64(uint64_t key) {
  uint64_t h = 14695981039346656037ULL;
  for (int i = 0; i < 8; ++i) {
    h ^= (key >> (i * 8)) & 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint32_t crc32_of(const uint8_t* data, size_t len) {
  return static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

// Little-endian buffer helpers.
inline void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }
inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}
inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (i * 8)) & 0xff);
}
inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back((v >> (i * 8)) & 0xff);
}
inline void put_i64(std::vector<uint8_t>& b, int64_t v) {
  put_u64(b, static_cast<uint64_t>(v));
}
inline void put_bytes(std::vector<uint8_t>& b, const void* p, size_t n) {
  const uint8_t* s = static_cast<const uint8_t*>(p);
  b.insert(b.end(), s, s + n);
}

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t len) : p_(data), end_(data + len) {}
  explicit ByteReader(const std::vector<uint8_t>& v)
      : ByteReader(v.data(), v.size()) {}

  size_t remaining() const { return static_cast<size_t>(end_ - p_); }

  uint8_t u8() { return *take(1); }
  uint16_t u16() {
    const uint8_t* s = take(2);
    return static_cast<uint16_t>(s[0] | (s[1] << 8));
  }
  uint32_t u32() {
    const uint8_t* s = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(s[i]) << (i * 8);
    return v;
  }
  uint64_t u64() {
    const uint8_t* s = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(s[i]) << (i * 8);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  std::string bytes(size_t n) {
    const uint8_t* s = take(n);
    return std::string(reinterpret_cast<const char*>(s), n);
  }

 private:
  const uint8_t* take(size_t n) {
    if (remaining() < n) raise(ErrorCode::CorruptEntry, "short read");
    const uint8_t* s = p_;
    p_ += n;
    return s;
  }
  const uint8_t* p_;
  const uint8_t* end_;
};

}  // namespace imci

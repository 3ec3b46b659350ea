#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "imci/common.hpp"

namespace imci {

// Physical redo record, little-endian on disk:
//
//   u32 total_len | u64 lsn | u64 tid | u8 kind | u64 page_id | u16 slot_id |
//   u32 table_id | u32 payload_len | payload bytes | u32 crc32
//
// total_len counts the whole record including itself and the trailing crc.
// The crc covers every byte before it. Insert payloads are full row images,
// update payloads are (column, value) pair lists, delete/commit/abort carry
// none. Commit and abort are transaction markers with page_id = slot_id = 0.

enum class EntryKind : uint8_t {
  Insert = 1,
  Update = 2,
  Delete = 3,
  Commit = 4,
  Abort = 5,
};

inline const char* entry_kind_name(EntryKind k) {
  switch (k) {
    case EntryKind::Insert: return "insert";
    case EntryKind::Update: return "update";
    case EntryKind::Delete: return "delete";
    case EntryKind::Commit: return "commit";
    case EntryKind::Abort: return "abort";
  }
  return "?";
}

struct RedoEntry {
  Lsn lsn = 0;
  Tid tid = 0;
  EntryKind kind = EntryKind::Insert;
  PageId page_id = 0;
  uint16_t slot_id = 0;
  TableId table_id = 0;
  std::vector<uint8_t> payload;

  bool is_dml() const {
    return kind == EntryKind::Insert || kind == EntryKind::Update ||
           kind == EntryKind::Delete;
  }
  bool is_terminal() const {
    return kind == EntryKind::Commit || kind == EntryKind::Abort;
  }
};

inline constexpr size_t kRedoFixedBytes = 4 + 8 + 8 + 1 + 8 + 2 + 4 + 4 + 4;

inline size_t encoded_entry_size(const RedoEntry& e) {
  return kRedoFixedBytes + e.payload.size();
}

inline void encode_entry(const RedoEntry& e, std::vector<uint8_t>& out) {
  size_t start = out.size();
  put_u32(out, static_cast<uint32_t>(encoded_entry_size(e)));
  put_u64(out, e.lsn);
  put_u64(out, e.tid);
  put_u8(out, static_cast<uint8_t>(e.kind));
  put_u64(out, e.page_id);
  put_u16(out, e.slot_id);
  put_u32(out, e.table_id);
  put_u32(out, static_cast<uint32_t>(e.payload.size()));
  put_bytes(out, e.payload.data(), e.payload.size());
  put_u32(out, crc32_of(out.data() + start, out.size() - start));
}

// Decodes one record at `data` (len bytes available). Returns the entry and
// its encoded size. Any structural or checksum problem raises CorruptEntry.
inline std::pair<RedoEntry, size_t> decode_entry(const uint8_t* data, size_t len) {
  if (len < kRedoFixedBytes) raise(ErrorCode::CorruptEntry, "truncated record header");
  ByteReader head(data, 4);
  uint32_t total = head.u32();
  if (total < kRedoFixedBytes || total > len)
    raise(ErrorCode::CorruptEntry, "record length out of range");
  uint32_t stored_crc;
  {
    ByteReader tail(data + total - 4, 4);
    stored_crc = tail.u32();
  }
  if (crc32_of(data, total - 4) != stored_crc)
    raise(ErrorCode::CorruptEntry, "crc mismatch");
  ByteReader in(data + 4, total - 8);
  RedoEntry e;
  e.lsn = in.u64();
  e.tid = in.u64();
  uint8_t kind = in.u8();
  if (kind < 1 || kind > 5) raise(ErrorCode::CorruptEntry, "bad entry kind");
  e.kind = static_cast<EntryKind>(kind);
  e.page_id = in.u64();
  e.slot_id = in.u16();
  e.table_id = in.u32();
  uint32_t payload_len = in.u32();
  if (payload_len != in.remaining())
    raise(ErrorCode::CorruptEntry, "payload length mismatch");
  e.payload.resize(payload_len);
  if (payload_len) {
    std::string bytes = in.bytes(payload_len);
    std::memcpy(e.payload.data(), bytes.data(), payload_len);
  }
  return {std::move(e), total};
}

}  // namespace imci

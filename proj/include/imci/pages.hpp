#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <unordered_map>
#include <vector>

#include "imci/redo.hpp"
#include "imci/schema.hpp"

namespace imci {

// Slotted leaf page holding a dense, key-sorted prefix of row pointers.
// Inserting at slot s shifts [s, n) right; deleting shifts left. The byte
// image excludes fences: they are navigation metadata the writer rebuilds.
struct Page {
  PageId page_id = 0;
  TableId table_id = 0;
  std::vector<RowPtr> slots;

  // Writer-side navigation: keys in [fence_lo, fence_hi) belong here.
  int64_t fence_lo = 0;
  int64_t fence_hi = 0;

  uint16_t size() const { return static_cast<uint16_t>(slots.size()); }
};

using PageMap = std::unordered_map<PageId, Page>;

// Logical effect of one physical DML entry, produced at page-application
// time. An update entry expands to delete(old pk) followed by insert(new row)
// sharing the same source LSN.
struct LogicalDml {
  enum class Kind : uint8_t { Insert, Delete };
  Kind kind = Kind::Insert;
  TableId table_id = 0;
  int64_t pk = 0;
  RowPtr row;  // inserted image for inserts, prior image for deletes
  Lsn source_lsn = 0;
  Tid source_tid = 0;
};

// Applies one physical entry to the page map, appending the logical DMLs it
// expresses to `out` (when non-null) before mutating. Raises
// PageStateMismatch when the entry does not fit the current page state.
inline void apply_entry(PageMap& pages, const SchemaRegistry& schemas,
                        const RedoEntry& e, int leaf_capacity,
                        std::vector<LogicalDml>* out = nullptr) {
  switch (e.kind) {
    case EntryKind::Insert: {
      const TableSchema& schema = schemas.get(e.table_id);
      Page& page = pages[e.page_id];
      if (page.page_id == 0) {
        page.page_id = e.page_id;
        page.table_id = e.table_id;
      } else if (page.table_id != e.table_id) {
        raise(ErrorCode::PageStateMismatch, "page table mismatch");
      }
      if (e.slot_id > page.size() || page.size() >= leaf_capacity)
        raise(ErrorCode::PageStateMismatch,
              "insert slot " + std::to_string(e.slot_id) + " into page of " +
                  std::to_string(page.size()));
      auto row = std::make_shared<const Row>(
          decode_row(schema, e.payload.data(), e.payload.size()));
      if (out)
        out->push_back({LogicalDml::Kind::Insert, e.table_id, row->pk(), row,
                        e.lsn, e.tid});
      page.slots.insert(page.slots.begin() + e.slot_id, std::move(row));
      return;
    }
    case EntryKind::Update: {
      auto it = pages.find(e.page_id);
      if (it == pages.end() || e.slot_id >= it->second.size())
        raise(ErrorCode::PageStateMismatch, "update misses slot");
      const TableSchema& schema = schemas.get(e.table_id);
      const RowPtr& old_row = it->second.slots[e.slot_id];
      auto ups = decode_updates(schema, e.payload.data(), e.payload.size());
      auto new_row = std::make_shared<const Row>(
          apply_updates(schema, *old_row, ups));
      if (out) {
        out->push_back({LogicalDml::Kind::Delete, e.table_id, old_row->pk(),
                        old_row, e.lsn, e.tid});
        out->push_back({LogicalDml::Kind::Insert, e.table_id, new_row->pk(),
                        new_row, e.lsn, e.tid});
      }
      it->second.slots[e.slot_id] = std::move(new_row);
      return;
    }
    case EntryKind::Delete: {
      auto it = pages.find(e.page_id);
      if (it == pages.end() || e.slot_id >= it->second.size())
        raise(ErrorCode::PageStateMismatch, "delete misses slot");
      const RowPtr& old_row = it->second.slots[e.slot_id];
      if (out)
        out->push_back({LogicalDml::Kind::Delete, e.table_id, old_row->pk(),
                        old_row, e.lsn, e.tid});
      it->second.slots.erase(it->second.slots.begin() + e.slot_id);
      return;
    }
    case EntryKind::Commit:
    case EntryKind::Abort:
      return;  // transaction markers touch no page
  }
}

// Canonical byte image of a page (fences excluded) for replay comparisons.
inline std::vector<uint8_t> page_image(const SchemaRegistry& schemas,
                                       const Page& page) {
  std::vector<uint8_t> out;
  put_u64(out, page.page_id);
  put_u32(out, page.table_id);
  put_u16(out, page.size());
  const TableSchema& schema = schemas.get(page.table_id);
  for (const auto& row : page.slots) {
    auto bytes = encode_row(schema, *row);
    put_u32(out, static_cast<uint32_t>(bytes.size()));
    put_bytes(out, bytes.data(), bytes.size());
  }
  return out;
}

// page_id -> image for every page, including emptied ones.
inline std::map<PageId, std::vector<uint8_t>> page_images(
    const SchemaRegistry& schemas, const PageMap& pages) {
  std::map<PageId, std::vector<uint8_t>> out;
  for (const auto& [id, page] : pages) out[id] = page_image(schemas, page);
  return out;
}

}  // namespace imci

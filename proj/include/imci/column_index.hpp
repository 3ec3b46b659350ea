#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <vector>

#include "imci/compress.hpp"
#include "imci/rid_locator.hpp"
#include "imci/schema.hpp"

namespace imci {

// Zone statistics for one frozen column pack: min/max for pruning plus a
// 16-bucket equi-width value histogram (int columns) for cost estimation.
// Stats cover every physical value in the pack, visible or not, so pruning
// stays sound for any snapshot. Refreshed only when a pack freezes.
struct PackMeta {
  bool has_stats = false;
  Value min, max;
  std::array<uint64_t, 16> hist{};
  uint64_t rows = 0;
};

// Immutable compressed column pack.
struct FrozenPack {
  ColumnType type = ColumnType::Int64;
  PackedInts ints;
  PackedStrings strs;
  PackMeta meta;

  size_t byte_size() const {
    return type == ColumnType::Int64 ? ints.byte_size() : strs.byte_size();
  }
};

// Mutable tail storage for one column of one row group, pre-sized to the
// group size. Writers touch disjoint slots; readers only dereference slots
// their snapshot can see, so element access needs no further fencing.
struct PartialCol {
  std::vector<int64_t> ints;
  std::vector<std::string> strs;
};

// What readers dereference for one column of one group; republished whole on
// freeze (partial -> frozen) and at group drop (-> null).
struct ColumnRep {
  std::shared_ptr<const FrozenPack> frozen;
  std::shared_ptr<PartialCol> partial;
};

struct VidMap {
  explicit VidMap(size_t n) : v(n) {
    for (auto& x : v) x.store(kInvalidVid, std::memory_order_relaxed);
  }
  VidMap(const VidMap& o) : v(o.v.size()) {
    for (size_t i = 0; i < v.size(); ++i)
      v[i].store(o.v[i].load(std::memory_order_relaxed), std::memory_order_relaxed);
  }
  std::vector<std::atomic<uint64_t>> v;
};

// One row group: a contiguous RID range with per-column storage, insert and
// delete VID maps, and slot flags. kInvalidVid plays two roles: in delete
// maps it is "never deleted" (+infinity), in insert maps it marks rows whose
// commit has not assigned a VID yet (pre-commit materialization); the flag
// bits disambiguate slots that will never surface (dead).
class RowGroup {
 public:
  static constexpr uint8_t kAllocated = 1;
  static constexpr uint8_t kDead = 2;

  RowGroup(uint64_t base_rid, uint32_t size, size_t ncols,
           const TableSchema& schema)
      : base_rid_(base_rid), size_(size), flags_(size) {
    for (auto& f : flags_) f.store(0, std::memory_order_relaxed);
    insert_vids_ = std::make_shared<VidMap>(size);
    delete_vids_ = std::make_shared<VidMap>(size);
    cols_.resize(ncols);
    for (size_t c = 0; c < ncols; ++c) {
      auto rep = std::make_shared<ColumnRep>();
      rep->partial = std::make_shared<PartialCol>();
      if (schema.columns[c].type == ColumnType::Int64)
        rep->partial->ints.resize(size, 0);
      else
        rep->partial->strs.resize(size);
      std::atomic_store(&cols_[c], std::shared_ptr<const ColumnRep>(rep));
    }
  }

  uint64_t base_rid() const { return base_rid_; }
  uint32_t size() const { return size_; }

  std::shared_ptr<const ColumnRep> column(size_t c) const {
    return std::atomic_load(&cols_[c]);
  }
  std::shared_ptr<VidMap> insert_vids() const { return std::atomic_load(&insert_vids_); }
  std::shared_ptr<VidMap> delete_vids() const { return std::atomic_load(&delete_vids_); }

  uint32_t allocated() const { return allocated_.load(std::memory_order_acquire); }
  uint32_t written() const { return written_.load(std::memory_order_acquire); }
  uint32_t pending() const { return pending_.load(std::memory_order_acquire); }
  uint32_t dead_count() const { return dead_.load(std::memory_order_acquire); }
  uint64_t delete_count() const { return deletes_.load(std::memory_order_acquire); }
  uint64_t max_insert_vid() const { return max_ivid_.load(std::memory_order_acquire); }
  bool frozen() const { return frozen_.load(std::memory_order_acquire); }
  bool insert_map_dropped() const { return imap_dropped_.load(std::memory_order_acquire); }
  bool dropped() const { return dropped_.load(std::memory_order_acquire); }

  uint8_t slot_flags(uint32_t i) const { return flags_[i].load(std::memory_order_acquire); }

  // Rows this group contributes at the newest snapshot.
  uint64_t valid_rows() const {
    uint64_t a = allocated(), d = dead_count(), del = delete_count();
    return a - d - del;
  }

  // Every live slot visible, no per-slot checks needed: the whole group can
  // aggregate via its frozen pack directly.
  bool fully_visible_at(uint64_t snapshot) const {
    return allocated() == size_ && pending() == 0 && dead_count() == 0 &&
           delete_count() == 0 &&
           (insert_map_dropped() || max_insert_vid() <= snapshot);
  }

  bool slot_visible(uint32_t i, uint64_t snapshot) const {
    uint8_t f = flags_[i].load(std::memory_order_acquire);
    if (!(f & kAllocated) || (f & kDead)) return false;
    if (!imap_dropped_.load(std::memory_order_acquire)) {
      auto imap = std::atomic_load(&insert_vids_);
      if (imap) {
        uint64_t iv = imap->v[i].load(std::memory_order_acquire);
        if (iv == kInvalidVid || iv > snapshot) return false;
      }
    }
    return snapshot < delete_vids_->v[i].load(std::memory_order_acquire);
  }

 private:
  friend class ColumnIndex;
  friend class CheckpointIo;

  uint64_t base_rid_;
  uint32_t size_;
  std::atomic<uint32_t> allocated_{0};
  std::atomic<uint32_t> written_{0};
  std::atomic<uint32_t> pending_{0};
  std::atomic<uint32_t> dead_{0};
  std::atomic<uint64_t> deletes_{0};
  std::atomic<uint64_t> max_ivid_{0};
  std::atomic<bool> frozen_{false};
  std::atomic<bool> imap_dropped_{false};
  std::atomic<bool> dropped_{false};
  std::vector<std::atomic<uint8_t>> flags_;
  std::shared_ptr<VidMap> insert_vids_;
  std::shared_ptr<VidMap> delete_vids_;
  mutable std::vector<std::shared_ptr<const ColumnRep>> cols_;
};

struct CompactionReport {
  size_t group = 0;
  uint64_t rows_moved = 0;
  uint64_t rows_dropped = 0;
  uint64_t bytes_reclaimable = 0;
  uint64_t bytes_rewritten = 0;
  int64_t space_saving() const {
    return static_cast<int64_t>(bytes_reclaimable) -
           static_cast<int64_t>(bytes_rewritten);
  }
};

// Append-only column index for one table: row groups of `group_size` RIDs.
// RID allocation, VID stamping decisions and compaction run on the single
// dispatch thread; value writes may fan out to workers on disjoint slots.
class ColumnIndex {
 public:
  ColumnIndex(const TableSchema& schema, uint64_t group_size)
      : schema_(schema), group_size_(group_size) {}

  const TableSchema& schema() const { return schema_; }
  uint64_t group_size() const { return group_size_; }

  Rid allocate_rid() {
    Rid rid = next_rid_++;
    size_t g = static_cast<size_t>(rid / group_size_);
    if (g == group_count()) append_group();
    RowGroup& grp = *group(g);
    uint32_t i = static_cast<uint32_t>(rid % group_size_);
    grp.flags_[i].store(RowGroup::kAllocated, std::memory_order_release);
    grp.allocated_.fetch_add(1, std::memory_order_release);
    grp.pending_.fetch_add(1, std::memory_order_release);
    return rid;
  }

  Rid next_rid() const { return next_rid_; }
  void set_next_rid(Rid r) { next_rid_ = r; }

  // Writes the row's values; insert_vid == kInvalidVid leaves the slot
  // pending (pre-commit), anything else publishes visibility at that VID.
  void write_row(Rid rid, const Row& row, uint64_t insert_vid) {
    RowGroup& g = *group(rid / group_size_);
    uint32_t i = static_cast<uint32_t>(rid % group_size_);
    for (size_t c = 0; c < schema_.num_columns(); ++c) {
      PartialCol* p = std::atomic_load(&g.cols_[c])->partial.get();
      if (schema_.columns[c].type == ColumnType::Int64)
        p->ints[i] = std::get<int64_t>(row.values[c]);
      else
        p->strs[i] = std::get<std::string>(row.values[c]);
    }
    g.written_.fetch_add(1, std::memory_order_release);
    if (insert_vid != kInvalidVid) stamp_insert(g, i, insert_vid);
  }

  // Rectifies a pre-commit row to its commit VID.
  void set_insert_vid(Rid rid, uint64_t vid) {
    RowGroup& g = *group(rid / group_size_);
    stamp_insert(g, static_cast<uint32_t>(rid % group_size_), vid);
  }

  void set_delete_vid(Rid rid, uint64_t vid) {
    RowGroup& g = *group(rid / group_size_);
    uint32_t i = static_cast<uint32_t>(rid % group_size_);
    auto& cell = g.delete_vids_->v[i];
    if (cell.load(std::memory_order_relaxed) != kInvalidVid)
      raise(ErrorCode::ApplyConflict, "double delete of rid");
    cell.store(vid, std::memory_order_release);
    g.deletes_.fetch_add(1, std::memory_order_release);
  }

  // Pre-commit row annihilated (same-transaction delete) or its transaction
  // aborted: the slot never becomes visible.
  void mark_dead(Rid rid) {
    RowGroup& g = *group(rid / group_size_);
    uint32_t i = static_cast<uint32_t>(rid % group_size_);
    g.flags_[i].store(RowGroup::kAllocated | RowGroup::kDead,
                      std::memory_order_release);
    g.dead_.fetch_add(1, std::memory_order_release);
    g.pending_.fetch_sub(1, std::memory_order_release);
  }

  uint64_t insert_vid_of(Rid rid) const {
    const RowGroup& g = *group(rid / group_size_);
    auto imap = g.insert_vids();
    if (!imap) return 0;  // map dropped: every live row visible from 0
    return imap->v[rid % group_size_].load(std::memory_order_acquire);
  }
  uint64_t delete_vid_of(Rid rid) const {
    const RowGroup& g = *group(rid / group_size_);
    return g.delete_vids_->v[rid % group_size_].load(std::memory_order_acquire);
  }

  size_t group_count() const {
    std::shared_lock lk(groups_mu_);
    return groups_.size();
  }

  std::shared_ptr<RowGroup> group(size_t g) const {
    std::shared_lock lk(groups_mu_);
    return groups_.at(g);
  }

  // Stable iteration snapshot for scans.
  std::vector<std::shared_ptr<RowGroup>> groups() const {
    std::shared_lock lk(groups_mu_);
    return groups_;
  }

  uint64_t row_count_estimate() const {
    uint64_t n = 0;
    for (const auto& g : groups())
      if (!g->dropped()) n += g->valid_rows();
    return n;
  }

  // Compresses every full, fully written group that is not frozen yet.
  // Returns how many groups froze.
  size_t freeze_full_groups() {
    size_t froze = 0;
    auto gs = groups();
    for (auto& g : gs) {
      if (g->frozen() || g->dropped()) continue;
      if (g->allocated() != g->size() || g->written() != g->size()) continue;
      freeze_group(*g);
      ++froze;
    }
    return froze;
  }

  // Groups eligible for compaction: frozen, settled (nothing pending), and
  // holding strictly fewer valid rows than half the group size.
  std::vector<size_t> compaction_candidates() const {
    std::vector<size_t> out;
    auto gs = groups();
    for (size_t i = 0; i < gs.size(); ++i) {
      const RowGroup& g = *gs[i];
      if (!g.frozen() || g.dropped() || g.pending() != 0) continue;
      if (g.valid_rows() >= g.size() / 2) continue;
      if (g.valid_rows() == 0) continue;  // gc handles fully dead groups
      out.push_back(i);
    }
    return out;
  }

  // Rewrites the surviving rows of a group to fresh RIDs stamped with
  // compaction_vid and marks the old copies deleted at the same VID, so the
  // visible multiset is unchanged at every snapshot. The locator is repointed
  // here as well. Dispatch-thread only.
  CompactionReport compact_group(size_t gid, uint64_t compaction_vid,
                                 RidLocator& locator) {
    auto gp = group(gid);
    RowGroup& g = *gp;
    if (!g.frozen() || g.pending() != 0)
      raise(ErrorCode::InvalidArgument, "group not compactable");
    CompactionReport rep;
    rep.group = gid;
    std::vector<std::vector<int64_t>> icols(schema_.num_columns());
    std::vector<std::vector<std::string>> scols(schema_.num_columns());
    for (size_t c = 0; c < schema_.num_columns(); ++c) {
      auto repc = g.column(c);
      rep.bytes_reclaimable += repc->frozen->byte_size();
      if (schema_.columns[c].type == ColumnType::Int64)
        icols[c] = unpack_int64(repc->frozen->ints);
      else
        scols[c] = unpack_strings(repc->frozen->strs);
    }
    for (uint32_t i = 0; i < g.size(); ++i) {
      uint8_t f = g.slot_flags(i);
      bool live = (f & RowGroup::kAllocated) && !(f & RowGroup::kDead) &&
                  g.delete_vids_->v[i].load(std::memory_order_acquire) == kInvalidVid;
      if (!live) {
        ++rep.rows_dropped;
        continue;
      }
      Row row;
      row.values.reserve(schema_.num_columns());
      for (size_t c = 0; c < schema_.num_columns(); ++c) {
        if (schema_.columns[c].type == ColumnType::Int64)
          row.values.emplace_back(icols[c][i]);
        else
          row.values.emplace_back(scols[c][i]);
      }
      Rid fresh = allocate_rid();
      write_row(fresh, row, compaction_vid);
      locator.remove(row.pk());
      locator.put(row.pk(), fresh);
      g.delete_vids_->v[i].store(compaction_vid, std::memory_order_release);
      g.deletes_.fetch_add(1, std::memory_order_release);
      ++rep.rows_moved;
      rep.bytes_rewritten += row_byte_estimate(row);
    }
    return rep;
  }

  // Drops a group's insert VID map once no live or future snapshot can be
  // below any of its insert VIDs (strictly greater than the max, and nothing
  // pending). Visibility then only consults the delete map.
  bool try_drop_insert_map(size_t gid, uint64_t min_active_vid) {
    auto gp = group(gid);
    RowGroup& g = *gp;
    if (g.insert_map_dropped()) return true;
    if (g.pending() != 0) return false;
    if (min_active_vid <= g.max_insert_vid()) return false;
    g.imap_dropped_.store(true, std::memory_order_release);
    std::atomic_store(&g.insert_vids_, std::shared_ptr<VidMap>());
    return true;
  }

  // Frees storage of groups invisible at min_active_vid and beyond.
  size_t gc(uint64_t min_active_vid) {
    size_t dropped = 0;
    auto gs = groups();
    for (auto& g : gs) {
      if (g->dropped() || g->pending() != 0) continue;
      if (g->allocated() != g->size()) continue;  // tail group stays
      bool gone = true;
      for (uint32_t i = 0; i < g->size() && gone; ++i) {
        uint8_t f = g->slot_flags(i);
        if (!(f & RowGroup::kAllocated) || (f & RowGroup::kDead)) continue;
        uint64_t dv = g->delete_vids_->v[i].load(std::memory_order_acquire);
        if (dv == kInvalidVid || dv > min_active_vid) gone = false;
      }
      if (!gone) continue;
      for (auto& c : g->cols_) std::atomic_store(&c, std::shared_ptr<const ColumnRep>());
      g->dropped_.store(true, std::memory_order_release);
      ++dropped;
    }
    return dropped;
  }

  // Bulk load used when bootstrapping from a row-store scan: rows become
  // visible at exactly `as_of`.
  void bulk_load(const std::vector<Row>& rows, uint64_t as_of, RidLocator& locator) {
    for (const auto& row : rows) {
      Rid rid = allocate_rid();
      write_row(rid, row, as_of);
      locator.put(row.pk(), rid);
    }
    freeze_full_groups();
  }

  // Materializes the row at rid if visible at the snapshot.
  std::optional<Row> read_visible_row(Rid rid, uint64_t snapshot) const {
    if (rid >= next_rid_) return std::nullopt;
    auto gp = group(rid / group_size_);
    uint32_t i = static_cast<uint32_t>(rid % group_size_);
    if (gp->dropped() || !gp->slot_visible(i, snapshot)) return std::nullopt;
    Row row;
    row.values.reserve(schema_.num_columns());
    for (size_t c = 0; c < schema_.num_columns(); ++c) {
      auto rep = gp->column(c);
      if (!rep) return std::nullopt;
      if (schema_.columns[c].type == ColumnType::Int64) {
        int64_t v = rep->frozen ? packed_int_at(rep->frozen->ints, i)
                                : rep->partial->ints[i];
        row.values.emplace_back(v);
      } else {
        std::string v = rep->frozen
                            ? rep->frozen->strs.dict[rep->frozen->strs.codes[i]]
                            : rep->partial->strs[i];
        row.values.emplace_back(std::move(v));
      }
    }
    return row;
  }

  // All rows visible at the snapshot, pk-sorted: the state equivalence probe.
  std::vector<Row> visible_rows(uint64_t snapshot) const {
    std::vector<Row> out;
    auto gs = groups();
    for (auto& g : gs) {
      if (g->dropped()) continue;
      for (uint32_t i = 0; i < g->allocated(); ++i) {
        if (!g->slot_visible(i, snapshot)) continue;
        if (auto row = read_visible_row(g->base_rid() + i, snapshot))
          out.push_back(std::move(*row));
      }
    }
    std::sort(out.begin(), out.end(),
              [](const Row& a, const Row& b) { return a.pk() < b.pk(); });
    return out;
  }

 private:
  friend class CheckpointIo;

  void append_group() {
    std::unique_lock lk(groups_mu_);
    auto g = std::make_shared<RowGroup>(group_size_ * groups_.size(),
                                        static_cast<uint32_t>(group_size_),
                                        schema_.num_columns(), schema_);
    groups_.push_back(std::move(g));
  }

  void stamp_insert(RowGroup& g, uint32_t i, uint64_t vid) {
    g.insert_vids_->v[i].store(vid, std::memory_order_release);
    uint64_t cur = g.max_ivid_.load(std::memory_order_relaxed);
    while (cur < vid &&
           !g.max_ivid_.compare_exchange_weak(cur, vid, std::memory_order_release))
      ;
    g.pending_.fetch_sub(1, std::memory_order_release);
  }

  void freeze_group(RowGroup& g) {
    for (size_t c = 0; c < schema_.num_columns(); ++c) {
      auto old = std::atomic_load(&g.cols_[c]);
      auto frozen = std::make_shared<FrozenPack>();
      frozen->type = schema_.columns[c].type;
      if (frozen->type == ColumnType::Int64) {
        frozen->ints = pack_int64(old->partial->ints.data(), g.size());
        frozen->meta = int_meta(old->partial->ints);
      } else {
        frozen->strs = pack_strings(old->partial->strs.data(), g.size());
        frozen->meta = string_meta(old->partial->strs);
      }
      auto rep = std::make_shared<ColumnRep>();
      rep->frozen = std::move(frozen);
      std::atomic_store(&g.cols_[c], std::shared_ptr<const ColumnRep>(rep));
    }
    g.frozen_.store(true, std::memory_order_release);
  }

  static PackMeta int_meta(const std::vector<int64_t>& vals) {
    PackMeta m;
    m.rows = vals.size();
    if (vals.empty()) return m;
    auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    m.min = *mn;
    m.max = *mx;
    m.has_stats = true;
    unsigned __int128 span =
        static_cast<unsigned __int128>(static_cast<uint64_t>(*mx) -
                                       static_cast<uint64_t>(*mn)) + 1;
    for (int64_t v : vals) {
      unsigned __int128 off = static_cast<uint64_t>(v) - static_cast<uint64_t>(*mn);
      size_t b = static_cast<size_t>(off * 16 / span);
      ++m.hist[b];
    }
    return m;
  }

  static PackMeta string_meta(const std::vector<std::string>& vals) {
    PackMeta m;
    m.rows = vals.size();
    if (vals.empty()) return m;
    auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    m.min = *mn;
    m.max = *mx;
    m.has_stats = true;
    return m;
  }

  static uint64_t row_byte_estimate(const Row& row) {
    uint64_t n = 0;
    for (const auto& v : row.values)
      n += std::holds_alternative<int64_t>(v) ? 8 : std::get<std::string>(v).size();
    return n;
  }

  const TableSchema schema_;
  uint64_t group_size_;
  Rid next_rid_ = 0;
  mutable std::shared_mutex groups_mu_;
  std::vector<std::shared_ptr<RowGroup>> groups_;
};

}  // namespace imci

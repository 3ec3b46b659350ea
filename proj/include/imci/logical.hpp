#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "imci/pages.hpp"

namespace imci {

struct TableKey {
  TableId table = 0;
  int64_t pk = 0;
  bool operator==(const TableKey&) const = default;
};

struct TableKeyHash {
  size_t operator()(const TableKey& k) const {
    return static_cast<size_t>(fnv1a64(static_cast<uint64_t>(k.pk)) ^
                               (static_cast<uint64_t>(k.table) * 0x9e3779b97f4a7c15ULL));
  }
};

// One physical entry after parsing: its logical DML expansion in order.
struct ParsedEntry {
  Lsn lsn = 0;
  Tid tid = 0;
  EntryKind kind = EntryKind::Insert;
  std::vector<LogicalDml> dmls;
};

// A transaction's buffered user DMLs, handed over at its commit marker.
struct CommittedUnit {
  Tid tid = 0;
  Lsn commit_lsn = 0;
  std::vector<LogicalDml> dmls;  // leftovers only, when precommitted
  bool precommitted = false;
};

struct ReassemblerStats {
  uint64_t entries = 0;
  uint64_t user_dmls = 0;
  uint64_t structural_dmls = 0;
  uint64_t structural_closed_tid = 0;
  uint64_t precommit_flushes = 0;
  uint64_t units_committed = 0;
  uint64_t units_aborted = 0;
};

// Consumes ParsedEntry events. Flush and commit events arrive in the dense
// LSN order the reassembler processed them, which is what makes downstream
// RID assignment reproducible.
class ReassemblerSink {
 public:
  virtual ~ReassemblerSink() = default;
  virtual void on_commit(CommittedUnit&& unit) = 0;
  virtual void on_abort(Tid tid, Lsn lsn) = 0;
  virtual void on_precommit(Tid tid, std::vector<LogicalDml>&& dmls) = 0;
  virtual void on_progress(Lsn lsn) { (void)lsn; }
};

// Rebuilds transaction buffer units from parsed entries, filtering out
// structural (page reorganization) DMLs so only user-issued changes remain.
//
// Structural traffic always looks like adjacent [insert(copy), delete(old)]
// pairs under the transaction that triggered the page split. Three tests run
// per logical DML, in order:
//   1. a delete expected as the second half of a structural pair is
//      structural (the preceding copy insert armed the expectation),
//   2. any DML whose transaction already hit its terminal marker has no open
//      buffer unit and is treated as structural,
//   3. an insert whose pk is currently live in the page state is a
//      relocation copy: the writer would have rejected a real duplicate.
// Test 3 subsumes the per-unit duplicate check against its own insert set
// (uncommitted rows are live in pages too); the per-unit set is still kept
// because reinsert-after-delete inside one transaction must stay a user DML.
//
// The liveness ledger counts per-pk physical occupancy and is updated by
// every DML, structural or not, so it mirrors the writer's page state at
// each LSN. Counts (not booleans) because a relocation briefly holds the
// same pk in two pages.
class Reassembler {
 public:
  // threshold = 0 disables pre-commit flushing entirely.
  Reassembler(ReassemblerSink& sink, uint64_t precommit_threshold)
      : sink_(sink), threshold_(precommit_threshold) {}

  void set_frontier(Lsn lsn) { frontier_ = lsn; }
  Lsn frontier() const { return frontier_; }
  const ReassemblerStats& stats() const { return stats_; }

  void advance(ParsedEntry&& pe) {
    if (pe.lsn != frontier_ + 1)
      raise(ErrorCode::ApplyConflict,
            "entry out of order: expected " + std::to_string(frontier_ + 1) +
                " got " + std::to_string(pe.lsn));
    ++stats_.entries;
    if (armed_ && pe.kind != EntryKind::Delete)
      raise(ErrorCode::ApplyConflict, "structural pair broken at lsn " +
                                          std::to_string(pe.lsn));
    for (auto& dml : pe.dmls) take_dml(std::move(dml));
    switch (pe.kind) {
      case EntryKind::Commit: {
        closed_tids_.insert(pe.tid);
        CommittedUnit unit;
        unit.tid = pe.tid;
        unit.commit_lsn = pe.lsn;
        auto it = units_.find(pe.tid);
        if (it != units_.end()) {
          unit.dmls = std::move(it->second.dmls);
          unit.precommitted = it->second.precommitted;
          units_.erase(it);
        }
        ++stats_.units_committed;
        sink_.on_commit(std::move(unit));
        break;
      }
      case EntryKind::Abort: {
        closed_tids_.insert(pe.tid);
        auto it = units_.find(pe.tid);
        bool precommitted = false;
        if (it != units_.end()) {
          precommitted = it->second.precommitted;
          units_.erase(it);
        }
        ++stats_.units_aborted;
        // The sink only needs aborts that may have materialized state.
        if (precommitted) sink_.on_abort(pe.tid, pe.lsn);
        break;
      }
      default:
        break;
    }
    frontier_ = pe.lsn;
    sink_.on_progress(pe.lsn);
  }

  bool has_open_units() const { return !units_.empty(); }

  // Open units at the current frontier, tid-ascending. Used by writer
  // recovery to roll back in-flight transactions.
  std::vector<std::pair<Tid, std::vector<LogicalDml>>> take_open_units() {
    std::vector<std::pair<Tid, std::vector<LogicalDml>>> out;
    for (auto& [tid, unit] : units_) out.emplace_back(tid, std::move(unit.dmls));
    units_.clear();
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  size_t live_pk_count() const { return live_.size(); }

 private:
  struct Unit {
    std::vector<LogicalDml> dmls;
    std::unordered_set<TableKey, TableKeyHash> pk_insert_set;
    bool precommitted = false;
  };

  void take_dml(LogicalDml&& dml) {
    TableKey key{dml.table_id, dml.pk};
    bool structural = false;
    if (armed_) {
      if (dml.kind != LogicalDml::Kind::Delete || !(key == armed_key_))
        raise(ErrorCode::ApplyConflict, "structural pair broken at lsn " +
                                            std::to_string(dml.source_lsn));
      armed_ = false;
      structural = true;
    } else if (closed_tids_.count(dml.source_tid)) {
      structural = true;
      ++stats_.structural_closed_tid;
    } else if (dml.kind == LogicalDml::Kind::Insert && live_count(key) > 0) {
      structural = true;
      armed_ = true;
      armed_key_ = key;
    }

    if (dml.kind == LogicalDml::Kind::Insert) {
      ++live_[key];
    } else {
      auto it = live_.find(key);
      if (it == live_.end())
        raise(ErrorCode::ApplyConflict, "delete of pk with no live row");
      if (--it->second == 0) live_.erase(it);
    }

    if (structural) {
      ++stats_.structural_dmls;
      return;
    }

    Unit& unit = units_[dml.source_tid];
    if (dml.kind == LogicalDml::Kind::Insert)
      unit.pk_insert_set.insert(key);
    else
      unit.pk_insert_set.erase(key);
    Tid tid = dml.source_tid;
    unit.dmls.push_back(std::move(dml));
    ++stats_.user_dmls;
    if (threshold_ > 0 && unit.dmls.size() >= threshold_) {
      ++stats_.precommit_flushes;
      unit.precommitted = true;
      std::vector<LogicalDml> batch = std::move(unit.dmls);
      unit.dmls.clear();
      sink_.on_precommit(tid, std::move(batch));
    }
  }

  uint64_t live_count(const TableKey& key) const {
    auto it = live_.find(key);
    return it == live_.end() ? 0 : it->second;
  }

  ReassemblerSink& sink_;
  uint64_t threshold_;
  Lsn frontier_ = 0;
  bool armed_ = false;
  TableKey armed_key_;
  std::unordered_map<TableKey, uint32_t, TableKeyHash> live_;
  std::unordered_map<Tid, Unit> units_;
  std::unordered_set<Tid> closed_tids_;
  ReassemblerStats stats_;
};

}  // namespace imci

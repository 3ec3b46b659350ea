#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "imci/logical.hpp"
#include "imci/pages.hpp"
#include "imci/redo_log.hpp"
#include "imci/schema_io.hpp"
#include "imci/version_index.hpp"

namespace imci {

struct TxnHandle {
  Tid tid = 0;
  bool active = false;
};

// Write-side engine: a forest of slotted leaf pages per table (key-ordered,
// navigated by a fence directory) ahead of a physical redo log, plus an MVCC
// version index over committed transactions for reads.
//
// Every page mutation is logged before it is applied, and applied through the
// same apply_entry() primitive replicas use, so replaying the log from empty
// reproduces the page state byte for byte. Leaf splits re-log each moved row
// as an adjacent [insert(copy), delete(old)] pair under the transaction that
// triggered the split. Aborts roll back by appending compensating physical
// entries, then the abort marker.
//
// Interleaved transactions are serialized internally; they act on the latest
// physical state, so concurrent transactions must touch disjoint pks (the
// usual single-writer OLTP shape upstream of this engine).
class RowStore {
 public:
  RowStore(const std::string& data_dir, const Config& config)
      : data_dir_(data_dir),
        capacity_(config.leaf_capacity()),
        log_(data_dir, config) {
    std::string schema_path = data_dir + "/schema.json";
    if (std::filesystem::exists(schema_path)) schemas_ = load_schemas(schema_path);
    // tables can exist with an empty log (created, never written to)
    for (const auto& [id, schema] : schemas_.tables()) tables_[id];
    if (log_.written_lsn() > 0) recover();
  }

  TableId create_table(const std::string& name, std::vector<ColumnDef> columns) {
    std::unique_lock lk(mu_);
    if (schemas_.find_by_name(name))
      raise(ErrorCode::InvalidArgument, "table exists: " + name);
    TableSchema schema;
    schema.table_id = schemas_.max_table_id() + 1;
    schema.name = name;
    schema.columns = std::move(columns);
    const TableSchema& added = schemas_.add(std::move(schema));
    tables_[added.table_id];
    save_schemas(schemas_, data_dir_ + "/schema.json");
    return added.table_id;
  }

  const SchemaRegistry& schemas() const { return schemas_; }

  TxnHandle& begin_txn() {
    std::unique_lock lk(mu_);
    Tid tid = next_tid_++;
    auto txn = std::make_unique<Txn>();
    txn->handle.tid = tid;
    txn->handle.active = true;
    Txn* raw = txn.get();
    txns_[tid] = std::move(txn);
    return raw->handle;
  }

  void txn_insert(TxnHandle& h, TableId table, Row row) {
    std::unique_lock lk(mu_);
    Txn& txn = active_txn(h);
    const TableSchema& schema = schemas_.get(table);
    if (row.values.size() != schema.num_columns())
      raise(ErrorCode::InvalidArgument, "row arity mismatch");
    int64_t pk = row.pk();
    if (locate(table, pk).found)
      raise(ErrorCode::DuplicateKey,
            "pk " + std::to_string(pk) + " in table " + schema.name);
    RowPtr inserted = phys_insert(h.tid, table, row);
    txn.journal.push_back({JournalRec::Op::Insert, table, pk, nullptr,
                           std::move(inserted), {}});
    log_.broadcast_written_lsn();
  }

  void txn_update(TxnHandle& h, TableId table, int64_t pk,
                  const std::vector<ColumnUpdate>& ups) {
    std::unique_lock lk(mu_);
    Txn& txn = active_txn(h);
    Location loc = locate(table, pk);
    if (!loc.found)
      raise(ErrorCode::KeyNotFound, "pk " + std::to_string(pk));
    RowPtr before = pages_.at(loc.page).slots[loc.slot];
    std::vector<ColumnUpdate> before_pairs;
    before_pairs.reserve(ups.size());
    for (const auto& u : ups)
      before_pairs.push_back({u.column, before->values.at(u.column)});
    RowPtr after = phys_update(h.tid, table, loc, ups);
    txn.journal.push_back({JournalRec::Op::Update, table, pk, std::move(before),
                           std::move(after), std::move(before_pairs)});
    log_.broadcast_written_lsn();
  }

  void txn_delete(TxnHandle& h, TableId table, int64_t pk) {
    std::unique_lock lk(mu_);
    Txn& txn = active_txn(h);
    Location loc = locate(table, pk);
    if (!loc.found)
      raise(ErrorCode::KeyNotFound, "pk " + std::to_string(pk));
    RowPtr before = phys_delete(h.tid, table, loc);
    txn.journal.push_back(
        {JournalRec::Op::Delete, table, pk, std::move(before), nullptr, {}});
    log_.broadcast_written_lsn();
  }

  // Appends the commit marker; its LSN is the transaction's commit sequence
  // number, under which all its versions become visible.
  Lsn commit(TxnHandle& h) {
    std::unique_lock lk(mu_);
    Txn& txn = active_txn(h);
    RedoEntry marker;
    marker.tid = h.tid;
    marker.kind = EntryKind::Commit;
    Lsn seq = log_.append(marker);
    log_.flush();
    std::vector<LogicalDml> dmls;
    dmls.reserve(txn.journal.size() * 2);
    for (const auto& rec : txn.journal) {
      if (rec.op != JournalRec::Op::Insert)
        dmls.push_back({LogicalDml::Kind::Delete, rec.table, rec.pk, rec.before,
                        0, h.tid});
      if (rec.op != JournalRec::Op::Delete)
        dmls.push_back({LogicalDml::Kind::Insert, rec.table, rec.pk, rec.after,
                        0, h.tid});
    }
    versions_.apply_unit(seq, dmls);
    last_commit_ = seq;
    finish(h, txn);
    log_.broadcast_written_lsn();
    return seq;
  }

  // Rolls the transaction back with compensating physical entries (reverse
  // journal order), then appends the abort marker.
  void abort(TxnHandle& h) {
    std::unique_lock lk(mu_);
    Txn& txn = active_txn(h);
    rollback_and_mark(h.tid, txn.journal);
    finish(h, txn);
    log_.broadcast_written_lsn();
  }

  std::optional<Row> point_lookup(TableId table, int64_t pk, uint64_t as_of) const {
    std::shared_lock lk(mu_);
    RowPtr r = versions_.visible(table, pk, as_of);
    if (!r) return std::nullopt;
    return *r;
  }

  std::vector<Row> committed_rows(TableId table, uint64_t as_of) const {
    std::shared_lock lk(mu_);
    return versions_.visible_rows(table, as_of);
  }

  template <typename Fn>
  void scan_committed(TableId table, uint64_t as_of, Fn&& fn) const {
    std::shared_lock lk(mu_);
    versions_.scan_visible(table, as_of, fn);
  }

  Lsn last_commit_seq() const {
    std::shared_lock lk(mu_);
    return last_commit_;
  }

  std::map<PageId, std::vector<uint8_t>> page_snapshot() const {
    std::shared_lock lk(mu_);
    return page_images(schemas_, pages_);
  }

  uint64_t split_count() const {
    std::shared_lock lk(mu_);
    return split_count_;
  }

  uint64_t leaf_count(TableId table) const {
    std::shared_lock lk(mu_);
    auto it = tables_.find(table);
    return it == tables_.end() ? 0 : it->second.directory.size();
  }

  LogWriter& log() { return log_; }
  const std::string& data_dir() const { return data_dir_; }
  int leaf_capacity() const { return capacity_; }

 private:
  struct JournalRec {
    enum class Op : uint8_t { Insert, Update, Delete };
    Op op;
    TableId table;
    int64_t pk;
    RowPtr before;
    RowPtr after;
    std::vector<ColumnUpdate> before_pairs;
  };

  struct Txn {
    TxnHandle handle;
    std::vector<JournalRec> journal;
  };

  struct TableState {
    std::map<int64_t, PageId> directory;  // fence_lo -> leaf
  };

  struct Location {
    PageId page = 0;
    uint16_t slot = 0;
    bool found = false;
  };

  Txn& active_txn(TxnHandle& h) {
    auto it = txns_.find(h.tid);
    if (it == txns_.end() || !it->second->handle.active)
      raise(ErrorCode::TxnNotActive, "tid " + std::to_string(h.tid));
    return *it->second;
  }

  void finish(TxnHandle& h, Txn& txn) {
    h.active = false;
    txn.journal.clear();
    txn.journal.shrink_to_fit();
  }

  TableState& table_state(TableId table) {
    auto it = tables_.find(table);
    if (it == tables_.end())
      raise(ErrorCode::NotFound, "table " + std::to_string(table));
    return it->second;
  }

  // Leaf that owns pk per the fence directory, and pk's slot if present.
  Location locate(TableId table, int64_t pk) {
    TableState& t = table_state(table);
    if (t.directory.empty()) return {};
    auto it = t.directory.upper_bound(pk);
    --it;
    const Page& page = pages_.at(it->second);
    Location loc;
    loc.page = it->second;
    auto sit = std::lower_bound(
        page.slots.begin(), page.slots.end(), pk,
        [](const RowPtr& r, int64_t key) { return r->pk() < key; });
    loc.slot = static_cast<uint16_t>(sit - page.slots.begin());
    loc.found = sit != page.slots.end() && (*sit)->pk() == pk;
    return loc;
  }

  // locate() variant that insists the key exists (rollback targets must).
  Location located(TableId table, int64_t pk) {
    Location loc = locate(table, pk);
    if (!loc.found)
      raise(ErrorCode::ApplyConflict, "rollback target pk missing");
    return loc;
  }

  void append_apply(RedoEntry& e) {
    log_.append(e);
    apply_entry(pages_, schemas_, e, capacity_);
  }

  RowPtr phys_insert(Tid tid, TableId table, const Row& row) {
    const TableSchema& schema = schemas_.get(table);
    TableState& t = table_state(table);
    int64_t pk = row.pk();
    PageId target;
    if (t.directory.empty()) {
      target = next_page_id_++;
      t.directory[std::numeric_limits<int64_t>::min()] = target;
      first_fences_[target] = true;
    } else {
      auto it = t.directory.upper_bound(pk);
      --it;
      target = it->second;
      if (pages_.at(target).size() >= capacity_) {
        split_leaf(tid, table, target);
        auto it2 = t.directory.upper_bound(pk);
        --it2;
        target = it2->second;
      }
    }
    uint16_t slot = 0;
    if (auto pit = pages_.find(target); pit != pages_.end()) {
      const auto& slots = pit->second.slots;
      auto sit = std::lower_bound(
          slots.begin(), slots.end(), pk,
          [](const RowPtr& r, int64_t key) { return r->pk() < key; });
      slot = static_cast<uint16_t>(sit - slots.begin());
    }
    RedoEntry e;
    e.tid = tid;
    e.kind = EntryKind::Insert;
    e.page_id = target;
    e.slot_id = slot;
    e.table_id = table;
    e.payload = encode_row(schema, row);
    append_apply(e);
    Page& page = pages_.at(target);
    if (first_fences_.erase(target)) {
      page.fence_lo = std::numeric_limits<int64_t>::min();
      page.fence_hi = std::numeric_limits<int64_t>::max();
    }
    return page.slots[slot];
  }

  RowPtr phys_update(Tid tid, TableId table, const Location& loc,
                     const std::vector<ColumnUpdate>& ups) {
    const TableSchema& schema = schemas_.get(table);
    RedoEntry e;
    e.tid = tid;
    e.kind = EntryKind::Update;
    e.page_id = loc.page;
    e.slot_id = loc.slot;
    e.table_id = table;
    e.payload = encode_updates(schema, ups);
    append_apply(e);
    return pages_.at(loc.page).slots[loc.slot];
  }

  RowPtr phys_delete(Tid tid, TableId table, const Location& loc) {
    RowPtr before = pages_.at(loc.page).slots[loc.slot];
    RedoEntry e;
    e.tid = tid;
    e.kind = EntryKind::Delete;
    e.page_id = loc.page;
    e.slot_id = loc.slot;
    e.table_id = table;
    append_apply(e);
    return before;
  }

  // Moves the upper half of a full leaf to a fresh page, one adjacent
  // [insert(copy), delete(old)] entry pair per moved row, all under the
  // transaction that triggered the split.
  void split_leaf(Tid tid, TableId table, PageId left) {
    const TableSchema& schema = schemas_.get(table);
    TableState& t = table_state(table);
    uint16_t mid = static_cast<uint16_t>(capacity_ / 2);
    std::vector<RowPtr> moved(pages_.at(left).slots.begin() + mid,
                              pages_.at(left).slots.end());
    PageId right = next_page_id_++;
    for (uint16_t j = 0; j < moved.size(); ++j) {
      RedoEntry ins;
      ins.tid = tid;
      ins.kind = EntryKind::Insert;
      ins.page_id = right;
      ins.slot_id = j;
      ins.table_id = table;
      ins.payload = encode_row(schema, *moved[j]);
      append_apply(ins);
      RedoEntry del;
      del.tid = tid;
      del.kind = EntryKind::Delete;
      del.page_id = left;
      del.slot_id = mid;
      del.table_id = table;
      append_apply(del);
    }
    Page& lp = pages_.at(left);
    Page& rp = pages_.at(right);
    rp.fence_lo = moved.front()->pk();
    rp.fence_hi = lp.fence_hi;
    lp.fence_hi = rp.fence_lo;
    t.directory[rp.fence_lo] = right;
    ++split_count_;
  }

  void rollback_and_mark(Tid tid, std::vector<JournalRec>& journal) {
    for (auto it = journal.rbegin(); it != journal.rend(); ++it) {
      switch (it->op) {
        case JournalRec::Op::Insert:
          phys_delete(tid, it->table, located(it->table, it->pk));
          break;
        case JournalRec::Op::Delete:
          phys_insert(tid, it->table, *it->before);
          break;
        case JournalRec::Op::Update:
          phys_update(tid, it->table, located(it->table, it->pk),
                      it->before_pairs);
          break;
      }
    }
    RedoEntry marker;
    marker.tid = tid;
    marker.kind = EntryKind::Abort;
    log_.append(marker);
    log_.flush();
  }

  // Rebuilds in-memory state from the log: physical replay, then a serial
  // logical pass for the version index, then compensating rollback of any
  // transaction left open by the crash.
  void recover() {
    struct Sink : ReassemblerSink {
      VersionIndex* vi;
      Lsn last_commit = 0;
      void on_commit(CommittedUnit&& u) override {
        vi->apply_unit(u.commit_lsn, u.dmls);
        last_commit = u.commit_lsn;
      }
      void on_abort(Tid, Lsn) override {}
      void on_precommit(Tid, std::vector<LogicalDml>&&) override {}
    };
    Sink sink;
    sink.vi = &versions_;
    Reassembler reasm(sink, 0);
    Tid max_tid = 0;
    scan_log_dir(log_.log_dir(), 1, [&](const RedoEntry& e) {
      ParsedEntry pe;
      pe.lsn = e.lsn;
      pe.tid = e.tid;
      pe.kind = e.kind;
      apply_entry(pages_, schemas_, e, capacity_, &pe.dmls);
      if (e.tid > max_tid) max_tid = e.tid;
      reasm.advance(std::move(pe));
    });
    next_tid_ = max_tid + 1;
    for (const auto& [pid, page] : pages_)
      if (pid >= next_page_id_) next_page_id_ = pid + 1;
    last_commit_ = sink.last_commit;
    rebuild_directories();
    for (auto& [tid, dmls] : reasm.take_open_units()) {
      std::vector<JournalRec> journal;
      journal.reserve(dmls.size());
      for (auto& dml : dmls) {
        if (dml.kind == LogicalDml::Kind::Insert)
          journal.push_back(
              {JournalRec::Op::Insert, dml.table_id, dml.pk, nullptr, dml.row, {}});
        else
          journal.push_back(
              {JournalRec::Op::Delete, dml.table_id, dml.pk, dml.row, nullptr, {}});
      }
      rollback_and_mark(tid, journal);
    }
    log_.broadcast_written_lsn();
  }

  void rebuild_directories() {
    tables_.clear();
    std::map<TableId, std::vector<std::pair<int64_t, PageId>>> nonempty;
    for (const auto& [pid, page] : pages_) {
      tables_[page.table_id];
      if (!page.slots.empty())
        nonempty[page.table_id].emplace_back(page.slots.front()->pk(), pid);
    }
    for (const auto& [id, schema] : schemas_.tables()) tables_[id];
    for (auto& [table, leaves] : nonempty) {
      std::sort(leaves.begin(), leaves.end());
      TableState& t = tables_[table];
      for (size_t i = 0; i < leaves.size(); ++i) {
        int64_t lo = i == 0 ? std::numeric_limits<int64_t>::min() : leaves[i].first;
        int64_t hi = i + 1 < leaves.size() ? leaves[i + 1].first
                                           : std::numeric_limits<int64_t>::max();
        Page& page = pages_.at(leaves[i].second);
        page.fence_lo = lo;
        page.fence_hi = hi;
        t.directory[lo] = leaves[i].second;
      }
    }
  }

  std::string data_dir_;
  int capacity_;
  LogWriter log_;
  SchemaRegistry schemas_;
  mutable std::shared_mutex mu_;
  PageMap pages_;
  std::unordered_map<TableId, TableState> tables_;
  std::unordered_map<PageId, bool> first_fences_;
  std::unordered_map<Tid, std::unique_ptr<Txn>> txns_;
  VersionIndex versions_;
  Tid next_tid_ = 1;
  PageId next_page_id_ = 1;
  Lsn last_commit_ = 0;
  uint64_t split_count_ = 0;
};

// Offline physical replay of a data directory's log into a fresh page map,
// the oracle for writer/replica byte equivalence.
inline PageMap replay_log_to_pages(const std::string& data_dir,
                                   const SchemaRegistry& schemas,
                                   int leaf_capacity) {
  PageMap pages;
  scan_log_dir(log_dir_of(data_dir), 1, [&](const RedoEntry& e) {
    apply_entry(pages, schemas, e, leaf_capacity);
  });
  return pages;
}

}  // namespace imci

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "imci/checkpoint.hpp"
#include "imci/column_index.hpp"
#include "imci/logical.hpp"
#include "imci/redo_log.hpp"
#include "imci/rid_locator.hpp"
#include "imci/row_store.hpp"
#include "imci/schema_io.hpp"
#include "imci/version_index.hpp"

namespace imci {

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t cap) : cap_(cap) {}

  // False once closed; otherwise blocks while full.
  bool push(T v) {
    std::unique_lock lk(mu_);
    not_full_.wait(lk, [&] { return closed_ || q_.size() < cap_; });
    if (closed_) return false;
    q_.push_back(std::move(v));
    lk.unlock();
    not_empty_.notify_one();
    return true;
  }

  // Blocks until an item arrives; false only when closed and drained.
  bool pop(T& out) {
    std::unique_lock lk(mu_);
    not_empty_.wait(lk, [&] { return closed_ || !q_.empty(); });
    if (q_.empty()) return false;
    out = std::move(q_.front());
    q_.pop_front();
    lk.unlock();
    not_full_.notify_one();
    return true;
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  size_t size() const {
    std::lock_guard lk(mu_);
    return q_.size();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> q_;
  size_t cap_;
  bool closed_ = false;
};

// Completion barrier for a batch of fanned-out tasks. The producer add()s
// before pushing each task; every consumer done()s exactly once per task,
// even on failure, so waiters never hang.
struct JobSync {
  void add(size_t n = 1) {
    std::lock_guard lk(mu);
    pending += n;
  }
  void done() {
    std::unique_lock lk(mu);
    if (--pending == 0) {
      lk.unlock();
      cv.notify_all();
    }
  }
  void wait() {
    std::unique_lock lk(mu);
    cv.wait(lk, [&] { return pending == 0; });
  }

  std::mutex mu;
  std::condition_variable cv;
  size_t pending = 0;
};

// Test instrumentation points. All default to no-ops.
struct PipelineHooks {
  std::function<void()> phase1_delay;
  std::function<void()> phase2_delay;
  std::function<void(Tid, Lsn)> before_unit_apply;
  // Returning true suppresses this DML's column-side effect (fault injection
  // for divergence detection). The version index still sees it.
  std::function<bool(const LogicalDml&)> drop_dml_effect;
};

struct ReplicationStats {
  ReassemblerStats reasm;
  uint64_t units_applied = 0;
  uint64_t dmls_applied = 0;
  uint64_t precommit_batches = 0;
  uint64_t aborts_dropped = 0;
  uint64_t checkpoints_captured = 0;
  uint64_t checkpoints_persisted = 0;
  uint64_t groups_frozen = 0;
  uint64_t compactions = 0;
  uint64_t imap_drops = 0;
  uint64_t groups_gced = 0;
  Lsn applied_lsn = 0;
  uint64_t applied_commit = 0;
  Lsn frontier = 0;
  size_t live_pks = 0;
};

// Read-replica engine: consumes the shared physical log and maintains a
// column index, a RID locator and a full-history version index per table.
//
// Stage layout (all queues bounded, backpressure end to end):
//   ingest          tails the log, routes DMLs to parse workers by page hash,
//                   transaction markers straight to the sorter
//   parse workers   each owns a disjoint page-map shard; physical apply
//                   expands entries into logical DMLs
//   sorter          restores dense LSN order, runs the transaction
//                   reassembler; its sink emits dispatch jobs in order
//   dispatcher      the only thread that allocates RIDs, touches locators,
//                   stamps VID decisions, applies the version index, captures
//                   checkpoints and compacts; value writes fan out
//   apply workers   write row values into disjoint column slots, routed by
//                   pk hash so same-key writes stay ordered
//   maintenance     leader election, checkpoint triggers, compaction cadence
//
// Visibility: applied_lsn = min(sorter frontier, oldest commit whose effects
// are still in flight) - queries wait on it for read-your-writes; snapshots
// are commit LSNs and applied_commit is the newest servable one.
class RoEngine {
 public:
  enum class StartMode { Auto, Scratch, FromCheckpoint };

  RoEngine(std::string data_dir, Config config, std::string node_id,
           WrittenLsnBus* bus = nullptr, PipelineHooks hooks = {})
      : data_dir_(std::move(data_dir)),
        config_(std::move(config)),
        node_id_(std::move(node_id)),
        bus_(bus),
        hooks_(std::move(hooks)),
        sink_(this),
        w1_(static_cast<size_t>(config_.phase1_workers())),
        w2_(static_cast<size_t>(config_.phase2_workers())),
        leaf_capacity_(config_.leaf_capacity()),
        queue_cap_(static_cast<size_t>(
            config_.get_int("pipeline.queue_capacity", 65536))) {
    if (w1_ == 0 || w2_ == 0)
      raise(ErrorCode::InvalidArgument, "worker counts must be positive");
    reasm_ = std::make_unique<Reassembler>(sink_, config_.precommit_threshold());
    pages_shards_.resize(w1_);
    if (std::filesystem::exists(data_dir_ + "/schema.json"))
      schemas_ = load_schemas(data_dir_ + "/schema.json");
    for (const auto& [id, schema] : schemas_.tables()) add_table_state(schema);
  }

  ~RoEngine() { stop(); }

  RoEngine(const RoEngine&) = delete;
  RoEngine& operator=(const RoEngine&) = delete;

  // Brings the node up from scratch or from the newest loadable checkpoint,
  // then starts the pipeline.
  void start(StartMode mode = StartMode::Auto) {
    if (started_) raise(ErrorCode::InvalidArgument, "engine already started");
    Lsn from = 0;
    std::map<Tid, std::vector<LogicalDml>> collected;
    if (mode != StartMode::Scratch) {
      if (auto loaded = try_load_checkpoint()) {
        from = loaded->staged_lsn;
        collected = prescan(from);
        adopt_manifest_precommits(*loaded, collected);
        applied_commit_.store(loaded->csn);
        column_floor_.store(loaded->csn);
        staged_lsn_ = loaded->staged_lsn;
      } else if (mode == StartMode::FromCheckpoint) {
        raise(ErrorCode::MissingPackFile, "no loadable checkpoint");
      }
    }
    frontier_lsn_.store(from);
    applied_lsn_.store(from);
    launch_threads(from + 1);
  }

  // Bootstraps column state from a row store snapshot instead of replaying
  // the whole log through the column path, then follows the log live. The
  // version index is still rebuilt with full history, so the row path serves
  // any snapshot; the column path floor is the bootstrap point.
  void build_from_row_store(const RowStore& store) {
    if (started_) raise(ErrorCode::InvalidArgument, "engine already started");
    uint64_t as_of = store.last_commit_seq();
    auto collected = prescan(as_of);
    {
      std::shared_lock lk(tables_mu_);
      for (auto& [id, ts] : tables_)
        ts->index.bulk_load(store.committed_rows(id, as_of), as_of, ts->locator);
    }
    for (auto& [tid, dmls] : collected) {
      PrecommitState& st = precommits_[tid];
      for (const auto& dml : dmls) stage_dml(st, dml, /*live=*/false);
      st.all_dmls = dmls;
    }
    applied_commit_.store(as_of);
    column_floor_.store(as_of);
    staged_lsn_ = as_of;
    frontier_lsn_.store(as_of);
    applied_lsn_.store(as_of);
    launch_threads(as_of + 1);
  }

  void stop() {
    if (!started_ || stopped_) return;
    stopped_ = true;
    stop_.store(true);
    for (auto& q : phase1_q_) q->close();
    sorter_q_->close();
    dispatch_q_->close();
    for (auto& q : phase2_q_) q->close();
    applied_cv_.notify_all();
    if (ingest_thread_.joinable()) ingest_thread_.join();
    for (auto& t : phase1_threads_)
      if (t.joinable()) t.join();
    if (sorter_thread_.joinable()) sorter_thread_.join();
    if (dispatch_thread_.joinable()) dispatch_thread_.join();
    for (auto& t : phase2_threads_)
      if (t.joinable()) t.join();
    if (maintenance_thread_.joinable()) maintenance_thread_.join();
  }

  // -- visibility ----------------------------------------------------------

  Lsn applied_lsn() const { return applied_lsn_.load(std::memory_order_acquire); }
  uint64_t applied_commit() const {
    return applied_commit_.load(std::memory_order_acquire);
  }
  Lsn frontier_lsn() const { return frontier_lsn_.load(std::memory_order_acquire); }
  uint64_t column_floor() const {
    return column_floor_.load(std::memory_order_acquire);
  }

  bool wait_applied_lsn(Lsn lsn, int timeout_ms) {
    std::unique_lock lk(applied_mu_);
    bool ok = applied_cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms), [&] {
      return failed_.load() || stop_.load() ||
             applied_lsn_.load(std::memory_order_acquire) >= lsn;
    });
    rethrow_if_failed();
    return ok && applied_lsn_.load(std::memory_order_acquire) >= lsn;
  }

  bool wait_applied_commit(uint64_t vid, int timeout_ms) {
    std::unique_lock lk(applied_mu_);
    bool ok = applied_cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms), [&] {
      return failed_.load() || stop_.load() ||
             applied_commit_.load(std::memory_order_acquire) >= vid;
    });
    rethrow_if_failed();
    return ok && applied_commit_.load(std::memory_order_acquire) >= vid;
  }

  // -- snapshot pinning (guards maintenance against live readers) ----------

  uint64_t pin_snapshot() {
    std::lock_guard lk(pins_mu_);
    uint64_t s = applied_commit_.load(std::memory_order_acquire);
    pins_.insert(s);
    return s;
  }

  void pin_at(uint64_t s) {
    std::lock_guard lk(pins_mu_);
    pins_.insert(s);
  }

  void unpin(uint64_t s) {
    std::lock_guard lk(pins_mu_);
    auto it = pins_.find(s);
    if (it != pins_.end()) pins_.erase(it);
  }

  uint64_t min_active_vid() const {
    std::lock_guard lk(pins_mu_);
    uint64_t base = applied_commit_.load(std::memory_order_acquire);
    return pins_.empty() ? base : std::min(base, *pins_.begin());
  }

  // -- table access ---------------------------------------------------------

  std::optional<TableId> table_id_by_name(const std::string& name) const {
    std::shared_lock lk(schemas_mu_);
    const TableSchema* s = schemas_.find_by_name(name);
    return s ? std::optional<TableId>(s->table_id) : std::nullopt;
  }

  std::vector<TableId> table_ids() const {
    std::shared_lock lk(tables_mu_);
    std::vector<TableId> out;
    for (const auto& [id, ts] : tables_) out.push_back(id);
    return out;
  }

  ColumnIndex& column_index(TableId table) { return table_state(table).index; }
  RidLocator& locator(TableId table) { return table_state(table).locator; }

  const VersionIndex& versions() const { return versions_; }
  std::shared_mutex& versions_mu() const { return versions_mu_; }

  // Merged physical page state across parse shards, for replay-equivalence
  // probes. Only meaningful when the pipeline is quiesced.
  std::map<PageId, std::vector<uint8_t>> page_snapshot() const {
    std::shared_lock lk(schemas_mu_);
    std::map<PageId, std::vector<uint8_t>> out;
    for (const auto& shard : pages_shards_)
      for (const auto& [id, page] : shard) out[id] = page_image(schemas_, page);
    return out;
  }

  // -- maintenance / checkpoints -------------------------------------------

  // Captures a checkpoint at the current apply point and optionally persists
  // it. Runs through the dispatcher when the pipeline is live, inline when
  // not. Returns the checkpoint csn.
  uint64_t checkpoint_now(bool persist = true) {
    auto req = std::make_shared<CheckpointRequest>();
    if (started_ && !stopped_) {
      req->sync.add(1);
      DispatchJob job;
      job.kind = DispatchJob::Kind::Checkpoint;
      job.ckpt = req;
      if (!dispatch_q_->push(std::move(job))) req->sync.done();
      req->sync.wait();
      rethrow_if_failed();
    } else {
      capture_checkpoint(*req);
    }
    if (persist) {
      CheckpointIo::persist(req->cap, data_dir_);
      stat_ckpt_persisted_.fetch_add(1);
      last_persisted_csn_ = req->cap.csn;
    }
    return req->cap.csn;
  }

  // Runs one freeze / compaction / map-drop / gc pass at the current apply
  // point; through the dispatcher when live.
  void run_maintenance_once() {
    if (started_ && !stopped_) {
      auto ack = std::make_shared<JobSync>();
      ack->add(1);
      DispatchJob job;
      job.kind = DispatchJob::Kind::Maintenance;
      job.ack = ack;
      if (!dispatch_q_->push(std::move(job))) ack->done();
      ack->wait();
      rethrow_if_failed();
    } else {
      process_maintenance();
    }
  }

  bool is_leader() const { return role_ && role_->is_leader(); }
  const std::string& node_id() const { return node_id_; }
  const std::string& data_dir() const { return data_dir_; }
  const Config& config() const { return config_; }

  bool failed() const { return failed_.load(); }

  void rethrow_if_failed() const {
    if (!failed_.load()) return;
    std::lock_guard lk(err_mu_);
    std::rethrow_exception(err_);
  }

  ReplicationStats stats() const {
    ReplicationStats s;
    {
      std::lock_guard lk(reasm_mu_);
      s.reasm = reasm_->stats();
      s.live_pks = reasm_->live_pk_count();
    }
    s.units_applied = stat_units_.load();
    s.dmls_applied = stat_dmls_.load();
    s.precommit_batches = stat_precommit_.load();
    s.aborts_dropped = stat_aborts_.load();
    s.checkpoints_captured = stat_ckpt_captured_.load();
    s.checkpoints_persisted = stat_ckpt_persisted_.load();
    s.groups_frozen = stat_frozen_.load();
    s.compactions = stat_compactions_.load();
    s.imap_drops = stat_imap_drops_.load();
    s.groups_gced = stat_gced_.load();
    s.applied_lsn = applied_lsn();
    s.applied_commit = applied_commit();
    s.frontier = frontier_lsn();
    return s;
  }

 private:
  struct TableState {
    TableState(const TableSchema& s, const Config& c)
        : index(s, c.row_group_size()),
          locator(c.memtable_limit(), c.locator_max_runs()) {}
    ColumnIndex index;
    RidLocator locator;
  };

  struct PrecommitTableState {
    std::map<int64_t, Rid> temp;              // pk -> materialized pending rid
    std::vector<std::pair<Rid, Rid>> ranges;  // rid runs this txn allocated
    std::vector<int64_t> staged;              // deletes of globally mapped pks
  };

  struct PrecommitState {
    std::map<TableId, PrecommitTableState> tables;
    std::vector<LogicalDml> all_dmls;
    std::shared_ptr<JobSync> sync = std::make_shared<JobSync>();
  };

  struct Phase2Task {
    enum class Kind : uint8_t { WriteVisible, WritePending, SetDelete };
    Kind kind = Kind::WriteVisible;
    ColumnIndex* index = nullptr;
    Rid rid = 0;
    RowPtr row;
    uint64_t vid = 0;
    std::shared_ptr<JobSync> sync;
  };

  struct CheckpointRequest {
    JobSync sync;
    CheckpointCapture cap;
  };

  struct DispatchJob {
    enum class Kind : uint8_t { Unit, Precommit, AbortDrop, Checkpoint, Maintenance };
    Kind kind = Kind::Unit;
    Lsn lsn = 0;
    Tid tid = 0;
    CommittedUnit unit;
    std::vector<LogicalDml> batch;
    std::shared_ptr<CheckpointRequest> ckpt;
    std::shared_ptr<JobSync> ack;
  };

  // Routes reassembler events either into the live dispatch queue or, during
  // the recovery pre-scan, into version-index rebuild plus batch collection.
  struct Sink : ReassemblerSink {
    explicit Sink(RoEngine* engine) : e(engine) {}

    void on_commit(CommittedUnit&& u) override {
      if (live) {
        {
          std::lock_guard lk(e->applied_mu_);
          e->pending_commits_.push_back(u.commit_lsn);
        }
        DispatchJob job;
        job.kind = DispatchJob::Kind::Unit;
        job.lsn = u.commit_lsn;
        job.unit = std::move(u);
        e->dispatch_q_->push(std::move(job));
      } else {
        auto it = e->prescan_collect_.find(u.tid);
        std::vector<LogicalDml> full;
        if (it != e->prescan_collect_.end()) {
          full = std::move(it->second);
          e->prescan_collect_.erase(it);
        }
        full.insert(full.end(), u.dmls.begin(), u.dmls.end());
        e->versions_.apply_unit(u.commit_lsn, full);
      }
    }

    void on_abort(Tid tid, Lsn lsn) override {
      if (live) {
        DispatchJob job;
        job.kind = DispatchJob::Kind::AbortDrop;
        job.lsn = lsn;
        job.tid = tid;
        e->dispatch_q_->push(std::move(job));
      } else {
        e->prescan_collect_.erase(tid);
      }
    }

    void on_precommit(Tid tid, std::vector<LogicalDml>&& batch) override {
      if (live) {
        DispatchJob job;
        job.kind = DispatchJob::Kind::Precommit;
        job.lsn = batch.back().source_lsn;
        job.tid = tid;
        job.batch = std::move(batch);
        e->dispatch_q_->push(std::move(job));
      } else {
        auto& dst = e->prescan_collect_[tid];
        dst.insert(dst.end(), std::make_move_iterator(batch.begin()),
                   std::make_move_iterator(batch.end()));
      }
    }

    void on_progress(Lsn lsn) override {
      if (live) e->progress(lsn);
    }

    RoEngine* e;
    bool live = false;
  };

  friend struct Sink;

  // -- startup --------------------------------------------------------------

  void add_table_state(const TableSchema& schema) {
    std::unique_lock lk(tables_mu_);
    if (!tables_.count(schema.table_id))
      tables_.emplace(schema.table_id,
                      std::make_unique<TableState>(schema, config_));
  }

  TableState& table_state(TableId id) {
    std::shared_lock lk(tables_mu_);
    auto it = tables_.find(id);
    if (it == tables_.end())
      raise(ErrorCode::NotFound, "no replica state for table " + std::to_string(id));
    return *it->second;
  }

  std::optional<CheckpointIo::Loaded> try_load_checkpoint() {
    std::map<TableId, ColumnIndex*> cis;
    std::map<TableId, RidLocator*> locs;
    {
      std::shared_lock lk(tables_mu_);
      for (auto& [id, ts] : tables_) {
        cis[id] = &ts->index;
        locs[id] = &ts->locator;
      }
    }
    return CheckpointIo::load_latest(data_dir_, cis, locs);
  }

  // Serial replay of LSNs 1..upto: rebuilds the parse shards' page state, the
  // reassembler's transaction buffers and the full-history version index.
  // Column state is not touched; flushed batches of still-open transactions
  // are collected and returned keyed by tid.
  std::map<Tid, std::vector<LogicalDml>> prescan(Lsn upto) {
    prescan_collect_.clear();
    if (upto > 0) {
      sink_.live = false;
      scan_log_dir(log_dir_of(data_dir_), 1, [&](const RedoEntry& e) {
        if (e.lsn > upto) return;
        ParsedEntry pe{e.lsn, e.tid, e.kind, {}};
        if (e.is_dml()) {
          size_t shard = static_cast<size_t>(fnv1a64(e.page_id) % w1_);
          apply_entry(pages_shards_[shard], schemas_, e, leaf_capacity_, &pe.dmls);
        }
        reasm_->advance(std::move(pe));
      });
      if (reasm_->frontier() != upto)
        raise(ErrorCode::CorruptEntry,
              "log ends at " + std::to_string(reasm_->frontier()) +
                  " but recovery needs " + std::to_string(upto));
    }
    return std::move(prescan_collect_);
  }

  // Reconnects manifest-recorded precommit materialization (temp rids) with
  // the batches the pre-scan re-collected for the same transactions.
  void adopt_manifest_precommits(const CheckpointIo::Loaded& loaded,
                                 std::map<Tid, std::vector<LogicalDml>>& collected) {
    for (const auto& pc : loaded.precommits) {
      auto it = collected.find(pc.tid);
      if (it == collected.end())
        raise(ErrorCode::ApplyConflict,
              "checkpoint precommit state for tid " + std::to_string(pc.tid) +
                  " has no matching log state");
      PrecommitState& st = precommits_[pc.tid];
      st.all_dmls = std::move(it->second);
      collected.erase(it);
      for (const auto& [table, tcap] : pc.tables) {
        PrecommitTableState& ts = st.tables[table];
        for (const auto& [pk, rid] : tcap.temp) ts.temp[pk] = rid;
        ts.ranges = tcap.ranges;
        ts.staged = tcap.staged;
      }
    }
    if (!collected.empty())
      raise(ErrorCode::ApplyConflict,
            "log has precommitted transactions missing from the checkpoint");
  }

  void launch_threads(Lsn from) {
    sink_.live = true;
    started_ = true;
    stop_.store(false);
    sorter_q_ = std::make_unique<BoundedQueue<ParsedEntry>>(queue_cap_);
    dispatch_q_ = std::make_unique<BoundedQueue<DispatchJob>>(queue_cap_);
    for (size_t i = 0; i < w1_; ++i)
      phase1_q_.push_back(std::make_unique<BoundedQueue<RedoEntry>>(queue_cap_));
    for (size_t i = 0; i < w2_; ++i)
      phase2_q_.push_back(std::make_unique<BoundedQueue<Phase2Task>>(queue_cap_));
    role_ = std::make_unique<RoleCoordinator>(data_dir_, node_id_,
                                              config_.heartbeat_timeout_ms());
    for (size_t i = 0; i < w1_; ++i)
      phase1_threads_.emplace_back([this, i] { phase1_loop(i); });
    for (size_t i = 0; i < w2_; ++i)
      phase2_threads_.emplace_back([this, i] { phase2_loop(i); });
    sorter_thread_ = std::thread([this] { sorter_loop(); });
    dispatch_thread_ = std::thread([this] { dispatch_loop(); });
    maintenance_thread_ = std::thread([this] { maintenance_loop(); });
    ingest_thread_ = std::thread([this, from] { ingest_loop(from); });
  }

  // -- pipeline threads ------------------------------------------------------

  void ingest_loop(Lsn from) {
    LogReader reader(data_dir_, bus_, config_.poll_interval_ms());
    reader.seek(from);
    while (!stop_.load() && !failed_.load()) {
      std::optional<RedoEntry> e;
      try {
        e = reader.next(std::chrono::milliseconds(50));
      } catch (...) {
        fail(std::current_exception());
        break;
      }
      if (!e) continue;
      if (e->is_dml()) {
        if (!schema_known(e->table_id) && !handle_new_table(*e)) break;
        size_t w = static_cast<size_t>(fnv1a64(e->page_id) % w1_);
        if (!phase1_q_[w]->push(std::move(*e))) break;
      } else {
        if (!sorter_q_->push(ParsedEntry{e->lsn, e->tid, e->kind, {}})) break;
      }
    }
  }

  bool schema_known(TableId id) const {
    std::shared_lock lk(schemas_mu_);
    return schemas_.find(id) != nullptr;
  }

  // A DML for an unknown table: the writer created it after this replica
  // loaded the catalog. Drain everything ahead, then reload the catalog.
  bool handle_new_table(const RedoEntry& e) {
    try {
      if (e.lsn > 1 && !wait_applied_lsn(e.lsn - 1, 60000))
        raise(ErrorCode::IoFailure, "pipeline stalled before catalog reload");
      {
        std::unique_lock lk(schemas_mu_);
        SchemaRegistry fresh = load_schemas(data_dir_ + "/schema.json");
        for (const auto& [id, schema] : fresh.tables()) schemas_.add(schema);
      }
      std::shared_lock lk(schemas_mu_);
      for (const auto& [id, schema] : schemas_.tables()) add_table_state(schema);
      if (schemas_.find(e.table_id) == nullptr)
        raise(ErrorCode::NotFound,
              "log references table " + std::to_string(e.table_id) +
                  " absent from the catalog");
      return true;
    } catch (...) {
      fail(std::current_exception());
      return false;
    }
  }

  void phase1_loop(size_t w) {
    RedoEntry e;
    while (phase1_q_[w]->pop(e)) {
      if (failed_.load()) continue;
      try {
        if (hooks_.phase1_delay) hooks_.phase1_delay();
        ParsedEntry pe{e.lsn, e.tid, e.kind, {}};
        {
          std::shared_lock lk(schemas_mu_);
          apply_entry(pages_shards_[w], schemas_, e, leaf_capacity_, &pe.dmls);
        }
        sorter_q_->push(std::move(pe));
      } catch (...) {
        fail(std::current_exception());
      }
    }
  }

  void sorter_loop() {
    std::map<Lsn, ParsedEntry> hold;
    ParsedEntry pe;
    while (sorter_q_->pop(pe)) {
      if (failed_.load()) continue;
      try {
        hold.emplace(pe.lsn, std::move(pe));
        std::lock_guard lk(reasm_mu_);
        while (!hold.empty() && hold.begin()->first == reasm_->frontier() + 1) {
          auto node = hold.extract(hold.begin());
          reasm_->advance(std::move(node.mapped()));
        }
      } catch (...) {
        fail(std::current_exception());
      }
    }
  }

  void phase2_loop(size_t w) {
    Phase2Task t;
    while (phase2_q_[w]->pop(t)) {
      if (!failed_.load()) {
        try {
          if (hooks_.phase2_delay) hooks_.phase2_delay();
          switch (t.kind) {
            case Phase2Task::Kind::WriteVisible:
              t.index->write_row(t.rid, *t.row, t.vid);
              break;
            case Phase2Task::Kind::WritePending:
              t.index->write_row(t.rid, *t.row, kInvalidVid);
              break;
            case Phase2Task::Kind::SetDelete:
              t.index->set_delete_vid(t.rid, t.vid);
              break;
          }
        } catch (...) {
          fail(std::current_exception());
        }
      }
      if (t.sync) t.sync->done();
    }
  }

  void dispatch_loop() {
    DispatchJob job;
    while (dispatch_q_->pop(job)) {
      if (!failed_.load()) {
        try {
          switch (job.kind) {
            case DispatchJob::Kind::Unit:
              process_unit(std::move(job.unit));
              break;
            case DispatchJob::Kind::Precommit:
              process_precommit(job.tid, std::move(job.batch), job.lsn);
              break;
            case DispatchJob::Kind::AbortDrop:
              process_abort(job.tid, job.lsn);
              break;
            case DispatchJob::Kind::Checkpoint:
              capture_checkpoint(*job.ckpt);
              break;
            case DispatchJob::Kind::Maintenance:
              process_maintenance();
              break;
          }
        } catch (...) {
          fail(std::current_exception());
        }
      }
      if (job.ckpt) job.ckpt->sync.done();
      if (job.ack) job.ack->done();
    }
  }

  void maintenance_loop() {
    const int interval = static_cast<int>(config_.get_int("maintenance.interval_ms", 20));
    const bool auto_compact = config_.get_bool("maintenance.auto_compact", true);
    const bool on_flush = config_.checkpoint_on_flush();
    auto last_role = std::chrono::steady_clock::time_point{};
    uint64_t seen_flushes = current_flush_count();
    while (!stop_.load() && !failed_.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(interval));
      if (stop_.load() || failed_.load()) break;
      auto now = std::chrono::steady_clock::now();
      if (now - last_role > std::chrono::milliseconds(500)) {
        last_role = now;
        try {
          role_->try_acquire();
        } catch (...) {
        }
      }
      bool trigger = false;
      if (on_flush) {
        uint64_t flushes = current_flush_count();
        if (flushes > seen_flushes) {
          seen_flushes = flushes;
          trigger = true;
        }
      }
      if (role_->is_leader() && consume_checkpoint_request(data_dir_))
        trigger = true;
      if (trigger) run_auto_checkpoint();
      if (auto_compact && has_maintenance_work()) {
        try {
          run_maintenance_once();
        } catch (...) {
        }
      }
    }
  }

  uint64_t current_flush_count() const {
    std::shared_lock lk(tables_mu_);
    uint64_t n = 0;
    for (const auto& [id, ts] : tables_) n += ts->locator.flush_count();
    return n;
  }

  bool has_maintenance_work() const {
    std::shared_lock lk(tables_mu_);
    for (const auto& [id, ts] : tables_)
      if (!ts->index.compaction_candidates().empty()) return true;
    return false;
  }

  // Followers run the capture for cadence parity but only the leader writes
  // the checkpoint to shared storage.
  void run_auto_checkpoint() {
    auto req = std::make_shared<CheckpointRequest>();
    req->sync.add(1);
    DispatchJob job;
    job.kind = DispatchJob::Kind::Checkpoint;
    job.ckpt = req;
    if (!dispatch_q_->push(std::move(job))) req->sync.done();
    req->sync.wait();
    if (failed_.load()) return;
    if (req->cap.csn == 0 && req->cap.staged_lsn == 0) return;
    if (req->cap.csn == last_persisted_csn_) return;
    if (!role_->is_leader()) return;
    try {
      CheckpointIo::persist(req->cap, data_dir_);
      stat_ckpt_persisted_.fetch_add(1);
      last_persisted_csn_ = req->cap.csn;
    } catch (...) {
      fail(std::current_exception());
    }
  }

  // -- dispatcher job bodies -------------------------------------------------

  void process_unit(CommittedUnit u) {
    uint64_t vid = u.commit_lsn;
    staged_lsn_ = u.commit_lsn;
    if (hooks_.before_unit_apply) hooks_.before_unit_apply(u.tid, u.commit_lsn);
    auto pit = precommits_.find(u.tid);
    if (pit == precommits_.end()) {
      apply_plain_unit(u, vid);
    } else {
      PrecommitState& st = pit->second;
      for (const auto& dml : u.dmls) stage_dml(st, dml, /*live=*/true);
      st.all_dmls.insert(st.all_dmls.end(), u.dmls.begin(), u.dmls.end());
      st.sync->wait();
      if (failed_.load()) return;
      finalize_precommit(st, vid);
      {
        std::unique_lock lk(versions_mu_);
        versions_.apply_unit(vid, st.all_dmls);
      }
      stat_dmls_.fetch_add(st.all_dmls.size());
      precommits_.erase(pit);
    }
    stat_units_.fetch_add(1);
    maybe_freeze(u);
    complete_commit(vid);
  }

  void apply_plain_unit(const CommittedUnit& u, uint64_t vid) {
    auto sync = std::make_shared<JobSync>();
    for (const auto& dml : u.dmls) {
      if (hooks_.drop_dml_effect && hooks_.drop_dml_effect(dml)) continue;
      TableState& ts = table_state(dml.table_id);
      if (dml.kind == LogicalDml::Kind::Insert) {
        Rid rid = ts.index.allocate_rid();
        ts.locator.put(dml.pk, rid);
        push_phase2(dml.pk, {Phase2Task::Kind::WriteVisible, &ts.index, rid,
                             dml.row, vid, sync});
      } else {
        auto rid = ts.locator.get(dml.pk);
        if (!rid)
          raise(ErrorCode::ApplyConflict,
                "delete misses pk " + std::to_string(dml.pk));
        ts.locator.remove(dml.pk);
        push_phase2(dml.pk, {Phase2Task::Kind::SetDelete, &ts.index, *rid,
                             nullptr, vid, sync});
      }
    }
    sync->wait();
    if (failed_.load()) return;
    {
      std::unique_lock lk(versions_mu_);
      versions_.apply_unit(vid, u.dmls);
    }
    stat_dmls_.fetch_add(u.dmls.size());
  }

  void process_precommit(Tid tid, std::vector<LogicalDml> batch, Lsn lsn) {
    staged_lsn_ = lsn;
    PrecommitState& st = precommits_[tid];
    for (const auto& dml : batch) stage_dml(st, dml, /*live=*/true);
    st.all_dmls.insert(st.all_dmls.end(),
                       std::make_move_iterator(batch.begin()),
                       std::make_move_iterator(batch.end()));
    stat_precommit_.fetch_add(1);
  }

  void process_abort(Tid tid, Lsn lsn) {
    staged_lsn_ = lsn;
    auto it = precommits_.find(tid);
    if (it == precommits_.end()) return;
    PrecommitState& st = it->second;
    st.sync->wait();
    for (auto& [table, ts] : st.tables) {
      ColumnIndex& ci = table_state(table).index;
      for (const auto& [pk, rid] : ts.temp) ci.mark_dead(rid);
    }
    precommits_.erase(it);
    stat_aborts_.fetch_add(1);
  }

  // Materializes one DML of a not-yet-committed transaction. Inserts allocate
  // a real RID whose slot stays pending (invisible); a same-transaction
  // delete of a pending row annihilates it in place; deletes of globally
  // mapped rows are staged until the commit VID is known.
  void stage_dml(PrecommitState& st, const LogicalDml& dml, bool live) {
    if (hooks_.drop_dml_effect && hooks_.drop_dml_effect(dml)) return;
    PrecommitTableState& pts = st.tables[dml.table_id];
    TableState& ts = table_state(dml.table_id);
    if (dml.kind == LogicalDml::Kind::Insert) {
      Rid rid = ts.index.allocate_rid();
      auto [it, fresh] = pts.temp.emplace(dml.pk, rid);
      if (!fresh)
        raise(ErrorCode::ApplyConflict,
              "pending insert duplicates pk " + std::to_string(dml.pk));
      if (!pts.ranges.empty() && pts.ranges.back().second + 1 == rid)
        pts.ranges.back().second = rid;
      else
        pts.ranges.emplace_back(rid, rid);
      if (live) {
        push_phase2(dml.pk, {Phase2Task::Kind::WritePending, &ts.index, rid,
                             dml.row, kInvalidVid, st.sync});
      } else {
        ts.index.write_row(rid, *dml.row, kInvalidVid);
      }
    } else {
      auto it = pts.temp.find(dml.pk);
      if (it != pts.temp.end()) {
        ts.index.mark_dead(it->second);
        pts.temp.erase(it);
      } else {
        pts.staged.push_back(dml.pk);
      }
    }
  }

  // Commit of a pre-materialized transaction: staged deletes land first (a
  // pk can carry at most one staged delete and one pending insert, and the
  // delete always precedes the reinsert), then pending rows become visible.
  void finalize_precommit(PrecommitState& st, uint64_t vid) {
    for (auto& [table, pts] : st.tables) {
      TableState& ts = table_state(table);
      for (int64_t pk : pts.staged) {
        auto rid = ts.locator.get(pk);
        if (!rid)
          raise(ErrorCode::ApplyConflict,
                "staged delete misses pk " + std::to_string(pk));
        ts.locator.remove(pk);
        ts.index.set_delete_vid(*rid, vid);
      }
      ts.locator.merge_temp(pts.temp);
      for (const auto& [pk, rid] : pts.temp) ts.index.set_insert_vid(rid, vid);
    }
  }

  void push_phase2(int64_t pk, Phase2Task t) {
    t.sync->add(1);
    size_t w = static_cast<size_t>(fnv1a64(static_cast<uint64_t>(pk)) % w2_);
    if (!phase2_q_[w]->push(std::move(t))) {
      // queue closed under us: keep the barrier honest
      t.sync->done();
    }
  }

  void maybe_freeze(const CommittedUnit& u) {
    std::set<TableId> touched;
    for (const auto& dml : u.dmls) touched.insert(dml.table_id);
    for (TableId id : touched) {
      TableState& ts = table_state(id);
      size_t groups = ts.index.group_count();
      auto [it, inserted] = groups_seen_.emplace(id, groups);
      if (!inserted && it->second == groups) continue;
      it->second = groups;
      stat_frozen_.fetch_add(ts.index.freeze_full_groups());
    }
  }

  void capture_checkpoint(CheckpointRequest& req) {
    for (auto& [tid, st] : precommits_) st.sync->wait();
    req.cap.csn = applied_commit_.load();
    req.cap.staged_lsn = staged_lsn_;
    {
      std::shared_lock lk(tables_mu_);
      for (auto& [id, ts] : tables_)
        req.cap.tables.push_back(
            CheckpointIo::capture_table(ts->index, ts->locator, req.cap.csn));
    }
    for (auto& [tid, st] : precommits_) {
      PrecommitCapture pc;
      pc.tid = tid;
      for (auto& [table, pts] : st.tables) {
        PrecommitTableCapture& tc = pc.tables[table];
        tc.temp.assign(pts.temp.begin(), pts.temp.end());
        tc.ranges = pts.ranges;
        tc.staged = pts.staged;
      }
      req.cap.precommits.push_back(std::move(pc));
    }
    stat_ckpt_captured_.fetch_add(1);
  }

  void process_maintenance() {
    uint64_t mav = min_active_vid();
    uint64_t apply_vid = applied_commit_.load();
    std::shared_lock lk(tables_mu_);
    for (auto& [id, ts] : tables_) {
      stat_frozen_.fetch_add(ts->index.freeze_full_groups());
      for (size_t gid : ts->index.compaction_candidates()) {
        ts->index.compact_group(gid, apply_vid, ts->locator);
        stat_compactions_.fetch_add(1);
      }
      size_t groups = ts->index.group_count();
      for (size_t gid = 0; gid < groups; ++gid) {
        auto g = ts->index.group(gid);
        if (g->insert_map_dropped() || !g->frozen()) continue;
        uint64_t ceiling = g->max_insert_vid();
        if (ts->index.try_drop_insert_map(gid, mav)) {
          stat_imap_drops_.fetch_add(1);
          raise_column_floor(ceiling);
        }
      }
      size_t gced = ts->index.gc(mav);
      if (gced > 0) {
        stat_gced_.fetch_add(gced);
        raise_column_floor(mav);
      }
    }
  }

  void raise_column_floor(uint64_t v) {
    if (v > column_floor_.load(std::memory_order_relaxed))
      column_floor_.store(v, std::memory_order_release);
  }

  // -- applied bookkeeping ---------------------------------------------------

  void progress(Lsn lsn) {
    bool advanced;
    {
      std::lock_guard lk(applied_mu_);
      frontier_lsn_.store(lsn, std::memory_order_release);
      advanced = recompute_applied_locked();
    }
    if (advanced) applied_cv_.notify_all();
  }

  void complete_commit(uint64_t vid) {
    {
      std::lock_guard lk(applied_mu_);
      if (!pending_commits_.empty() && pending_commits_.front() == vid)
        pending_commits_.pop_front();
      applied_commit_.store(vid, std::memory_order_release);
      recompute_applied_locked();
    }
    applied_cv_.notify_all();
  }

  bool recompute_applied_locked() {
    Lsn f = frontier_lsn_.load(std::memory_order_acquire);
    Lsn target = pending_commits_.empty()
                     ? f
                     : std::min(f, pending_commits_.front() - 1);
    if (target > applied_lsn_.load(std::memory_order_acquire)) {
      applied_lsn_.store(target, std::memory_order_release);
      return true;
    }
    return false;
  }

  void fail(std::exception_ptr ep) {
    {
      std::lock_guard lk(err_mu_);
      if (!err_) err_ = ep;
    }
    failed_.store(true);
    stop_.store(true);
    for (auto& q : phase1_q_) q->close();
    if (sorter_q_) sorter_q_->close();
    if (dispatch_q_) dispatch_q_->close();
    for (auto& q : phase2_q_) q->close();
    applied_cv_.notify_all();
  }

  // -- members ---------------------------------------------------------------

  std::string data_dir_;
  Config config_;
  std::string node_id_;
  WrittenLsnBus* bus_;
  PipelineHooks hooks_;

  SchemaRegistry schemas_;
  mutable std::shared_mutex schemas_mu_;
  std::map<TableId, std::unique_ptr<TableState>> tables_;
  mutable std::shared_mutex tables_mu_;

  VersionIndex versions_;
  mutable std::shared_mutex versions_mu_;

  Sink sink_;
  std::unique_ptr<Reassembler> reasm_;
  mutable std::mutex reasm_mu_;
  std::map<Tid, std::vector<LogicalDml>> prescan_collect_;

  std::vector<PageMap> pages_shards_;
  std::map<Tid, PrecommitState> precommits_;  // dispatcher + recovery only
  std::map<TableId, size_t> groups_seen_;     // dispatcher only
  Lsn staged_lsn_ = 0;                        // dispatcher only

  size_t w1_, w2_;
  int leaf_capacity_;
  size_t queue_cap_;

  std::vector<std::unique_ptr<BoundedQueue<RedoEntry>>> phase1_q_;
  std::unique_ptr<BoundedQueue<ParsedEntry>> sorter_q_;
  std::unique_ptr<BoundedQueue<DispatchJob>> dispatch_q_;
  std::vector<std::unique_ptr<BoundedQueue<Phase2Task>>> phase2_q_;

  std::thread ingest_thread_, sorter_thread_, dispatch_thread_, maintenance_thread_;
  std::vector<std::thread> phase1_threads_, phase2_threads_;

  std::atomic<bool> stop_{false};
  std::atomic<bool> failed_{false};
  mutable std::mutex err_mu_;
  std::exception_ptr err_;
  bool started_ = false;
  bool stopped_ = false;

  std::mutex applied_mu_;
  std::condition_variable applied_cv_;
  std::deque<Lsn> pending_commits_;
  std::atomic<Lsn> frontier_lsn_{0};
  std::atomic<Lsn> applied_lsn_{0};
  std::atomic<uint64_t> applied_commit_{0};
  std::atomic<uint64_t> column_floor_{0};

  mutable std::mutex pins_mu_;
  std::multiset<uint64_t> pins_;

  std::unique_ptr<RoleCoordinator> role_;
  uint64_t last_persisted_csn_ = 0;  // maintenance + checkpoint_now only

  std::atomic<uint64_t> stat_units_{0}, stat_dmls_{0}, stat_precommit_{0},
      stat_aborts_{0}, stat_ckpt_captured_{0}, stat_ckpt_persisted_{0},
      stat_frozen_{0}, stat_compactions_{0}, stat_imap_drops_{0}, stat_gced_{0};
};

}  // namespace imci

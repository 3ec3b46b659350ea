#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "imci/bench.hpp"

// Self-check suites. Every check compares engine behavior against an
// independently computed oracle (the row store's committed projection, a
// replayed twin, or a direct recomputation) and reports pass/fail with a
// one-line detail. Thresholds live here, in code.

namespace imci {

struct CheckResult {
  std::string name;
  bool pass = false;
  double seconds = 0;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  void print(std::ostream& os) const {
    for (const auto& c : checks) {
      char line[512];
      std::snprintf(line, sizeof(line), "%s  %-24s %7.1fs  %s\n",
                    c.pass ? "PASS" : "FAIL", c.name.c_str(), c.seconds,
                    c.detail.c_str());
      os << line;
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks)
      arr.push_back({{"name", c.name},
                     {"pass", c.pass},
                     {"seconds", c.seconds},
                     {"detail", c.detail}});
    return {{"report_kind", "verify"},
            {"schema_version", 1},
            {"all_pass", all_pass()},
            {"checks", std::move(arr)}};
  }
};

// ---------------------------------------------------------------------------
// mixed transactional workload driver (oracle side runs on the row store)

struct MixSpec {
  uint64_t seed = 1;
  int tables = 10;
  uint64_t dmls = 100000;
  int max_txn_dmls = 48;
  int update_pct = 30;
  int delete_pct = 15;  // remainder are inserts
  int abort_pct = 4;
  uint64_t big_every = 57;  // every k-th transaction is oversized; 0 disables
  uint64_t big_dmls = 12000;
  bool sequential_pks = false;
};

struct MixResult {
  uint64_t dmls = 0;
  uint64_t commits = 0;
  uint64_t aborts = 0;
  uint64_t inserts = 0, updates = 0, deletes = 0;
  Lsn last_seq = 0;
};

inline std::string mix_table_name(int i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "mix_%02d", i);
  return buf;
}

inline std::vector<TableId> create_mix_tables(RowStore& store, int n) {
  std::vector<TableId> out;
  for (int i = 0; i < n; ++i)
    out.push_back(store.create_table(
        mix_table_name(i), {{"pk", ColumnType::Int64, 0},
                            {"a", ColumnType::Int64, 0},
                            {"b", ColumnType::Int64, 0},
                            {"s", ColumnType::VarString, 0}}));
  return out;
}

namespace detail {

inline std::string mix_string(std::mt19937_64& rng) {
  static const char* kPool[] = {"ash", "beam", "cairn", "delta", "ember",
                                "fjord", "grove", "helix", "inlet", "joule",
                                "krill", "lumen", "mesa", "nadir", "oxide",
                                "prism"};
  if (rng() % 4 == 0) {
    std::string s(1 + rng() % 10, 'a');
    for (auto& ch : s) ch = static_cast<char>('a' + rng() % 26);
    return s;
  }
  return kPool[rng() % 16];
}

}  // namespace detail

// Applies the generated stream to the row store; transactions are the oracle
// of record. on_commit(txn_index, commit_seq) fires after each commit. Only
// committed work counts toward the dml budget and the result counters.
inline MixResult run_mix(
    RowStore& store, const std::vector<TableId>& tables, const MixSpec& spec,
    const std::function<void(uint64_t, Lsn)>& on_commit = {}) {
  std::mt19937_64 rng(detail::splitmix64(spec.seed ^ 0x6d69785fULL));
  size_t nt = tables.size();
  std::vector<std::vector<int64_t>> live(nt);         // committed live pks
  std::vector<std::unordered_map<int64_t, size_t>> pos(nt);
  std::vector<std::unordered_set<int64_t>> used(nt);  // never reissued
  std::vector<int64_t> next_seq_pk(nt, 0);
  MixResult res;
  uint64_t txn_idx = 0;

  auto commit_remove = [&](size_t t, int64_t pk) {
    auto it = pos[t].find(pk);
    size_t i = it->second;
    int64_t moved = live[t].back();
    live[t][i] = moved;
    live[t].pop_back();
    pos[t][moved] = i;
    pos[t].erase(it);
  };

  while (res.dmls < spec.dmls) {
    uint64_t want = 1 + rng() % spec.max_txn_dmls;
    if (spec.big_every && txn_idx > 0 && txn_idx % spec.big_every == 0)
      want = spec.big_dmls;
    want = std::min<uint64_t>(want, spec.dmls - res.dmls);
    bool will_abort = static_cast<int>(rng() % 100) < spec.abort_pct;

    TxnHandle& h = store.begin_txn();
    // per-txn deltas so aborted work never leaks into the oracle view
    std::vector<std::vector<int64_t>> added(nt);
    std::vector<std::unordered_set<int64_t>> removed(nt);
    uint64_t t_ins = 0, t_upd = 0, t_del = 0;

    // a committed-live or txn-inserted pk not deleted in this txn
    auto pick = [&](size_t t, int64_t& out) {
      bool have_added = !added[t].empty();
      if (have_added && (live[t].empty() || rng() % 4 == 0)) {
        out = added[t][rng() % added[t].size()];
        return true;
      }
      if (live[t].empty()) return false;
      for (int attempt = 0; attempt < 12; ++attempt) {
        int64_t pk = live[t][rng() % live[t].size()];
        if (!removed[t].count(pk)) {
          out = pk;
          return true;
        }
      }
      if (have_added) {
        out = added[t][rng() % added[t].size()];
        return true;
      }
      return false;
    };

    while (t_ins + t_upd + t_del < want) {
      size_t t = rng() % nt;
      int kind = static_cast<int>(rng() % 100);
      int64_t pk;
      if (kind < spec.update_pct && pick(t, pk)) {
        std::vector<ColumnUpdate> ups;
        uint16_t col = static_cast<uint16_t>(1 + rng() % 3);
        if (col == 3)
          ups.push_back({col, Value{detail::mix_string(rng)}});
        else
          ups.push_back({col, Value{static_cast<int64_t>(rng())}});
        if (rng() % 3 == 0 && col != 1)
          ups.push_back({1, Value{static_cast<int64_t>(rng() % 1000)}});
        store.txn_update(h, tables[t], pk, ups);
        ++t_upd;
      } else if (kind < spec.update_pct + spec.delete_pct && pick(t, pk)) {
        store.txn_delete(h, tables[t], pk);
        removed[t].insert(pk);
        auto it = std::find(added[t].begin(), added[t].end(), pk);
        if (it != added[t].end()) {
          *it = added[t].back();
          added[t].pop_back();
        }
        ++t_del;
      } else {
        if (spec.sequential_pks) {
          pk = next_seq_pk[t]++;
        } else {
          do {
            pk = static_cast<int64_t>(rng() % 40000000000ULL);
          } while (used[t].count(pk));
        }
        used[t].insert(pk);
        Row row;
        row.values = {Value{pk}, Value{static_cast<int64_t>(rng())},
                      Value{pk >> 3}, Value{detail::mix_string(rng)}};
        store.txn_insert(h, tables[t], row);
        added[t].push_back(pk);
        ++t_ins;
      }
    }

    if (will_abort) {
      store.abort(h);
      ++res.aborts;
    } else {
      res.last_seq = store.commit(h);
      ++res.commits;
      res.inserts += t_ins;
      res.updates += t_upd;
      res.deletes += t_del;
      res.dmls += t_ins + t_upd + t_del;
      for (size_t t = 0; t < nt; ++t) {
        for (int64_t pk : removed[t])
          if (pos[t].count(pk)) commit_remove(t, pk);
        for (int64_t pk : added[t]) {
          pos[t][pk] = live[t].size();
          live[t].push_back(pk);
        }
      }
      if (on_commit) on_commit(txn_idx, res.last_seq);
    }
    ++txn_idx;
  }
  return res;
}

// ---------------------------------------------------------------------------
// state comparison helpers

namespace detail {

inline bool value_lt(const Value& a, const Value& b) { return value_less(a, b); }

inline bool row_lt(const Row& a, const Row& b) {
  size_t n = std::min(a.values.size(), b.values.size());
  for (size_t i = 0; i < n; ++i) {
    if (value_less(a.values[i], b.values[i])) return true;
    if (value_less(b.values[i], a.values[i])) return false;
  }
  return a.values.size() < b.values.size();
}

inline std::string row_repr(const Row& r) {
  std::string out;
  for (const auto& v : r.values) {
    if (!out.empty()) out += '|';
    if (std::holds_alternative<int64_t>(v))
      out += std::to_string(std::get<int64_t>(v));
    else
      out += std::get<std::string>(v);
  }
  return out;
}

}  // namespace detail

// Multiset equality of the replica's column-visible rows against the row
// store's committed projection at one snapshot. Empty result means equal.
inline std::optional<std::string> diff_visible_state(
    RoEngine& eng, const RowStore& store, const std::vector<TableId>& tables,
    uint64_t seq) {
  for (TableId t : tables) {
    std::vector<Row> col = eng.column_index(t).visible_rows(seq);
    std::vector<Row> row = store.committed_rows(t, seq);
    if (col.size() != row.size())
      return "table " + std::to_string(t) + ": column rows " +
             std::to_string(col.size()) + " vs store rows " +
             std::to_string(row.size());
    std::sort(col.begin(), col.end(), detail::row_lt);
    std::sort(row.begin(), row.end(), detail::row_lt);
    for (size_t i = 0; i < col.size(); ++i) {
      if (detail::row_lt(col[i], row[i]) || detail::row_lt(row[i], col[i]))
        return "table " + std::to_string(t) + " row " + std::to_string(i) +
               ": column [" + detail::row_repr(col[i]) + "] vs store [" +
               detail::row_repr(row[i]) + "]";
    }
  }
  return std::nullopt;
}

// Digest of the replica's visible state including physical placement: for
// every live pk (locator order) mixes pk, rid, insert vid and row payload.
inline uint64_t visible_state_digest(RoEngine& eng,
                                     const std::vector<TableId>& tables,
                                     uint64_t seq) {
  uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (i * 8)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  auto mix_str = [&](const std::string& s) {
    mix(s.size());
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (TableId t : tables) {
    mix(t);
    ColumnIndex& ci = eng.column_index(t);
    uint64_t gsize = ci.group_size();
    for (const auto& [pk, rid] : eng.locator(t).live_map()) {
      mix(static_cast<uint64_t>(pk));
      mix(rid);
      auto g = ci.group(rid / gsize);
      uint32_t off = static_cast<uint32_t>(rid % gsize);
      if (!g->insert_map_dropped())
        mix(g->insert_vids()->v[off].load(std::memory_order_acquire));
      if (auto row = ci.read_visible_row(rid, seq)) {
        for (const auto& v : row->values) {
          if (std::holds_alternative<int64_t>(v))
            mix(static_cast<uint64_t>(std::get<int64_t>(v)));
          else
            mix_str(std::get<std::string>(v));
        }
      } else {
        mix(0xdeadULL);
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// check parameters

struct VerifyParams {
  uint64_t seed = 42;

  int eq_seeds = 10;
  uint64_t eq_dmls = 100000;
  int eq_tables = 10;
  double eq_budget_s = 60.0;

  uint64_t det_dmls = 30000;
  int det_tables = 8;
  int det_schedules = 5;

  uint64_t split_rows = 16384;
  uint64_t split_min = 100;

  uint64_t pre_dmls = 100000;
  uint64_t pre_preload = 5000;
  uint64_t pre_threshold = 8192;

  size_t comp_ints = 1000000;
  size_t comp_strs = 100000;

  uint64_t prune_rows = 32768;  // 512 groups of 64
  int prune_queries = 10000;
  double prune_min_skip = 0.90;

  uint64_t cross_rows = 20000;
  int cross_specs = 10000;

  int ckpt_pairs = 20;
  uint64_t ckpt_dmls = 10000;
  uint64_t so_preload = 150000;

  int strong_trials = 10000;
  int strong_max_delay_ms = 100;

  double vd_poll_ms = 1.0;
  double vd_duration_s = 10.0;
  double vd_rate = 1000.0;
  double vd_p99_ms = 50.0;
  double vd_p50_ms = 10.0;

  uint64_t speed_rows = 1000000;
  int speed_cols = 16;
  double speed_min = 3.0;
  int speed_runs = 5;

  int replay_workloads = 10;
  uint64_t replay_dmls = 10000;
};

inline VerifyParams full_params(uint64_t seed) {
  VerifyParams p;
  p.seed = seed;
  return p;
}

inline VerifyParams small_params(uint64_t seed) {
  VerifyParams p;
  p.seed = seed;
  p.eq_seeds = 2;
  p.eq_dmls = 12000;
  p.eq_tables = 6;
  p.det_dmls = 6000;
  p.det_tables = 4;
  p.det_schedules = 2;
  p.split_rows = 6000;
  p.split_min = 40;
  p.pre_dmls = 12000;
  p.pre_preload = 1000;
  p.pre_threshold = 1024;
  p.comp_ints = 120000;
  p.comp_strs = 12000;
  p.prune_rows = 16384;
  p.prune_queries = 800;
  p.cross_rows = 5000;
  p.cross_specs = 800;
  p.ckpt_pairs = 3;
  p.ckpt_dmls = 5000;
  p.so_preload = 30000;
  p.strong_trials = 400;
  p.strong_max_delay_ms = 10;
  p.vd_duration_s = 2.5;
  p.vd_rate = 500.0;
  p.vd_p99_ms = 200.0;
  p.vd_p50_ms = 50.0;
  p.speed_rows = 120000;
  p.speed_cols = 16;
  p.speed_min = 1.5;
  p.speed_runs = 3;
  p.replay_workloads = 3;
  p.replay_dmls = 4000;
  return p;
}

namespace detail {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

inline std::string fresh_dir(const std::string& work_dir,
                             const std::string& tag) {
  std::string d = work_dir + "/" + tag;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

inline Config mix_config() {
  Config c;
  c.set("storage.row_group_size", "4096");
  c.set("locator.memtable_limit", "512");
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// check 1: end-to-end equivalence under a live replica

inline CheckResult check_equivalence(const VerifyParams& p,
                                     const std::string& work_dir,
                                     PipelineHooks hooks = {}) {
  detail::Timer total;
  CheckResult r{"equivalence", true, 0, ""};
  double worst = 0;
  for (int s = 0; s < p.eq_seeds && r.pass; ++s) {
    detail::Timer per;
    std::string dir =
        detail::fresh_dir(work_dir, "eq_" + std::to_string(s));
    Config cfg = detail::mix_config();
    RowStore store(dir, cfg);
    auto tables = create_mix_tables(store, p.eq_tables);
    RoEngine eng(dir, cfg, "eq_ro", &store.log().bus(), hooks);
    eng.start(RoEngine::StartMode::Scratch);

    MixSpec mix;
    mix.seed = p.seed + s;
    mix.tables = p.eq_tables;
    mix.dmls = p.eq_dmls;
    MixResult mr = run_mix(store, tables, mix);

    if (!eng.wait_applied_lsn(store.log().written_lsn(), 120000)) {
      r.pass = false;
      r.detail = "seed " + std::to_string(s) + ": replica never caught up";
      break;
    }
    uint64_t seq = eng.applied_commit();
    eng.stop();
    eng.rethrow_if_failed();
    if (auto diff = diff_visible_state(eng, store, tables, seq)) {
      r.pass = false;
      r.detail = "seed " + std::to_string(s) + " diverged: " + *diff;
      break;
    }
    worst = std::max(worst, per.s());
    if (per.s() > p.eq_budget_s) {
      r.pass = false;
      r.detail = "seed " + std::to_string(s) + " took " +
                 std::to_string(per.s()) + "s (budget " +
                 std::to_string(p.eq_budget_s) + "s)";
      break;
    }
    if (s == 0)
      r.detail = std::to_string(mr.dmls) + " dmls, " +
                 std::to_string(mr.commits) + " commits, " +
                 std::to_string(mr.aborts) + " aborts per seed";
  }
  if (r.pass)
    r.detail = std::to_string(p.eq_seeds) + " seeds x " +
               std::to_string(p.eq_dmls) + " dmls equal; worst seed " +
               std::to_string(worst).substr(0, 4) + "s";
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 2: replay determinism across worker counts and delay schedules

inline CheckResult check_determinism(const VerifyParams& p,
                                     const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"replay-determinism", true, 0, ""};
  std::string dir = detail::fresh_dir(work_dir, "det");
  Config cfg = detail::mix_config();
  cfg.set("maintenance.auto_compact", "false");
  // the store stays alive as the log's owner; all replays read the same log
  RowStore store(dir, cfg);
  auto tables = create_mix_tables(store, p.det_tables);
  MixSpec mix;
  mix.seed = p.seed * 31 + 7;
  mix.tables = p.det_tables;
  mix.dmls = p.det_dmls;
  run_mix(store, tables, mix);
  Lsn written = store.log().written_lsn();

  struct RunCfg {
    int w1, w2;
    uint64_t delay_seed;  // 0 = no injected delays
  };
  std::vector<RunCfg> runs = {{1, 1, 0}, {2, 2, 0}, {4, 4, 0},
                              {8, 8, 0}, {1, 8, 0}, {8, 1, 0}};
  for (int i = 0; i < p.det_schedules; ++i)
    runs.push_back({4, 4, p.seed + 1000 + i});

  std::optional<uint64_t> want;
  int run_no = 0;
  for (const auto& rc : runs) {
    Config c2 = cfg;
    c2.set("phase1.workers", std::to_string(rc.w1));
    c2.set("phase2.workers", std::to_string(rc.w2));
    PipelineHooks hooks;
    if (rc.delay_seed) {
      auto drng = std::make_shared<std::mt19937_64>(rc.delay_seed);
      auto dmu = std::make_shared<std::mutex>();
      auto jitter = [drng, dmu] {
        uint64_t us;
        {
          std::lock_guard lk(*dmu);
          us = (*drng)() % 64 == 0 ? (*drng)() % 400 : 0;
        }
        if (us) std::this_thread::sleep_for(std::chrono::microseconds(us));
      };
      hooks.phase1_delay = jitter;
      hooks.phase2_delay = jitter;
    }
    RoEngine eng(dir, c2, "det_ro_" + std::to_string(run_no++),
                 &store.log().bus(), hooks);
    eng.start(RoEngine::StartMode::Scratch);
    if (!eng.wait_applied_lsn(written, 120000)) {
      r.pass = false;
      r.detail = "replay (" + std::to_string(rc.w1) + "," +
                 std::to_string(rc.w2) + ") never caught up";
      break;
    }
    uint64_t seq = eng.applied_commit();
    eng.stop();
    eng.rethrow_if_failed();
    uint64_t d = visible_state_digest(eng, tables, seq);
    if (!want) {
      want = d;
    } else if (d != *want) {
      r.pass = false;
      r.detail = "digest mismatch at workers (" + std::to_string(rc.w1) +
                 "," + std::to_string(rc.w2) + ") delay_seed " +
                 std::to_string(rc.delay_seed);
      break;
    }
  }
  if (r.pass)
    r.detail = std::to_string(runs.size()) + " replays agree on digest " +
               std::to_string(*want);
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 3: page splits emit no phantom DMLs

inline CheckResult check_split_filtering(const VerifyParams& p,
                                         const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"split-filtering", false, 0, ""};
  std::string dir = detail::fresh_dir(work_dir, "split");
  Config cfg;
  cfg.set("storage.leaf_capacity", "64");
  cfg.set("storage.row_group_size", "4096");
  RowStore store(dir, cfg);
  auto tables = create_mix_tables(store, 1);
  RoEngine eng(dir, cfg, "split_ro", &store.log().bus());
  eng.start(RoEngine::StartMode::Scratch);

  MixSpec mix;
  mix.seed = p.seed * 13 + 3;
  mix.tables = 1;
  mix.dmls = p.split_rows;
  mix.update_pct = 0;
  mix.delete_pct = 0;
  mix.abort_pct = 0;
  mix.big_every = 0;
  mix.sequential_pks = true;
  MixResult mr = run_mix(store, tables, mix);

  if (!eng.wait_applied_lsn(store.log().written_lsn(), 120000)) {
    r.detail = "replica never caught up";
    r.seconds = total.s();
    return r;
  }
  uint64_t seq = eng.applied_commit();
  eng.stop();
  eng.rethrow_if_failed();
  uint64_t splits = store.split_count();
  uint64_t applied = eng.stats().dmls_applied;
  auto diff = diff_visible_state(eng, store, tables, seq);
  r.pass = splits >= p.split_min && applied == mr.dmls && !diff;
  r.detail = std::to_string(splits) + " splits, " + std::to_string(applied) +
             " dmls applied of " + std::to_string(mr.dmls) + " issued" +
             (diff ? ", diverged: " + *diff : "");
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 4: oversized-transaction staging is equivalent to plain buffering

inline CheckResult check_precommit_equivalence(const VerifyParams& p,
                                               const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"precommit-equivalence", false, 0, ""};

  auto run_one = [&](const std::string& tag, uint64_t threshold,
                     std::vector<TableId>& tables_out,
                     std::unique_ptr<RowStore>& store_out,
                     std::unique_ptr<RoEngine>& eng_out) {
    std::string dir = detail::fresh_dir(work_dir, "pre_" + tag);
    Config cfg = detail::mix_config();
    cfg.set("precommit.threshold", std::to_string(threshold));
    cfg.set("maintenance.auto_compact", "false");
    store_out = std::make_unique<RowStore>(dir, cfg);
    tables_out = create_mix_tables(*store_out, 4);
    eng_out = std::make_unique<RoEngine>(dir, cfg, "pre_ro",
                                         &store_out->log().bus());
    eng_out->start(RoEngine::StartMode::Scratch);

    std::mt19937_64 rng(detail::splitmix64(p.seed ^ 0x70726531ULL));
    // preload rows the giant transaction can update and delete
    TxnHandle& h0 = store_out->begin_txn();
    for (uint64_t i = 0; i < p.pre_preload; ++i) {
      size_t t = i % tables_out.size();
      Row row;
      row.values = {Value{static_cast<int64_t>(i)},
                    Value{static_cast<int64_t>(rng())},
                    Value{static_cast<int64_t>(i >> 3)},
                    Value{detail::mix_string(rng)}};
      store_out->txn_insert(h0, tables_out[t], row);
    }
    store_out->commit(h0);

    TxnHandle& h = store_out->begin_txn();
    int64_t next_pk = static_cast<int64_t>(p.pre_preload);
    std::vector<int64_t> preload_alive;
    for (uint64_t i = 0; i < p.pre_preload; ++i)
      preload_alive.push_back(static_cast<int64_t>(i));
    for (uint64_t i = 0; i < p.pre_dmls; ++i) {
      uint64_t kind = rng() % 100;
      if (kind < 70 || preload_alive.empty()) {
        int64_t pk = next_pk++;
        size_t t = static_cast<uint64_t>(pk) % tables_out.size();
        Row row;
        row.values = {Value{pk}, Value{static_cast<int64_t>(rng())},
                      Value{pk >> 3}, Value{detail::mix_string(rng)}};
        store_out->txn_insert(h, tables_out[t], row);
      } else if (kind < 90) {
        int64_t pk = preload_alive[rng() % preload_alive.size()];
        size_t t = static_cast<uint64_t>(pk) % tables_out.size();
        store_out->txn_update(
            h, tables_out[t], pk,
            {{1, Value{static_cast<int64_t>(rng())}}});
      } else {
        size_t idx = rng() % preload_alive.size();
        int64_t pk = preload_alive[idx];
        preload_alive[idx] = preload_alive.back();
        preload_alive.pop_back();
        size_t t = static_cast<uint64_t>(pk) % tables_out.size();
        store_out->txn_delete(h, tables_out[t], pk);
      }
    }
    store_out->commit(h);
    if (!eng_out->wait_applied_lsn(store_out->log().written_lsn(), 180000))
      raise(ErrorCode::IoFailure, tag + " replica never caught up");
  };

  std::vector<TableId> ta, tb;
  std::unique_ptr<RowStore> sa, sb;
  std::unique_ptr<RoEngine> ea, eb;
  run_one("staged", p.pre_threshold, ta, sa, ea);
  run_one("buffered", ~uint64_t{0} >> 1, tb, sb, eb);

  uint64_t seq_a = ea->applied_commit();
  uint64_t seq_b = eb->applied_commit();
  ea->stop();
  eb->stop();
  ea->rethrow_if_failed();
  eb->rethrow_if_failed();

  if (seq_a != seq_b) {
    r.detail = "commit seqs diverge: " + std::to_string(seq_a) + " vs " +
               std::to_string(seq_b);
    r.seconds = total.s();
    return r;
  }
  for (size_t i = 0; i < ta.size(); ++i) {
    auto da = diff_visible_state(*ea, *sa, {ta[i]}, seq_a);
    auto db = diff_visible_state(*eb, *sb, {tb[i]}, seq_b);
    if (da || db) {
      r.detail = std::string("self-divergence: ") + (da ? *da : *db);
      r.seconds = total.s();
      return r;
    }
    auto la = ea->locator(ta[i]).live_map();
    auto lb = eb->locator(tb[i]).live_map();
    if (la != lb) {
      r.detail = "locator contents differ on table " + std::to_string(i) +
                 " (" + std::to_string(la.size()) + " vs " +
                 std::to_string(lb.size()) + " live pks)";
      r.seconds = total.s();
      return r;
    }
    std::vector<Row> ra = ea->column_index(ta[i]).visible_rows(seq_a);
    std::vector<Row> rb = eb->column_index(tb[i]).visible_rows(seq_b);
    std::sort(ra.begin(), ra.end(), detail::row_lt);
    std::sort(rb.begin(), rb.end(), detail::row_lt);
    if (ra.size() != rb.size()) {
      r.detail = "visible row counts differ on table " + std::to_string(i);
      r.seconds = total.s();
      return r;
    }
    for (size_t j = 0; j < ra.size(); ++j)
      if (detail::row_lt(ra[j], rb[j]) || detail::row_lt(rb[j], ra[j])) {
        r.detail = "visible rows differ on table " + std::to_string(i);
        r.seconds = total.s();
        return r;
      }
  }
  r.pass = true;
  r.detail = "threshold " + std::to_string(p.pre_threshold) +
             " vs unbounded: state and locators identical (" +
             std::to_string(p.pre_dmls) + "-dml transaction)";
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 5: compression round-trip

inline CheckResult check_compression(const VerifyParams& p,
                                     const std::string&) {
  detail::Timer total;
  CheckResult r{"compression-roundtrip", false, 0, ""};
  std::mt19937_64 rng(detail::splitmix64(p.seed ^ 0x636f6d70ULL));

  std::vector<int64_t> ints;
  ints.reserve(p.comp_ints);
  ints.push_back(std::numeric_limits<int64_t>::min());
  ints.push_back(std::numeric_limits<int64_t>::max());
  ints.push_back(0);
  for (size_t i = 0; i < p.comp_ints / 10; ++i) ints.push_back(777);  // run
  size_t base_fill = ints.size();
  for (size_t i = base_fill; i < p.comp_ints; ++i) {
    switch (rng() % 4) {
      case 0: ints.push_back(static_cast<int64_t>(rng())); break;
      case 1: ints.push_back(static_cast<int64_t>(rng() % 256)); break;
      case 2: ints.push_back(1000000 + static_cast<int64_t>(rng() % 65536)); break;
      default: ints.push_back(-static_cast<int64_t>(rng() % 100)); break;
    }
  }
  PackedInts pi = pack_int64(ints.data(), ints.size());
  std::vector<int64_t> ints2 = unpack_int64(pi);
  if (ints2 != ints) {
    r.detail = "int round-trip failed";
    r.seconds = total.s();
    return r;
  }
  for (size_t probe = 0; probe < 1000; ++probe) {
    size_t i = rng() % ints.size();
    if (packed_int_at(pi, i) != ints[i]) {
      r.detail = "packed_int_at mismatch at " + std::to_string(i);
      r.seconds = total.s();
      return r;
    }
  }

  std::vector<std::string> strs;
  strs.reserve(p.comp_strs);
  strs.push_back("");
  for (size_t i = 1; i < p.comp_strs; ++i) {
    if (rng() % 3 == 0) {
      strs.push_back(detail::mix_string(rng));
    } else {
      std::string s(rng() % 48, '\0');
      for (auto& ch : s) ch = static_cast<char>(rng() % 256);
      strs.push_back(std::move(s));
    }
  }
  PackedStrings ps = pack_strings(strs.data(), strs.size());
  std::vector<std::string> strs2 = unpack_strings(ps);
  if (strs2 != strs) {
    r.detail = "string round-trip failed";
    r.seconds = total.s();
    return r;
  }
  r.pass = true;
  r.detail = std::to_string(ints.size()) + " ints (" +
             std::to_string(pi.width_bits) + "-bit tail width), " +
             std::to_string(strs.size()) + " strings (" +
             std::to_string(ps.dict.size()) + " dict entries) round-trip";
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// clustered table used by the pruning and cross-engine checks

namespace detail {

struct QueryFixture {
  std::unique_ptr<RowStore> store;
  std::unique_ptr<RoEngine> eng;
  std::vector<TableId> tables;
  uint64_t snapshot = 0;
  uint64_t floor = 0;
};

// Ascending-pk data so zone maps are tight; includes updates and deletes so
// visibility paths matter, then freezes all full groups.
inline QueryFixture build_query_fixture(const std::string& dir, uint64_t seed,
                                        uint64_t rows, uint64_t group_size,
                                        bool with_mutations) {
  QueryFixture fx;
  Config cfg;
  cfg.set("storage.row_group_size", std::to_string(group_size));
  cfg.set("maintenance.auto_compact", "false");
  fx.store = std::make_unique<RowStore>(dir, cfg);
  fx.tables = create_mix_tables(*fx.store, 1);
  fx.eng = std::make_unique<RoEngine>(dir, cfg, "qfix_ro",
                                      &fx.store->log().bus());
  fx.eng->start(RoEngine::StartMode::Scratch);

  std::mt19937_64 rng(splitmix64(seed ^ 0x71666978ULL));
  uint64_t batch = 128;
  for (uint64_t base = 0; base < rows; base += batch) {
    TxnHandle& h = fx.store->begin_txn();
    for (uint64_t i = base; i < std::min(rows, base + batch); ++i) {
      Row row;
      row.values = {Value{static_cast<int64_t>(i)},
                    Value{static_cast<int64_t>(i * 10)},
                    Value{static_cast<int64_t>(rng() % 1000)},
                    Value{mix_string(rng)}};
      fx.store->txn_insert(h, fx.tables[0], row);
    }
    fx.store->commit(h);
  }
  if (with_mutations) {
    TxnHandle& h = fx.store->begin_txn();
    for (uint64_t i = 0; i < rows / 20; ++i) {
      int64_t pk = static_cast<int64_t>(rng() % rows);
      try {
        fx.store->txn_update(h, fx.tables[0], pk,
                             {{1, Value{static_cast<int64_t>(rng() % 500)}}});
      } catch (const Error&) {
      }
    }
    for (uint64_t i = 0; i < rows / 40; ++i) {
      int64_t pk = static_cast<int64_t>(rng() % rows);
      try {
        fx.store->txn_delete(h, fx.tables[0], pk);
      } catch (const Error&) {
      }
    }
    fx.store->commit(h);
  }
  if (!fx.eng->wait_applied_lsn(fx.store->log().written_lsn(), 180000))
    raise(ErrorCode::IoFailure, "fixture replica never caught up");
  fx.snapshot = fx.eng->applied_commit();
  fx.eng->column_index(fx.tables[0]).freeze_full_groups();
  fx.floor = fx.eng->column_floor();
  return fx;
}

inline bool same_result(const QueryResult& a, const QueryResult& b,
                        std::string& why) {
  if (a.agg_null != b.agg_null) {
    why = "agg_null differs";
    return false;
  }
  if (a.rows.size() != b.rows.size()) {
    why = "row counts " + std::to_string(a.rows.size()) + " vs " +
          std::to_string(b.rows.size());
    return false;
  }
  std::vector<Row> ra = a.rows, rb = b.rows;
  std::sort(ra.begin(), ra.end(), row_lt);
  std::sort(rb.begin(), rb.end(), row_lt);
  for (size_t i = 0; i < ra.size(); ++i)
    if (row_lt(ra[i], rb[i]) || row_lt(rb[i], ra[i])) {
      why = "row " + std::to_string(i) + ": [" + row_repr(ra[i]) + "] vs [" +
            row_repr(rb[i]) + "]";
      return false;
    }
  return true;
}

// Random QuerySpec over the fixture's schema (pk, a, b, s).
inline QuerySpec random_query(std::mt19937_64& rng, uint64_t rows,
                              uint64_t lo_snapshot, uint64_t hi_snapshot) {
  QuerySpec q;
  q.table = mix_table_name(0);
  static const char* kCols[] = {"pk", "a", "b", "s"};
  int nterms = static_cast<int>(rng() % 3);
  for (int i = 0; i < nterms; ++i) {
    PredTerm t;
    int c = static_cast<int>(rng() % 4);
    t.col = kCols[c];
    int op = static_cast<int>(rng() % 6);
    auto rand_val = [&]() -> std::string {
      if (c == 3) return mix_string(rng);
      if (c == 0) return std::to_string(rng() % (rows + rows / 4));
      if (c == 1) return std::to_string((rng() % (rows + 16)) * 10);
      return std::to_string(rng() % 1100);
    };
    switch (op) {
      case 0: t.op = PredTerm::Op::Eq; t.lo = rand_val(); break;
      case 1: t.op = PredTerm::Op::Lt; t.lo = rand_val(); break;
      case 2: t.op = PredTerm::Op::Le; t.lo = rand_val(); break;
      case 3: t.op = PredTerm::Op::Gt; t.lo = rand_val(); break;
      case 4: t.op = PredTerm::Op::Ge; t.lo = rand_val(); break;
      default: {
        t.op = PredTerm::Op::Between;
        std::string x = rand_val(), y = rand_val();
        if (c == 3) {
          if (y < x) std::swap(x, y);
        } else if (std::stoll(y) < std::stoll(x)) {
          std::swap(x, y);
        }
        t.lo = x;
        t.hi = y;
        break;
      }
    }
    q.terms.push_back(std::move(t));
  }
  switch (rng() % 8) {
    case 0: q.agg = AggKind::Count; break;
    case 1: q.agg = AggKind::Sum; q.agg_col = "a"; break;
    case 2: q.agg = AggKind::Min; q.agg_col = (rng() % 2) ? "b" : "s"; break;
    case 3: q.agg = AggKind::Max; q.agg_col = (rng() % 2) ? "a" : "s"; break;
    default: break;  // plain scan
  }
  if (q.agg != AggKind::None && rng() % 3 == 0) q.group_col = "s";
  if (q.agg == AggKind::None && rng() % 2) {
    q.projection = {"pk", "a"};
    if (rng() % 2) q.projection.push_back("s");
  }
  if (rng() % 3 == 0 && hi_snapshot > lo_snapshot) {
    q.snapshot_latest = false;
    q.snapshot = lo_snapshot + rng() % (hi_snapshot - lo_snapshot + 1);
  }
  return q;
}

}  // namespace detail

// check 6: zone-map pruning never changes results and actually skips packs

inline CheckResult check_pruning(const VerifyParams& p,
                                 const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"pruning", false, 0, ""};
  std::string dir = detail::fresh_dir(work_dir, "prune");
  auto fx = detail::build_query_fixture(dir, p.seed, p.prune_rows, 64, true);
  const TableSchema& schema = fx.store->schemas().get(fx.tables[0]);

  std::mt19937_64 rng(detail::splitmix64(p.seed ^ 0x7072756eULL));
  for (int i = 0; i < p.prune_queries; ++i) {
    QuerySpec spec;
    do {
      spec = detail::random_query(rng, p.prune_rows, fx.floor, fx.snapshot);
    } while (spec.terms.empty());
    uint64_t snap = spec.snapshot_latest ? fx.snapshot : spec.snapshot;
    BoundQuery on = bind_query(spec, fx.tables[0], schema, snap);
    BoundQuery off = on;
    off.prune = false;
    QueryResult a = column_scan(*fx.eng, on, 1024);
    QueryResult b = column_scan(*fx.eng, off, 1024);
    std::string why;
    if (!detail::same_result(a, b, why)) {
      r.detail = "query " + std::to_string(i) + " differs with pruning: " + why;
      r.seconds = total.s();
      return r;
    }
  }

  // effect: a 1%-selectivity range over the clustered column
  uint64_t span = p.prune_rows / 100;
  QuerySpec eff;
  eff.table = mix_table_name(0);
  PredTerm t;
  t.col = "pk";
  t.op = PredTerm::Op::Between;
  t.lo = std::to_string(p.prune_rows / 2);
  t.hi = std::to_string(p.prune_rows / 2 + span - 1);
  eff.terms.push_back(t);
  eff.agg = AggKind::Count;
  BoundQuery bq = bind_query(eff, fx.tables[0], schema, fx.snapshot);
  QueryResult res = column_scan(*fx.eng, bq, 1024);
  double ratio =
      res.stats.packs_considered
          ? static_cast<double>(res.stats.packs_skipped) /
                static_cast<double>(res.stats.packs_considered)
          : 0.0;
  fx.eng->stop();
  if (ratio < p.prune_min_skip) {
    r.detail = "skip ratio " + std::to_string(ratio) + " below " +
               std::to_string(p.prune_min_skip) + " (" +
               std::to_string(res.stats.packs_skipped) + "/" +
               std::to_string(res.stats.packs_considered) + ")";
    r.seconds = total.s();
    return r;
  }
  r.pass = true;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%d queries identical; 1%% range skipped %zu/%zu packs (%.1f%%)",
                p.prune_queries, res.stats.packs_skipped,
                res.stats.packs_considered, 100.0 * ratio);
  r.detail = buf;
  r.seconds = total.s();
  return r;
}

// check 7: the column path and the row path agree on random queries

inline CheckResult check_cross_engine(const VerifyParams& p,
                                      const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"cross-engine-query", false, 0, ""};
  std::string dir = detail::fresh_dir(work_dir, "cross");
  auto fx = detail::build_query_fixture(dir, p.seed + 1, p.cross_rows, 256, true);
  const TableSchema& schema = fx.store->schemas().get(fx.tables[0]);

  std::mt19937_64 rng(detail::splitmix64(p.seed ^ 0x63726f73ULL));
  for (int i = 0; i < p.cross_specs; ++i) {
    QuerySpec spec =
        detail::random_query(rng, p.cross_rows, fx.floor, fx.snapshot);
    uint64_t snap = spec.snapshot_latest ? fx.snapshot : spec.snapshot;
    BoundQuery bq = bind_query(spec, fx.tables[0], schema, snap);
    QueryResult col = column_scan(*fx.eng, bq, 1024);
    QueryResult row = row_scan(*fx.eng, bq);
    std::string why;
    if (!detail::same_result(col, row, why)) {
      r.detail = "spec " + std::to_string(i) + " at snapshot " +
                 std::to_string(snap) + ": " + why;
      fx.eng->stop();
      r.seconds = total.s();
      return r;
    }
  }
  fx.eng->stop();
  r.pass = true;
  r.detail = std::to_string(p.cross_specs) +
             " random specs agree between column and row paths";
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 8: checkpoint recovery equals the leader, and beats a row rebuild

inline CheckResult check_checkpoint_recovery(const VerifyParams& p,
                                             const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"checkpoint-recovery", true, 0, ""};
  std::mt19937_64 rng(detail::splitmix64(p.seed ^ 0x636b7074ULL));

  for (int pair = 0; pair < p.ckpt_pairs && r.pass; ++pair) {
    std::string dir =
        detail::fresh_dir(work_dir, "ckpt_" + std::to_string(pair));
    Config cfg = detail::mix_config();
    cfg.set("maintenance.auto_compact", "false");
    RowStore store(dir, cfg);
    auto tables = create_mix_tables(store, 5);
    RoEngine seed_ro(dir, cfg, "ckpt_seed", &store.log().bus());
    seed_ro.start(RoEngine::StartMode::Scratch);

    MixSpec mix;
    mix.seed = p.seed * 101 + pair;
    mix.tables = 5;
    mix.dmls = p.ckpt_dmls;
    mix.big_every = 23;
    mix.big_dmls = 3000;
    uint64_t ckpt_at_txn = 3 + rng() % 80;
    uint64_t captured_csn = 0;
    run_mix(store, tables, mix, [&](uint64_t txn, Lsn) {
      if (txn == ckpt_at_txn && captured_csn == 0)
        captured_csn = seed_ro.checkpoint_now(true);
    });
    if (captured_csn == 0) captured_csn = seed_ro.checkpoint_now(true);

    if (!seed_ro.wait_applied_lsn(store.log().written_lsn(), 120000)) {
      r.pass = false;
      r.detail = "pair " + std::to_string(pair) + ": seed replica stalled";
      break;
    }

    RoEngine rec(dir, cfg, "ckpt_rec", &store.log().bus());
    rec.start(RoEngine::StartMode::FromCheckpoint);
    if (!rec.wait_applied_lsn(store.log().written_lsn(), 120000)) {
      r.pass = false;
      r.detail = "pair " + std::to_string(pair) + ": recovered replica stalled";
      break;
    }
    uint64_t seq = std::min(seed_ro.applied_commit(), rec.applied_commit());
    seed_ro.stop();
    rec.stop();
    seed_ro.rethrow_if_failed();
    rec.rethrow_if_failed();
    if (auto diff = diff_visible_state(rec, store, tables, seq)) {
      r.pass = false;
      r.detail = "pair " + std::to_string(pair) + " (ckpt csn " +
                 std::to_string(captured_csn) + "): " + *diff;
      break;
    }
  }
  if (!r.pass) {
    r.seconds = total.s();
    return r;
  }

  // ordering half: recovery from a checkpoint must reach the写 frontier
  // strictly faster than a bootstrap from the row store, same live load
  ScaleOutSpec so;
  so.n_new_nodes = 1;
  so.load_ops_per_s = 1000.0;
  so.warmup_s = 0.5;
  so.first_ckpt_age_s = 0.3;
  so.later_ckpt_age_s = 0.3;
  so.tables = 4;
  so.seed = p.seed;
  so.data_dir = detail::fresh_dir(work_dir, "ckpt_scale");
  so.cfg = detail::mix_config();
  so.preload_rows = p.so_preload;
  ScaleOutReport sr = scale_out_demo(so);
  if (!sr.rebuild || sr.nodes.empty()) {
    r.pass = false;
    r.detail = "scale-out demo produced no timelines";
    r.seconds = total.s();
    return r;
  }
  double ck = sr.nodes[0].caught_up_s, rb = sr.rebuild->caught_up_s;
  if (!(ck < rb)) {
    r.pass = false;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "checkpoint catch-up %.3fs not faster than rebuild %.3fs",
                  ck, rb);
    r.detail = buf;
    r.seconds = total.s();
    return r;
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%d recovery pairs equal; catch-up ckpt %.3fs < rebuild %.3fs",
                p.ckpt_pairs, ck, rb);
  r.detail = buf;
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 9: strong reads always observe the committed write

inline CheckResult check_strong_reads(const VerifyParams& p,
                                      const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"strong-reads", false, 0, ""};
  std::string dir = detail::fresh_dir(work_dir, "strong");

  auto drng = std::make_shared<std::mt19937_64>(p.seed ^ 0x7374726fULL);
  auto dmu = std::make_shared<std::mutex>();
  int max_delay = p.strong_max_delay_ms;
  PipelineHooks hooks;
  hooks.phase2_delay = [drng, dmu, max_delay] {
    int ms;
    {
      std::lock_guard lk(*dmu);
      ms = (*drng)() % 128 == 0
               ? static_cast<int>((*drng)() % (max_delay + 1))
               : 0;
    }
    if (ms) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  };

  Config cfg = detail::mix_config();
  InProcessCluster cl(dir, cfg, 2, hooks);
  cl.exec("create strong_t pk:int k:int", Consistency::Eventual);

  std::mt19937_64 rng(detail::splitmix64(p.seed ^ 0x74726c73ULL));
  std::vector<int64_t> live;
  uint64_t fallbacks = 0;
  int64_t next_pk = 0;
  for (int trial = 0; trial < p.strong_trials; ++trial) {
    int kind = static_cast<int>(rng() % 100);
    if (kind < 60 || live.empty()) {
      int64_t pk = next_pk++;
      int64_t k = static_cast<int64_t>(rng() % 1000000);
      cl.exec("insert strong_t " + std::to_string(pk) + " " +
                  std::to_string(k),
              Consistency::Eventual);
      live.push_back(pk);
      ExecResult got = cl.exec("lookup strong_t " + std::to_string(pk),
                               Consistency::Strong);
      if (got.rw_fallback) ++fallbacks;
      if (got.query.rows.size() != 1 ||
          std::get<int64_t>(got.query.rows[0].values[1]) != k) {
        r.detail = "trial " + std::to_string(trial) +
                   ": insert not observed by strong read";
        r.seconds = total.s();
        return r;
      }
    } else if (kind < 85) {
      int64_t pk = live[rng() % live.size()];
      int64_t k = static_cast<int64_t>(rng() % 1000000);
      cl.exec("update strong_t " + std::to_string(pk) +
                  " k=" + std::to_string(k),
              Consistency::Eventual);
      ExecResult got = cl.exec("lookup strong_t " + std::to_string(pk),
                               Consistency::Strong);
      if (got.rw_fallback) ++fallbacks;
      if (got.query.rows.size() != 1 ||
          std::get<int64_t>(got.query.rows[0].values[1]) != k) {
        r.detail = "trial " + std::to_string(trial) +
                   ": update not observed by strong read";
        r.seconds = total.s();
        return r;
      }
    } else {
      size_t idx = rng() % live.size();
      int64_t pk = live[idx];
      live[idx] = live.back();
      live.pop_back();
      cl.exec("delete strong_t " + std::to_string(pk), Consistency::Eventual);
      ExecResult got = cl.exec("lookup strong_t " + std::to_string(pk),
                               Consistency::Strong);
      if (got.rw_fallback) ++fallbacks;
      if (!got.query.rows.empty()) {
        r.detail = "trial " + std::to_string(trial) +
                   ": delete not observed by strong read";
        r.seconds = total.s();
        return r;
      }
    }
  }
  cl.stop();
  r.pass = true;
  r.detail = std::to_string(p.strong_trials) + " trials observed (" +
             std::to_string(fallbacks) + " served via writer fallback, " +
             "delays up to " + std::to_string(p.strong_max_delay_ms) + "ms)";
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 10: visibility delay percentiles under steady insert load

inline CheckResult check_visibility_delay(const VerifyParams& p,
                                          const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"visibility-delay", false, 0, ""};
  std::string dir = detail::fresh_dir(work_dir, "vd");
  Config cfg;
  InProcessCluster cl(dir, cfg, 1);
  VdSpec spec;
  spec.poll_ms = p.vd_poll_ms;
  spec.duration_s = p.vd_duration_s;
  spec.load_ops_per_s = p.vd_rate;
  spec.seed = p.seed;
  VdReport vr = measure_vd(cl, spec);
  cl.stop();
  if (vr.warning_empty) {
    r.detail = "no samples collected";
    r.seconds = total.s();
    return r;
  }
  char buf[220];
  std::snprintf(buf, sizeof(buf),
                "%zu samples: p50=%.2fms p90=%.2fms p99=%.2fms max=%.2fms "
                "(bounds p50<%.0f p99<%.0f)",
                vr.samples_ms.size(), vr.p50, vr.p90, vr.p99, vr.max,
                p.vd_p50_ms, p.vd_p99_ms);
  r.detail = buf;
  r.pass = vr.p99 < p.vd_p99_ms && vr.p50 < p.vd_p50_ms;
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 11: single-column aggregation speedup, column path vs row path

inline CheckResult check_column_speedup(const VerifyParams& p,
                                        const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"column-speedup", false, 0, ""};
  std::string dir = detail::fresh_dir(work_dir, "speed");
  Config cfg;
  cfg.set("maintenance.auto_compact", "false");
  RowStore store(dir, cfg);
  std::vector<ColumnDef> cols{{"pk", ColumnType::Int64, 0}};
  for (int c = 0; c < p.speed_cols; ++c) {
    char name[16];
    std::snprintf(name, sizeof(name), "c%02d", c);
    cols.push_back({name, ColumnType::Int64, 0});
  }
  TableId wide = store.create_table("wide", cols);
  RoEngine eng(dir, cfg, "speed_ro", &store.log().bus());
  eng.start(RoEngine::StartMode::Scratch);

  std::mt19937_64 rng(detail::splitmix64(p.seed ^ 0x77696465ULL));
  uint64_t sum_c7 = 0;
  const uint64_t batch = 2000;
  for (uint64_t base = 0; base < p.speed_rows; base += batch) {
    TxnHandle& h = store.begin_txn();
    for (uint64_t i = base; i < std::min(p.speed_rows, base + batch); ++i) {
      Row row;
      row.values.reserve(cols.size());
      row.values.push_back(Value{static_cast<int64_t>(i)});
      for (int c = 0; c < p.speed_cols; ++c) {
        int64_t v = c % 3 == 0 ? static_cast<int64_t>(rng() % 4096)
                               : static_cast<int64_t>(rng());
        if (c == 7) sum_c7 += static_cast<uint64_t>(v);
        row.values.push_back(Value{v});
      }
      store.txn_insert(h, wide, row);
    }
    store.commit(h);
  }
  if (!eng.wait_applied_lsn(store.log().written_lsn(), 600000)) {
    r.detail = "replica never caught up";
    r.seconds = total.s();
    return r;
  }
  uint64_t seq = eng.applied_commit();
  eng.column_index(wide).freeze_full_groups();

  QuerySpec spec;
  spec.table = "wide";
  spec.agg = AggKind::Sum;
  spec.agg_col = p.speed_cols > 7 ? "c07" : "c00";
  BoundQuery bq = bind_query(spec, wide, store.schemas().get(wide), seq);

  auto time_runs = [&](auto&& fn) {
    std::vector<double> t;
    for (int i = 0; i < p.speed_runs; ++i) {
      detail::Timer tm;
      QueryResult res = fn();
      double s = tm.s();
      if (res.agg_null || res.rows.size() != 1 ||
          std::get<int64_t>(res.rows[0].values[0]) !=
              static_cast<int64_t>(p.speed_cols > 7 ? sum_c7 : 0))
        return std::pair<double, bool>{0.0, false};
      t.push_back(s);
    }
    std::sort(t.begin(), t.end());
    return std::pair<double, bool>{t[t.size() / 2], true};
  };
  auto [col_s, col_ok] = time_runs([&] { return column_scan(eng, bq, 4096); });
  auto [row_s, row_ok] = time_runs([&] { return row_scan(eng, bq); });
  eng.stop();
  if (!col_ok || !row_ok) {
    r.detail = std::string(!col_ok ? "column" : "row") +
               " path returned a wrong sum";
    r.seconds = total.s();
    return r;
  }
  double speedup = col_s > 0 ? row_s / col_s : 0.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%llu rows x %d cols: column %.4fs row %.4fs speedup %.1fx "
                "(floor %.1fx), medians of %d",
                static_cast<unsigned long long>(p.speed_rows), p.speed_cols,
                col_s, row_s, speedup, p.speed_min, p.speed_runs);
  r.detail = buf;
  r.pass = speedup >= p.speed_min;
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// check 12: replaying the full log reproduces the writer's pages

inline CheckResult check_page_replay(const VerifyParams& p,
                                     const std::string& work_dir) {
  detail::Timer total;
  CheckResult r{"page-replay", true, 0, ""};
  for (int w = 0; w < p.replay_workloads && r.pass; ++w) {
    std::string dir =
        detail::fresh_dir(work_dir, "replay_" + std::to_string(w));
    Config cfg;
    cfg.set("storage.leaf_capacity", "64");
    std::map<PageId, std::vector<uint8_t>> before;
    {
      RowStore store(dir, cfg);
      auto tables = create_mix_tables(store, 4);
      MixSpec mix;
      mix.seed = p.seed * 7 + w;
      mix.tables = 4;
      mix.dmls = p.replay_dmls;
      mix.sequential_pks = (w % 2 == 1);
      run_mix(store, tables, mix);
      before = store.page_snapshot();
    }
    RowStore replayed(dir, cfg);
    auto after = replayed.page_snapshot();
    if (before.size() != after.size()) {
      r.pass = false;
      r.detail = "workload " + std::to_string(w) + ": page count " +
                 std::to_string(before.size()) + " vs " +
                 std::to_string(after.size());
      break;
    }
    for (const auto& [id, img] : before) {
      auto it = after.find(id);
      if (it == after.end() || it->second != img) {
        r.pass = false;
        r.detail = "workload " + std::to_string(w) + ": page " +
                   std::to_string(id) + " differs after replay";
        break;
      }
    }
  }
  if (r.pass)
    r.detail = std::to_string(p.replay_workloads) +
               " workloads replay to byte-identical pages";
  r.seconds = total.s();
  return r;
}

// ---------------------------------------------------------------------------
// operator-facing verification entry point

struct VerifyOptions {
  uint64_t seed = 42;
  std::string scale = "small";  // "0" | "small" | "full"
  bool inject_fault = false;
  std::string work_dir;
};

inline VerifyReport run_verify(const VerifyOptions& opts) {
  VerifyReport report;
  if (opts.scale == "0" || opts.scale == "none") {
    report.checks.push_back(
        {"vacuous", true, 0,
         "scale 0: no checks executed (warning: vacuous pass)"});
    return report;
  }
  VerifyParams p = opts.scale == "full" ? full_params(opts.seed)
                                        : small_params(opts.seed);
  std::string work =
      opts.work_dir.empty() ? "verify_work" : opts.work_dir;
  std::filesystem::create_directories(work);

  PipelineHooks fault;
  if (opts.inject_fault) {
    // drop the column-side effect of one plain delete: the replica's state
    // must diverge from the row store and the equivalence check must fail
    auto fired = std::make_shared<std::atomic<bool>>(false);
    fault.drop_dml_effect = [fired](const LogicalDml& d) {
      if (d.kind != LogicalDml::Kind::Delete) return false;
      return !fired->exchange(true);
    };
  }

  auto guarded = [&report](const char* name, auto&& fn) {
    detail::Timer t;
    try {
      report.checks.push_back(fn());
    } catch (const std::exception& e) {
      report.checks.push_back(
          {name, false, t.s(), std::string("exception: ") + e.what()});
    }
  };
  guarded("equivalence", [&] { return check_equivalence(p, work, fault); });
  guarded("replay-determinism", [&] { return check_determinism(p, work); });
  guarded("pruning", [&] { return check_pruning(p, work); });
  guarded("compression-roundtrip", [&] { return check_compression(p, work); });
  guarded("checkpoint-recovery",
          [&] { return check_checkpoint_recovery(p, work); });
  return report;
}

}  // namespace imci

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "imci/net.hpp"

// Deterministic workload generation plus the three measurement drivers:
// throughput benchmarking, visibility-delay probing and the scale-out
// demonstration. Every report keeps its raw samples so each derived number
// can be recomputed by the reader.

namespace imci {

// ---------------------------------------------------------------------------
// workload specification

enum class WorkloadKind { InsertOnly, WriteOnlyZipf, Mixed };

inline const char* workload_kind_name(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::InsertOnly: return "insert_only";
    case WorkloadKind::WriteOnlyZipf: return "write_only_zipf";
    case WorkloadKind::Mixed: return "mixed";
  }
  return "unknown";
}

inline WorkloadKind parse_workload_kind(const std::string& s) {
  if (s == "insert_only") return WorkloadKind::InsertOnly;
  if (s == "write_only_zipf") return WorkloadKind::WriteOnlyZipf;
  if (s == "mixed") return WorkloadKind::Mixed;
  raise(ErrorCode::InvalidArgument, "unknown workload kind: " + s);
}

// Record layout is pk:int k:int c:fstr:112 pad:fstr:60: 188 bytes per record.
inline constexpr uint32_t kBenchStrWidth = 112;
inline constexpr uint32_t kBenchPadWidth = 60;

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::InsertOnly;
  int tables = 100;
  double zipf_theta = 0.99;
  double ops_per_second = 1000.0;  // 0 disables pacing
  double duration_s = 10.0;
  uint64_t seed = 42;
  int clients = 2;
  // Rows written per table before the timed phase; the update-only kind
  // draws its zipf victims from exactly this keyspace.
  uint64_t preload_rows = 1000;
};

inline std::string bench_table_name(int i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "bench_%02d", i);
  return buf;
}

inline std::string bench_create_statement(const std::string& table) {
  return "create " + table + " pk:int k:int c:fstr:" +
         std::to_string(kBenchStrWidth) + " pad:fstr:" +
         std::to_string(kBenchPadWidth);
}

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Zipfian rank sampler over 0..n-1 (rank 0 hottest), standard CDF-split
// construction with incremental zeta so the support can grow.
class ZipfGen {
 public:
  ZipfGen(uint64_t items, double theta) : theta_(theta) {
    if (theta_ < 0.0 || theta_ >= 1.0)
      raise(ErrorCode::InvalidArgument, "zipf theta must be in [0, 1)");
    grow(items);
  }

  void grow(uint64_t items) {
    while (n_ < items) {
      ++n_;
      zetan_ += 1.0 / std::pow(static_cast<double>(n_), theta_);
    }
    if (n_ >= 2) {
      alpha_ = 1.0 / (1.0 - theta_);
      double zeta2 = 1.0 + std::pow(0.5, theta_);
      eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n_), 1.0 - theta_)) /
             (1.0 - zeta2 / zetan_);
    }
  }

  uint64_t items() const { return n_; }

  uint64_t operator()(std::mt19937_64& rng) {
    if (n_ <= 1) return 0;
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double uz = u * zetan_;
    if (uz < 1.0) return 0;
    if (uz < 1.0 + std::pow(0.5, theta_)) return 1;
    auto r = static_cast<uint64_t>(static_cast<double>(n_) *
                                   std::pow(eta_ * u - eta_ + 1.0, alpha_));
    return r >= n_ ? n_ - 1 : r;
  }

 private:
  double theta_;
  uint64_t n_ = 0;
  double zetan_ = 0.0;
  double alpha_ = 0.0;
  double eta_ = 0.0;
};

// ---------------------------------------------------------------------------
// op streams

struct BenchOp {
  enum class Kind { Insert, Update, Delete, Lookup };
  Kind kind = Kind::Insert;
  int table = 0;
  int64_t pk = 0;
  int64_t k = 0;
  std::string c;
  std::string pad;
};

inline std::string bench_statement(const BenchOp& op) {
  std::string t = bench_table_name(op.table);
  switch (op.kind) {
    case BenchOp::Kind::Insert:
      return "insert " + t + " " + std::to_string(op.pk) + " " +
             std::to_string(op.k) + " " + op.c + " " + op.pad;
    case BenchOp::Kind::Update:
      return "update " + t + " " + std::to_string(op.pk) +
             " k=" + std::to_string(op.k) + " c=" + op.c;
    case BenchOp::Kind::Delete:
      return "delete " + t + " " + std::to_string(op.pk);
    case BenchOp::Kind::Lookup:
      return "lookup " + t + " " + std::to_string(op.pk);
  }
  raise(ErrorCode::InvalidArgument, "bad op kind");
}

// Deterministic per-(seed, client) op generator. Each client works a private
// pk range so streams never conflict and the whole workload is a pure
// function of (spec, client id): update and delete victims come from the
// client's own live rows, while the update-only kind draws zipf ranks from
// the shared preloaded keyspace, hottest rank first.
class OpStream {
 public:
  OpStream(const WorkloadSpec& spec, int client)
      : spec_(spec),
        rng_(detail::splitmix64(spec.seed ^ (0x9e3779b9ULL * (client + 1)))),
        zipf_(std::max<uint64_t>(spec.preload_rows, 1), spec.zipf_theta),
        pk_base_(static_cast<int64_t>(client + 1) * 100000000000LL) {
    if (spec_.tables < 1)
      raise(ErrorCode::InvalidArgument, "workload needs at least one table");
    if (spec_.kind == WorkloadKind::WriteOnlyZipf && spec_.preload_rows == 0)
      raise(ErrorCode::InvalidArgument,
            "write_only_zipf needs preload_rows > 0");
  }

  BenchOp next() {
    switch (spec_.kind) {
      case WorkloadKind::InsertOnly:
        return make_insert();
      case WorkloadKind::WriteOnlyZipf: {
        BenchOp op;
        op.kind = BenchOp::Kind::Update;
        op.table = pick_table();
        op.pk = static_cast<int64_t>(zipf_(rng_));
        op.k = static_cast<int64_t>(rng_());
        op.c = rand_str(kBenchStrWidth);
        return op;
      }
      case WorkloadKind::Mixed: {
        uint64_t r = rng_() % 100;
        if (r < 50 || live_.empty()) return make_insert();
        if (r < 75) {
          BenchOp op;
          op.kind = BenchOp::Kind::Update;
          std::tie(op.table, op.pk) = pick_live();
          op.k = static_cast<int64_t>(rng_());
          op.c = rand_str(kBenchStrWidth);
          return op;
        }
        if (r < 85) {
          BenchOp op;
          op.kind = BenchOp::Kind::Delete;
          size_t idx = rng_() % live_.size();
          std::tie(op.table, op.pk) = live_[idx];
          live_[idx] = live_.back();
          live_.pop_back();
          return op;
        }
        BenchOp op;
        op.kind = BenchOp::Kind::Lookup;
        std::tie(op.table, op.pk) = pick_live();
        return op;
      }
    }
    raise(ErrorCode::InvalidArgument, "bad workload kind");
  }

 private:
  BenchOp make_insert() {
    BenchOp op;
    op.kind = BenchOp::Kind::Insert;
    op.table = pick_table();
    op.pk = pk_base_ + next_row_++;
    op.k = static_cast<int64_t>(rng_());
    op.c = rand_str(kBenchStrWidth);
    op.pad = rand_str(kBenchPadWidth);
    live_.emplace_back(op.table, op.pk);
    return op;
  }

  int pick_table() { return static_cast<int>(rng_() % spec_.tables); }

  std::pair<int, int64_t> pick_live() { return live_[rng_() % live_.size()]; }

  std::string rand_str(size_t n) {
    static const char kAlpha[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string s(n, 'x');
    for (auto& ch : s) ch = kAlpha[rng_() % 36];
    return s;
  }

  WorkloadSpec spec_;
  std::mt19937_64 rng_;
  ZipfGen zipf_;
  int64_t pk_base_;
  int64_t next_row_ = 0;
  std::vector<std::pair<int, int64_t>> live_;
};

// Preload rows are shared across clients: pks 0..preload_rows-1 per table,
// generated from the spec seed alone.
inline std::vector<std::string> preload_statements(const WorkloadSpec& spec) {
  std::vector<std::string> out;
  std::mt19937_64 rng(detail::splitmix64(spec.seed ^ 0x70726c64ULL));
  static const char kAlpha[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  auto str = [&](size_t n) {
    std::string s(n, 'x');
    for (auto& ch : s) ch = kAlpha[rng() % 36];
    return s;
  };
  for (int t = 0; t < spec.tables; ++t)
    for (uint64_t p = 0; p < spec.preload_rows; ++p) {
      BenchOp op;
      op.kind = BenchOp::Kind::Insert;
      op.table = t;
      op.pk = static_cast<int64_t>(p);
      op.k = static_cast<int64_t>(rng());
      op.c = str(kBenchStrWidth);
      op.pad = str(kBenchPadWidth);
      out.push_back(bench_statement(op));
    }
  return out;
}

// ---------------------------------------------------------------------------
// sessions: one statement-execution channel per client thread

struct ExecAck {
  bool is_write = false;
  uint64_t commit_seq = 0;
  uint64_t rows = 0;
};

class BenchSession {
 public:
  virtual ~BenchSession() = default;
  virtual ExecAck exec(const std::string& stmt, Consistency c) = 0;
};

class LocalSession final : public BenchSession {
 public:
  explicit LocalSession(InProcessCluster& cl) : cl_(cl) {}

  ExecAck exec(const std::string& stmt, Consistency c) override {
    ExecResult r = cl_.exec(stmt, c);
    ExecAck ack;
    ack.is_write = r.is_write;
    ack.commit_seq = r.write.commit_seq;
    ack.rows = r.is_write ? 0 : r.query.rows.size();
    return ack;
  }

 private:
  InProcessCluster& cl_;
};

// Speaks the proxy wire protocol over one persistent connection.
class WireSession final : public BenchSession {
 public:
  explicit WireSession(const std::string& proxy_addr)
      : sock_(connect_to(proxy_addr)) {}

  ExecAck exec(const std::string& stmt, Consistency c) override {
    sock_.write_line(std::string("EXEC ") + consistency_name(c) + " " + stmt);
    std::string line;
    if (!sock_.read_line(line))
      raise(ErrorCode::ClusterDown, "proxy connection closed");
    if (line.rfind("SEQ ", 0) == 0) {
      ExecAck ack;
      ack.is_write = true;
      ack.commit_seq = std::stoull(line.substr(4));
      return ack;
    }
    if (line.rfind("ROWS ", 0) == 0) {
      ExecAck ack;
      ack.rows = std::stoull(line.substr(5));
      // drain COLS + value lines + END
      while (sock_.read_line(line) && line != "END") {
      }
      return ack;
    }
    if (line.rfind("ERR ", 0) == 0) {
      std::string rest = line.substr(4);
      size_t sp = rest.find(' ');
      std::string name = rest.substr(0, sp);
      std::string msg =
          sp == std::string::npos ? "" : wire::unescape(rest.substr(sp + 1));
      ErrorCode code;
      if (error_code_from_name(name, code)) raise(code, msg);
      raise(ErrorCode::IoFailure, "unrecognized error reply: " + line);
    }
    raise(ErrorCode::IoFailure, "unrecognized reply: " + line);
  }

 private:
  LineSocket sock_;
};

using SessionFactory = std::function<std::unique_ptr<BenchSession>()>;

inline SessionFactory local_sessions(InProcessCluster& cl) {
  return [&cl] { return std::make_unique<LocalSession>(cl); };
}

inline SessionFactory wire_sessions(std::string proxy_addr) {
  return [proxy_addr] { return std::make_unique<WireSession>(proxy_addr); };
}

// ---------------------------------------------------------------------------
// cluster probes for the lag time series

struct NodeProbe {
  std::string id;
  std::function<uint64_t()> applied;
  // cumulative {units applied, dmls applied}; optional
  std::function<std::pair<uint64_t, uint64_t>()> replay;
};

struct ClusterProbe {
  std::function<uint64_t()> written;
  std::vector<NodeProbe> nodes;
};

inline ClusterProbe probe_cluster(InProcessCluster& cl) {
  ClusterProbe p;
  p.written = [&cl] { return cl.rw().log().written_lsn(); };
  for (size_t i = 0; i < cl.ro_count(); ++i) {
    RoEngine& eng = cl.ro(i);
    NodeProbe np;
    np.id = "ro" + std::to_string(i + 1);
    np.applied = [&eng] { return eng.applied_lsn(); };
    np.replay = [&eng] {
      ReplicationStats s = eng.stats();
      return std::make_pair(s.units_applied, s.dmls_applied);
    };
    p.nodes.push_back(std::move(np));
  }
  return p;
}

// STATUS-poll probe for wire mode; one persistent connection per node.
inline ClusterProbe probe_status_addrs(const std::vector<std::string>& addrs) {
  ClusterProbe p;
  auto latest_written = std::make_shared<std::atomic<uint64_t>>(0);
  for (const auto& addr : addrs) {
    auto sock = std::make_shared<LineSocket>(connect_to(addr));
    auto mu = std::make_shared<std::mutex>();
    std::string id = "?";
    {
      sock->write_line("STATUS");
      std::string line;
      if (sock->read_line(line) && line.rfind("NODE ", 0) == 0) {
        std::istringstream in(line.substr(5));
        in >> id;
      }
    }
    NodeProbe np;
    np.id = id;
    np.applied = [sock, mu, latest_written]() -> uint64_t {
      std::lock_guard lk(*mu);
      sock->write_line("STATUS");
      std::string line;
      if (!sock->read_line(line) || line.rfind("NODE ", 0) != 0) return 0;
      std::istringstream in(line.substr(5));
      std::string id2, role;
      uint64_t applied = 0, written = 0;
      in >> id2 >> role >> applied >> written;
      store_max(*latest_written, written);
      return applied;
    };
    p.nodes.push_back(std::move(np));
  }
  p.written = [latest_written] { return latest_written->load(); };
  return p;
}

// ---------------------------------------------------------------------------
// throughput benchmark

struct LagSample {
  double t_ms = 0;
  std::string node;
  uint64_t applied = 0;
  uint64_t written = 0;
  uint64_t units = 0;
  uint64_t dmls = 0;
};

struct BenchReport {
  WorkloadSpec spec;
  double wall_s = 0;
  uint64_t ops_committed = 0;
  uint64_t ops_failed = 0;
  std::vector<uint64_t> committed_per_second;  // raw throughput samples
  std::vector<LagSample> lag;                  // raw replication samples

  double tp_ops_per_s() const {
    return wall_s > 0 ? static_cast<double>(ops_committed) / wall_s : 0.0;
  }

  // Replay throughput per node over the sampled window, dmls/s. Zero when
  // the probe has no dml counters (wire STATUS carries only LSNs).
  std::map<std::string, double> replay_dmls_per_s() const {
    std::map<std::string, std::pair<LagSample, LagSample>> span;
    for (const auto& s : lag) {
      auto it = span.find(s.node);
      if (it == span.end())
        span.emplace(s.node, std::make_pair(s, s));
      else
        it->second.second = s;
    }
    std::map<std::string, double> out;
    for (const auto& [node, fl] : span) {
      double dt = (fl.second.t_ms - fl.first.t_ms) / 1000.0;
      out[node] = dt > 0 ? (fl.second.dmls - fl.first.dmls) / dt : 0.0;
    }
    return out;
  }

  // Applied-frontier advance rate per node, lsn/s; defined in both modes.
  std::map<std::string, double> applied_lsn_per_s() const {
    std::map<std::string, std::pair<LagSample, LagSample>> span;
    for (const auto& s : lag) {
      auto it = span.find(s.node);
      if (it == span.end())
        span.emplace(s.node, std::make_pair(s, s));
      else
        it->second.second = s;
    }
    std::map<std::string, double> out;
    for (const auto& [node, fl] : span) {
      double dt = (fl.second.t_ms - fl.first.t_ms) / 1000.0;
      out[node] =
          dt > 0 ? double(fl.second.applied - fl.first.applied) / dt : 0.0;
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["report_kind"] = "bench";
    j["schema_version"] = 1;
    j["workload"] = {{"kind", workload_kind_name(spec.kind)},
                     {"tables", spec.tables},
                     {"zipf_theta", spec.zipf_theta},
                     {"ops_per_second", spec.ops_per_second},
                     {"duration_s", spec.duration_s},
                     {"seed", spec.seed},
                     {"clients", spec.clients},
                     {"preload_rows", spec.preload_rows}};
    j["wall_s"] = wall_s;
    j["ops_committed"] = ops_committed;
    j["ops_failed"] = ops_failed;
    j["tp_ops_per_s"] = tp_ops_per_s();
    j["committed_per_second"] = committed_per_second;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : lag)
      samples.push_back({{"t_ms", s.t_ms},
                         {"node", s.node},
                         {"applied_lsn", s.applied},
                         {"written_lsn", s.written},
                         {"units_applied", s.units},
                         {"dmls_applied", s.dmls}});
    j["lag_samples"] = std::move(samples);
    nlohmann::json rates = nlohmann::json::object();
    for (const auto& [node, rate] : replay_dmls_per_s()) rates[node] = rate;
    j["replay_dmls_per_s"] = std::move(rates);
    return j;
  }

  void write_lag_csv(std::ostream& os) const {
    os << "t_ms,node,applied_lsn,written_lsn,units_applied,dmls_applied\n";
    for (const auto& s : lag)
      os << s.t_ms << ',' << s.node << ',' << s.applied << ',' << s.written
         << ',' << s.units << ',' << s.dmls << '\n';
  }

  void write_throughput_csv(std::ostream& os) const {
    os << "second,ops_committed\n";
    for (size_t i = 0; i < committed_per_second.size(); ++i)
      os << i << ',' << committed_per_second[i] << '\n';
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Issues ops from one stream at the target per-client rate until deadline.
inline void client_loop(BenchSession& session, OpStream& stream,
                        double per_client_ops_s, Clock::time_point t0,
                        Clock::time_point deadline, uint64_t& committed,
                        uint64_t& failed, std::vector<uint64_t>& per_second) {
  auto next = t0;
  std::chrono::duration<double> interval{
      per_client_ops_s > 0 ? 1.0 / per_client_ops_s : 0.0};
  while (Clock::now() < deadline) {
    if (per_client_ops_s > 0) {
      std::this_thread::sleep_until(next);
      next += std::chrono::duration_cast<Clock::duration>(interval);
      if (Clock::now() >= deadline) break;
    }
    BenchOp op = stream.next();
    try {
      session.exec(bench_statement(op), Consistency::Eventual);
      ++committed;
      auto sec = static_cast<size_t>(ms_since(t0) / 1000.0);
      if (per_second.size() <= sec) per_second.resize(sec + 1, 0);
      ++per_second[sec];
    } catch (const Error&) {
      ++failed;
    }
  }
}

}  // namespace detail

inline BenchReport run_bench(const WorkloadSpec& spec,
                             const SessionFactory& make_session,
                             const ClusterProbe& probe = {},
                             int sample_interval_ms = 100) {
  if (spec.clients < 1)
    raise(ErrorCode::InvalidArgument, "bench needs at least one client");
  BenchReport report;
  report.spec = spec;

  std::unique_ptr<BenchSession> setup;
  try {
    setup = make_session();
  } catch (const Error& e) {
    raise(ErrorCode::ClusterDown, std::string("cannot reach cluster: ") + e.msg());
  }
  for (int t = 0; t < spec.tables; ++t) {
    try {
      setup->exec(bench_create_statement(bench_table_name(t)),
                  Consistency::Eventual);
    } catch (const Error&) {
      // table exists from an earlier run against the same data dir
    }
  }
  for (const auto& stmt : preload_statements(spec))
    setup->exec(stmt, Consistency::Eventual);

  std::vector<std::unique_ptr<BenchSession>> sessions;
  for (int i = 0; i < spec.clients; ++i) sessions.push_back(make_session());

  auto t0 = detail::Clock::now();
  auto deadline =
      t0 + std::chrono::duration_cast<detail::Clock::duration>(
               std::chrono::duration<double>(spec.duration_s));
  std::vector<uint64_t> committed(spec.clients, 0), failed(spec.clients, 0);
  std::vector<std::vector<uint64_t>> per_second(spec.clients);
  std::vector<OpStream> streams;
  for (int i = 0; i < spec.clients; ++i) streams.emplace_back(spec, i);

  std::atomic<bool> done{false};
  std::thread monitor;
  std::vector<LagSample> lag;
  if (probe.written || !probe.nodes.empty()) {
    monitor = std::thread([&] {
      while (!done.load()) {
        double t_ms = detail::ms_since(t0);
        uint64_t w = probe.written ? probe.written() : 0;
        for (const auto& np : probe.nodes) {
          LagSample s;
          s.t_ms = t_ms;
          s.node = np.id;
          s.applied = np.applied ? np.applied() : 0;
          s.written = w;
          if (np.replay) std::tie(s.units, s.dmls) = np.replay();
          lag.push_back(std::move(s));
        }
        std::this_thread::sleep_for(
            std::chrono::milliseconds(sample_interval_ms));
      }
    });
  }

  std::vector<std::thread> threads;
  double per_client = spec.ops_per_second / spec.clients;
  for (int i = 0; i < spec.clients; ++i)
    threads.emplace_back([&, i] {
      detail::client_loop(*sessions[i], streams[i], per_client, t0, deadline,
                          committed[i], failed[i], per_second[i]);
    });
  for (auto& t : threads) t.join();
  done.store(true);
  if (monitor.joinable()) monitor.join();

  report.wall_s = detail::ms_since(t0) / 1000.0;
  for (int i = 0; i < spec.clients; ++i) {
    report.ops_committed += committed[i];
    report.ops_failed += failed[i];
    if (per_second[i].size() > report.committed_per_second.size())
      report.committed_per_second.resize(per_second[i].size(), 0);
    for (size_t s = 0; s < per_second[i].size(); ++s)
      report.committed_per_second[s] += per_second[i][s];
  }
  report.lag = std::move(lag);
  return report;
}

// ---------------------------------------------------------------------------
// visibility delay

// Nearest-rank percentile over a copy; q in (0, 1].
inline double percentile_nearest_rank(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  auto rank = static_cast<size_t>(std::ceil(q * v.size()));
  if (rank == 0) rank = 1;
  return v[std::min(rank, v.size()) - 1];
}

struct VdSpec {
  double poll_ms = 1.0;
  double duration_s = 5.0;
  double load_ops_per_s = 1000.0;
  double sentinel_interval_ms = 10.0;
  int load_clients = 2;
  int load_tables = 8;
  uint64_t seed = 42;
};

struct VdReport {
  std::vector<double> samples_ms;  // raw, in measurement order
  bool warning_empty = false;
  double p50 = 0, p90 = 0, p99 = 0, max = 0;
  uint64_t load_ops_committed = 0;
  double wall_s = 0;
  VdSpec spec;

  void finalize() {
    if (samples_ms.empty()) {
      warning_empty = true;
      return;
    }
    p50 = percentile_nearest_rank(samples_ms, 0.50);
    p90 = percentile_nearest_rank(samples_ms, 0.90);
    p99 = percentile_nearest_rank(samples_ms, 0.99);
    max = *std::max_element(samples_ms.begin(), samples_ms.end());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["report_kind"] = "vd";
    j["schema_version"] = 1;
    j["poll_ms"] = spec.poll_ms;
    j["duration_s"] = spec.duration_s;
    j["load_ops_per_s"] = spec.load_ops_per_s;
    j["seed"] = spec.seed;
    j["wall_s"] = wall_s;
    j["load_ops_committed"] = load_ops_committed;
    j["samples_ms"] = samples_ms;
    j["sample_count"] = samples_ms.size();
    j["warning_empty"] = warning_empty;
    j["percentiles"] = {{"p50", p50}, {"p90", p90}, {"p99", p99}, {"max", max}};
    return j;
  }

  void write_csv(std::ostream& os) const {
    os << "sample,delay_ms\n";
    for (size_t i = 0; i < samples_ms.size(); ++i)
      os << i << ',' << samples_ms[i] << '\n';
  }
};

// Probes commit-to-readable latency with sentinel rows: a writer stamps the
// commit ack time, then a single outstanding probe polls one replica until
// the row is readable. Background insert load runs for the whole window.
inline VdReport measure_vd(InProcessCluster& cl, const VdSpec& spec) {
  if (cl.ro_count() == 0)
    raise(ErrorCode::InvalidArgument, "vd needs at least one replica");
  VdReport report;
  report.spec = spec;

  WorkloadSpec load;
  load.kind = WorkloadKind::InsertOnly;
  load.tables = spec.load_tables;
  load.ops_per_second = spec.load_ops_per_s;
  load.duration_s = spec.duration_s;
  load.seed = spec.seed;
  load.clients = spec.load_clients;
  load.preload_rows = 0;

  LocalSession setup(cl);
  for (int t = 0; t < load.tables; ++t) {
    try {
      setup.exec(bench_create_statement(bench_table_name(t)),
                 Consistency::Eventual);
    } catch (const Error&) {
    }
  }
  setup.exec("create vd_probe pk:int k:int", Consistency::Eventual);

  auto t0 = detail::Clock::now();
  auto deadline =
      t0 + std::chrono::duration_cast<detail::Clock::duration>(
               std::chrono::duration<double>(spec.duration_s));

  std::vector<uint64_t> committed(load.clients, 0), failed(load.clients, 0);
  std::vector<std::vector<uint64_t>> per_second(load.clients);
  std::vector<OpStream> streams;
  for (int i = 0; i < load.clients; ++i) streams.emplace_back(load, i);
  std::vector<std::unique_ptr<BenchSession>> sessions;
  for (int i = 0; i < load.clients; ++i)
    sessions.push_back(std::make_unique<LocalSession>(cl));

  std::vector<std::thread> threads;
  double per_client =
      load.clients > 0 ? load.ops_per_second / load.clients : 0.0;
  for (int i = 0; i < load.clients; ++i)
    threads.emplace_back([&, i] {
      detail::client_loop(*sessions[i], streams[i], per_client, t0, deadline,
                          committed[i], failed[i], per_second[i]);
    });

  // sentinel prober: one outstanding sentinel at a time
  QueryExecutor& probe = cl.ro_node("ro1").executor();
  LocalSession writer(cl);
  int64_t sentinel_pk = 0;
  auto poll = std::chrono::duration_cast<detail::Clock::duration>(
      std::chrono::duration<double, std::milli>(spec.poll_ms));
  auto gap = std::chrono::duration_cast<detail::Clock::duration>(
      std::chrono::duration<double, std::milli>(spec.sentinel_interval_ms));
  while (detail::Clock::now() < deadline) {
    int64_t pk = sentinel_pk++;
    std::string stmt =
        "insert vd_probe " + std::to_string(pk) + " " + std::to_string(pk);
    writer.exec(stmt, Consistency::Eventual);
    auto committed_at = detail::Clock::now();
    std::string lookup = "lookup vd_probe " + std::to_string(pk);
    for (;;) {
      QueryResult r = probe.execute_text(lookup);
      if (!r.rows.empty()) break;
      std::this_thread::sleep_for(poll);
    }
    double delay =
        std::chrono::duration<double, std::milli>(detail::Clock::now() -
                                                  committed_at)
            .count();
    report.samples_ms.push_back(std::max(0.0, delay));
    std::this_thread::sleep_until(committed_at + gap);
  }

  for (auto& t : threads) t.join();
  report.wall_s = detail::ms_since(t0) / 1000.0;
  for (int i = 0; i < load.clients; ++i)
    report.load_ops_committed += committed[i];
  report.finalize();
  return report;
}

// ---------------------------------------------------------------------------
// scale-out demonstration

struct ScaleOutSpec {
  int n_new_nodes = 2;
  double load_ops_per_s = 1000.0;
  double warmup_s = 2.0;  // load before the first checkpoint
  // Log-tail age of each node's checkpoint when the node joins. The first
  // joiner picks up a stale round; later joiners get the next round, taken
  // much closer to their join time, so their replay tail is shorter.
  double first_ckpt_age_s = 1.5;
  double later_ckpt_age_s = 0.25;
  uint64_t seed = 42;
  int tables = 4;
  std::string data_dir;
  Config cfg;
  bool rebuild_baseline = true;
  // Rows bulk-inserted before the demo starts. This is what separates the
  // two bootstrap modes: a rebuild recompresses all of it from row pages,
  // a checkpoint start just loads the already-compressed packs.
  uint64_t preload_rows = 0;
};

struct NodeTimeline {
  std::string node;
  std::string mode;  // "checkpoint" or "rebuild"
  double start_off_s = 0;  // offset of recover start from demo start
  double serving_s = 0;    // recover start -> first servable read point
  double caught_up_s = 0;  // recover start -> applied >= writer frontier
  uint64_t start_csn = 0;  // commit seq the node bootstrapped from
  uint64_t writer_seq_at_start = 0;  // commit frontier when recovery began

  // The pure log-replay phase after the node is already serving; this is
  // the part the bootstrap tail length governs.
  double catch_up_replay_s() const { return caught_up_s - serving_s; }
};

struct ScaleOutReport {
  std::vector<NodeTimeline> nodes;
  std::optional<NodeTimeline> rebuild;
  double load_ops_per_s = 0;
  uint64_t ops_committed = 0;
  uint64_t preload_rows = 0;

  nlohmann::json to_json() const {
    auto entry = [](const NodeTimeline& t) {
      return nlohmann::json{{"node", t.node},
                            {"mode", t.mode},
                            {"start_off_s", t.start_off_s},
                            {"serving_s", t.serving_s},
                            {"caught_up_s", t.caught_up_s},
                            {"catch_up_replay_s", t.catch_up_replay_s()},
                            {"start_csn", t.start_csn},
                            {"writer_seq_at_start", t.writer_seq_at_start}};
    };
    nlohmann::json j;
    j["report_kind"] = "scale_out";
    j["schema_version"] = 1;
    j["load_ops_per_s"] = load_ops_per_s;
    j["ops_committed"] = ops_committed;
    j["preload_rows"] = preload_rows;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : nodes) arr.push_back(entry(t));
    j["nodes"] = std::move(arr);
    if (rebuild) j["rebuild_baseline"] = entry(*rebuild);
    return j;
  }
};

// Runs a writer under steady insert load, periodically checkpoints from a
// seed replica, and times how long each newly added node needs to serve and
// to catch up with the writer frontier. Optionally times a baseline node
// that bootstraps from the row store instead of a checkpoint. Nodes are
// timed one at a time so each one sees the same competing load.
inline ScaleOutReport scale_out_demo(const ScaleOutSpec& spec) {
  ScaleOutReport report;
  report.load_ops_per_s = spec.load_ops_per_s;
  if (spec.n_new_nodes == 0) return report;
  if (spec.data_dir.empty())
    raise(ErrorCode::InvalidArgument, "scale-out needs a data dir");
  if (spec.n_new_nodes < 0)
    raise(ErrorCode::InvalidArgument, "node count must be >= 0");

  RowStore store(spec.data_dir, spec.cfg);
  std::vector<TableId> table_ids;
  for (int t = 0; t < spec.tables; ++t)
    table_ids.push_back(
        exec_write(store, bench_create_statement(bench_table_name(t))).table);

  if (spec.preload_rows > 0) {
    std::mt19937_64 prng(detail::splitmix64(spec.seed ^ 0x736f7072ULL));
    uint64_t next_pk = 0;
    while (next_pk < spec.preload_rows) {
      auto& h = store.begin_txn();
      uint64_t end = std::min(spec.preload_rows, next_pk + 2000);
      for (; next_pk < end; ++next_pk) {
        Row row;
        row.values = {Value{static_cast<int64_t>(next_pk)},
                      Value{static_cast<int64_t>(prng())},
                      Value{"v" + std::to_string(prng() % 997)},
                      Value{"p" + std::to_string(next_pk % 53)}};
        store.txn_insert(h, table_ids[next_pk % table_ids.size()],
                         std::move(row));
      }
      store.commit(h);
    }
  }
  report.preload_rows = spec.preload_rows;

  RoEngine seed_ro(spec.data_dir, spec.cfg, "scale_seed", &store.log().bus());
  if (store.last_commit_seq() > 0)
    seed_ro.build_from_row_store(store);
  else
    seed_ro.start(RoEngine::StartMode::Scratch);

  WorkloadSpec load;
  load.kind = WorkloadKind::InsertOnly;
  load.tables = spec.tables;
  load.ops_per_second = spec.load_ops_per_s;
  load.duration_s = 1e9;  // runs until stopped
  load.seed = spec.seed;
  load.clients = 1;
  load.preload_rows = 0;

  std::atomic<bool> stop_load{false};
  std::atomic<uint64_t> ops{0};
  auto t0 = detail::Clock::now();
  std::thread loader([&] {
    OpStream stream(load, 0);
    auto next = t0;
    std::chrono::duration<double> interval{
        load.ops_per_second > 0 ? 1.0 / load.ops_per_second : 0.0};
    while (!stop_load.load()) {
      if (load.ops_per_second > 0) {
        std::this_thread::sleep_until(next);
        next += std::chrono::duration_cast<detail::Clock::duration>(interval);
      }
      if (stop_load.load()) break;
      exec_write(store, bench_statement(stream.next()));
      ops.fetch_add(1);
    }
  });

  auto elapsed_s = [&] { return detail::ms_since(t0) / 1000.0; };
  auto sleep_s = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };
  auto time_catch_up = [&](RoEngine& node) {
    for (;;) {
      if (node.applied_lsn() >= store.log().written_lsn()) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  };

  sleep_s(spec.warmup_s);

  for (int i = 0; i < spec.n_new_nodes; ++i) {
    uint64_t csn = seed_ro.checkpoint_now(true);
    // the replay tail this node faces is the load that lands in this window
    sleep_s(i == 0 ? spec.first_ckpt_age_s : spec.later_ckpt_age_s);
    NodeTimeline tl;
    tl.node = "scale_" + std::to_string(i + 1);
    tl.mode = "checkpoint";
    tl.start_csn = csn;
    tl.start_off_s = elapsed_s();
    tl.writer_seq_at_start = store.last_commit_seq();
    auto ts = detail::Clock::now();
    RoEngine node(spec.data_dir, spec.cfg, tl.node, &store.log().bus());
    node.start(RoEngine::StartMode::FromCheckpoint);
    tl.serving_s =
        std::chrono::duration<double>(detail::Clock::now() - ts).count();
    time_catch_up(node);
    tl.caught_up_s =
        std::chrono::duration<double>(detail::Clock::now() - ts).count();
    node.stop();
    report.nodes.push_back(std::move(tl));
  }

  if (spec.rebuild_baseline) {
    sleep_s(spec.later_ckpt_age_s);
    NodeTimeline tl;
    tl.node = "scale_rebuild";
    tl.mode = "rebuild";
    tl.start_off_s = elapsed_s();
    tl.writer_seq_at_start = store.last_commit_seq();
    auto ts = detail::Clock::now();
    RoEngine node(spec.data_dir, spec.cfg, tl.node, &store.log().bus());
    node.build_from_row_store(store);
    tl.start_csn = node.column_floor();
    tl.serving_s =
        std::chrono::duration<double>(detail::Clock::now() - ts).count();
    time_catch_up(node);
    tl.caught_up_s =
        std::chrono::duration<double>(detail::Clock::now() - ts).count();
    node.stop();
    report.rebuild = std::move(tl);
  }

  stop_load.store(true);
  loader.join();
  seed_ro.stop();
  report.ops_committed = ops.load();
  return report;
}

}  // namespace imci

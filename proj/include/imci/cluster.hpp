#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "imci/proxy.hpp"
#include "imci/query.hpp"
#include "imci/row_store.hpp"

namespace imci {

// Write statements share the query text surface:
//   create <table> <name:int|name:fstr:<w>|name:vstr> ...
//   insert <table> <v0> <v1> ...
//   update <table> <pk> <col>=<value> ...
//   delete <table> <pk>
// Each DML executes as its own transaction; the returned seq is its commit.
struct WriteResult {
  Lsn commit_seq = 0;
  TableId table = 0;
};

namespace detail {

inline Value parse_typed(const std::string& tok, const ColumnDef& col) {
  if (col.type == ColumnType::Int64) return Value{parse_i64(tok)};
  return Value{tok};
}

inline ColumnDef parse_col_def(const std::string& spec) {
  size_t c1 = spec.find(':');
  if (c1 == std::string::npos)
    raise(ErrorCode::InvalidArgument, "column spec needs name:type: " + spec);
  ColumnDef def;
  def.name = spec.substr(0, c1);
  std::string rest = spec.substr(c1 + 1);
  if (rest == "int") {
    def.type = ColumnType::Int64;
  } else if (rest == "vstr") {
    def.type = ColumnType::VarString;
  } else if (rest.rfind("fstr:", 0) == 0) {
    def.type = ColumnType::FixedString;
    def.width = static_cast<uint32_t>(parse_u64(rest.substr(5), "width"));
  } else {
    raise(ErrorCode::InvalidArgument, "unknown column type: " + rest);
  }
  return def;
}

}  // namespace detail

inline WriteResult exec_write(RowStore& rw, const std::string& stmt) {
  std::istringstream in(stmt);
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(std::move(t));
  if (tok.empty()) raise(ErrorCode::UnknownVerb, "empty statement");
  const std::string& verb = tok[0];

  if (verb == "create") {
    if (tok.size() < 3)
      raise(ErrorCode::InvalidArgument, "create <table> <col:type> ...");
    std::vector<ColumnDef> cols;
    for (size_t i = 2; i < tok.size(); ++i)
      cols.push_back(detail::parse_col_def(tok[i]));
    WriteResult r;
    r.table = rw.create_table(tok[1], std::move(cols));
    return r;
  }

  if (tok.size() < 2) raise(ErrorCode::InvalidArgument, "missing table");
  const TableSchema* schema = rw.schemas().find_by_name(tok[1]);
  if (!schema) raise(ErrorCode::NotFound, "unknown table: " + tok[1]);
  WriteResult r;
  r.table = schema->table_id;

  if (verb == "insert") {
    if (tok.size() != 2 + schema->num_columns())
      raise(ErrorCode::InvalidArgument, "insert arity mismatch");
    Row row;
    for (size_t c = 0; c < schema->num_columns(); ++c)
      row.values.push_back(detail::parse_typed(tok[2 + c], schema->columns[c]));
    auto& h = rw.begin_txn();
    rw.txn_insert(h, schema->table_id, std::move(row));
    r.commit_seq = rw.commit(h);
    return r;
  }
  if (verb == "update") {
    if (tok.size() < 4)
      raise(ErrorCode::InvalidArgument, "update <table> <pk> <col>=<value>");
    int64_t pk = detail::parse_i64(tok[2]);
    std::vector<ColumnUpdate> ups;
    for (size_t i = 3; i < tok.size(); ++i) {
      size_t eq = tok[i].find('=');
      if (eq == std::string::npos)
        raise(ErrorCode::InvalidArgument, "expected col=value: " + tok[i]);
      std::string col = tok[i].substr(0, eq);
      int ci = schema->column_index(col);
      if (ci <= 0)
        raise(ErrorCode::InvalidArgument, "bad update column: " + col);
      ups.push_back({static_cast<uint16_t>(ci),
                     detail::parse_typed(tok[i].substr(eq + 1),
                                         schema->columns[ci])});
    }
    auto& h = rw.begin_txn();
    rw.txn_update(h, schema->table_id, pk, ups);
    r.commit_seq = rw.commit(h);
    return r;
  }
  if (verb == "delete") {
    if (tok.size() != 3)
      raise(ErrorCode::InvalidArgument, "delete <table> <pk>");
    auto& h = rw.begin_txn();
    rw.txn_delete(h, schema->table_id, detail::parse_i64(tok[2]));
    r.commit_seq = rw.commit(h);
    return r;
  }
  raise(ErrorCode::UnknownVerb, "unknown write verb: " + verb);
}

// Query execution against the writer's committed row state, for statements
// the proxy falls back to the RW node (e.g. strong reads with no caught-up
// RO). Semantically identical to the replica row path.
inline QueryResult rw_execute(const RowStore& rw, const QuerySpec& spec) {
  const TableSchema* schema = rw.schemas().find_by_name(spec.table);
  if (!schema) raise(ErrorCode::NotFound, "unknown table: " + spec.table);
  uint64_t snapshot =
      spec.snapshot_latest ? rw.last_commit_seq() : spec.snapshot;
  if (snapshot > rw.last_commit_seq())
    raise(ErrorCode::SnapshotAhead,
          "snapshot " + std::to_string(snapshot) + " not yet committed");
  BoundQuery bq = bind_query(spec, schema->table_id, *schema, snapshot);

  QueryResult out;
  out.snapshot = snapshot;
  detail::Aggregator agg(bq);
  const BoundTerm* pk_eq = nullptr;
  for (const auto& t : bq.terms)
    if (t.col == 0 && t.op == PredTerm::Op::Eq) {
      pk_eq = &t;
      break;
    }
  if (pk_eq) {
    if (auto row = rw.point_lookup(schema->table_id, pk_eq->lo_i, snapshot)) {
      ++out.stats.rows_examined;
      if (detail::row_matches(bq, *row)) agg.feed(*row);
    }
  } else {
    rw.scan_committed(schema->table_id, snapshot, [&](const Row& r) {
      ++out.stats.rows_examined;
      if (detail::row_matches(bq, r)) agg.feed(r);
    });
  }
  agg.finish(out);
  return out;
}

// Publishes the writer's durable frontier into the registry, waking on every
// group-flush broadcast.
class RwNode {
 public:
  RwNode(NodeRegistry& reg, RowStore& rw, const std::string& id)
      : rw_(rw), info_(reg.add_node(id, true)) {
    info_->written_lsn.store(rw_.log().written_lsn());
    reporter_ = std::thread([this] {
      while (!stop_.load(std::memory_order_acquire)) {
        Lsn w = rw_.log().written_lsn();
        store_max(info_->written_lsn, w);
        rw_.log().bus().wait_above(w, std::chrono::milliseconds(50));
      }
    });
  }
  ~RwNode() { stop(); }

  void stop() {
    if (!stop_.exchange(true)) reporter_.join();
  }

  RowStore& store() { return rw_; }
  const NodePtr& info() const { return info_; }

 private:
  RowStore& rw_;
  NodePtr info_;
  std::atomic<bool> stop_{false};
  std::thread reporter_;
};

// Publishes a replica's applied frontier on every advance and owns its
// query executor.
class RoNode {
 public:
  RoNode(NodeRegistry& reg, RoEngine& eng)
      : eng_(eng), exec_(eng), info_(reg.add_node(eng.node_id(), false)) {
    info_->applied_lsn.store(eng_.applied_lsn());
    reporter_ = std::thread([this] {
      while (!stop_.load(std::memory_order_acquire)) {
        Lsn a = eng_.applied_lsn();
        store_max(info_->applied_lsn, a);
        try {
          eng_.wait_applied_lsn(a + 1, 50);
        } catch (const Error&) {
          break;  // engine failed; final frontier already published
        }
      }
    });
  }
  ~RoNode() { stop(); }

  void stop() {
    if (!stop_.exchange(true)) reporter_.join();
  }

  RoEngine& engine() { return eng_; }
  QueryExecutor& executor() { return exec_; }
  const NodePtr& info() const { return info_; }

 private:
  RoEngine& eng_;
  QueryExecutor exec_;
  NodePtr info_;
  std::atomic<bool> stop_{false};
  std::thread reporter_;
};

struct ExecResult {
  bool is_write = false;
  WriteResult write;
  QueryResult query;
  std::string node_id;
  bool rw_fallback = false;
};

// One RW plus N replicas plus a proxy, all in one process. The default
// harness for tests and benchmarks.
class InProcessCluster {
 public:
  InProcessCluster(const std::string& data_dir, Config cfg, size_t n_ros,
                   PipelineHooks ro_hooks = {})
      : cfg_(std::move(cfg)),
        rw_(std::make_unique<RowStore>(data_dir, cfg_)),
        proxy_(registry_, cfg_) {
    rw_node_ = std::make_unique<RwNode>(registry_, *rw_, "rw");
    for (size_t i = 0; i < n_ros; ++i) {
      auto eng = std::make_unique<RoEngine>(data_dir, cfg_,
                                            "ro" + std::to_string(i + 1),
                                            &rw_->log().bus(), ro_hooks);
      eng->start();
      ros_.push_back(std::move(eng));
    }
    for (auto& e : ros_)
      ro_nodes_.push_back(std::make_unique<RoNode>(registry_, *e));
  }

  ~InProcessCluster() { stop(); }

  void stop() {
    if (stopped_) return;
    stopped_ = true;
    rw_node_->stop();
    for (auto& n : ro_nodes_) n->stop();
    for (auto& e : ros_) e->stop();
  }

  ExecResult exec(const std::string& stmt,
                  Consistency c = Consistency::Eventual) {
    ExecResult out;
    if (classify(stmt) == StmtClass::Write) {
      RouteResult route = proxy_.route_write();
      out.is_write = true;
      out.node_id = route.node()->id;
      out.write = exec_write(*rw_, stmt);
      // The proxy watched this commit succeed: its written snapshot must
      // cover it before any follow-up strong read samples the registry.
      store_max(route.node()->written_lsn, out.write.commit_seq);
      return out;
    }
    RouteResult route = proxy_.route_read(c);
    out.node_id = route.node()->id;
    out.rw_fallback = route.rw_fallback();
    if (route.node()->is_rw) {
      out.query = rw_execute(*rw_, parse_query(stmt));
      return out;
    }
    out.query = ro_node(route.node()->id).executor().execute_text(stmt);
    return out;
  }

  bool wait_all_applied(int timeout_ms) {
    Lsn w = rw_->log().written_lsn();
    for (auto& e : ros_)
      if (!e->wait_applied_lsn(w, timeout_ms)) return false;
    return true;
  }

  RowStore& rw() { return *rw_; }
  size_t ro_count() const { return ros_.size(); }
  RoEngine& ro(size_t i) { return *ros_.at(i); }
  RoNode& ro_node(const std::string& id) {
    for (auto& n : ro_nodes_)
      if (n->engine().node_id() == id) return *n;
    raise(ErrorCode::NotFound, "unknown ro node: " + id);
  }
  Proxy& proxy() { return proxy_; }
  NodeRegistry& registry() { return registry_; }
  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  std::unique_ptr<RowStore> rw_;
  NodeRegistry registry_;
  Proxy proxy_;
  std::unique_ptr<RwNode> rw_node_;
  std::vector<std::unique_ptr<RoEngine>> ros_;
  std::vector<std::unique_ptr<RoNode>> ro_nodes_;
  bool stopped_ = false;
};

}  // namespace imci

#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "imci/common.hpp"
#include "imci/config.hpp"

namespace imci {

enum class StmtClass : uint8_t { Write, Read };
enum class Consistency : uint8_t { Eventual, Strong };

inline const char* consistency_name(Consistency c) {
  return c == Consistency::Strong ? "strong" : "eventual";
}

inline Consistency parse_consistency(const std::string& s) {
  if (s == "strong") return Consistency::Strong;
  if (s == "eventual") return Consistency::Eventual;
  raise(ErrorCode::InvalidArgument, "unknown consistency level: " + s);
}

// Rough syntax classification by leading verb only.
inline StmtClass classify(const std::string& stmt) {
  size_t b = stmt.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    raise(ErrorCode::UnknownVerb, "empty statement");
  size_t e = stmt.find_first_of(" \t\r\n", b);
  std::string v = stmt.substr(b, e == std::string::npos ? e : e - b);
  if (v == "insert" || v == "update" || v == "delete" || v == "create" ||
      v == "begin" || v == "commit" || v == "abort" || v == "rollback")
    return StmtClass::Write;
  if (v == "scan" || v == "lookup") return StmtClass::Read;
  raise(ErrorCode::UnknownVerb, "unknown statement verb: " + v);
}

// Frontier values only move forward, whatever order reports land in.
inline void store_max(std::atomic<uint64_t>& a, uint64_t v) {
  uint64_t cur = a.load(std::memory_order_acquire);
  while (cur < v &&
         !a.compare_exchange_weak(cur, v, std::memory_order_acq_rel)) {
  }
}

struct NodeInfo {
  std::string id;
  std::string addr;  // host:port in multi-process mode, empty in-process
  bool is_rw = false;
  std::atomic<uint64_t> applied_lsn{0};
  std::atomic<uint64_t> written_lsn{0};
  std::atomic<int64_t> active_sessions{0};
  std::atomic<uint64_t> total_dispatches{0};
};
using NodePtr = std::shared_ptr<NodeInfo>;

// Shared node table: reporters push LSN frontiers in, dispatch reads them.
class NodeRegistry {
 public:
  NodePtr add_node(const std::string& id, bool is_rw,
                   const std::string& addr = "") {
    std::lock_guard lk(mu_);
    for (const auto& n : nodes_)
      if (n->id == id) raise(ErrorCode::InvalidArgument, "duplicate node " + id);
    if (is_rw)
      for (const auto& n : nodes_)
        if (n->is_rw)
          raise(ErrorCode::InvalidArgument, "cluster already has an RW node");
    auto n = std::make_shared<NodeInfo>();
    n->id = id;
    n->addr = addr;
    n->is_rw = is_rw;
    nodes_.push_back(n);
    return n;
  }

  // Frontier refresh for an already-registered node; reports from unknown
  // ids are dropped (registration carries the address, a report does not).
  void report_applied(const std::string& id, uint64_t lsn) {
    if (NodePtr n = find(id)) store_max(n->applied_lsn, lsn);
  }

  void report_written(const std::string& id, uint64_t lsn) {
    if (NodePtr n = find(id)) store_max(n->written_lsn, lsn);
  }

  NodePtr find(const std::string& id) const {
    std::lock_guard lk(mu_);
    for (const auto& n : nodes_)
      if (n->id == id) return n;
    return nullptr;
  }

  NodePtr rw() const {
    std::lock_guard lk(mu_);
    for (const auto& n : nodes_)
      if (n->is_rw) return n;
    return nullptr;
  }

  std::vector<NodePtr> ros() const {
    std::lock_guard lk(mu_);
    std::vector<NodePtr> out;
    for (const auto& n : nodes_)
      if (!n->is_rw) out.push_back(n);
    return out;
  }

  std::vector<NodePtr> all() const {
    std::lock_guard lk(mu_);
    return nodes_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<NodePtr> nodes_;
};

// One dispatched statement's claim on a node; releases the session slot on
// destruction.
class RouteResult {
 public:
  RouteResult() = default;
  RouteResult(NodePtr n, bool fallback, uint64_t written)
      : node_(std::move(n)), rw_fallback_(fallback), written_(written) {
    if (node_) {
      node_->active_sessions.fetch_add(1, std::memory_order_acq_rel);
      node_->total_dispatches.fetch_add(1, std::memory_order_relaxed);
    }
  }
  RouteResult(RouteResult&& o) noexcept
      : node_(std::move(o.node_)),
        rw_fallback_(o.rw_fallback_),
        written_(o.written_) {
    o.node_ = nullptr;
  }
  RouteResult& operator=(RouteResult&& o) noexcept {
    if (this != &o) {
      release();
      node_ = std::move(o.node_);
      rw_fallback_ = o.rw_fallback_;
      written_ = o.written_;
      o.node_ = nullptr;
    }
    return *this;
  }
  RouteResult(const RouteResult&) = delete;
  RouteResult& operator=(const RouteResult&) = delete;
  ~RouteResult() { release(); }

  const NodePtr& node() const { return node_; }
  bool rw_fallback() const { return rw_fallback_; }
  uint64_t written_at_dispatch() const { return written_; }

 private:
  void release() {
    if (node_) node_->active_sessions.fetch_sub(1, std::memory_order_acq_rel);
    node_ = nullptr;
  }

  NodePtr node_;
  bool rw_fallback_ = false;
  uint64_t written_ = 0;
};

// Statement dispatcher: writes to the RW, eventual reads to the
// least-session RO, strong reads only to ROs that have applied at least the
// RW's written LSN sampled once at dispatch (timeout falls back to the RW).
class Proxy {
 public:
  explicit Proxy(NodeRegistry& reg, const Config& cfg = Config())
      : reg_(reg),
        strong_timeout_ms_(cfg.get_int("strong.timeout_ms", 1000)) {}

  RouteResult route(const std::string& stmt, Consistency c) {
    return classify(stmt) == StmtClass::Write ? route_write() : route_read(c);
  }

  RouteResult route_write() {
    NodePtr rw = reg_.rw();
    if (!rw) raise(ErrorCode::NoAvailableNode, "no RW node registered");
    std::lock_guard lk(pick_mu_);
    return RouteResult(std::move(rw), false, 0);
  }

  RouteResult route_read(Consistency c) {
    if (c == Consistency::Eventual) {
      std::lock_guard lk(pick_mu_);
      NodePtr n = least_sessions(reg_.ros(), 0);
      if (!n) raise(ErrorCode::NoAvailableNode, "no RO node registered");
      return RouteResult(std::move(n), false, 0);
    }
    NodePtr rw = reg_.rw();
    uint64_t written =
        rw ? rw->written_lsn.load(std::memory_order_acquire) : 0;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(strong_timeout_ms_);
    while (true) {
      {
        std::lock_guard lk(pick_mu_);
        if (NodePtr n = least_sessions(reg_.ros(), written))
          return RouteResult(std::move(n), false, written);
      }
      if (std::chrono::steady_clock::now() >= deadline) break;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    if (!rw)
      raise(ErrorCode::NoAvailableNode, "no RO caught up and no RW fallback");
    std::lock_guard lk(pick_mu_);
    return RouteResult(std::move(rw), true, written);
  }

  int strong_timeout_ms() const { return strong_timeout_ms_; }

 private:
  // Greedy fewest-active-sessions; ties rotate by cumulative dispatches so
  // equal-speed nodes share sequential load too.
  static NodePtr least_sessions(std::vector<NodePtr> nodes,
                                uint64_t min_applied) {
    NodePtr best;
    int64_t best_n = 0;
    uint64_t best_t = 0;
    for (auto& n : nodes) {
      if (n->applied_lsn.load(std::memory_order_acquire) < min_applied)
        continue;
      int64_t s = n->active_sessions.load(std::memory_order_acquire);
      uint64_t t = n->total_dispatches.load(std::memory_order_relaxed);
      if (!best || s < best_n || (s == best_n && t < best_t)) {
        best = n;
        best_n = s;
        best_t = t;
      }
    }
    return best;
  }

  NodeRegistry& reg_;
  int strong_timeout_ms_;
  std::mutex pick_mu_;  // select+lease is atomic: greedy least-sessions
};

}  // namespace imci

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "imci/cluster.hpp"

namespace imci {

// Newline-delimited text protocol between processes:
//   to a node:   EXEC <stmt>                -> SEQ <n> | ROWS <n> ... END | ERR <code> <msg>
//                STATUS                     -> NODE <id> <rw|ro> <applied> <written>
//   to the proxy: ROUTE <consistency> <stmt> -> NODE <id>
//                REPORT <node> <applied_lsn> -> OK
//                EXEC <consistency> <stmt>   -> forwarded node reply
// Values in ROWS lines are tab-separated with %09/%0A/%25 escapes.

namespace wire {

inline std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\t') out += "%09";
    else if (c == '\n') out += "%0A";
    else if (c == '%') out += "%25";
    else out.push_back(c);
  }
  return out;
}

inline std::string unescape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      if (s.compare(i, 3, "%09") == 0) { out.push_back('\t'); i += 2; continue; }
      if (s.compare(i, 3, "%0A") == 0) { out.push_back('\n'); i += 2; continue; }
      if (s.compare(i, 3, "%25") == 0) { out.push_back('%'); i += 2; continue; }
    }
    out.push_back(s[i]);
  }
  return out;
}

inline std::string format_value(const Value& v) {
  if (std::holds_alternative<int64_t>(v))
    return std::to_string(std::get<int64_t>(v));
  return escape(std::get<std::string>(v));
}

}  // namespace wire

// Blocking line-oriented socket with a read buffer. Owns the fd.
class LineSocket {
 public:
  explicit LineSocket(int fd) : fd_(fd) {}
  LineSocket(LineSocket&& o) noexcept : fd_(o.fd_), buf_(std::move(o.buf_)) {
    o.fd_ = -1;
  }
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;
  ~LineSocket() { close_fd(); }

  bool valid() const { return fd_ >= 0; }

  void close_fd() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  // Reads one '\n'-terminated line (terminator stripped). false on EOF,
  // timeout, or error. timeout_ms < 0 waits forever.
  bool read_line(std::string& out, int timeout_ms = -1) {
    out.clear();
    while (true) {
      size_t nl = buf_.find('\n');
      if (nl != std::string::npos) {
        out = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return true;
      }
      if (fd_ < 0) return false;
      if (timeout_ms >= 0) {
        struct pollfd p{fd_, POLLIN, 0};
        int r = ::poll(&p, 1, timeout_ms);
        if (r <= 0) return false;
      }
      char chunk[4096];
      ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n <= 0) return false;
      buf_.append(chunk, static_cast<size_t>(n));
    }
  }

  bool write_line(const std::string& s) {
    std::string msg = s;
    msg.push_back('\n');
    size_t off = 0;
    while (off < msg.size()) {
      ssize_t n = ::send(fd_, msg.data() + off, msg.size() - off, MSG_NOSIGNAL);
      if (n <= 0) return false;
      off += static_cast<size_t>(n);
    }
    return true;
  }

 private:
  int fd_ = -1;
  std::string buf_;
};

inline int listen_on(uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) raise(ErrorCode::IoFailure, "socket() failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(fd);
    raise(ErrorCode::IoFailure,
          "bind to port " + std::to_string(port) + " failed");
  }
  if (::listen(fd, 64) < 0) {
    ::close(fd);
    raise(ErrorCode::IoFailure, "listen failed");
  }
  return fd;
}

inline uint16_t bound_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

// Connects to "host:port" or ":port"/plain port (loopback).
inline LineSocket connect_to(const std::string& addr, int timeout_ms = 2000) {
  std::string host = "127.0.0.1";
  std::string port = addr;
  size_t c = addr.rfind(':');
  if (c != std::string::npos) {
    if (c > 0) host = addr.substr(0, c);
    port = addr.substr(c + 1);
  }
  if (host == "localhost") host = "127.0.0.1";
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(static_cast<uint16_t>(std::stoi(port)));
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1)
    raise(ErrorCode::InvalidArgument, "bad address: " + addr);
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(timeout_ms);
  while (true) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) raise(ErrorCode::IoFailure, "socket() failed");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) == 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return LineSocket(fd);
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline)
      raise(ErrorCode::ClusterDown, "cannot connect to " + addr);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

// Accept loop with one thread per connection.
class LineServer {
 public:
  LineServer(uint16_t port, std::function<void(LineSocket&)> handler)
      : handler_(std::move(handler)) {
    listen_fd_ = listen_on(port);
    port_ = bound_port(listen_fd_);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }
  ~LineServer() { stop(); }

  uint16_t port() const { return port_; }

  void stop() {
    if (stop_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> conns;
    {
      std::lock_guard lk(mu_);
      // kick handlers stuck in recv; each handler closes its own fd on exit
      for (int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
      conns.swap(conns_);
    }
    for (auto& t : conns)
      if (t.joinable()) t.join();
  }

 private:
  void accept_loop() {
    while (!stop_.load()) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (stop_.load()) return;
        continue;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::lock_guard lk(mu_);
      live_fds_.insert(fd);
      conns_.emplace_back([this, fd] {
        LineSocket s(fd);
        try {
          handler_(s);
        } catch (const std::exception&) {
          // connection handlers never take the server down
        }
        // deregister before ~LineSocket closes fd so stop() never touches
        // a recycled descriptor
        std::lock_guard lk(mu_);
        live_fds_.erase(fd);
      });
    }
  }

  std::function<void(LineSocket&)> handler_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::thread> conns_;
  std::set<int> live_fds_;
};

namespace detail {

inline void reply_error(LineSocket& s, const Error& e) {
  s.write_line(std::string("ERR ") + error_code_name(e.code()) + " " +
               wire::escape(e.msg()));
}

inline void reply_query(LineSocket& s, const QueryResult& q) {
  std::string hdr = "ROWS " + std::to_string(q.rows.size());
  if (q.agg_null) hdr += " null";
  s.write_line(hdr);
  std::string cols;
  for (size_t i = 0; i < q.columns.size(); ++i) {
    if (i) cols.push_back('\t');
    cols += q.columns[i];
  }
  s.write_line("COLS " + cols);
  for (const auto& r : q.rows) {
    std::string line;
    for (size_t i = 0; i < r.values.size(); ++i) {
      if (i) line.push_back('\t');
      line += wire::format_value(r.values[i]);
    }
    s.write_line(line);
  }
  s.write_line("END");
}

}  // namespace detail

// Serves one node (RW or RO) to the wire: EXEC for statements, STATUS for
// registry discovery. Reads execute locally; writes are valid on RW only.
class NodeServer {
 public:
  // RW node.
  NodeServer(uint16_t port, RowStore& rw, std::string id)
      : rw_(&rw), id_(std::move(id)) {
    server_ = std::make_unique<LineServer>(
        port, [this](LineSocket& s) { serve(s); });
  }
  // RO node.
  NodeServer(uint16_t port, RoEngine& ro)
      : ro_(&ro), exec_(std::make_unique<QueryExecutor>(ro)), id_(ro.node_id()) {
    server_ = std::make_unique<LineServer>(
        port, [this](LineSocket& s) { serve(s); });
  }

  uint16_t port() const { return server_->port(); }
  void stop() { server_->stop(); }

 private:
  void serve(LineSocket& s) {
    std::string line;
    while (s.read_line(line)) {
      try {
        if (line == "STATUS") {
          uint64_t applied = ro_ ? ro_->applied_lsn() : rw_->log().written_lsn();
          uint64_t written = rw_ ? rw_->log().written_lsn() : 0;
          s.write_line("NODE " + id_ + (rw_ ? " rw " : " ro ") +
                       std::to_string(applied) + " " + std::to_string(written));
        } else if (line.rfind("EXEC ", 0) == 0) {
          std::string stmt = line.substr(5);
          if (classify(stmt) == StmtClass::Write) {
            if (!rw_) raise(ErrorCode::InvalidArgument, "write on RO node");
            WriteResult w = exec_write(*rw_, stmt);
            s.write_line("SEQ " + std::to_string(w.commit_seq));
          } else if (ro_) {
            detail::reply_query(s, exec_->execute_text(stmt));
          } else {
            detail::reply_query(s, rw_execute(*rw_, parse_query(stmt)));
          }
        } else if (line == "PING") {
          s.write_line("PONG");
        } else {
          raise(ErrorCode::UnknownVerb, "unknown request: " + line);
        }
      } catch (const Error& e) {
        detail::reply_error(s, e);
      } catch (const std::exception& e) {
        s.write_line(std::string("ERR Internal ") + wire::escape(e.what()));
      }
    }
  }

  RowStore* rw_ = nullptr;
  RoEngine* ro_ = nullptr;
  std::unique_ptr<QueryExecutor> exec_;
  std::string id_;
  std::unique_ptr<LineServer> server_;
};

// Multi-process proxy front door: discovers node ids over STATUS, refreshes
// applied LSNs from REPORT messages plus sidecar files (<= 10 ms staleness),
// and forwards EXEC to the routed node.
class ProxyServer {
 public:
  ProxyServer(uint16_t port, const std::string& rw_addr,
              std::vector<std::string> ro_addrs, const Config& cfg,
              std::string data_dir = "")
      : cfg_(cfg), proxy_(registry_, cfg), data_dir_(std::move(data_dir)) {
    register_node(rw_addr);
    for (const auto& a : ro_addrs) register_node(a);
    server_ = std::make_unique<LineServer>(
        port, [this](LineSocket& s) { serve(s); });
    refresher_ = std::thread([this] { refresh_loop(); });
  }
  ~ProxyServer() { stop(); }

  uint16_t port() const { return server_->port(); }
  NodeRegistry& registry() { return registry_; }

  void stop() {
    if (stop_.exchange(true)) return;
    refresher_.join();
    server_->stop();
  }

 private:
  void register_node(const std::string& addr) {
    LineSocket s = connect_to(addr);
    s.write_line("STATUS");
    std::string line;
    if (!s.read_line(line, 2000) || line.rfind("NODE ", 0) != 0)
      raise(ErrorCode::ClusterDown, "no STATUS reply from " + addr);
    std::istringstream in(line.substr(5));
    std::string id, kind;
    uint64_t applied = 0, written = 0;
    in >> id >> kind >> applied >> written;
    NodePtr n = registry_.add_node(id, kind == "rw", addr);
    n->applied_lsn.store(applied);
    n->written_lsn.store(written);
  }

  void refresh_loop() {
    while (!stop_.load()) {
      for (const auto& n : registry_.all()) {
        if (!data_dir_.empty() && !n->is_rw) {
          std::ifstream f(data_dir_ + "/ro_" + n->id + ".applied");
          uint64_t lsn = 0;
          if (f >> lsn) {
            n->applied_lsn.store(lsn, std::memory_order_release);
            continue;
          }
        }
        try {
          LineSocket s = connect_to(n->addr, 200);
          s.write_line("STATUS");
          std::string line;
          if (s.read_line(line, 200) && line.rfind("NODE ", 0) == 0) {
            std::istringstream in(line.substr(5));
            std::string id, kind;
            uint64_t applied = 0, written = 0;
            in >> id >> kind >> applied >> written;
            n->applied_lsn.store(applied, std::memory_order_release);
            if (n->is_rw)
              n->written_lsn.store(written, std::memory_order_release);
          }
        } catch (const Error&) {
          // node temporarily unreachable; keep the stale value
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  void serve(LineSocket& s) {
    std::string line;
    while (s.read_line(line)) {
      try {
        if (line.rfind("REPORT ", 0) == 0) {
          std::istringstream in(line.substr(7));
          std::string id;
          uint64_t lsn = 0;
          in >> id >> lsn;
          registry_.report_applied(id, lsn);
          s.write_line("OK");
        } else if (line.rfind("ROUTE ", 0) == 0 ||
                   line.rfind("EXEC ", 0) == 0) {
          bool forward = line[0] == 'E';
          std::string rest = line.substr(forward ? 5 : 6);
          size_t sp = rest.find(' ');
          if (sp == std::string::npos)
            raise(ErrorCode::InvalidArgument, "missing statement");
          Consistency c = parse_consistency(rest.substr(0, sp));
          std::string stmt = rest.substr(sp + 1);
          RouteResult r = proxy_.route(stmt, c);
          if (!forward) {
            s.write_line("NODE " + r.node()->id);
            continue;
          }
          LineSocket node = connect_to(r.node()->addr);
          node.write_line("EXEC " + stmt);
          std::string reply;
          while (node.read_line(reply, 10000)) {
            if (reply.rfind("SEQ ", 0) == 0)
              store_max(r.node()->written_lsn,
                        std::stoull(reply.substr(4)));
            s.write_line(reply);
            if (reply == "END" || reply.rfind("SEQ ", 0) == 0 ||
                reply.rfind("ERR ", 0) == 0)
              break;
          }
        } else if (line == "PING") {
          s.write_line("PONG");
        } else {
          raise(ErrorCode::UnknownVerb, "unknown request: " + line);
        }
      } catch (const Error& e) {
        detail::reply_error(s, e);
      } catch (const std::exception& e) {
        s.write_line(std::string("ERR Internal ") + wire::escape(e.what()));
      }
    }
  }

  Config cfg_;
  NodeRegistry registry_;
  Proxy proxy_;
  std::string data_dir_;
  std::unique_ptr<LineServer> server_;
  std::atomic<bool> stop_{false};
  std::thread refresher_;
};

// Sidecar writer for a multi-process RO: publishes the applied frontier to
// <data_dir>/ro_<id>.applied at most 5 ms stale.
class AppliedSidecar {
 public:
  explicit AppliedSidecar(RoEngine& eng) : eng_(eng) {
    writer_ = std::thread([this] {
      std::string path = eng_.data_dir() + "/ro_" + eng_.node_id() + ".applied";
      std::string tmp = path + ".tmp";
      while (!stop_.load()) {
        {
          std::ofstream f(tmp, std::ios::trunc);
          f << eng_.applied_lsn() << "\n";
        }
        std::filesystem::rename(tmp, path);
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
    });
  }
  ~AppliedSidecar() { stop(); }

  void stop() {
    if (!stop_.exchange(true)) writer_.join();
  }

 private:
  RoEngine& eng_;
  std::atomic<bool> stop_{false};
  std::thread writer_;
};

}  // namespace imci

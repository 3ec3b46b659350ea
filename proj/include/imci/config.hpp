#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "imci/common.hpp"

namespace imci {

// Flat `key = value` configuration. Files use one pair per line; '#' starts a
// comment. Values set later (e.g. from CLI flags) override earlier ones.
class Config {
 public:
  Config() = default;

  void set(const std::string& key, const std::string& value) {
    kv_[key] = value;
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  int64_t get_int(const std::string& key, int64_t dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      return std::stoll(it->second);
    } catch (const std::exception&) {
      raise(ErrorCode::InvalidArgument, "config key '" + key + "' is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      raise(ErrorCode::InvalidArgument, "config key '" + key + "' is not a number: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    raise(ErrorCode::InvalidArgument, "config key '" + key + "' is not a bool: " + v);
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoFailure, "cannot open config file " + path);
    std::string line;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  void save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(ErrorCode::IoFailure, "cannot write config file " + path);
    for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

  // Tunables referenced throughout; one accessor per knob so defaults live in
  // exactly one place.
  int leaf_capacity() const { return (int)get_int("storage.leaf_capacity", 64); }
  uint64_t row_group_size() const { return (uint64_t)get_int("storage.row_group_size", 65536); }
  size_t memtable_limit() const { return (size_t)get_int("locator.memtable_limit", 4096); }
  size_t locator_max_runs() const { return (size_t)get_int("locator.max_runs", 8); }
  uint64_t log_segment_bytes() const { return (uint64_t)get_int("log.segment_mib", 64) << 20; }
  bool log_fsync() const { return get_bool("log.fsync", false); }
  int poll_interval_ms() const { return (int)get_int("poll.interval_ms", 1); }
  int phase1_workers() const { return (int)get_int("phase1.workers", 4); }
  int phase2_workers() const { return (int)get_int("phase2.workers", 4); }
  uint64_t precommit_threshold() const { return (uint64_t)get_int("precommit.threshold", 8192); }
  uint64_t router_threshold() const { return (uint64_t)get_int("router.threshold", 1000); }
  size_t query_batch_size() const { return (size_t)get_int("query.batch_size", 1024); }
  int strong_timeout_ms() const { return (int)get_int("strong.timeout_ms", 1000); }
  int report_interval_ms() const { return (int)get_int("proxy.report_interval_ms", 10); }
  bool checkpoint_on_flush() const { return get_bool("checkpoint.on_flush", true); }
  double zipf_theta() const { return get_double("bench.zipf_theta", 0.99); }
  int bench_tables() const { return (int)get_int("bench.tables", 100); }
  int heartbeat_timeout_ms() const { return (int)get_int("checkpoint.heartbeat_timeout_ms", 3000); }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace imci

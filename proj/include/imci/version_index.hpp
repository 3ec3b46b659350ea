#pragma once

#include <algorithm>
#include <map>
#include <unordered_map>
#include <vector>

#include "imci/logical.hpp"
#include "imci/schema.hpp"

namespace imci {

// Committed version chain per pk. A row is visible at snapshot s when
// from_seq <= s < to_seq; to_seq is kInvalidVid while the version is current.
struct RowVersion {
  uint64_t from_seq = 0;
  uint64_t to_seq = kInvalidVid;
  RowPtr row;
};

// MVCC index over committed transactions, keyed (table, pk). This is the row
// engine's read structure: point lookups bind a snapshot and walk the (short)
// chain; scans walk every chain. Chains are append-ordered by from_seq.
class VersionIndex {
 public:
  void apply_unit(Lsn commit_seq, const std::vector<LogicalDml>& dmls) {
    for (const auto& dml : dmls) {
      auto& chain = chains_[dml.table_id][dml.pk];
      if (dml.kind == LogicalDml::Kind::Insert) {
        if (!chain.empty() && chain.back().to_seq == kInvalidVid)
          raise(ErrorCode::ApplyConflict, "insert over live version");
        chain.push_back({commit_seq, kInvalidVid, dml.row});
      } else {
        if (chain.empty() || chain.back().to_seq != kInvalidVid)
          raise(ErrorCode::ApplyConflict, "delete of dead version");
        chain.back().to_seq = commit_seq;
      }
    }
  }

  RowPtr visible(TableId table, int64_t pk, uint64_t snapshot) const {
    auto t = chains_.find(table);
    if (t == chains_.end()) return nullptr;
    auto c = t->second.find(pk);
    if (c == t->second.end()) return nullptr;
    const auto& chain = c->second;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      if (it->from_seq <= snapshot)
        return snapshot < it->to_seq ? it->row : nullptr;
    }
    return nullptr;
  }

  template <typename Fn>
  void scan_visible(TableId table, uint64_t snapshot, Fn&& fn) const {
    auto t = chains_.find(table);
    if (t == chains_.end()) return;
    for (const auto& [pk, chain] : t->second) {
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        if (it->from_seq <= snapshot) {
          if (snapshot < it->to_seq) fn(*it->row);
          break;
        }
      }
    }
  }

  // Visible rows sorted by pk; the equivalence oracle for column-side state.
  std::vector<Row> visible_rows(TableId table, uint64_t snapshot) const {
    std::vector<Row> out;
    scan_visible(table, snapshot, [&](const Row& r) { out.push_back(r); });
    std::sort(out.begin(), out.end(),
              [](const Row& a, const Row& b) { return a.pk() < b.pk(); });
    return out;
  }

  size_t chain_count(TableId table) const {
    auto t = chains_.find(table);
    return t == chains_.end() ? 0 : t->second.size();
  }

  void clear() { chains_.clear(); }

 private:
  std::unordered_map<TableId, std::unordered_map<int64_t, std::vector<RowVersion>>>
      chains_;
};

}  // namespace imci

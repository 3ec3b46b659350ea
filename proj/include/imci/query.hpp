#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "imci/replication.hpp"

namespace imci {

// One conjunct of a predicate, still textual: column by name, constants as
// raw tokens. An empty column name means "the primary key column".
struct PredTerm {
  enum class Op : uint8_t { Eq, Lt, Le, Gt, Ge, Between };
  std::string col;
  Op op = Op::Eq;
  std::string lo, hi;  // hi only for Between
};

enum class AggKind : uint8_t { None, Count, Sum, Min, Max };

// Canonical text form, e.g.
//   scan t1 cols pk,a where a between 10 20 agg sum(a) group b snapshot latest
//   lookup t1 42 snapshot 1000
struct QuerySpec {
  std::string table;
  std::vector<std::string> projection;  // empty = all columns
  std::vector<PredTerm> terms;          // conjunction
  AggKind agg = AggKind::None;
  std::string agg_col;
  std::string group_col;
  bool snapshot_latest = true;
  uint64_t snapshot = 0;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline uint64_t parse_u64(const std::string& t, const char* what) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size())
    raise(ErrorCode::InvalidArgument, std::string("bad ") + what + ": " + t);
  return v;
}

}  // namespace detail

inline QuerySpec parse_query(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(std::move(t));
  if (tok.empty()) raise(ErrorCode::InvalidArgument, "empty query");

  QuerySpec q;
  size_t i = 0;
  auto need = [&](const char* what) -> const std::string& {
    if (i >= tok.size())
      raise(ErrorCode::InvalidArgument, std::string("expected ") + what);
    return tok[i++];
  };

  const std::string& verb = tok[i++];
  if (verb == "lookup") {
    q.table = need("table");
    q.terms.push_back({"", PredTerm::Op::Eq, need("pk value"), ""});
  } else if (verb == "scan") {
    q.table = need("table");
  } else {
    raise(ErrorCode::UnknownVerb, "unknown query verb: " + verb);
  }

  while (i < tok.size()) {
    const std::string& kw = tok[i++];
    if (kw == "cols") {
      q.projection = detail::split_csv(need("column list"));
    } else if (kw == "where") {
      if (verb == "lookup")
        raise(ErrorCode::InvalidArgument, "lookup takes no where clause");
      while (true) {
        PredTerm t;
        t.col = need("column");
        const std::string& op = need("operator");
        if (op == "=") t.op = PredTerm::Op::Eq;
        else if (op == "<") t.op = PredTerm::Op::Lt;
        else if (op == "<=") t.op = PredTerm::Op::Le;
        else if (op == ">") t.op = PredTerm::Op::Gt;
        else if (op == ">=") t.op = PredTerm::Op::Ge;
        else if (op == "between") t.op = PredTerm::Op::Between;
        else raise(ErrorCode::InvalidArgument, "unknown operator: " + op);
        t.lo = need("value");
        if (t.op == PredTerm::Op::Between) t.hi = need("upper bound");
        q.terms.push_back(std::move(t));
        if (i < tok.size() && tok[i] == "and") {
          ++i;
          continue;
        }
        break;
      }
    } else if (kw == "agg") {
      const std::string& a = need("aggregate");
      if (a == "count" || a == "count(*)") {
        q.agg = AggKind::Count;
      } else if (a.size() > 5 && a.back() == ')' &&
                 (a.rfind("sum(", 0) == 0 || a.rfind("min(", 0) == 0 ||
                  a.rfind("max(", 0) == 0)) {
        q.agg = a[0] == 's' ? AggKind::Sum
                            : (a[1] == 'i' ? AggKind::Min : AggKind::Max);
        q.agg_col = a.substr(4, a.size() - 5);
      } else {
        raise(ErrorCode::InvalidArgument, "unknown aggregate: " + a);
      }
    } else if (kw == "group") {
      q.group_col = need("group column");
    } else if (kw == "snapshot") {
      const std::string& s = need("snapshot");
      if (s == "latest") {
        q.snapshot_latest = true;
      } else {
        q.snapshot_latest = false;
        q.snapshot = detail::parse_u64(s, "snapshot");
      }
    } else {
      raise(ErrorCode::InvalidArgument, "unknown clause: " + kw);
    }
  }
  if (!q.group_col.empty() && q.agg == AggKind::None)
    raise(ErrorCode::InvalidArgument, "group requires an aggregate");
  return q;
}

// A QuerySpec resolved against one table's schema and a concrete snapshot.
struct BoundTerm {
  size_t col = 0;
  ColumnType type = ColumnType::Int64;
  PredTerm::Op op = PredTerm::Op::Eq;
  int64_t lo_i = 0, hi_i = 0;
  std::string lo_s, hi_s;
};

struct BoundQuery {
  TableId table = 0;
  const TableSchema* schema = nullptr;
  std::vector<size_t> proj;
  std::vector<BoundTerm> terms;
  AggKind agg = AggKind::None;
  size_t agg_col = 0;
  bool grouped = false;
  size_t group_col = 0;
  uint64_t snapshot = 0;
  bool prune = true;  // zone-map pruning; soundness tests compare both modes
};

struct QueryStats {
  size_t groups_scanned = 0;
  size_t packs_considered = 0;  // frozen predicate-column packs seen
  size_t packs_skipped = 0;     // of those, pruned via zone maps
  size_t rows_examined = 0;
  double row_cost = 0;
  bool used_column = false;
  bool rerouted = false;
  bool floor_forced_row = false;
};

struct QueryResult {
  std::vector<std::string> columns;
  std::vector<Row> rows;
  bool agg_null = false;  // sum/min/max over an empty match
  uint64_t snapshot = 0;
  QueryStats stats;
};

namespace detail {

inline size_t resolve_col(const TableSchema& s, const std::string& name,
                          const char* what) {
  if (name.empty()) return 0;  // pk column
  int c = s.column_index(name);
  if (c < 0)
    raise(ErrorCode::InvalidArgument,
          std::string("unknown ") + what + " column: " + name);
  return static_cast<size_t>(c);
}

inline int64_t parse_i64(const std::string& t) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size())
    raise(ErrorCode::InvalidArgument, "bad integer constant: " + t);
  return v;
}

}  // namespace detail

inline BoundQuery bind_query(const QuerySpec& q, TableId table,
                             const TableSchema& schema, uint64_t snapshot) {
  BoundQuery b;
  b.table = table;
  b.schema = &schema;
  b.snapshot = snapshot;
  if (q.projection.empty()) {
    for (size_t c = 0; c < schema.num_columns(); ++c) b.proj.push_back(c);
  } else {
    for (const auto& name : q.projection)
      b.proj.push_back(detail::resolve_col(schema, name, "projected"));
  }
  for (const auto& t : q.terms) {
    BoundTerm bt;
    bt.col = detail::resolve_col(schema, t.col, "predicate");
    bt.type = schema.columns[bt.col].type;
    bt.op = t.op;
    if (bt.type == ColumnType::Int64) {
      bt.lo_i = detail::parse_i64(t.lo);
      if (bt.op == PredTerm::Op::Between) {
        bt.hi_i = detail::parse_i64(t.hi);
        if (bt.lo_i > bt.hi_i)
          raise(ErrorCode::InvalidArgument, "between bounds out of order");
      }
    } else {
      bt.lo_s = t.lo;
      if (bt.op == PredTerm::Op::Between) {
        bt.hi_s = t.hi;
        if (bt.lo_s > bt.hi_s)
          raise(ErrorCode::InvalidArgument, "between bounds out of order");
      }
    }
    b.terms.push_back(std::move(bt));
  }
  b.agg = q.agg;
  if (q.agg == AggKind::Sum || q.agg == AggKind::Min || q.agg == AggKind::Max) {
    b.agg_col = detail::resolve_col(schema, q.agg_col, "aggregate");
    if (q.agg == AggKind::Sum &&
        schema.columns[b.agg_col].type != ColumnType::Int64)
      raise(ErrorCode::InvalidArgument, "sum needs an integer column");
  }
  if (!q.group_col.empty()) {
    b.grouped = true;
    b.group_col = detail::resolve_col(schema, q.group_col, "group");
  }
  return b;
}

namespace detail {

inline bool int_term_matches(const BoundTerm& t, int64_t v) {
  switch (t.op) {
    case PredTerm::Op::Eq: return v == t.lo_i;
    case PredTerm::Op::Lt: return v < t.lo_i;
    case PredTerm::Op::Le: return v <= t.lo_i;
    case PredTerm::Op::Gt: return v > t.lo_i;
    case PredTerm::Op::Ge: return v >= t.lo_i;
    case PredTerm::Op::Between: return v >= t.lo_i && v <= t.hi_i;
  }
  return false;
}

inline bool str_term_matches(const BoundTerm& t, const std::string& v) {
  switch (t.op) {
    case PredTerm::Op::Eq: return v == t.lo_s;
    case PredTerm::Op::Lt: return v < t.lo_s;
    case PredTerm::Op::Le: return v <= t.lo_s;
    case PredTerm::Op::Gt: return v > t.lo_s;
    case PredTerm::Op::Ge: return v >= t.lo_s;
    case PredTerm::Op::Between: return v >= t.lo_s && v <= t.hi_s;
  }
  return false;
}

inline bool row_matches(const BoundQuery& q, const Row& r) {
  for (const auto& t : q.terms) {
    const Value& v = r.values[t.col];
    if (t.type == ColumnType::Int64) {
      if (!int_term_matches(t, std::get<int64_t>(v))) return false;
    } else {
      if (!str_term_matches(t, std::get<std::string>(v))) return false;
    }
  }
  return true;
}

// Normalizes an int term to a closed interval [lo, hi].
inline void int_term_interval(const BoundTerm& t, int64_t& lo, int64_t& hi) {
  constexpr int64_t kMin = std::numeric_limits<int64_t>::min();
  constexpr int64_t kMax = std::numeric_limits<int64_t>::max();
  switch (t.op) {
    case PredTerm::Op::Eq: lo = t.lo_i; hi = t.lo_i; break;
    case PredTerm::Op::Lt:
      lo = kMin;
      hi = t.lo_i == kMin ? kMin : t.lo_i - 1;
      break;
    case PredTerm::Op::Le: lo = kMin; hi = t.lo_i; break;
    case PredTerm::Op::Gt:
      lo = t.lo_i == kMax ? kMax : t.lo_i + 1;
      hi = kMax;
      break;
    case PredTerm::Op::Ge: lo = t.lo_i; hi = kMax; break;
    case PredTerm::Op::Between: lo = t.lo_i; hi = t.hi_i; break;
  }
}

// True when the term can match no value in [min, max].
inline bool term_disjoint(const BoundTerm& t, const PackMeta& m) {
  if (t.type == ColumnType::Int64) {
    int64_t lo, hi;
    int_term_interval(t, lo, hi);
    // Lt at INT64_MIN / Gt at INT64_MAX are empty predicates.
    if (t.op == PredTerm::Op::Lt && t.lo_i == lo && hi == lo) return true;
    return hi < std::get<int64_t>(m.min) || lo > std::get<int64_t>(m.max);
  }
  const std::string& mn = std::get<std::string>(m.min);
  const std::string& mx = std::get<std::string>(m.max);
  switch (t.op) {
    case PredTerm::Op::Eq: return t.lo_s < mn || t.lo_s > mx;
    case PredTerm::Op::Lt: return mn >= t.lo_s;
    case PredTerm::Op::Le: return mn > t.lo_s;
    case PredTerm::Op::Gt: return mx <= t.lo_s;
    case PredTerm::Op::Ge: return mx < t.lo_s;
    case PredTerm::Op::Between: return t.hi_s < mn || t.lo_s > mx;
  }
  return false;
}

// Estimated matching rows in one pack, from its 16-bucket histogram. Bucket
// b holds values whose offset off = v - min satisfies off*16/span == b, so
// its real-valued offset range is [b*span/16, (b+1)*span/16).
inline double hist_estimate(const BoundTerm& t, const PackMeta& m) {
  if (term_disjoint(t, m)) return 0.0;
  if (t.type != ColumnType::Int64) return static_cast<double>(m.rows);
  int64_t lo, hi;
  int_term_interval(t, lo, hi);
  int64_t mn = std::get<int64_t>(m.min), mx = std::get<int64_t>(m.max);
  lo = std::max(lo, mn);
  hi = std::min(hi, mx);
  long double span = static_cast<long double>(
      static_cast<uint64_t>(mx) - static_cast<uint64_t>(mn)) + 1.0L;
  long double offl = static_cast<long double>(static_cast<uint64_t>(lo) -
                                              static_cast<uint64_t>(mn));
  long double offh = static_cast<long double>(static_cast<uint64_t>(hi) -
                                              static_cast<uint64_t>(mn)) + 1.0L;
  long double est = 0;
  for (int b = 0; b < 16; ++b) {
    if (!m.hist[b]) continue;
    long double bl = span * b / 16.0L, bh = span * (b + 1) / 16.0L;
    long double ov = std::min(bh, offh) - std::max(bl, offl);
    if (ov <= 0) continue;
    est += static_cast<long double>(m.hist[b]) * ov / (bh - bl);
  }
  return static_cast<double>(est);
}

}  // namespace detail

// Estimated rows the row path touches: 1 for a pk point lookup, otherwise
// live row count scaled by per-term selectivities from frozen-pack
// histograms (terms on columns without stats contribute no reduction).
inline double estimate_row_cost(const ColumnIndex& ci, const BoundQuery& q) {
  for (const auto& t : q.terms)
    if (t.col == 0 && t.op == PredTerm::Op::Eq) return 1.0;
  double total = static_cast<double>(ci.row_count_estimate());
  if (q.terms.empty() || total == 0) return total;
  double sel = 1.0;
  auto groups = ci.groups();
  for (const auto& t : q.terms) {
    double matched = 0, denom = 0;
    for (const auto& g : groups) {
      if (g->dropped()) continue;
      auto rep = g->column(t.col);
      if (rep && rep->frozen && rep->frozen->meta.has_stats) {
        matched += detail::hist_estimate(t, rep->frozen->meta);
        denom += static_cast<double>(rep->frozen->meta.rows);
      } else {
        double n = g->allocated();
        matched += n;
        denom += n;
      }
    }
    if (denom > 0) sel *= matched / denom;
  }
  return total * sel;
}

// Row execution engine iff the estimated cost stays at or under the
// threshold (ties keep the row path).
inline bool route_to_row(double cost, int64_t threshold) {
  return cost <= static_cast<double>(threshold);
}

namespace detail {

struct AggAcc {
  uint64_t count = 0;
  uint64_t sum = 0;  // wraparound-defined accumulation, emitted as int64
  bool has_mm = false;
  Value mn, mx;
};

// Shared result builder for both execution paths: collects projected rows
// for agg none, otherwise folds into one accumulator (or one per group key).
class Aggregator {
 public:
  explicit Aggregator(const BoundQuery& q) : q_(q) {}

  void feed(const Row& r) {
    if (q_.agg == AggKind::None) {
      Row out;
      out.values.reserve(q_.proj.size());
      for (size_t c : q_.proj) out.values.push_back(r.values[c]);
      rows_.push_back(std::move(out));
      return;
    }
    AggAcc& a = acc(r);
    switch (q_.agg) {
      case AggKind::Count: ++a.count; break;
      case AggKind::Sum:
        ++a.count;
        a.sum += static_cast<uint64_t>(std::get<int64_t>(r.values[q_.agg_col]));
        break;
      case AggKind::Min:
      case AggKind::Max: {
        const Value& v = r.values[q_.agg_col];
        if (!a.has_mm) {
          a.mn = a.mx = v;
          a.has_mm = true;
        } else {
          if (value_less(v, a.mn)) a.mn = v;
          if (value_less(a.mx, v)) a.mx = v;
        }
        break;
      }
      default: break;
    }
  }

  // Fast-path merges for whole visible packs (ungrouped only).
  void merge_count(uint64_t n) { single_.count += n; }
  void merge_sum(uint64_t n, uint64_t s) {
    single_.count += n;
    single_.sum += s;
  }
  void merge_minmax(const Value& mn, const Value& mx) {
    ++single_.count;
    if (!single_.has_mm) {
      single_.mn = mn;
      single_.mx = mx;
      single_.has_mm = true;
    } else {
      if (value_less(mn, single_.mn)) single_.mn = mn;
      if (value_less(single_.mx, mx)) single_.mx = mx;
    }
  }

  void finish(QueryResult& out) {
    if (q_.agg == AggKind::None) {
      for (size_t c : q_.proj) out.columns.push_back(q_.schema->columns[c].name);
      std::sort(rows_.begin(), rows_.end(),
                [](const Row& a, const Row& b) { return a.values < b.values; });
      out.rows = std::move(rows_);
      return;
    }
    const char* an = q_.agg == AggKind::Count ? "count"
                     : q_.agg == AggKind::Sum ? "sum"
                     : q_.agg == AggKind::Min ? "min"
                                              : "max";
    if (q_.grouped) {
      out.columns.push_back(q_.schema->columns[q_.group_col].name);
      out.columns.push_back(an);
      for (auto& [k, a] : grouped_) {
        Row r;
        r.values.push_back(k);
        r.values.push_back(agg_value(a, out));
        out.rows.push_back(std::move(r));
      }
      return;
    }
    out.columns.push_back(an);
    if (q_.agg != AggKind::Count && single_.count == 0 && !single_.has_mm) {
      out.agg_null = true;  // sum/min/max of the empty set
      return;
    }
    Row r;
    r.values.push_back(agg_value(single_, out));
    out.rows.push_back(std::move(r));
  }

 private:
  AggAcc& acc(const Row& r) {
    if (!q_.grouped) return single_;
    return grouped_[r.values[q_.group_col]];
  }

  Value agg_value(const AggAcc& a, QueryResult&) const {
    switch (q_.agg) {
      case AggKind::Count: return static_cast<int64_t>(a.count);
      case AggKind::Sum: return static_cast<int64_t>(a.sum);
      case AggKind::Min: return a.mn;
      default: return a.mx;
    }
  }

  const BoundQuery& q_;
  std::vector<Row> rows_;
  AggAcc single_;
  std::map<Value, AggAcc> grouped_;  // ordered: deterministic output
};

// Per-group decoded access to one column. Frozen int packs are bulk-decoded
// into scratch; frozen strings are read through the dictionary in place.
struct ColSlice {
  const int64_t* ints = nullptr;
  const std::string* strs = nullptr;
  const PackedStrings* dict = nullptr;
  std::shared_ptr<const ColumnRep> keep;  // pins the storage
  std::vector<int64_t> scratch;

  int64_t int_at(uint32_t i) const { return ints[i]; }
  const std::string& str_at(uint32_t i) const {
    return dict ? dict->dict[dict->codes[i]] : strs[i];
  }
};

inline bool slice_matches(const BoundTerm& t, const ColSlice& s, uint32_t i) {
  return t.type == ColumnType::Int64 ? int_term_matches(t, s.int_at(i))
                                     : str_term_matches(t, s.str_at(i));
}

}  // namespace detail

// Batch of decoded column values flowing through the scan pipeline: one
// validity bitmap over up to B consecutive rows of one row group.
struct Batch {
  uint32_t base = 0;
  uint32_t len = 0;
  std::vector<char> valid;
};

// Column path: zone-pruned scan over row groups, batch at a time.
inline QueryResult column_scan(RoEngine& eng, const BoundQuery& q,
                               size_t batch_rows) {
  QueryResult out;
  out.snapshot = q.snapshot;
  out.stats.used_column = true;
  detail::Aggregator agg(q);

  ColumnIndex& ci = eng.column_index(q.table);
  const size_t ncols = q.schema->num_columns();

  // Columns the scan must materialize.
  std::vector<char> needed(ncols, 0);
  for (const auto& t : q.terms) needed[t.col] = 1;
  if (q.agg == AggKind::None)
    for (size_t c : q.proj) needed[c] = 1;
  if (q.agg == AggKind::Sum || q.agg == AggKind::Min || q.agg == AggKind::Max)
    needed[q.agg_col] = 1;
  if (q.grouped) needed[q.group_col] = 1;

  const bool plain_agg = q.agg != AggKind::None && !q.grouped;

  auto groups = ci.groups();
  for (const auto& g : groups) {
    if (g->dropped()) continue;
    uint32_t alloc = g->allocated();
    if (alloc == 0) continue;

    // Zone pruning over frozen predicate-column packs.
    bool prune = false;
    size_t considered = 0;
    for (const auto& t : q.terms) {
      auto rep = g->column(t.col);
      if (!(rep && rep->frozen && rep->frozen->meta.has_stats)) continue;
      ++considered;
      if (detail::term_disjoint(t, rep->frozen->meta)) prune = true;
    }
    out.stats.packs_considered += considered;
    if (prune && q.prune) {
      out.stats.packs_skipped += considered;
      continue;
    }
    ++out.stats.groups_scanned;

    bool fully = g->fully_visible_at(q.snapshot);

    // Whole-pack aggregation without decoding when every row is visible
    // and there is nothing to filter or group.
    if (plain_agg && fully && q.terms.empty()) {
      if (q.agg == AggKind::Count) {
        agg.merge_count(alloc);
        continue;
      }
      auto rep = g->column(q.agg_col);
      if (!rep) continue;  // group died under the scan: dead at <= snapshot
      if (rep->frozen && rep->frozen->meta.has_stats &&
          (q.agg == AggKind::Min || q.agg == AggKind::Max)) {
        agg.merge_minmax(rep->frozen->meta.min, rep->frozen->meta.max);
        agg.merge_count(alloc - 1);
        continue;
      }
      if (q.agg == AggKind::Sum && rep->frozen) {
        const PackedInts& p = rep->frozen->ints;
        uint64_t sum = 0;
        size_t bytes = p.width_bits / 8;
        if (bytes == 0) {
          sum = static_cast<uint64_t>(p.base) * p.count;
        } else {
          uint64_t deltas = 0;
          const uint8_t* s = p.data.data();
          for (size_t r = 0; r < p.count; ++r) {
            uint64_t d = 0;
            for (size_t b = 0; b < bytes; ++b)
              d |= static_cast<uint64_t>(s[r * bytes + b]) << (b * 8);
            deltas += d;
          }
          sum = static_cast<uint64_t>(p.base) * p.count + deltas;
        }
        agg.merge_sum(p.count, sum);
        continue;
      }
    }

    // Materialize needed columns.
    std::vector<detail::ColSlice> slice(ncols);
    bool dead_group = false;
    for (size_t c = 0; c < ncols && !dead_group; ++c) {
      if (!needed[c]) continue;
      auto rep = g->column(c);
      if (!rep) {
        dead_group = true;  // dropped under us: nothing visible at snapshot
        break;
      }
      detail::ColSlice& s = slice[c];
      s.keep = rep;
      if (q.schema->columns[c].type == ColumnType::Int64) {
        if (rep->frozen) {
          s.scratch = unpack_int64(rep->frozen->ints);
          s.ints = s.scratch.data();
        } else {
          s.ints = rep->partial->ints.data();
        }
      } else {
        if (rep->frozen)
          s.dict = &rep->frozen->strs;
        else
          s.strs = rep->partial->strs.data();
      }
    }
    if (dead_group) continue;

    Batch batch;
    Row scratch_row;
    scratch_row.values.resize(ncols);
    for (uint32_t base = 0; base < alloc;
         base += static_cast<uint32_t>(batch_rows)) {
      batch.base = base;
      batch.len = static_cast<uint32_t>(
          std::min<size_t>(batch_rows, alloc - base));
      batch.valid.assign(batch.len, 1);
      out.stats.rows_examined += batch.len;

      if (!fully) {
        for (uint32_t i = 0; i < batch.len; ++i)
          if (!g->slot_visible(base + i, q.snapshot)) batch.valid[i] = 0;
      }
      for (const auto& t : q.terms) {
        const detail::ColSlice& s = slice[t.col];
        for (uint32_t i = 0; i < batch.len; ++i)
          if (batch.valid[i] && !detail::slice_matches(t, s, base + i))
            batch.valid[i] = 0;
      }

      for (uint32_t i = 0; i < batch.len; ++i) {
        if (!batch.valid[i]) continue;
        uint32_t r = base + i;
        for (size_t c = 0; c < ncols; ++c) {
          if (!needed[c]) continue;
          const detail::ColSlice& s = slice[c];
          if (q.schema->columns[c].type == ColumnType::Int64)
            scratch_row.values[c] = s.int_at(r);
          else
            scratch_row.values[c] = s.str_at(r);
        }
        agg.feed(scratch_row);
      }
    }
  }

  agg.finish(out);
  return out;
}

// Row path: MVCC point lookup or full chain scan at the snapshot.
inline QueryResult row_scan(RoEngine& eng, const BoundQuery& q) {
  QueryResult out;
  out.snapshot = q.snapshot;
  detail::Aggregator agg(q);

  std::shared_lock lk(eng.versions_mu());
  const VersionIndex& vi = eng.versions();

  const BoundTerm* pk_eq = nullptr;
  for (const auto& t : q.terms)
    if (t.col == 0 && t.op == PredTerm::Op::Eq) {
      pk_eq = &t;
      break;
    }

  if (pk_eq) {
    if (RowPtr r = vi.visible(q.table, pk_eq->lo_i, q.snapshot)) {
      ++out.stats.rows_examined;
      if (detail::row_matches(q, *r)) agg.feed(*r);
    }
  } else {
    vi.scan_visible(q.table, q.snapshot, [&](const Row& r) {
      ++out.stats.rows_examined;
      if (detail::row_matches(q, r)) agg.feed(r);
    });
  }

  agg.finish(out);
  return out;
}

// Point lookup helper mirroring the writer's row read: pk equality at a
// snapshot, full row or nothing.
inline std::optional<Row> row_point_lookup(RoEngine& eng, TableId table,
                                           int64_t pk, uint64_t snapshot) {
  std::shared_lock lk(eng.versions_mu());
  if (RowPtr r = eng.versions().visible(table, pk, snapshot)) return *r;
  return std::nullopt;
}

// Front door: resolves the snapshot, pins it, routes by estimated row cost,
// and falls back to the row path once if the column path throws.
class QueryExecutor {
 public:
  explicit QueryExecutor(RoEngine& eng)
      : eng_(eng),
        threshold_(eng.config().get_int("router.threshold", 1000)),
        batch_rows_(static_cast<size_t>(
            eng.config().get_int("query.batch_rows", 1024))),
        snapshot_wait_ms_(static_cast<int>(
            eng.config().get_int("query.snapshot_wait_ms", 1000))) {}

  QueryResult execute(const QuerySpec& spec) {
    auto table = eng_.table_id_by_name(spec.table);
    if (!table) raise(ErrorCode::NotFound, "unknown table: " + spec.table);
    const TableSchema& schema = eng_.column_index(*table).schema();

    uint64_t snapshot = resolve_snapshot(spec);
    eng_.pin_at(snapshot);
    struct Unpin {
      RoEngine& e;
      uint64_t s;
      ~Unpin() { e.unpin(s); }
    } unpin{eng_, snapshot};

    BoundQuery bq = bind_query(spec, *table, schema, snapshot);
    double cost = estimate_row_cost(eng_.column_index(*table), bq);
    bool to_row = route_to_row(cost, threshold_);
    bool floor_forced = false;
    if (!to_row && snapshot < eng_.column_floor()) {
      to_row = true;  // column state no longer covers this snapshot
      floor_forced = true;
    }

    QueryResult res;
    if (to_row) {
      res = row_scan(eng_, bq);
    } else {
      try {
        res = column_scan(eng_, bq, batch_rows_);
      } catch (const Error&) {
        res = row_scan(eng_, bq);  // one-shot reroute on column failure
        res.stats.rerouted = true;
      }
    }
    res.stats.row_cost = cost;
    res.stats.floor_forced_row = floor_forced;
    return res;
  }

  QueryResult execute_text(const std::string& text) {
    return execute(parse_query(text));
  }

 private:
  uint64_t resolve_snapshot(const QuerySpec& spec) {
    if (spec.snapshot_latest) return eng_.applied_commit();
    if (spec.snapshot > eng_.applied_commit()) {
      eng_.wait_applied_commit(spec.snapshot, snapshot_wait_ms_);
      if (spec.snapshot > eng_.applied_commit())
        raise(ErrorCode::SnapshotAhead, "snapshot " +
                                            std::to_string(spec.snapshot) +
                                            " not yet applied");
    }
    return spec.snapshot;
  }

  RoEngine& eng_;
  int64_t threshold_;
  size_t batch_rows_;
  int snapshot_wait_ms_;
};

}  // namespace imci

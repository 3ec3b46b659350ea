#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "imci/column_index.hpp"
#include "imci/rid_locator.hpp"

namespace imci {

// Durable column-state checkpoints under <data-dir>/ckpt/:
//   <csn>.manifest   JSON index of one checkpoint (crc-protected), csn being
//                    the commit VID whose effects it contains; replay resumes
//                    at start_lsn = csn + 1
//   packs/, vids/, loc/   content-addressed payload files keyed by
//                    (table, group, column, csn); frozen packs are immutable
//                    so later checkpoints reuse the file written first
//   ROLE             leader election record: epoch, node, heartbeat
//   REQUEST          operator checkpoint trigger (presence = request)
//
// The log is never truncated: transactions open at the checkpoint may own
// entries below the csn, and recovering nodes re-scan the physical log from
// LSN 1 to rebuild page state and in-flight transaction buffers before
// resuming at start_lsn.

struct PartialColCopy {
  std::vector<int64_t> ints;
  std::vector<std::string> strs;
};

struct GroupCapture {
  uint64_t base_rid = 0;
  uint32_t size = 0;
  uint32_t allocated = 0;
  uint32_t dead = 0;
  bool frozen = false;
  bool imap_dropped = false;
  bool dropped = false;
  uint64_t max_ivid = 0;
  std::vector<uint8_t> flags;
  std::vector<uint64_t> ivids;  // cleansed, empty when dropped/imap_dropped
  std::vector<uint64_t> dvids;  // cleansed
  std::vector<std::shared_ptr<const FrozenPack>> frozen_cols;
  std::vector<PartialColCopy> partial_cols;
};

struct TableCapture {
  TableId table = 0;
  Rid next_rid = 0;
  std::vector<GroupCapture> groups;
  std::vector<RidLocator::RunPtr> locator_layers;
};

// Dispatcher-side bookkeeping of one pre-committed open transaction, needed
// to finish it after recovery: its temp locator, materialized RID ranges and
// staged deletes of already-mapped pks.
struct PrecommitTableCapture {
  std::vector<std::pair<int64_t, Rid>> temp;
  std::vector<std::pair<Rid, Rid>> ranges;  // [lo, hi] inclusive
  std::vector<int64_t> staged;
};

struct PrecommitCapture {
  Tid tid = 0;
  std::map<TableId, PrecommitTableCapture> tables;
};

struct CheckpointCapture {
  uint64_t csn = 0;        // last commit VID whose effects are contained
  uint64_t staged_lsn = 0; // last LSN whose staging (flush/abort) is contained
  std::vector<TableCapture> tables;
  std::vector<PrecommitCapture> precommits;
};

namespace detail {

inline void put_value(std::vector<uint8_t>& out, const Value& v) {
  if (std::holds_alternative<int64_t>(v)) {
    put_u8(out, 0);
    put_i64(out, std::get<int64_t>(v));
  } else {
    const std::string& s = std::get<std::string>(v);
    put_u8(out, 1);
    put_u32(out, static_cast<uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
  }
}

inline Value get_value(ByteReader& in) {
  if (in.u8() == 0) return Value{in.i64()};
  return Value{in.bytes(in.u32())};
}

inline void write_file_crc(const std::string& path, std::vector<uint8_t>& buf) {
  put_u32(buf, crc32_of(buf.data(), buf.size()));
  std::ofstream out(path + ".tmp", std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  out.close();
  std::filesystem::rename(path + ".tmp", path);
}

inline std::vector<uint8_t> read_file_crc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::MissingPackFile, "missing " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 4) raise(ErrorCode::ChecksumMismatch, "short file " + path);
  ByteReader tail(buf.data() + buf.size() - 4, 4);
  if (tail.u32() != crc32_of(buf.data(), buf.size() - 4))
    raise(ErrorCode::ChecksumMismatch, "bad crc in " + path);
  buf.resize(buf.size() - 4);
  return buf;
}

}  // namespace detail

class CheckpointIo {
 public:
  static std::string ckpt_dir(const std::string& data_dir) { return data_dir + "/ckpt"; }

  // Consistent capture at csn. Must run quiesced on the dispatch thread:
  // every write for commits <= csn finished, none for later commits started.
  // VID copies are cleansed: any vid above the csn reverts to kInvalidVid.
  static TableCapture capture_table(const ColumnIndex& ci, const RidLocator& loc,
                                    uint64_t csn) {
    TableCapture tc;
    tc.table = ci.schema().table_id;
    tc.next_rid = ci.next_rid();
    tc.locator_layers = loc.freeze_layers();
    auto groups = ci.groups();
    size_t ncols = ci.schema().num_columns();
    for (const auto& g : groups) {
      GroupCapture gc;
      gc.base_rid = g->base_rid();
      gc.size = g->size();
      gc.allocated = g->allocated();
      gc.dead = g->dead_count();
      gc.frozen = g->frozen();
      gc.imap_dropped = g->insert_map_dropped();
      gc.dropped = g->dropped();
      gc.max_ivid = g->max_insert_vid();
      if (!gc.dropped) {
        gc.flags.resize(gc.size);
        for (uint32_t i = 0; i < gc.size; ++i) gc.flags[i] = g->slot_flags(i);
        auto cleanse = [&](const std::shared_ptr<VidMap>& m, std::vector<uint64_t>& out) {
          if (!m) return;
          out.resize(gc.size);
          for (uint32_t i = 0; i < gc.size; ++i) {
            uint64_t v = m->v[i].load(std::memory_order_acquire);
            out[i] = (v != kInvalidVid && v > csn) ? kInvalidVid : v;
          }
        };
        if (!gc.imap_dropped) cleanse(g->insert_vids(), gc.ivids);
        cleanse(g->delete_vids(), gc.dvids);
        for (size_t c = 0; c < ncols; ++c) {
          auto rep = g->column(c);
          if (gc.frozen) {
            gc.frozen_cols.push_back(rep->frozen);
          } else {
            PartialColCopy copy;
            copy.ints = rep->partial->ints;
            copy.strs = rep->partial->strs;
            gc.partial_cols.push_back(std::move(copy));
          }
        }
      }
      tc.groups.push_back(std::move(gc));
    }
    return tc;
  }

  // Writes payload files and publishes <csn>.manifest. Frozen pack files
  // already recorded by the previous manifest are reused, not rewritten.
  static std::string persist(const CheckpointCapture& cap, const std::string& data_dir) {
    namespace fs = std::filesystem;
    std::string dir = ckpt_dir(data_dir);
    fs::create_directories(dir + "/packs");
    fs::create_directories(dir + "/vids");
    fs::create_directories(dir + "/loc");

    std::map<std::string, std::string> reuse;  // "t/g/c" -> pack file name
    if (auto prev = latest_manifest(data_dir)) {
      nlohmann::json doc = read_manifest_json(*prev);
      for (const auto& t : doc.at("tables"))
        for (const auto& g : t.at("groups"))
          if (g.at("frozen").get<bool>() && !g.at("dropped").get<bool>())
            for (const auto& c : g.at("cols")) {
              std::string key = std::to_string(t.at("table_id").get<uint64_t>()) +
                                "/" + std::to_string(g.at("gid").get<uint64_t>()) +
                                "/" + std::to_string(c.at("col").get<uint64_t>());
              reuse[key] = c.at("file").get<std::string>();
            }
    }

    nlohmann::json tables = nlohmann::json::array();
    for (const auto& tc : cap.tables) {
      nlohmann::json groups = nlohmann::json::array();
      for (size_t gid = 0; gid < tc.groups.size(); ++gid) {
        const GroupCapture& gc = tc.groups[gid];
        nlohmann::json g{{"gid", gid},
                         {"base_rid", gc.base_rid},
                         {"size", gc.size},
                         {"allocated", gc.allocated},
                         {"dead", gc.dead},
                         {"frozen", gc.frozen},
                         {"imap_dropped", gc.imap_dropped},
                         {"dropped", gc.dropped},
                         {"max_ivid", gc.max_ivid}};
        if (!gc.dropped) {
          std::string vname = "vids/t" + std::to_string(tc.table) + "_g" +
                              std::to_string(gid) + "_" + std::to_string(cap.csn) +
                              ".vmap";
          write_vmap(dir + "/" + vname, gc);
          g["vmap_file"] = vname;
          nlohmann::json cols = nlohmann::json::array();
          size_t ncols = gc.frozen ? gc.frozen_cols.size() : gc.partial_cols.size();
          for (size_t c = 0; c < ncols; ++c) {
            std::string key = std::to_string(tc.table) + "/" + std::to_string(gid) +
                              "/" + std::to_string(c);
            std::string fname;
            if (gc.frozen && reuse.count(key)) {
              fname = reuse[key];
            } else {
              fname = "packs/t" + std::to_string(tc.table) + "_g" +
                      std::to_string(gid) + "_c" + std::to_string(c) + "_" +
                      std::to_string(cap.csn) + ".pack";
              if (gc.frozen)
                write_frozen_pack(dir + "/" + fname, *gc.frozen_cols[c]);
              else
                write_partial_pack(dir + "/" + fname, gc.partial_cols[c]);
            }
            cols.push_back({{"col", c}, {"file", fname}});
          }
          g["cols"] = cols;
        }
        groups.push_back(std::move(g));
      }
      nlohmann::json runs = nlohmann::json::array();
      for (size_t k = 0; k < tc.locator_layers.size(); ++k) {
        std::string rname = "loc/t" + std::to_string(tc.table) + "_k" +
                            std::to_string(k) + "_" + std::to_string(cap.csn) + ".run";
        save_locator_run(*tc.locator_layers[k], dir + "/" + rname);
        runs.push_back(rname);
      }
      tables.push_back({{"table_id", tc.table},
                        {"next_rid", tc.next_rid},
                        {"groups", groups},
                        {"locator", runs}});
    }

    nlohmann::json precommit = nlohmann::json::array();
    for (const auto& pc : cap.precommits) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& [table, pt] : pc.tables) {
        nlohmann::json temp = nlohmann::json::array();
        for (const auto& [pk, rid] : pt.temp) temp.push_back({pk, rid});
        nlohmann::json ranges = nlohmann::json::array();
        for (const auto& [lo, hi] : pt.ranges) ranges.push_back({lo, hi});
        pts.push_back({{"table", table},
                       {"temp", temp},
                       {"ranges", ranges},
                       {"staged", pt.staged}});
      }
      precommit.push_back({{"tid", pc.tid}, {"tables", pts}});
    }

    nlohmann::json doc{{"csn", cap.csn},
                       {"staged_lsn", cap.staged_lsn},
                       {"start_lsn", cap.staged_lsn + 1},
                       {"tables", tables},
                       {"precommit", precommit}};
    doc["crc"] = crc_of_manifest(doc);
    std::string path = dir + "/" + std::to_string(cap.csn) + ".manifest";
    std::ofstream out(path + ".tmp", std::ios::trunc);
    if (!out) raise(ErrorCode::IoFailure, "cannot write manifest");
    out << doc.dump(1) << "\n";
    out.close();
    std::filesystem::rename(path + ".tmp", path);
    return path;
  }

  // Manifest csns present, descending.
  static std::vector<uint64_t> manifest_csns(const std::string& data_dir) {
    std::vector<uint64_t> out;
    std::string dir = ckpt_dir(data_dir);
    if (!std::filesystem::exists(dir)) return out;
    for (const auto& ent : std::filesystem::directory_iterator(dir)) {
      std::string name = ent.path().filename().string();
      auto pos = name.find(".manifest");
      if (pos == std::string::npos || name.size() != pos + 9) continue;
      try {
        out.push_back(std::stoull(name.substr(0, pos)));
      } catch (...) {
      }
    }
    std::sort(out.rbegin(), out.rend());
    return out;
  }

  static std::optional<std::string> latest_manifest(const std::string& data_dir) {
    auto csns = manifest_csns(data_dir);
    if (csns.empty()) return std::nullopt;
    return ckpt_dir(data_dir) + "/" + std::to_string(csns[0]) + ".manifest";
  }

  struct Loaded {
    uint64_t csn = 0;
    uint64_t staged_lsn = 0;
    std::vector<PrecommitCapture> precommits;
  };

  // Restores the newest loadable checkpoint into the given per-table state.
  // Damaged or incomplete checkpoints fall back to the next older one.
  static std::optional<Loaded> load_latest(
      const std::string& data_dir,
      std::map<TableId, ColumnIndex*>& indexes,
      std::map<TableId, RidLocator*>& locators) {
    for (uint64_t csn : manifest_csns(data_dir)) {
      try {
        return load_manifest(
            ckpt_dir(data_dir) + "/" + std::to_string(csn) + ".manifest", indexes,
            locators);
      } catch (const Error&) {
        continue;  // try the previous checkpoint
      }
    }
    return std::nullopt;
  }

  static Loaded load_manifest(const std::string& path,
                              std::map<TableId, ColumnIndex*>& indexes,
                              std::map<TableId, RidLocator*>& locators) {
    namespace fs = std::filesystem;
    std::string dir = fs::path(path).parent_path().string();
    nlohmann::json doc = read_manifest_json(path);
    Loaded loaded;
    loaded.csn = doc.at("csn").get<uint64_t>();
    loaded.staged_lsn = doc.at("staged_lsn").get<uint64_t>();
    for (const auto& t : doc.at("tables")) {
      TableId table = t.at("table_id").get<TableId>();
      ColumnIndex* ci = indexes.at(table);
      RidLocator* loc = locators.at(table);
      const TableSchema& schema = ci->schema();
      std::vector<std::shared_ptr<RowGroup>> groups;
      for (const auto& g : t.at("groups")) {
        auto grp = std::make_shared<RowGroup>(g.at("base_rid").get<uint64_t>(),
                                              g.at("size").get<uint32_t>(),
                                              schema.num_columns(), schema);
        grp->allocated_.store(g.at("allocated").get<uint32_t>());
        grp->dead_.store(g.at("dead").get<uint32_t>());
        grp->max_ivid_.store(g.at("max_ivid").get<uint64_t>());
        if (g.at("dropped").get<bool>()) {
          grp->dropped_.store(true);
          grp->frozen_.store(g.at("frozen").get<bool>());
          grp->written_.store(grp->allocated_.load());
          for (auto& c : grp->cols_)
            std::atomic_store(&c, std::shared_ptr<const ColumnRep>());
        } else {
          read_vmap(dir + "/" + g.at("vmap_file").get<std::string>(), *grp);
          bool frozen = g.at("frozen").get<bool>();
          bool imap_dropped = g.at("imap_dropped").get<bool>();
          grp->written_.store(grp->allocated_.load());
          grp->frozen_.store(frozen);
          grp->imap_dropped_.store(imap_dropped);
          if (imap_dropped) std::atomic_store(&grp->insert_vids_, std::shared_ptr<VidMap>());
          uint64_t deletes = 0, pending = 0;
          for (uint32_t i = 0; i < grp->size(); ++i) {
            uint8_t f = grp->flags_[i].load();
            if (!(f & RowGroup::kAllocated)) continue;
            if (grp->delete_vids_->v[i].load() != kInvalidVid) ++deletes;
            if (!(f & RowGroup::kDead) && !imap_dropped &&
                grp->insert_vids_->v[i].load() == kInvalidVid)
              ++pending;
          }
          grp->deletes_.store(deletes);
          grp->pending_.store(static_cast<uint32_t>(pending));
          for (const auto& c : g.at("cols")) {
            size_t ci_idx = c.at("col").get<size_t>();
            std::string fpath = dir + "/" + c.at("file").get<std::string>();
            auto rep = std::make_shared<ColumnRep>();
            if (frozen)
              rep->frozen = read_frozen_pack(fpath, schema.columns[ci_idx].type);
            else
              rep->partial = read_partial_pack(fpath, schema.columns[ci_idx].type,
                                               grp->size());
            std::atomic_store(&grp->cols_[ci_idx],
                              std::shared_ptr<const ColumnRep>(rep));
          }
        }
        groups.push_back(std::move(grp));
      }
      {
        std::unique_lock lk(ci->groups_mu_);
        ci->groups_ = std::move(groups);
      }
      ci->next_rid_ = t.at("next_rid").get<Rid>();
      std::vector<RidLocator::RunPtr> layers;
      for (const auto& r : t.at("locator"))
        layers.push_back(load_locator_run(dir + "/" + r.get<std::string>()));
      loc->restore_layers(std::move(layers));
    }
    for (const auto& pc : doc.at("precommit")) {
      PrecommitCapture cap;
      cap.tid = pc.at("tid").get<Tid>();
      for (const auto& pt : pc.at("tables")) {
        PrecommitTableCapture& tcap = cap.tables[pt.at("table").get<TableId>()];
        for (const auto& e : pt.at("temp"))
          tcap.temp.emplace_back(e[0].get<int64_t>(), e[1].get<Rid>());
        for (const auto& e : pt.at("ranges"))
          tcap.ranges.emplace_back(e[0].get<Rid>(), e[1].get<Rid>());
        for (const auto& e : pt.at("staged")) tcap.staged.push_back(e.get<int64_t>());
      }
      loaded.precommits.push_back(std::move(cap));
    }
    return loaded;
  }

 private:
  static uint32_t crc_of_manifest(nlohmann::json doc) {
    doc.erase("crc");
    std::string body = doc.dump();
    return crc32_of(reinterpret_cast<const uint8_t*>(body.data()), body.size());
  }

  static nlohmann::json read_manifest_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::MissingPackFile, "missing manifest " + path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("crc"))
      raise(ErrorCode::ChecksumMismatch, "unparsable manifest " + path);
    if (doc.at("crc").get<uint32_t>() != crc_of_manifest(doc))
      raise(ErrorCode::ChecksumMismatch, "manifest crc mismatch " + path);
    return doc;
  }

  static void write_vmap(const std::string& path, const GroupCapture& gc) {
    std::vector<uint8_t> buf;
    put_u32(buf, gc.size);
    put_bytes(buf, gc.flags.data(), gc.flags.size());
    put_u8(buf, gc.ivids.empty() ? 0 : 1);
    for (uint64_t v : gc.ivids) put_u64(buf, v);
    for (uint64_t v : gc.dvids) put_u64(buf, v);
    detail::write_file_crc(path, buf);
  }

  static void read_vmap(const std::string& path, RowGroup& g) {
    std::vector<uint8_t> buf = detail::read_file_crc(path);
    ByteReader in(buf);
    uint32_t n = in.u32();
    if (n != g.size()) raise(ErrorCode::ChecksumMismatch, "vmap size mismatch");
    for (uint32_t i = 0; i < n; ++i) g.flags_[i].store(in.u8());
    bool has_imap = in.u8() != 0;
    if (has_imap)
      for (uint32_t i = 0; i < n; ++i) g.insert_vids_->v[i].store(in.u64());
    for (uint32_t i = 0; i < n; ++i) g.delete_vids_->v[i].store(in.u64());
  }

  static void write_meta(std::vector<uint8_t>& buf, const PackMeta& m) {
    put_u8(buf, m.has_stats ? 1 : 0);
    put_u64(buf, m.rows);
    if (m.has_stats) {
      detail::put_value(buf, m.min);
      detail::put_value(buf, m.max);
      for (uint64_t h : m.hist) put_u64(buf, h);
    }
  }

  static PackMeta read_meta(ByteReader& in) {
    PackMeta m;
    m.has_stats = in.u8() != 0;
    m.rows = in.u64();
    if (m.has_stats) {
      m.min = detail::get_value(in);
      m.max = detail::get_value(in);
      for (auto& h : m.hist) h = in.u64();
    }
    return m;
  }

  static void write_frozen_pack(const std::string& path, const FrozenPack& p) {
    std::vector<uint8_t> buf;
    put_u8(buf, p.type == ColumnType::Int64 ? 0 : 1);
    if (p.type == ColumnType::Int64)
      serialize_packed_ints(p.ints, buf);
    else
      serialize_packed_strings(p.strs, buf);
    write_meta(buf, p.meta);
    detail::write_file_crc(path, buf);
  }

  static std::shared_ptr<const FrozenPack> read_frozen_pack(const std::string& path,
                                                            ColumnType type) {
    std::vector<uint8_t> buf = detail::read_file_crc(path);
    ByteReader in(buf);
    auto p = std::make_shared<FrozenPack>();
    uint8_t kind = in.u8();
    p->type = kind == 0 ? ColumnType::Int64 : type;
    if (kind == 0)
      p->ints = deserialize_packed_ints(in);
    else
      p->strs = deserialize_packed_strings(in);
    p->meta = read_meta(in);
    return p;
  }

  static void write_partial_pack(const std::string& path, const PartialColCopy& p) {
    std::vector<uint8_t> buf;
    if (!p.ints.empty()) {
      put_u8(buf, 0);
      put_u32(buf, static_cast<uint32_t>(p.ints.size()));
      for (int64_t v : p.ints) put_i64(buf, v);
    } else {
      put_u8(buf, 1);
      put_u32(buf, static_cast<uint32_t>(p.strs.size()));
      for (const auto& s : p.strs) {
        put_u32(buf, static_cast<uint32_t>(s.size()));
        put_bytes(buf, s.data(), s.size());
      }
    }
    detail::write_file_crc(path, buf);
  }

  static std::shared_ptr<PartialCol> read_partial_pack(const std::string& path,
                                                       ColumnType type, uint32_t size) {
    std::vector<uint8_t> buf = detail::read_file_crc(path);
    ByteReader in(buf);
    auto p = std::make_shared<PartialCol>();
    uint8_t kind = in.u8();
    uint32_t n = in.u32();
    if (n != size) raise(ErrorCode::ChecksumMismatch, "partial size mismatch");
    if (kind == 0) {
      p->ints.resize(n);
      for (uint32_t i = 0; i < n; ++i) p->ints[i] = in.i64();
      if (type != ColumnType::Int64)
        raise(ErrorCode::ChecksumMismatch, "partial type mismatch");
    } else {
      p->strs.resize(n);
      for (uint32_t i = 0; i < n; ++i) p->strs[i] = in.bytes(in.u32());
    }
    return p;
  }
};

inline uint64_t steady_now_ms() {
  return static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

// Leader election over the shared ckpt/ROLE file. The record carries a
// monotonically increasing epoch; a follower claims leadership by rewriting
// the file with epoch+1 once the heartbeat is stale. Exactly one node
// persists checkpoints: the one whose id the current-epoch record names.
class RoleCoordinator {
 public:
  RoleCoordinator(const std::string& data_dir, std::string node_id, int timeout_ms)
      : path_(CheckpointIo::ckpt_dir(data_dir) + "/ROLE"),
        node_id_(std::move(node_id)),
        timeout_ms_(timeout_ms) {
    std::filesystem::create_directories(CheckpointIo::ckpt_dir(data_dir));
  }

  struct Role {
    uint64_t epoch = 0;
    std::string leader;
    uint64_t hb_ms = 0;
  };

  std::optional<Role> read() const {
    std::ifstream in(path_);
    if (!in) return std::nullopt;
    Role r;
    if (!(in >> r.epoch >> r.leader >> r.hb_ms)) return std::nullopt;
    return r;
  }

  bool is_leader() const {
    auto r = read();
    return r && r->leader == node_id_;
  }

  uint64_t epoch() const {
    auto r = read();
    return r ? r->epoch : 0;
  }

  // Claims leadership when the file is absent or its heartbeat stale.
  bool try_acquire() {
    auto r = read();
    if (r && r->leader == node_id_) return heartbeat();
    if (r && steady_now_ms() - r->hb_ms < static_cast<uint64_t>(timeout_ms_))
      return false;
    write_role(r ? r->epoch + 1 : 1);
    auto back = read();
    return back && back->leader == node_id_;
  }

  // Refreshes the heartbeat; false when another node took a higher epoch,
  // which demotes this one.
  bool heartbeat() {
    auto r = read();
    if (!r || r->leader != node_id_) return false;
    write_role(r->epoch);
    return true;
  }

 private:
  void write_role(uint64_t epoch) {
    std::string tmp = path_ + ".tmp." + node_id_;
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << epoch << " " << node_id_ << " " << steady_now_ms() << "\n";
    }
    std::filesystem::rename(tmp, path_);
  }

  std::string path_;
  std::string node_id_;
  int timeout_ms_;
};

// Operator-requested checkpoint: the CLI drops a REQUEST file, the leader's
// maintenance loop consumes it.
inline void request_checkpoint(const std::string& data_dir) {
  std::filesystem::create_directories(CheckpointIo::ckpt_dir(data_dir));
  std::ofstream out(CheckpointIo::ckpt_dir(data_dir) + "/REQUEST", std::ios::trunc);
  out << "checkpoint\n";
}

inline bool consume_checkpoint_request(const std::string& data_dir) {
  std::string path = CheckpointIo::ckpt_dir(data_dir) + "/REQUEST";
  if (!std::filesystem::exists(path)) return false;
  std::error_code ec;
  std::filesystem::remove(path, ec);
  return !ec;
}

}  // namespace imci

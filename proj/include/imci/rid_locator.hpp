#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "imci/common.hpp"

namespace imci {

// PK -> RID map as a two-layer LSM: a mutable memtable ahead of immutable
// sorted runs. The memtable freezes into a run at the flush limit; runs merge
// pairwise (oldest two first) once there are more than max_runs. Removal
// writes a tombstone that dies when it reaches the oldest run. Snapshots are
// copy-on-write: a copy of the small memtable plus shared run pointers.
//
// One mutator at a time (the replay dispatcher); concurrent readers are
// fenced with a shared lock.
class RidLocator {
 public:
  static constexpr uint64_t kTombstone = ~uint64_t{0};

  using Run = std::vector<std::pair<int64_t, uint64_t>>;
  using RunPtr = std::shared_ptr<const Run>;

  explicit RidLocator(size_t memtable_limit = 4096, size_t max_runs = 8)
      : limit_(memtable_limit), max_runs_(max_runs) {}

  void put(int64_t pk, Rid rid) {
    std::unique_lock lk(mu_);
    if (lookup(pk))
      raise(ErrorCode::DuplicatePk, "pk " + std::to_string(pk) + " mapped");
    mem_[pk] = rid;
    maybe_flush();
  }

  void remove(int64_t pk) {
    std::unique_lock lk(mu_);
    if (!lookup(pk))
      raise(ErrorCode::NotFound, "pk " + std::to_string(pk) + " unmapped");
    mem_[pk] = kTombstone;
    maybe_flush();
  }

  std::optional<Rid> get(int64_t pk) const {
    std::shared_lock lk(mu_);
    return lookup(pk);
  }

  // Applies a pre-commit temp locator: every mapping must be fresh.
  void merge_temp(const std::map<int64_t, Rid>& temp) {
    std::unique_lock lk(mu_);
    for (const auto& [pk, rid] : temp) {
      if (lookup(pk))
        raise(ErrorCode::DuplicatePk, "temp merge hits mapped pk");
      mem_[pk] = rid;
      maybe_flush();
    }
  }

  struct Snapshot {
    std::unordered_map<int64_t, uint64_t> mem;
    std::vector<RunPtr> runs;  // oldest first

    std::optional<Rid> get(int64_t pk) const {
      if (auto it = mem.find(pk); it != mem.end())
        return it->second == kTombstone ? std::nullopt
                                        : std::optional<Rid>(it->second);
      for (auto rit = runs.rbegin(); rit != runs.rend(); ++rit) {
        if (auto v = probe(**rit, pk))
          return *v == kTombstone ? std::nullopt : std::optional<Rid>(*v);
      }
      return std::nullopt;
    }
  };

  Snapshot snapshot() const {
    std::shared_lock lk(mu_);
    return Snapshot{mem_, runs_};
  }

  size_t run_count() const {
    std::shared_lock lk(mu_);
    return runs_.size();
  }

  size_t memtable_size() const {
    std::shared_lock lk(mu_);
    return mem_.size();
  }

  // Live mappings in pk order, shadowing applied. Test and checkpoint path.
  std::map<int64_t, Rid> live_map() const {
    std::shared_lock lk(mu_);
    std::map<int64_t, Rid> out;
    for (const auto& run : runs_)
      for (const auto& [pk, rid] : *run) out[pk] = rid;
    for (const auto& [pk, rid] : mem_) out[pk] = rid;
    for (auto it = out.begin(); it != out.end();)
      it = it->second == kTombstone ? out.erase(it) : std::next(it);
    return out;
  }

  // Checkpoint content: every layer, memtable rendered as the newest run.
  std::vector<RunPtr> freeze_layers() const {
    std::shared_lock lk(mu_);
    std::vector<RunPtr> out = runs_;
    if (!mem_.empty()) out.push_back(std::make_shared<Run>(sorted_mem()));
    return out;
  }

  // Rebuilds from persisted layers, oldest first.
  void restore_layers(std::vector<RunPtr> layers) {
    std::unique_lock lk(mu_);
    mem_.clear();
    runs_ = std::move(layers);
    while (runs_.size() > max_runs_) merge_oldest_pair();
  }

  // Count of memtable freezes, the checkpoint trigger event.
  uint64_t flush_count() const {
    std::shared_lock lk(mu_);
    return flushes_;
  }

 private:
  static std::optional<uint64_t> probe(const Run& run, int64_t pk) {
    auto it = std::lower_bound(
        run.begin(), run.end(), pk,
        [](const std::pair<int64_t, uint64_t>& e, int64_t k) { return e.first < k; });
    if (it == run.end() || it->first != pk) return std::nullopt;
    return it->second;
  }

  std::optional<Rid> lookup(int64_t pk) const {
    if (auto it = mem_.find(pk); it != mem_.end())
      return it->second == kTombstone ? std::nullopt
                                      : std::optional<Rid>(it->second);
    for (auto rit = runs_.rbegin(); rit != runs_.rend(); ++rit) {
      if (auto v = probe(**rit, pk))
        return *v == kTombstone ? std::nullopt : std::optional<Rid>(*v);
    }
    return std::nullopt;
  }

  Run sorted_mem() const {
    Run run(mem_.begin(), mem_.end());
    std::sort(run.begin(), run.end());
    return run;
  }

  void maybe_flush() {
    if (mem_.size() < limit_) return;
    runs_.push_back(std::make_shared<Run>(sorted_mem()));
    mem_.clear();
    ++flushes_;
    while (runs_.size() > max_runs_) merge_oldest_pair();
  }

  void merge_oldest_pair() {
    const Run& older = *runs_[0];
    const Run& newer = *runs_[1];
    auto merged = std::make_shared<Run>();
    merged->reserve(older.size() + newer.size());
    size_t i = 0, j = 0;
    // The merged run becomes the oldest layer, so tombstones shadow nothing
    // below and can drop out here.
    auto emit = [&](const std::pair<int64_t, uint64_t>& e) {
      if (e.second != kTombstone) merged->push_back(e);
    };
    while (i < older.size() && j < newer.size()) {
      if (older[i].first < newer[j].first) emit(older[i++]);
      else if (newer[j].first < older[i].first) emit(newer[j++]);
      else { emit(newer[j++]); ++i; }
    }
    while (i < older.size()) emit(older[i++]);
    while (j < newer.size()) emit(newer[j++]);
    runs_.erase(runs_.begin());
    runs_[0] = std::move(merged);
  }

  size_t limit_;
  size_t max_runs_;
  mutable std::shared_mutex mu_;
  std::unordered_map<int64_t, uint64_t> mem_;
  std::vector<RunPtr> runs_;  // oldest first
  uint64_t flushes_ = 0;
};

// Run file: u32 count | count * (i64 pk, u64 rid) | u32 crc.
inline void save_locator_run(const RidLocator::Run& run, const std::string& path) {
  std::vector<uint8_t> buf;
  put_u32(buf, static_cast<uint32_t>(run.size()));
  for (const auto& [pk, rid] : run) {
    put_i64(buf, pk);
    put_u64(buf, rid);
  }
  put_u32(buf, crc32_of(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
}

inline RidLocator::RunPtr load_locator_run(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::MissingPackFile, "missing locator run " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 8) raise(ErrorCode::ChecksumMismatch, "short run file " + path);
  ByteReader tail(buf.data() + buf.size() - 4, 4);
  if (tail.u32() != crc32_of(buf.data(), buf.size() - 4))
    raise(ErrorCode::ChecksumMismatch, "bad crc in " + path);
  ByteReader in2(buf.data(), buf.size() - 4);
  uint32_t count = in2.u32();
  auto run = std::make_shared<RidLocator::Run>();
  run->reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    int64_t pk = in2.i64();
    uint64_t rid = in2.u64();
    run->emplace_back(pk, rid);
  }
  return run;
}

}  // namespace imci

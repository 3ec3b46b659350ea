#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "imci/config.hpp"
#include "imci/redo.hpp"

namespace imci {

// Shared-storage log layout under <data-dir>/log/:
//   <start_lsn>.redo   segment files (zero-padded start LSN), each beginning
//                      with the 8-byte magic "IMCILOG1"; records never span
//                      segments and a segment rolls once it passes the size
//                      cap (64 MiB by default)
//   WRITTEN_LSN        8-byte little-endian broadcast sidecar
//
// LSNs are dense: entry n+1 always has LSN one above entry n.

inline constexpr char kLogMagic[8] = {'I', 'M', 'C', 'I', 'L', 'O', 'G', '1'};
inline constexpr size_t kLogMagicBytes = 8;

inline std::string log_dir_of(const std::string& data_dir) {
  return data_dir + "/log";
}

inline std::string segment_path(const std::string& log_dir, Lsn start_lsn) {
  char name[32];
  std::snprintf(name, sizeof(name), "%020llu.redo",
                static_cast<unsigned long long>(start_lsn));
  return log_dir + "/" + name;
}

inline std::string written_lsn_path(const std::string& log_dir) {
  return log_dir + "/WRITTEN_LSN";
}

// Lists segment start LSNs in ascending order.
inline std::vector<Lsn> list_segments(const std::string& log_dir) {
  std::vector<Lsn> starts;
  if (!std::filesystem::exists(log_dir)) return starts;
  for (const auto& ent : std::filesystem::directory_iterator(log_dir)) {
    std::string name = ent.path().filename().string();
    if (name.size() < 6 || name.substr(name.size() - 5) != ".redo") continue;
    starts.push_back(std::stoull(name.substr(0, name.size() - 5)));
  }
  std::sort(starts.begin(), starts.end());
  return starts;
}

inline Lsn read_written_sidecar(const std::string& log_dir) {
  int fd = ::open(written_lsn_path(log_dir).c_str(), O_RDONLY);
  if (fd < 0) return 0;
  uint8_t buf[8] = {0};
  ssize_t n = ::pread(fd, buf, 8, 0);
  ::close(fd);
  if (n != 8) return 0;
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (i * 8);
  return v;
}

// In-process fan-out of the written-LSN broadcast. Cross-process readers poll
// the sidecar file instead.
class WrittenLsnBus {
 public:
  void publish(Lsn lsn) {
    {
      std::lock_guard<std::mutex> g(mu_);
      if (lsn > value_) value_ = lsn;
    }
    cv_.notify_all();
  }

  Lsn value() const {
    std::lock_guard<std::mutex> g(mu_);
    return value_;
  }

  // Blocks until the published value exceeds `above` or the wait times out;
  // returns the latest value either way.
  Lsn wait_above(Lsn above, std::chrono::milliseconds timeout) {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return value_ > above; });
    return value_;
  }

  void poke() { cv_.notify_all(); }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  Lsn value_ = 0;
};

namespace detail {

// Sequential record reader over one segment file with a refill buffer.
class SegmentCursor {
 public:
  SegmentCursor() = default;
  ~SegmentCursor() { close(); }
  SegmentCursor(const SegmentCursor&) = delete;
  SegmentCursor& operator=(const SegmentCursor&) = delete;

  bool open(const std::string& path) {
    close();
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) return false;
    path_ = path;
    file_off_ = 0;
    buf_.clear();
    buf_pos_ = 0;
    char magic[kLogMagicBytes];
    if (::pread(fd_, magic, kLogMagicBytes, 0) != (ssize_t)kLogMagicBytes ||
        std::memcmp(magic, kLogMagic, kLogMagicBytes) != 0)
      raise(ErrorCode::CorruptEntry, "bad segment magic in " + path);
    file_off_ = kLogMagicBytes;
    return true;
  }

  bool is_open() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  // Attempts to decode the next record. Returns nullopt when the file holds
  // no complete further record (possible torn tail or simply end of segment).
  std::optional<RedoEntry> try_next() {
    if (!ensure(4)) return std::nullopt;
    const uint8_t* p = buf_.data() + buf_pos_;
    uint32_t total = static_cast<uint32_t>(p[0]) | (uint32_t)p[1] << 8 |
                     (uint32_t)p[2] << 16 | (uint32_t)p[3] << 24;
    if (total < kRedoFixedBytes || total > (64u << 20))
      raise(ErrorCode::CorruptEntry, "record length out of range in " + path_);
    if (!ensure(total)) return std::nullopt;
    auto [entry, used] = decode_entry(buf_.data() + buf_pos_, total);
    buf_pos_ += used;
    return entry;
  }

  // Byte offset of the next unread record within the file.
  uint64_t offset() const { return file_off_ - (buf_.size() - buf_pos_); }

 private:
  bool ensure(size_t need) {
    while (buf_.size() - buf_pos_ < need) {
      if (buf_pos_ > 0) {
        buf_.erase(buf_.begin(), buf_.begin() + buf_pos_);
        buf_pos_ = 0;
      }
      size_t want = std::max<size_t>(need - buf_.size(), 1 << 20);
      size_t old = buf_.size();
      buf_.resize(old + want);
      ssize_t n = ::pread(fd_, buf_.data() + old, want, file_off_);
      if (n < 0) raise(ErrorCode::IoFailure, "pread failed on " + path_);
      buf_.resize(old + n);
      file_off_ += n;
      if (n == 0) return false;
    }
    return true;
  }

  int fd_ = -1;
  std::string path_;
  uint64_t file_off_ = 0;
  std::vector<uint8_t> buf_;
  size_t buf_pos_ = 0;
};

}  // namespace detail

// Offline scan of every record with LSN >= from, in order. Complete older
// segments must be clean; a torn tail on the final segment ends the scan.
// Returns the last LSN delivered (0 when none).
template <typename Fn>
Lsn scan_log_dir(const std::string& log_dir, Lsn from, Fn&& fn) {
  std::vector<Lsn> starts = list_segments(log_dir);
  Lsn last = 0;
  for (size_t i = 0; i < starts.size(); ++i) {
    if (i + 1 < starts.size() && starts[i + 1] <= from) continue;
    detail::SegmentCursor cur;
    if (!cur.open(segment_path(log_dir, starts[i])))
      raise(ErrorCode::IoFailure, "cannot open segment");
    while (true) {
      std::optional<RedoEntry> e;
      try {
        e = cur.try_next();
      } catch (const Error& err) {
        if (err.code() == ErrorCode::CorruptEntry && i + 1 == starts.size()) break;
        throw;
      }
      if (!e) break;
      last = e->lsn;
      if (e->lsn >= from) fn(*e);
    }
  }
  return last;
}

// Single appender over the shared log. Reopening an existing directory trims
// any torn tail left by a crash and continues the dense LSN sequence.
class LogWriter {
 public:
  LogWriter(const std::string& data_dir, const Config& config)
      : log_dir_(log_dir_of(data_dir)),
        segment_cap_(config.log_segment_bytes()),
        fsync_(config.log_fsync()) {
    std::filesystem::create_directories(log_dir_);
    recover_position();
  }

  ~LogWriter() {
    if (fd_ >= 0) ::close(fd_);
    if (sidecar_fd_ >= 0) ::close(sidecar_fd_);
  }

  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  // Assigns the next dense LSN, encodes and appends the record. The entry is
  // readable by any log reader once this returns.
  Lsn append(RedoEntry& e) {
    e.lsn = next_lsn_;
    scratch_.clear();
    encode_entry(e, scratch_);
    if (fd_ < 0 || seg_bytes_ + scratch_.size() > segment_cap_) roll_segment(e.lsn);
    write_all(scratch_.data(), scratch_.size());
    seg_bytes_ += scratch_.size();
    ++next_lsn_;
    written_.store(e.lsn, std::memory_order_release);
    return e.lsn;
  }

  // Pushes appended bytes toward stable storage. With log.fsync off this is a
  // no-op since write() already made them visible to readers.
  void flush() {
    if (fsync_ && fd_ >= 0) ::fdatasync(fd_);
  }

  // Publishes the durable frontier to the sidecar and in-process bus. Returns
  // the broadcast value.
  Lsn broadcast_written_lsn() {
    Lsn w = written_.load(std::memory_order_acquire);
    uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = (w >> (i * 8)) & 0xff;
    if (sidecar_fd_ < 0) {
      sidecar_fd_ = ::open(written_lsn_path(log_dir_).c_str(),
                           O_CREAT | O_WRONLY, 0644);
      if (sidecar_fd_ < 0) raise(ErrorCode::IoFailure, "cannot open WRITTEN_LSN");
    }
    if (::pwrite(sidecar_fd_, buf, 8, 0) != 8)
      raise(ErrorCode::IoFailure, "cannot update WRITTEN_LSN");
    bus_.publish(w);
    return w;
  }

  Lsn written_lsn() const { return written_.load(std::memory_order_acquire); }
  Lsn next_lsn() const { return next_lsn_; }
  WrittenLsnBus& bus() { return bus_; }
  const std::string& log_dir() const { return log_dir_; }

 private:
  void recover_position() {
    std::vector<Lsn> starts = list_segments(log_dir_);
    if (starts.empty()) {
      next_lsn_ = 1;
      return;
    }
    Lsn seg_start = starts.back();
    std::string path = segment_path(log_dir_, seg_start);
    detail::SegmentCursor cur;
    if (!cur.open(path)) raise(ErrorCode::IoFailure, "cannot open " + path);
    Lsn last = seg_start - 1;
    uint64_t good_end = kLogMagicBytes;
    while (true) {
      std::optional<RedoEntry> e;
      try {
        e = cur.try_next();
      } catch (const Error& err) {
        if (err.code() != ErrorCode::CorruptEntry) throw;
        break;  // torn tail, trim below
      }
      if (!e) break;
      last = e->lsn;
      good_end = cur.offset();
    }
    cur.close();
    if (std::filesystem::file_size(path) > good_end)
      std::filesystem::resize_file(path, good_end);
    next_lsn_ = last + 1;
    written_.store(last, std::memory_order_release);
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND);
    if (fd_ < 0) raise(ErrorCode::IoFailure, "cannot reopen " + path);
    seg_bytes_ = good_end;
    broadcast_written_lsn();
  }

  void roll_segment(Lsn start_lsn) {
    if (fd_ >= 0) {
      if (fsync_) ::fdatasync(fd_);
      ::close(fd_);
    }
    std::string path = segment_path(log_dir_, start_lsn);
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) raise(ErrorCode::IoFailure, "cannot create segment " + path);
    write_all(kLogMagic, kLogMagicBytes);
    seg_bytes_ = kLogMagicBytes;
  }

  void write_all(const void* data, size_t len) {
    const char* p = static_cast<const char*>(data);
    while (len > 0) {
      ssize_t n = ::write(fd_, p, len);
      if (n <= 0) raise(ErrorCode::IoFailure, "log write failed");
      p += n;
      len -= n;
    }
  }

  std::string log_dir_;
  uint64_t segment_cap_;
  bool fsync_;
  int fd_ = -1;
  int sidecar_fd_ = -1;
  uint64_t seg_bytes_ = 0;
  Lsn next_lsn_ = 1;
  std::atomic<Lsn> written_{0};
  WrittenLsnBus bus_;
  std::vector<uint8_t> scratch_;
};

// Tailing reader gated by the written-LSN broadcast: it never reads past the
// published frontier, so it cannot observe a torn record while the writer is
// alive. A checksum failure halts the reader at the last valid LSN.
class LogReader {
 public:
  // `bus` may be null, in which case the sidecar file is polled.
  LogReader(const std::string& data_dir, WrittenLsnBus* bus, int poll_ms)
      : log_dir_(log_dir_of(data_dir)), bus_(bus), poll_ms_(poll_ms) {}

  void seek(Lsn start_lsn) {
    expect_ = start_lsn;
    cursor_.close();
    cur_seg_ = 0;
    skipping_ = true;
  }

  Lsn position() const { return expect_; }
  bool halted() const { return halted_; }
  Lsn gate() const { return gate_; }

  // Next entry in LSN order, waiting up to max_wait for the writer. Returns
  // nullopt on timeout or when halted by corruption (which also throws once).
  std::optional<RedoEntry> next(std::chrono::milliseconds max_wait) {
    if (halted_) return std::nullopt;
    auto deadline = std::chrono::steady_clock::now() + max_wait;
    while (true) {
      if (gate_ < expect_) refresh_gate();
      if (gate_ < expect_) {
        if (!wait_for_gate(deadline)) return std::nullopt;
        continue;
      }
      if (!cursor_.is_open() && !open_segment_for(expect_)) {
        if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
        continue;
      }
      std::optional<RedoEntry> e;
      try {
        e = cursor_.try_next();
      } catch (const Error&) {
        halted_ = true;
        throw;
      }
      if (!e) {
        // Segment exhausted though the gate promises more: the writer rolled.
        cursor_.close();
        continue;
      }
      if (skipping_ && e->lsn < expect_) continue;
      skipping_ = false;
      if (e->lsn != expect_) {
        halted_ = true;
        raise(ErrorCode::CorruptEntry,
              "lsn gap: expected " + std::to_string(expect_) + " found " +
                  std::to_string(e->lsn));
      }
      ++expect_;
      return e;
    }
  }

 private:
  void refresh_gate() {
    Lsn v = bus_ ? bus_->value() : read_written_sidecar(log_dir_);
    if (v > gate_) gate_ = v;
  }

  bool wait_for_gate(std::chrono::steady_clock::time_point deadline) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return false;
    auto budget =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
    if (bus_) {
      gate_ = bus_->wait_above(gate_, budget);
    } else {
      std::this_thread::sleep_for(
          std::min(budget, std::chrono::milliseconds(poll_ms_)));
      refresh_gate();
    }
    return gate_ >= expect_;
  }

  // Opens the segment containing `lsn`, positioning lazily via skip.
  bool open_segment_for(Lsn lsn) {
    std::vector<Lsn> starts = list_segments(log_dir_);
    Lsn pick = 0;
    for (Lsn s : starts)
      if (s <= lsn && s > pick) pick = s;
    if (pick == 0) return false;
    if (!cursor_.open(segment_path(log_dir_, pick))) return false;
    cur_seg_ = pick;
    skipping_ = true;
    return true;
  }

  std::string log_dir_;
  WrittenLsnBus* bus_;
  int poll_ms_;
  detail::SegmentCursor cursor_;
  Lsn cur_seg_ = 0;
  Lsn expect_ = 1;
  Lsn gate_ = 0;
  bool halted_ = false;
  bool skipping_ = false;
};

}  // namespace imci

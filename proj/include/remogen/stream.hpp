#pragma once

#include <condition_variable>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <optional>

#include "remogen/engine.hpp"

namespace remogen {

enum class RecordKind { kPartnerPose, kText, kAlpha, kEgoPose, kEnd };

struct StreamRecord {
  RecordKind kind = RecordKind::kPartnerPose;
  std::int64_t t = 0;
  std::vector<float> pose;
  std::string text;
  std::map<std::string, double> alpha;
};

// Throws FormatError on malformed input.
StreamRecord parse_record(std::string_view line);
nlohmann::json record_to_json(const StreamRecord& r);

// Fixed-capacity FIFO; push blocks while full, pop blocks while empty and
// returns nullopt once closed and drained.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
  }
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

inline constexpr std::size_t kStreamQueueCapacity = 64;

struct StreamStats {
  std::size_t partner_frames = 0;
  std::size_t ego_frames = 0;
  std::size_t skipped = 0;
  std::size_t segments = 0;
};

// Reads NDJSON records from `in` on an ingest thread, runs the engine on the
// calling thread and writes NDJSON records to `out`. Malformed lines are
// reported on `log`, skipped and counted. A partner pose of the wrong width
// is fatal (DimensionError).
StreamStats stream_run(std::istream& in, std::ostream& out, std::ostream& log, Engine& engine);

// Drops the timing field so transcripts can be compared.
std::string strip_timings(std::string_view transcript);

}  // namespace remogen

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>

namespace remogen::prof {

// Per-thread accumulator for wall time and call counts. Instrumented code
// reports into whichever profiler is installed on the calling thread; with
// none installed the hooks cost one thread-local load.
class Profiler {
 public:
  void add_time(const std::string& component, double seconds) { seconds_[component] += seconds; }
  void add_count(const std::string& component, std::int64_t n = 1) { counts_[component] += n; }

  double seconds(const std::string& component) const;
  std::int64_t count(const std::string& component) const;
  const std::map<std::string, double>& all_seconds() const { return seconds_; }
  const std::map<std::string, std::int64_t>& all_counts() const { return counts_; }
  void clear();

 private:
  std::map<std::string, double> seconds_;
  std::map<std::string, std::int64_t> counts_;
};

Profiler* active();

// Installs `p` as the calling thread's profiler for the lifetime of the guard.
class Install {
 public:
  explicit Install(Profiler& p);
  ~Install();
  Install(const Install&) = delete;
  Install& operator=(const Install&) = delete;

 private:
  Profiler* previous_;
};

class ScopedTimer {
 public:
  explicit ScopedTimer(const char* component)
      : component_(component), profiler_(active()), start_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    if (profiler_) {
      profiler_->add_time(component_,
                          std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    }
  }
  ScopedTimer(const ScopedTimer&) = delete;
  ScopedTimer& operator=(const ScopedTimer&) = delete;

 private:
  const char* component_;
  Profiler* profiler_;
  std::chrono::steady_clock::time_point start_;
};

inline void count(const char* component, std::int64_t n = 1) {
  if (Profiler* p = active()) p->add_count(component, n);
}

// Component names shared by the engine and the latency report.
inline constexpr const char* kDenoise = "denoise";
inline constexpr const char* kDenoiser = "denoiser";
inline constexpr const char* kMim = "mim";
inline constexpr const char* kDecode = "decode";
inline constexpr const char* kFwsr = "fwsr";
inline constexpr const char* kFwsrModule = "fwsr_module";
inline constexpr const char* kFwsrDecode = "fwsr_decode";
inline constexpr const char* kSensitivity = "sensitivity";
inline constexpr const char* kContext = "context";
inline constexpr const char* kPrePost = "prepost";

}  // namespace remogen::prof

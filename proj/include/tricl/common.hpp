// Shared basics: scalar type, error taxonomy, bounded parallel-for.
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tricl {

// All numerics run on `Real`. Tests and the reference configuration use the
// 64-bit build; define TRICL_REAL_FLOAT to trade precision for speed.
#ifdef TRICL_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

enum class ErrorKind {
  InvalidShape,
  InvalidLength,
  InvalidConfig,
  InvalidShift,
  InvalidStep,
  InvalidBatch,
  DegenerateBatch,
  DegenerateInput,
  DegenerateEmbedding,
  ContractViolation,
  PoisonedStep,
  UndefinedMetric,
  UnsupportedModality,
  DataIntegrity,
  Usage,
};

enum class Modality { Spectrogram, Waveform, Video };

inline char modality_tag(Modality m) {
  switch (m) {
    case Modality::Spectrogram: return 's';
    case Modality::Waveform: return 'w';
    case Modality::Video: return 'v';
  }
  return '?';
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

namespace runtime {

// Worker-thread budget for the heavy kernels. Work is always partitioned into
// disjoint output ranges, so results are bitwise identical for any value.
inline std::atomic<int>& thread_slot() {
  static std::atomic<int> n{1};
  return n;
}

inline int threads() { return thread_slot().load(std::memory_order_relaxed); }

inline void set_threads(int n) {
  if (n < 1) n = 1;
  thread_slot().store(n, std::memory_order_relaxed);
}

}  // namespace runtime

// Runs fn(begin, end) over disjoint chunks of [0, n). Chunk boundaries depend
// only on n and the thread budget, never on scheduling. The first exception
// thrown by any chunk is rethrown on the calling thread.
inline void parallel_for(std::int64_t n,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
  const int want = runtime::threads();
  if (n <= 0) return;
  if (want <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  const int workers = static_cast<int>(std::min<std::int64_t>(want, n));
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers) - 1);
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  auto guarded = [&fn, &errors](int slot, std::int64_t b, std::int64_t e) {
    try {
      fn(b, e);
    } catch (...) {
      errors[static_cast<size_t>(slot)] = std::current_exception();
    }
  };
  for (int w = 1; w < workers; ++w) {
    const std::int64_t b = w * chunk;
    const std::int64_t e = std::min<std::int64_t>(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&guarded, w, b, e] { guarded(w, b, e); });
  }
  guarded(0, 0, std::min<std::int64_t>(n, chunk));
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace tricl

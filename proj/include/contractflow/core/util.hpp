#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "contractflow/core/types.hpp"
#include "contractflow/error.hpp"

namespace contractflow {

// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Object keys are sorted by nlohmann::json, so dump() is canonical.
inline std::string digest(const Json& j) { return hex64(fnv1a(j.dump())); }

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() = 0;
};

// Monotone counter; every call returns the next tick. Used for reproducible traces.
class LogicalClock : public Clock {
 public:
  explicit LogicalClock(Timestamp start = 0) : next_(start) {}
  Timestamp now() override { return next_.fetch_add(1); }

 private:
  std::atomic<Timestamp> next_;
};

// Milliseconds since the Unix epoch.
class SystemClock : public Clock {
 public:
  Timestamp now() override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
};

inline void validate_task(const TaskEnvelope& task) {
  if (task.instruction.empty()) throw InvalidTask("instruction is empty");
  if (!task.context.is_object()) throw InvalidTask("context must be a key/value map");
}

}  // namespace contractflow

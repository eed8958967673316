#pragma once

// Runs an artifact in a forked child under an address-space limit and a wall
// clock. The child reports its result over a pipe; a child that overruns is
// killed with SIGKILL.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <string>

#include "contractflow/runtime/artifact.hpp"

namespace contractflow {

struct ResourceLimits {
  int wall_ms = 2000;
  std::size_t memory_mb = 256;  // on top of the address space inherited at fork
  friend bool operator==(const ResourceLimits&, const ResourceLimits&) = default;
};

inline void to_json(Json& j, const ResourceLimits& r) { j = Json{{"wall_ms", r.wall_ms}, {"memory_mb", r.memory_mb}}; }
inline void from_json(const Json& j, ResourceLimits& r) {
  r.wall_ms = j.value("wall_ms", 2000);
  r.memory_mb = j.value("memory_mb", std::size_t{256});
}

enum class Isolation { kProcess, kInProcess };

namespace detail {

inline void write_all(int fd, const char* p, std::size_t n) {
  while (n > 0) {
    const auto w = ::write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      return;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

inline std::size_t current_vm_bytes() {
  std::ifstream statm("/proc/self/statm");
  std::size_t pages = 0;
  statm >> pages;
  return pages * static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
}

[[noreturn]] inline void child_main(int fd, const Artifact& a, const Record& input, const ResourceLimits& lim) {
  const rlim_t cap = static_cast<rlim_t>(current_vm_bytes() + (lim.memory_mb << 20));
  rlimit r{cap, cap};
  ::setrlimit(RLIMIT_AS, &r);
  static const char kOom[] = R"({"ok":false,"kind":"memory","error":"memory limit exceeded"})";
  try {
    const auto payload = Json{{"ok", true}, {"output", run_artifact(a, input)}}.dump();
    write_all(fd, payload.data(), payload.size());
  } catch (const std::bad_alloc&) {
    write_all(fd, kOom, sizeof kOom - 1);
  } catch (const Error& e) {
    try {
      std::string msg = e.what();
      if (msg.rfind(e.code() + ": ", 0) == 0) msg.erase(0, e.code().size() + 2);
      const auto payload = Json{{"ok", false}, {"kind", e.code()}, {"error", msg}}.dump();
      write_all(fd, payload.data(), payload.size());
    } catch (...) {
      write_all(fd, kOom, sizeof kOom - 1);
    }
  } catch (const std::exception& e) {
    try {
      const auto payload = Json{{"ok", false}, {"kind", "exception"}, {"error", e.what()}}.dump();
      write_all(fd, payload.data(), payload.size());
    } catch (...) {
      write_all(fd, kOom, sizeof kOom - 1);
    }
  }
  ::_exit(0);
}

}  // namespace detail

inline Record run_isolated(const Artifact& a, const Record& input, const ResourceLimits& lim,
                           Isolation mode = Isolation::kProcess) {
  if (mode == Isolation::kInProcess) return run_artifact(a, input);
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw ExecutionError(std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw ExecutionError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::close(fds[0]);
    detail::child_main(fds[1], a, input, lim);
  }
  ::close(fds[1]);

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(lim.wall_ms);
  std::string payload;
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::ceil<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) {
      timed_out = true;
      break;
    }
    pollfd p{fds[0], POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(left));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) {
      timed_out = true;
      break;
    }
    const auto n = ::read(fds[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    payload.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fds[0]);
  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) throw SandboxViolation("wall time limit of " + std::to_string(lim.wall_ms) + " ms exceeded");
  if (WIFSIGNALED(status)) throw SandboxViolation("tool process terminated by signal " + std::to_string(WTERMSIG(status)));
  Json reply;
  try {
    reply = Json::parse(payload);
  } catch (const Json::exception&) {
    throw SandboxViolation("tool process exited without a result");
  }
  if (reply.value("ok", false)) return reply.at("output");
  const auto kind = reply.value("kind", std::string{});
  const auto error = reply.value("error", std::string{"tool failed"});
  if (kind == "memory") throw SandboxViolation(error);
  if (kind == "ParseError") throw ParseError(error);
  throw ExecutionError(error);
}

}  // namespace contractflow

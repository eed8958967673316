#pragma once

// Implementations behind registered tool cards, run through the sandbox.

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "contractflow/negotiation.hpp"
#include "contractflow/runtime/sandbox.hpp"

namespace contractflow {

class ToolRuntime {
 public:
  explicit ToolRuntime(ResourceLimits limits = {}, Isolation isolation = Isolation::kProcess)
      : limits_(limits), isolation_(isolation) {}

  void install(const std::string& tool_id, Artifact a) {
    std::lock_guard lock(mu_);
    artifacts_[tool_id] = std::move(a);
  }

  bool has(const std::string& tool_id) const {
    std::lock_guard lock(mu_);
    return artifacts_.count(tool_id) > 0;
  }

  Artifact artifact(const std::string& tool_id) const {
    std::lock_guard lock(mu_);
    auto it = artifacts_.find(tool_id);
    if (it == artifacts_.end()) throw UnknownTool("no implementation installed for '" + tool_id + "'");
    return it->second;
  }

  Record invoke(const ToolCard& card, const Record& input) const {
    return run_isolated(artifact(card.id), input, limits_, isolation_);
  }

  ToolInvoker invoker() const {
    return [this](const ToolCard& card, const Record& input) { return invoke(card, input); };
  }

  const ResourceLimits& limits() const { return limits_; }
  Isolation isolation() const { return isolation_; }

  // Installs every <id>.artifact.json in a directory under its tool id.
  std::size_t load_dir(const std::filesystem::path& dir) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      const std::string suffix = ".artifact.json";
      if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
      auto a = load_artifact(e.path());
      install(name.substr(0, name.size() - suffix.size()), std::move(a));
      ++n;
    }
    return n;
  }

 private:
  ResourceLimits limits_;
  Isolation isolation_;
  mutable std::mutex mu_;
  std::map<std::string, Artifact> artifacts_;
};

}  // namespace contractflow

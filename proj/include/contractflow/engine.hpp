#pragma once

// Wires hub, runtime, maker and executor together for a task workspace:
//
//   <dir>/task.json        TaskEnvelope
//   <dir>/plan.json        PlanSpec
//   <dir>/contracts.json   NeedContracts (optional; missing nodes get derive_contract)
//   <dir>/eval.json        EvalSpec (optional)
//   <dir>/tools/           <id>.json cards and <id>.artifact.json implementations

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "contractflow/core/plan.hpp"
#include "contractflow/executor.hpp"
#include "contractflow/metrics.hpp"
#include "contractflow/router.hpp"

namespace contractflow {

// Accepts a list, {"contracts": [...]}, or a node-id keyed object.
inline std::map<std::string, NeedContract> contracts_for(const PlanSpec& plan, const Json& j) {
  std::map<std::string, NeedContract> out;
  auto add = [&](NeedContract c, const std::string& key) {
    if (c.node_id.empty()) c.node_id = key;
    if (c.id.empty()) c.id = c.node_id;
    if (!plan.find(c.node_id)) throw InvalidValue("contract '" + c.id + "' names unknown node '" + c.node_id + "'");
    if (!out.emplace(c.node_id, c).second) throw DuplicateId("two contracts for node '" + c.node_id + "'");
  };
  const Json& list = j.is_object() && j.contains("contracts") ? j.at("contracts") : j;
  if (list.is_array()) {
    for (const auto& c : list) add(c.get<NeedContract>(), {});
  } else if (list.is_object()) {
    for (auto it = list.begin(); it != list.end(); ++it) add(it.value().get<NeedContract>(), it.key());
  } else if (!list.is_null()) {
    throw ParseError("contracts must be a list or an object");
  }
  for (const auto& n : plan.nodes)
    if (!out.count(n.id)) out.emplace(n.id, derive_contract(n));
  return out;
}

struct Workspace {
  TaskEnvelope task;
  PlanSpec plan;
  std::map<std::string, NeedContract> contracts;
  EvalSpec eval;
  std::optional<std::filesystem::path> tools_dir;
};

inline Workspace load_workspace(const std::filesystem::path& dir) {
  Workspace w;
  w.task = load_document<TaskEnvelope>((dir / "task.json").string());
  w.plan = load_document<PlanSpec>((dir / "plan.json").string());
  const auto contracts = dir / "contracts.json";
  w.contracts = contracts_for(w.plan, std::filesystem::exists(contracts) ? load_json_file(contracts.string()) : Json());
  if (const auto eval = dir / "eval.json"; std::filesystem::exists(eval)) w.eval = load_document<EvalSpec>(eval.string());
  if (const auto tools = dir / "tools"; std::filesystem::is_directory(tools)) w.tools_dir = tools;
  return w;
}

struct EngineOptions {
  ExecutionPolicy policy;
  MakerOptions maker;
  ResourceLimits tool_limits;
  Isolation isolation = Isolation::kProcess;
  std::shared_ptr<Embedder> embedder;
};

struct RunOutput {
  RouteDecision route;
  ExecutionResult result;
  MetricReport metrics;
  MakerReport maker;
};

inline void to_json(Json& j, const RunOutput& r) {
  j = Json{{"route", r.route},
           {"status", to_string(r.result.trace.status)},
           {"failed_nodes", r.result.failed_nodes},
           {"skipped_nodes", r.result.skipped_nodes},
           {"deliverable", r.result.deliverable},
           {"metrics", r.metrics}};
}

class Engine {
 public:
  explicit Engine(EngineOptions opt = {}, MakerBackend* backend = nullptr)
      : opt_(std::move(opt)),
        hub_(opt_.embedder ? opt_.embedder : std::make_shared<HashEmbedder>(64)),
        runtime_(opt_.tool_limits, opt_.isolation),
        maker_(hub_, runtime_, backend ? *backend : template_, opt_.maker) {}

  ToolHub& hub() { return hub_; }
  ToolRuntime& runtime() { return runtime_; }
  ToolMaker& maker() { return maker_; }

  void load_tools(const std::filesystem::path& dir) {
    hub_.register_cards(ToolHub::load_cards(dir));
    runtime_.load_dir(dir);
  }

  RunOutput run(const TaskEnvelope& task, const PlanSpec& plan, const std::map<std::string, NeedContract>& contracts,
                const EvalSpec& eval) {
    validate_task(task);
    RunOutput out;
    out.route = route(task, RoutePolicy{});
    LogicalClock clock;
    Executor ex(hub_, runtime_.invoker(), opt_.policy.allow_toolmaker ? &maker_ : nullptr, opt_.policy, &clock);
    out.result = ex.run(plan, contracts, task.context);
    out.metrics = compute_metrics(out.result.deliverable, out.result.trace, eval);
    out.maker = maker_.report();
    return out;
  }

  RunOutput run(const Workspace& w) {
    if (w.tools_dir) load_tools(*w.tools_dir);
    return run(w.task, w.plan, w.contracts, w.eval);
  }

 private:
  EngineOptions opt_;
  TemplateMaker template_;
  ToolHub hub_;
  ToolRuntime runtime_;
  ToolMaker maker_;
};

}  // namespace contractflow

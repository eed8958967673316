#pragma once

// Plan execution. Each node negotiates a tool for its contract, runs it, and
// verifies the output. Failures walk a fixed ladder: retries on the first
// candidate, one attempt on each alternate, one attempt on a ToolMaker tool.
// A node that exhausts the ladder fails and its descendants are skipped.

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "contractflow/core/constraints.hpp"
#include "contractflow/core/plan.hpp"
#include "contractflow/core/text.hpp"
#include "contractflow/core/util.hpp"
#include "contractflow/negotiation.hpp"
#include "contractflow/toolmaker.hpp"

namespace contractflow {

class PlanFailed : public Error {
 public:
  explicit PlanFailed(std::vector<std::string> nodes)
      : Error("PlanFailed", "failed nodes: " + join(nodes)), nodes_(std::move(nodes)) {}
  const std::vector<std::string>& nodes() const { return nodes_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  }
  std::vector<std::string> nodes_;
};

struct ExecutionPolicy {
  int max_retries_per_node = 2;
  bool allow_toolmaker = true;
  bool parallel = false;
  std::size_t workers = 4;
  NegotiationOptions negotiation;
};

inline void to_json(Json& j, const ExecutionPolicy& p) {
  j = Json{{"max_retries_per_node", p.max_retries_per_node}, {"allow_toolmaker", p.allow_toolmaker},
           {"parallel", p.parallel}, {"workers", p.workers}};
}
inline void from_json(const Json& j, ExecutionPolicy& p) {
  p.max_retries_per_node = j.value("max_retries_per_node", 2);
  p.allow_toolmaker = j.value("allow_toolmaker", true);
  p.parallel = j.value("parallel", false);
  p.workers = j.value("workers", std::size_t{4});
  if (p.max_retries_per_node < 0) throw InvalidValue("max_retries_per_node must be >= 0");
}

struct EvidenceBundle {
  std::vector<EvidenceEntry> entries;

  const EvidenceEntry* find(std::string_view claim) const {
    for (const auto& e : entries)
      if (e.claim_field == claim) return &e;
    return nullptr;
  }
};

inline void to_json(Json& j, const EvidenceBundle& b) { j = Json{{"entries", b.entries}}; }

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

// Schema conformance, then every quality criterion, then every constraint.
// Criteria see the input overlaid with the output. The list is always complete.
inline std::vector<CheckResult> verify_step(const Record& output, const NeedContract& contract,
                                            const Record& input = Record::object()) {
  auto checks = schema_checks(output, contract.output_schema);
  Record view = input.is_object() ? input : Record::object();
  if (output.is_object())
    for (const auto& [k, v] : output.items()) view[k] = v;
  for (std::size_t i = 0; i < contract.quality.size(); ++i)
    checks.push_back(evaluate(contract.quality[i], view, "quality[" + std::to_string(i) + "]"));
  for (std::size_t i = 0; i < contract.constraints.size(); ++i)
    checks.push_back(evaluate(contract.constraints[i], view, "constraint[" + std::to_string(i) + "]"));
  return checks;
}

// Not-evaluable checks are neutral; a missing required field already fails its schema check.
inline bool checks_pass(const std::vector<CheckResult>& checks) {
  return std::none_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.verdict == Verdict::kFail; });
}

// ---------------------------------------------------------------------------
// Contracts and bindings
// ---------------------------------------------------------------------------

// Default contract for a node: its goal as the capability, its schemas verbatim.
inline NeedContract derive_contract(const PlanNode& node) {
  NeedContract c;
  c.id = c.node_id = node.id;
  c.capability = {slug(node.goal).empty() ? node.id : slug(node.goal), node.goal};
  c.input_schema = node.inputs;
  c.output_schema = node.outputs;
  c.constraints = node.constraints;
  return c;
}

struct Binding {
  Record values = Record::object();
  std::map<std::string, std::string> sources;  // field -> step id or "context"
};

struct NodeOutput {
  std::string step_id;
  Record output;
};

// Direct predecessors first (by id), then further ancestors, then the task context.
inline Binding bind_inputs(const NeedContract& contract, const PlanGraph& graph, const std::string& node_id,
                           const std::map<std::string, NodeOutput>& done, const Json& context) {
  std::vector<std::string> order(graph.predecessors(node_id).begin(), graph.predecessors(node_id).end());
  for (const auto& a : graph.ancestors(node_id))
    if (!graph.predecessors(node_id).count(a)) order.push_back(a);
  Binding b;
  for (const auto& f : contract.input_schema.fields) {
    bool bound = false;
    for (const auto& up : order) {
      auto it = done.find(up);
      if (it == done.end() || !it->second.output.contains(f.name)) continue;
      const auto& v = it->second.output.at(f.name);
      if (v.is_null() || !conforms(v, f.type)) continue;
      b.values[f.name] = v;
      b.sources[f.name] = it->second.step_id;
      bound = true;
      break;
    }
    if (!bound && context.is_object() && context.contains(f.name) && conforms(context.at(f.name), f.type)) {
      b.values[f.name] = context.at(f.name);
      b.sources[f.name] = "context";
      bound = true;
    }
    if (!bound && f.required)
      throw UnbindableInput("node '" + node_id + "': no upstream output or context value for '" + f.name + "'");
  }
  return b;
}

// ---------------------------------------------------------------------------
// Evidence
// ---------------------------------------------------------------------------

namespace detail {

// Last successful step of each node.
inline std::map<std::string, const StepRecord*> final_steps(const ExecutionTrace& trace) {
  std::map<std::string, const StepRecord*> out;
  for (const auto& s : trace.steps)
    if (s.succeeded) out[s.node_id] = &s;
  return out;
}

inline EvidenceEntry lineage(const ExecutionTrace& trace, const StepRecord& claimant, const std::string& claim) {
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) position[trace.steps[i].step_id] = i;
  std::set<std::string> seen{claimant.step_id};
  std::vector<const StepRecord*> work{&claimant};
  bool from_context = false;
  while (!work.empty()) {
    const auto* s = work.back();
    work.pop_back();
    for (const auto& [field, src] : s->input_sources) {
      if (src == "context") {
        from_context = true;
        continue;
      }
      const auto* up = trace.find(src);
      if (!up) throw OrphanClaim("claim '" + claim + "': step '" + s->step_id + "' cites unknown step '" + src + "'");
      if (seen.insert(src).second) work.push_back(up);
    }
  }
  std::vector<std::string> path(seen.begin(), seen.end());
  std::sort(path.begin(), path.end(), [&](const auto& a, const auto& b) { return position.at(a) < position.at(b); });
  EvidenceEntry e{claim, path, {}};
  for (const auto& id : path) {
    const auto& tool = trace.find(id)->tool_id;
    if (std::find(e.source_ids.begin(), e.source_ids.end(), tool) == e.source_ids.end()) e.source_ids.push_back(tool);
  }
  if (from_context) e.source_ids.push_back("context");
  return e;
}

}  // namespace detail

// Claims are the declared outputs of terminal nodes that completed. Each claim
// carries every step its producing step transitively consumed, in trace order.
inline EvidenceBundle aggregate_evidence(const ExecutionTrace& trace, const PlanSpec& plan) {
  EvidenceBundle b;
  const auto finals = detail::final_steps(trace);
  std::set<std::string> claimed;
  for (const auto& id : terminal_nodes(plan)) {
    auto it = finals.find(id);
    if (it == finals.end()) continue;
    for (const auto& f : plan.find(id)->outputs.fields) {
      if (!it->second->output_record.contains(f.name) || !claimed.insert(f.name).second) continue;
      b.entries.push_back(detail::lineage(trace, *it->second, f.name));
    }
  }
  return b;
}

// Same, but every field of `claims` must have an entry.
inline EvidenceBundle aggregate_evidence(const ExecutionTrace& trace, const PlanSpec& plan, const Record& claims) {
  auto b = aggregate_evidence(trace, plan);
  for (const auto& [k, v] : claims.items())
    if (!b.find(k)) throw OrphanClaim("deliverable field '" + k + "' has no producing step");
  return b;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct ExecutionResult {
  Deliverable deliverable;
  ExecutionTrace trace;
  EvidenceBundle evidence;
  std::vector<std::string> failed_nodes;
  std::vector<std::string> skipped_nodes;
  std::map<std::string, std::string> node_errors;
  std::vector<SessionRecord> transcript;
  std::vector<MakerRun> maker_runs;

  bool ok() const { return failed_nodes.empty(); }
  void raise_if_failed() const {
    if (!ok()) throw PlanFailed(failed_nodes);
  }
};

class Executor {
 public:
  Executor(ToolHub& hub, ToolInvoker invoke, ToolMaker* maker = nullptr, ExecutionPolicy policy = {},
           Clock* clock = nullptr)
      : hub_(hub), invoke_(std::move(invoke)), maker_(maker), policy_(policy), clock_(clock),
        negotiator_(hub, policy.negotiation) {
    if (policy_.max_retries_per_node < 0) throw InvalidValue("max_retries_per_node must be >= 0");
  }

  ExecutionResult run(const PlanSpec& plan, const std::map<std::string, NeedContract>& contracts,
                      const Json& context = Json::object()) {
    if (auto report = validate_plan(plan, context); !report.valid())
      throw InvalidPlan(report.violations.front().message);
    for (const auto& n : plan.nodes)
      if (!contracts.count(n.id)) throw InvalidPlan("node '" + n.id + "' has no contract");

    LogicalClock fallback;
    Clock& clock = clock_ ? *clock_ : fallback;
    const PlanGraph graph(plan);
    const auto order = topological_order(plan);
    State st;
    for (const auto& id : order) st.status[id] = NodeStatus::kPending;

    auto process = [&](const std::string& id) {
      bool skip = false;
      std::map<std::string, NodeOutput> done;
      {
        std::lock_guard lock(st.mu);
        for (const auto& p : graph.predecessors(id))
          if (st.status.at(p) != NodeStatus::kCompleted) skip = true;
        done = st.outputs;
      }
      NodeRun r;
      if (skip) r.status = NodeStatus::kSkipped;
      else r = run_node(id, contracts.at(id), graph, done, context, clock);
      std::lock_guard lock(st.mu);
      st.status[id] = r.status;
      for (auto& s : r.steps) st.steps.push_back(std::move(s));
      if (r.status == NodeStatus::kCompleted) st.outputs[id] = {r.step_id, r.output};
      if (!r.error.empty()) st.errors[id] = r.error;
      st.transcripts[id] = std::move(r.transcript);
      if (r.maker) st.maker_runs[id] = std::move(*r.maker);
    };

    if (policy_.parallel) run_parallel(graph, order, process);
    else
      for (const auto& id : order) process(id);

    return assemble(plan, order, st);
  }

 private:
  struct State {
    std::mutex mu;
    std::map<std::string, NodeStatus> status;
    std::map<std::string, NodeOutput> outputs;
    std::map<std::string, std::string> errors;
    std::vector<StepRecord> steps;
    std::map<std::string, std::vector<SessionRecord>> transcripts;
    std::map<std::string, MakerRun> maker_runs;
  };

  struct NodeRun {
    NodeStatus status = NodeStatus::kFailed;
    std::vector<StepRecord> steps;
    std::string step_id;
    Record output;
    std::string error;
    std::vector<SessionRecord> transcript;
    std::optional<MakerRun> maker;
  };

  template <typename F>
  void run_parallel(const PlanGraph& graph, const std::vector<std::string>& order, F& process) {
    std::mutex mu;
    std::condition_variable cv;
    std::map<std::string, std::size_t> waiting;
    std::deque<std::string> ready;
    std::size_t finished = 0;
    for (const auto& id : order) {
      waiting[id] = graph.predecessors(id).size();
      if (waiting[id] == 0) ready.push_back(id);
    }
    auto worker = [&] {
      for (;;) {
        std::string id;
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [&] { return !ready.empty() || finished == order.size(); });
          if (ready.empty()) return;
          id = ready.front();
          ready.pop_front();
        }
        process(id);
        std::lock_guard lock(mu);
        ++finished;
        for (const auto& w : graph.successors(id))
          if (--waiting[w] == 0) ready.push_back(w);
        cv.notify_all();
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < std::max<std::size_t>(1, policy_.workers); ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  NodeRun run_node(const std::string& id, const NeedContract& contract, const PlanGraph& graph,
                   const std::map<std::string, NodeOutput>& done, const Json& context, Clock& clock) {
    NodeRun r;
    Binding binding;
    try {
      binding = bind_inputs(contract, graph, id, done, context);
    } catch (const UnbindableInput& e) {
      r.error = e.what();
      return r;
    }

    int attempt = 0;
    std::string last_error;
    auto attempt_with = [&](NegotiationSession& s, AttemptPhase phase) {
      ++attempt;
      const auto tools = s.selected_candidate().tools;
      std::size_t pos = 0;
      auto sources = binding.sources;
      ToolInvoker wrapped = [&](const ToolCard& card, const Record& in) {
        StepRecord st;
        st.step_id = id + "#" + std::to_string(attempt) + (tools.size() > 1 ? "." + std::to_string(pos + 1) : "");
        st.node_id = id;
        st.contract_id = contract.id;
        st.tool_id = card.id;
        st.session_id = s.id();
        st.input_record = in;
        st.input_digest = digest(in);
        for (const auto& [k, v] : in.items())
          if (auto it = sources.find(k); it != sources.end()) st.input_sources[k] = it->second;
        st.phase = phase;
        st.attempt_index = attempt;
        st.started_at = clock.now();
        auto finish = [&](std::string error) {
          st.error = std::move(error);
          st.succeeded = st.error.empty();
          st.ended_at = clock.now();
          r.steps.push_back(st);
        };
        Record out;
        try {
          out = invoke_(card, in);
          if (!out.is_object()) throw ExecutionError("tool '" + card.id + "' returned a non-object record");
        } catch (const std::exception& e) {
          finish(e.what());
          throw;
        }
        st.output_record = out;
        if (pos + 1 == tools.size()) {
          st.validation = verify_step(out, contract, binding.values);
          if (!checks_pass(st.validation)) {
            std::string failed;
            for (const auto& c : st.validation)
              if (c.verdict == Verdict::kFail) failed += (failed.empty() ? "" : ", ") + c.check;
            const std::string msg = "ExecutionError: verification failed: " + failed;
            finish(msg);
            throw ExecutionError("verification failed: " + failed);
          }
        }
        finish({});
        for (const auto& [k, v] : out.items()) sources[k] = st.step_id;
        ++pos;
        return out;
      };
      negotiator_.execute_confirmed(s, wrapped);
      if (s.state() == SessionState::kCompleted) {
        r.status = NodeStatus::kCompleted;
        r.step_id = r.steps.back().step_id;
        r.output = *s.output();
        return true;
      }
      last_error = s.failure().value_or("execution failed");
      return false;
    };

    auto confirm = [&](NegotiationSession& s) {
      try {
        negotiator_.confirm_contract(s, binding.values);
      } catch (const ContractRejected& e) {
        last_error = e.what();
        return false;
      }
      if (s.state() != SessionState::kContractConfirmed) {
        last_error = "ContractRejected: inputs requested for " + id;
        return false;
      }
      return true;
    };

    std::vector<NegotiationSession> sessions;
    sessions.push_back(negotiator_.declare_need(contract, id + "/s1"));
    bool ok = false;
    {
      auto& s = sessions.back();
      if (s.state() == SessionState::kFailed) last_error = s.failure().value_or("no candidates");
      bool executed = false;
      for (std::size_t i = 0; i < s.candidates().size() && !ok; ++i) {
        if (s.state() == SessionState::kFailed) negotiator_.switch_candidate(s, i);
        else negotiator_.select(s, i);
        if (!confirm(s)) continue;
        if (!executed) {
          executed = true;
          ok = attempt_with(s, AttemptPhase::kInitial);
          for (int k = 0; k < policy_.max_retries_per_node && !ok; ++k) {
            negotiator_.retry(s);
            ok = attempt_with(s, AttemptPhase::kRetry);
          }
        } else {
          ok = attempt_with(s, AttemptPhase::kCandidateSwitch);
        }
      }
    }

    if (!ok && policy_.allow_toolmaker && maker_) {
      try {
        r.maker = maker_->make_and_register(contract);
      } catch (const Error& e) {
        MakerRun failed;
        failed.contract_id = contract.id;
        failed.failure = e.what();
        r.maker = failed;
      }
      if (r.maker->succeeded()) {
        sessions.push_back(negotiator_.declare_need(contract, id + "/s2"));
        auto& s = sessions.back();
        const auto& cands = s.candidates();
        auto it = std::find_if(cands.begin(), cands.end(),
                               [&](const SessionCandidate& c) { return c.tools == std::vector<std::string>{*r.maker->tool_id}; });
        if (it == cands.end()) {
          last_error = "NoCandidates: generated tool '" + *r.maker->tool_id + "' was not proposed";
        } else {
          negotiator_.select(s, static_cast<std::size_t>(it - cands.begin()));
          if (confirm(s)) ok = attempt_with(s, AttemptPhase::kToolMaker);
        }
      } else {
        last_error = r.maker->failure;
      }
    }

    for (const auto& s : sessions)
      r.transcript.insert(r.transcript.end(), s.transcript().begin(), s.transcript().end());
    if (!ok) {
      r.status = NodeStatus::kFailed;
      r.error = last_error;
    }
    return r;
  }

  ExecutionResult assemble(const PlanSpec& plan, const std::vector<std::string>& order, State& st) {
    ExecutionResult res;
    res.trace.steps = std::move(st.steps);
    res.trace.node_status = st.status;
    res.node_errors = st.errors;
    for (const auto& id : order) {
      if (st.status[id] == NodeStatus::kFailed) res.failed_nodes.push_back(id);
      if (st.status[id] == NodeStatus::kSkipped) res.skipped_nodes.push_back(id);
      auto& t = st.transcripts[id];
      res.transcript.insert(res.transcript.end(), t.begin(), t.end());
      if (auto it = st.maker_runs.find(id); it != st.maker_runs.end()) res.maker_runs.push_back(it->second);
    }

    auto& d = res.deliverable;
    std::vector<std::string> lines;
    std::size_t terminals_done = 0;
    const auto terminals = terminal_nodes(plan);
    for (const auto& id : order) {
      if (std::find(terminals.begin(), terminals.end(), id) == terminals.end()) continue;
      auto it = st.outputs.find(id);
      if (it == st.outputs.end()) continue;
      ++terminals_done;
      std::string line = plan.find(id)->goal + ":";
      for (const auto& f : plan.find(id)->outputs.fields) {
        if (!it->second.output.contains(f.name) || d.structured.contains(f.name)) continue;
        d.structured[f.name] = it->second.output.at(f.name);
        line += " " + f.name + "=" + detail::scalar_text(it->second.output.at(f.name));
      }
      lines.push_back(line);
    }
    std::set<std::string> rules;
    for (const auto& [id, out] : st.outputs)
      if (out.output.contains("rule_citations") && out.output.at("rule_citations").is_array())
        for (const auto& r : out.output.at("rule_citations"))
          if (r.is_string()) rules.insert(r.get<std::string>());
    d.rule_citations.assign(rules.begin(), rules.end());
    d.answer = "Completed " + std::to_string(order.size() - res.failed_nodes.size() - res.skipped_nodes.size()) + " of " +
               std::to_string(order.size()) + " steps.";
    for (const auto& l : lines) d.answer += "\n" + l;

    res.evidence = aggregate_evidence(res.trace, plan, d.structured);
    d.evidence = res.evidence.entries;
    if (res.failed_nodes.empty() && res.skipped_nodes.empty()) res.trace.status = TraceStatus::kComplete;
    else res.trace.status = terminals_done > 0 ? TraceStatus::kPartial : TraceStatus::kFailed;
    return res;
  }

  ToolHub& hub_;
  ToolInvoker invoke_;
  ToolMaker* maker_;
  ExecutionPolicy policy_;
  Clock* clock_;
  Negotiator negotiator_;
};

inline ExecutionResult execute_plan(const PlanSpec& plan, const std::map<std::string, NeedContract>& contracts,
                                    ToolHub& hub, const ExecutionPolicy& policy, const ToolInvoker& invoke,
                                    ToolMaker* maker = nullptr, const Json& context = Json::object(),
                                    Clock* clock = nullptr) {
  return Executor(hub, invoke, maker, policy, clock).run(plan, contracts, context);
}

}  // namespace contractflow

#pragma once

// Plan generation by several supervisors and critique/defend/revise rounds
// over an edit calculus that never leaves a plan invalid.

#include <algorithm>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "contractflow/core/plan.hpp"
#include "contractflow/core/serialize.hpp"
#include "contractflow/core/util.hpp"
#include "contractflow/shell/provider.hpp"

namespace contractflow {

// ---------------------------------------------------------------------------
// Edits
// ---------------------------------------------------------------------------

struct InsertEdit {
  PlanNode node;
  std::vector<std::string> incoming;  // predecessors: edges p -> node
  std::vector<std::string> outgoing;  // successors: edges node -> s
};

// Swaps node content in place. A different id in `node` renames the node and
// every incident edge follows it.
struct ReplaceEdit {
  std::string target;
  PlanNode node;
};

// before: every former predecessor of target now feeds `before`, which feeds
// target. after: target feeds `after`, which feeds every former successor.
struct WrapEdit {
  std::string target;
  std::optional<PlanNode> before;
  std::optional<PlanNode> after;
};

struct RemoveEdit {
  std::string target;
  bool reconnect = false;  // add pred -> succ edges for every pair
};

struct Edit {
  std::variant<InsertEdit, ReplaceEdit, WrapEdit, RemoveEdit> op;
};

inline std::string edit_name(const Edit& e) {
  static const char* names[] = {"insert", "replace", "wrap", "remove"};
  return names[e.op.index()];
}

inline void to_json(Json& j, const Edit& e) {
  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, InsertEdit>) {
          j = Json{{"op", "insert"}, {"node", op.node}, {"incoming", op.incoming}, {"outgoing", op.outgoing}};
        } else if constexpr (std::is_same_v<T, ReplaceEdit>) {
          j = Json{{"op", "replace"}, {"target", op.target}, {"node", op.node}};
        } else if constexpr (std::is_same_v<T, WrapEdit>) {
          j = Json{{"op", "wrap"}, {"target", op.target}};
          if (op.before) j["before"] = *op.before;
          if (op.after) j["after"] = *op.after;
        } else {
          j = Json{{"op", "remove"}, {"target", op.target}, {"reconnect", op.reconnect}};
        }
      },
      e.op);
}

inline void from_json(const Json& j, Edit& e) {
  const auto op = detail::require(j, "op").get<std::string>();
  if (op == "insert") {
    e.op = InsertEdit{detail::require(j, "node").get<PlanNode>(), detail::get_or(j, "incoming", std::vector<std::string>{}),
                      detail::get_or(j, "outgoing", std::vector<std::string>{})};
  } else if (op == "replace") {
    e.op = ReplaceEdit{detail::require(j, "target").get<std::string>(), detail::require(j, "node").get<PlanNode>()};
  } else if (op == "wrap") {
    WrapEdit w{detail::require(j, "target").get<std::string>(), std::nullopt, std::nullopt};
    if (j.contains("before") && !j.at("before").is_null()) w.before = j.at("before").get<PlanNode>();
    if (j.contains("after") && !j.at("after").is_null()) w.after = j.at("after").get<PlanNode>();
    if (!w.before && !w.after) throw ParseError("wrap edit needs a before or after node");
    e.op = std::move(w);
  } else if (op == "remove") {
    e.op = RemoveEdit{detail::require(j, "target").get<std::string>(), detail::get_or(j, "reconnect", false)};
  } else {
    throw ParseError("unknown edit op '" + op + "'");
  }
}

struct EditResult {
  PlanSpec plan;  // edited plan when accepted, the untouched input otherwise
  bool accepted = false;
  std::string reason;
  ValidationReport report;  // of the edited graph
};

// Edges sorted and de-duplicated; node order is kept.
inline void normalize_edges(PlanSpec& p) {
  std::sort(p.edges.begin(), p.edges.end());
  p.edges.erase(std::unique(p.edges.begin(), p.edges.end()), p.edges.end());
}

namespace detail {

inline std::ptrdiff_t node_index(const PlanSpec& p, const std::string& id) {
  for (std::size_t i = 0; i < p.nodes.size(); ++i)
    if (p.nodes[i].id == id) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

// Applies the edit structurally; returns a reason string when the edit
// references something that does not exist or collides.
inline std::string apply_raw(PlanSpec& p, const Edit& edit) {
  auto has = [&](const std::string& id) { return node_index(p, id) >= 0; };
  return std::visit(
      [&](const auto& op) -> std::string {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, InsertEdit>) {
          if (has(op.node.id)) return "duplicate-id: node '" + op.node.id + "' already exists";
          for (const auto& n : op.incoming)
            if (!has(n)) return "dangling-edge: unknown predecessor '" + n + "'";
          for (const auto& n : op.outgoing)
            if (!has(n)) return "dangling-edge: unknown successor '" + n + "'";
          p.nodes.push_back(op.node);
          for (const auto& n : op.incoming) p.edges.push_back({n, op.node.id});
          for (const auto& n : op.outgoing) p.edges.push_back({op.node.id, n});
        } else if constexpr (std::is_same_v<T, ReplaceEdit>) {
          const auto i = node_index(p, op.target);
          if (i < 0) return "dangling-edge: unknown replace target '" + op.target + "'";
          if (op.node.id != op.target && has(op.node.id)) return "duplicate-id: node '" + op.node.id + "' already exists";
          p.nodes[static_cast<std::size_t>(i)] = op.node;
          for (auto& e : p.edges) {
            if (e.from == op.target) e.from = op.node.id;
            if (e.to == op.target) e.to = op.node.id;
          }
        } else if constexpr (std::is_same_v<T, WrapEdit>) {
          const auto i = node_index(p, op.target);
          if (i < 0) return "dangling-edge: unknown wrap target '" + op.target + "'";
          if (!op.before && !op.after) return "wrap needs a before or after node";
          if (op.before && op.after && op.before->id == op.after->id) return "duplicate-id: before and after share an id";
          for (const auto* n : {op.before ? &*op.before : nullptr, op.after ? &*op.after : nullptr})
            if (n && has(n->id)) return "duplicate-id: node '" + n->id + "' already exists";
          std::vector<PlanNode> nodes;
          for (std::size_t k = 0; k < p.nodes.size(); ++k) {
            if (static_cast<std::ptrdiff_t>(k) == i && op.before) nodes.push_back(*op.before);
            nodes.push_back(p.nodes[k]);
            if (static_cast<std::ptrdiff_t>(k) == i && op.after) nodes.push_back(*op.after);
          }
          p.nodes = std::move(nodes);
          for (auto& e : p.edges) {
            if (op.before && e.to == op.target) e.to = op.before->id;
            if (op.after && e.from == op.target) e.from = op.after->id;
          }
          if (op.before) p.edges.push_back({op.before->id, op.target});
          if (op.after) p.edges.push_back({op.target, op.after->id});
        } else {
          const auto i = node_index(p, op.target);
          if (i < 0) return "dangling-edge: unknown remove target '" + op.target + "'";
          std::vector<std::string> preds, succs;
          std::vector<Edge> kept;
          for (const auto& e : p.edges) {
            if (e.to == op.target) preds.push_back(e.from);
            if (e.from == op.target) succs.push_back(e.to);
            if (e.to != op.target && e.from != op.target) kept.push_back(e);
          }
          if (op.reconnect)
            for (const auto& a : preds)
              for (const auto& b : succs) kept.push_back({a, b});
          p.edges = std::move(kept);
          p.nodes.erase(p.nodes.begin() + i);
        }
        return {};
      },
      edit.op);
}

}  // namespace detail

// Atomic: the edited plan is revalidated and returned only if clean;
// otherwise the input plan comes back unchanged with the reason.
inline EditResult apply_edit(const PlanSpec& plan, const Edit& edit, const Json& context = Json::object()) {
  EditResult r;
  r.plan = plan;
  if (!validate_plan(plan, context).valid()) {
    r.reason = "input plan is not valid";
    return r;
  }
  PlanSpec edited = plan;
  if (auto why = detail::apply_raw(edited, edit); !why.empty()) {
    r.reason = why;
    return r;
  }
  normalize_edges(edited);
  r.report = validate_plan(edited, context);
  if (!r.report.valid()) {
    const auto& v = r.report.violations.front();
    r.reason = to_string(v.kind) + ": " + v.message;
    return r;
  }
  r.plan = std::move(edited);
  r.accepted = true;
  return r;
}

inline PlanSpec apply_edit_or_throw(const PlanSpec& plan, const Edit& edit, const Json& context = Json::object()) {
  auto r = apply_edit(plan, edit, context);
  if (!r.accepted) throw EditRejected(edit_name(edit) + " rejected: " + r.reason);
  return r.plan;
}

// ---------------------------------------------------------------------------
// Issues, resolutions, supervisors
// ---------------------------------------------------------------------------

enum class IssueKind { kMissingStep, kRedundantNode, kInvalidDependency, kImplicitAssumption };

inline std::string to_string(IssueKind k) {
  switch (k) {
    case IssueKind::kMissingStep: return "missing-step";
    case IssueKind::kRedundantNode: return "redundant-node";
    case IssueKind::kInvalidDependency: return "invalid-dependency";
    case IssueKind::kImplicitAssumption: return "implicit-assumption";
  }
  return "?";
}

inline IssueKind issue_kind_from(const std::string& s) {
  for (auto k : {IssueKind::kMissingStep, IssueKind::kRedundantNode, IssueKind::kInvalidDependency,
                 IssueKind::kImplicitAssumption})
    if (to_string(k) == s) return k;
  throw ParseError("unknown issue kind '" + s + "'");
}

struct Issue {
  std::string id;
  IssueKind kind = IssueKind::kMissingStep;
  std::string target;  // node id, "from->to", "absent" (missing-step) or a description
  std::string rationale;
  std::string proposer;
  std::vector<Edit> suggested_edits;  // optional; used by revision if present
};

struct Resolution {
  std::string issue_ref;
  bool accepted = false;
  std::string justification;
};

inline void to_json(Json& j, const Issue& i) {
  j = Json{{"id", i.id},           {"kind", to_string(i.kind)}, {"target", i.target}, {"rationale", i.rationale},
           {"proposer", i.proposer}};
  if (!i.suggested_edits.empty()) j["edits"] = i.suggested_edits;
}

inline void to_json(Json& j, const Resolution& r) {
  j = Json{{"issue_ref", r.issue_ref}, {"verdict", r.accepted ? "accepted" : "rejected"},
           {"justification", r.justification}};
}

// Target must name something in the criticized plan. Implicit assumptions
// may be free-text descriptions of context the plan silently relies on.
inline bool target_resolvable(const Issue& issue, const PlanSpec& plan) {
  if (issue.target == "absent") return issue.kind == IssueKind::kMissingStep;
  if (plan.find(issue.target)) return true;
  const auto arrow = issue.target.find("->");
  if (arrow != std::string::npos) {
    const Edge e{issue.target.substr(0, arrow), issue.target.substr(arrow + 2)};
    return std::find(plan.edges.begin(), plan.edges.end(), e) != plan.edges.end();
  }
  return issue.kind == IssueKind::kImplicitAssumption && !issue.target.empty();
}

class Supervisor {
 public:
  virtual ~Supervisor() = default;
  virtual std::string id() const = 0;
  virtual PlanSpec propose(const TaskEnvelope& task) = 0;
  virtual std::vector<Issue> critique(const PlanSpec& plan, const TaskEnvelope& task) = 0;
  virtual Resolution defend(const PlanSpec& plan, const Issue& issue, const TaskEnvelope& task) = 0;
  virtual std::vector<Edit> revise(const PlanSpec& plan, const Issue& issue, const TaskEnvelope& task) = 0;
};

// Each phase is one chat call whose user message starts with "PHASE: <name>"
// and whose reply is JSON:
//   plan     -> a PlanSpec document
//   critique -> {"issues": [{"kind", "target", "rationale", "edits"?}]}
//   defend   -> {"verdict": "accepted" | "rejected", "justification"}
//   revise   -> {"edits": [...]}
class ProviderSupervisor : public Supervisor {
 public:
  ProviderSupervisor(std::string id, std::string model, Provider& provider)
      : id_(std::move(id)), model_(std::move(model)), provider_(provider) {}

  std::string id() const override { return id_; }

  PlanSpec propose(const TaskEnvelope& task) override {
    const auto reply = ask("plan", task, Json::object());
    try {
      return reply.get<PlanSpec>();
    } catch (const Json::exception& e) {
      throw ParseError(id_ + " emitted a malformed plan: " + e.what());
    }
  }

  std::vector<Issue> critique(const PlanSpec& plan, const TaskEnvelope& task) override {
    const auto reply = ask("critique", task, Json{{"plan", plan}});
    std::vector<Issue> out;
    for (const auto& j : reply.value("issues", Json::array())) {
      Issue i;
      i.kind = issue_kind_from(detail::require(j, "kind").get<std::string>());
      i.target = detail::get_or(j, "target", std::string{"absent"});
      i.rationale = detail::get_or(j, "rationale", std::string{});
      i.proposer = id_;
      i.suggested_edits = detail::get_or(j, "edits", std::vector<Edit>{});
      out.push_back(std::move(i));
    }
    return out;
  }

  Resolution defend(const PlanSpec& plan, const Issue& issue, const TaskEnvelope& task) override {
    const auto reply = ask("defend", task, Json{{"plan", plan}, {"issue", issue}});
    const auto verdict = detail::require(reply, "verdict").get<std::string>();
    if (verdict != "accepted" && verdict != "rejected") throw ParseError("defense verdict must be accepted or rejected");
    return {issue.id, verdict == "accepted", detail::get_or(reply, "justification", std::string{})};
  }

  std::vector<Edit> revise(const PlanSpec& plan, const Issue& issue, const TaskEnvelope& task) override {
    const auto reply = ask("revise", task, Json{{"plan", plan}, {"issue", issue}});
    return detail::get_or(reply, "edits", std::vector<Edit>{});
  }

 private:
  Json ask(const std::string& phase, const TaskEnvelope& task, const Json& payload) {
    const std::string user = "PHASE: " + phase + "\nSUPERVISOR: " + id_ + "\nTASK: " + task.instruction +
                             "\nCONTEXT: " + task.context.dump() + "\nPAYLOAD: " + payload.dump();
    return parse_json_reply(provider_.chat(
        {model_, {{"system", "You are plan supervisor " + id_ + ". Reply with JSON only."}, {"user", user}}}));
  }

  std::string id_;
  std::string model_;
  Provider& provider_;
};

// ---------------------------------------------------------------------------
// Candidate generation
// ---------------------------------------------------------------------------

struct Candidate {
  PlanSpec plan;
  std::size_t originator = 0;  // index into the supervisor list
  std::vector<std::string> dropped_nodes;  // removed by repair
};

struct CandidateRejection {
  std::size_t index = 0;
  std::string supervisor;
  std::string reason;
};

struct CandidateSet {
  std::vector<Candidate> candidates;
  std::vector<CandidateRejection> rejections;
};

inline void to_json(Json& j, const CandidateSet& s) {
  Json c = Json::array();
  for (const auto& x : s.candidates) c.push_back({{"originator", x.originator}, {"plan", x.plan}, {"dropped", x.dropped_nodes}});
  Json r = Json::array();
  for (const auto& x : s.rejections) r.push_back({{"index", x.index}, {"supervisor", x.supervisor}, {"reason", x.reason}});
  j = Json{{"candidates", c}, {"rejections", r}};
}

// Structural faults are rejected outright; nodes whose inputs cannot be
// supplied (or whose own declarations are broken) are dropped repeatedly
// until the plan validates or nothing remains.
inline std::optional<std::string> repair_plan(PlanSpec& plan, const Json& context, std::vector<std::string>& dropped) {
  for (;;) {
    const auto report = validate_plan(plan, context);
    if (report.valid()) return std::nullopt;
    for (auto k : {ViolationKind::kCycle, ViolationKind::kDanglingEdge, ViolationKind::kDuplicateId})
      if (report.count(k)) return to_string(k) + ": " + report.of_kind(k).front()->message;
    std::set<std::string> bad;
    for (const auto& v : report.violations) bad.insert(v.nodes.begin(), v.nodes.end());
    if (bad.empty()) return "unrepairable: " + report.violations.front().message;
    std::vector<PlanNode> nodes;
    for (auto& n : plan.nodes)
      if (bad.count(n.id)) dropped.push_back(n.id);
      else nodes.push_back(std::move(n));
    plan.nodes = std::move(nodes);
    std::vector<Edge> edges;
    for (const auto& e : plan.edges)
      if (!bad.count(e.from) && !bad.count(e.to)) edges.push_back(e);
    plan.edges = std::move(edges);
    if (plan.nodes.empty()) return "every node dropped during repair";
  }
}

// Candidate i comes from planners[i % planners.size()].
inline CandidateSet generate_candidates(const TaskEnvelope& task, std::size_t n, const std::vector<Supervisor*>& planners) {
  if (n < 1) throw InvalidValue("candidate count must be at least 1");
  if (planners.empty()) throw InvalidValue("no planner supervisors");
  validate_task(task);
  CandidateSet out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto owner = i % planners.size();
    Supervisor* sup = planners[owner];
    Candidate c;
    c.originator = owner;
    try {
      c.plan = sup->propose(task);
    } catch (const ParseError& e) {
      out.rejections.push_back({i, sup->id(), e.what()});
      continue;
    } catch (const MatcherMismatch& e) {
      out.rejections.push_back({i, sup->id(), e.what()});
      continue;
    }
    if (c.plan.task_ref.empty()) c.plan.task_ref = task.id;
    if (auto why = repair_plan(c.plan, task.context, c.dropped_nodes)) {
      out.rejections.push_back({i, sup->id(), *why});
      continue;
    }
    normalize_edges(c.plan);
    out.candidates.push_back(std::move(c));
  }
  if (out.candidates.empty()) throw NoValidCandidate("all " + std::to_string(n) + " candidates failed validation");
  return out;
}

// ---------------------------------------------------------------------------
// Debate rounds
// ---------------------------------------------------------------------------

struct RoundResult {
  PlanSpec plan;
  std::vector<Json> log;  // issue / resolution / edit records, in order
  std::size_t accepted_issues = 0;
  std::size_t applied_edits = 0;
  std::size_t rejected_edits = 0;
};

// Critics see the same plan independently; the originator defends and
// revises. Accepted issues are revised in order; each edit goes through
// apply_edit, so every intermediate plan is valid.
inline RoundResult debate_round(const PlanSpec& plan, Supervisor& originator, const std::vector<Supervisor*>& critics,
                                const TaskEnvelope& task, int round = 1, const std::string& candidate = "c0") {
  if (!validate_plan(plan, task.context).valid()) throw InvalidPlan("debate round on an invalid plan");
  RoundResult r;
  r.plan = plan;
  const std::string prefix = candidate + "-r" + std::to_string(round);
  auto stamp = [&](Json j) {
    j["candidate"] = candidate;
    j["round"] = round;
    return j;
  };

  std::vector<Issue> issues;
  for (auto* c : critics) {
    auto found = c->critique(plan, task);
    for (auto& i : found) {
      i.id = prefix + "-" + c->id() + "-" + std::to_string(issues.size() + 1);
      i.proposer = c->id();
      issues.push_back(std::move(i));
    }
  }
  for (const auto& i : issues) {
    Json rec = i;
    rec["record"] = "issue";
    r.log.push_back(stamp(rec));
  }

  for (const auto& issue : issues) {
    Resolution res;
    if (!target_resolvable(issue, plan)) {
      res = {issue.id, false, "target '" + issue.target + "' does not resolve against the plan"};
    } else {
      res = originator.defend(r.plan, issue, task);
      res.issue_ref = issue.id;
    }
    Json rec = res;
    rec["record"] = "resolution";
    r.log.push_back(stamp(rec));
    if (!res.accepted) continue;
    ++r.accepted_issues;

    auto edits = issue.suggested_edits.empty() ? originator.revise(r.plan, issue, task) : issue.suggested_edits;
    if (edits.empty()) throw InvalidValue("accepted issue " + issue.id + " produced no edit");
    for (const auto& e : edits) {
      const auto applied = apply_edit(r.plan, e, task.context);
      Json erec{{"record", "edit"}, {"issue_ref", issue.id}, {"edit", e},
                {"status", applied.accepted ? "applied" : "rejected"}};
      if (applied.accepted) {
        r.plan = applied.plan;
        ++r.applied_edits;
        erec["plan_digest"] = digest(Json(r.plan));
      } else {
        ++r.rejected_edits;
        erec["reason"] = applied.reason;
      }
      r.log.push_back(stamp(erec));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

// Task constraints are the ids in context["constraints"]; a node covers one
// with a policy constraint of that rule id or a constraint on that field.
inline std::vector<std::string> task_constraints(const TaskEnvelope& task) {
  std::vector<std::string> out;
  if (task.context.contains("constraints") && task.context.at("constraints").is_array())
    for (const auto& c : task.context.at("constraints"))
      if (c.is_string()) out.push_back(c.get<std::string>());
  return out;
}

struct PlanScore {
  bool valid = false;
  std::size_t covered = 0;
  std::size_t total = 0;
  std::size_t nodes = 0;

  // Lexicographic (valid, covered/total, -nodes); ratios compared exactly.
  friend bool operator<(const PlanScore& a, const PlanScore& b) {
    if (a.valid != b.valid) return !a.valid;
    const auto ta = a.total == 0 ? 1 : a.total, tb = b.total == 0 ? 1 : b.total;
    const auto ca = a.total == 0 ? 1 : a.covered, cb = b.total == 0 ? 1 : b.covered;
    if (ca * tb != cb * ta) return ca * tb < cb * ta;
    return a.nodes > b.nodes;
  }
};

inline PlanScore score_plan(const PlanSpec& plan, const TaskEnvelope& task) {
  PlanScore s;
  s.valid = validate_plan(plan, task.context).valid();
  s.nodes = plan.nodes.size();
  const auto wanted = task_constraints(task);
  s.total = wanted.size();
  for (const auto& c : wanted) {
    bool hit = false;
    for (const auto& n : plan.nodes)
      for (const auto& k : n.constraints) {
        if (const auto* p = std::get_if<PolicyConstraint>(&k.body); p && p->rule_id == c) hit = true;
        if (k.field() == c) hit = true;
      }
    if (hit) ++s.covered;
  }
  return s;
}

inline void to_json(Json& j, const PlanScore& s) {
  j = Json{{"valid", s.valid}, {"covered", s.covered}, {"total", s.total}, {"nodes", s.nodes}};
}

struct RefineResult {
  PlanSpec plan;
  std::size_t selected = 0;
  std::vector<PlanScore> scores;
  std::vector<PlanSpec> refined;
  std::vector<Json> log;
  std::size_t rounds = 0;
};

// Runs up to max_rounds debate rounds per candidate (stopping early once a
// round accepts no issue) and selects the best-scoring refined plan. Earlier
// candidates win exact ties.
inline RefineResult refine(const TaskEnvelope& task, const std::vector<Candidate>& candidates,
                           const std::vector<Supervisor*>& supervisors, int max_rounds = 3, bool parallel = false) {
  if (candidates.empty()) throw NoValidCandidate("no candidates to refine");
  if (max_rounds < 0) throw InvalidValue("max_rounds must be non-negative");
  struct Run {
    PlanSpec plan;
    std::vector<Json> log;
    std::size_t rounds = 0;
  };
  auto run_one = [&](std::size_t ci) {
    Run run{candidates[ci].plan, {}, 0};
    if (!validate_plan(run.plan, task.context).valid()) return run;
    Supervisor& owner = *supervisors.at(candidates[ci].originator);
    for (int round = 1; round <= max_rounds; ++round) {
      auto r = debate_round(run.plan, owner, supervisors, task, round, "c" + std::to_string(ci));
      ++run.rounds;
      run.plan = std::move(r.plan);
      run.log.insert(run.log.end(), r.log.begin(), r.log.end());
      if (r.accepted_issues == 0) break;
    }
    return run;
  };
  std::vector<Run> runs;
  if (parallel) {
    std::vector<std::future<Run>> fs;
    for (std::size_t i = 0; i < candidates.size(); ++i) fs.push_back(std::async(std::launch::async, run_one, i));
    for (auto& f : fs) runs.push_back(f.get());
  } else {
    for (std::size_t i = 0; i < candidates.size(); ++i) runs.push_back(run_one(i));
  }

  RefineResult out;
  for (auto& run : runs) {
    out.scores.push_back(score_plan(run.plan, task));
    out.refined.push_back(run.plan);
    out.log.insert(out.log.end(), run.log.begin(), run.log.end());
    out.rounds += run.rounds;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.scores.size(); ++i)
    if (out.scores[best] < out.scores[i]) best = i;
  if (!out.scores[best].valid) throw NoValidCandidate("no refined candidate is valid");
  out.selected = best;
  out.plan = out.refined[best];
  out.log.push_back({{"record", "selection"}, {"selected", best}, {"scores", out.scores}});
  return out;
}

inline std::string round_log_jsonl(const std::vector<Json>& log) {
  std::string s;
  for (const auto& r : log) s += r.dump() + "\n";
  return s;
}

}  // namespace contractflow

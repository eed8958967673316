#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "contractflow/core/schema.hpp"
#include "contractflow/core/types.hpp"
#include "contractflow/error.hpp"

namespace contractflow {

enum class ViolationKind {
  kDuplicateId,
  kDanglingEdge,
  kCycle,
  kSchemaClosureGap,
  kEmptyOutputs,
  kInvalidSchema,
  kUnknownConstraintField,
  kUnknownEvidenceField,
};

inline std::string to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::kDuplicateId: return "duplicate-id";
    case ViolationKind::kDanglingEdge: return "dangling-edge";
    case ViolationKind::kCycle: return "cycle";
    case ViolationKind::kSchemaClosureGap: return "schema-closure-gap";
    case ViolationKind::kEmptyOutputs: return "empty-outputs";
    case ViolationKind::kInvalidSchema: return "invalid-schema";
    case ViolationKind::kUnknownConstraintField: return "unknown-constraint-field";
    case ViolationKind::kUnknownEvidenceField: return "unknown-evidence-field";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::vector<std::string> nodes;  // offending node ids (sorted for cycles)
  std::vector<Edge> edges;         // offending edges; for cycles, the closing edges
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  std::size_t count(ViolationKind k) const {
    return static_cast<std::size_t>(
        std::count_if(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == k; }));
  }
  std::vector<const Violation*> of_kind(ViolationKind k) const {
    std::vector<const Violation*> out;
    for (const auto& v : violations)
      if (v.kind == k) out.push_back(&v);
    return out;
  }
};

inline void to_json(Json& j, const Violation& v) {
  j = Json{{"kind", to_string(v.kind)}, {"nodes", v.nodes}, {"edges", v.edges}, {"message", v.message}};
  if (!v.field.empty()) j["field"] = v.field;
}

inline void to_json(Json& j, const ValidationReport& r) {
  j = Json{{"valid", r.valid()}, {"violations", r.violations}};
}

// Adjacency view of a plan over its unique node ids and resolvable edges.
class PlanGraph {
 public:
  explicit PlanGraph(const PlanSpec& plan) {
    for (const auto& n : plan.nodes) ids_.insert(n.id);
    for (const auto& id : ids_) {
      succ_[id];
      pred_[id];
    }
    for (const auto& e : plan.edges) {
      if (!ids_.count(e.from) || !ids_.count(e.to)) continue;
      succ_[e.from].insert(e.to);
      pred_[e.to].insert(e.from);
    }
  }

  const std::set<std::string>& ids() const { return ids_; }
  const std::set<std::string>& successors(const std::string& id) const { return succ_.at(id); }
  const std::set<std::string>& predecessors(const std::string& id) const { return pred_.at(id); }

  // Every node with a path into `id`, excluding `id` itself.
  std::set<std::string> ancestors(const std::string& id) const { return reach(id, pred_); }
  std::set<std::string> descendants(const std::string& id) const { return reach(id, succ_); }

  // Strongly connected components that contain a cycle (size > 1, or a self loop).
  std::vector<std::vector<std::string>> cyclic_components() const {
    std::map<std::string, int> index, low;
    std::set<std::string> on_stack;
    std::vector<std::string> stack;
    std::vector<std::vector<std::string>> out;
    int counter = 0;
    std::function<void(const std::string&)> strongconnect = [&](const std::string& v) {
      index[v] = low[v] = counter++;
      stack.push_back(v);
      on_stack.insert(v);
      for (const auto& w : succ_.at(v)) {
        if (!index.count(w)) {
          strongconnect(w);
          low[v] = std::min(low[v], low[w]);
        } else if (on_stack.count(w)) {
          low[v] = std::min(low[v], index[w]);
        }
      }
      if (low[v] == index[v]) {
        std::vector<std::string> comp;
        std::string w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack.erase(w);
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        if (comp.size() > 1 || succ_.at(v).count(v)) out.push_back(std::move(comp));
      }
    };
    for (const auto& id : ids_)
      if (!index.count(id)) strongconnect(id);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static std::set<std::string> reach(const std::string& start, const std::map<std::string, std::set<std::string>>& adj) {
    std::set<std::string> seen;
    std::vector<std::string> work{start};
    while (!work.empty()) {
      auto v = work.back();
      work.pop_back();
      for (const auto& w : adj.at(v))
        if (seen.insert(w).second) work.push_back(w);
    }
    seen.erase(start);
    return seen;
  }

  std::set<std::string> ids_;
  std::map<std::string, std::set<std::string>> succ_;
  std::map<std::string, std::set<std::string>> pred_;
};

// Where a required input can come from: an ancestor's required output of
// a compatible type, or a task-context value conforming to the field type.
inline bool input_supplied(const Field& input, const PlanSpec& plan, const std::set<std::string>& ancestors,
                           const Json& context) {
  for (const auto& anc : ancestors) {
    const PlanNode* n = plan.find(anc);
    if (!n) continue;
    const Field* out = n->outputs.find(input.name);
    if (out && out->required && type_compatible(out->type, input.type)) return true;
  }
  if (context.is_object() && context.contains(input.name)) return conforms(context.at(input.name), input.type);
  return false;
}

// Lists every violated structural invariant; an empty report means valid.
inline ValidationReport validate_plan(const PlanSpec& plan, const Json& context = Json::object()) {
  ValidationReport report;
  auto add = [&](Violation v) { report.violations.push_back(std::move(v)); };

  std::map<std::string, int> seen;
  for (const auto& n : plan.nodes) {
    if (++seen[n.id] == 2)
      add({ViolationKind::kDuplicateId, {n.id}, {}, {}, "node id '" + n.id + "' appears more than once"});
  }

  for (const auto& e : plan.edges) {
    const bool from_ok = seen.count(e.from) > 0;
    const bool to_ok = seen.count(e.to) > 0;
    if (!from_ok || !to_ok)
      add({ViolationKind::kDanglingEdge, {}, {e}, {},
           "edge " + e.from + "->" + e.to + " references unknown node '" + (from_ok ? e.to : e.from) + "'"});
  }

  for (const auto& n : plan.nodes) {
    if (n.outputs.empty()) add({ViolationKind::kEmptyOutputs, {n.id}, {}, {}, "node '" + n.id + "' declares no outputs"});
    for (const auto& p : schema_problems(n.inputs)) add({ViolationKind::kInvalidSchema, {n.id}, {}, {}, "inputs: " + p});
    for (const auto& p : schema_problems(n.outputs)) add({ViolationKind::kInvalidSchema, {n.id}, {}, {}, "outputs: " + p});
    for (const auto& c : n.constraints) {
      auto f = c.field();
      if (f && !n.inputs.find(*f) && !n.outputs.find(*f))
        add({ViolationKind::kUnknownConstraintField, {n.id}, {}, *f,
             "constraint on '" + *f + "' which is not in node '" + n.id + "' schemas"});
    }
    for (const auto& e : n.evidence_reqs) {
      if (!n.outputs.find(e.claim_field) || e.min_sources < 1)
        add({ViolationKind::kUnknownEvidenceField, {n.id}, {}, e.claim_field,
             "evidence requirement on '" + e.claim_field + "' is not satisfiable by node outputs"});
    }
  }

  const PlanGraph graph(plan);
  for (const auto& comp : graph.cyclic_components()) {
    const std::set<std::string> members(comp.begin(), comp.end());
    // Every cycle contains at least one edge that does not ascend in id
    // order; those edges are reported as the closing edges.
    std::vector<Edge> closing;
    for (const auto& u : comp)
      for (const auto& v : graph.successors(u))
        if (members.count(v) && v <= u) closing.push_back({u, v});
    std::string names;
    for (const auto& id : comp) names += (names.empty() ? "" : ",") + id;
    add({ViolationKind::kCycle, comp, closing, {}, "cycle through {" + names + "}"});
  }

  std::set<std::string> checked;
  for (const auto& n : plan.nodes) {
    if (!checked.insert(n.id).second) continue;
    const auto anc = graph.ancestors(n.id);
    for (const auto& f : n.inputs.fields) {
      if (!f.required) continue;
      if (!input_supplied(f, plan, anc, context))
        add({ViolationKind::kSchemaClosureGap, {n.id}, {}, f.name,
             "required input '" + f.name + "' of node '" + n.id + "' has no upstream producer or context value"});
    }
  }
  return report;
}

// Kahn's algorithm; among ready nodes the smallest id goes first.
inline std::vector<std::string> topological_order(const PlanSpec& plan) {
  for (const auto& e : plan.edges)
    if (!plan.find(e.from) || !plan.find(e.to)) throw InvalidPlan("dangling edge " + e.from + "->" + e.to);
  const PlanGraph graph(plan);
  std::map<std::string, std::size_t> indegree;
  for (const auto& id : graph.ids()) indegree[id] = graph.predecessors(id).size();
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [id, d] : indegree)
    if (d == 0) ready.push(id);
  std::vector<std::string> order;
  while (!ready.empty()) {
    auto v = ready.top();
    ready.pop();
    order.push_back(v);
    for (const auto& w : graph.successors(v))
      if (--indegree[w] == 0) ready.push(w);
  }
  if (order.size() != graph.ids().size()) throw CyclicPlan("plan contains a cycle");
  return order;
}

// Nodes with no outgoing edges.
inline std::vector<std::string> terminal_nodes(const PlanSpec& plan) {
  const PlanGraph graph(plan);
  std::vector<std::string> out;
  for (const auto& id : graph.ids())
    if (graph.successors(id).empty()) out.push_back(id);
  return out;
}

}  // namespace contractflow

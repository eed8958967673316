#pragma once

// Programmatic deliverable metrics. Every score is satisfied/required over an
// explicit item list; an empty list scores 1.0 and is flagged vacuous.

#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "contractflow/core/constraints.hpp"
#include "contractflow/core/schema.hpp"
#include "contractflow/core/serialize.hpp"
#include "contractflow/core/types.hpp"

namespace contractflow {

struct MetricItem {
  std::string item;
  bool satisfied = false;
  std::string detail;
  friend bool operator==(const MetricItem&, const MetricItem&) = default;
};

struct MetricScore {
  std::string name;
  std::vector<MetricItem> items;

  std::size_t required() const { return items.size(); }
  std::size_t satisfied() const {
    std::size_t n = 0;
    for (const auto& i : items) n += i.satisfied;
    return n;
  }
  bool vacuous() const { return items.empty(); }
  double score() const { return vacuous() ? 1.0 : static_cast<double>(satisfied()) / static_cast<double>(required()); }
};

inline void to_json(Json& j, const MetricItem& i) {
  j = Json{{"item", i.item}, {"satisfied", i.satisfied}};
  if (!i.detail.empty()) j["detail"] = i.detail;
}
inline void to_json(Json& j, const MetricScore& m) {
  j = Json{{"score", m.score()},     {"satisfied", m.satisfied()}, {"required", m.required()},
           {"vacuous", m.vacuous()}, {"items", m.items}};
}

// Required output fields of every contract, instantiated with a conforming value.
inline MetricScore presence_coverage(const Deliverable& d, const std::vector<NeedContract>& contracts) {
  MetricScore m{"presence_coverage", {}};
  for (const auto& c : contracts)
    for (const auto& f : c.output_schema.fields) {
      if (!f.required) continue;
      MetricItem it{c.id + "." + f.name, false, {}};
      const Json* v = detail::field_value(d.structured, f.name);
      if (!v) it.detail = "absent";
      else if (!conforms(*v, f.type)) it.detail = "not a " + describe(f.type);
      else it.satisfied = true;
      m.items.push_back(std::move(it));
    }
  return m;
}

// Required rule ids found in the structured rule_citations list. Mentions in
// free text do not count.
inline MetricScore rule_citation(const Deliverable& d, const std::vector<std::string>& required_rules) {
  MetricScore m{"rule_citation", {}};
  const std::set<std::string> cited(d.rule_citations.begin(), d.rule_citations.end());
  for (const auto& r : std::set<std::string>(required_rules.begin(), required_rules.end()))
    m.items.push_back({r, cited.count(r) > 0, cited.count(r) ? "" : "not cited"});
  return m;
}

// Structured claims with an evidence entry whose steps all resolve in the trace.
inline MetricScore evidence_presence(const Deliverable& d, const ExecutionTrace& trace) {
  MetricScore m{"evidence_presence", {}};
  for (const auto& [claim, v] : d.structured.items()) {
    MetricItem it{claim, false, "no evidence entry"};
    for (const auto& e : d.evidence) {
      if (e.claim_field != claim) continue;
      if (e.step_ids.empty()) {
        it.detail = "empty evidence entry";
        continue;
      }
      std::string missing;
      for (const auto& s : e.step_ids)
        if (!trace.find(s)) missing = s;
      if (missing.empty()) {
        it = {claim, true, {}};
        break;
      }
      it.detail = "step '" + missing + "' not in trace";
    }
    m.items.push_back(std::move(it));
  }
  return m;
}

// Normalization rules over the structured deliverable. A rule whose field the
// deliverable lacks does not apply and is left out of the denominator.
inline MetricScore normalization_check(const Deliverable& d, const std::vector<ConstraintExpr>& rules) {
  MetricScore m{"normalization", {}};
  Record view = d.structured;
  view["rule_citations"] = d.rule_citations;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto r = evaluate(rules[i], view, "norm[" + std::to_string(i) + "]");
    if (r.verdict == Verdict::kNotEvaluable) continue;
    m.items.push_back({r.check, r.passed(), r.detail});
  }
  return m;
}

struct MetricReport {
  MetricScore presence_coverage;
  MetricScore rule_citation;
  MetricScore evidence_presence;
  MetricScore normalization;
};

inline void to_json(Json& j, const MetricReport& r) {
  j = Json{{"presence_coverage", r.presence_coverage},
           {"rule_citation", r.rule_citation},
           {"evidence_presence", r.evidence_presence},
           {"normalization", r.normalization}};
}

// What the metrics are measured against.
struct EvalSpec {
  std::vector<NeedContract> contracts;
  std::vector<std::string> required_rules;
  std::vector<ConstraintExpr> normalization;
};

inline void from_json(const Json& j, EvalSpec& e) {
  e.contracts = detail::get_or(j, "contracts", std::vector<NeedContract>{});
  e.required_rules = detail::get_or(j, "required_rules", std::vector<std::string>{});
  e.normalization = detail::get_or(j, "normalization", std::vector<ConstraintExpr>{});
}

inline MetricReport compute_metrics(const Deliverable& d, const ExecutionTrace& trace, const EvalSpec& spec) {
  return {presence_coverage(d, spec.contracts), rule_citation(d, spec.required_rules), evidence_presence(d, trace),
          normalization_check(d, spec.normalization)};
}

// One row in the programmatic-metric column layout.
inline std::string format_metric_row(const std::string& label, const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "| %-12s | %10s | %9s | %14s | %6s |\n", "Run", "Pres. Cov.", "Rule Cit.",
                "Evidence Pres.", "Norm.");
  std::string out = buf;
  std::snprintf(buf, sizeof buf, "| %-12s | %10.4f | %9.4f | %14.4f | %6.4f |\n", label.c_str(), r.presence_coverage.score(),
                r.rule_citation.score(), r.evidence_presence.score(), r.normalization.score());
  return out + buf;
}

// LLM-judged metrics plug in here; none is bundled.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual Json score(const TaskEnvelope& task, const Deliverable& d, const ExecutionTrace& trace) = 0;
};

}  // namespace contractflow

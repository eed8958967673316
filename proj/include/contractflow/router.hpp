#pragma once

// Per-task choice between the fast answer path (system1) and the planned,
// tool-executing path (system2).

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contractflow/core/text.hpp"
#include "contractflow/core/types.hpp"
#include "contractflow/core/util.hpp"
#include "contractflow/shell/provider.hpp"

namespace contractflow {

enum class Route { kSystem1, kSystem2 };

inline std::string to_string(Route r) { return r == Route::kSystem1 ? "system1" : "system2"; }

namespace signals {
inline constexpr const char* kMultiStep = "multi-step";
inline constexpr const char* kToolRequest = "tool-request";
inline constexpr const char* kMultiSource = "multi-source";
inline constexpr const char* kTraceability = "traceability";
inline constexpr const char* kResourcePolicy = "resource-policy";
inline const std::vector<std::string> kAll{kMultiStep, kToolRequest, kMultiSource, kTraceability, kResourcePolicy};
}  // namespace signals

struct SignalResult {
  std::string name;
  bool fired = false;
  std::vector<std::string> matched;  // phrases or context keys that triggered it
};

struct RouteDecision {
  Route route = Route::kSystem1;
  std::vector<SignalResult> signals;
  std::string rationale;
  bool overridden = false;   // classifier replaced the rule decision
  bool fell_back = false;    // classifier requested but unavailable

  bool fired(std::string_view name) const {
    for (const auto& s : signals)
      if (s.name == name) return s.fired;
    return false;
  }
};

inline void to_json(Json& j, const RouteDecision& d) {
  Json sig = Json::array();
  for (const auto& s : d.signals) sig.push_back({{"name", s.name}, {"fired", s.fired}, {"matched", s.matched}});
  j = Json{{"route", to_string(d.route)}, {"signals", sig}, {"rationale", d.rationale},
           {"overridden", d.overridden}, {"fell_back", d.fell_back}};
}

struct RoutePolicy {
  std::map<std::string, bool> enabled;                    // missing = enabled
  std::map<std::string, std::vector<std::string>> phrases; // per-signal trigger phrases
  std::vector<std::string> policy_context_keys;
  int multi_source_min_refs = 2;
  bool classifier_override = false;
  std::string classifier_model = "router";

  bool is_enabled(const std::string& name) const {
    auto it = enabled.find(name);
    return it == enabled.end() || it->second;
  }

  static RoutePolicy defaults() {
    RoutePolicy p;
    p.phrases[signals::kMultiStep] = {"plan",     "planning", "schedule",     "scheduling", "step by step", "steps",
                                      "then",     "after that", "over the next", "workflow", "sequence",   "stages",
                                      "rotation", "timeline"};
    p.phrases[signals::kToolRequest] = {"calculate", "compute",  "run",      "simulate", "export", "generate a report",
                                        "query",     "fetch",    "download", "convert",  "call",   "use the tool",
                                        "estimate",  "forecast", "book",     "order",    "send",   "generate a table"};
    p.phrases[signals::kMultiSource] = {"compare",  "combine",  "cross check", "cross reference", "integrate",
                                        "sources",  "reconcile", "versus",     "multiple datasets", "merge"};
    p.phrases[signals::kTraceability] = {"evidence", "cite",  "citation",  "citations", "verify",   "verifiable",
                                         "traceable", "trace", "justify",   "provenance", "audit",  "show your work",
                                         "show your"};
    p.phrases[signals::kResourcePolicy] = {"quota",  "budget",     "regulation", "regulations", "policy",
                                           "compliance", "compliant", "permit",   "permitted", "subsidy",
                                           "allowance", "limit",     "restriction", "restrictions"};
    p.policy_context_keys = {"resource_constraints", "policy", "policy_conditions", "budget",
                             "water_quota",          "quota",  "regulations",       "constraints"};
    return p;
  }

  // Config document: {"signals": {"multi-step": false}, "classifier_override": true,
  //                   "classifier_model": "...", "phrases": {...}}
  static RoutePolicy from_json(const Json& j) {
    RoutePolicy p = defaults();
    const Json sig = j.value("signals", Json::object());
    for (const auto& [k, v] : sig.items()) {
      if (std::find(signals::kAll.begin(), signals::kAll.end(), k) == signals::kAll.end())
        throw ConfigError("unknown routing signal '" + k + "'");
      p.enabled[k] = v.get<bool>();
    }
    const Json phrases = j.value("phrases", Json::object());
    for (const auto& [k, v] : phrases.items()) p.phrases[k] = v.get<std::vector<std::string>>();
    p.classifier_override = j.value("classifier_override", false);
    p.classifier_model = j.value("classifier_model", p.classifier_model);
    if (j.contains("policy_context_keys")) p.policy_context_keys = j.at("policy_context_keys").get<std::vector<std::string>>();
    p.multi_source_min_refs = j.value("multi_source_min_refs", p.multi_source_min_refs);
    return p;
  }
};

namespace detail {

inline bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i)
    if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  return false;
}

inline std::vector<std::string> matched_phrases(const std::vector<std::string>& tokens,
                                                const std::vector<std::string>& phrases) {
  std::vector<std::string> out;
  for (const auto& p : phrases)
    if (contains_phrase(tokens, tokenize(p))) out.push_back(p);
  return out;
}

}  // namespace detail

// Evaluates the rule signals only; no classifier involvement.
inline std::vector<SignalResult> evaluate_signals(const TaskEnvelope& task, const RoutePolicy& policy) {
  const auto tokens = tokenize(task.instruction);
  std::vector<SignalResult> out;
  for (const auto& name : signals::kAll) {
    SignalResult s{name, false, {}};
    if (policy.is_enabled(name)) {
      auto it = policy.phrases.find(name);
      if (it != policy.phrases.end()) s.matched = detail::matched_phrases(tokens, it->second);
      if (name == signals::kMultiSource &&
          static_cast<int>(task.knowledge_refs.size()) >= policy.multi_source_min_refs)
        s.matched.push_back("knowledge_refs");
      if (name == signals::kResourcePolicy)
        for (const auto& key : policy.policy_context_keys)
          if (task.context.contains(key)) s.matched.push_back("context:" + key);
      s.fired = !s.matched.empty();
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Rule policy: system2 iff any enabled signal fires. With
// `classifier_override`, the classifier's answer replaces the rule result;
// if the classifier is unavailable the rule result stands and the fallback
// is noted in the rationale.
inline RouteDecision route(const TaskEnvelope& task, const RoutePolicy& policy, Provider* classifier = nullptr) {
  validate_task(task);
  RouteDecision d;
  d.signals = evaluate_signals(task, policy);
  std::string fired;
  for (const auto& s : d.signals)
    if (s.fired) fired += (fired.empty() ? "" : ", ") + s.name;
  d.route = fired.empty() ? Route::kSystem1 : Route::kSystem2;
  d.rationale = fired.empty() ? "no system2 signal fired" : "signals fired: " + fired;

  if (!policy.classifier_override) return d;

  std::optional<Route> verdict;
  std::string failure;
  if (!classifier) {
    failure = "no classifier backend configured";
  } else {
    try {
      ChatRequest req{policy.classifier_model,
                      {{"system", "Classify the task. Answer with exactly one word: system1 for a direct answer, "
                                  "system2 for multi-step planned execution."},
                       {"user", task.instruction}}};
      const auto reply = tokenize(classifier->chat(req));
      if (std::find(reply.begin(), reply.end(), "system2") != reply.end()) verdict = Route::kSystem2;
      else if (std::find(reply.begin(), reply.end(), "system1") != reply.end()) verdict = Route::kSystem1;
      else failure = "classifier reply not understood";
    } catch (const Error& e) {
      failure = e.what();
    }
  }
  if (verdict) {
    d.overridden = *verdict != d.route;
    d.rationale += "; classifier override: " + to_string(*verdict) + " (rules: " + to_string(d.route) + ")";
    d.route = *verdict;
  } else {
    d.fell_back = true;
    d.rationale += "; BackendUnavailable: classifier failed (" + failure + "), fell back to rule policy";
  }
  return d;
}

}  // namespace contractflow

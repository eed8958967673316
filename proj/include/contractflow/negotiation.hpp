#pragma once

// Need negotiation between a plan node's agent and the tool hub: declare a
// need, receive candidates, confirm a binding contract, and only then execute.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "contractflow/core/constraints.hpp"
#include "contractflow/toolhub/toci.hpp"

namespace contractflow {

enum class SessionState {
  kNeedDeclared,
  kCandidatesProposed,
  kInputsRequested,
  kContractConfirmed,
  kExecuting,
  kCompleted,
  kFailed
};

enum class SessionEvent {
  kPropose,        // candidates attached
  kNoCandidates,   // TDI and TOCI both empty
  kSelect,         // override of the selected candidate
  kRequestInputs,  // binding incomplete or rejected
  kConfirm,        // binding accepted
  kStart,          // invocation begins
  kSucceed,
  kFail,
  kRetry,          // same binding, same candidate
  kSwitch          // re-negotiate with another candidate
};

namespace detail {
inline constexpr NameTable<SessionState, 7> kSessionStates{{
    {SessionState::kNeedDeclared, "need-declared"},
    {SessionState::kCandidatesProposed, "candidates-proposed"},
    {SessionState::kInputsRequested, "inputs-requested"},
    {SessionState::kContractConfirmed, "contract-confirmed"},
    {SessionState::kExecuting, "executing"},
    {SessionState::kCompleted, "completed"},
    {SessionState::kFailed, "failed"},
}};
inline constexpr NameTable<SessionEvent, 10> kSessionEvents{{
    {SessionEvent::kPropose, "propose"},
    {SessionEvent::kNoCandidates, "no-candidates"},
    {SessionEvent::kSelect, "select"},
    {SessionEvent::kRequestInputs, "request-inputs"},
    {SessionEvent::kConfirm, "confirm"},
    {SessionEvent::kStart, "start"},
    {SessionEvent::kSucceed, "succeed"},
    {SessionEvent::kFail, "fail"},
    {SessionEvent::kRetry, "retry"},
    {SessionEvent::kSwitch, "switch"},
}};
}  // namespace detail

inline std::string to_string(SessionState s) { return detail::enum_to_name(detail::kSessionStates, s); }
inline std::string to_string(SessionEvent e) { return detail::enum_to_name(detail::kSessionEvents, e); }

// The protocol table. Pairs not listed have no transition.
inline std::optional<SessionState> next_state(SessionState s, SessionEvent e) {
  using S = SessionState;
  using E = SessionEvent;
  switch (s) {
    case S::kNeedDeclared:
      if (e == E::kPropose) return S::kCandidatesProposed;
      if (e == E::kNoCandidates) return S::kFailed;
      break;
    case S::kCandidatesProposed:
    case S::kInputsRequested:
      if (e == E::kSelect) return s;
      if (e == E::kRequestInputs) return S::kInputsRequested;
      if (e == E::kConfirm) return S::kContractConfirmed;
      break;
    case S::kContractConfirmed:
      if (e == E::kStart) return S::kExecuting;
      break;
    case S::kExecuting:
      if (e == E::kSucceed) return S::kCompleted;
      if (e == E::kFail) return S::kFailed;
      break;
    case S::kFailed:
      if (e == E::kRetry) return S::kContractConfirmed;
      if (e == E::kSwitch) return S::kCandidatesProposed;
      break;
    case S::kCompleted:
      break;
  }
  return std::nullopt;
}

struct SessionCandidate {
  std::vector<std::string> tools;  // one tool, or a composed chain
  CompatReport report;             // last tool output against the contract output
  double score = 0;                // TDI score, or chain reliability
  std::string via;                 // "tdi" or "toci"
};

inline void to_json(Json& j, const SessionCandidate& c) {
  j = Json{{"tools", c.tools}, {"report", c.report}, {"score", c.score}, {"via", c.via}};
}

struct SessionRecord {
  int seq = 0;
  std::string session;
  std::string event;  // a SessionEvent name, or "invoke"
  std::string from;
  std::string to;
  Json detail = Json::object();
};

inline void to_json(Json& j, const SessionRecord& r) {
  j = Json{{"seq", r.seq}, {"session", r.session}, {"event", r.event}, {"from", r.from}, {"to", r.to}, {"detail", r.detail}};
}
inline void from_json(const Json& j, SessionRecord& r) {
  r.seq = j.at("seq").get<int>();
  r.session = j.at("session").get<std::string>();
  r.event = j.at("event").get<std::string>();
  r.from = j.value("from", std::string{});
  r.to = j.value("to", std::string{});
  r.detail = j.value("detail", Json::object());
}

class NegotiationSession {
 public:
  NegotiationSession(std::string id, NeedContract contract) : id_(std::move(id)), contract_(std::move(contract)) {}

  const std::string& id() const { return id_; }
  const NeedContract& contract() const { return contract_; }
  SessionState state() const { return state_; }
  const std::vector<SessionCandidate>& candidates() const { return candidates_; }
  std::size_t selected() const { return selected_; }
  const SessionCandidate& selected_candidate() const { return candidates_.at(selected_); }
  const std::optional<Record>& binding() const { return binding_; }
  const std::vector<std::string>& requested() const { return requested_; }
  const std::optional<std::string>& failure() const { return failure_; }
  const std::optional<Record>& output() const { return output_; }
  const std::vector<SessionRecord>& transcript() const { return transcript_; }
  int executions() const { return executions_; }

  // Raises ProtocolError for any pair outside the protocol table.
  void apply(SessionEvent e, Json detail = Json::object()) {
    const auto to = next_state(state_, e);
    if (!to)
      throw ProtocolError("session " + id_ + ": event '" + to_string(e) + "' is not allowed in state '" +
                          to_string(state_) + "'");
    log(to_string(e), state_, *to, std::move(detail));
    state_ = *to;
  }

 private:
  friend class Negotiator;

  void log(std::string event, SessionState from, SessionState to, Json detail) {
    transcript_.push_back({static_cast<int>(transcript_.size()), id_, std::move(event), to_string(from), to_string(to),
                           std::move(detail)});
  }

  std::string id_;
  NeedContract contract_;
  SessionState state_ = SessionState::kNeedDeclared;
  std::vector<SessionCandidate> candidates_;
  std::size_t selected_ = 0;
  std::optional<Record> binding_;
  std::vector<std::string> requested_;
  std::optional<std::string> failure_;
  bool execution_failure_ = false;
  std::optional<Record> output_;
  std::vector<SessionRecord> transcript_;
  int executions_ = 0;
};

inline std::string transcript_jsonl(const std::vector<SessionRecord>& records) {
  std::string out;
  for (const auto& r : records) out += Json(r).dump() + "\n";
  return out;
}

// Runs one tool on a bound input and returns its output record.
using ToolInvoker = std::function<Record(const ToolCard&, const Record&)>;

struct NegotiationOptions {
  std::size_t k = 5;        // TDI candidates considered
  std::size_t max_chains = 5;
  int max_chain_len = 4;
};

inline std::vector<std::string> contract_problems(const NeedContract& c) {
  std::vector<std::string> out;
  if (c.capability.tag.empty() && c.capability.description.empty()) out.push_back("capability is empty");
  if (c.output_schema.empty()) out.push_back("output schema is empty");
  for (const auto& p : schema_problems(c.input_schema)) out.push_back("input schema: " + p);
  for (const auto& p : schema_problems(c.output_schema)) out.push_back("output schema: " + p);
  return out;
}

class Negotiator {
 public:
  explicit Negotiator(ToolHub& hub, NegotiationOptions opt = {}) : hub_(hub), opt_(opt) {}

  ToolHub& hub() { return hub_; }

  // TDI candidates that accept the contract's declared inputs and whose output
  // satisfies it; TOCI chains over those inputs when no single tool does.
  std::vector<SessionCandidate> find_candidates(const NeedContract& contract) const {
    std::vector<SessionCandidate> out;
    const auto snap = hub_.snapshot();
    if (snap->empty()) return out;
    for (const auto& r : snap->tdi_query(contract, opt_.k, hub_.embedder()).ranked) {
      const auto& card = snap->get(r.id);
      if (!schema_compatible(contract.input_schema, card.input_schema).satisfied) continue;
      auto report = schema_compatible(card.output_schema, contract.output_schema);
      if (report.satisfied) out.push_back({{r.id}, std::move(report), r.score, "tdi"});
    }
    if (!out.empty()) return out;
    TociOptions t;
    t.max_len = opt_.max_chain_len;
    t.limit = opt_.max_chains;
    for (auto& c : toci_compose(*snap, contract, contract.input_schema, t))
      out.push_back({c.steps, c.boundary_reports.back(), c.aggregate_reliability, "toci"});
    return out;
  }

  NegotiationSession declare_need(const NeedContract& contract, const std::string& session_id) const {
    if (auto p = contract_problems(contract); !p.empty())
      throw InvalidValue("contract '" + contract.id + "': " + p.front());
    NegotiationSession s(session_id, contract);
    s.log("declare", SessionState::kNeedDeclared, SessionState::kNeedDeclared,
          Json{{"contract", contract.id}, {"tag", contract.capability.tag}});
    s.candidates_ = find_candidates(contract);
    if (s.candidates_.empty()) {
      s.failure_ = "NoCandidates: no tool or chain satisfies contract '" + contract.id + "'";
      s.apply(SessionEvent::kNoCandidates, Json{{"reason", *s.failure_}});
      return s;
    }
    Json ids = Json::array();
    for (const auto& c : s.candidates_) ids.push_back(c.tools);
    s.apply(SessionEvent::kPropose, Json{{"candidates", ids}});
    return s;
  }

  void select(NegotiationSession& s, std::size_t index) const {
    if (index >= s.candidates_.size())
      throw InvalidValue("candidate index " + std::to_string(index) + " out of range");
    s.apply(SessionEvent::kSelect, Json{{"index", index}});
    s.selected_ = index;
  }

  // Checks the binding against the selected candidate's entry schema and all
  // preconditions. Gaps move the session to inputs-requested; a violated
  // precondition additionally raises ContractRejected.
  void confirm_contract(NegotiationSession& s, const Record& binding) const {
    if (s.state_ != SessionState::kCandidatesProposed && s.state_ != SessionState::kInputsRequested)
      throw ProtocolError("session " + s.id_ + ": confirm in state '" + to_string(s.state_) + "'");
    const auto snap = hub_.snapshot();
    const auto& entry = snap->get(s.selected_candidate().tools.front());
    std::vector<std::string> gaps;
    for (const auto& issue : conformance_issues(binding, entry.input_schema)) gaps.push_back(issue.field);

    std::vector<ConstraintExpr> pre = s.contract_.preconditions;
    pre.insert(pre.end(), entry.preconditions.begin(), entry.preconditions.end());
    std::optional<std::string> violated;
    for (std::size_t i = 0; i < pre.size(); ++i) {
      const auto r = evaluate(pre[i], binding, "precondition[" + std::to_string(i) + "]");
      if (r.verdict == Verdict::kNotEvaluable) {
        if (auto f = pre[i].field(); f && std::find(gaps.begin(), gaps.end(), *f) == gaps.end()) gaps.push_back(*f);
      } else if (r.verdict == Verdict::kFail && !violated) {
        violated = r.check + " (" + r.detail + ")";
        if (auto f = pre[i].field(); f && std::find(gaps.begin(), gaps.end(), *f) == gaps.end()) gaps.push_back(*f);
      }
    }
    if (!gaps.empty() || violated) {
      s.requested_ = gaps;
      Json detail{{"requested", gaps}};
      if (violated) detail["rejected"] = *violated;
      s.apply(SessionEvent::kRequestInputs, std::move(detail));
      if (violated) throw ContractRejected("session " + s.id_ + ": precondition " + *violated);
      return;
    }
    s.requested_.clear();
    s.binding_ = binding;
    s.apply(SessionEvent::kConfirm, Json{{"tools", s.selected_candidate().tools}, {"input_digest", digest(binding)}});
  }

  // Invokes the confirmed candidate; chain steps see the binding merged with
  // every earlier step's output. Each invoked tool's reliability is updated once.
  void execute_confirmed(NegotiationSession& s, const ToolInvoker& invoke) const {
    if (s.state_ != SessionState::kContractConfirmed)
      throw ProtocolError("session " + s.id_ + ": execute in state '" + to_string(s.state_) + "'");
    s.apply(SessionEvent::kStart);
    ++s.executions_;
    const auto snap = hub_.snapshot();
    Record carried = *s.binding_;
    Record last;
    for (const auto& tool_id : s.selected_candidate().tools) {
      const auto& card = snap->get(tool_id);
      s.log("invoke", SessionState::kExecuting, SessionState::kExecuting, Json{{"tool", tool_id}});
      try {
        last = invoke(card, carried);
        if (!last.is_object()) throw ExecutionError("tool '" + tool_id + "' returned a non-object record");
      } catch (const std::exception& e) {
        hub_.update_reliability(tool_id, false);
        s.failure_ = std::string(e.what()).rfind("ExecutionError", 0) == 0 ? e.what()
                                                                           : "ExecutionError: " + std::string(e.what());
        s.execution_failure_ = true;
        s.output_.reset();
        s.apply(SessionEvent::kFail, Json{{"tool", tool_id}, {"error", *s.failure_}});
        return;
      }
      hub_.update_reliability(tool_id, true);
      for (const auto& [k, v] : last.items()) carried[k] = v;
    }
    s.failure_.reset();
    s.output_ = last;
    s.apply(SessionEvent::kSucceed, Json{{"output_digest", digest(last)}});
  }

  // Re-arms a failed execution with the same binding.
  void retry(NegotiationSession& s) const {
    require_execution_failure(s, "retry");
    s.apply(SessionEvent::kRetry);
    s.failure_.reset();
    s.execution_failure_ = false;
  }

  // Drops the binding and selects another candidate; binding must be re-confirmed.
  void switch_candidate(NegotiationSession& s, std::size_t index) const {
    require_execution_failure(s, "switch");
    if (index >= s.candidates_.size())
      throw InvalidValue("candidate index " + std::to_string(index) + " out of range");
    s.apply(SessionEvent::kSwitch, Json{{"index", index}});
    s.selected_ = index;
    s.binding_.reset();
    s.failure_.reset();
    s.execution_failure_ = false;
  }

 private:
  static void require_execution_failure(const NegotiationSession& s, const char* what) {
    if (s.state_ == SessionState::kFailed && !s.execution_failure_)
      throw ProtocolError("session " + s.id_ + ": " + what + " after a negotiation failure");
  }

  ToolHub& hub_;
  NegotiationOptions opt_;
};

// Safety scan: every invocation happens while executing, after the session
// reached contract-confirmed; returns the offending session ids.
inline std::vector<std::string> unsafe_sessions(const std::vector<SessionRecord>& records) {
  std::map<std::string, std::string> state;
  std::map<std::string, bool> confirmed;
  std::set<std::string> bad;
  for (const auto& r : records) {
    if (r.event == "invoke") {
      if (state[r.session] != "executing" || !confirmed[r.session]) bad.insert(r.session);
      continue;
    }
    if (r.to == "contract-confirmed") confirmed[r.session] = true;
    if (r.event == "switch") confirmed[r.session] = false;
    state[r.session] = r.to;
  }
  return {bad.begin(), bad.end()};
}

}  // namespace contractflow

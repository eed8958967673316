#pragma once

// JSON mapping for the core types. Field names follow the type definitions;
// enum values use their lower-case hyphenated names ("list-of", "third-party").

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "contractflow/core/types.hpp"
#include "contractflow/error.hpp"

namespace contractflow {

namespace detail {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, const char*>, N>;

template <typename E, std::size_t N>
const char* enum_to_name(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  throw InvalidValue("unmapped enum value");
}

template <typename E, std::size_t N>
E enum_from_name(const NameTable<E, N>& table, const std::string& name, const char* what) {
  for (const auto& [e, n] : table)
    if (name == n) return e;
  throw ParseError(std::string("unknown ") + what + " '" + name + "'");
}

inline const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (j.is_object() && j.contains(key) && !j.at(key).is_null()) return j.at(key).get<T>();
  return fallback;
}

inline constexpr NameTable<TypeKind, 11> kTypeKinds{{
    {TypeKind::kText, "text"},
    {TypeKind::kNumber, "number"},
    {TypeKind::kBoolean, "boolean"},
    {TypeKind::kDateRange, "date-range"},
    {TypeKind::kGeoRegion, "geo-region"},
    {TypeKind::kImageRef, "image-ref"},
    {TypeKind::kAudioRef, "audio-ref"},
    {TypeKind::kRecord, "record"},
    {TypeKind::kTable, "table"},
    {TypeKind::kListOf, "list-of"},
    {TypeKind::kEnumOf, "enum-of"},
}};

inline constexpr NameTable<ModalityKind, 3> kModalities{{
    {ModalityKind::kText, "text"},
    {ModalityKind::kImageRef, "image-ref"},
    {ModalityKind::kAudioRef, "audio-ref"},
}};

inline constexpr NameTable<ToolOrigin, 3> kOrigins{{
    {ToolOrigin::kBuiltin, "builtin"},
    {ToolOrigin::kThirdParty, "third-party"},
    {ToolOrigin::kToolMaker, "toolmaker"},
}};

inline constexpr NameTable<Verdict, 3> kVerdicts{{
    {Verdict::kPass, "pass"},
    {Verdict::kFail, "fail"},
    {Verdict::kNotEvaluable, "not-evaluable"},
}};

inline constexpr NameTable<AttemptPhase, 4> kPhases{{
    {AttemptPhase::kInitial, "initial"},
    {AttemptPhase::kRetry, "retry"},
    {AttemptPhase::kCandidateSwitch, "candidate-switch"},
    {AttemptPhase::kToolMaker, "toolmaker"},
}};

inline constexpr NameTable<TraceStatus, 3> kTraceStatuses{{
    {TraceStatus::kComplete, "complete"},
    {TraceStatus::kPartial, "partial"},
    {TraceStatus::kFailed, "failed"},
}};

inline constexpr NameTable<NodeStatus, 4> kNodeStatuses{{
    {NodeStatus::kPending, "pending"},
    {NodeStatus::kCompleted, "completed"},
    {NodeStatus::kFailed, "failed"},
    {NodeStatus::kSkipped, "skipped"},
}};

}  // namespace detail

inline std::string to_string(TypeKind k) { return detail::enum_to_name(detail::kTypeKinds, k); }
inline std::string to_string(ToolOrigin o) { return detail::enum_to_name(detail::kOrigins, o); }
inline std::string to_string(Verdict v) { return detail::enum_to_name(detail::kVerdicts, v); }
inline std::string to_string(AttemptPhase p) { return detail::enum_to_name(detail::kPhases, p); }
inline std::string to_string(TraceStatus s) { return detail::enum_to_name(detail::kTraceStatuses, s); }
inline std::string to_string(NodeStatus s) { return detail::enum_to_name(detail::kNodeStatuses, s); }
inline std::string to_string(ModalityKind m) { return detail::enum_to_name(detail::kModalities, m); }

// --- SemanticType / Schema -------------------------------------------------

inline void to_json(Json& j, const SemanticType& t) {
  j = Json{{"kind", to_string(t.kind)}};
  if (t.unit) j["unit"] = *t.unit;
  if (t.kind == TypeKind::kListOf && t.element) j["element"] = *t.element;
  if (t.kind == TypeKind::kEnumOf) j["values"] = t.values;
}

inline void from_json(const Json& j, SemanticType& t) {
  if (j.is_string()) {  // shorthand: "text", "number"
    t = SemanticType::of(detail::enum_from_name(detail::kTypeKinds, j.get<std::string>(), "type kind"));
    return;
  }
  t = SemanticType::of(detail::enum_from_name(
      detail::kTypeKinds, detail::require(j, "kind").get<std::string>(), "type kind"));
  if (j.contains("unit") && !j.at("unit").is_null()) t.unit = j.at("unit").get<std::string>();
  if (t.kind == TypeKind::kListOf)
    t.element = std::make_shared<const SemanticType>(detail::require(j, "element").get<SemanticType>());
  if (t.kind == TypeKind::kEnumOf) t.values = detail::require(j, "values").get<std::vector<std::string>>();
}

inline void to_json(Json& j, const Field& f) {
  j = Json{{"name", f.name}, {"type", f.type}, {"required", f.required}};
}
inline void from_json(const Json& j, Field& f) {
  f.name = detail::require(j, "name").get<std::string>();
  f.type = detail::require(j, "type").get<SemanticType>();
  f.required = detail::get_or(j, "required", true);
}

inline void to_json(Json& j, const Schema& s) { j = Json{{"fields", s.fields}}; }
inline void from_json(const Json& j, Schema& s) {
  if (j.is_array()) {
    s.fields = j.get<std::vector<Field>>();
    return;
  }
  s.fields = detail::get_or(j, "fields", std::vector<Field>{});
}

// --- Constraints / criteria -----------------------------------------------

inline void to_json(Json& j, const ConstraintExpr& c) {
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, RangeConstraint>)
          j = Json{{"kind", "range"}, {"field", b.field}, {"lo", b.lo}, {"hi", b.hi}};
        else if constexpr (std::is_same_v<T, EnumMemberConstraint>)
          j = Json{{"kind", "enum-member"}, {"field", b.field}, {"values", b.values}};
        else if constexpr (std::is_same_v<T, FormatConstraint>)
          j = Json{{"kind", "format"}, {"field", b.field}, {"pattern", b.pattern}};
        else
          j = Json{{"kind", "policy"}, {"rule_id", b.rule_id}};
      },
      c.body);
  j["description"] = c.description;
}

inline void from_json(const Json& j, ConstraintExpr& c) {
  const auto kind = detail::require(j, "kind").get<std::string>();
  if (kind == "range")
    c.body = RangeConstraint{detail::require(j, "field").get<std::string>(),
                             detail::require(j, "lo").get<double>(), detail::require(j, "hi").get<double>()};
  else if (kind == "enum-member")
    c.body = EnumMemberConstraint{detail::require(j, "field").get<std::string>(),
                                  detail::require(j, "values").get<std::vector<std::string>>()};
  else if (kind == "format")
    c.body = FormatConstraint{detail::require(j, "field").get<std::string>(),
                              detail::require(j, "pattern").get<std::string>()};
  else if (kind == "policy")
    c.body = PolicyConstraint{detail::require(j, "rule_id").get<std::string>()};
  else
    throw ParseError("unknown constraint kind '" + kind + "'");
  c.description = detail::get_or(j, "description", std::string{});
}

inline void to_json(Json& j, const EvidenceReq& e) {
  j = Json{{"claim_field", e.claim_field}, {"min_sources", e.min_sources}};
}
inline void from_json(const Json& j, EvidenceReq& e) {
  e.claim_field = detail::require(j, "claim_field").get<std::string>();
  e.min_sources = detail::get_or(j, "min_sources", 1);
}

}  // namespace contractflow

// QualityCriterion is a std::variant alias, so its mapping goes through adl_serializer.
namespace nlohmann {
template <>
struct adl_serializer<contractflow::QualityCriterion> {
  static void to_json(json& j, const contractflow::QualityCriterion& q) {
    using namespace contractflow;
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, FieldPresent>)
            j = json{{"kind", "field-present"}, {"name", b.name}};
          else if constexpr (std::is_same_v<T, ValueInRange>)
            j = json{{"kind", "value-in-range"}, {"name", b.name}, {"lo", b.lo}, {"hi", b.hi}};
          else if constexpr (std::is_same_v<T, MatchesFormat>)
            j = json{{"kind", "matches-format"}, {"name", b.name}, {"pattern", b.pattern}};
          else
            j = json{{"kind", "cited-rule"}, {"rule_id", b.rule_id}};
        },
        q);
  }
  static void from_json(const json& j, contractflow::QualityCriterion& q) {
    using namespace contractflow;
    const auto kind = contractflow::detail::require(j, "kind").get<std::string>();
    if (kind == "field-present")
      q = FieldPresent{contractflow::detail::require(j, "name").get<std::string>()};
    else if (kind == "value-in-range")
      q = ValueInRange{contractflow::detail::require(j, "name").get<std::string>(), contractflow::detail::require(j, "lo").get<double>(),
                       contractflow::detail::require(j, "hi").get<double>()};
    else if (kind == "matches-format")
      q = MatchesFormat{contractflow::detail::require(j, "name").get<std::string>(),
                        contractflow::detail::require(j, "pattern").get<std::string>()};
    else if (kind == "cited-rule")
      q = CitedRule{contractflow::detail::require(j, "rule_id").get<std::string>()};
    else
      throw ParseError("unknown quality criterion kind '" + kind + "'");
  }
};
}  // namespace nlohmann

namespace contractflow {

// --- Tasks and plans -------------------------------------------------------

inline void to_json(Json& j, const ModalityInput& m) {
  j = Json{{"kind", detail::enum_to_name(detail::kModalities, m.kind)}, {"payload", m.payload}};
}
inline void from_json(const Json& j, ModalityInput& m) {
  m.kind = detail::enum_from_name(detail::kModalities, detail::require(j, "kind").get<std::string>(), "modality");
  m.payload = detail::require(j, "payload").get<std::string>();
}

inline void to_json(Json& j, const TaskEnvelope& t) {
  j = Json{{"id", t.id},
           {"instruction", t.instruction},
           {"context", t.context},
           {"knowledge_refs", t.knowledge_refs},
           {"state_ref", t.state_ref}};
  if (!t.attachments.empty()) j["attachments"] = t.attachments;
}
inline void from_json(const Json& j, TaskEnvelope& t) {
  t.id = detail::get_or(j, "id", std::string{});
  t.instruction = detail::require(j, "instruction").get<std::string>();
  t.context = detail::get_or(j, "context", Json::object());
  if (!t.context.is_object()) throw ParseError("task context must be an object");
  t.knowledge_refs = detail::get_or(j, "knowledge_refs", std::vector<std::string>{});
  t.state_ref = detail::get_or(j, "state_ref", std::string{});
  t.attachments = detail::get_or(j, "attachments", std::vector<ModalityInput>{});
}

inline void to_json(Json& j, const PlanNode& n) {
  j = Json{{"id", n.id},           {"goal", n.goal},
           {"inputs", n.inputs},   {"outputs", n.outputs},
           {"constraints", n.constraints}, {"evidence_reqs", n.evidence_reqs}};
}
inline void from_json(const Json& j, PlanNode& n) {
  n.id = detail::require(j, "id").get<std::string>();
  n.goal = detail::get_or(j, "goal", std::string{});
  n.inputs = detail::get_or(j, "inputs", Schema{});
  n.outputs = detail::get_or(j, "outputs", Schema{});
  n.constraints = detail::get_or(j, "constraints", std::vector<ConstraintExpr>{});
  n.evidence_reqs = detail::get_or(j, "evidence_reqs", std::vector<EvidenceReq>{});
}

inline void to_json(Json& j, const Edge& e) { j = Json{{"from", e.from}, {"to", e.to}}; }
inline void from_json(const Json& j, Edge& e) {
  e.from = detail::require(j, "from").get<std::string>();
  e.to = detail::require(j, "to").get<std::string>();
}

inline void to_json(Json& j, const PlanSpec& p) {
  j = Json{{"nodes", p.nodes}, {"edges", p.edges}, {"task_ref", p.task_ref}};
}
inline void from_json(const Json& j, PlanSpec& p) {
  p.nodes = detail::require(j, "nodes").get<std::vector<PlanNode>>();
  p.edges = detail::get_or(j, "edges", std::vector<Edge>{});
  p.task_ref = detail::get_or(j, "task_ref", std::string{});
}

// --- Contracts and tools ---------------------------------------------------

inline void to_json(Json& j, const Capability& c) { j = Json{{"tag", c.tag}, {"description", c.description}}; }
inline void from_json(const Json& j, Capability& c) {
  c.tag = detail::require(j, "tag").get<std::string>();
  c.description = detail::get_or(j, "description", std::string{});
}

inline void to_json(Json& j, const NeedContract& c) {
  j = Json{{"id", c.id},
           {"node_id", c.node_id},
           {"capability", c.capability},
           {"input_schema", c.input_schema},
           {"output_schema", c.output_schema},
           {"preconditions", c.preconditions},
           {"constraints", c.constraints},
           {"quality", c.quality}};
}
inline void from_json(const Json& j, NeedContract& c) {
  c.node_id = detail::get_or(j, "node_id", std::string{});
  c.id = detail::get_or(j, "id", c.node_id);
  c.capability = detail::require(j, "capability").get<Capability>();
  c.input_schema = detail::get_or(j, "input_schema", Schema{});
  c.output_schema = detail::get_or(j, "output_schema", Schema{});
  c.preconditions = detail::get_or(j, "preconditions", std::vector<ConstraintExpr>{});
  c.constraints = detail::get_or(j, "constraints", std::vector<ConstraintExpr>{});
  c.quality = detail::get_or(j, "quality", std::vector<QualityCriterion>{});
}

inline void to_json(Json& j, const Reliability& r) {
  j = Json{{"attempts", r.attempts}, {"successes", r.successes}};
}
inline void from_json(const Json& j, Reliability& r) {
  r.attempts = detail::get_or<std::int64_t>(j, "attempts", 0);
  r.successes = detail::get_or<std::int64_t>(j, "successes", 0);
}

inline void to_json(Json& j, const Provenance& p) {
  j = Json{{"origin", to_string(p.origin)}, {"version", p.version}, {"registered_at", p.registered_at}};
}
inline void from_json(const Json& j, Provenance& p) {
  p.origin = detail::enum_from_name(detail::kOrigins, detail::get_or(j, "origin", std::string{"builtin"}), "origin");
  p.version = detail::get_or(j, "version", std::string{});
  p.registered_at = detail::get_or<Timestamp>(j, "registered_at", 0);
}

inline void to_json(Json& j, const ToolCard& c) {
  j = Json{{"id", c.id},
           {"name", c.name},
           {"capabilities", c.capabilities},
           {"input_schema", c.input_schema},
           {"output_schema", c.output_schema},
           {"preconditions", c.preconditions},
           {"constraints", c.constraints},
           {"reliability", c.reliability},
           {"provenance", c.provenance}};
}
inline void from_json(const Json& j, ToolCard& c) {
  c.id = detail::require(j, "id").get<std::string>();
  c.name = detail::get_or(j, "name", c.id);
  c.capabilities = detail::get_or(j, "capabilities", std::vector<Capability>{});
  c.input_schema = detail::get_or(j, "input_schema", Schema{});
  c.output_schema = detail::get_or(j, "output_schema", Schema{});
  c.preconditions = detail::get_or(j, "preconditions", std::vector<ConstraintExpr>{});
  c.constraints = detail::get_or(j, "constraints", std::vector<ConstraintExpr>{});
  c.reliability = detail::get_or(j, "reliability", Reliability{});
  c.provenance = detail::get_or(j, "provenance", Provenance{});
}

// --- Traces and deliverables -----------------------------------------------

inline void to_json(Json& j, const CheckResult& c) {
  j = Json{{"check", c.check}, {"source", c.source}, {"verdict", to_string(c.verdict)}};
  if (!c.detail.empty()) j["detail"] = c.detail;
}
inline void from_json(const Json& j, CheckResult& c) {
  c.check = detail::require(j, "check").get<std::string>();
  c.source = detail::get_or(j, "source", std::string{});
  c.verdict = detail::enum_from_name(detail::kVerdicts, detail::require(j, "verdict").get<std::string>(), "verdict");
  c.detail = detail::get_or(j, "detail", std::string{});
}

inline void to_json(Json& j, const StepRecord& s) {
  j = Json{{"step_id", s.step_id},
           {"node_id", s.node_id},
           {"contract_id", s.contract_id},
           {"tool_id", s.tool_id},
           {"session_id", s.session_id},
           {"input_digest", s.input_digest},
           {"input_record", s.input_record},
           {"input_sources", s.input_sources},
           {"output_record", s.output_record},
           {"validation", s.validation},
           {"succeeded", s.succeeded},
           {"error", s.error},
           {"phase", to_string(s.phase)},
           {"started_at", s.started_at},
           {"ended_at", s.ended_at},
           {"attempt_index", s.attempt_index}};
}
inline void from_json(const Json& j, StepRecord& s) {
  s.step_id = detail::require(j, "step_id").get<std::string>();
  s.node_id = detail::require(j, "node_id").get<std::string>();
  s.contract_id = detail::get_or(j, "contract_id", std::string{});
  s.tool_id = detail::get_or(j, "tool_id", std::string{});
  s.session_id = detail::get_or(j, "session_id", std::string{});
  s.input_digest = detail::get_or(j, "input_digest", std::string{});
  s.input_record = detail::get_or(j, "input_record", Record::object());
  s.input_sources = detail::get_or(j, "input_sources", std::map<std::string, std::string>{});
  s.output_record = detail::get_or(j, "output_record", Record::object());
  s.validation = detail::get_or(j, "validation", std::vector<CheckResult>{});
  s.succeeded = detail::get_or(j, "succeeded", false);
  s.error = detail::get_or(j, "error", std::string{});
  s.phase = detail::enum_from_name(detail::kPhases, detail::get_or(j, "phase", std::string{"initial"}), "phase");
  s.started_at = detail::get_or<Timestamp>(j, "started_at", 0);
  s.ended_at = detail::get_or<Timestamp>(j, "ended_at", 0);
  s.attempt_index = detail::get_or(j, "attempt_index", 0);
}

inline void to_json(Json& j, const EvidenceEntry& e) {
  j = Json{{"claim_field", e.claim_field}, {"step_ids", e.step_ids}, {"source_ids", e.source_ids}};
}
inline void from_json(const Json& j, EvidenceEntry& e) {
  e.claim_field = detail::require(j, "claim_field").get<std::string>();
  e.step_ids = detail::get_or(j, "step_ids", std::vector<std::string>{});
  e.source_ids = detail::get_or(j, "source_ids", std::vector<std::string>{});
}

inline void to_json(Json& j, const Deliverable& d) {
  j = Json{{"answer", d.answer},
           {"structured", d.structured},
           {"evidence", d.evidence},
           {"rule_citations", d.rule_citations}};
}
inline void from_json(const Json& j, Deliverable& d) {
  d.answer = detail::get_or(j, "answer", std::string{});
  d.structured = detail::get_or(j, "structured", Record::object());
  d.evidence = detail::get_or(j, "evidence", std::vector<EvidenceEntry>{});
  d.rule_citations = detail::get_or(j, "rule_citations", std::vector<std::string>{});
}

// Traces on disk are line-delimited: one step record per line, then one
// summary line carrying the status and per-node outcome.
inline std::string trace_to_jsonl(const ExecutionTrace& t) {
  std::string out;
  for (const auto& s : t.steps) {
    Json line = s;
    line["record"] = "step";
    out += line.dump();
    out += '\n';
  }
  Json nodes = Json::object();
  for (const auto& [id, st] : t.node_status) nodes[id] = to_string(st);
  Json summary{{"record", "summary"}, {"status", to_string(t.status)}, {"nodes", nodes}};
  out += summary.dump();
  out += '\n';
  return out;
}

inline ExecutionTrace trace_from_jsonl(std::istream& in) {
  ExecutionTrace t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw ParseError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.value("record", std::string{"step"}) == "summary") {
      t.status = detail::enum_from_name(detail::kTraceStatuses, j.at("status").get<std::string>(), "trace status");
      const Json nodes = j.value("nodes", Json::object());
      for (const auto& [id, st] : nodes.items())
        t.node_status[id] = detail::enum_from_name(detail::kNodeStatuses, st.get<std::string>(), "node status");
    } else {
      t.steps.push_back(j.get<StepRecord>());
    }
  }
  return t;
}

inline ExecutionTrace trace_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  return trace_from_jsonl(in);
}

// Reads a whole JSON document from disk.
inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

template <typename T>
T load_document(const std::string& path) {
  const auto j = load_json_file(path);
  try {
    return j.get<T>();
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace contractflow

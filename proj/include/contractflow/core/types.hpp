#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace contractflow {

using Json = nlohmann::json;
// A value record: a JSON object keyed by field name.
using Record = nlohmann::json;
// Logical or wall-clock ticks, depending on the Clock in use.
using Timestamp = std::int64_t;

// ---------------------------------------------------------------------------
// Semantic types and schemas
// ---------------------------------------------------------------------------

enum class TypeKind {
  kText,
  kNumber,
  kBoolean,
  kDateRange,
  kGeoRegion,
  kImageRef,
  kAudioRef,
  kRecord,
  kTable,
  kListOf,
  kEnumOf,
};

inline constexpr int kMaxListDepth = 3;

struct SemanticType {
  TypeKind kind = TypeKind::kText;
  std::optional<std::string> unit;               // number only
  std::shared_ptr<const SemanticType> element;   // list-of only
  std::vector<std::string> values;               // enum-of only

  static SemanticType text() { return {TypeKind::kText, {}, {}, {}}; }
  static SemanticType number(std::optional<std::string> unit = std::nullopt) {
    return {TypeKind::kNumber, std::move(unit), {}, {}};
  }
  static SemanticType boolean() { return {TypeKind::kBoolean, {}, {}, {}}; }
  static SemanticType of(TypeKind k) { return {k, {}, {}, {}}; }
  static SemanticType list_of(SemanticType elem) {
    return {TypeKind::kListOf, {}, std::make_shared<const SemanticType>(std::move(elem)), {}};
  }
  static SemanticType enum_of(std::vector<std::string> vs) {
    return {TypeKind::kEnumOf, {}, {}, std::move(vs)};
  }

  friend bool operator==(const SemanticType& a, const SemanticType& b) {
    if (a.kind != b.kind || a.unit != b.unit || a.values != b.values) return false;
    if (!a.element || !b.element) return a.element == b.element;
    return *a.element == *b.element;
  }
};

struct Field {
  std::string name;
  SemanticType type;
  bool required = true;

  friend bool operator==(const Field&, const Field&) = default;
};

struct Schema {
  std::vector<Field> fields;

  const Field* find(std::string_view name) const {
    for (const auto& f : fields)
      if (f.name == name) return &f;
    return nullptr;
  }
  bool empty() const { return fields.empty(); }

  friend bool operator==(const Schema&, const Schema&) = default;
};

// ---------------------------------------------------------------------------
// Constraints, evidence requirements, quality criteria
// ---------------------------------------------------------------------------

struct RangeConstraint {
  std::string field;
  double lo = 0;
  double hi = 0;
  friend bool operator==(const RangeConstraint&, const RangeConstraint&) = default;
};
struct EnumMemberConstraint {
  std::string field;
  std::vector<std::string> values;
  friend bool operator==(const EnumMemberConstraint&, const EnumMemberConstraint&) = default;
};
struct FormatConstraint {
  std::string field;
  std::string pattern;  // ECMAScript regex, full match
  friend bool operator==(const FormatConstraint&, const FormatConstraint&) = default;
};
struct PolicyConstraint {
  std::string rule_id;
  friend bool operator==(const PolicyConstraint&, const PolicyConstraint&) = default;
};

struct ConstraintExpr {
  std::variant<RangeConstraint, EnumMemberConstraint, FormatConstraint, PolicyConstraint> body;
  std::string description;

  // Field the constraint reads, or nullopt for policy constraints.
  std::optional<std::string> field() const {
    return std::visit(
        [](const auto& c) -> std::optional<std::string> {
          if constexpr (requires { c.field; }) return c.field;
          return std::nullopt;
        },
        body);
  }

  friend bool operator==(const ConstraintExpr&, const ConstraintExpr&) = default;
};

struct EvidenceReq {
  std::string claim_field;
  int min_sources = 1;
  friend bool operator==(const EvidenceReq&, const EvidenceReq&) = default;
};

struct FieldPresent {
  std::string name;
  friend bool operator==(const FieldPresent&, const FieldPresent&) = default;
};
struct ValueInRange {
  std::string name;
  double lo = 0;
  double hi = 0;
  friend bool operator==(const ValueInRange&, const ValueInRange&) = default;
};
struct MatchesFormat {
  std::string name;
  std::string pattern;
  friend bool operator==(const MatchesFormat&, const MatchesFormat&) = default;
};
struct CitedRule {
  std::string rule_id;
  friend bool operator==(const CitedRule&, const CitedRule&) = default;
};

using QualityCriterion = std::variant<FieldPresent, ValueInRange, MatchesFormat, CitedRule>;

// ---------------------------------------------------------------------------
// Tasks and plans
// ---------------------------------------------------------------------------

enum class ModalityKind { kText, kImageRef, kAudioRef };

struct ModalityInput {
  ModalityKind kind = ModalityKind::kText;
  std::string payload;
  friend bool operator==(const ModalityInput&, const ModalityInput&) = default;
};

struct TaskEnvelope {
  std::string id;
  std::string instruction;
  Json context = Json::object();
  std::vector<std::string> knowledge_refs;
  std::string state_ref;
  std::vector<ModalityInput> attachments;
};

struct PlanNode {
  std::string id;
  std::string goal;
  Schema inputs;
  Schema outputs;
  std::vector<ConstraintExpr> constraints;
  std::vector<EvidenceReq> evidence_reqs;

  friend bool operator==(const PlanNode&, const PlanNode&) = default;
};

struct Edge {
  std::string from;
  std::string to;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct PlanSpec {
  std::vector<PlanNode> nodes;
  std::vector<Edge> edges;
  std::string task_ref;

  const PlanNode* find(std::string_view id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }

  friend bool operator==(const PlanSpec&, const PlanSpec&) = default;
};

// ---------------------------------------------------------------------------
// Contracts and tools
// ---------------------------------------------------------------------------

struct Capability {
  std::string tag;
  std::string description;
  friend bool operator==(const Capability&, const Capability&) = default;
};

struct NeedContract {
  std::string id;  // defaults to node_id when absent on disk
  std::string node_id;
  Capability capability;
  Schema input_schema;
  Schema output_schema;
  std::vector<ConstraintExpr> preconditions;
  std::vector<ConstraintExpr> constraints;
  std::vector<QualityCriterion> quality;

  friend bool operator==(const NeedContract&, const NeedContract&) = default;
};

enum class ToolOrigin { kBuiltin, kThirdParty, kToolMaker };

struct Reliability {
  std::int64_t attempts = 0;
  std::int64_t successes = 0;

  // Untried tools count as fully reliable.
  double rate() const {
    return attempts == 0 ? 1.0 : static_cast<double>(successes) / static_cast<double>(attempts);
  }
  friend bool operator==(const Reliability&, const Reliability&) = default;
};

struct Provenance {
  ToolOrigin origin = ToolOrigin::kBuiltin;
  std::string version;
  Timestamp registered_at = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ToolCard {
  std::string id;
  std::string name;
  std::vector<Capability> capabilities;
  Schema input_schema;
  Schema output_schema;
  std::vector<ConstraintExpr> preconditions;
  std::vector<ConstraintExpr> constraints;
  Reliability reliability;
  Provenance provenance;

  bool has_tag(std::string_view tag) const {
    for (const auto& c : capabilities)
      if (c.tag == tag) return true;
    return false;
  }

  friend bool operator==(const ToolCard&, const ToolCard&) = default;
};

// ---------------------------------------------------------------------------
// Traces and deliverables
// ---------------------------------------------------------------------------

enum class Verdict { kPass, kFail, kNotEvaluable };

struct CheckResult {
  std::string check;   // e.g. "schema:yield_t", "field-present(q)"
  std::string source;  // criterion that produced it: "schema", "quality[0]", "constraint[1]"
  Verdict verdict = Verdict::kPass;
  std::string detail;

  bool passed() const { return verdict == Verdict::kPass; }
  friend bool operator==(const CheckResult&, const CheckResult&) = default;
};

// Recovery phase an attempt belongs to.
enum class AttemptPhase { kInitial, kRetry, kCandidateSwitch, kToolMaker };

struct StepRecord {
  std::string step_id;
  std::string node_id;
  std::string contract_id;
  std::string tool_id;
  std::string session_id;
  std::string input_digest;
  Record input_record = Record::object();
  // field name -> producing step id, or "context"
  std::map<std::string, std::string> input_sources;
  Record output_record = Record::object();
  std::vector<CheckResult> validation;
  bool succeeded = false;
  std::string error;
  AttemptPhase phase = AttemptPhase::kInitial;
  Timestamp started_at = 0;
  Timestamp ended_at = 0;
  int attempt_index = 0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class TraceStatus { kComplete, kPartial, kFailed };
enum class NodeStatus { kPending, kCompleted, kFailed, kSkipped };

struct ExecutionTrace {
  std::vector<StepRecord> steps;
  TraceStatus status = TraceStatus::kComplete;
  std::map<std::string, NodeStatus> node_status;

  const StepRecord* find(std::string_view step_id) const {
    for (const auto& s : steps)
      if (s.step_id == step_id) return &s;
    return nullptr;
  }
};

struct EvidenceEntry {
  std::string claim_field;
  std::vector<std::string> step_ids;
  std::vector<std::string> source_ids;
  friend bool operator==(const EvidenceEntry&, const EvidenceEntry&) = default;
};

struct Deliverable {
  std::string answer;
  Record structured = Record::object();
  std::vector<EvidenceEntry> evidence;
  std::vector<std::string> rule_citations;
};

}  // namespace contractflow

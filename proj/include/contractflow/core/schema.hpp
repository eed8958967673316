#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "contractflow/core/serialize.hpp"
#include "contractflow/core/types.hpp"

namespace contractflow {

// ---------------------------------------------------------------------------
// Well-formedness
// ---------------------------------------------------------------------------

inline int list_depth(const SemanticType& t) {
  int depth = 0;
  const SemanticType* cur = &t;
  while (cur->kind == TypeKind::kListOf && cur->element) {
    ++depth;
    cur = cur->element.get();
  }
  return depth;
}

// Returns a problem description, or empty when the type is well formed.
inline std::string type_problem(const SemanticType& t) {
  if (t.kind == TypeKind::kListOf) {
    if (!t.element) return "list-of without element type";
    if (list_depth(t) > kMaxListDepth) return "list-of nesting deeper than " + std::to_string(kMaxListDepth);
    return type_problem(*t.element);
  }
  if (t.kind == TypeKind::kEnumOf && t.values.empty()) return "enum-of with empty value set";
  if (t.unit && t.kind != TypeKind::kNumber) return "unit on non-number type";
  return {};
}

inline std::vector<std::string> schema_problems(const Schema& s) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& f : s.fields) {
    if (f.name.empty()) out.push_back("field with empty name");
    if (!seen.insert(f.name).second) out.push_back("duplicate field '" + f.name + "'");
    if (auto p = type_problem(f.type); !p.empty()) out.push_back("field '" + f.name + "': " + p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Type compatibility
// ---------------------------------------------------------------------------

// Exact kind and unit equality; list-of is covariant in its element; an
// enum producer is compatible when its value set is contained in the
// consumer's. No numeric widening.
inline bool type_compatible(const SemanticType& producer, const SemanticType& consumer) {
  if (producer.kind != consumer.kind || producer.unit != consumer.unit) return false;
  switch (producer.kind) {
    case TypeKind::kListOf:
      return producer.element && consumer.element && type_compatible(*producer.element, *consumer.element);
    case TypeKind::kEnumOf:
      return std::all_of(producer.values.begin(), producer.values.end(), [&](const std::string& v) {
        return std::find(consumer.values.begin(), consumer.values.end(), v) != consumer.values.end();
      });
    default:
      return true;
  }
}

inline std::string describe(const SemanticType& t) {
  std::string s = to_string(t.kind);
  if (t.kind == TypeKind::kListOf && t.element) s += "(" + describe(*t.element) + ")";
  if (t.unit) s += "(" + *t.unit + ")";
  if (t.kind == TypeKind::kEnumOf) {
    s += "{";
    for (std::size_t i = 0; i < t.values.size(); ++i) s += (i ? "," : "") + t.values[i];
    s += "}";
  }
  return s;
}

struct FieldMapping {
  std::string consumer_field;
  std::string producer_field;
  friend bool operator==(const FieldMapping&, const FieldMapping&) = default;
};

struct FieldMismatch {
  std::string field;
  std::string reason;
  friend bool operator==(const FieldMismatch&, const FieldMismatch&) = default;
};

struct CompatReport {
  bool satisfied = true;
  std::vector<FieldMapping> mapping;        // consumer field -> producer field
  std::vector<std::string> missing;         // required consumer fields with no producer field
  std::vector<FieldMismatch> mismatches;    // required consumer fields with an unusable producer field
  std::vector<std::string> warnings;        // optional consumer fields left unmatched

  friend bool operator==(const CompatReport&, const CompatReport&) = default;
};

// A required consumer field is satisfied only by a *required* producer field
// of the same name with a compatible type; an optional producer field may be
// absent at run time. This keeps coverage transitive.
inline CompatReport schema_compatible(const Schema& producer, const Schema& consumer) {
  CompatReport r;
  for (const auto& cf : consumer.fields) {
    const Field* pf = producer.find(cf.name);
    if (!pf) {
      if (cf.required) {
        r.missing.push_back(cf.name);
      } else {
        r.warnings.push_back("optional field '" + cf.name + "' not produced");
      }
      continue;
    }
    const bool types_ok = type_compatible(pf->type, cf.type);
    if (cf.required) {
      if (!types_ok) {
        r.mismatches.push_back({cf.name, "type " + describe(pf->type) + " is not compatible with " + describe(cf.type)});
      } else if (!pf->required) {
        r.mismatches.push_back({cf.name, "producer field is optional"});
      } else {
        r.mapping.push_back({cf.name, pf->name});
      }
    } else if (types_ok) {
      r.mapping.push_back({cf.name, pf->name});
    } else {
      r.warnings.push_back("optional field '" + cf.name + "' has incompatible producer type");
    }
  }
  r.satisfied = r.missing.empty() && r.mismatches.empty();
  return r;
}

inline void to_json(Json& j, const CompatReport& r) {
  Json mapping = Json::array();
  for (const auto& m : r.mapping) mapping.push_back({{"consumer", m.consumer_field}, {"producer", m.producer_field}});
  Json mism = Json::array();
  for (const auto& m : r.mismatches) mism.push_back({{"field", m.field}, {"reason", m.reason}});
  j = Json{{"satisfied", r.satisfied}, {"mapping", mapping}, {"missing", r.missing},
           {"mismatches", mism},       {"warnings", r.warnings}};
}

inline void from_json(const Json& j, CompatReport& r) {
  r = CompatReport{};
  r.satisfied = j.value("satisfied", false);
  for (const auto& m : j.value("mapping", Json::array()))
    r.mapping.push_back({m.at("consumer").get<std::string>(), m.at("producer").get<std::string>()});
  r.missing = j.value("missing", std::vector<std::string>{});
  for (const auto& m : j.value("mismatches", Json::array()))
    r.mismatches.push_back({m.at("field").get<std::string>(), m.at("reason").get<std::string>()});
  r.warnings = j.value("warnings", std::vector<std::string>{});
}

// Union of two schemas; fields of `a` win on name collisions.
inline Schema merge_schemas(const Schema& a, const Schema& b) {
  Schema out = a;
  for (const auto& f : b.fields)
    if (!out.find(f.name)) out.fields.push_back(f);
  return out;
}

// ---------------------------------------------------------------------------
// Value conformance
// ---------------------------------------------------------------------------

inline bool conforms(const Json& value, const SemanticType& type) {
  switch (type.kind) {
    case TypeKind::kText:
      return value.is_string();
    case TypeKind::kNumber:
      return value.is_number();
    case TypeKind::kBoolean:
      return value.is_boolean();
    case TypeKind::kDateRange: {
      if (!value.is_object() || !value.contains("start") || !value.contains("end")) return false;
      const auto& s = value.at("start");
      const auto& e = value.at("end");
      return s.is_string() && e.is_string() && s.get<std::string>() <= e.get<std::string>();
    }
    case TypeKind::kGeoRegion:
    case TypeKind::kImageRef:
    case TypeKind::kAudioRef:
      return value.is_string() && !value.get<std::string>().empty();
    case TypeKind::kRecord:
      return value.is_object();
    case TypeKind::kTable:
      return value.is_array() && std::all_of(value.begin(), value.end(), [](const Json& row) { return row.is_object(); });
    case TypeKind::kListOf:
      return value.is_array() && type.element &&
             std::all_of(value.begin(), value.end(), [&](const Json& v) { return conforms(v, *type.element); });
    case TypeKind::kEnumOf:
      return value.is_string() &&
             std::find(type.values.begin(), type.values.end(), value.get<std::string>()) != type.values.end();
  }
  return false;
}

// Field-level conformance check of a record against a schema.
struct ConformanceIssue {
  std::string field;
  std::string reason;  // "missing" or "type"
};

inline std::vector<ConformanceIssue> conformance_issues(const Record& record, const Schema& schema) {
  std::vector<ConformanceIssue> out;
  for (const auto& f : schema.fields) {
    if (!record.is_object() || !record.contains(f.name) || record.at(f.name).is_null()) {
      if (f.required) out.push_back({f.name, "missing"});
      continue;
    }
    if (!conforms(record.at(f.name), f.type)) out.push_back({f.name, "type"});
  }
  return out;
}

// A representative value of the given type, used to build test inputs.
inline Json sample_value(const SemanticType& t) {
  switch (t.kind) {
    case TypeKind::kText:
      return "sample";
    case TypeKind::kNumber:
      return 1.0;
    case TypeKind::kBoolean:
      return true;
    case TypeKind::kDateRange:
      return Json{{"start", "2024-01-01"}, {"end", "2024-01-31"}};
    case TypeKind::kGeoRegion:
      return "region-0";
    case TypeKind::kImageRef:
      return "image://sample";
    case TypeKind::kAudioRef:
      return "audio://sample";
    case TypeKind::kRecord:
      return Json::object();
    case TypeKind::kTable:
      return Json::array();
    case TypeKind::kListOf:
      return Json::array({t.element ? sample_value(*t.element) : Json()});
    case TypeKind::kEnumOf:
      return t.values.empty() ? Json("") : Json(t.values.front());
  }
  return {};
}

// Schema conformance of a tool output, one check per declared output field.
inline std::vector<CheckResult> schema_checks(const Record& output, const Schema& schema) {
  std::vector<CheckResult> out;
  const auto issues = conformance_issues(output, schema);
  for (const auto& f : schema.fields) {
    CheckResult r{"schema:" + f.name, "schema", Verdict::kPass, {}};
    for (const auto& i : issues)
      if (i.field == f.name) {
        r.verdict = Verdict::kFail;
        r.detail = i.reason == "missing" ? "required field '" + f.name + "' missing" : "field '" + f.name + "' has the wrong type";
      }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace contractflow

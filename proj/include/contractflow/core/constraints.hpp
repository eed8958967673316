#pragma once

#include <algorithm>
#include <map>
#include <regex>
#include <sstream>
#include <string>

#include "contractflow/core/types.hpp"

namespace contractflow {

namespace detail {

inline bool regex_full_match(const std::string& pattern, const std::string& text, std::string* error) {
  thread_local std::map<std::string, std::regex> cache;
  auto it = cache.find(pattern);
  if (it == cache.end()) {
    try {
      it = cache.emplace(pattern, std::regex(pattern, std::regex::ECMAScript)).first;
    } catch (const std::regex_error& e) {
      if (error) *error = std::string("bad pattern: ") + e.what();
      return false;
    }
  }
  return std::regex_match(text, it->second);
}

inline std::string fmt_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::string scalar_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

inline bool cites(const Record& record, const std::string& rule_id) {
  if (!record.is_object() || !record.contains("rule_citations")) return false;
  const auto& rc = record.at("rule_citations");
  if (!rc.is_array()) return false;
  return std::any_of(rc.begin(), rc.end(), [&](const Json& r) { return r.is_string() && r.get<std::string>() == rule_id; });
}

inline const Json* field_value(const Record& record, const std::string& name) {
  if (!record.is_object()) return nullptr;
  auto it = record.find(name);
  if (it == record.end() || it->is_null()) return nullptr;
  return &*it;
}

inline CheckResult range_check(const Record& record, const std::string& field, double lo, double hi,
                               std::string check, std::string source) {
  CheckResult r{std::move(check), std::move(source), Verdict::kPass, {}};
  const Json* v = field_value(record, field);
  if (!v) {
    r.verdict = Verdict::kNotEvaluable;
    r.detail = "field '" + field + "' absent";
  } else if (!v->is_number()) {
    r.verdict = Verdict::kFail;
    r.detail = "field '" + field + "' is not a number";
  } else {
    const double x = v->get<double>();
    if (x < lo || x > hi) {
      r.verdict = Verdict::kFail;
      r.detail = fmt_number(x) + " outside [" + fmt_number(lo) + ", " + fmt_number(hi) + "]";
    }
  }
  return r;
}

inline CheckResult format_check(const Record& record, const std::string& field, const std::string& pattern,
                                std::string check, std::string source) {
  CheckResult r{std::move(check), std::move(source), Verdict::kPass, {}};
  const Json* v = field_value(record, field);
  if (!v) {
    r.verdict = Verdict::kNotEvaluable;
    r.detail = "field '" + field + "' absent";
    return r;
  }
  std::string err;
  if (!regex_full_match(pattern, scalar_text(*v), &err)) {
    r.verdict = Verdict::kFail;
    r.detail = err.empty() ? "'" + scalar_text(*v) + "' does not match " + pattern : err;
  }
  return r;
}

}  // namespace detail

inline std::string describe(const ConstraintExpr& c) {
  return std::visit(
      [](const auto& b) -> std::string {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, RangeConstraint>)
          return "range(" + b.field + ", " + detail::fmt_number(b.lo) + ", " + detail::fmt_number(b.hi) + ")";
        else if constexpr (std::is_same_v<T, EnumMemberConstraint>) {
          std::string s = "enum-member(" + b.field + ", {";
          for (std::size_t i = 0; i < b.values.size(); ++i) s += (i ? "," : "") + b.values[i];
          return s + "})";
        } else if constexpr (std::is_same_v<T, FormatConstraint>)
          return "format(" + b.field + ", " + b.pattern + ")";
        else
          return "policy(" + b.rule_id + ")";
      },
      c.body);
}

inline std::string describe(const QualityCriterion& q) {
  return std::visit(
      [](const auto& b) -> std::string {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, FieldPresent>)
          return "field-present(" + b.name + ")";
        else if constexpr (std::is_same_v<T, ValueInRange>)
          return "value-in-range(" + b.name + ", " + detail::fmt_number(b.lo) + ", " + detail::fmt_number(b.hi) + ")";
        else if constexpr (std::is_same_v<T, MatchesFormat>)
          return "matches-format(" + b.name + ", " + b.pattern + ")";
        else
          return "cited-rule(" + b.rule_id + ")";
      },
      q);
}

// Field a criterion reads, or empty for cited-rule.
inline std::string criterion_field(const QualityCriterion& q) {
  return std::visit(
      [](const auto& b) -> std::string {
        if constexpr (requires { b.name; }) return b.name;
        return {};
      },
      q);
}

// Policy constraints hold when the record cites the rule in its
// `rule_citations` array.
inline CheckResult evaluate(const ConstraintExpr& c, const Record& record, const std::string& source) {
  const std::string check = describe(c);
  return std::visit(
      [&](const auto& b) -> CheckResult {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, RangeConstraint>) {
          return detail::range_check(record, b.field, b.lo, b.hi, check, source);
        } else if constexpr (std::is_same_v<T, EnumMemberConstraint>) {
          CheckResult r{check, source, Verdict::kPass, {}};
          const Json* v = detail::field_value(record, b.field);
          if (!v) {
            r.verdict = Verdict::kNotEvaluable;
            r.detail = "field '" + b.field + "' absent";
          } else if (std::find(b.values.begin(), b.values.end(), detail::scalar_text(*v)) == b.values.end()) {
            r.verdict = Verdict::kFail;
            r.detail = "'" + detail::scalar_text(*v) + "' not in value set";
          }
          return r;
        } else if constexpr (std::is_same_v<T, FormatConstraint>) {
          return detail::format_check(record, b.field, b.pattern, check, source);
        } else {
          CheckResult r{check, source, Verdict::kPass, {}};
          if (!detail::cites(record, b.rule_id)) {
            r.verdict = Verdict::kFail;
            r.detail = "rule '" + b.rule_id + "' not cited";
          }
          return r;
        }
      },
      c.body);
}

inline CheckResult evaluate(const QualityCriterion& q, const Record& record, const std::string& source) {
  const std::string check = describe(q);
  return std::visit(
      [&](const auto& b) -> CheckResult {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, FieldPresent>) {
          CheckResult r{check, source, Verdict::kPass, {}};
          if (!detail::field_value(record, b.name)) {
            r.verdict = Verdict::kFail;
            r.detail = "field '" + b.name + "' absent";
          }
          return r;
        } else if constexpr (std::is_same_v<T, ValueInRange>) {
          return detail::range_check(record, b.name, b.lo, b.hi, check, source);
        } else if constexpr (std::is_same_v<T, MatchesFormat>) {
          return detail::format_check(record, b.name, b.pattern, check, source);
        } else {
          CheckResult r{check, source, Verdict::kPass, {}};
          if (!detail::cites(record, b.rule_id)) {
            r.verdict = Verdict::kFail;
            r.detail = "rule '" + b.rule_id + "' not cited";
          }
          return r;
        }
      },
      q);
}

}  // namespace contractflow

#pragma once

// Turns an unmet need contract into a validated, registered tool: derive a
// spec with test cases, generate an artifact, test it in the sandbox, register.

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "contractflow/core/constraints.hpp"
#include "contractflow/core/text.hpp"
#include "contractflow/runtime/tools.hpp"
#include "contractflow/shell/provider.hpp"
#include "contractflow/toolhub/hub.hpp"

namespace contractflow {

struct TestCase {
  std::string name;
  Record input = Record::object();
  std::vector<QualityCriterion> checks;  // output schema conformance is always checked too
};

struct ToolSpec {
  std::string id;
  std::string derived_from;
  std::string name;
  std::string family;
  std::string family_args;
  Capability capability;
  Schema input_schema;
  Schema output_schema;
  std::vector<ConstraintExpr> preconditions;
  std::vector<TestCase> test_cases;
  ResourceLimits resource_limits;
};

inline void to_json(Json& j, const TestCase& t) {
  Json checks = Json::array();
  for (const auto& q : t.checks) checks.push_back(q);
  j = Json{{"name", t.name}, {"input", t.input}, {"checks", checks}};
}

inline void to_json(Json& j, const ToolSpec& s) {
  j = Json{{"id", s.id},
           {"derived_from", s.derived_from},
           {"name", s.name},
           {"family", s.family},
           {"family_args", s.family_args},
           {"capability", s.capability},
           {"input_schema", s.input_schema},
           {"output_schema", s.output_schema},
           {"preconditions", s.preconditions},
           {"test_cases", s.test_cases},
           {"resource_limits", s.resource_limits}};
}

// "unit-convert(kg->t)" -> {"unit-convert", "kg->t"}; a bare tag is its own family.
inline std::pair<std::string, std::string> parse_family(const std::string& tag) {
  const auto open = tag.find('(');
  if (open == std::string::npos || tag.back() != ')') return {tag, ""};
  return {tag.substr(0, open), tag.substr(open + 1, tag.size() - open - 2)};
}

inline Record sample_input(const Schema& s) {
  Record r = Record::object();
  for (const auto& f : s.fields)
    if (f.required) r[f.name] = sample_value(f.type);
  return r;
}

// One case per field-present and matches-format criterion, two per
// value-in-range (lower bound and interior). With no criteria a single
// schema-only case is generated.
inline ToolSpec derive_spec(const NeedContract& c, const ResourceLimits& limits = {}) {
  if (c.output_schema.empty()) throw InvalidValue("contract '" + c.id + "' has an empty output schema");
  for (const auto& p : schema_problems(c.input_schema)) throw InvalidValue("contract '" + c.id + "' input schema: " + p);
  for (const auto& p : schema_problems(c.output_schema)) throw InvalidValue("contract '" + c.id + "' output schema: " + p);
  ToolSpec s;
  s.derived_from = c.id;
  s.id = "spec-" + slug(c.id);
  std::tie(s.family, s.family_args) = parse_family(c.capability.tag);
  s.name = slug(c.capability.tag.empty() ? c.capability.description : c.capability.tag);
  s.capability = c.capability;
  s.input_schema = c.input_schema;
  s.output_schema = c.output_schema;
  s.preconditions = c.preconditions;
  s.resource_limits = limits;
  const Record base = sample_input(c.input_schema);
  auto with = [&](const std::string& field, double v) {
    Record r = base;
    if (c.input_schema.find(field)) r[field] = v;
    return r;
  };
  for (std::size_t i = 0; i < c.quality.size(); ++i) {
    const auto& q = c.quality[i];
    const auto tag = "q" + std::to_string(i);
    if (const auto* fp = std::get_if<FieldPresent>(&q)) {
      s.test_cases.push_back({tag + "-present-" + fp->name, base, {q}});
    } else if (const auto* vr = std::get_if<ValueInRange>(&q)) {
      s.test_cases.push_back({tag + "-lower-" + vr->name, with(vr->name, vr->lo), {q}});
      s.test_cases.push_back({tag + "-interior-" + vr->name, with(vr->name, (vr->lo + vr->hi) / 2), {q}});
    } else if (const auto* mf = std::get_if<MatchesFormat>(&q)) {
      s.test_cases.push_back({tag + "-format-" + mf->name, base, {q}});
    } else {
      throw UnsynthesizableCriterion("no test case generator for " + describe(q));
    }
  }
  if (s.test_cases.empty()) s.test_cases.push_back({"schema", base, {}});
  return s;
}

// ---------------------------------------------------------------------------
// Generation backends
// ---------------------------------------------------------------------------

class MakerBackend {
 public:
  virtual ~MakerBackend() = default;
  virtual std::string name() const = 0;
  virtual Artifact generate(const ToolSpec& spec, int attempt) = 0;
};

namespace detail {

inline const Field* first_of(const Schema& s, TypeKind k) {
  for (const auto& f : s.fields)
    if (f.type.kind == k && f.required) return &f;
  for (const auto& f : s.fields)
    if (f.type.kind == k) return &f;
  return nullptr;
}

inline std::optional<std::pair<double, double>> unit_factor(std::string args) {
  for (const std::string arrow : {"\xE2\x86\x92", "->", ">"}) {
    const auto p = args.find(arrow);
    if (p == std::string::npos) continue;
    const auto from = slug(args.substr(0, p));
    const auto to = slug(args.substr(p + arrow.size()));
    static const std::map<std::pair<std::string, std::string>, std::pair<double, double>> table{
        {{"kg", "t"}, {0.001, 0}},  {{"t", "kg"}, {1000, 0}},  {{"g", "kg"}, {0.001, 0}},
        {{"kg", "g"}, {1000, 0}},   {{"mm", "m"}, {0.001, 0}}, {{"m", "mm"}, {1000, 0}},
        {{"cm", "m"}, {0.01, 0}},   {{"m", "cm"}, {100, 0}},   {{"ha", "m2"}, {10000, 0}},
        {{"m2", "ha"}, {1e-4, 0}},  {{"l", "m3"}, {0.001, 0}}, {{"m3", "l"}, {1000, 0}},
        {{"c", "f"}, {1.8, 32}},    {{"f", "c"}, {5.0 / 9.0, -160.0 / 9.0}},
    };
    auto it = table.find({from, to});
    if (it == table.end()) return std::nullopt;
    return it->second;
  }
  return std::nullopt;
}

inline double numeric_arg(const ToolSpec& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s.family_args, &used);
    if (used != s.family_args.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw GenerationRefused("family '" + s.family + "' needs a numeric argument, got '" + s.family_args + "'");
  }
}

}  // namespace detail

// Instantiates parameterised tools for a fixed set of capability families:
// unit-convert(a->b), scale(k), sum, threshold(t), passthrough, constant, slow(ms).
class TemplateMaker : public MakerBackend {
 public:
  std::string name() const override { return "template"; }

  static const std::vector<std::string>& families() {
    static const std::vector<std::string> f{"unit-convert", "scale", "sum", "threshold", "passthrough", "constant", "slow"};
    return f;
  }

  Artifact generate(const ToolSpec& s, int attempt) override {
    Artifact a{"art-" + s.id + "-a" + std::to_string(attempt), s.id, s.family, Json::array()};
    const auto* in_num = detail::first_of(s.input_schema, TypeKind::kNumber);
    const auto* out_num = detail::first_of(s.output_schema, TypeKind::kNumber);
    auto need_numbers = [&] {
      if (!in_num || !out_num) throw GenerationRefused("family '" + s.family + "' needs a number input and a number output");
    };
    if (s.family == "unit-convert") {
      need_numbers();
      const auto f = detail::unit_factor(s.family_args);
      if (!f) throw GenerationRefused("unknown unit conversion '" + s.family_args + "'");
      a.ops.push_back({{"op", "affine"}, {"from", in_num->name}, {"to", out_num->name}, {"mul", f->first}, {"add", f->second}});
    } else if (s.family == "scale") {
      need_numbers();
      a.ops.push_back({{"op", "affine"}, {"from", in_num->name}, {"to", out_num->name}, {"mul", detail::numeric_arg(s)}});
    } else if (s.family == "sum") {
      if (!out_num) throw GenerationRefused("family 'sum' needs a number output");
      Json from = Json::array();
      for (const auto& f : s.input_schema.fields)
        if (f.type.kind == TypeKind::kNumber && f.required) from.push_back(f.name);
      a.ops.push_back({{"op", "sum"}, {"from", from}, {"to", out_num->name}});
    } else if (s.family == "threshold") {
      const auto* out_bool = detail::first_of(s.output_schema, TypeKind::kBoolean);
      if (!in_num || !out_bool) throw GenerationRefused("family 'threshold' needs a number input and a boolean output");
      a.ops.push_back({{"op", "threshold"}, {"from", in_num->name}, {"to", out_bool->name}, {"at", detail::numeric_arg(s)}});
    } else if (s.family == "passthrough" || s.family == "constant" || s.family == "slow") {
      if (s.family == "slow") a.ops.push_back({{"op", "sleep"}, {"ms", static_cast<int>(detail::numeric_arg(s))}});
      for (const auto& f : s.output_schema.fields) {
        if (s.family != "constant" && s.input_schema.find(f.name))
          a.ops.push_back({{"op", "copy"}, {"from", f.name}, {"to", f.name}});
        else
          a.ops.push_back({{"op", "const"}, {"to", f.name}, {"value", sample_value(f.type)}});
      }
    } else {
      throw GenerationRefused("no template for capability family '" + s.family + "'");
    }
    return a;
  }
};

// Asks a chat backend for the artifact ops. The reply is a JSON object with
// "ops", or "refuse" with a reason.
class ProviderMaker : public MakerBackend {
 public:
  ProviderMaker(std::string model, Provider& provider) : model_(std::move(model)), provider_(provider) {}
  std::string name() const override { return "provider:" + model_; }

  Artifact generate(const ToolSpec& s, int attempt) override {
    ChatRequest req{model_,
                    {{"system", "Write a tool artifact as JSON {\"ops\": [...]} using ops copy, const, affine, sum, "
                                "product, threshold, concat, clamp. Output only JSON."},
                     {"user", "ATTEMPT: " + std::to_string(attempt) + "\nSPEC: " + Json(s).dump()}}};
    const auto reply = parse_json_reply(provider_.chat(req));
    if (reply.contains("refuse")) throw GenerationRefused(reply.at("refuse").dump());
    if (!reply.contains("ops") || !reply.at("ops").is_array()) throw ParseError("maker reply has no ops array");
    return {"art-" + s.id + "-a" + std::to_string(attempt), s.id, reply.value("family", s.family), reply.at("ops")};
  }

 private:
  std::string model_;
  Provider& provider_;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct CaseResult {
  std::string name;
  bool passed = false;
  std::vector<CheckResult> checks;
  std::string error;
};

struct ValidationResult {
  std::string artifact_id;
  std::string spec_id;
  bool passed = false;
  std::vector<CaseResult> cases;
};

inline void to_json(Json& j, const CaseResult& c) {
  j = Json{{"name", c.name}, {"passed", c.passed}, {"checks", c.checks}};
  if (!c.error.empty()) j["error"] = c.error;
}
inline void to_json(Json& j, const ValidationResult& v) {
  j = Json{{"artifact_id", v.artifact_id}, {"spec_id", v.spec_id}, {"passed", v.passed}, {"cases", v.cases}};
}

// Runs every test case in the sandbox. A limit breach fails the case.
inline ValidationResult validate_impl(const Artifact& a, const ToolSpec& spec, Isolation isolation = Isolation::kProcess) {
  ValidationResult v{a.id, spec.id, true, {}};
  if (a.spec_id != spec.id) throw InvalidValue("artifact '" + a.id + "' was generated for '" + a.spec_id + "'");
  for (const auto& tc : spec.test_cases) {
    CaseResult cr{tc.name, true, {}, {}};
    try {
      const Record out = run_isolated(a, tc.input, spec.resource_limits, isolation);
      cr.checks = schema_checks(out, spec.output_schema);
      Record view = tc.input;
      for (const auto& [k, val] : out.items()) view[k] = val;
      for (std::size_t i = 0; i < tc.checks.size(); ++i)
        cr.checks.push_back(evaluate(tc.checks[i], view, "quality"));
      for (const auto& c : cr.checks)
        if (!c.passed()) cr.passed = false;
    } catch (const Error& e) {
      cr.passed = false;
      cr.error = e.what();
    }
    if (!cr.passed) v.passed = false;
    v.cases.push_back(std::move(cr));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Lifecycle
// ---------------------------------------------------------------------------

struct MakerTry {
  int attempt = 0;
  std::string artifact_id;
  bool passed = false;
  std::optional<ValidationResult> validation;
  std::string error;
};

struct MakerRun {
  std::string contract_id;
  std::string spec_id;
  std::optional<std::string> tool_id;
  std::vector<MakerTry> tries;
  std::string failure;
  bool succeeded() const { return tool_id.has_value(); }
};

inline void to_json(Json& j, const MakerTry& t) {
  j = Json{{"attempt", t.attempt}, {"artifact_id", t.artifact_id}, {"passed", t.passed}};
  if (t.validation) j["validation"] = *t.validation;
  if (!t.error.empty()) j["error"] = t.error;
}
inline void to_json(Json& j, const MakerRun& r) {
  j = Json{{"contract_id", r.contract_id}, {"spec_id", r.spec_id}, {"succeeded", r.succeeded()}, {"tries", r.tries}};
  if (r.tool_id) j["tool_id"] = *r.tool_id;
  if (!r.failure.empty()) j["failure"] = r.failure;
}

// One attempt per make_and_register call; generate-validate retries inside a
// call are in the per-run log.
struct MakerReport {
  std::int64_t attempts = 0;
  std::int64_t succeeded = 0;
  std::int64_t failed = 0;
  std::vector<MakerRun> log;
  double rate() const { return attempts == 0 ? 0.0 : static_cast<double>(succeeded) / static_cast<double>(attempts); }
};

inline void to_json(Json& j, const MakerReport& r) {
  j = Json{{"attempts", r.attempts}, {"succeeded", r.succeeded}, {"failed", r.failed}, {"rate", r.rate()}};
}

struct MakerOptions {
  int retries = 3;  // generate-validate rounds per contract
  ResourceLimits limits;
  Isolation isolation = Isolation::kProcess;
  std::optional<std::filesystem::path> workspace;
  bool keep_log = true;
};

class ToolMaker {
 public:
  ToolMaker(ToolHub& hub, ToolRuntime& runtime, MakerBackend& backend, MakerOptions opt = {})
      : hub_(hub), runtime_(runtime), backend_(backend), opt_(std::move(opt)) {
    if (opt_.retries < 1) throw ConfigError("toolmaker retries must be at least 1");
    if (opt_.workspace) std::filesystem::create_directories(*opt_.workspace);
  }

  MakerRun make_and_register(const NeedContract& contract) {
    MakerRun run;
    run.contract_id = contract.id;
    try {
      const auto spec = derive_spec(contract, opt_.limits);
      run.spec_id = spec.id;
      for (int attempt = 1; attempt <= opt_.retries && !run.tool_id; ++attempt) {
        MakerTry t;
        t.attempt = attempt;
        try {
          const auto artifact = backend_.generate(spec, attempt);
          t.artifact_id = artifact.id;
          if (opt_.workspace) save_artifact(artifact, *opt_.workspace / (artifact.id + ".artifact.json"));
          t.validation = validate_impl(artifact, spec, opt_.isolation);
          t.passed = t.validation->passed;
          if (t.passed) run.tool_id = install(contract, spec, artifact, *t.validation);
        } catch (const BackendUnavailable&) {
          throw;
        } catch (const GenerationRefused& e) {
          t.error = e.what();
          run.tries.push_back(std::move(t));
          break;
        } catch (const Error& e) {
          t.error = e.what();
        }
        persist_try(spec, t);
        run.tries.push_back(std::move(t));
      }
      if (!run.tool_id) {
        run.failure = run.tries.empty() ? "no attempt made" : "validation failed after " + std::to_string(run.tries.size()) + " attempt(s)";
        if (!run.tries.empty() && !run.tries.back().error.empty()) run.failure = run.tries.back().error;
      }
    } catch (const BackendUnavailable& e) {
      run.failure = e.what();
      record(run);
      throw;
    } catch (const Error& e) {
      run.failure = e.what();
    }
    record(run);
    return run;
  }

  MakerReport report() const {
    std::lock_guard lock(mu_);
    return report_;
  }

  // Passing validation record behind a maker-registered tool, if any.
  std::optional<ValidationResult> validation_for(const std::string& tool_id) const {
    std::lock_guard lock(mu_);
    auto it = validations_.find(tool_id);
    if (it == validations_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::string install(const NeedContract& contract, const ToolSpec& spec, const Artifact& artifact,
                      const ValidationResult& v) {
    ToolCard card;
    card.id = "tm-" + spec.name;
    if (hub_.snapshot()->find(card.id)) card.id += "-" + hex64(fnv1a(contract.id)).substr(0, 8);
    card.name = spec.name;
    card.capabilities = {contract.capability};
    card.input_schema = spec.input_schema;
    card.output_schema = spec.output_schema;
    card.preconditions = spec.preconditions;
    card.constraints = contract.constraints;
    card.reliability = {1, 1};
    card.provenance = {ToolOrigin::kToolMaker, "1", 0};
    {
      // The validation record exists before the card becomes visible.
      std::lock_guard lock(mu_);
      validations_[card.id] = v;
    }
    runtime_.install(card.id, artifact);
    hub_.register_card(card);
    return card.id;
  }

  void persist_try(const ToolSpec& spec, const MakerTry& t) const {
    if (!opt_.workspace) return;
    std::ofstream(*opt_.workspace / (spec.id + ".attempt-" + std::to_string(t.attempt) + ".json")) << Json(t).dump(2) << "\n";
  }

  void record(const MakerRun& run) {
    std::lock_guard lock(mu_);
    ++report_.attempts;
    if (run.succeeded()) ++report_.succeeded;
    else ++report_.failed;
    if (opt_.keep_log) report_.log.push_back(run);
  }

  ToolHub& hub_;
  ToolRuntime& runtime_;
  MakerBackend& backend_;
  MakerOptions opt_;
  mutable std::mutex mu_;
  MakerReport report_;
  std::map<std::string, ValidationResult> validations_;
};

// Maker-origin cards in the hub with no passing validation record.
inline std::vector<std::string> unvalidated_tools(const HubSnapshot& hub, const ToolMaker& maker) {
  std::vector<std::string> out;
  for (const auto* c : hub.cards())
    if (c->provenance.origin == ToolOrigin::kToolMaker) {
      const auto v = maker.validation_for(c->id);
      if (!v || !v->passed) out.push_back(c->id);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic capability gaps
// ---------------------------------------------------------------------------

namespace synth {

// `total` gap contracts over the template families, `planted` of which cannot
// be satisfied: half demand an output range the family cannot reach, half
// exceed the wall-time limit. Planted gaps are spread evenly.
inline std::vector<NeedContract> maker_gaps(std::size_t total, std::size_t planted, int slow_ms = 1000) {
  if (planted > total) throw InvalidValue("more planted gaps than attempts");
  static const std::vector<std::pair<std::string, std::string>> conversions{
      {"kg", "t"}, {"t", "kg"}, {"g", "kg"}, {"mm", "m"}, {"cm", "m"}, {"ha", "m2"}, {"l", "m3"}, {"c", "f"}};
  std::vector<NeedContract> out;
  std::set<std::size_t> planted_at;
  for (std::size_t i = 0; i < planted; ++i) planted_at.insert((i * total) / planted + total / (2 * planted));
  std::size_t planted_seen = 0;
  for (std::size_t i = 0; i < total; ++i) {
    NeedContract c;
    char id[32];
    std::snprintf(id, sizeof id, "gap-%04zu", i);
    c.id = c.node_id = id;
    const auto& [from, to] = conversions[i % conversions.size()];
    const std::string in = "value_" + from, out_f = "value_" + to;
    c.input_schema.fields = {{in, SemanticType::number(from), true}};
    c.output_schema.fields = {{out_f, SemanticType::number(to), true}};
    c.capability = {"unit-convert(" + from + "->" + to + ")", "convert " + from + " to " + to + " for case " + id};
    c.quality = {FieldPresent{out_f}};
    switch (i % 3) {
      case 1: c.quality.push_back(ValueInRange{in, 0, 100}); break;
      case 2: c.quality.push_back(MatchesFormat{out_f, "-?[0-9.e+-]+"}); break;
      default: break;
    }
    if (planted_at.count(i)) {
      if (planted_seen++ % 2 == 0) {
        c.quality.push_back(ValueInRange{out_f, 1e9, 2e9});  // unreachable for sampled inputs
      } else {
        c.capability.tag = "slow(" + std::to_string(slow_ms) + ")";
        c.output_schema.fields = {{in, SemanticType::number(from), true}};
        c.quality = {FieldPresent{in}};
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace synth

}  // namespace contractflow

#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <regex>

#include "contractflow/engine.hpp"
#include "support/golden.hpp"
#include "support/hub_oracle.hpp"

using namespace contractflow;
using cftest::field_schema;

namespace {

ToolCard card(const std::string& id, const std::string& tag, const std::string& desc, Schema in, Schema out) {
  ToolCard c;
  c.id = c.name = id;
  c.capabilities = {{tag, desc}};
  c.input_schema = std::move(in);
  c.output_schema = std::move(out);
  return c;
}

PlanNode node(const std::string& id, const std::string& goal, Schema in, Schema out) {
  return {id, goal, std::move(in), std::move(out), {}, {}};
}

Artifact copy_art(const std::string& from, const std::string& to) {
  return {"a", "", "passthrough", Json::array({{{"op", "copy"}, {"from", from}, {"to", to}}})};
}

Artifact fail_art() { return {"a", "", "broken", Json::array({{{"op", "fail"}, {"message", "offline"}}})}; }

struct Rig {
  ToolHub hub;
  ToolRuntime runtime{ResourceLimits{}, Isolation::kInProcess};
  TemplateMaker backend;
  ToolMaker maker{hub, runtime, backend, [] {
                    MakerOptions o;
                    o.isolation = Isolation::kInProcess;
                    return o;
                  }()};

  void add(ToolCard c, Artifact a) {
    runtime.install(c.id, std::move(a));
    hub.register_card(std::move(c));
  }
};

std::map<std::string, NeedContract> derived(const PlanSpec& p) { return contracts_for(p, Json()); }

std::vector<std::string> phases(const ExecutionTrace& t, const std::string& node_id) {
  std::vector<std::string> out;
  for (const auto& s : t.steps)
    if (s.node_id == node_id) out.push_back(to_string(s.phase));
  return out;
}

// --- execute_plan -----------------------------------------------------------

TEST(ExecutePlan, SingleEchoNode) {
  Rig r;
  r.add(card("echo", "echo-note", "echo a note", field_schema({"q"}), field_schema({"q"})), copy_art("q", "q"));
  PlanSpec p{{node("a", "echo note", field_schema({"q"}), field_schema({"q"}))}, {}, "t"};
  const auto res = execute_plan(p, derived(p), r.hub, {}, r.runtime.invoker(), nullptr, {{"q", 4.5}});
  ASSERT_TRUE(res.ok());
  ASSERT_EQ(res.trace.steps.size(), 1u);
  EXPECT_EQ(res.trace.status, TraceStatus::kComplete);
  EXPECT_EQ(res.deliverable.structured, (Json{{"q", 4.5}}));
  EXPECT_EQ(res.trace.steps[0].input_sources.at("q"), "context");
  EXPECT_TRUE(unsafe_sessions(res.transcript).empty());
}

TEST(ExecutePlan, FailureSkipsDownstream) {
  Rig r;
  r.add(card("bad", "make-x", "make x", field_schema({"q"}), field_schema({"x"})), fail_art());
  r.add(card("next", "use-x", "use x", field_schema({"x"}), field_schema({"y"})), copy_art("x", "y"));
  PlanSpec p{{node("a", "make x", field_schema({"q"}), field_schema({"x"})),
              node("b", "use x", field_schema({"x"}), field_schema({"y"}))},
             {{"a", "b"}},
             "t"};
  ExecutionPolicy pol;
  pol.allow_toolmaker = false;
  const auto res = execute_plan(p, derived(p), r.hub, pol, r.runtime.invoker(), &r.maker, {{"q", 1}});
  EXPECT_EQ(res.failed_nodes, std::vector<std::string>{"a"});
  EXPECT_EQ(res.skipped_nodes, std::vector<std::string>{"b"});
  EXPECT_EQ(res.trace.node_status.at("b"), NodeStatus::kSkipped);
  EXPECT_EQ(res.trace.status, TraceStatus::kFailed);
  EXPECT_EQ(phases(res.trace, "a"), (std::vector<std::string>{"initial", "retry", "retry"}));
  EXPECT_THROW(res.raise_if_failed(), PlanFailed);
  EXPECT_NE(res.node_errors.at("a").find("offline"), std::string::npos);
  EXPECT_EQ(r.hub.snapshot()->get("bad").reliability, (Reliability{3, 0}));
}

TEST(ExecutePlan, RetryRecoversTransientFault) {
  Rig r;
  r.add(card("flaky", "make-x", "make x", field_schema({"q"}), field_schema({"x"})), copy_art("q", "x"));
  PlanSpec p{{node("a", "make x", field_schema({"q"}), field_schema({"x"}))}, {}, "t"};
  int calls = 0;
  ToolInvoker inv = [&](const ToolCard& c, const Record& in) {
    if (++calls == 1) throw ExecutionError("transient");
    return r.runtime.invoke(c, in);
  };
  const auto res = execute_plan(p, derived(p), r.hub, {}, inv, nullptr, {{"q", 2}});
  ASSERT_TRUE(res.ok());
  EXPECT_EQ(phases(res.trace, "a"), (std::vector<std::string>{"initial", "retry"}));
  EXPECT_EQ(res.trace.steps[0].input_digest, res.trace.steps[1].input_digest);
}

TEST(ExecutePlan, SwitchesCandidateAfterRetries) {
  Rig r;
  r.add(card("t1", "make-x", "make x", field_schema({"q"}), field_schema({"x"})), copy_art("q", "x"));
  r.add(card("t2", "make-x", "make x quickly", field_schema({"q"}), field_schema({"x"})), copy_art("q", "x"));
  PlanSpec p{{node("a", "make x", field_schema({"q"}), field_schema({"x"}))}, {}, "t"};
  std::string first;
  ToolInvoker inv = [&](const ToolCard& c, const Record& in) {
    if (first.empty()) first = c.id;
    if (c.id == first) throw ExecutionError("down");
    return r.runtime.invoke(c, in);
  };
  const auto res = execute_plan(p, derived(p), r.hub, {}, inv, nullptr, {{"q", 2}});
  ASSERT_TRUE(res.ok());
  EXPECT_EQ(phases(res.trace, "a"), (std::vector<std::string>{"initial", "retry", "retry", "candidate-switch"}));
  EXPECT_NE(res.trace.steps.back().tool_id, first);
  EXPECT_TRUE(unsafe_sessions(res.transcript).empty());
}

TEST(ExecutePlan, VerificationFailureFeedsLadder) {
  Rig r;
  r.add(card("wrong", "make-x", "make x", field_schema({"q"}), field_schema({"x"})), copy_art("q", "y"));
  PlanSpec p{{node("a", "make x", field_schema({"q"}), field_schema({"x"}))}, {}, "t"};
  ExecutionPolicy pol;
  pol.max_retries_per_node = 0;
  pol.allow_toolmaker = false;
  const auto res = execute_plan(p, derived(p), r.hub, pol, r.runtime.invoker(), nullptr, {{"q", 2}});
  ASSERT_FALSE(res.ok());
  ASSERT_EQ(res.trace.steps.size(), 1u);
  EXPECT_FALSE(res.trace.steps[0].succeeded);
  EXPECT_EQ(res.trace.steps[0].validation.at(0).check, "schema:x");
  EXPECT_EQ(res.trace.steps[0].validation.at(0).verdict, Verdict::kFail);
}

TEST(ExecutePlan, LadderEndsWithToolMaker) {
  Rig r;
  const Schema kg{{{"mass_kg", SemanticType::number("kg"), true}}};
  const Schema t{{{"mass_t", SemanticType::number("t"), true}}};
  r.add(card("legacy", "unit-convert(kg->t)", "convert kg to t", kg, t), fail_art());
  PlanSpec p{{node("a", "convert mass", kg, t)}, {}, "t"};
  auto contracts = derived(p);
  contracts["a"].capability = {"unit-convert(kg->t)", "convert mass"};
  const auto res = execute_plan(p, contracts, r.hub, {}, r.runtime.invoker(), &r.maker, {{"mass_kg", 1500}});
  ASSERT_TRUE(res.ok()) << res.node_errors.begin()->second;
  EXPECT_EQ(phases(res.trace, "a"), (std::vector<std::string>{"initial", "retry", "retry", "toolmaker"}));
  EXPECT_DOUBLE_EQ(res.deliverable.structured.at("mass_t").get<double>(), 1.5);
  ASSERT_EQ(res.maker_runs.size(), 1u);
  EXPECT_EQ(res.trace.steps.back().tool_id, *res.maker_runs[0].tool_id);
}

TEST(ExecutePlan, NoCandidatesGoesStraightToMaker) {
  Rig r;
  PlanSpec p{{node("a", "copy note", field_schema({"q"}), field_schema({"q"}))}, {}, "t"};
  auto contracts = derived(p);
  contracts["a"].capability.tag = "passthrough";
  const auto res = execute_plan(p, contracts, r.hub, {}, r.runtime.invoker(), &r.maker, {{"q", 3}});
  ASSERT_TRUE(res.ok());
  EXPECT_EQ(phases(res.trace, "a"), std::vector<std::string>{"toolmaker"});
  EXPECT_TRUE(unsafe_sessions(res.transcript).empty());
}

TEST(ExecutePlan, UnbindableInputFailsNode) {
  Rig r;
  PlanSpec p{{node("a", "copy note", field_schema({"q"}), field_schema({"q"}))}, {}, "t"};
  auto contracts = derived(p);
  contracts["a"].input_schema = field_schema({"q", "missing"});
  const auto res = execute_plan(p, contracts, r.hub, {}, r.runtime.invoker(), nullptr, {{"q", 3}});
  EXPECT_EQ(res.failed_nodes, std::vector<std::string>{"a"});
  EXPECT_NE(res.node_errors.at("a").find("UnbindableInput"), std::string::npos);
  EXPECT_TRUE(res.trace.steps.empty());
}

TEST(ExecutePlan, RejectsInvalidPlans) {
  Rig r;
  PlanSpec p{{node("a", "x", {}, field_schema({"x"})), node("b", "y", {}, field_schema({"y"}))}, {{"a", "b"}, {"b", "a"}}, ""};
  EXPECT_THROW(execute_plan(p, derived(p), r.hub, {}, r.runtime.invoker()), InvalidPlan);
  PlanSpec q{{node("a", "x", {}, field_schema({"x"}))}, {}, ""};
  EXPECT_THROW(execute_plan(q, {}, r.hub, {}, r.runtime.invoker()), InvalidPlan);
}

// --- verify_step ------------------------------------------------------------

TEST(VerifyStep, AllCriteriaPass) {
  NeedContract c;
  c.output_schema = field_schema({"y"});
  c.quality = {FieldPresent{"y"}, ValueInRange{"y", 0, 10}};
  c.constraints = {ConstraintExpr{RangeConstraint{"y", 0, 5}, ""}};
  const auto v = verify_step({{"y", 3}}, c);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_TRUE(checks_pass(v));
  for (const auto& r : v) EXPECT_EQ(r.verdict, Verdict::kPass) << r.check;
}

TEST(VerifyStep, MissingFieldFailsSchemaAndLeavesRangeUnevaluable) {
  NeedContract c;
  c.output_schema = field_schema({"y"});
  c.quality = {ValueInRange{"y", 0, 10}};
  const auto v = verify_step({{"z", 3}}, c);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].verdict, Verdict::kFail);
  EXPECT_EQ(v[1].verdict, Verdict::kNotEvaluable);
  EXPECT_FALSE(checks_pass(v));
}

TEST(VerifyStep, FixtureTableMatches) {
  const auto fx = load_json_file(std::string(CONTRACTFLOW_FIXTURES) + "/verify_cases.json");
  ASSERT_EQ(fx.at("cases").size(), 12u);
  for (const auto& tc : fx.at("cases")) {
    const auto v = verify_step(tc.at("output"), tc.at("contract").get<NeedContract>());
    std::vector<std::string> got;
    for (const auto& r : v) got.push_back(to_string(r.verdict));
    EXPECT_EQ(got, tc.at("verdicts").get<std::vector<std::string>>()) << tc.at("name");
    EXPECT_EQ(checks_pass(v), tc.at("passes").get<bool>()) << tc.at("name");
  }
}

// --- aggregate_evidence -----------------------------------------------------

StepRecord step(const std::string& id, const std::string& node, std::map<std::string, std::string> sources, Record out) {
  StepRecord s;
  s.step_id = id;
  s.node_id = node;
  s.tool_id = "tool-" + node;
  s.input_sources = std::move(sources);
  s.output_record = std::move(out);
  s.succeeded = true;
  return s;
}

TEST(AggregateEvidence, LinearLineage) {
  PlanSpec p{{node("A", "a", {}, field_schema({"x"})), node("B", "b", field_schema({"x"}), field_schema({"y"}))}, {{"A", "B"}}, ""};
  ExecutionTrace t;
  t.steps = {step("A#1", "A", {{"q", "context"}}, {{"x", 1}}), step("B#1", "B", {{"x", "A#1"}}, {{"y", 2}})};
  const auto b = aggregate_evidence(t, p);
  ASSERT_EQ(b.entries.size(), 1u);
  EXPECT_EQ(b.entries[0].claim_field, "y");
  EXPECT_EQ(b.entries[0].step_ids, (std::vector<std::string>{"A#1", "B#1"}));
}

TEST(AggregateEvidence, ContextSourcedClaim) {
  PlanSpec p{{node("A", "a", field_schema({"q"}), field_schema({"q"}))}, {}, ""};
  ExecutionTrace t;
  t.steps = {step("A#1", "A", {{"q", "context"}}, {{"q", 1}})};
  const auto b = aggregate_evidence(t, p);
  ASSERT_EQ(b.entries.size(), 1u);
  EXPECT_EQ(b.entries[0].step_ids, std::vector<std::string>{"A#1"});
  EXPECT_EQ(b.entries[0].source_ids.back(), "context");
}

TEST(AggregateEvidence, OrphansAreReported) {
  PlanSpec p{{node("A", "a", {}, field_schema({"x"}))}, {}, ""};
  ExecutionTrace t;
  t.steps = {step("A#1", "A", {{"q", "Z#9"}}, {{"x", 1}})};
  EXPECT_THROW(aggregate_evidence(t, p), OrphanClaim);
  t.steps[0].input_sources.clear();
  EXPECT_THROW(aggregate_evidence(t, p, {{"x", 1}, {"ghost", 2}}), OrphanClaim);
}

// Independent ancestor walk over the trace graph, recursion instead of a worklist.
void ancestors_of(const ExecutionTrace& t, const std::string& id, std::set<std::string>& acc) {
  if (!acc.insert(id).second) return;
  for (const auto& s : t.steps)
    if (s.step_id == id)
      for (const auto& [f, src] : s.input_sources)
        if (src != "context") ancestors_of(t, src, acc);
}

TEST(AggregateEvidence, RandomPlansMatchReverseReachability) {
  std::mt19937 rng(11);
  for (int round = 0; round < 30; ++round) {
    const int n = 4 + static_cast<int>(rng() % 8);
    PlanSpec p;
    for (int i = 0; i < n; ++i) {
      const std::string id = "N" + std::to_string(10 + i);
      Schema in;
      for (int j = 0; j < i; ++j)
        if (rng() % 3 == 0) {
          in.fields.push_back({"f" + std::to_string(10 + j), SemanticType::number(), true});
          p.edges.push_back({"N" + std::to_string(10 + j), id});
        }
      if (in.empty()) in.fields.push_back({"seed", SemanticType::number(), true});
      p.nodes.push_back(node(id, "node " + id, in, field_schema({"f" + std::to_string(10 + i)})));
    }
    Rig r;
    for (const auto& nd : p.nodes) {
      Json from = Json::array();
      for (const auto& f : nd.inputs.fields) from.push_back(f.name);
      r.add(card("tool-" + nd.id, "make-" + nd.outputs.fields[0].name, "compute " + nd.outputs.fields[0].name, nd.inputs, nd.outputs),
            {"a", "", "sum", Json::array({{{"op", "sum"}, {"from", from}, {"to", nd.outputs.fields[0].name}}})});
    }
    auto contracts = derived(p);
    for (auto& [id, c] : contracts) c.capability.tag = "make-" + c.output_schema.fields[0].name;
    ExecutionPolicy pol;
    pol.parallel = round % 2 == 1;
    const auto res = execute_plan(p, contracts, r.hub, pol, r.runtime.invoker(), nullptr, {{"seed", 1}});
    ASSERT_TRUE(res.ok());
    for (const auto& e : res.evidence.entries) {
      std::set<std::string> want;
      ancestors_of(res.trace, e.step_ids.back(), want);
      EXPECT_EQ(std::set<std::string>(e.step_ids.begin(), e.step_ids.end()), want);
    }
    for (const auto& [claim, v] : res.deliverable.structured.items()) EXPECT_NE(res.evidence.find(claim), nullptr);
  }
}

// --- properties under fuzzed parallel execution ------------------------------

TEST(ExecutorProperties, DependencySafetyCompletenessAndLadderOrder) {
  std::mt19937 rng(5);
  const std::regex ladder("initial(,retry)*(,candidate-switch)*(,toolmaker)?|toolmaker");
  for (int round = 0; round < 25; ++round) {
    const int n = 6 + static_cast<int>(rng() % 6);
    PlanSpec p;
    for (int i = 0; i < n; ++i) {
      const std::string id = "N" + std::to_string(10 + i);
      Schema in{{{"seed", SemanticType::number(), true}}};
      for (int j = 0; j < i; ++j)
        if (rng() % 4 == 0) {
          in.fields.push_back({"f" + std::to_string(10 + j), SemanticType::number(), false});
          p.edges.push_back({"N" + std::to_string(10 + j), id});
        }
      p.nodes.push_back(node(id, "node " + id, in, field_schema({"f" + std::to_string(10 + i)})));
    }
    Rig r;
    for (const auto& nd : p.nodes)
      for (int k = 0; k < 2; ++k)
        r.add(card("tool-" + nd.id + "-" + std::to_string(k), "make-" + nd.outputs.fields[0].name,
                   "compute " + nd.outputs.fields[0].name + (k ? " again" : ""), nd.inputs, nd.outputs),
              {"a", "", "x", Json::array({{{"op", "copy"}, {"from", "seed"}, {"to", nd.outputs.fields[0].name}}})});
    auto contracts = derived(p);
    for (auto& [id, c] : contracts) c.capability.tag = "passthrough";

    std::mutex mu;
    std::map<std::string, int> calls;
    std::map<std::string, bool> failing;
    for (const auto& nd : p.nodes) {
      failing["tool-" + nd.id + "-0"] = rng() % 3 == 0;
      failing["tool-" + nd.id + "-1"] = rng() % 4 == 0;
    }
    std::atomic<int> total{0};
    ToolInvoker inv = [&](const ToolCard& c, const Record& in) {
      ++total;
      {
        std::lock_guard lock(mu);
        if (failing[c.id] && calls[c.id]++ < 5) throw ExecutionError("scripted failure");
      }
      std::this_thread::sleep_for(std::chrono::microseconds(fnv1a(c.id) % 200));
      return r.runtime.invoke(c, in);
    };
    ExecutionPolicy pol;
    pol.parallel = true;
    LogicalClock clock;
    const auto res = execute_plan(p, contracts, r.hub, pol, inv, &r.maker, {{"seed", 1}}, &clock);

    EXPECT_EQ(res.trace.steps.size(), static_cast<std::size_t>(total.load()));
    std::set<std::string> ids;
    for (const auto& s : res.trace.steps) EXPECT_TRUE(ids.insert(s.step_id).second) << s.step_id;

    std::map<std::string, Timestamp> done_at;
    for (const auto& s : res.trace.steps)
      if (s.succeeded) done_at[s.node_id] = s.ended_at;
    const PlanGraph g(p);
    for (const auto& s : res.trace.steps)
      for (const auto& pred : g.predecessors(s.node_id)) {
        ASSERT_TRUE(done_at.count(pred)) << s.node_id << " ran after failed " << pred;
        EXPECT_LT(done_at.at(pred), s.started_at) << s.node_id << " started before " << pred;
      }

    for (const auto& nd : p.nodes) {
      std::string seq;
      for (const auto& ph : phases(res.trace, nd.id)) seq += (seq.empty() ? "" : ",") + ph;
      if (!seq.empty()) EXPECT_TRUE(std::regex_match(seq, ladder)) << nd.id << ": " << seq;
    }
    EXPECT_TRUE(unsafe_sessions(res.transcript).empty());
    EXPECT_TRUE(res.ok()) << round;
  }
}

// --- end-to-end sample ------------------------------------------------------

struct SampleRun {
  std::string trace, deliverable, metrics;
  RunOutput out;
};

SampleRun run_sample() {
  const auto ws = load_workspace(std::string(CONTRACTFLOW_SAMPLES) + "/nitrogen");
  EngineOptions opt;
  opt.maker.limits = {2000, 128};
  Engine engine(opt);
  auto out = engine.run(ws);
  return {trace_to_jsonl(out.result.trace), Json(out.result.deliverable).dump(2) + "\n", Json(out.metrics).dump(2) + "\n",
          std::move(out)};
}

TEST(EndToEnd, TenNodePlanRecoversThroughToolMaker) {
  const auto a = run_sample();
  const auto& res = a.out.result;
  ASSERT_TRUE(res.ok()) << Json(res.node_errors).dump();
  EXPECT_EQ(res.trace.status, TraceStatus::kComplete);
  EXPECT_EQ(phases(res.trace, "to-tonnes"), (std::vector<std::string>{"initial", "retry", "retry", "toolmaker"}));
  EXPECT_NEAR(res.deliverable.structured.at("urea_t").get<double>(), 130.8 * 12.5 / 1000 / 0.46, 1e-9);
  EXPECT_EQ(res.deliverable.rule_citations, std::vector<std::string>{"NVZ-170"});
  EXPECT_EQ(a.out.metrics.presence_coverage.score(), 1.0);
  EXPECT_EQ(a.out.metrics.rule_citation.satisfied(), 1u);
  EXPECT_EQ(a.out.metrics.rule_citation.required(), 2u);
  EXPECT_EQ(a.out.metrics.evidence_presence.score(), 1.0);
  EXPECT_EQ(a.out.metrics.normalization.satisfied(), 3u);
  EXPECT_EQ(a.out.metrics.normalization.required(), 4u);

  const auto b = run_sample();
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.deliverable, b.deliverable);
  EXPECT_EQ(a.metrics, b.metrics);
  cftest::expect_golden("nitrogen_trace.jsonl", a.trace);
  cftest::expect_golden("nitrogen_deliverable.json", a.deliverable);
  cftest::expect_golden("nitrogen_metrics.json", a.metrics);
}

}  // namespace

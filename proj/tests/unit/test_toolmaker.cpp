#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "contractflow/toolmaker.hpp"
#include "support/hub_oracle.hpp"

using namespace contractflow;
using cftest::field_schema;

namespace {

NeedContract gap(const std::string& id, const std::string& tag, Schema in, Schema out,
                 std::vector<QualityCriterion> quality = {}) {
  NeedContract c;
  c.id = c.node_id = id;
  c.capability = {tag, "make " + id};
  c.input_schema = std::move(in);
  c.output_schema = std::move(out);
  c.quality = std::move(quality);
  return c;
}

Schema kg() { return {{{"mass_kg", SemanticType::number("kg"), true}}}; }
Schema tonnes() { return {{{"mass_t", SemanticType::number("t"), true}}}; }

// --- derive_spec ---------------------------------------------------------------

TEST(DeriveSpec, FieldPresentGivesOneCase) {
  const auto s = derive_spec(gap("g", "passthrough", field_schema({"q"}), field_schema({"q"}), {FieldPresent{"q"}}));
  ASSERT_EQ(s.test_cases.size(), 1u);
  ASSERT_EQ(s.test_cases[0].checks.size(), 1u);
  EXPECT_EQ(s.test_cases[0].checks[0], QualityCriterion{FieldPresent{"q"}});
  EXPECT_EQ(s.input_schema, field_schema({"q"}));
  EXPECT_EQ(s.derived_from, "g");
}

TEST(DeriveSpec, RangeGivesBoundaryAndInterior) {
  const auto s = derive_spec(gap("g", "scale(2)", field_schema({"x"}), field_schema({"y"}), {ValueInRange{"x", 0, 10}}));
  ASSERT_EQ(s.test_cases.size(), 2u);
  EXPECT_EQ(s.test_cases[0].input.at("x"), 0.0);
  EXPECT_EQ(s.test_cases[1].input.at("x"), 5.0);
}

TEST(DeriveSpec, MixedCriteriaMatchHandTable) {
  const auto fx = load_json_file(std::string(CONTRACTFLOW_FIXTURES) + "/derive_spec_case.json");
  const auto s = derive_spec(fx.at("contract").get<NeedContract>());
  const auto& want = fx.at("expected_cases");
  ASSERT_EQ(s.test_cases.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(s.test_cases[i].name, want[i].at("name").get<std::string>());
    EXPECT_EQ(s.test_cases[i].input, want[i].at("input")) << s.test_cases[i].name;
  }
  EXPECT_EQ(Json(derive_spec(fx.at("contract").get<NeedContract>())).dump(), Json(s).dump());
}

TEST(DeriveSpec, NoCriteriaStillHasACase) {
  EXPECT_EQ(derive_spec(gap("g", "constant", {}, field_schema({"y"}))).test_cases.size(), 1u);
}

TEST(DeriveSpec, CitedRuleHasNoGenerator) {
  EXPECT_THROW(derive_spec(gap("g", "constant", {}, field_schema({"y"}), {CitedRule{"R1"}})), UnsynthesizableCriterion);
}

// --- generation ---------------------------------------------------------------

TEST(TemplateMaker, UnitConvertDividesByThousand) {
  TemplateMaker m;
  const auto spec = derive_spec(gap("g", "unit-convert(kg\xE2\x86\x92t)", kg(), tonnes()));
  const auto a = m.generate(spec, 1);
  EXPECT_EQ(a.spec_id, spec.id);
  EXPECT_DOUBLE_EQ(run_artifact(a, {{"mass_kg", 2500}}).at("mass_t").get<double>(), 2.5);
}

TEST(TemplateMaker, UnknownFamilyIsRefused) {
  TemplateMaker m;
  EXPECT_THROW(m.generate(derive_spec(gap("g", "quantum-oracle", kg(), tonnes())), 1), GenerationRefused);
  EXPECT_THROW(m.generate(derive_spec(gap("g", "unit-convert(kg->parsec)", kg(), tonnes())), 1), GenerationRefused);
}

TEST(TemplateMaker, FiftySpecsCarryTheirIds) {
  TemplateMaker m;
  std::set<std::string> ids;
  for (const auto& c : synth::maker_gaps(50, 0)) {
    const auto spec = derive_spec(c);
    const auto a = m.generate(spec, 1);
    EXPECT_EQ(a.spec_id, spec.id);
    ids.insert(spec.id);
  }
  EXPECT_EQ(ids.size(), 50u);
}

// --- validation ---------------------------------------------------------------

TEST(Validate, EchoArtifactPasses) {
  const auto spec = derive_spec(gap("g", "passthrough", field_schema({"q"}), field_schema({"q"}), {FieldPresent{"q"}}));
  const Artifact echo{"a", spec.id, "passthrough", Json::array({{{"op", "copy"}, {"from", "q"}, {"to", "q"}}})};
  const auto v = validate_impl(echo, spec);
  EXPECT_TRUE(v.passed);
}

TEST(Validate, WrongFieldNameFailsSchemaCheck) {
  const auto spec = derive_spec(gap("g", "passthrough", field_schema({"q"}), field_schema({"q"})));
  const Artifact wrong{"a", spec.id, "passthrough", Json::array({{{"op", "copy"}, {"from", "q"}, {"to", "qq"}}})};
  const auto v = validate_impl(wrong, spec);
  EXPECT_FALSE(v.passed);
  ASSERT_EQ(v.cases.size(), 1u);
  bool listed = false;
  for (const auto& c : v.cases[0].checks)
    if (c.check == "schema:q" && c.verdict == Verdict::kFail) listed = true;
  EXPECT_TRUE(listed);
}

TEST(Validate, SleepPastWallTimeIsKilledInTime) {
  ResourceLimits lim{150, 64};
  const auto spec = derive_spec(gap("g", "slow(5000)", field_schema({"q"}), field_schema({"q"})), lim);
  const auto a = TemplateMaker().generate(spec, 1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto v = validate_impl(a, spec);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_FALSE(v.passed);
  EXPECT_NE(v.cases[0].error.find("SandboxViolation"), std::string::npos) << v.cases[0].error;
  EXPECT_GE(ms, 150);
  EXPECT_LT(ms, 150 + 1000);
}

TEST(Validate, MemoryLimitIsEnforced) {
  Artifact hog{"a", "s", "x", Json::array({{{"op", "alloc"}, {"mb", 512}}, {{"op", "const"}, {"to", "y"}, {"value", 1}}})};
  EXPECT_THROW(run_isolated(hog, Record::object(), {2000, 32}), SandboxViolation);
  Artifact small{"a", "s", "x", Json::array({{{"op", "alloc"}, {"mb", 4}}, {{"op", "const"}, {"to", "y"}, {"value", 1}}})};
  EXPECT_EQ(run_isolated(small, Record::object(), {2000, 64}).at("y"), 1);
}

TEST(Validate, ChildErrorsKeepTheirKind) {
  Artifact bad{"a", "s", "x", Json::array({{{"op", "fail"}, {"message", "disk full"}}})};
  try {
    run_isolated(bad, Record::object(), {});
    FAIL();
  } catch (const ExecutionError& e) {
    EXPECT_EQ(std::string(e.what()), "ExecutionError: disk full");
  }
}

// --- lifecycle ----------------------------------------------------------------

struct Rig {
  ToolHub hub;
  ToolRuntime runtime;
  TemplateMaker backend;
  ToolMaker maker;
  explicit Rig(MakerOptions opt = {}) : maker(hub, runtime, backend, opt) {}
};

TEST(ToolMaker, SatisfiableGapIsRegisteredAndRetrievable) {
  Rig r;
  const auto c = gap("mass", "unit-convert(kg->t)", kg(), tonnes(), {FieldPresent{"mass_t"}});
  EXPECT_EQ(Negotiator(r.hub).declare_need(c, "before").state(), SessionState::kFailed);
  const auto run = r.maker.make_and_register(c);
  ASSERT_TRUE(run.succeeded()) << run.failure;
  const auto& card = r.hub.snapshot()->get(*run.tool_id);
  EXPECT_EQ(card.provenance.origin, ToolOrigin::kToolMaker);
  EXPECT_EQ(card.reliability, (Reliability{1, 1}));
  EXPECT_EQ(r.hub.tdi_query(c, 1).ranked.at(0).id, *run.tool_id);
  const auto after = Negotiator(r.hub).declare_need(c, "after");
  ASSERT_EQ(after.state(), SessionState::kCandidatesProposed);
  EXPECT_EQ(after.candidates().at(0).tools.at(0), *run.tool_id);
  EXPECT_DOUBLE_EQ(r.runtime.invoke(card, {{"mass_kg", 500}}).at("mass_t").get<double>(), 0.5);
  EXPECT_TRUE(unvalidated_tools(*r.hub.snapshot(), r.maker).empty());
}

TEST(ToolMaker, ExhaustedRetriesRecordFailure) {
  Rig r;
  const auto run = r.maker.make_and_register(
      gap("mass", "unit-convert(kg->t)", kg(), tonnes(), {ValueInRange{"mass_t", 100, 200}}));
  EXPECT_FALSE(run.succeeded());
  EXPECT_EQ(run.tries.size(), 3u);
  EXPECT_EQ(r.hub.snapshot()->size(), 0u);
  const auto rep = r.maker.report();
  EXPECT_EQ(rep.attempts, 1);
  EXPECT_EQ(rep.failed, 1);
}

TEST(ToolMaker, RefusalStopsRetrying) {
  Rig r;
  const auto run = r.maker.make_and_register(gap("g", "teleport", kg(), tonnes()));
  EXPECT_FALSE(run.succeeded());
  EXPECT_EQ(run.tries.size(), 1u);
  EXPECT_NE(run.failure.find("GenerationRefused"), std::string::npos);
}

TEST(ToolMaker, ReproducesExecutionStatistics) {
  MakerOptions opt;
  opt.limits = {100, 64};
  opt.keep_log = false;
  Rig r(opt);
  for (const auto& c : synth::maker_gaps(392, 12, 1000)) r.maker.make_and_register(c);
  const auto rep = r.maker.report();
  EXPECT_EQ(rep.attempts, 392);
  EXPECT_EQ(rep.succeeded, 380);
  EXPECT_EQ(rep.failed, 12);
  EXPECT_NEAR(rep.rate(), 0.9694, 1e-4);
  EXPECT_EQ(r.hub.snapshot()->size(), 380u);
  EXPECT_TRUE(unvalidated_tools(*r.hub.snapshot(), r.maker).empty());
}

TEST(ToolMaker, ConcurrentRunsKeepReportConsistent) {
  const auto gaps = synth::maker_gaps(40, 4, 3000);
  MakerOptions opt;
  opt.limits = {100, 64};
  Rig rig(opt);
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < gaps.size(); i += 4) rig.maker.make_and_register(gaps[i]);
    });
  for (auto& t : workers) t.join();
  const auto rep = rig.maker.report();
  EXPECT_EQ(rep.attempts, 40);
  EXPECT_EQ(rep.succeeded + rep.failed, rep.attempts);
  EXPECT_EQ(rep.failed, 4);
  EXPECT_TRUE(unvalidated_tools(*rig.hub.snapshot(), rig.maker).empty());
}

TEST(ToolMaker, ProviderBackendUsesScriptedArtifact) {
  MockScript script = MockScript::from_json(Json{
      {"entries",
       Json::array({{{"match", {{"model", "maker"}, {"contains", "ATTEMPT: 1"}}},
                     {"response", {{"ops", Json::array({{{"op", "const"}, {"to", "y"}, {"value", 2}}})}}}},
                    {{"match", {{"model", "maker"}}}, {"response", {{"refuse", "out of scope"}}}}})}});
  MockProvider provider(script);
  ProviderMaker backend("maker", provider);
  ToolHub hub;
  ToolRuntime runtime;
  ToolMaker maker(hub, runtime, backend);
  const auto ok = maker.make_and_register(gap("y-maker", "anything", {}, field_schema({"y"}), {FieldPresent{"y"}}));
  ASSERT_TRUE(ok.succeeded()) << ok.failure;
  const auto refused = maker.make_and_register(gap("z-maker", "anything-else", {}, field_schema({"z"})));
  EXPECT_FALSE(refused.succeeded());
  EXPECT_NE(refused.failure.find("out of scope"), std::string::npos);
}

TEST(ToolMaker, WorkspaceKeepsArtifactsAndAttemptLogs) {
  const auto dir = std::filesystem::temp_directory_path() / "cf_maker_ws";
  std::filesystem::remove_all(dir);
  MakerOptions opt;
  opt.workspace = dir;
  Rig r(opt);
  const auto run = r.maker.make_and_register(gap("mass", "unit-convert(kg->t)", kg(), tonnes()));
  ASSERT_TRUE(run.succeeded());
  EXPECT_TRUE(std::filesystem::exists(dir / ("art-" + run.spec_id + "-a1.artifact.json")));
  EXPECT_TRUE(std::filesystem::exists(dir / (run.spec_id + ".attempt-1.json")));
  ToolRuntime loaded;
  EXPECT_EQ(loaded.load_dir(dir), 1u);
  std::filesystem::remove_all(dir);
}

}  // namespace

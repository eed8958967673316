#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "contractflow/metrics.hpp"

using namespace contractflow;

namespace {

struct MetricCase {
  std::string name;
  Deliverable d;
  ExecutionTrace trace;
  EvalSpec eval;
  Json expected;
};

std::vector<MetricCase> load_cases() {
  std::vector<MetricCase> out;
  const auto fx = load_json_file(std::string(CONTRACTFLOW_FIXTURES) + "/metrics_cases.json");
  for (const auto& j : fx.at("cases")) {
    MetricCase c{j.at("name"), j.at("deliverable").get<Deliverable>(), {}, j.at("eval").get<EvalSpec>(), j.at("expected")};
    for (const auto& id : j.at("trace_steps")) {
      StepRecord s;
      s.step_id = id.get<std::string>();
      c.trace.steps.push_back(s);
    }
    out.push_back(std::move(c));
  }
  return out;
}

void expect_count(const MetricScore& m, const Json& want, const std::string& name) {
  EXPECT_EQ(m.satisfied(), want[0].get<std::size_t>()) << name << " " << m.name;
  EXPECT_EQ(m.required(), want[1].get<std::size_t>()) << name << " " << m.name;
  // Exact ratio: the score is the quotient of the two counts, or 1 when vacuous.
  if (m.required() == 0) {
    EXPECT_TRUE(m.vacuous());
    EXPECT_EQ(m.score(), 1.0);
  } else {
    EXPECT_EQ(m.score(), static_cast<double>(m.satisfied()) / static_cast<double>(m.required()));
  }
}

TEST(Metrics, TwentyCaseFixtureMatchesHandCounts) {
  const auto cases = load_cases();
  ASSERT_EQ(cases.size(), 20u);
  for (const auto& c : cases) {
    const auto r = compute_metrics(c.d, c.trace, c.eval);
    expect_count(r.presence_coverage, c.expected.at("presence_coverage"), c.name);
    expect_count(r.rule_citation, c.expected.at("rule_citation"), c.name);
    expect_count(r.evidence_presence, c.expected.at("evidence_presence"), c.name);
    expect_count(r.normalization, c.expected.at("normalization"), c.name);
  }
}

TEST(Metrics, TrivialFractions) {
  Deliverable d;
  d.structured = {{"a", 1}, {"b", 2}};
  NeedContract c;
  c.id = "c";
  c.output_schema.fields = {{"a", SemanticType::number(), true}, {"b", SemanticType::number(), true},
                            {"c", SemanticType::number(), true}, {"d", SemanticType::number(), true}};
  EXPECT_EQ(presence_coverage(d, {c}).score(), 0.5);
  d.structured["c"] = 3;
  d.structured["d"] = 4;
  EXPECT_EQ(presence_coverage(d, {c}).score(), 1.0);
  EXPECT_TRUE(rule_citation(d, {}).vacuous());
  EXPECT_EQ(rule_citation(d, {}).score(), 1.0);
  d.rule_citations = {"R2"};
  EXPECT_NEAR(rule_citation(d, {"R1", "R2", "R3"}).score(), 1.0 / 3.0, 1e-15);
}

TEST(Metrics, JsonCarriesCountsAndVacuousFlag) {
  const auto j = Json(rule_citation(Deliverable{}, {}));
  EXPECT_EQ(j.at("vacuous"), true);
  EXPECT_EQ(j.at("required"), 0);
  EXPECT_EQ(j.at("score"), 1.0);
}

TEST(MetricsProperties, OrderIndependent) {
  std::mt19937 rng(3);
  for (auto c : load_cases()) {
    const auto before = Json(compute_metrics(c.d, c.trace, c.eval));
    std::shuffle(c.d.evidence.begin(), c.d.evidence.end(), rng);
    std::shuffle(c.d.rule_citations.begin(), c.d.rule_citations.end(), rng);
    std::shuffle(c.eval.required_rules.begin(), c.eval.required_rules.end(), rng);
    std::shuffle(c.trace.steps.begin(), c.trace.steps.end(), rng);
    std::shuffle(c.eval.contracts.begin(), c.eval.contracts.end(), rng);
    const auto after = compute_metrics(c.d, c.trace, c.eval);
    for (const auto& key : {"presence_coverage", "rule_citation", "evidence_presence"})
      EXPECT_EQ(before.at(key).at("score"), Json(after).at(key).at("score")) << c.name << " " << key;
    std::shuffle(c.eval.normalization.begin(), c.eval.normalization.end(), rng);
    EXPECT_EQ(before.at("normalization").at("score"), Json(compute_metrics(c.d, c.trace, c.eval)).at("normalization").at("score"));
  }
}

TEST(MetricsProperties, AddingSatisfiedItemNeverLowersScore) {
  for (auto c : load_cases()) {
    const auto base = compute_metrics(c.d, c.trace, c.eval);
    auto d = c.d;
    d.structured["zz_extra"] = 1;
    d.evidence.push_back({"zz_extra", {"zz"}, {}});
    auto trace = c.trace;
    StepRecord s;
    s.step_id = "zz";
    trace.steps.push_back(s);
    d.rule_citations.push_back("ZZ");
    auto eval = c.eval;
    eval.required_rules.push_back("ZZ");
    NeedContract extra;
    extra.id = "zz";
    extra.output_schema.fields = {{"zz_extra", SemanticType::number(), true}};
    eval.contracts.push_back(extra);
    eval.normalization.push_back({RangeConstraint{"zz_extra", 0, 2}, ""});
    const auto more = compute_metrics(d, trace, eval);
    EXPECT_GE(more.presence_coverage.score(), base.presence_coverage.score()) << c.name;
    EXPECT_GE(more.rule_citation.score(), base.rule_citation.score()) << c.name;
    EXPECT_GE(more.evidence_presence.score(), base.evidence_presence.score()) << c.name;
    EXPECT_GE(more.normalization.score(), base.normalization.score()) << c.name;
  }
}

TEST(Metrics, RowLayout) {
  const auto row = format_metric_row("sample", MetricReport{});
  EXPECT_NE(row.find("Pres. Cov."), std::string::npos);
  EXPECT_NE(row.find("Evidence Pres."), std::string::npos);
  EXPECT_NE(row.find("1.0000"), std::string::npos);
}

}  // namespace

#include <gtest/gtest.h>

#include <random>

#include "contractflow/negotiation.hpp"
#include "contractflow/toolhub/bench.hpp"
#include "support/hub_oracle.hpp"
#include "support/session_oracle.hpp"

using namespace contractflow;
using cftest::field_schema;
using cftest::oracle_safe;

namespace {

ToolCard tool(const std::string& id, const std::vector<std::string>& in, const std::vector<std::string>& out,
              const std::string& tag) {
  ToolCard c;
  c.id = id;
  c.name = id;
  c.capabilities = {{tag, "tool for " + tag}};
  c.input_schema = field_schema(in);
  c.output_schema = field_schema(out);
  return c;
}

NeedContract contract(const std::string& tag, const std::vector<std::string>& in, const std::vector<std::string>& out) {
  NeedContract n;
  n.id = n.node_id = "need-" + tag;
  n.capability = {tag, "tool for " + tag};
  n.input_schema = field_schema(in);
  n.output_schema = field_schema(out);
  return n;
}

Record echo(const ToolCard& card, const Record& in) {
  Record out = in;
  for (const auto& f : card.output_schema.fields) out[f.name] = 1.0;
  return out;
}

ConstraintExpr range(const std::string& f, double lo, double hi) { return {RangeConstraint{f, lo, hi}, ""}; }

struct Hub {
  ToolHub hub;
  Negotiator neg{hub};
  Hub() {
    hub.register_cards({tool("et", {"temp"}, {"et_mm"}, "evapotranspiration"),
                        tool("soil", {"region"}, {"ph"}, "soil-analysis")});
  }
};

TEST(Negotiation, UniqueTagMatchGivesOneCandidate) {
  Hub h;
  const auto s = h.neg.declare_need(contract("evapotranspiration", {"temp"}, {"et_mm"}), "s1");
  EXPECT_EQ(s.state(), SessionState::kCandidatesProposed);
  ASSERT_EQ(s.candidates().size(), 1u);
  EXPECT_EQ(s.candidates()[0].tools, std::vector<std::string>{"et"});
  EXPECT_FALSE(s.binding());
}

TEST(Negotiation, NoToolAndNoChainFails) {
  Hub h;
  const auto s = h.neg.declare_need(contract("weather-radar", {"x"}, {"reflectivity"}), "s1");
  EXPECT_EQ(s.state(), SessionState::kFailed);
  ASSERT_TRUE(s.failure());
  EXPECT_NE(s.failure()->find("NoCandidates"), std::string::npos);
  ToolHub empty;
  EXPECT_EQ(Negotiator(empty).declare_need(contract("a", {}, {"b"}), "s2").state(), SessionState::kFailed);
}

TEST(Negotiation, FallsBackToComposedChain) {
  ToolHub hub;
  hub.register_cards({tool("A", {"region"}, {"x"}, "alpha"), tool("B", {"x"}, {"y"}, "beta")});
  const auto s = Negotiator(hub).declare_need(contract("gamma", {"region"}, {"y"}), "s");
  ASSERT_EQ(s.candidates().size(), 1u);
  EXPECT_EQ(s.candidates()[0].tools, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(s.candidates()[0].via, "toci");
}

TEST(Negotiation, CandidatesEqualTdiOracleOn24Tools) {
  const auto reg = synth::registry(24);
  ToolHub hub;
  hub.register_cards(reg.cards);
  Negotiator neg(hub);
  HashEmbedder emb(64);
  for (const auto& need : reg.needs) {
    const auto s = neg.declare_need(need, "s-" + need.id);
    std::vector<std::string> want;
    const auto scored = cftest::oracle_tdi(reg.cards, need, emb);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& card = *std::find_if(reg.cards.begin(), reg.cards.end(), [&](const ToolCard& c) { return c.id == scored[i].id; });
      if (schema_compatible(need.input_schema, card.input_schema).satisfied &&
          schema_compatible(card.output_schema, need.output_schema).satisfied)
        want.push_back(card.id);
    }
    std::vector<std::string> got;
    for (const auto& c : s.candidates()) got.push_back(c.tools.at(0));
    EXPECT_EQ(got, want) << need.id;
  }
}

TEST(Negotiation, ConfirmHappyPathAndSingleGap) {
  Hub h;
  auto s = h.neg.declare_need(contract("evapotranspiration", {"temp"}, {"et_mm"}), "s");
  h.neg.confirm_contract(s, Record::object());
  EXPECT_EQ(s.state(), SessionState::kInputsRequested);
  EXPECT_EQ(s.requested(), std::vector<std::string>{"temp"});
  EXPECT_FALSE(s.binding());
  h.neg.confirm_contract(s, Record{{"temp", 21.5}});
  EXPECT_EQ(s.state(), SessionState::kContractConfirmed);
  EXPECT_EQ(*s.binding(), (Record{{"temp", 21.5}}));
}

TEST(Negotiation, PreconditionViolationNamesConstraint) {
  Hub h;
  auto c = contract("evapotranspiration", {"temp"}, {"et_mm"});
  c.preconditions = {range("temp", 0, 100)};
  auto s = h.neg.declare_need(c, "s");
  try {
    h.neg.confirm_contract(s, Record{{"temp", 150}});
    FAIL() << "expected ContractRejected";
  } catch (const ContractRejected& e) {
    EXPECT_NE(std::string(e.what()).find(describe(c.preconditions[0])), std::string::npos) << e.what();
  }
  EXPECT_EQ(s.state(), SessionState::kInputsRequested);
  EXPECT_EQ(s.requested(), std::vector<std::string>{"temp"});
}

TEST(Negotiation, EchoExecutionCompletes) {
  Hub h;
  auto s = h.neg.declare_need(contract("evapotranspiration", {"temp"}, {"et_mm"}), "s");
  h.neg.confirm_contract(s, Record{{"temp", 20}});
  h.neg.execute_confirmed(s, [](const ToolCard&, const Record& in) { return in; });
  EXPECT_EQ(s.state(), SessionState::kCompleted);
  EXPECT_EQ(*s.output(), (Record{{"temp", 20}}));
  EXPECT_EQ(h.hub.snapshot()->get("et").reliability, (Reliability{1, 1}));
}

TEST(Negotiation, FailingToolCountsAttempt) {
  Hub h;
  auto s = h.neg.declare_need(contract("evapotranspiration", {"temp"}, {"et_mm"}), "s");
  h.neg.confirm_contract(s, Record{{"temp", 20}});
  h.neg.execute_confirmed(s, [](const ToolCard&, const Record&) -> Record { throw ExecutionError("sensor offline"); });
  EXPECT_EQ(s.state(), SessionState::kFailed);
  EXPECT_NE(s.failure()->find("sensor offline"), std::string::npos);
  EXPECT_EQ(h.hub.snapshot()->get("et").reliability, (Reliability{1, 0}));
  // Retry re-arms with the same binding.
  h.neg.retry(s);
  EXPECT_EQ(s.state(), SessionState::kContractConfirmed);
  h.neg.execute_confirmed(s, echo);
  EXPECT_EQ(s.state(), SessionState::kCompleted);
  EXPECT_EQ(h.hub.snapshot()->get("et").reliability, (Reliability{2, 1}));
  EXPECT_EQ(s.executions(), 2);
}

TEST(Negotiation, ExecuteBeforeConfirmIsProtocolError) {
  Hub h;
  auto s = h.neg.declare_need(contract("evapotranspiration", {"temp"}, {"et_mm"}), "s");
  EXPECT_THROW(h.neg.execute_confirmed(s, echo), ProtocolError);
  EXPECT_EQ(h.hub.snapshot()->get("et").reliability.attempts, 0);
  auto dead = h.neg.declare_need(contract("nothing", {"x"}, {"zz"}), "d");
  EXPECT_THROW(h.neg.retry(dead), ProtocolError);
}

TEST(Negotiation, StateMachineIsTotal) {
  auto path_to = [](SessionState st) -> std::vector<SessionEvent> {
    using E = SessionEvent;
    switch (st) {
      case SessionState::kNeedDeclared: return {};
      case SessionState::kCandidatesProposed: return {E::kPropose};
      case SessionState::kInputsRequested: return {E::kPropose, E::kRequestInputs};
      case SessionState::kContractConfirmed: return {E::kPropose, E::kConfirm};
      case SessionState::kExecuting: return {E::kPropose, E::kConfirm, E::kStart};
      case SessionState::kCompleted: return {E::kPropose, E::kConfirm, E::kStart, E::kSucceed};
      case SessionState::kFailed: return {E::kNoCandidates};
    }
    return {};
  };
  int defined = 0;
  for (const auto& [st, sname] : detail::kSessionStates)
    for (const auto& [ev, ename] : detail::kSessionEvents) {
      NegotiationSession probe("p", contract("a", {}, {"b"}));
      for (auto e : path_to(st)) probe.apply(e);
      ASSERT_EQ(probe.state(), st);
      const auto before = probe.transcript().size();
      if (const auto to = next_state(st, ev)) {
        ++defined;
        probe.apply(ev);
        EXPECT_EQ(probe.state(), *to);
        EXPECT_EQ(probe.transcript().size(), before + 1);
      } else {
        // Undefined pairs raise instead of being dropped.
        EXPECT_THROW(probe.apply(ev), ProtocolError) << sname << " / " << ename;
        EXPECT_EQ(probe.transcript().size(), before);
      }
    }
  EXPECT_EQ(defined, 13);
}

TEST(Negotiation, FuzzedSessionsNeverInvokeBeforeConfirmation) {
  ToolHub hub;
  hub.register_cards({tool("t1", {"a"}, {"out"}, "cap"), tool("t2", {"a", "b"}, {"out"}, "cap"),
                      tool("t3", {}, {"out"}, "cap"), tool("t4", {"a"}, {"mid"}, "other"),
                      tool("t5", {"mid"}, {"far"}, "other")});
  Negotiator neg(hub);
  std::mt19937_64 rng(2024);
  std::vector<SessionRecord> log;
  int invocations = 0;
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  for (int i = 0; i < 1000; ++i) {
    const int kind = i % 3;
    auto c = kind == 0 ? contract("cap", {"a"}, {"out"}) : kind == 1 ? contract("zzz", {"a"}, {"far"}) : contract("none", {}, {"nope"});
    if (coin(0.3)) c.preconditions = {range("a", 0, 10)};
    auto s = neg.declare_need(c, "s" + std::to_string(i));
    for (int step = 0; step < 12 && s.state() != SessionState::kCompleted; ++step) {
      const auto tool_fails = coin(0.3);
      try {
        switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
          case 0: neg.select(s, std::uniform_int_distribution<std::size_t>(0, 3)(rng)); break;
          case 1: {
            Record b = Record::object();
            if (coin(0.8)) b["a"] = std::uniform_int_distribution<int>(-5, 15)(rng);
            if (coin(0.5)) b["b"] = 1;
            if (coin(0.5)) b["mid"] = 2;
            neg.confirm_contract(s, b);
            break;
          }
          case 2:
          case 3:
            neg.execute_confirmed(s, [&](const ToolCard& card, const Record& in) {
              ++invocations;
              if (tool_fails) throw ExecutionError("planted");
              return echo(card, in);
            });
            break;
          case 4: neg.retry(s); break;
          default: neg.switch_candidate(s, std::uniform_int_distribution<std::size_t>(0, 3)(rng)); break;
        }
      } catch (const ProtocolError&) {
      } catch (const ContractRejected&) {
      } catch (const InvalidValue&) {
      }
      if (s.binding()) EXPECT_TRUE(s.state() != SessionState::kCandidatesProposed && s.state() != SessionState::kInputsRequested);
    }
    log.insert(log.end(), s.transcript().begin(), s.transcript().end());
  }
  EXPECT_GT(invocations, 100);
  EXPECT_TRUE(oracle_safe(log));
  EXPECT_TRUE(unsafe_sessions(log).empty());
}

TEST(Negotiation, SafetyScanFlagsForgedInvocation) {
  std::vector<SessionRecord> log{{0, "s", "propose", "need-declared", "candidates-proposed", {}},
                                 {1, "s", "invoke", "executing", "executing", {}}};
  EXPECT_EQ(unsafe_sessions(log), std::vector<std::string>{"s"});
  EXPECT_FALSE(oracle_safe(log));
}

TEST(Negotiation, TranscriptRoundTrips) {
  Hub h;
  auto s = h.neg.declare_need(contract("evapotranspiration", {"temp"}, {"et_mm"}), "s");
  h.neg.confirm_contract(s, Record{{"temp", 20}});
  h.neg.execute_confirmed(s, echo);
  const auto text = transcript_jsonl(s.transcript());
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto r = Json::parse(line).get<SessionRecord>();
    EXPECT_EQ(r.seq, n++);
  }
  EXPECT_EQ(n, static_cast<int>(s.transcript().size()));
  EXPECT_EQ(s.transcript().back().to, "completed");
}

}  // namespace

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "contractflow/engine.hpp"
#include "contractflow/shell/config.hpp"

using namespace contractflow;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  auto shared = std::make_shared<std::map<std::string, std::string>>(std::move(vars));
  return [shared](const char* name) -> const char* {
    const auto it = shared->find(name);
    return it == shared->end() ? nullptr : it->second.c_str();
  };
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / ("cf-config-" + name);
  std::ofstream(p) << text;
  return p;
}

TEST(Config, DefaultsWithoutFileOrEnvironment) {
  const auto c = load_config(std::nullopt, env_of({}));
  EXPECT_FALSE(c.provider);
  EXPECT_FALSE(c.mock_script);
  EXPECT_EQ(c.policy.max_retries_per_node, 2);
  EXPECT_EQ(make_provider(c), nullptr);
}

TEST(Config, EnvironmentOverridesFile) {
  const auto f = write_temp("env.json", R"({"provider": {"endpoint": "http://a:1/v1", "model": "m1", "timeout_ms": 500}})");
  const auto c = load_config(f, env_of({{"CONTRACTFLOW_MODEL", "m2"}, {"CONTRACTFLOW_TIMEOUT_MS", "900"}}));
  ASSERT_TRUE(c.provider);
  EXPECT_EQ(c.provider->endpoint, "http://a:1/v1");
  EXPECT_EQ(c.provider->model, "m2");
  EXPECT_EQ(c.provider->timeout_ms, 900);
  EXPECT_EQ(c.provider->credential_ref, "CONTRACTFLOW_API_KEY");
}

TEST(Config, FileFromEnvironmentVariable) {
  const auto f = write_temp("viaenv.json", R"({"planning": {"candidates": 5, "rounds": 1}})");
  const auto c = load_config(std::nullopt, env_of({{"CONTRACTFLOW_CONFIG", f.string()}}));
  EXPECT_EQ(c.candidates, 5u);
  EXPECT_EQ(c.rounds, 1);
}

TEST(Config, RejectsBadValuesAsConfigErrors) {
  EXPECT_THROW(load_config(std::nullopt, env_of({{"CONTRACTFLOW_ENDPOINT", "http://x"}, {"CONTRACTFLOW_TIMEOUT_MS", "0"}})),
               ConfigError);
  EXPECT_THROW(load_config(std::nullopt, env_of({{"CONTRACTFLOW_TIMEOUT_MS", "soon"}})), ConfigError);
  EXPECT_THROW(load_config(std::filesystem::path("/nonexistent/cf.json"), env_of({})), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"policy": {"max_retries_per_node": -1}})")), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"planning": {"candidates": "many"}})")), ConfigError);
  EXPECT_THROW(parse_config(Json::array()), ConfigError);
}

TEST(Config, InlineSecretsAreRefusedWithoutEchoingThem) {
  try {
    parse_config(Json::parse(R"({"provider": {"endpoint": "http://a/v1", "api_key": "sk-live-123"}})"));
    FAIL() << "inline key accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).find("sk-live-123"), std::string::npos);
  }
  EXPECT_THROW(parse_config(Json::parse(R"({"token": "x"})")), ConfigError);
}

TEST(Config, RedactedViewOmitsCredentialValue) {
  const auto c = load_config(std::nullopt, env_of({{"CONTRACTFLOW_ENDPOINT", "http://a:1/v1"},
                                                   {"CONTRACTFLOW_CREDENTIAL_REF", "MY_KEY"},
                                                   {"MY_KEY", "sk-secret-value"}}));
  const auto text = redacted(c).dump();
  EXPECT_NE(text.find("MY_KEY"), std::string::npos);
  EXPECT_EQ(text.find("sk-secret-value"), std::string::npos);
}

TEST(Config, MockScriptPathIsRelativeToTheFile) {
  const auto dir = std::filesystem::temp_directory_path() / "cf-config-mock";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "script.json") << R"({"entries": [{"match": {"contains": "hi"}, "response": "hello"}]})";
  std::ofstream(dir / "config.json") << R"({"mock_script": "script.json"})";
  const auto c = load_config(dir / "config.json", env_of({}));
  ASSERT_TRUE(c.mock_script);
  EXPECT_EQ(*c.mock_script, dir / "script.json");
  auto p = make_provider(c);
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(p->chat({"any", {{"user", "hi there"}}}), "hello");
}

TEST(Contracts, Forms) {
  PlanSpec plan;
  PlanNode a;
  a.id = "a";
  a.goal = "Do A";
  plan.nodes = {a};
  const auto derived = contracts_for(plan, Json());
  EXPECT_EQ(derived.at("a").capability.tag, "do-a");
  NeedContract c;
  c.id = "c-a";
  c.node_id = "a";
  c.capability = {"x", "x"};
  EXPECT_EQ(contracts_for(plan, Json::array({c})).at("a").id, "c-a");
  EXPECT_EQ(contracts_for(plan, Json{{"contracts", Json::array({c})}}).at("a").capability.tag, "x");
  EXPECT_THROW(contracts_for(plan, Json::array({c, c})), DuplicateId);
  c.node_id = "zz";
  EXPECT_THROW(contracts_for(plan, Json::array({c})), InvalidValue);
}

}  // namespace

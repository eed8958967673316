#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "contractflow/shell/provider.hpp"

using namespace contractflow;

namespace {

ChatRequest req(const std::string& model, const std::string& text) { return {model, {{"user", text}}}; }

MockScript one_entry(const std::string& contains, const std::string& response) {
  MockScript s;
  s.entries.push_back({{"", contains, "", ""}, response});
  return s;
}

}  // namespace

TEST(MockProvider, ServesCannedResponseThenExhausts) {
  MockProvider p(one_entry("hello", "world"));
  EXPECT_EQ(p.chat(req("m", "say hello")), "world");
  EXPECT_THROW(p.chat(req("m", "say hello")), ScriptExhausted);
}

TEST(MockProvider, NonMatchingRequestIsMismatchNotImprovised) {
  MockProvider p(one_entry("hello", "world"));
  EXPECT_THROW(p.chat(req("m", "goodbye")), MatcherMismatch);
  EXPECT_EQ(p.remaining(), 1U);
}

TEST(MockProvider, ModelAndRegexMatchers) {
  MockScript s;
  s.entries.push_back({{"planner", "", "", ""}, "P"});
  s.entries.push_back({{"", "", "", "^crop: [a-z]+$"}, "R"});
  MockProvider p(s);
  EXPECT_EQ(p.chat(req("x", "crop: maize")), "R");
  EXPECT_EQ(p.chat(req("planner", "anything")), "P");
}

TEST(MockProvider, ScriptJsonRoundTrip) {
  const auto j = Json::parse(R"({"embedding_dim": 16, "entries": [
      {"match": {"model": "a", "contains": "x"}, "response": {"ok": true}},
      {"match": {}, "response": "plain"}]})");
  const auto s = MockScript::from_json(j);
  ASSERT_EQ(s.entries.size(), 2U);
  EXPECT_EQ(s.entries[0].response, R"({"ok":true})");
  EXPECT_EQ(MockScript::from_json(s.to_json()).to_json(), s.to_json());
}

TEST(RecordingProvider, ReplayOfTranscriptIsByteIdentical) {
  MockScript s;
  s.entries.push_back({{"", "", "", ""}, "first"});
  s.entries.push_back({{"", "", "", ""}, "second"});
  MockProvider inner(s);
  RecordingProvider rec(inner);
  std::vector<std::string> live{rec.chat(req("a", "q1")), rec.chat(req("b", "q2"))};

  MockProvider replay(MockScript::from_transcript(rec.transcript()));
  RecordingProvider rec2(replay);
  std::vector<std::string> again{rec2.chat(req("a", "q1")), rec2.chat(req("b", "q2"))};
  EXPECT_EQ(live, again);
  EXPECT_EQ(rec.transcript().dump(), rec2.transcript().dump());
}

TEST(HashEmbedder, DeterministicUnitNormSelfCosineOne) {
  HashEmbedder e(64);
  for (int i = 0; i < 100; ++i) {
    const std::string text = "string number " + std::to_string(i) + (i % 7 == 0 ? "" : " irrigation schedule");
    const auto a = e.embed(text);
    const auto b = e.embed(text);
    EXPECT_EQ(a, b);
    EXPECT_NEAR(dot(a, a), 1.0, 1e-9);
    EXPECT_NEAR(cosine(a, b), 1.0, 1e-9);
  }
  EXPECT_NEAR(dot(e.embed(""), e.embed("")), 1.0, 1e-9);
  EXPECT_NEAR(dot(e.embed("!!"), e.embed("")), 1.0, 1e-9);
}

TEST(HashEmbedder, DimensionMismatchThrows) {
  HashEmbedder a(8), b(16);
  EXPECT_THROW(cosine(a.embed("x"), b.embed("x")), DimensionMismatch);
}

TEST(ParseJsonReply, AcceptsFencedAndBare) {
  EXPECT_EQ(parse_json_reply("{\"a\":1}")["a"], 1);
  EXPECT_EQ(parse_json_reply("Here:\n```json\n{\"a\":2}\n```\n")["a"], 2);
  EXPECT_THROW(parse_json_reply("not json"), ParseError);
}

TEST(ProviderConfig, RedactedNeverContainsKey) {
  ::setenv("CF_TEST_KEY", "sk-secret-value", 1);
  ProviderConfig c{"http://localhost:1/v1", "CF_TEST_KEY", "m", "", 1000, 0};
  EXPECT_EQ(redacted(c).dump().find("sk-secret-value"), std::string::npos);
  ProviderConfig bad = c;
  bad.endpoint.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
}

class HttpProviderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& r, httplib::Response& res) {
      ++calls_;
      auth_ = r.get_header_value("Authorization");
      if (calls_ <= fail_first_) {
        res.status = 500;
        return;
      }
      const auto body = Json::parse(r.body);
      Json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo:" + body["model"].get<std::string>()}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[{"embedding":[0.6,0.8]}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  ProviderConfig config(int retries) const {
    return {"http://127.0.0.1:" + std::to_string(port_) + "/v1", "CF_TEST_HTTP_KEY", "default-model", "emb", 2000, retries};
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int calls_ = 0;
  int fail_first_ = 0;
  std::string auth_;
};

TEST_F(HttpProviderTest, ChatAndEmbed) {
  ::setenv("CF_TEST_HTTP_KEY", "abc", 1);
  HttpProvider p(config(0));
  EXPECT_EQ(p.chat(req("", "hi")), "echo:default-model");
  EXPECT_EQ(p.chat(req("router", "hi")), "echo:router");
  EXPECT_EQ(auth_, "Bearer abc");
  EXPECT_EQ(p.embed("x"), (Vector{0.6, 0.8}));
}

TEST_F(HttpProviderTest, RetriesServerErrors) {
  fail_first_ = 2;
  HttpProvider p(config(2));
  EXPECT_EQ(p.chat(req("m", "hi")), "echo:m");
  EXPECT_EQ(calls_, 3);
}

TEST_F(HttpProviderTest, ExhaustedRetriesRaiseBackendUnavailable) {
  fail_first_ = 10;
  HttpProvider p(config(1));
  EXPECT_THROW(p.chat(req("m", "hi")), BackendUnavailable);
  EXPECT_EQ(calls_, 2);
}

TEST(HttpProvider, UnreachableEndpointRaisesBackendUnavailable) {
  HttpProvider p({"http://127.0.0.1:1/v1", "", "m", "", 300, 0});
  EXPECT_THROW(p.chat(req("m", "hi")), BackendUnavailable);
}

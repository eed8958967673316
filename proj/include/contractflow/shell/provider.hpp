#pragma once

// Model backends. Every chat completion and embedding in the library goes
// through `Provider`; this header is the only place that touches the network.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "contractflow/core/serialize.hpp"
#include "contractflow/core/text.hpp"
#include "contractflow/core/util.hpp"
#include "contractflow/error.hpp"

namespace contractflow {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;  // selects the agent role's endpoint/model
  std::vector<ChatMessage> messages;

  std::string joined() const {
    std::string s;
    for (const auto& m : messages) {
      if (!s.empty()) s += '\n';
      s += m.content;
    }
    return s;
  }
  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

inline void to_json(Json& j, const ChatMessage& m) { j = Json{{"role", m.role}, {"content", m.content}}; }
inline void from_json(const Json& j, ChatMessage& m) {
  m.role = j.at("role").get<std::string>();
  m.content = j.at("content").get<std::string>();
}
inline void to_json(Json& j, const ChatRequest& r) { j = Json{{"model", r.model}, {"messages", r.messages}}; }
inline void from_json(const Json& j, ChatRequest& r) {
  r.model = j.value("model", std::string{});
  r.messages = j.at("messages").get<std::vector<ChatMessage>>();
}

using Vector = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
  // Identifies the embedding space; vectors from different ids never mix.
  virtual std::string id() const = 0;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual Vector embed(std::string_view text) = 0;
};

inline double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch(std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const Vector& a, const Vector& b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) return 0;
  return dot(a, b) / (na * nb);
}

// Deterministic feature-hashing embedder: each token adds a signed unit to
// one bucket, then the vector is L2-normalised. Text without tokens maps to
// a fixed basis vector so every output has unit norm.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 64) : dim_(dim) {
    if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
  }

  Vector embed(std::string_view text) override {
    Vector v(dim_, 0.0);
    for (const auto& tok : tokenize(text)) {
      const auto h = fnv1a(tok);
      const double sign = (fnv1a(tok, 0x84222325cbf29ce4ULL) & 1U) ? 1.0 : -1.0;
      v[h % dim_] += sign;
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm == 0) {
      v[fnv1a("") % dim_] = 1.0;
      return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  }

  std::size_t dimension() const override { return dim_; }
  std::string id() const override { return "hash-" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

// Adapts a provider's embedding endpoint to the Embedder interface.
class ProviderEmbedder : public Embedder {
 public:
  ProviderEmbedder(Provider& provider, std::size_t dim, std::string id)
      : provider_(provider), dim_(dim), id_(std::move(id)) {}
  Vector embed(std::string_view text) override {
    Vector v;
    try {
      v = provider_.embed(text);
    } catch (const BackendUnavailable& e) {
      throw EmbedderFailure(e.what());
    }
    if (v.size() != dim_) throw DimensionMismatch("provider returned " + std::to_string(v.size()) + " dims");
    return v;
  }
  std::size_t dimension() const override { return dim_; }
  std::string id() const override { return id_; }

 private:
  Provider& provider_;
  std::size_t dim_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

struct RequestMatcher {
  std::string model;     // exact, empty = any
  std::string contains;  // substring of the joined message text
  std::string equals;    // exact joined message text
  std::string regex;     // ECMAScript search over the joined text

  bool matches(const ChatRequest& r) const {
    if (!model.empty() && r.model != model) return false;
    const auto text = r.joined();
    if (!equals.empty() && text != equals) return false;
    if (!contains.empty() && text.find(contains) == std::string::npos) return false;
    if (!regex.empty() && !std::regex_search(text, std::regex(regex))) return false;
    return true;
  }
};

struct ScriptEntry {
  RequestMatcher match;
  std::string response;
};

struct MockScript {
  std::vector<ScriptEntry> entries;
  std::size_t embedding_dim = 64;

  static MockScript from_json(const Json& j) {
    MockScript s;
    s.embedding_dim = j.value("embedding_dim", std::size_t{64});
    for (const auto& e : j.value("entries", Json::array())) {
      ScriptEntry entry;
      const auto m = e.value("match", Json::object());
      entry.match.model = m.value("model", std::string{});
      entry.match.contains = m.value("contains", std::string{});
      entry.match.equals = m.value("equals", std::string{});
      entry.match.regex = m.value("regex", std::string{});
      const auto& resp = e.at("response");
      entry.response = resp.is_string() ? resp.get<std::string>() : resp.dump();
      s.entries.push_back(std::move(entry));
    }
    return s;
  }

  Json to_json() const {
    Json entries_j = Json::array();
    for (const auto& e : entries) {
      Json m = Json::object();
      if (!e.match.model.empty()) m["model"] = e.match.model;
      if (!e.match.contains.empty()) m["contains"] = e.match.contains;
      if (!e.match.equals.empty()) m["equals"] = e.match.equals;
      if (!e.match.regex.empty()) m["regex"] = e.match.regex;
      entries_j.push_back({{"match", m}, {"response", e.response}});
    }
    return Json{{"embedding_dim", embedding_dim}, {"entries", entries_j}};
  }

  // Exact-match script that replays a recorded transcript.
  static MockScript from_transcript(const Json& transcript, std::size_t embedding_dim = 64) {
    MockScript s;
    s.embedding_dim = embedding_dim;
    for (const auto& t : transcript) {
      const auto req = t.at("request").get<ChatRequest>();
      ScriptEntry e;
      e.match.model = req.model;
      e.match.equals = req.joined();
      e.response = t.at("response").get<std::string>();
      s.entries.push_back(std::move(e));
    }
    return s;
  }
};

// Serves the first unconsumed entry whose matcher fits. Never improvises:
// an empty remainder raises ScriptExhausted, a non-matching one MatcherMismatch.
class MockProvider : public Provider {
 public:
  explicit MockProvider(MockScript script) : script_(std::move(script)), used_(script_.entries.size(), false),
                                             embedder_(script_.embedding_dim) {}

  std::string chat(const ChatRequest& request) override {
    std::lock_guard lock(mu_);
    bool any_left = false;
    for (std::size_t i = 0; i < script_.entries.size(); ++i) {
      if (used_[i]) continue;
      any_left = true;
      if (script_.entries[i].match.matches(request)) {
        used_[i] = true;
        return script_.entries[i].response;
      }
    }
    if (!any_left) throw ScriptExhausted("no scripted responses left for model '" + request.model + "'");
    throw MatcherMismatch("no remaining scripted response matches request for model '" + request.model + "'");
  }

  Vector embed(std::string_view text) override {
    std::lock_guard lock(mu_);
    return embedder_.embed(text);
  }

  std::size_t remaining() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count(used_.begin(), used_.end(), false));
  }

 private:
  mutable std::mutex mu_;
  MockScript script_;
  std::vector<bool> used_;
  HashEmbedder embedder_;
};

// Records every chat round trip so a session can be replayed byte for byte.
class RecordingProvider : public Provider {
 public:
  explicit RecordingProvider(Provider& inner) : inner_(inner) {}

  std::string chat(const ChatRequest& request) override {
    auto response = inner_.chat(request);
    std::lock_guard lock(mu_);
    transcript_.push_back({{"request", request}, {"response", response}});
    return response;
  }
  Vector embed(std::string_view text) override { return inner_.embed(text); }

  Json transcript() const {
    std::lock_guard lock(mu_);
    return transcript_;
  }

 private:
  Provider& inner_;
  mutable std::mutex mu_;
  Json transcript_ = Json::array();
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backend
// ---------------------------------------------------------------------------

struct ProviderConfig {
  std::string endpoint;        // e.g. http://localhost:8000/v1
  std::string credential_ref;  // name of the environment variable holding the key
  std::string model;
  std::string embedding_model;
  int timeout_ms = 30000;
  int retries = 2;

  void validate() const {
    if (endpoint.empty()) throw ConfigError("provider endpoint is empty");
    if (timeout_ms <= 0) throw ConfigError("provider timeout must be positive");
    if (retries < 0) throw ConfigError("provider retry count must be non-negative");
  }
};

// Prints everything except the credential value.
inline Json redacted(const ProviderConfig& c) {
  return Json{{"endpoint", c.endpoint},   {"credential_ref", c.credential_ref}, {"model", c.model},
              {"embedding_model", c.embedding_model}, {"timeout_ms", c.timeout_ms}, {"retries", c.retries}};
}

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config) : config_(std::move(config)) {
    config_.validate();
    split_endpoint();
  }

  std::string chat(const ChatRequest& request) override {
    Json body{{"model", request.model.empty() ? config_.model : request.model}, {"messages", request.messages}};
    const auto reply = post("/chat/completions", body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
      throw BackendUnavailable(std::string("malformed completion response: ") + e.what());
    }
  }

  Vector embed(std::string_view text) override {
    Json body{{"model", config_.embedding_model.empty() ? config_.model : config_.embedding_model},
              {"input", std::string(text)}};
    const auto reply = post("/embeddings", body);
    try {
      return reply.at("data").at(0).at("embedding").get<Vector>();
    } catch (const Json::exception& e) {
      throw BackendUnavailable(std::string("malformed embedding response: ") + e.what());
    }
  }

  const ProviderConfig& config() const { return config_; }

 private:
  void split_endpoint() {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme");
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    origin_ = config_.endpoint.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  Json post(const std::string& path, const Json& body) {
    httplib::Client client(origin_);
    const auto secs = config_.timeout_ms / 1000;
    const auto usecs = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!config_.credential_ref.empty()) {
      if (const char* key = std::getenv(config_.credential_ref.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
    }
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      auto res = client.Post(prefix_ + path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
      } else if (res->status >= 500 || res->status == 429) {
        last_error = "HTTP " + std::to_string(res->status);
      } else if (res->status >= 400) {
        throw BackendUnavailable("HTTP " + std::to_string(res->status) + " from " + origin_ + prefix_ + path);
      } else {
        try {
          return Json::parse(res->body);
        } catch (const Json::exception& e) {
          throw BackendUnavailable(std::string("response is not JSON: ") + e.what());
        }
      }
      if (attempt < config_.retries) std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
    }
    throw BackendUnavailable(origin_ + prefix_ + path + ": " + last_error);
  }

  ProviderConfig config_;
  std::string origin_;
  std::string prefix_;
};

// Parses a model reply as JSON, tolerating a fenced ```json block around it.
inline Json parse_json_reply(const std::string& reply) {
  std::string body = reply;
  const auto fence = body.find("```");
  if (fence != std::string::npos) {
    auto start = body.find('\n', fence);
    auto end = body.find("```", start == std::string::npos ? fence + 3 : start);
    if (start != std::string::npos && end != std::string::npos) body = body.substr(start + 1, end - start - 1);
  }
  try {
    return Json::parse(body);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("model reply is not valid JSON: ") + e.what());
  }
}

}  // namespace contractflow

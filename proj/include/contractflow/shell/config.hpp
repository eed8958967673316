#pragma once

// Application configuration: a JSON file plus environment overrides.
//
//   {
//     "provider": {"endpoint", "credential_ref", "model", "embedding_model", "timeout_ms", "retries"},
//     "mock_script": "<path>",            // replaces the HTTP provider when set
//     "models": {"text", "vision", "omni", "synthesizer", "planner", "maker", "supervisors": [...]},
//     "policy": ExecutionPolicy,
//     "route": RoutePolicy,
//     "maker": {"retries", "limits": {"wall_ms", "memory_mb"}},
//     "planning": {"candidates", "rounds"},
//     "embedding_dim": 64
//   }
//
// Environment: CONTRACTFLOW_CONFIG (file), CONTRACTFLOW_ENDPOINT, CONTRACTFLOW_MODEL,
// CONTRACTFLOW_CREDENTIAL_REF, CONTRACTFLOW_TIMEOUT_MS, CONTRACTFLOW_MOCK_SCRIPT.
// The key itself is only ever read from the variable named by credential_ref.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "contractflow/executor.hpp"
#include "contractflow/router.hpp"
#include "contractflow/shell/provider.hpp"

namespace contractflow {

struct ModelNames {
  std::string text = "text-expert";
  std::string vision = "vision-expert";
  std::string omni = "omni-expert-audio";
  std::string synthesizer = "omni-expert";
  std::string planner = "planner";
  std::string maker = "toolmaker";
  std::vector<std::string> supervisors{"agronomist", "compliance", "logistics"};
};

struct AppConfig {
  std::optional<ProviderConfig> provider;
  std::optional<std::filesystem::path> mock_script;
  ModelNames models;
  ExecutionPolicy policy;
  Json route = Json::object();
  int maker_retries = 3;
  ResourceLimits maker_limits{2000, 128};
  std::size_t candidates = 3;
  int rounds = 3;
  std::size_t embedding_dim = 64;

  RoutePolicy route_policy() const { return RoutePolicy::from_json(route); }
};

using EnvLookup = std::function<const char*(const char*)>;

inline const char* process_env(const char* name) { return std::getenv(name); }

namespace detail {

inline void reject_inline_secrets(const Json& j, const std::string& where) {
  if (!j.is_object()) return;
  for (const auto* k : {"api_key", "key", "token", "secret", "password", "credential"})
    if (j.contains(k))
      throw ConfigError(where + " has a '" + k + "' field; put the key in an environment variable and name it in credential_ref");
}

}  // namespace detail

inline AppConfig parse_config(const Json& j, const std::filesystem::path& base = {}) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  detail::reject_inline_secrets(j, "configuration");
  AppConfig c;
  try {
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      detail::reject_inline_secrets(p, "provider section");
      ProviderConfig pc;
      pc.endpoint = p.value("endpoint", std::string{});
      pc.credential_ref = p.value("credential_ref", std::string{});
      pc.model = p.value("model", std::string{});
      pc.embedding_model = p.value("embedding_model", std::string{});
      pc.timeout_ms = p.value("timeout_ms", pc.timeout_ms);
      pc.retries = p.value("retries", pc.retries);
      c.provider = pc;
    }
    if (j.contains("mock_script")) {
      std::filesystem::path p = j.at("mock_script").get<std::string>();
      c.mock_script = p.is_relative() && !base.empty() ? base / p : p;
    }
    if (j.contains("models")) {
      const auto& m = j.at("models");
      c.models.text = m.value("text", c.models.text);
      c.models.vision = m.value("vision", c.models.vision);
      c.models.omni = m.value("omni", c.models.omni);
      c.models.synthesizer = m.value("synthesizer", c.models.synthesizer);
      c.models.planner = m.value("planner", c.models.planner);
      c.models.maker = m.value("maker", c.models.maker);
      c.models.supervisors = m.value("supervisors", c.models.supervisors);
    }
    if (j.contains("policy")) c.policy = j.at("policy").get<ExecutionPolicy>();
    if (j.contains("route")) c.route = j.at("route");
    if (j.contains("maker")) {
      const auto& m = j.at("maker");
      c.maker_retries = m.value("retries", c.maker_retries);
      if (m.contains("limits")) c.maker_limits = m.at("limits").get<ResourceLimits>();
    }
    if (j.contains("planning")) {
      c.candidates = j.at("planning").value("candidates", c.candidates);
      c.rounds = j.at("planning").value("rounds", c.rounds);
    }
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  } catch (const InvalidValue& e) {
    throw ConfigError(e.what());
  }
  return c;
}

// File (explicit path, else CONTRACTFLOW_CONFIG, else defaults), then environment.
inline AppConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env) {
  std::optional<std::filesystem::path> path = file;
  if (!path)
    if (const char* p = env("CONTRACTFLOW_CONFIG"); p && *p) path = p;
  AppConfig c;
  if (path) {
    if (!std::filesystem::exists(*path)) throw ConfigError("config file not found: " + path->string());
    Json j;
    try {
      j = load_json_file(path->string());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    c = parse_config(j, path->parent_path());
  }
  auto str = [&](const char* name) -> std::optional<std::string> {
    const char* v = env(name);
    return v && *v ? std::optional<std::string>(v) : std::nullopt;
  };
  auto provider = [&]() -> ProviderConfig& {
    if (!c.provider) c.provider = ProviderConfig{};
    return *c.provider;
  };
  if (auto v = str("CONTRACTFLOW_ENDPOINT")) provider().endpoint = *v;
  if (auto v = str("CONTRACTFLOW_MODEL")) provider().model = *v;
  if (auto v = str("CONTRACTFLOW_CREDENTIAL_REF")) provider().credential_ref = *v;
  if (auto v = str("CONTRACTFLOW_TIMEOUT_MS")) {
    try {
      provider().timeout_ms = std::stoi(*v);
    } catch (const std::exception&) {
      throw ConfigError("CONTRACTFLOW_TIMEOUT_MS is not an integer");
    }
  }
  if (auto v = str("CONTRACTFLOW_MOCK_SCRIPT")) c.mock_script = *v;
  if (c.provider && c.provider->credential_ref.empty()) c.provider->credential_ref = "CONTRACTFLOW_API_KEY";
  if (c.provider && !c.mock_script) c.provider->validate();
  if (c.candidates < 1) throw ConfigError("planning.candidates must be at least 1");
  if (c.rounds < 0) throw ConfigError("planning.rounds must be non-negative");
  return c;
}

inline Json redacted(const AppConfig& c) {
  Json j{{"provider", c.provider ? redacted(*c.provider) : Json()},
         {"mock_script", c.mock_script ? Json(c.mock_script->string()) : Json()},
         {"policy", c.policy},
         {"maker", {{"retries", c.maker_retries}, {"limits", c.maker_limits}}},
         {"planning", {{"candidates", c.candidates}, {"rounds", c.rounds}}},
         {"embedding_dim", c.embedding_dim}};
  return j;
}

// Mock script if configured, else the HTTP backend, else none.
inline std::unique_ptr<Provider> make_provider(const AppConfig& c) {
  if (c.mock_script) {
    Json j;
    try {
      j = load_json_file(c.mock_script->string());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cannot read mock script: ") + e.what());
    }
    return std::make_unique<MockProvider>(MockScript::from_json(j.contains("script") ? j.at("script") : j));
  }
  if (c.provider) return std::make_unique<HttpProvider>(*c.provider);
  return nullptr;
}

}  // namespace contractflow

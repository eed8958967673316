// contractflow command line.
//
// Exit codes: 0 success, 1 any other error, 2 plan failed (partial
// deliverable still printed), 3 configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "contractflow/debate.hpp"
#include "contractflow/engine.hpp"
#include "contractflow/fastpath/answer.hpp"
#include "contractflow/shell/config.hpp"
#include "contractflow/toolhub/bench.hpp"
#include "contractflow/toolhub/toci.hpp"

namespace fs = std::filesystem;
using namespace contractflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPlanFailed = 2;
constexpr int kExitConfig = 3;

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidValue("cannot write '" + p.string() + "'");
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), {}};
}

// run.jsonl -> run.<tag>.jsonl
fs::path sibling(const fs::path& trace, const std::string& tag) {
  return trace.parent_path() / (trace.stem().string() + "." + tag + ".jsonl");
}

template <typename T>
std::string jsonl(const std::vector<T>& rows) {
  std::string s;
  for (const auto& r : rows) s += Json(r).dump() + "\n";
  return s;
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

struct Globals {
  std::optional<std::string> config;
  AppConfig load() const { return load_config(config ? std::optional<fs::path>(*config) : std::nullopt); }
};

std::unique_ptr<Provider> require_provider(const AppConfig& cfg, const std::string& why) {
  auto p = make_provider(cfg);
  if (!p) throw ConfigError(why + " needs a provider: set CONTRACTFLOW_ENDPOINT or mock_script in the config");
  return p;
}

KnowledgeStore load_kb(const std::string& corpus, const std::optional<std::string>& graph) {
  return KnowledgeStore(load_corpus(corpus), graph ? load_edge_list(*graph) : KnowledgeGraph{});
}

// --- run ------------------------------------------------------------------------

struct RunArgs {
  std::optional<std::string> workspace, task, plan, contracts, eval, tools, kb, graph, trace_out, deliverable_out;
  std::string route = "auto";
  std::string maker = "template";
  bool parallel = false;
};

int cmd_run(const Globals& g, const RunArgs& a) {
  const auto cfg = g.load();
  Workspace ws;
  if (a.workspace) ws = load_workspace(*a.workspace);
  if (a.task) ws.task = load_document<TaskEnvelope>(*a.task);
  if (!a.workspace && !a.task) throw InvalidValue("give a workspace directory or --task");
  validate_task(ws.task);

  std::unique_ptr<Provider> provider = make_provider(cfg);
  RouteDecision decision;
  if (a.route == "auto") {
    const auto policy = cfg.route_policy();
    decision = route(ws.task, policy, policy.classifier_override ? provider.get() : nullptr);
  } else {
    decision.route = a.route == "system1" ? Route::kSystem1 : Route::kSystem2;
    decision.rationale = "forced from the command line";
  }

  if (decision.route == Route::kSystem1) {
    if (!a.kb) throw ConfigError("the fast path needs a knowledge base (--kb)");
    auto& p = *(provider ? provider : provider = require_provider(cfg, "the fast path"));
    const auto store = load_kb(*a.kb, a.graph);
    ProviderEmbedder emb(p, cfg.embedding_dim, "provider:" + std::to_string(cfg.embedding_dim));
    const auto idx = embed_corpus(store, emb);
    ProviderAdapter text(adapters::kText, cfg.models.text, p, {ModalityKind::kText});
    ProviderAdapter vision(adapters::kVision, cfg.models.vision, p, {ModalityKind::kImageRef});
    ProviderAdapter omni(adapters::kOmni, cfg.models.omni, p, {ModalityKind::kAudioRef});
    ProviderSynthesizer synth(cfg.models.synthesizer, p);
    const auto r = answer_fast(ws.task, store, &idx, &emb, {&text, &vision, &omni}, synth);
    if (a.deliverable_out) write_file(*a.deliverable_out, Json(r.deliverable).dump(2) + "\n");
    print(Json{{"route", decision}, {"fast_path", r}});
    return kExitOk;
  }

  std::vector<Json> debate_log;
  if (a.plan && *a.plan == "auto") {
    auto& p = *(provider ? provider : provider = require_provider(cfg, "--plan auto"));
    std::vector<std::unique_ptr<ProviderSupervisor>> owned;
    std::vector<Supervisor*> sups;
    for (const auto& name : cfg.models.supervisors) {
      owned.push_back(std::make_unique<ProviderSupervisor>(name, name, p));
      sups.push_back(owned.back().get());
    }
    if (sups.empty()) throw ConfigError("models.supervisors is empty");
    const auto cands = generate_candidates(ws.task, cfg.candidates, sups);
    auto refined = refine(ws.task, cands.candidates, sups, cfg.rounds);
    ws.plan = std::move(refined.plan);
    debate_log = std::move(refined.log);
    ws.contracts.clear();
  } else if (a.plan) {
    ws.plan = load_document<PlanSpec>(*a.plan);
    ws.contracts.clear();
  } else if (!a.workspace) {
    throw InvalidValue("the planned path needs --plan <file|auto>");
  }
  if (a.contracts) ws.contracts = contracts_for(ws.plan, load_json_file(*a.contracts));
  else if (ws.contracts.empty()) ws.contracts = contracts_for(ws.plan, Json());
  if (a.eval) {
    ws.eval = load_document<EvalSpec>(*a.eval);
  } else if (!a.workspace || ws.eval.contracts.empty()) {
    for (const auto& id : terminal_nodes(ws.plan)) ws.eval.contracts.push_back(ws.contracts.at(id));
    if (ws.eval.required_rules.empty()) ws.eval.required_rules = task_constraints(ws.task);
  }
  if (a.tools) ws.tools_dir = *a.tools;

  EngineOptions opt;
  opt.policy = cfg.policy;
  if (a.parallel) opt.policy.parallel = true;
  opt.maker.retries = cfg.maker_retries;
  opt.maker.limits = cfg.maker_limits;
  std::unique_ptr<ProviderMaker> maker_backend;
  if (a.maker == "provider")
    maker_backend = std::make_unique<ProviderMaker>(cfg.models.maker, *(provider ? provider : provider = require_provider(cfg, "--maker provider")));
  Engine engine(opt, maker_backend.get());
  auto out = engine.run(ws);
  out.route = decision;

  if (a.trace_out) {
    const fs::path t = *a.trace_out;
    write_file(t, trace_to_jsonl(out.result.trace));
    write_file(sibling(t, "sessions"), jsonl(out.result.transcript));
    if (!debate_log.empty()) write_file(sibling(t, "debate"), round_log_jsonl(debate_log));
  }
  if (a.deliverable_out) write_file(*a.deliverable_out, Json(out.result.deliverable).dump(2) + "\n");
  Json report = out;
  report["plan"] = {{"nodes", ws.plan.nodes.size()}, {"edges", ws.plan.edges.size()}};
  report["node_errors"] = out.result.node_errors;
  report["toolmaker"] = {{"attempts", out.maker.attempts}, {"succeeded", out.maker.succeeded}, {"failed", out.maker.failed}};
  print(report);
  std::cerr << format_metric_row(ws.task.id, out.metrics);
  return out.result.ok() ? kExitOk : kExitPlanFailed;
}

// --- route ------------------------------------------------------------------------

int cmd_route(const Globals& g, const std::string& task_file, bool classifier) {
  const auto cfg = g.load();
  auto policy = cfg.route_policy();
  std::unique_ptr<Provider> p;
  if (classifier) {
    p = require_provider(cfg, "--classifier");
    policy.classifier_override = true;
  }
  print(Json(route(load_document<TaskEnvelope>(task_file), policy, p.get())));
  return kExitOk;
}

// --- kb -----------------------------------------------------------------------------

int cmd_kb_load(const std::string& corpus, const std::optional<std::string>& graph, const std::optional<std::string>& query,
                std::size_t k) {
  const auto store = load_kb(corpus, graph);
  Json j{{"documents", store.documents().size()},
         {"snapshot_id", store.snapshot_id()},
         {"avgdl", store.avgdl()},
         {"triples", store.graph().triples().size()},
         {"entities", store.graph().nodes().size()}};
  if (query) j["sparse"] = sparse_retrieve(*query, store, k);
  print(j);
  return kExitOk;
}

// --- tools -------------------------------------------------------------------------

std::vector<ToolCard> hub_cards(const std::string& dir) {
  return fs::is_directory(dir) ? ToolHub::load_cards(dir) : std::vector<ToolCard>{};
}

int cmd_tools_register(const std::string& hub_dir, const std::vector<std::string>& files) {
  std::vector<ToolCard> fresh;
  std::vector<std::string> card_files;
  for (const auto& f : files)
    if (fs::path(f).filename().string().find(".artifact.") == std::string::npos) card_files.push_back(f);
  for (const auto& f : card_files) fresh.push_back(load_document<ToolCard>(f));
  ToolHub check;
  check.register_cards(hub_cards(hub_dir));
  for (const auto& c : fresh)
    if (check.snapshot()->find(c.id)) throw DuplicateId("tool '" + c.id + "' is already registered");
  ToolHub hub(std::make_shared<HashEmbedder>(64), fs::path(hub_dir));
  const auto ids = hub.register_cards(fresh);
  for (const auto& f : card_files) {
    const fs::path src(f);
    const auto art = src.parent_path() / (src.stem().string() + ".artifact.json");
    if (fs::exists(art)) fs::copy_file(art, fs::path(hub_dir) / art.filename(), fs::copy_options::overwrite_existing);
  }
  print(Json{{"registered", ids}});
  return kExitOk;
}

int cmd_tools_list(const std::string& hub_dir, bool json) {
  const auto cards = hub_cards(hub_dir);
  if (json) {
    print(Json(cards));
    return kExitOk;
  }
  std::printf("%-28s %-28s %8s %8s\n", "id", "capability", "attempts", "rate");
  for (const auto& c : cards)
    std::printf("%-28s %-28s %8lld %8.3f\n", c.id.c_str(), c.capabilities.empty() ? "" : c.capabilities[0].tag.c_str(),
                static_cast<long long>(c.reliability.attempts), c.reliability.rate());
  return kExitOk;
}

int cmd_tools_query(const std::string& hub_dir, const std::string& need_file, std::size_t k, bool chains) {
  ToolHub hub;
  hub.register_cards(hub_cards(hub_dir));
  const auto need = load_document<NeedContract>(need_file);
  Json j{{"need", need.id}, {"tdi", hub.tdi_query(need, k)}};
  if (chains) j["toci"] = toci_compose(*hub.snapshot(), need, need.input_schema);
  print(j);
  return kExitOk;
}

// --- bench ----------------------------------------------------------------------------

int cmd_bench_hitk(const std::optional<std::string>& registry, const std::optional<std::string>& cases_file,
                   const std::vector<std::size_t>& scales, bool json) {
  if (cases_file) {
    const auto cases = load_json_file(*cases_file);
    Json out = Json::object();
    for (const auto* setting : {"single", "chain"}) {
      if (!cases.contains(setting)) continue;
      std::vector<HitCase> list;
      if (registry) {
        // {"need": NeedContract, "gold": [...]} ranked live against the registry
        ToolHub hub;
        hub.register_cards(ToolHub::load_cards(*registry));
        for (const auto& c : cases.at(setting)) {
          HitCase h{c.at("need").at("id"), {}, c.at("gold").is_string() ? std::vector<std::string>{c.at("gold")} : c.at("gold").get<std::vector<std::string>>()};
          const auto needs = c.at("need").is_array() ? c.at("need") : Json::array({c.at("need")});
          for (const auto& n : needs) {
            std::vector<std::string> ids;
            for (const auto& s : hub.tdi_query(n.get<NeedContract>(), 5).ranked) ids.push_back(s.id);
            h.rankings.push_back(ids);
          }
          list.push_back(std::move(h));
        }
      } else {
        list = cases.at(setting).get<std::vector<HitCase>>();
      }
      out[setting] = hit_at_k(list, setting);
    }
    print(out);
    return kExitOk;
  }
  std::vector<BenchTable> rows;
  for (auto n : scales) {
    const auto reg = synth::registry(n);
    ToolHub hub;
    hub.register_cards(reg.cards);
    for (auto s : {Selector::kTdi, Selector::kTopKPrompt, Selector::kAllInPrompt}) rows.push_back(run_hitk_bench(hub, reg, s));
  }
  if (json) print(Json(rows));
  else std::cout << format_bench(rows);
  return kExitOk;
}

// --- eval -------------------------------------------------------------------------------

int cmd_eval_metrics(const std::string& deliverable, const std::string& trace, const std::optional<std::string>& contracts,
                     const std::optional<std::string>& eval_file, const std::vector<std::string>& rules, bool json) {
  EvalSpec spec;
  if (eval_file) spec = load_document<EvalSpec>(*eval_file);
  if (contracts) {
    const auto j = load_json_file(*contracts);
    if (j.is_object() && j.contains("contracts")) {
      const auto e = j.get<EvalSpec>();
      spec.contracts = e.contracts;
      if (spec.required_rules.empty()) spec.required_rules = e.required_rules;
      if (spec.normalization.empty()) spec.normalization = e.normalization;
    } else {
      spec.contracts = j.get<std::vector<NeedContract>>();
    }
  }
  spec.required_rules.insert(spec.required_rules.end(), rules.begin(), rules.end());
  const auto d = load_document<Deliverable>(deliverable);
  const auto t = trace_from_jsonl(read_file(trace));
  const auto r = compute_metrics(d, t, spec);
  if (json) print(Json(r));
  else std::cout << format_metric_row(fs::path(deliverable).stem().string(), r);
  return kExitOk;
}

// --- trace ------------------------------------------------------------------------------

int cmd_trace_show(const std::string& file, bool debate, bool sessions, bool json) {
  const auto t = trace_from_jsonl(read_file(file));
  if (json) {
    Json steps = Json::array();
    for (const auto& s : t.steps) steps.push_back(s);
    print(Json{{"status", to_string(t.status)}, {"steps", steps}});
  } else {
    std::printf("status: %s, %zu steps\n", to_string(t.status).c_str(), t.steps.size());
    std::printf("%-22s %-14s %-26s %-17s %-4s %s\n", "step", "node", "tool", "phase", "ok", "error");
    for (const auto& s : t.steps)
      std::printf("%-22s %-14s %-26s %-17s %-4s %s\n", s.step_id.c_str(), s.node_id.c_str(), s.tool_id.c_str(),
                  to_string(s.phase).c_str(), s.succeeded ? "yes" : "no", s.error.c_str());
    for (const auto& [id, st] : t.node_status) std::printf("node %-14s %s\n", id.c_str(), to_string(st).c_str());
  }
  auto replay = [&](const std::string& tag) {
    const auto p = sibling(file, tag);
    if (!fs::exists(p)) throw ParseError("no " + tag + " log next to the trace (" + p.string() + ")");
    std::cout << "--- " << tag << "\n" << read_file(p);
  };
  if (sessions) replay("sessions");
  if (debate) replay("debate");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contract-driven agent orchestration"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file (default: $CONTRACTFLOW_CONFIG)");

  std::function<int()> action;

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Route a task and execute it");
  run->add_option("workspace", ra.workspace, "Directory with task.json, plan.json, contracts.json, eval.json, tools/");
  run->add_option("--task", ra.task, "TaskEnvelope file");
  run->add_option("--plan", ra.plan, "PlanSpec file, or 'auto' to plan by debate");
  run->add_option("--contracts", ra.contracts, "NeedContract file");
  run->add_option("--eval", ra.eval, "EvalSpec file");
  run->add_option("--tools", ra.tools, "Tool card and artifact directory");
  run->add_option("--kb", ra.kb, "Corpus directory for the fast path");
  run->add_option("--graph", ra.graph, "Knowledge graph edge list");
  run->add_option("--trace-out", ra.trace_out, "Write the trace (line-delimited) here");
  run->add_option("--deliverable-out", ra.deliverable_out, "Write the deliverable here");
  run->add_option("--route", ra.route, "auto | system1 | system2")->check(CLI::IsMember({"auto", "system1", "system2"}));
  run->add_option("--maker", ra.maker, "template | provider")->check(CLI::IsMember({"template", "provider"}));
  run->add_flag("--parallel", ra.parallel, "Run independent nodes concurrently");
  run->callback([&] { action = [&] { return cmd_run(g, ra); }; });

  std::string route_task;
  bool route_classifier = false;
  auto* rt = app.add_subcommand("route", "Show the routing decision for a task");
  rt->add_option("--task", route_task, "TaskEnvelope file")->required();
  rt->add_flag("--classifier", route_classifier, "Let the configured classifier model override");
  rt->callback([&] { action = [&] { return cmd_route(g, route_task, route_classifier); }; });

  auto* kb = app.add_subcommand("kb", "Knowledge base");
  kb->require_subcommand(1);
  std::string kb_corpus;
  std::optional<std::string> kb_graph, kb_query;
  std::size_t kb_k = 5;
  auto* kbl = kb->add_subcommand("load", "Load and index a corpus");
  kbl->add_option("--corpus", kb_corpus, "Corpus directory")->required();
  kbl->add_option("--graph", kb_graph, "Edge list (subject<TAB>relation<TAB>object)");
  kbl->add_option("--query", kb_query, "Run a sparse query against the loaded corpus");
  kbl->add_option("--k", kb_k, "Results per query");
  kbl->callback([&] { action = [&] { return cmd_kb_load(kb_corpus, kb_graph, kb_query, kb_k); }; });

  auto* tools = app.add_subcommand("tools", "Tool hub");
  tools->require_subcommand(1);
  std::string hub_dir = "toolhub";
  std::vector<std::string> reg_files;
  auto* treg = tools->add_subcommand("register", "Register tool cards");
  treg->add_option("files", reg_files, "ToolCard files (artifact files alongside are copied in)")->required();
  treg->callback([&] { action = [&] { return cmd_tools_register(hub_dir, reg_files); }; });
  bool list_json = false;
  auto* tlist = tools->add_subcommand("list", "List registered tools");
  tlist->add_flag("--json", list_json);
  tlist->callback([&] { action = [&] { return cmd_tools_list(hub_dir, list_json); }; });
  std::string need_file;
  std::size_t query_k = 5;
  bool query_chains = false;
  auto* tq = tools->add_subcommand("query", "Rank tools for a need contract");
  tq->add_option("need", need_file, "NeedContract file")->required();
  tq->add_option("--k", query_k, "Candidates to return");
  tq->add_flag("--chains", query_chains, "Also compose chains from the need's input schema");
  for (auto* sub : {treg, tlist, tq}) sub->add_option("--hub", hub_dir, "Hub directory, one document per card");
  tq->callback([&] { action = [&] { return cmd_tools_query(hub_dir, need_file, query_k, query_chains); }; });

  auto* bench = app.add_subcommand("bench", "Benchmarks");
  bench->require_subcommand(1);
  std::optional<std::string> bench_registry, bench_cases;
  std::vector<std::size_t> scales{24, 48, 506};
  bool bench_json = false;
  auto* hitk = bench->add_subcommand("hitk", "Hit@k over tool retrieval");
  hitk->add_option("--registry", bench_registry, "Tool card directory");
  hitk->add_option("--cases", bench_cases, "Cases file with 'single' and 'chain' lists");
  hitk->add_option("--scale", scales, "Synthetic registry sizes")->check(CLI::IsMember({24, 48, 506}));
  hitk->add_flag("--json", bench_json);
  hitk->callback([&] { action = [&] { return cmd_bench_hitk(bench_registry, bench_cases, scales, bench_json); }; });

  auto* ev = app.add_subcommand("eval", "Evaluation");
  ev->require_subcommand(1);
  std::string ev_deliverable, ev_trace;
  std::optional<std::string> ev_contracts, ev_spec;
  std::vector<std::string> ev_rules;
  bool ev_json = false;
  auto* em = ev->add_subcommand("metrics", "Programmatic deliverable metrics");
  em->add_option("--deliverable", ev_deliverable, "Deliverable file")->required();
  em->add_option("--trace", ev_trace, "Trace file")->required();
  em->add_option("--contracts", ev_contracts, "NeedContract list or EvalSpec file");
  em->add_option("--eval", ev_spec, "EvalSpec file");
  em->add_option("--rule", ev_rules, "Required rule id (repeatable)");
  em->add_flag("--json", ev_json);
  em->callback([&] { action = [&] { return cmd_eval_metrics(ev_deliverable, ev_trace, ev_contracts, ev_spec, ev_rules, ev_json); }; });

  auto* tr = app.add_subcommand("trace", "Traces");
  tr->require_subcommand(1);
  std::string trace_file;
  bool show_debate = false, show_sessions = false, show_json = false;
  auto* ts = tr->add_subcommand("show", "Print a trace");
  ts->add_option("trace", trace_file, "Trace file")->required();
  ts->add_flag("--debate", show_debate, "Replay the debate round log stored next to the trace");
  ts->add_flag("--sessions", show_sessions, "Replay the negotiation transcript stored next to the trace");
  ts->add_flag("--json", show_json);
  ts->callback([&] { action = [&] { return cmd_trace_show(trace_file, show_debate, show_sessions, show_json); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }
  try {
    return action ? action() : kExitError;
  } catch (const ConfigError& e) {
    std::cerr << "contractflow: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PlanFailed& e) {
    std::cerr << "contractflow: " << e.what() << "\n";
    return kExitPlanFailed;
  } catch (const std::exception& e) {
    std::cerr << "contractflow: " << e.what() << "\n";
    return kExitError;
  }
}

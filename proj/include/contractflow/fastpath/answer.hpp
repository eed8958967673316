#pragma once

// The fast answer path: retrieve on three paths concurrently, consolidate,
// collect per-modality judgments, then fuse them in one synthesis call.

#include <algorithm>
#include <future>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "contractflow/fastpath/retrieval.hpp"
#include "contractflow/shell/provider.hpp"

namespace contractflow {

namespace adapters {
inline constexpr const char* kText = "text-expert";
inline constexpr const char* kVision = "vision-expert";
inline constexpr const char* kOmni = "omni-expert";
}  // namespace adapters

struct IntermediateJudgment {
  std::string source_adapter;
  std::string judgment;
  std::vector<std::string> cited_evidence;
  double confidence = 0;
};

inline void to_json(Json& j, const IntermediateJudgment& v) {
  j = Json{{"source_adapter", v.source_adapter}, {"judgment", v.judgment},
           {"cited_evidence", v.cited_evidence}, {"confidence", v.confidence}};
}

inline std::string render_context(const std::vector<EvidenceItem>& context) {
  std::string s;
  for (const auto& e : context) s += "[" + e.id + "] " + e.content + "\n";
  return s;
}

class ModalityAdapter {
 public:
  virtual ~ModalityAdapter() = default;
  virtual std::string name() const = 0;
  // Inputs of the task this adapter attends to; empty means it has nothing to say.
  virtual std::vector<ModalityInput> select(const TaskEnvelope& task) const = 0;
  virtual IntermediateJudgment judge(const TaskEnvelope& task, const std::vector<ModalityInput>& inputs,
                                     const std::vector<EvidenceItem>& context) = 0;
};

// Adapter over a chat backend. The reply must be JSON:
// {"judgment": text, "cited_evidence": [ids], "confidence": number}.
class ProviderAdapter : public ModalityAdapter {
 public:
  ProviderAdapter(std::string name, std::string model, Provider& provider, std::vector<ModalityKind> kinds)
      : name_(std::move(name)), model_(std::move(model)), provider_(provider), kinds_(std::move(kinds)) {}

  std::string name() const override { return name_; }

  std::vector<ModalityInput> select(const TaskEnvelope& task) const override {
    std::vector<ModalityInput> out;
    for (auto k : kinds_) {
      if (k == ModalityKind::kText) out.push_back({ModalityKind::kText, task.instruction});
      for (const auto& a : task.attachments)
        if (a.kind == k) out.push_back(a);
    }
    return out;
  }

  IntermediateJudgment judge(const TaskEnvelope& task, const std::vector<ModalityInput>& inputs,
                             const std::vector<EvidenceItem>& context) override {
    std::string user = "Task: " + task.instruction + "\nInputs:\n";
    for (const auto& in : inputs) user += "- " + to_string(in.kind) + ": " + in.payload + "\n";
    user += "Evidence:\n" + render_context(context);
    const auto reply = parse_json_reply(provider_.chat(
        {model_,
         {{"system", "You are the " + name_ + ". Reply with JSON {\"judgment\", \"cited_evidence\", \"confidence\"}."},
          {"user", user}}}));
    IntermediateJudgment j;
    j.source_adapter = name_;
    try {
      j.judgment = reply.at("judgment").get<std::string>();
      j.cited_evidence = reply.value("cited_evidence", std::vector<std::string>{});
      j.confidence = reply.value("confidence", 0.5);
    } catch (const Json::exception& e) {
      throw ParseError(name_ + " reply is missing fields: " + e.what());
    }
    return j;
  }

 private:
  std::string name_;
  std::string model_;
  Provider& provider_;
  std::vector<ModalityKind> kinds_;
};

class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual std::string fuse(const TaskEnvelope& task, const std::vector<IntermediateJudgment>& judgments,
                           const std::vector<EvidenceItem>& context) = 0;
};

// One omni-adapter call fed with every judgment and the shared context.
class ProviderSynthesizer : public Synthesizer {
 public:
  ProviderSynthesizer(std::string model, Provider& provider) : model_(std::move(model)), provider_(provider) {}

  std::string fuse(const TaskEnvelope& task, const std::vector<IntermediateJudgment>& judgments,
                   const std::vector<EvidenceItem>& context) override {
    std::string user = "Task: " + task.instruction + "\nJudgments:\n";
    for (const auto& j : judgments) user += "- " + j.source_adapter + ": " + j.judgment + "\n";
    user += "Evidence:\n" + render_context(context);
    return provider_.chat({model_, {{"system", "Fuse the judgments into one final answer."}, {"user", user}}});
  }

 private:
  std::string model_;
  Provider& provider_;
};

// Deterministic stand-in: judgments joined by newlines in input order.
class TemplateSynthesizer : public Synthesizer {
 public:
  std::string fuse(const TaskEnvelope&, const std::vector<IntermediateJudgment>& judgments,
                   const std::vector<EvidenceItem>&) override {
    std::string s;
    for (const auto& j : judgments) {
      if (!s.empty()) s += '\n';
      s += j.judgment;
    }
    return s;
  }
};

// Links each judgment's claim to its cited items; the evidence set of the
// deliverable is the union of citations. Unknown citations are rejected.
inline Deliverable synthesize(const TaskEnvelope& task, const std::vector<IntermediateJudgment>& judgments,
                              const std::vector<EvidenceItem>& context, Synthesizer& synth) {
  if (judgments.empty()) throw InvalidValue("synthesis needs at least one judgment");
  std::set<std::string> known;
  for (const auto& e : context) known.insert(e.id);
  Deliverable d;
  d.answer = synth.fuse(task, judgments, context);
  Json cited = Json::array();
  std::set<std::string> used;
  for (const auto& j : judgments) {
    for (const auto& id : j.cited_evidence)
      if (!known.count(id)) throw InvalidValue(j.source_adapter + " cites unknown evidence '" + id + "'");
    d.evidence.push_back({j.source_adapter, {}, j.cited_evidence});
    used.insert(j.cited_evidence.begin(), j.cited_evidence.end());
  }
  for (const auto& e : context)
    if (used.count(e.id)) cited.push_back(e);
  d.structured = Json{{"judgments", judgments}, {"evidence", cited}};
  return d;
}

struct FastPathOptions {
  std::size_t k = 5;
  int max_hops = 2;
  double rrf_k = 60.0;
  Bm25Params bm25;
  bool concurrent = true;
};

struct FastPathResult {
  Deliverable deliverable;
  std::vector<EvidenceItem> context;
  std::vector<IntermediateJudgment> judgments;
  std::vector<std::string> warnings;
};

inline void to_json(Json& j, const FastPathResult& r) {
  j = Json{{"answer", r.deliverable.answer}, {"deliverable", r.deliverable}, {"context", r.context},
           {"judgments", r.judgments},       {"warnings", r.warnings}};
}

// Graph entities come from task.context["entities"] when given, else from
// graph node names mentioned in the instruction.
inline FastPathResult answer_fast(const TaskEnvelope& task, const KnowledgeStore& store, const DenseIndex* dense,
                                  Embedder* embedder, const std::vector<ModalityAdapter*>& adapters, Synthesizer& synth,
                                  const FastPathOptions& opt = {}) {
  validate_task(task);
  const auto policy = opt.concurrent ? std::launch::async : std::launch::deferred;
  std::vector<std::string> entities = task.context.contains("entities")
                                          ? task.context.at("entities").get<std::vector<std::string>>()
                                          : mentioned_entities(task.instruction, store.graph());

  auto f_dense = std::async(policy, [&] {
    return dense && embedder ? dense_retrieve(task.instruction, store, *dense, *embedder, opt.k) : std::vector<EvidenceItem>{};
  });
  auto f_sparse = std::async(policy, [&] { return sparse_retrieve(task.instruction, store, opt.k, opt.bm25); });
  auto f_graph = std::async(policy, [&] { return graph_retrieve(entities, store, opt.max_hops); });

  FastPathResult r;
  auto dense_items = f_dense.get();
  auto sparse_items = f_sparse.get();
  auto graph = f_graph.get();
  r.warnings = graph.warnings;
  r.context = consolidate({dense_items, sparse_items, graph.items}, opt.rrf_k);

  std::vector<std::pair<ModalityAdapter*, std::vector<ModalityInput>>> active;
  for (auto* a : adapters) {
    auto inputs = a->select(task);
    if (!inputs.empty()) active.emplace_back(a, std::move(inputs));
  }
  std::vector<std::future<IntermediateJudgment>> futures;
  for (auto& [a, inputs] : active)
    futures.push_back(std::async(policy, [&, a = a, &inputs = inputs] { return a->judge(task, inputs, r.context); }));
  for (auto& f : futures) {
    auto j = f.get();
    if (j.confidence < 0 || j.confidence > 1) {
      r.warnings.push_back(j.source_adapter + " confidence clamped to [0,1]");
      j.confidence = std::clamp(j.confidence, 0.0, 1.0);
    }
    r.judgments.push_back(std::move(j));
  }
  r.deliverable = synthesize(task, r.judgments, r.context, synth);
  return r;
}

}  // namespace contractflow

#pragma once

// Central tool registry. Readers take an immutable snapshot; registration and
// reliability updates are serialized and publish a new snapshot.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "contractflow/core/schema.hpp"
#include "contractflow/core/serialize.hpp"
#include "contractflow/core/util.hpp"
#include "contractflow/fastpath/retrieval.hpp"
#include "contractflow/shell/provider.hpp"

namespace contractflow {

inline std::vector<std::string> card_problems(const ToolCard& c) {
  std::vector<std::string> out;
  if (c.id.empty()) out.push_back("id is empty");
  if (c.capabilities.empty()) out.push_back("no capabilities");
  for (const auto& cap : c.capabilities)
    if (cap.tag.empty()) out.push_back("capability with empty tag");
  if (c.reliability.attempts < 0 || c.reliability.successes < 0) out.push_back("negative reliability counter");
  if (c.reliability.successes > c.reliability.attempts) out.push_back("successes exceed attempts");
  if (c.output_schema.empty()) out.push_back("output schema is empty");
  for (const auto& p : schema_problems(c.input_schema)) out.push_back("input schema: " + p);
  for (const auto& p : schema_problems(c.output_schema)) out.push_back("output schema: " + p);
  return out;
}

// Text the lexical index sees for a card.
inline std::string card_text(const ToolCard& c) {
  std::string s = c.name;
  for (const auto& cap : c.capabilities) s += " " + cap.tag + " " + cap.description;
  return s;
}

struct ScoredTool {
  std::string id;
  double score = 0;
  double dense = 0;
  double lexical = 0;  // BM25 normalised by the best card's BM25 for this query
};

struct RetrievalResult {
  std::vector<ScoredTool> ranked;
};

inline void to_json(Json& j, const ScoredTool& s) {
  j = Json{{"id", s.id}, {"score", s.score}, {"dense", s.dense}, {"lexical", s.lexical}};
}
inline void to_json(Json& j, const RetrievalResult& r) { j = Json{{"ranked", r.ranked}}; }

struct TdiWeights {
  double dense = 0.5;
  double lexical = 0.5;
};

class HubSnapshot {
 public:
  struct Index {
    KnowledgeStore lexical;
    std::map<std::string, std::vector<Vector>> capability_vectors;  // per card, per capability
  };

  HubSnapshot(std::vector<std::shared_ptr<const ToolCard>> cards, std::shared_ptr<const Index> index, std::uint64_t version)
      : cards_(std::move(cards)), index_(std::move(index)), version_(version) {
    for (std::size_t i = 0; i < cards_.size(); ++i) by_id_[cards_[i]->id] = i;
  }

  std::size_t size() const { return cards_.size(); }
  bool empty() const { return cards_.empty(); }
  std::uint64_t version() const { return version_; }

  const ToolCard* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : cards_[it->second].get();
  }
  const ToolCard& get(const std::string& id) const {
    if (const auto* c = find(id)) return *c;
    throw UnknownTool("tool '" + id + "' is not registered");
  }

  // Cards in ascending id order.
  std::vector<const ToolCard*> cards() const {
    std::vector<const ToolCard*> out;
    for (const auto& [_, i] : by_id_) out.push_back(cards_[i].get());
    return out;
  }

  std::size_t lexical_size() const { return index_->lexical.documents().size(); }
  std::size_t embedded_size() const { return index_->capability_vectors.size(); }

  // hybrid = w_d * max_cap cosine(need description, capability description)
  //        + w_l * BM25(tag + description over card text) / max BM25
  RetrievalResult tdi_query(const NeedContract& need, std::size_t k, Embedder& embedder,
                            const TdiWeights& w = {}) const {
    if (empty()) throw EmptyHub("TDI query on an empty hub");
    const Vector q = embedder.embed(need.capability.description);
    const auto& store = index_->lexical;
    const auto bm25 = bm25_scores(need.capability.tag + " " + need.capability.description, store);
    const double best = bm25.empty() ? 0.0 : *std::max_element(bm25.begin(), bm25.end());
    RetrievalResult r;
    for (std::size_t i = 0; i < store.documents().size(); ++i) {
      const auto& id = store.documents()[i].id;
      double dense = 0;
      bool first = true;
      for (const auto& v : index_->capability_vectors.at(id)) {
        const double c = cosine(q, v);
        if (first || c > dense) dense = c;
        first = false;
      }
      const double lexical = best > 0 ? bm25[i] / best : 0.0;
      r.ranked.push_back({id, w.dense * dense + w.lexical * lexical, dense, lexical});
    }
    std::stable_sort(r.ranked.begin(), r.ranked.end(),
                     [](const ScoredTool& a, const ScoredTool& b) { return a.score > b.score; });
    if (r.ranked.size() > k) r.ranked.resize(k);
    return r;
  }

 private:
  std::vector<std::shared_ptr<const ToolCard>> cards_;
  std::shared_ptr<const Index> index_;
  std::uint64_t version_;
  std::map<std::string, std::size_t> by_id_;
};

class ToolHub {
 public:
  explicit ToolHub(std::shared_ptr<Embedder> embedder = std::make_shared<HashEmbedder>(64),
                   std::optional<std::filesystem::path> persist_dir = std::nullopt)
      : embedder_(std::move(embedder)), dir_(std::move(persist_dir)) {
    if (dir_) std::filesystem::create_directories(*dir_);
    publish({}, {});
  }

  std::shared_ptr<const HubSnapshot> snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
  }
  Embedder& embedder() const { return *embedder_; }

  std::string register_card(const ToolCard& card) { return register_cards({card}).front(); }

  // All-or-nothing: one bad card rejects the batch.
  std::vector<std::string> register_cards(const std::vector<ToolCard>& batch) {
    std::lock_guard lock(write_mu_);
    auto snap = snapshot();
    std::set<std::string> seen;
    for (const auto& c : batch) {
      if (auto p = card_problems(c); !p.empty()) throw MalformedCard("card '" + c.id + "': " + p.front());
      if (snap->find(c.id) || !seen.insert(c.id).second) throw DuplicateId("tool '" + c.id + "' already registered");
    }
    auto cards = all_cards(*snap);
    auto vectors = snap_index_->capability_vectors;
    std::vector<std::string> ids;
    for (const auto& c : batch) {
      cards.push_back(std::make_shared<const ToolCard>(c));
      auto& vs = vectors[c.id];
      for (const auto& cap : c.capabilities) vs.push_back(embedder_->embed(cap.description));
      ids.push_back(c.id);
    }
    publish(std::move(cards), std::move(vectors));
    for (const auto& c : batch) persist(c);
    return ids;
  }

  ToolCard update_reliability(const std::string& id, bool success) {
    std::lock_guard lock(write_mu_);
    auto snap = snapshot();
    ToolCard updated = snap->get(id);
    ++updated.reliability.attempts;
    if (success) ++updated.reliability.successes;
    auto cards = all_cards(*snap);
    for (auto& c : cards)
      if (c->id == id) c = std::make_shared<const ToolCard>(updated);
    {
      std::lock_guard l2(snap_mu_);
      snap_ = std::make_shared<const HubSnapshot>(std::move(cards), snap_index_, ++version_);
    }
    persist(updated);
    return updated;
  }

  RetrievalResult tdi_query(const NeedContract& need, std::size_t k, const TdiWeights& w = {}) const {
    return snapshot()->tdi_query(need, k, *embedder_, w);
  }

  // Loads every <id>.json card in a directory (artifact files are skipped).
  static std::vector<ToolCard> load_cards(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && e.path().extension() == ".json" && name.find(".artifact.") == std::string::npos)
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ToolCard> out;
    for (const auto& f : files) out.push_back(load_document<ToolCard>(f.string()));
    return out;
  }

 private:
  static std::vector<std::shared_ptr<const ToolCard>> all_cards(const HubSnapshot& s) {
    std::vector<std::shared_ptr<const ToolCard>> out;
    for (const auto* c : s.cards()) out.push_back(std::make_shared<const ToolCard>(*c));
    return out;
  }

  void publish(std::vector<std::shared_ptr<const ToolCard>> cards, std::map<std::string, std::vector<Vector>> vectors) {
    std::vector<Document> docs;
    for (const auto& c : cards) docs.push_back({c->id, card_text(*c)});
    auto index = std::make_shared<const HubSnapshot::Index>(HubSnapshot::Index{KnowledgeStore(std::move(docs)), std::move(vectors)});
    std::lock_guard lock(snap_mu_);
    snap_index_ = index;
    snap_ = std::make_shared<const HubSnapshot>(std::move(cards), std::move(index), ++version_);
  }

  // Write-then-rename so a reader never sees a half-written card.
  void persist(const ToolCard& c) const {
    if (!dir_) return;
    const auto final_path = *dir_ / (c.id + ".json");
    const auto tmp = *dir_ / (c.id + ".json.tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << Json(c).dump(2) << "\n";
      if (!out) throw ExecutionError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, final_path);
  }

  std::shared_ptr<Embedder> embedder_;
  std::optional<std::filesystem::path> dir_;
  std::mutex write_mu_;
  mutable std::mutex snap_mu_;
  std::shared_ptr<const HubSnapshot> snap_;
  std::shared_ptr<const HubSnapshot::Index> snap_index_;
  std::uint64_t version_ = 0;
};

}  // namespace contractflow

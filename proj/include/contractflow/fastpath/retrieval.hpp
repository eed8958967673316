#pragma once

// Sparse (BM25), dense (cosine) and graph (bounded path) retrieval over one
// KnowledgeStore, plus reciprocal-rank fusion of the three result lists.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "contractflow/fastpath/knowledge.hpp"

namespace contractflow {

enum class RetrievalSource { kDense, kSparse, kGraph };

inline std::string to_string(RetrievalSource s) {
  switch (s) {
    case RetrievalSource::kDense: return "dense";
    case RetrievalSource::kSparse: return "sparse";
    case RetrievalSource::kGraph: return "graph";
  }
  return "?";
}

struct EvidenceItem {
  std::string id;
  RetrievalSource source = RetrievalSource::kSparse;
  std::vector<RetrievalSource> sources;  // every path that returned it; filled by consolidate
  std::string content;
  double score = 0;
  std::string origin_ref;   // document id or serialized graph path
  std::string snapshot_id;  // knowledge store snapshot the item came from
};

inline void to_json(Json& j, const EvidenceItem& e) {
  Json srcs = Json::array();
  for (auto s : e.sources) srcs.push_back(to_string(s));
  j = Json{{"id", e.id},          {"source", to_string(e.source)}, {"sources", srcs},
           {"content", e.content}, {"score", e.score},             {"origin_ref", e.origin_ref},
           {"snapshot_id", e.snapshot_id}};
}

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Non-negative idf variant: ln((N - n + 0.5) / (n + 0.5) + 1).
inline double bm25_idf(std::size_t n_docs, std::size_t doc_freq) {
  const double N = static_cast<double>(n_docs);
  const double n = static_cast<double>(doc_freq);
  return std::log((N - n + 0.5) / (n + 0.5) + 1.0);
}

inline double bm25_term(double idf, int tf, int doc_len, double avgdl, const Bm25Params& p) {
  const double f = tf;
  const double norm = avgdl > 0 ? static_cast<double>(doc_len) / avgdl : 0.0;
  return idf * f * (p.k1 + 1) / (f + p.k1 * (1 - p.b + p.b * norm));
}

// Score of every document for the query (distinct query terms), indexed like
// store.documents().
inline std::vector<double> bm25_scores(const std::string& query, const KnowledgeStore& store, const Bm25Params& p = {}) {
  std::vector<double> score(store.documents().size(), 0.0);
  const auto terms = tokenize(query);
  const std::set<std::string> distinct(terms.begin(), terms.end());
  for (const auto& t : distinct) {
    const auto& post = store.postings(t);
    if (post.empty()) continue;
    const double idf = bm25_idf(store.documents().size(), post.size());
    for (const auto& ps : post) score[ps.doc] += bm25_term(idf, ps.tf, store.length(ps.doc), store.avgdl(), p);
  }
  return score;
}

namespace detail {

template <class Score>
std::vector<std::size_t> top_k(std::size_t n, std::size_t k, Score score, bool positive_only) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i)
    if (!positive_only || score(i) > 0) idx.push_back(i);
  // Documents are stored in id order, so index order is the id tie-break.
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

inline EvidenceItem doc_item(const KnowledgeStore& store, std::size_t i, RetrievalSource src, double score) {
  const auto& d = store.documents()[i];
  return {to_string(src) + ":" + d.id, src, {src}, d.text, score, d.id, store.snapshot_id()};
}

}  // namespace detail

// Top-k documents with positive BM25 score; ties by ascending document id.
inline std::vector<EvidenceItem> sparse_retrieve(const std::string& query, const KnowledgeStore& store, std::size_t k,
                                                 const Bm25Params& p = {}) {
  if (store.documents().empty()) throw EmptyCorpus("sparse retrieval over an empty corpus");
  const auto score = bm25_scores(query, store, p);
  std::vector<EvidenceItem> out;
  for (auto i : detail::top_k(score.size(), k, [&](std::size_t d) { return score[d]; }, true))
    out.push_back(detail::doc_item(store, i, RetrievalSource::kSparse, score[i]));
  return out;
}

// Top-k documents by cosine similarity to the query embedding; ties by id.
inline std::vector<EvidenceItem> dense_retrieve(const std::string& query, const KnowledgeStore& store,
                                                const DenseIndex& index, Embedder& embedder, std::size_t k) {
  if (store.documents().empty()) throw EmptyCorpus("dense retrieval over an empty corpus");
  if (index.snapshot_id != store.snapshot_id() || index.vectors.size() != store.documents().size())
    throw InvalidValue("dense index was built for a different corpus snapshot");
  if (index.embedder_id != embedder.id())
    throw DimensionMismatch("index embedded by '" + index.embedder_id + "', query by '" + embedder.id() + "'");
  Vector q;
  try {
    q = embedder.embed(query);
  } catch (const BackendUnavailable& e) {
    throw EmbedderFailure(e.what());
  }
  std::vector<double> sim(index.vectors.size());
  for (std::size_t i = 0; i < sim.size(); ++i) sim[i] = cosine(q, index.vectors[i]);
  std::vector<EvidenceItem> out;
  for (auto i : detail::top_k(sim.size(), k, [&](std::size_t d) { return sim[d]; }, false))
    out.push_back(detail::doc_item(store, i, RetrievalSource::kDense, sim[i]));
  return out;
}

struct GraphRetrieval {
  std::vector<EvidenceItem> items;
  std::vector<std::string> warnings;  // unresolved entities
};

// Serialized as "A -[rel]-> B <-[rel2]- C"; arrow direction follows the triple.
inline std::string serialize_path(const std::string& start, const std::vector<KnowledgeGraph::Adjacent>& steps) {
  std::string s = start;
  for (const auto& st : steps) s += (st.forward ? " -[" + st.relation + "]-> " : " <-[" + st.relation + "]- ") + st.node;
  return s;
}

// Every simple path of 1..max_hops edges between each pair of distinct
// resolved entities; score = 1 / path length. Sorted by score then path text.
inline GraphRetrieval graph_retrieve(const std::vector<std::string>& entities, const KnowledgeStore& store,
                                     int max_hops = 2) {
  GraphRetrieval out;
  const auto& kg = store.graph();
  std::vector<std::string> resolved;
  for (const auto& e : entities) {
    auto r = kg.resolve(e);
    if (r.empty()) out.warnings.push_back("unresolved entity '" + e + "' skipped");
    else if (std::find(resolved.begin(), resolved.end(), r) == resolved.end()) resolved.push_back(r);
  }
  std::sort(resolved.begin(), resolved.end());

  std::vector<KnowledgeGraph::Adjacent> steps;
  std::set<std::string> on_path;
  std::function<void(const std::string&, const std::string&, const std::string&)> dfs =
      [&](const std::string& start, const std::string& at, const std::string& goal) {
        if (static_cast<int>(steps.size()) >= max_hops) return;
        for (const auto& nb : kg.neighbours(at)) {
          if (on_path.count(nb.node)) continue;
          steps.push_back(nb);
          if (nb.node == goal) {
            const auto path = serialize_path(start, steps);
            const double len = static_cast<double>(steps.size());
            out.items.push_back({"graph:" + path, RetrievalSource::kGraph, {RetrievalSource::kGraph}, path, 1.0 / len,
                                 path, store.snapshot_id()});
          } else {
            on_path.insert(nb.node);
            dfs(start, nb.node, goal);
            on_path.erase(nb.node);
          }
          steps.pop_back();
        }
      };
  for (std::size_t i = 0; i < resolved.size(); ++i)
    for (std::size_t j = i + 1; j < resolved.size(); ++j) {
      on_path = {resolved[i]};
      dfs(resolved[i], resolved[i], resolved[j]);
    }
  std::stable_sort(out.items.begin(), out.items.end(), [](const EvidenceItem& a, const EvidenceItem& b) {
    return a.score != b.score ? a.score > b.score : a.origin_ref < b.origin_ref;
  });
  return out;
}

// Graph node names mentioned in the text (token-phrase match), sorted.
inline std::vector<std::string> mentioned_entities(const std::string& text, const KnowledgeGraph& kg) {
  const auto toks = tokenize(text);
  std::vector<std::string> out;
  for (const auto& n : kg.nodes()) {
    const auto nt = tokenize(n);
    if (nt.empty() || nt.size() > toks.size()) continue;
    for (std::size_t i = 0; i + nt.size() <= toks.size(); ++i)
      if (std::equal(nt.begin(), nt.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) {
        out.push_back(n);
        break;
      }
  }
  return out;
}

// Reciprocal-rank fusion: fused(d) = sum over lists of 1 / (k + rank), ranks
// 1-based. Items sharing an origin_ref are merged, keeping every source
// label and the content of the first occurrence. Ties keep first-appearance
// order. Consolidated items are renumbered E1, E2, ... in fused order.
inline std::vector<EvidenceItem> consolidate(const std::vector<std::vector<EvidenceItem>>& lists, double k = 60.0) {
  struct Acc {
    EvidenceItem item;
    double fused = 0;
    std::size_t first = 0;
  };
  std::map<std::string, Acc> acc;
  std::size_t order = 0;
  for (const auto& list : lists)
    for (std::size_t r = 0; r < list.size(); ++r) {
      const auto& e = list[r];
      if (e.origin_ref.empty()) throw InvalidValue("evidence item '" + e.id + "' has no origin_ref");
      if (!std::isfinite(e.score)) throw InvalidValue("evidence item '" + e.id + "' has a non-finite score");
      auto [it, fresh] = acc.try_emplace(e.origin_ref);
      if (fresh) {
        it->second.item = e;
        it->second.item.sources.clear();
        it->second.first = order;
      }
      ++order;
      auto& srcs = it->second.item.sources;
      if (std::find(srcs.begin(), srcs.end(), e.source) == srcs.end()) srcs.push_back(e.source);
      it->second.fused += 1.0 / (k + static_cast<double>(r + 1));
    }
  std::vector<Acc> v;
  for (auto& [_, a] : acc) v.push_back(std::move(a));
  std::sort(v.begin(), v.end(), [](const Acc& a, const Acc& b) { return a.fused != b.fused ? a.fused > b.fused : a.first < b.first; });
  std::vector<EvidenceItem> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto e = std::move(v[i].item);
    e.id = "E" + std::to_string(i + 1);
    e.score = v[i].fused;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace contractflow

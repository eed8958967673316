#pragma once

// Shared knowledge store: a document corpus with its sparse index, optional
// dense embeddings, and a triple graph. Built once, then read concurrently.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "contractflow/core/serialize.hpp"
#include "contractflow/core/text.hpp"
#include "contractflow/core/util.hpp"
#include "contractflow/error.hpp"
#include "contractflow/shell/provider.hpp"

namespace contractflow {

struct Document {
  std::string id;
  std::string text;
};

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
};

class KnowledgeGraph {
 public:
  struct Adjacent {
    std::string node;
    std::string relation;
    bool forward;  // true when stored as (this, relation, node)
  };

  KnowledgeGraph() = default;
  explicit KnowledgeGraph(std::vector<Triple> triples) : triples_(std::move(triples)) {
    for (const auto& t : triples_) {
      if (t.subject.empty() || t.object.empty()) throw InvalidValue("graph triple with empty endpoint");
      adj_[t.subject].push_back({t.object, t.relation, true});
      adj_[t.object].push_back({t.subject, t.relation, false});
      for (const auto* n : {&t.subject, &t.object}) by_lower_[lower(*n)] = *n;
    }
    for (auto& [_, v] : adj_)
      std::sort(v.begin(), v.end(), [](const Adjacent& a, const Adjacent& b) {
        return std::tie(a.node, a.relation, a.forward) < std::tie(b.node, b.relation, b.forward);
      });
  }

  // Case-insensitive name resolution; empty when unknown.
  std::string resolve(const std::string& name) const {
    auto it = by_lower_.find(lower(name));
    return it == by_lower_.end() ? std::string{} : it->second;
  }

  const std::vector<Adjacent>& neighbours(const std::string& node) const {
    static const std::vector<Adjacent> none;
    auto it = adj_.find(node);
    return it == adj_.end() ? none : it->second;
  }

  std::vector<std::string> nodes() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : adj_) out.push_back(k);
    return out;
  }

  const std::vector<Triple>& triples() const { return triples_; }
  bool empty() const { return triples_.empty(); }

 private:
  static std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  }

  std::vector<Triple> triples_;
  std::map<std::string, std::vector<Adjacent>> adj_;
  std::unordered_map<std::string, std::string> by_lower_;
};

// Documents are kept sorted by id, which is also the BM25 tie-break order.
class KnowledgeStore {
 public:
  struct Posting {
    std::size_t doc;  // index into documents()
    int tf;
  };

  KnowledgeStore(std::vector<Document> docs, KnowledgeGraph graph = {}) : docs_(std::move(docs)), graph_(std::move(graph)) {
    std::sort(docs_.begin(), docs_.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
    for (std::size_t i = 0; i + 1 < docs_.size(); ++i)
      if (docs_[i].id == docs_[i + 1].id) throw DuplicateId("document '" + docs_[i].id + "'");
    double total = 0;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      if (docs_[i].id.empty()) throw InvalidValue("document with empty id");
      const auto toks = tokenize(docs_[i].text);
      lengths_.push_back(static_cast<int>(toks.size()));
      total += static_cast<double>(toks.size());
      std::map<std::string, int> tf;
      for (const auto& t : toks) ++tf[t];
      for (const auto& [t, n] : tf) postings_[t].push_back({i, n});
    }
    avgdl_ = docs_.empty() ? 0.0 : total / static_cast<double>(docs_.size());

    Json fingerprint = Json::array();
    for (const auto& d : docs_) fingerprint.push_back({d.id, d.text});
    for (const auto& t : graph_.triples()) fingerprint.push_back({t.subject, t.relation, t.object});
    snapshot_id_ = "kb-" + digest(fingerprint);
  }

  const std::vector<Document>& documents() const { return docs_; }
  const KnowledgeGraph& graph() const { return graph_; }
  const std::string& snapshot_id() const { return snapshot_id_; }
  int length(std::size_t doc) const { return lengths_.at(doc); }
  double avgdl() const { return avgdl_; }

  const std::vector<Posting>& postings(const std::string& term) const {
    static const std::vector<Posting> none;
    auto it = postings_.find(term);
    return it == postings_.end() ? none : it->second;
  }

  const Document* find(const std::string& id) const {
    auto it = std::lower_bound(docs_.begin(), docs_.end(), id, [](const Document& d, const std::string& k) { return d.id < k; });
    return it != docs_.end() && it->id == id ? &*it : nullptr;
  }

 private:
  std::vector<Document> docs_;
  KnowledgeGraph graph_;
  std::vector<int> lengths_;
  double avgdl_ = 0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::string snapshot_id_;
};

// Dense vectors for every document of a store, tagged with the embedder id.
struct DenseIndex {
  std::string embedder_id;
  std::string snapshot_id;
  std::vector<Vector> vectors;  // parallel to store.documents()
};

inline DenseIndex embed_corpus(const KnowledgeStore& store, Embedder& embedder) {
  DenseIndex idx{embedder.id(), store.snapshot_id(), {}};
  idx.vectors.reserve(store.documents().size());
  for (const auto& d : store.documents()) {
    auto v = embedder.embed(d.text);
    if (v.size() != embedder.dimension()) throw DimensionMismatch("embedder returned wrong dimension for " + d.id);
    idx.vectors.push_back(std::move(v));
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A corpus directory holds either manifest.json
// ({"documents": [{"id": ..., "path": ...}]}) or plain *.txt files whose
// stem is the id.
inline std::vector<Document> load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ParseError("corpus directory not found: " + dir.string());
  std::vector<Document> docs;
  const auto manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    const auto j = load_json_file(manifest.string());
    for (const auto& e : j.at("documents")) {
      Document d;
      d.id = e.at("id").get<std::string>();
      d.text = e.contains("text") ? e.at("text").get<std::string>() : read_text_file(dir / e.at("path").get<std::string>());
      docs.push_back(std::move(d));
    }
    return docs;
  }
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      docs.push_back({entry.path().stem().string(), read_text_file(entry.path())});
  return docs;
}

// Tab-separated subject, relation, object per line; '#' starts a comment.
inline KnowledgeGraph parse_edge_list(std::istream& in) {
  std::vector<Triple> triples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 3) throw ParseError("edge list line " + std::to_string(lineno) + ": expected 3 tab-separated columns");
    triples.push_back({cols[0], cols[1], cols[2]});
  }
  return KnowledgeGraph(std::move(triples));
}

inline KnowledgeGraph load_edge_list(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError("cannot open " + p.string());
  return parse_edge_list(in);
}

}  // namespace contractflow

#pragma once

// BM25 evaluated term by term, straight from the formula.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "contractflow/fastpath/knowledge.hpp"

namespace cftest {

using namespace contractflow;

inline std::vector<std::string> oracle_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) cur += c;
    else if (c >= 'A' && c <= 'Z') cur += static_cast<char>(c - 'A' + 'a');
    else if (!cur.empty()) out.push_back(cur), cur.clear();
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Direct per-(term, doc) evaluation of Okapi BM25 with the non-negative idf.
inline double oracle_bm25(const std::string& query, const std::vector<Document>& docs, const std::string& doc_id) {
  const double k1 = 1.2, b = 0.75;
  std::vector<std::vector<std::string>> toks;
  double total = 0;
  for (const auto& d : docs) {
    toks.push_back(oracle_tokens(d.text));
    total += static_cast<double>(toks.back().size());
  }
  const double avgdl = total / static_cast<double>(docs.size());
  std::size_t target = 0;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (docs[i].id == doc_id) target = i;
  auto q = oracle_tokens(query);
  std::set<std::string> terms(q.begin(), q.end());
  double score = 0;
  for (const auto& t : terms) {
    double n = 0;
    for (const auto& d : toks) n += std::count(d.begin(), d.end(), t) > 0 ? 1 : 0;
    const double f = static_cast<double>(std::count(toks[target].begin(), toks[target].end(), t));
    if (f == 0) continue;
    const double N = static_cast<double>(docs.size());
    const double idf = std::log(1 + (N - n + 0.5) / (n + 0.5));
    const double dl = static_cast<double>(toks[target].size());
    score += idf * (f * (k1 + 1)) / (f + k1 * (1 - b + b * dl / avgdl));
  }
  return score;
}

}  // namespace cftest

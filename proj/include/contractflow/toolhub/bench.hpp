#pragma once

// Hit@k evaluation, a synthetic tool registry with unique capability tags, and
// prompt-based selection baselines to compare retrieval against.

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "contractflow/core/text.hpp"
#include "contractflow/toolhub/hub.hpp"

namespace contractflow {

// One ranking per step; a single-tool case has one step.
struct HitCase {
  std::string id;
  std::vector<std::vector<std::string>> rankings;
  std::vector<std::string> gold;
};

struct HitRow {
  std::string setting;
  std::size_t cases = 0;
  std::map<int, std::size_t> hits;
  double at(int k) const {
    auto it = hits.find(k);
    return cases == 0 || it == hits.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(cases);
  }
};

inline void to_json(Json& j, const HitRow& r) {
  j = Json{{"setting", r.setting}, {"cases", r.cases}};
  for (const auto& [k, h] : r.hits) j["hit@" + std::to_string(k)] = r.at(k);
}

inline bool hit(const HitCase& c, int k) {
  for (std::size_t s = 0; s < c.gold.size(); ++s) {
    const auto& r = c.rankings[s];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(k, r.size()));
    if (std::find(r.begin(), end, c.gold[s]) == end) return false;
  }
  return true;
}

inline HitRow hit_at_k(const std::vector<HitCase>& cases, const std::string& setting = "single",
                       const std::vector<int>& ks = {1, 3, 5}) {
  HitRow row{setting, cases.size(), {}};
  for (int k : ks) row.hits[k] = 0;
  for (const auto& c : cases) {
    if (c.gold.empty()) throw MissingGold("case '" + c.id + "' has no gold tool");
    if (c.rankings.size() != c.gold.size())
      throw InvalidValue("case '" + c.id + "' has " + std::to_string(c.rankings.size()) + " rankings for " +
                         std::to_string(c.gold.size()) + " gold steps");
    for (int k : ks)
      if (hit(c, k)) ++row.hits[k];
  }
  return row;
}

inline void from_json(const Json& j, HitCase& c) {
  c.id = j.value("id", std::string{});
  c.rankings = j.at("rankings").get<std::vector<std::vector<std::string>>>();
  if (j.at("gold").is_string()) c.gold = {j.at("gold").get<std::string>()};
  else c.gold = j.at("gold").get<std::vector<std::string>>();
}

// ---------------------------------------------------------------------------
// Synthetic registry
// ---------------------------------------------------------------------------

namespace synth {

inline const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"forecast", "estimate", "classify", "detect",  "schedule", "map",
                                          "assess",   "optimize", "monitor",  "simulate", "recommend"};
  return v;
}
inline const std::vector<std::string>& objects() {
  static const std::vector<std::string> v{"yield", "irrigation", "pest", "nutrient", "moisture", "disease"};
  return v;
}
inline const std::vector<std::string>& crops() {
  static const std::vector<std::string> v{"maize", "wheat", "rice", "soybean", "cotton", "tomato", "potato", "barley"};
  return v;
}

inline std::size_t capacity() { return verbs().size() * objects().size() * crops().size(); }

struct Combo {
  std::string verb, object, crop;
  std::string tag() const { return verb + "-" + object + "-" + crop; }
};

// First n distinct combos of a seeded shuffle; n must not exceed capacity().
inline std::vector<Combo> combos(std::size_t n, std::uint64_t seed = 7) {
  if (n > capacity()) throw InvalidValue("synthetic registry holds at most " + std::to_string(capacity()) + " tools");
  std::vector<Combo> all;
  for (const auto& v : verbs())
    for (const auto& o : objects())
      for (const auto& c : crops()) all.push_back({v, o, c});
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(n);
  return all;
}

inline std::string output_field(const Combo& c) { return c.verb + "_" + c.object + "_" + c.crop; }

inline ToolCard card(const Combo& c, std::size_t index) {
  ToolCard t;
  char buf[16];
  std::snprintf(buf, sizeof buf, "syn-%03zu", index);
  t.id = buf;
  t.name = c.verb + " " + c.object + " " + c.crop;
  t.capabilities = {{c.tag(), "Tool that can " + c.verb + " " + c.object + " conditions for " + c.crop + " fields"}};
  t.input_schema.fields = {{"region", SemanticType::text(), true}};
  t.output_schema.fields = {{output_field(c), SemanticType::number(), true}};
  t.provenance.origin = ToolOrigin::kThirdParty;
  t.provenance.version = "1";
  t.provenance.registered_at = static_cast<Timestamp>(index);
  return t;
}

// Need wording deliberately differs from the card wording.
inline NeedContract need(const Combo& c, const std::string& id) {
  NeedContract n;
  n.id = id;
  n.node_id = id;
  n.capability = {c.tag(), "please " + c.verb + " the " + c.object + " of " + c.crop};
  n.input_schema.fields = {{"region", SemanticType::text(), true}};
  n.output_schema.fields = {{output_field(c), SemanticType::number(), true}};
  return n;
}

struct Registry {
  std::vector<ToolCard> cards;
  std::vector<NeedContract> needs;  // needs[i] targets cards[i]
};

inline Registry registry(std::size_t n, std::uint64_t seed = 7) {
  Registry r;
  const auto cs = combos(n, seed);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    r.cards.push_back(card(cs[i], i));
    r.needs.push_back(need(cs[i], "need-" + r.cards.back().id));
  }
  return r;
}

// Chain cases: consecutive groups of `len` needs, gold is each step's card.
struct ChainCase {
  std::vector<std::size_t> steps;
};
inline std::vector<ChainCase> chain_cases(std::size_t n_tools, std::size_t count, std::size_t len, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_tools - 1);
  std::vector<ChainCase> out(count);
  for (auto& c : out) {
    while (c.steps.size() < len) {
      const auto s = pick(rng);
      if (std::find(c.steps.begin(), c.steps.end(), s) == c.steps.end()) c.steps.push_back(s);
    }
  }
  return out;
}

}  // namespace synth

// ---------------------------------------------------------------------------
// Prompt baselines
// ---------------------------------------------------------------------------

// Prompt cost of showing a card to a selector.
inline std::size_t card_prompt_tokens(const ToolCard& c) { return tokenize(Json(c).dump()).size(); }

// A selector that reads the tool list in the prompt: cards past the context
// budget are invisible, visible cards are ranked by token overlap with the
// need, ties broken at random.
class PromptSelector {
 public:
  PromptSelector(std::size_t context_tokens, std::uint64_t seed) : budget_(context_tokens), rng_(seed) {}

  std::vector<std::string> rank(const NeedContract& need, const std::vector<const ToolCard*>& shown) {
    std::vector<const ToolCard*> visible;
    std::size_t used = 0;
    for (const auto* c : shown) {
      used += card_prompt_tokens(*c);
      if (used > budget_) break;
      visible.push_back(c);
    }
    std::shuffle(visible.begin(), visible.end(), rng_);
    const auto want = tokenize(need.capability.tag + " " + need.capability.description);
    const std::set<std::string> q(want.begin(), want.end());
    std::vector<std::pair<std::size_t, std::string>> scored;
    for (const auto* c : visible) {
      const auto toks = tokenize(card_text(*c));
      const std::set<std::string> d(toks.begin(), toks.end());
      std::size_t overlap = 0;
      for (const auto& t : q) overlap += d.count(t);
      scored.push_back({overlap, c->id});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (const auto& [_, id] : scored) out.push_back(id);
    return out;
  }

 private:
  std::size_t budget_;
  std::mt19937_64 rng_;
};

enum class Selector { kTdi, kAllInPrompt, kTopKPrompt };

inline std::string to_string(Selector s) {
  switch (s) {
    case Selector::kTdi: return "tdi";
    case Selector::kAllInPrompt: return "all-in-prompt";
    case Selector::kTopKPrompt: return "top-k-prompt";
  }
  return "?";
}

struct BenchOptions {
  std::size_t context_tokens = 4096;
  std::size_t prompt_k = 5;  // cards handed to the top-k prompt selector
  std::size_t chain_cases = 50;
  std::size_t chain_len = 3;
  std::uint64_t seed = 13;
};

// Ranking of one need under a selector.
inline std::vector<std::string> select_tools(const ToolHub& hub, const NeedContract& need, Selector s, PromptSelector& prompt,
                                             const BenchOptions& opt) {
  const auto snap = hub.snapshot();
  if (s == Selector::kAllInPrompt) {
    // Registration order is the order a catalogue would be pasted in.
    auto cards = snap->cards();
    std::stable_sort(cards.begin(), cards.end(), [](const ToolCard* a, const ToolCard* b) {
      return a->provenance.registered_at < b->provenance.registered_at;
    });
    return prompt.rank(need, cards);
  }
  const std::size_t k = s == Selector::kTdi ? std::max<std::size_t>(5, opt.prompt_k) : opt.prompt_k;
  const auto r = snap->tdi_query(need, k, hub.embedder());
  std::vector<std::string> ids;
  for (const auto& x : r.ranked) ids.push_back(x.id);
  if (s == Selector::kTdi) return ids;
  std::vector<const ToolCard*> shown;
  for (const auto& id : ids) shown.push_back(&snap->get(id));
  return prompt.rank(need, shown);
}

struct BenchTable {
  std::size_t scale = 0;
  std::string selector;
  HitRow single;
  HitRow chain;
};

inline void to_json(Json& j, const BenchTable& t) {
  j = Json{{"scale", t.scale}, {"selector", t.selector}, {"single", t.single}, {"chain", t.chain}};
}

inline BenchTable run_hitk_bench(const ToolHub& hub, const synth::Registry& reg, Selector s, const BenchOptions& opt = {}) {
  PromptSelector prompt(opt.context_tokens, opt.seed);
  std::vector<std::vector<std::string>> ranking(reg.needs.size());
  std::vector<HitCase> single;
  for (std::size_t i = 0; i < reg.needs.size(); ++i) {
    ranking[i] = select_tools(hub, reg.needs[i], s, prompt, opt);
    single.push_back({reg.needs[i].id, {ranking[i]}, {reg.cards[i].id}});
  }
  std::vector<HitCase> chain;
  std::size_t n = 0;
  for (const auto& cc : synth::chain_cases(reg.cards.size(), opt.chain_cases, std::min(opt.chain_len, reg.cards.size()), opt.seed)) {
    HitCase h{"chain-" + std::to_string(n++), {}, {}};
    for (auto st : cc.steps) {
      h.rankings.push_back(ranking[st]);
      h.gold.push_back(reg.cards[st].id);
    }
    chain.push_back(std::move(h));
  }
  return {reg.cards.size(), to_string(s), hit_at_k(single, "single"), hit_at_k(chain, "chain")};
}

inline std::string format_bench(const std::vector<BenchTable>& rows) {
  std::string out = "scale  selector        single@1 single@3 single@5  chain@1 chain@3 chain@5\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-6zu %-15s %8.3f %8.3f %8.3f %8.3f %7.3f %7.3f\n", r.scale, r.selector.c_str(),
                  r.single.at(1), r.single.at(3), r.single.at(5), r.chain.at(1), r.chain.at(3), r.chain.at(5));
    out += buf;
  }
  return out;
}

}  // namespace contractflow

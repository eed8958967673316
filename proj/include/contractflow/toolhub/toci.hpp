#pragma once

// Schema-compatible tool chain composition.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contractflow/toolhub/hub.hpp"

namespace contractflow {

struct ToolChain {
  std::vector<std::string> steps;
  // entry (available -> first), each consecutive boundary, exit (last -> need)
  std::vector<CompatReport> boundary_reports;
  double aggregate_reliability = 1.0;
};

inline void to_json(Json& j, const ToolChain& c) {
  j = Json{{"steps", c.steps}, {"boundary_reports", c.boundary_reports}, {"aggregate_reliability", c.aggregate_reliability}};
}

struct TociOptions {
  int max_len = 4;
  std::size_t limit = 0;  // 0 keeps every chain
};

// Ranked by length, then aggregate reliability (higher first), then step ids.
inline bool chain_before(const ToolChain& a, const ToolChain& b) {
  if (a.steps.size() != b.steps.size()) return a.steps.size() < b.steps.size();
  if (a.aggregate_reliability != b.aggregate_reliability) return a.aggregate_reliability > b.aggregate_reliability;
  return a.steps < b.steps;
}

inline std::vector<ToolChain> toci_compose(const HubSnapshot& hub, const NeedContract& need, const Schema& available,
                                           const TociOptions& opt = {}) {
  if (opt.max_len < 1) throw InvalidValue("max_len must be at least 1");
  const auto cards = hub.cards();
  const std::size_t n = cards.size();

  std::vector<std::optional<CompatReport>> exit_report(n);
  std::vector<bool> exits(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = schema_compatible(cards[i]->output_schema, need.output_schema);
    exits[i] = r.satisfied;
    if (r.satisfied) exit_report[i] = std::move(r);
  }

  // Successor lists computed on first use.
  std::vector<std::optional<std::vector<std::pair<std::size_t, CompatReport>>>> succ(n);
  auto successors = [&](std::size_t i) -> const std::vector<std::pair<std::size_t, CompatReport>>& {
    if (!succ[i]) {
      succ[i].emplace();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        auto r = schema_compatible(cards[i]->output_schema, cards[j]->input_schema);
        if (r.satisfied) succ[i]->push_back({j, std::move(r)});
      }
    }
    return *succ[i];
  };

  // reach[i][d]: some walk of at most d tools starting at i ends at an exit.
  // Ignoring distinctness over-approximates, so pruning on it is sound.
  std::vector<std::vector<signed char>> reach(n, std::vector<signed char>(opt.max_len + 1, -1));
  auto can_reach = [&](auto&& self, std::size_t i, int d) -> bool {
    if (d <= 0) return false;
    auto& m = reach[i][d];
    if (m >= 0) return m == 1;
    bool ok = exits[i];
    if (!ok && d > 1)
      for (const auto& [j, _] : successors(i))
        if (self(self, j, d - 1)) {
          ok = true;
          break;
        }
    m = ok ? 1 : 0;
    return ok;
  };

  std::vector<ToolChain> out;
  std::vector<std::size_t> path;
  std::vector<CompatReport> reports;
  std::vector<bool> used(n, false);
  auto extend = [&](auto&& self, std::size_t i) -> void {
    if (exits[i]) {
      ToolChain c;
      for (auto k : path) {
        c.steps.push_back(cards[k]->id);
        c.aggregate_reliability *= cards[k]->reliability.rate();
      }
      c.boundary_reports = reports;
      c.boundary_reports.push_back(*exit_report[i]);
      out.push_back(std::move(c));
    }
    const int left = opt.max_len - static_cast<int>(path.size());
    if (left <= 0) return;
    for (const auto& [j, r] : successors(i)) {
      if (used[j] || !can_reach(can_reach, j, left)) continue;
      used[j] = true;
      path.push_back(j);
      reports.push_back(r);
      self(self, j);
      reports.pop_back();
      path.pop_back();
      used[j] = false;
    }
  };

  for (std::size_t i = 0; i < n; ++i) {
    auto entry = schema_compatible(available, cards[i]->input_schema);
    if (!entry.satisfied || !can_reach(can_reach, i, opt.max_len)) continue;
    used[i] = true;
    path = {i};
    reports = {entry};
    extend(extend, i);
    used[i] = false;
  }
  std::sort(out.begin(), out.end(), chain_before);
  if (opt.limit && out.size() > opt.limit) out.resize(opt.limit);
  return out;
}

// Soundness re-check: every boundary of the chain holds under schema_compatible.
inline bool chain_sound(const HubSnapshot& hub, const ToolChain& c, const NeedContract& need, const Schema& available) {
  if (c.steps.empty()) return false;
  Schema prev = available;
  for (const auto& id : c.steps) {
    const auto& card = hub.get(id);
    if (!schema_compatible(prev, card.input_schema).satisfied) return false;
    prev = card.output_schema;
  }
  return schema_compatible(prev, need.output_schema).satisfied;
}

}  // namespace contractflow

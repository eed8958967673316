#pragma once

#include <map>
#include <string>
#include <vector>

#include "contractflow/negotiation.hpp"

namespace cftest {

using namespace contractflow;

// Independent of unsafe_sessions: an invoke is legal only when the
// session's last transition was `start` taken from contract-confirmed.
inline bool oracle_safe(const std::vector<SessionRecord>& log) {
  std::map<std::string, const SessionRecord*> last;
  for (const auto& r : log) {
    if (r.event == "invoke") {
      const auto* prev = last[r.session];
      if (!prev || prev->event != "start" || prev->from != "contract-confirmed") return false;
      continue;
    }
    last[r.session] = &r;
  }
  return true;
}

}  // namespace cftest

#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace contractflow {

// Lower-cased alphanumeric runs. Everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Tokens joined by '-', e.g. "Estimate ET (mm)" -> "estimate-et-mm".
inline std::string slug(std::string_view text) {
  std::string out;
  for (const auto& t : tokenize(text)) {
    if (!out.empty()) out += '-';
    out += t;
  }
  return out;
}

}  // namespace contractflow

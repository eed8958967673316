#pragma once

// Executable tool artifacts: a short list of record operations interpreted
// against the bound input. Builtin tools and generated tools share the form.
//
//   {"id": "...", "spec_id": "...", "family": "unit-convert",
//    "ops": [{"op": "affine", "from": "mass_kg", "to": "mass_t", "mul": 0.001}]}
//
// Ops: copy, const, affine (to = from * mul + add), sum, product, threshold, concat,
// clamp, fail, sleep, alloc. Only fields written by ops form the output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "contractflow/core/serialize.hpp"

namespace contractflow {

struct Artifact {
  std::string id;
  std::string spec_id;
  std::string family;
  Json ops = Json::array();
};

inline void to_json(Json& j, const Artifact& a) {
  j = Json{{"id", a.id}, {"spec_id", a.spec_id}, {"family", a.family}, {"ops", a.ops}};
}
inline void from_json(const Json& j, Artifact& a) {
  a.id = j.value("id", std::string{});
  a.spec_id = j.value("spec_id", std::string{});
  a.family = j.value("family", std::string{});
  a.ops = j.at("ops");
  if (!a.ops.is_array()) throw ParseError("artifact ops must be an array");
}

namespace detail {

inline const Json& input_of(const Record& in, const Record& out, const std::string& name) {
  if (out.contains(name)) return out.at(name);
  if (in.is_object() && in.contains(name) && !in.at(name).is_null()) return in.at(name);
  throw ExecutionError("input field '" + name + "' is absent");
}

inline double number_of(const Json& v, const std::string& name) {
  if (!v.is_number()) throw ExecutionError("field '" + name + "' is not a number");
  return v.get<double>();
}

inline std::string op_str(const Json& op, const char* key) {
  if (!op.contains(key) || !op.at(key).is_string())
    throw ParseError(std::string("artifact op '") + op.value("op", std::string{"?"}) + "' needs string '" + key + "'");
  return op.at(key).get<std::string>();
}

}  // namespace detail

// Interprets the artifact in the calling process. sleep and alloc exist to
// exercise sandbox limits; run them only under run_isolated.
inline Record run_artifact(const Artifact& a, const Record& input) {
  Record out = Record::object();
  for (const auto& op : a.ops) {
    const auto kind = detail::op_str(op, "op");
    if (kind == "copy") {
      out[detail::op_str(op, "to")] = detail::input_of(input, out, detail::op_str(op, "from"));
    } else if (kind == "const") {
      out[detail::op_str(op, "to")] = op.at("value");
    } else if (kind == "affine") {
      const auto from = detail::op_str(op, "from");
      const double x = detail::number_of(detail::input_of(input, out, from), from);
      out[detail::op_str(op, "to")] = x * op.value("mul", 1.0) + op.value("add", 0.0);
    } else if (kind == "sum") {
      double s = 0;
      for (const auto& f : op.at("from")) s += detail::number_of(detail::input_of(input, out, f.get<std::string>()), f.get<std::string>());
      out[detail::op_str(op, "to")] = s;
    } else if (kind == "product") {
      double p = 1;
      for (const auto& f : op.at("from")) p *= detail::number_of(detail::input_of(input, out, f.get<std::string>()), f.get<std::string>());
      out[detail::op_str(op, "to")] = p;
    } else if (kind == "threshold") {
      const auto from = detail::op_str(op, "from");
      out[detail::op_str(op, "to")] = detail::number_of(detail::input_of(input, out, from), from) >= op.value("at", 0.0);
    } else if (kind == "concat") {
      std::string s;
      const auto sep = op.value("sep", std::string{" "});
      bool first = true;
      for (const auto& f : op.at("from")) {
        const auto& v = detail::input_of(input, out, f.get<std::string>());
        if (!first) s += sep;
        s += v.is_string() ? v.get<std::string>() : v.dump();
        first = false;
      }
      out[detail::op_str(op, "to")] = s;
    } else if (kind == "clamp") {
      const auto from = detail::op_str(op, "from");
      const double x = detail::number_of(detail::input_of(input, out, from), from);
      out[op.value("to", from)] = std::clamp(x, op.value("lo", -HUGE_VAL), op.value("hi", HUGE_VAL));
    } else if (kind == "fail") {
      throw ExecutionError(op.value("message", std::string{"artifact failed"}));
    } else if (kind == "sleep") {
      std::this_thread::sleep_for(std::chrono::milliseconds(op.value("ms", 0)));
    } else if (kind == "alloc") {
      const std::size_t mb = op.value("mb", 0);
      std::vector<char> block(mb << 20);
      for (std::size_t i = 0; i < block.size(); i += 4096) block[i] = 1;
      asm volatile("" : : "r"(block.data()) : "memory");
    } else {
      throw ParseError("unknown artifact op '" + kind + "'");
    }
  }
  return out;
}

inline void save_artifact(const Artifact& a, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << Json(a).dump(2) << "\n";
    if (!out) throw ExecutionError("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Artifact load_artifact(const std::filesystem::path& path) { return load_document<Artifact>(path.string()); }

}  // namespace contractflow

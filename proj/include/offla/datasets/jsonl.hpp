#pragma once

// Transition logs as JSON Lines. The first line is a format header, every
// following line holds one transition. Doubles are written in shortest
// round-trip form, so reading back is exact.

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "offla/transition.hpp"

namespace offla {

inline constexpr const char* kDatasetFormat = "offla-transitions";
inline constexpr int kDatasetVersion = 1;

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& what)
      : std::runtime_error("dataset line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline nlohmann::ordered_json obs_to_json(const Observation& o) {
  return {{"k", o.k}, {"x", o.x}, {"cqi", o.cqi}, {"t", o.t}, {"packet_id", o.packet_id}};
}

inline Observation obs_from_json(const nlohmann::json& j) {
  Observation o;
  o.k = j.at("k").get<int>();
  o.x = j.at("x").get<int>();
  o.cqi = j.at("cqi").get<int>();
  o.t = j.at("t").get<Tti>();
  o.packet_id = j.at("packet_id").get<std::uint64_t>();
  return o;
}

}  // namespace detail

inline std::string transition_to_json_line(const Transition& tr) {
  nlohmann::ordered_json j;
  j["obs"] = detail::obs_to_json(tr.obs);
  j["action"] = tr.action;
  j["reward"] = tr.reward;
  j["next_obs"] = detail::obs_to_json(tr.next_obs);
  j["packet_id"] = tr.packet_id;
  j["attempt"] = tr.attempt;
  j["t_a"] = tr.t_a;
  j["t_r"] = tr.t_r;
  j["packet_terminal"] = tr.packet_terminal;
  j["seed_id"] = tr.seed_id;
  return j.dump();
}

inline Transition transition_from_json(const nlohmann::json& j) {
  Transition tr;
  tr.obs = detail::obs_from_json(j.at("obs"));
  tr.action = j.at("action").get<int>();
  tr.reward = j.at("reward").get<double>();
  tr.next_obs = detail::obs_from_json(j.at("next_obs"));
  tr.packet_id = j.at("packet_id").get<std::uint64_t>();
  tr.attempt = j.at("attempt").get<int>();
  tr.t_a = j.at("t_a").get<Tti>();
  tr.t_r = j.at("t_r").get<Tti>();
  tr.packet_terminal = j.at("packet_terminal").get<bool>();
  tr.seed_id = j.at("seed_id").get<std::uint32_t>();
  return tr;
}

inline void write_dataset(std::ostream& os, std::span<const Transition> transitions) {
  nlohmann::ordered_json header{{"format", kDatasetFormat}, {"version", kDatasetVersion}};
  os << header.dump() << '\n';
  for (const auto& tr : transitions) os << transition_to_json_line(tr) << '\n';
}

inline void write_dataset(const std::string& path, std::span<const Transition> transitions) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_dataset(os, transitions);
  if (!os) throw std::runtime_error("write failed: " + path);
}

/// Reads a dataset. An empty input is an empty dataset; the header line is
/// optional but its version must match when present.
inline TransitionStream read_dataset(std::istream& is) {
  TransitionStream out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetParseError(lineno, std::string("malformed JSON (") + e.what() + ")");
    }
    if (j.is_object() && j.contains("format")) {
      if (j.at("format") != kDatasetFormat) throw DatasetParseError(lineno, "unknown format");
      if (j.value("version", -1) != kDatasetVersion)
        throw DatasetParseError(lineno, "unsupported dataset version " + j.value("version", nlohmann::json()).dump());
      continue;
    }
    try {
      out.push_back(transition_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetParseError(lineno, std::string("bad transition record (") + e.what() + ")");
    }
  }
  return out;
}

inline TransitionStream read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_dataset(is);
}

}  // namespace offla

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "polarsim/analysis.hpp"
#include "polarsim/constructions.hpp"
#include "polarsim/dynamics.hpp"
#include "polarsim/geometry.hpp"

// File formats: configuration JSON, trace CSV, schedule JSON, analysis and
// lab reports, run manifests. All of them round-trip losslessly; infinities
// are serialized as the string "inf".

namespace polarsim {

struct BadFile : Error {
  using Error::Error;
};

using nlohmann::json;

// Shortest round-trip decimal form; "inf"/"-inf" for infinities.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw BadFile("cannot parse number: " + s);
  return v;
}

// JSON value for a possibly-infinite double.
inline json json_real(double v) {
  if (std::isinf(v)) return json(v > 0 ? "inf" : "-inf");
  return json(v);
}

inline double real_from_json(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw BadFile("expected number or \"inf\": " + s);
  }
  return j.get<double>();
}

// ---------------------------------------------------------------------------
// Configuration files: {"d": int, "alpha": float, "opinions": [[...], ...]}

inline void save_configuration(const std::string& path,
                               const Configuration& u, double alpha) {
  json j;
  j["d"] = u.dim();
  j["alpha"] = alpha;
  json ops = json::array();
  for (std::size_t i = 0; i < u.size(); ++i) {
    json row = json::array();
    for (double x : u.opinion(i)) row.push_back(x);
    ops.push_back(std::move(row));
  }
  j["opinions"] = std::move(ops);
  std::ofstream f(path);
  if (!f) throw BadFile("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

struct LoadedConfiguration {
  Configuration config;
  double alpha = 1.0;
};

inline LoadedConfiguration load_configuration(const std::string& path,
                                              bool renormalize = false) {
  std::ifstream f(path);
  if (!f) throw BadFile("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw BadFile(std::string("malformed JSON: ") + e.what());
  }
  if (!j.contains("d") || !j.contains("opinions"))
    throw BadFile("configuration file needs fields d and opinions");
  const std::size_t d = j["d"].get<std::size_t>();
  std::vector<Vec> rows;
  for (const auto& row : j["opinions"]) {
    Vec v = row.get<Vec>();
    if (v.size() != d) throw BadFile("opinion row does not match d");
    rows.push_back(std::move(v));
  }
  LoadedConfiguration out{
      Configuration::from_rows(std::move(rows), renormalize), 1.0};
  if (j.contains("alpha")) out.alpha = j["alpha"].get<double>();
  return out;
}

// ---------------------------------------------------------------------------
// Trace CSV: t,delta0,delta1,Q0,Q1,delta_prime,num_clusters,inactive,i,j
// Absent fields (no partition, or the t = 0 interaction) are left empty.

inline constexpr const char* kTraceHeader =
    "t,delta0,delta1,Q0,Q1,delta_prime,num_clusters,inactive,i,j";

inline void write_trace(std::ostream& os,
                        const std::vector<TraceRecord>& trace) {
  os << kTraceHeader << "\n";
  for (const TraceRecord& r : trace) {
    os << r.t << ",";
    if (r.potentials) {
      os << format_double(r.potentials->delta0) << ","
         << format_double(r.potentials->delta1) << ","
         << format_double(r.potentials->q0) << ","
         << format_double(r.potentials->q1) << ",";
    } else {
      os << ",,,,";
    }
    os << format_double(r.delta_prime) << ",";
    if (r.num_clusters) os << *r.num_clusters;
    os << "," << (r.inactive ? 1 : 0) << ",";
    if (r.interaction)
      os << r.interaction->influenced << "," << r.interaction->influencer;
    else
      os << ",";
    os << "\n";
  }
}

inline void write_trace(const std::string& path,
                        const std::vector<TraceRecord>& trace) {
  std::ofstream f(path);
  if (!f) throw BadFile("cannot open for writing: " + path);
  write_trace(f, trace);
}

inline std::vector<TraceRecord> read_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw BadFile("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != kTraceHeader)
    throw BadFile("bad trace header");
  std::vector<TraceRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 10) cells.emplace_back();  // trailing empties
    if (cells.size() != 10) throw BadFile("bad trace row: " + line);
    TraceRecord r;
    r.t = std::stoll(cells[0]);
    if (!cells[1].empty()) {
      Potentials p;
      p.delta0 = parse_double(cells[1]);
      p.delta1 = parse_double(cells[2]);
      p.q0 = parse_double(cells[3]);
      p.q1 = parse_double(cells[4]);
      p.delta_prime = parse_double(cells[5]);
      r.potentials = p;
    }
    r.delta_prime = parse_double(cells[5]);
    if (!cells[6].empty()) r.num_clusters = std::stoull(cells[6]);
    r.inactive = cells[7] == "1";
    if (!cells[8].empty())
      r.interaction = Interaction{std::stoull(cells[8]), std::stoull(cells[9])};
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schedules: {"provenance": "...", "steps": [[i, j], ...],
//             "annotations": [...]?}  (steps are [influenced, influencer])

inline json schedule_to_json(const Schedule& s) {
  json j;
  j["provenance"] = to_string(s.provenance);
  json steps = json::array();
  for (const Interaction& x : s.steps)
    steps.push_back(json::array({x.influenced, x.influencer}));
  j["steps"] = std::move(steps);
  bool any_note = false;
  for (const auto& a : s.annotations) any_note |= !a.empty();
  if (any_note) j["annotations"] = s.annotations;
  return j;
}

inline Schedule schedule_from_json(const json& j) {
  Schedule s;
  const std::string prov = j.at("provenance").get<std::string>();
  bool known = false;
  for (Provenance p :
       {Provenance::path_to_inactive, Provenance::reach_consistency,
        Provenance::increase_delta, Provenance::tighten, Provenance::collapse,
        Provenance::random}) {
    if (prov == to_string(p)) {
      s.provenance = p;
      known = true;
    }
  }
  if (!known) throw BadFile("unknown provenance: " + prov);
  for (const auto& x : j.at("steps"))
    s.steps.push_back({x.at(0).get<std::size_t>(), x.at(1).get<std::size_t>()});
  if (j.contains("annotations"))
    s.annotations = j["annotations"].get<std::vector<std::string>>();
  s.annotations.resize(s.steps.size());
  return s;
}

inline void save_schedule(const std::string& path, const Schedule& s) {
  std::ofstream f(path);
  if (!f) throw BadFile("cannot open for writing: " + path);
  f << schedule_to_json(s).dump(2) << "\n";
}

inline Schedule load_schedule(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw BadFile("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw BadFile(std::string("malformed JSON: ") + e.what());
  }
  return schedule_from_json(j);
}

// ---------------------------------------------------------------------------
// Analysis report: {inactive, clusters, delta0, delta1, Q0, Q1,
//                   delta_prime, separable}

inline json analysis_report(const CorrelationMatrix& a, double eps0,
                            double eps1, double tol_orth) {
  json j;
  j["inactive"] = is_inactive(a, eps0, eps1).inactive;
  j["separable"] = is_separable(a, tol_orth).separable;
  j["delta_prime"] = json_real(delta_prime(a));
  if (auto p = try_clusters(a)) {
    json blocks = json::array();
    for (const auto& b : p->blocks) blocks.push_back(b);
    j["clusters"] = std::move(blocks);
    const Potentials pot = potentials(a, *p);
    j["delta0"] = json_real(pot.delta0);
    j["delta1"] = json_real(pot.delta1);
    j["Q0"] = json_real(pot.q0);
    j["Q1"] = json_real(pot.q1);
  } else {
    j["clusters"] = json::array();
    j["delta0"] = nullptr;
    j["delta1"] = nullptr;
    j["Q0"] = nullptr;
    j["Q1"] = nullptr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Pair distribution files: {"D": [[...], ...]} row i = influenced agent.

inline PairDistribution load_pair_distribution(const std::string& path,
                                               std::size_t n) {
  std::ifstream f(path);
  if (!f) throw BadFile("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw BadFile(std::string("malformed JSON: ") + e.what());
  }
  if (!j.contains("D")) throw BadFile("pair distribution file needs field D");
  std::vector<double> d;
  d.reserve(n * n);
  for (const auto& row : j["D"]) {
    if (row.size() != n) throw BadFile("pair distribution must be n x n");
    for (const auto& x : row) d.push_back(x.get<double>());
  }
  if (d.size() != n * n) throw BadFile("pair distribution must be n x n");
  return PairDistribution::explicit_matrix(n, std::move(d));
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw BadFile("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw BadFile("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw BadFile(std::string("malformed JSON: ") + e.what());
  }
  return j;
}

}  // namespace polarsim

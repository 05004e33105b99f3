// polarsim: simulate the geometric opinion-exchange process, analyze and
// construct schedules for it, and run the stochastic verification lab.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "polarsim/analysis.hpp"
#include "polarsim/constants.hpp"
#include "polarsim/constructions.hpp"
#include "polarsim/dynamics.hpp"
#include "polarsim/geometry.hpp"
#include "polarsim/io.hpp"
#include "polarsim/lab.hpp"
#include "polarsim/rng.hpp"
#include "polarsim/sampling.hpp"

namespace {

constexpr const char* kVersion = "polarsim 0.1.0";

namespace fs = std::filesystem;
using namespace polarsim;

// exit codes: 0 ok, 2 usage/input, 3 invariant breach, 4 postcondition fail
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitPostcondition = 4;

struct UsageError : Error {
  using Error::Error;
};
struct PostconditionFailure : Error {
  using Error::Error;
};

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  std::string command;
  json params = json::object();
  std::uint64_t seed = 0;
  std::string started_at = iso_now();
  std::vector<std::string> outputs;

  void write(const fs::path& dir) {
    json j;
    j["command"] = command;
    j["params"] = params;
    j["seed"] = seed;
    j["code_version"] = kVersion;
    j["rng"] = Rng::kAlgorithm;
    j["started_at"] = started_at;
    j["finished_at"] = iso_now();
    j["outputs"] = outputs;
    write_json_file((dir / "manifest.json").string(), j);
  }
};

struct SharedFlags {
  std::size_t n = 6, d = 3;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string out = "out";
  std::string init_file;
  bool renormalize = false;
  std::string pair_dist_file;
  std::string rule = "linear";
  long long max_steps = 1'000'000;
  long long sample_every = 1'000;
  double stop_polarized = 0.0;  // 0 = disabled
  std::string stop_active;      // "EPS,EPS1,T"
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--n", f.n, "number of agents");
  cmd->add_option("--d", f.d, "opinion dimension");
  cmd->add_option("--alpha", f.alpha, "update strength");
  cmd->add_option("--seed", f.seed, "base RNG seed")->envname("POLARSIM_SEED");
  cmd->add_option("--jobs", f.jobs, "parallel workers");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--init", f.init_file, "initial configuration JSON");
  cmd->add_flag("--renormalize", f.renormalize,
                "renormalize opinions read from --init");
  cmd->add_option("--pair-dist", f.pair_dist_file,
                  "explicit pair-distribution JSON");
  cmd->add_option("--rule", f.rule, "linear or piecewise:BETA");
  cmd->add_option("--max-steps", f.max_steps, "step budget");
  cmd->add_option("--sample-every", f.sample_every, "trace sampling period");
  cmd->add_option("--stop-polarized", f.stop_polarized,
                  "stop when polarized within TOL");
  cmd->add_option("--stop-active", f.stop_active,
                  "stop when not (EPS,EPS1)-inactive, checked every T: EPS,EPS1,T");
}

UpdateRule parse_rule(const SharedFlags& f) {
  if (f.rule == "linear") return UpdateRule::linear(f.alpha);
  const std::string prefix = "piecewise:";
  if (f.rule.rfind(prefix, 0) == 0) {
    const double beta = parse_double(f.rule.substr(prefix.size()));
    return UpdateRule::piecewise(f.alpha, beta);
  }
  throw UsageError("unknown --rule: " + f.rule);
}

StopCriteria parse_stop(const SharedFlags& f) {
  StopCriteria s;
  if (f.stop_polarized > 0) s.polarization_tol = f.stop_polarized;
  if (!f.stop_active.empty()) {
    std::stringstream ss(f.stop_active);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') ||
        !std::getline(ss, c, ','))
      throw UsageError("--stop-active needs EPS,EPS1,T");
    s.activity = StopCriteria::Activity{parse_double(a), parse_double(b),
                                        std::stoll(c)};
  }
  return s;
}

json shared_to_json(const SharedFlags& f) {
  json j;
  j["n"] = f.n;
  j["d"] = f.d;
  j["alpha"] = f.alpha;
  j["jobs"] = f.jobs;
  j["init"] = f.init_file;
  j["renormalize"] = f.renormalize;
  j["pair_dist"] = f.pair_dist_file;
  j["rule"] = f.rule;
  j["max_steps"] = f.max_steps;
  j["sample_every"] = f.sample_every;
  j["stop_polarized"] = f.stop_polarized;
  j["stop_active"] = f.stop_active;
  return j;
}

Configuration initial_configuration(const SharedFlags& f, std::uint64_t stream) {
  if (!f.init_file.empty())
    return load_configuration(f.init_file, f.renormalize).config;
  Rng rng(f.seed, 0x8000000000000000ULL + stream);
  return sample_uniform_sphere(f.n, f.d, rng);
}

ProcessParams build_params(const SharedFlags& f, const Configuration& init,
                           std::uint64_t stream) {
  ProcessParams p;
  p.n = init.size();
  p.d = init.dim();
  p.rule = parse_rule(f);
  if (!f.pair_dist_file.empty())
    p.pair_dist = load_pair_distribution(f.pair_dist_file, p.n);
  p.seed = f.seed;
  p.stream = stream;
  p.max_steps = f.max_steps;
  p.sample_every = f.sample_every;
  p.stop = parse_stop(f);
  return p;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const SharedFlags& f) {
  fs::create_directories(f.out);
  Manifest m;
  m.command = "simulate";
  m.seed = f.seed;
  m.params = shared_to_json(f);

  const Configuration init = initial_configuration(f, 0);
  const ProcessParams params = build_params(f, init, 0);
  const SimulationResult res = simulate(params, init);

  const fs::path dir(f.out);
  write_trace((dir / "trace.csv").string(), res.trace);
  save_configuration((dir / "final.json").string(), res.final,
                     params.rule.alpha);
  const double eb = epsilon_base(params.d, params.rule.alpha);
  json summary;
  summary["stop_reason"] = to_string(res.reason);
  summary["steps"] = res.steps;
  summary["final_analysis"] =
      analysis_report(correlation(res.final),
                      params.stop.activity ? params.stop.activity->eps : eb,
                      params.stop.activity ? params.stop.activity->eps1 : eb,
                      1e-9);
  write_json_file((dir / "summary.json").string(), summary);
  m.outputs = {"trace.csv", "final.json", "summary.json"};
  m.write(dir);
  std::cout << "simulate: " << to_string(res.reason) << " after " << res.steps
            << " steps\n";
  return kExitOk;
}

int cmd_ensemble(const SharedFlags& f, long long runs) {
  if (runs < 1) throw UsageError("--runs must be >= 1");
  fs::create_directories(f.out);
  Manifest m;
  m.command = "ensemble";
  m.seed = f.seed;
  m.params = shared_to_json(f);
  m.params["runs"] = runs;

  const LabConstants table = make_lab_constants(f.n, f.d, f.alpha);
  double ep_eps = table.eps, ep_eps1 = table.eps1;
  {
    const StopCriteria sc = parse_stop(f);
    if (sc.activity) {
      ep_eps = sc.activity->eps;
      ep_eps1 = sc.activity->eps1;
    }
  }

  struct RunOutcome {
    StopReason reason;
    long long steps;
    std::size_t group_pos, group_neg;
    std::vector<std::size_t> nc_sequence;
  };
  std::vector<RunOutcome> outcomes(runs);

  std::atomic<long long> next{0};
  auto worker = [&]() {
    while (true) {
      const long long r = next.fetch_add(1);
      if (r >= runs) return;
      const Configuration init = initial_configuration(f, std::uint64_t(r));
      const ProcessParams params =
          build_params(f, init, std::uint64_t(r));
      const SimulationResult res = simulate(params, init);
      RunOutcome& o = outcomes[r];
      o.reason = res.reason;
      o.steps = res.steps;
      const CorrelationMatrix a = correlation(res.final);
      o.group_pos = 0;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a(0, i) >= 0) o.group_pos++;
      o.group_neg = a.size() - o.group_pos;
      for (const Epoch& e : epochs(res.trace, ep_eps, ep_eps1))
        o.nc_sequence.push_back(e.num_clusters);
    }
  };
  {
    std::vector<std::thread> pool;
    const unsigned jobs = std::max(1u, f.jobs);
    for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  long long polarized = 0;
  std::vector<long long> steps_to_pol;
  std::map<std::size_t, long long> split_histogram;  // min group size -> runs
  std::map<std::string, long long> nc_transitions;
  json per_run = json::array();
  for (const RunOutcome& o : outcomes) {
    if (o.reason == StopReason::polarized) {
      polarized++;
      steps_to_pol.push_back(o.steps);
    }
    split_histogram[std::min(o.group_pos, o.group_neg)]++;
    for (std::size_t k = 0; k + 1 < o.nc_sequence.size(); ++k)
      nc_transitions[std::to_string(o.nc_sequence[k]) + "->" +
                     std::to_string(o.nc_sequence[k + 1])]++;
    json jr;
    jr["stop_reason"] = to_string(o.reason);
    jr["steps"] = o.steps;
    jr["split_sizes"] = json::array({o.group_pos, o.group_neg});
    jr["nc_sequence"] = o.nc_sequence;
    per_run.push_back(std::move(jr));
  }

  json summary;
  summary["runs"] = runs;
  summary["polarized_fraction"] = double(polarized) / double(runs);
  if (!steps_to_pol.empty()) {
    std::sort(steps_to_pol.begin(), steps_to_pol.end());
    summary["median_steps_to_polarization"] =
        steps_to_pol[steps_to_pol.size() / 2];
  } else {
    summary["median_steps_to_polarization"] = nullptr;
  }
  json hist = json::object();
  for (const auto& [k, v] : split_histogram) hist[std::to_string(k)] = v;
  summary["split_size_histogram"] = std::move(hist);
  json trans = json::object();
  for (const auto& [k, v] : nc_transitions) trans[k] = v;
  summary["nc_transitions"] = std::move(trans);
  summary["epoch_thresholds"] = {{"eps", ep_eps}, {"eps1", ep_eps1}};
  summary["per_run"] = std::move(per_run);

  const fs::path dir(f.out);
  write_json_file((dir / "ensemble.json").string(), summary);
  m.outputs = {"ensemble.json"};
  m.write(dir);
  std::cout << "ensemble: " << polarized << "/" << runs << " polarized\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ConstructFlags {
  std::string eps = "auto";
  std::string blocks;  // "A,B"
  long long block = 0;
  std::string pair;  // "I0,J0"
  std::string mode = "adaptive";
  bool execute = false;
};

int cmd_construct(const std::string& verb, const SharedFlags& f,
                  const ConstructFlags& cf) {
  fs::create_directories(f.out);
  Manifest m;
  m.command = "construct " + verb;
  m.seed = f.seed;
  m.params = shared_to_json(f);
  m.params["eps"] = cf.eps;
  m.params["blocks"] = cf.blocks;
  m.params["block"] = cf.block;
  m.params["mode"] = cf.mode;
  m.params["execute"] = cf.execute;

  const Configuration init = initial_configuration(f, 0);
  const double alpha = f.alpha;
  const double eps_b = epsilon_base(init.dim(), alpha);
  const double eps =
      cf.eps == "auto" ? eps_b : parse_double(cf.eps);

  auto parse_two = [](const std::string& s,
                      const char* what) -> std::pair<std::size_t, std::size_t> {
    std::stringstream ss(s);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw UsageError(std::string(what) + " needs two comma-separated values");
    return {std::stoull(a), std::stoull(b)};
  };

  const CorrelationMatrix a0 = correlation(init);
  Schedule schedule;
  // postcondition verifier, evaluated on the executed end state
  std::function<bool(const Configuration&, json&)> verify;

  if (verb == "to-inactive") {
    schedule = path_to_inactive(init, eps, alpha);
    verify = [eps](const Configuration& u, json& out) {
      const bool ok = is_inactive(correlation(u), eps, eps).inactive;
      out["inactive"] = ok;
      return ok;
    };
  } else if (verb == "consistency") {
    auto [ba, bb] = cf.blocks.empty()
                        ? std::pair<std::size_t, std::size_t>{0, 1}
                        : parse_two(cf.blocks, "--blocks");
    const ConsistencyMode mode = cf.mode == "worst-case"
                                     ? ConsistencyMode::paper_worst_case
                                     : ConsistencyMode::adaptive;
    schedule = reach_consistency(init, ba, bb, mode, alpha);
    const double m_floor =
        make_construction_constants(init.size(), init.dim(), alpha).c_cons;
    verify = [ba, bb, m_floor](const Configuration& u, json& out) {
      const CorrelationMatrix a = correlation(u);
      const auto p = try_clusters(a);
      if (!p) {
        out["consistent"] = false;
        return false;
      }
      const bool ok = is_consistent(a, *p, ba, bb, m_floor).consistent;
      out["consistent"] = ok;
      return ok;
    };
  } else if (verb == "amplify") {
    auto [ba, bb] = cf.blocks.empty()
                        ? std::pair<std::size_t, std::size_t>{0, 1}
                        : parse_two(cf.blocks, "--blocks");
    const ClusterPartition p = clusters(a0);
    schedule = increase_delta_schedule(p, ba, bb);
    const double before = delta_ab(a0, p, ba, bb);
    verify = [ba, bb, before, p](const Configuration& u, json& out) {
      const double after = delta_ab(correlation(u), p, ba, bb);
      out["delta_ab_before"] = before;
      out["delta_ab_after"] = after;
      return after >= before;
    };
  } else if (verb == "tighten") {
    const ClusterPartition p = clusters(a0);
    schedule = tighten_cluster_schedule(a0, p, std::size_t(cf.block));
    const auto& blk = p.blocks[std::size_t(cf.block)];
    auto loose = [blk](const CorrelationMatrix& a) {
      double worst = 0.0;
      for (std::size_t x = 0; x < blk.size(); ++x)
        for (std::size_t y = 0; y < x; ++y)
          worst = std::max(worst, 1.0 - std::abs(a(blk[x], blk[y])));
      return worst;
    };
    const double before = loose(a0);
    verify = [before, loose](const Configuration& u, json& out) {
      const double after = loose(correlation(u));
      const double c = before > 0 ? after / before : 0.0;
      out["loose_before"] = before;
      out["loose_after"] = after;
      out["contraction"] = c;
      std::cout << "contraction factor: " << format_double(c) << "\n";
      return c < 1.0 || before == 0.0;
    };
  } else if (verb == "collapse") {
    const ClusterPartition p = clusters(a0);
    std::size_t i0, j0;
    if (cf.pair.empty()) {
      const RealizedPair rp = realizing_pair(a0, p);
      i0 = rp.i;
      j0 = rp.j;
    } else {
      std::tie(i0, j0) = parse_two(cf.pair, "--pair");
    }
    const double use_eps = std::min(eps, std::abs(a0(i0, j0)));
    const std::size_t ba = p.block_of[i0], bb = p.block_of[j0];
    const std::size_t before_count = p.count();
    schedule = collapse_clusters(init, use_eps, ba, bb, i0, j0, alpha);
    verify = [use_eps, before_count](const Configuration& u, json& out) {
      const CorrelationMatrix a = correlation(u);
      const auto p2 = try_clusters(a);
      const bool inact = is_inactive(a, use_eps, use_eps).inactive;
      out["inactive"] = inact;
      out["clusters_before"] = before_count;
      out["clusters_after"] = p2 ? json(p2->count()) : json(nullptr);
      return inact && p2 && p2->count() < before_count;
    };
  } else {
    throw UsageError("unknown construct verb: " + verb);
  }

  const fs::path dir(f.out);
  save_schedule((dir / "schedule.json").string(), schedule);
  m.outputs = {"schedule.json"};

  int code = kExitOk;
  if (cf.execute) {
    const ScriptedResult res =
        run_scripted(init, schedule, UpdateRule::linear(alpha));
    save_configuration((dir / "post_state.json").string(), res.final, alpha);
    json verdict;
    const bool ok = verify(res.final, verdict);
    verdict["schedule_length"] = schedule.size();
    verdict["postcondition_ok"] = ok;
    write_json_file((dir / "post_verify.json").string(), verdict);
    m.outputs.push_back("post_state.json");
    m.outputs.push_back("post_verify.json");
    if (!ok) {
      std::cerr << "postcondition failed for construct " << verb << "\n";
      code = kExitPostcondition;
    }
  }
  m.write(dir);
  std::cout << "construct " << verb << ": " << schedule.size() << " steps\n";
  return code;
}

// ---------------------------------------------------------------------------

int cmd_lab_two_chain(const SharedFlags& f, double C, double c_min,
                      double c_tilde, double p0_off, double p1_off,
                      long long trials, long long t_max) {
  fs::create_directories(f.out);
  Manifest m;
  m.command = "lab two-chain";
  m.seed = f.seed;

  TwoChainParams params;
  params.C = C;
  params.c_min = c_min;
  params.c_tilde = c_tilde > 0 ? c_tilde : make_lab_constants(f.n, f.d, f.alpha).c_tilde;
  params.p0_offset = p0_off;
  params.p1_offset = p1_off;
  params.trials = trials;
  params.t_max = t_max;
  params.seed = f.seed;
  m.params = {{"C", params.C},          {"c_min", params.c_min},
              {"c_tilde", params.c_tilde}, {"p0_offset", params.p0_offset},
              {"p1_offset", params.p1_offset}, {"trials", params.trials},
              {"t_max", params.t_max}};

  const auto outcomes = run_two_chain(params);
  long long p1_crossed = 0, capped = 0;
  for (const auto& o : outcomes) {
    if (o.capped) capped++;
    else if (o.via == TrialOutcome::Escape::p1_crossed) p1_crossed++;
  }
  const WilsonInterval w = wilson(p1_crossed, trials);
  json report;
  report["estimate"] = double(p1_crossed) / double(trials);
  report["wilson_interval"] = {{"center", w.center}, {"halfwidth", w.halfwidth}};
  report["bound"] = 0.3;
  report["trials"] = trials;
  report["capped"] = capped;
  report["seed"] = f.seed;
  report["kernel_id"] = "default-adversarial";
  report["violations"] = json::array();
  write_json_file((fs::path(f.out) / "two_chain.json").string(), report);
  m.outputs = {"two_chain.json"};
  m.write(f.out);
  std::cout << "two-chain: P1-escape " << report["estimate"]
            << " (bound 0.3), capped " << capped << "/" << trials << "\n";
  return kExitOk;
}

int cmd_lab_azuma(const SharedFlags& f, double c1, double c2,
                  const std::string& horizons, long long trials) {
  fs::create_directories(f.out);
  Manifest m;
  m.command = "lab azuma";
  m.seed = f.seed;
  m.params = {{"c1", c1}, {"c2", c2}, {"t", horizons}, {"trials", trials}};

  json entries = json::array();
  std::stringstream ss(horizons);
  std::string tok;
  bool all_ok = true;
  while (std::getline(ss, tok, ',')) {
    AzumaParams p;
    p.c1 = c1;
    p.c2 = c2;
    p.horizon = std::stoll(tok);
    p.trials = trials;
    p.seed = f.seed;
    const AzumaResult r = azuma_tail(p);
    all_ok = all_ok && r.empirical <= r.bound;
    entries.push_back({{"t", p.horizon},
                       {"empirical", r.empirical},
                       {"bound", r.bound},
                       {"trials", r.trials}});
    std::cout << "azuma t=" << p.horizon << ": empirical " << r.empirical
              << " <= bound " << r.bound << (r.empirical <= r.bound ? "" : "  VIOLATION")
              << "\n";
  }
  json report;
  report["entries"] = std::move(entries);
  report["seed"] = f.seed;
  report["kernel_id"] = "two-point";
  report["violations"] = json::array();
  write_json_file((fs::path(f.out) / "azuma.json").string(), report);
  m.outputs = {"azuma.json"};
  m.write(f.out);
  return all_ok ? kExitOk : kExitPostcondition;
}

int cmd_lab_block_check(const SharedFlags& f, long long blocks,
                        long long probed, long long replicas, bool deep_gap) {
  fs::create_directories(f.out);
  Manifest m;
  m.command = "lab block-check";
  m.seed = f.seed;

  BlockCheckParams p;
  p.n = f.n;
  p.d = f.d;
  p.alpha = f.alpha;
  p.table = make_lab_constants(f.n, f.d, f.alpha);
  p.blocks = blocks;
  p.probed_states = probed;
  p.replicas = replicas;
  p.seed = f.seed;
  p.deep_gap_states = deep_gap;
  m.params = {{"blocks", blocks},   {"probed", probed},
              {"replicas", replicas}, {"deep_gap", deep_gap},
              {"T", p.table.T},     {"C", p.table.C},
              {"eps", p.table.eps}, {"eps1", p.table.eps1}};

  const BlockReport r = verify_block_properties(p);
  json report;
  report["boundaries_checked"] = r.boundaries_checked;
  report["p1_bound_binding"] = r.p1_bound_binding;
  report["probed"] = r.probed;
  report["p0_drift_ok"] = r.p0_drift_ok;
  report["p1_probed"] = r.p1_probed;
  report["p1_drift_ok"] = r.p1_drift_ok;
  json viols = json::array();
  for (const auto& v : r.violations) {
    json jv;
    jv["trajectory"] = v.trajectory;
    jv["block"] = v.block;
    jv["kind"] = v.kind;
    jv["lhs"] = json_real(v.lhs);
    jv["rhs"] = json_real(v.rhs);
    jv["state"] = v.state;
    viols.push_back(std::move(jv));
  }
  report["violations"] = std::move(viols);
  report["seed"] = f.seed;
  write_json_file((fs::path(f.out) / "block_check.json").string(), report);
  m.outputs = {"block_check.json"};
  m.write(f.out);
  std::cout << "block-check: " << r.boundaries_checked << " boundaries, "
            << r.violations.size() << " violations, p0 drift ok "
            << r.p0_drift_ok << "/" << r.probed << "\n";
  return kExitOk;
}

int cmd_lab_dprime_scan(const SharedFlags& f, long long configs) {
  fs::create_directories(f.out);
  Manifest m;
  m.command = "lab dprime-scan";
  m.seed = f.seed;
  m.params = {{"configs", configs}, {"n", f.n}, {"d", f.d}, {"alpha", f.alpha}};

  json findings = json::array();
  for (long long k = 0; k < configs; ++k) {
    Rng rng(f.seed, std::uint64_t(k));
    const Configuration u = sample_uniform_sphere(f.n, f.d, rng);
    const double drift = delta_prime_drift_exact(u, f.alpha);
    if (drift < -1e-12) {
      json jf;
      jf["config_index"] = k;
      jf["drift"] = drift;
      jf["state"] = u.data();
      findings.push_back(std::move(jf));
    }
  }
  json report;
  report["configs"] = configs;
  report["negative_drift_findings"] = findings.size();
  report["findings"] = std::move(findings);
  report["seed"] = f.seed;
  write_json_file((fs::path(f.out) / "dprime_scan.json").string(), report);
  m.outputs = {"dprime_scan.json"};
  m.write(f.out);
  std::cout << "dprime-scan: " << report["negative_drift_findings"]
            << " negative-drift findings in " << configs << " configs\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geometric opinion-exchange simulator and verification lab"};
  app.require_subcommand(1);

  SharedFlags f;

  auto* sim = app.add_subcommand("simulate", "run one trajectory");
  add_shared(sim, f);

  auto* ens = app.add_subcommand("ensemble", "run many seeded trajectories");
  add_shared(ens, f);
  long long runs = 100;
  ens->add_option("--runs", runs, "number of trajectories");

  auto* con = app.add_subcommand("construct", "build interaction schedules");
  con->require_subcommand(1);
  ConstructFlags cf;
  std::vector<CLI::App*> construct_verbs;
  for (const char* verb :
       {"to-inactive", "consistency", "amplify", "tighten", "collapse"}) {
    auto* c = con->add_subcommand(verb);
    add_shared(c, f);
    c->add_option("--eps", cf.eps, "inactivity scale or 'auto'");
    c->add_option("--blocks", cf.blocks, "block pair A,B");
    c->add_option("--block", cf.block, "block index");
    c->add_option("--pair", cf.pair, "agent pair I0,J0");
    c->add_option("--mode", cf.mode, "adaptive or worst-case");
    c->add_flag("--execute", cf.execute, "execute and verify postcondition");
    construct_verbs.push_back(c);
  }

  auto* lab = app.add_subcommand("lab", "stochastic verification lab");
  lab->require_subcommand(1);

  auto* two = lab->add_subcommand("two-chain", "escape-order experiment");
  add_shared(two, f);
  double C = 2.0, c_min = 0.0, c_tilde = -1.0, p0_off = 6.0, p1_off = 2.0;
  long long trials = 10'000, t_max = 1'000'000;
  two->add_option("--C", C, "kernel constant");
  two->add_option("--c-min", c_min, "lower threshold");
  two->add_option("--c-tilde", c_tilde, "start margin (default from table)");
  two->add_option("--p0-offset", p0_off, "P0(0) - c_start");
  two->add_option("--p1-offset", p1_off, "P1(0) - c_start");
  two->add_option("--trials", trials, "trial count");
  two->add_option("--t-max", t_max, "per-trial step cap");

  auto* az = lab->add_subcommand("azuma", "supermartingale tail bound");
  add_shared(az, f);
  double c1 = 1.0, c2 = 0.2;
  std::string horizons = "50,100,200,500";
  long long az_trials = 100'000;
  az->add_option("--c1", c1, "step bound");
  az->add_option("--c2", c2, "mean decrease");
  az->add_option("--t", horizons, "horizons, comma separated");
  az->add_option("--trials", az_trials, "trials per horizon");

  auto* bc = lab->add_subcommand("block-check", "trajectory block properties");
  add_shared(bc, f);
  long long bc_blocks = 1000, bc_probed = 64, bc_replicas = 2000;
  bool bc_deep = false;
  bc->add_option("--blocks", bc_blocks, "boundaries to check");
  bc->add_option("--probed", bc_probed, "resampled boundaries");
  bc->add_option("--replicas", bc_replicas, "continuations per probed state");
  bc->add_flag("--deep-gap", bc_deep, "structured states with Q1 << Q0");

  auto* dp = lab->add_subcommand("dprime-scan", "exact delta' drift scan");
  add_shared(dp, f);
  long long dp_configs = 10'000;
  dp->add_option("--configs", dp_configs, "configurations to scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(f);
    if (ens->parsed()) return cmd_ensemble(f, runs);
    if (con->parsed()) {
      for (CLI::App* c : construct_verbs)
        if (c->parsed()) return cmd_construct(c->get_name(), f, cf);
    }
    if (two->parsed()) {
      return cmd_lab_two_chain(f, C, c_min, c_tilde, p0_off, p1_off, trials,
                               t_max);
    }
    if (az->parsed()) return cmd_lab_azuma(f, c1, c2, horizons, az_trials);
    if (bc->parsed())
      return cmd_lab_block_check(f, bc_blocks, bc_probed, bc_replicas, bc_deep);
    if (dp->parsed()) return cmd_lab_dprime_scan(f, dp_configs);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const BadFile& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PreconditionViolated& e) {
    std::cerr << "precondition: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PostconditionFailure& e) {
    std::cerr << "postcondition: " << e.what() << "\n";
    return kExitPostcondition;
  } catch (const Error& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
}

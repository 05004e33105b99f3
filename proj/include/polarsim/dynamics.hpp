#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "polarsim/analysis.hpp"
#include "polarsim/geometry.hpp"
#include "polarsim/rng.hpp"

// The random process (U^t)_t: pair sampling, stepping, stopping, trace
// recording, and replay of explicit interaction schedules.

namespace polarsim {

/// Interaction-pair law: uniform over [n] x [n], or an explicit probability
/// matrix D (row-major, D[i*n+j] = P(j influences i)).
struct PairDistribution {
  bool uniform = true;
  std::vector<double> probs;  // n*n when !uniform
  bool fully_supported = true;

  static PairDistribution uniform_pairs() { return {}; }

  static PairDistribution explicit_matrix(std::size_t n,
                                          std::vector<double> d) {
    if (d.size() != n * n) throw Error("pair distribution must be n x n");
    double sum = 0.0;
    bool full = true;
    for (double p : d) {
      if (p < 0) throw Error("pair probabilities must be >= 0");
      if (p == 0) full = false;
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error("pair probabilities must sum to 1");
    PairDistribution out;
    out.uniform = false;
    out.probs = std::move(d);
    out.fully_supported = full;
    out.cum_.resize(out.probs.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < out.probs.size(); ++k) {
      acc += out.probs[k];
      out.cum_[k] = acc;
    }
    out.cum_.back() = 1.0;
    return out;
  }

  Interaction draw(std::size_t n, Rng& rng) const {
    if (uniform) return {rng.uniform_index(n), rng.uniform_index(n)};
    const double u = rng.uniform();
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    const std::size_t k = std::min<std::size_t>(it - cum_.begin(), cum_.size() - 1);
    return {k / n, k % n};
  }

 private:
  std::vector<double> cum_;
};

struct StopCriteria {
  std::optional<double> polarization_tol;
  struct Activity {
    double eps;
    double eps1;
    long long period;  // checked only at multiples of this
  };
  std::optional<Activity> activity;
};

struct ProcessParams {
  std::size_t n = 2, d = 2;
  UpdateRule rule = UpdateRule::linear(1.0);
  PairDistribution pair_dist;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // trajectory index within an ensemble
  long long max_steps = 1'000'000;
  long long sample_every = 1'000;
  StopCriteria stop;
};

/// Snapshot after t steps. Cluster-relative potentials are absent when no
/// valid partition exists; delta_prime is always defined. `interaction` is
/// the step that produced this state (absent at t = 0). `inactive` is
/// evaluated at the stop criteria thresholds when set, else at
/// (eps_base, eps_base).
struct TraceRecord {
  long long t = 0;
  std::optional<Potentials> potentials;
  double delta_prime = 0;
  std::optional<std::size_t> num_clusters;
  bool inactive = false;
  std::optional<Interaction> interaction;
};

enum class StopReason { polarized, active, budget_exhausted };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::polarized: return "polarized";
    case StopReason::active: return "active";
    case StopReason::budget_exhausted: return "budget_exhausted";
  }
  return "?";
}

/// Draws one interaction from the pair law and applies it.
inline std::pair<Configuration, Interaction> step(const Configuration& u,
                                                  Rng& rng,
                                                  const ProcessParams& params) {
  const Interaction x = params.pair_dist.draw(u.size(), rng);
  return {apply_interaction(u, x, params.rule), x};
}

namespace detail {

inline TraceRecord make_record(const Configuration& u, long long t,
                               std::optional<Interaction> last,
                               double eps0, double eps1) {
  TraceRecord rec;
  rec.t = t;
  rec.interaction = last;
  const CorrelationMatrix a = correlation(u);
  rec.delta_prime = delta_prime(a);
  rec.inactive = is_inactive(a, eps0, eps1).inactive;
  if (auto p = try_clusters(a)) {
    rec.num_clusters = p->count();
    rec.potentials = potentials(a, *p);
  }
  return rec;
}

}  // namespace detail

struct SimulationResult {
  Configuration final;
  std::vector<TraceRecord> trace;
  StopReason reason = StopReason::budget_exhausted;
  long long steps = 0;
};

/// Runs until a stop criterion fires or the budget is exhausted; records a
/// snapshot every sample_every steps plus the final step. Bit-for-bit
/// reproducible from (seed, stream, params, initial configuration).
/// Polarization is tested at record points; activity only at multiples of
/// its own period.
inline SimulationResult simulate(const ProcessParams& params,
                                 const Configuration& init) {
  if (init.size() != params.n || init.dim() != params.d)
    throw Error("initial configuration does not match params");
  if (!params.pair_dist.uniform &&
      params.pair_dist.probs.size() != params.n * params.n)
    throw Error("pair distribution does not match n");
  if (params.max_steps < 0 || params.sample_every <= 0)
    throw Error("need max_steps >= 0 and sample_every > 0");

  double rec_eps0 = epsilon_base(params.d, params.rule.alpha);
  double rec_eps1 = rec_eps0;
  if (params.stop.activity) {
    rec_eps0 = params.stop.activity->eps;
    rec_eps1 = params.stop.activity->eps1;
  }

  Rng rng(params.seed, params.stream);
  SimulationResult out{init, {}, StopReason::budget_exhausted, 0};
  std::optional<Interaction> last;

  auto record = [&](long long t) {
    out.trace.push_back(detail::make_record(out.final, t, last, rec_eps0, rec_eps1));
  };
  auto stop_here = [&](long long t) -> std::optional<StopReason> {
    if (params.stop.polarization_tol &&
        is_polarized(out.final, *params.stop.polarization_tol))
      return StopReason::polarized;
    if (params.stop.activity && t % params.stop.activity->period == 0) {
      const auto& act = *params.stop.activity;
      if (!is_inactive(correlation(out.final), act.eps, act.eps1).inactive)
        return StopReason::active;
    }
    return std::nullopt;
  };

  record(0);
  if (auto r = stop_here(0)) {
    out.reason = *r;
    return out;
  }

  for (long long t = 1; t <= params.max_steps; ++t) {
    const Interaction x = params.pair_dist.draw(params.n, rng);
    last = x;
    if (x.influenced != x.influencer) {
      // distinct rows of the flat buffer never alias
      const double a = clamp_corr(
          dot(out.final.opinion(x.influenced), out.final.opinion(x.influencer)));
      if (!detail::biased_update(out.final.raw_opinion(x.influenced),
                                 out.final.opinion(x.influencer),
                                 params.rule.f(a)))
        throw DegenerateUpdate("update collapsed to the origin");
    }
    out.steps = t;

    const bool at_sample = t % params.sample_every == 0;
    const bool at_activity =
        params.stop.activity && t % params.stop.activity->period == 0;
    if (at_sample) record(t);
    if (at_sample || at_activity) {
      if (auto r = stop_here(t)) {
        if (!at_sample) record(t);
        out.reason = *r;
        return out;
      }
    }
  }
  if (out.trace.empty() || out.trace.back().t != params.max_steps)
    record(params.max_steps);
  return out;
}

struct ScriptedResult {
  Configuration final;
  // One entry per executed step; empty when recording is off or no valid
  // partition existed at that step.
  std::vector<std::optional<Potentials>> potentials;
};

/// Replays an explicit interaction sequence. Deterministic.
inline ScriptedResult run_scripted(const Configuration& init,
                                   std::span<const Interaction> steps,
                                   const UpdateRule& rule,
                                   bool record_potentials = false) {
  ScriptedResult out{init, {}};
  if (record_potentials) out.potentials.reserve(steps.size());
  for (const Interaction& x : steps) {
    if (x.influenced >= init.size() || x.influencer >= init.size())
      throw Error("schedule index out of range");
    if (x.influenced != x.influencer) {
      const double a = clamp_corr(
          dot(out.final.opinion(x.influenced), out.final.opinion(x.influencer)));
      if (!detail::biased_update(out.final.raw_opinion(x.influenced),
                                 out.final.opinion(x.influencer), rule.f(a)))
        throw DegenerateUpdate("update collapsed to the origin");
    }
    if (record_potentials) {
      const CorrelationMatrix a = correlation(out.final);
      if (auto p = try_clusters(a))
        out.potentials.push_back(potentials(a, *p));
      else
        out.potentials.push_back(std::nullopt);
    }
  }
  return out;
}

/// Maximal inactive time segments of a recorded trace.
///
/// An epoch opens at the first record that is (eps, eps)-inactive and
/// closes at the first later record that is not (eps, eps1)-inactive (or at
/// the end of the trace). num_clusters is taken at the opening record.
struct Epoch {
  long long t_start = 0;
  long long t_end = 0;
  std::size_t num_clusters = 0;
};

inline std::vector<Epoch> epochs(const std::vector<TraceRecord>& trace,
                                 double eps, double eps1) {
  if (!(eps > 0) || !(eps1 > 0)) throw Error("thresholds must be positive");
  std::vector<Epoch> out;
  bool open = false;
  for (const TraceRecord& r : trace) {
    const bool has = r.potentials.has_value();
    const bool tight =
        has && r.potentials->delta0 < eps && r.potentials->delta1 < eps;
    const bool loose =
        has && r.potentials->delta0 < eps && r.potentials->delta1 < eps1;
    if (!open) {
      if (tight) {
        out.push_back({r.t, r.t, r.num_clusters.value_or(0)});
        open = true;
      }
    } else {
      out.back().t_end = r.t;
      if (!loose) open = false;
    }
  }
  return out;
}

}  // namespace polarsim

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polarsim/analysis.hpp"
#include "polarsim/constants.hpp"
#include "polarsim/dynamics.hpp"
#include "polarsim/geometry.hpp"
#include "polarsim/sampling.hpp"

// Monte-Carlo laboratory for the abstract probabilistic statements: the
// two-chain escape experiment, the supermartingale tail bound, block-scale
// trajectory checks, and the exact delta' drift.

namespace polarsim {

struct KernelViolation : Error {
  using Error::Error;
};

/// A pluggable step law for the coupled pair (P0, P1). Declared contract
/// (runtime-checked whenever both values sit above the floor):
///   |dP0| <= C, P1' >= min(P0, P1) - C, and |dP1| <= C while
///   P1 <= P0 - C. The conditional-mean conditions are by construction.
struct TwoChainKernel {
  std::string id;
  double C = 1.0;
  std::function<std::pair<double, double>(double p0, double p1, Rng&)> step;
};

/// Near-adversarial default: P0 moves uniformly on {-C, C - 2/C} (mean
/// exactly -1/C); P1 moves uniformly on {+C, -C + 2/C} (mean +1/C) when
/// the drift-up condition P1 <= P0 - C binds, otherwise it takes the worst
/// drop allowed, min(P0, P1) - C, with probability 1/2 and +C otherwise.
inline TwoChainKernel default_two_chain_kernel(double C) {
  if (!(C >= 1.0)) throw Error("kernel needs C >= 1");
  TwoChainKernel k;
  k.id = "default-adversarial";
  k.C = C;
  k.step = [C](double p0, double p1, Rng& rng) {
    const double d0 = rng.uniform() < 0.5 ? -C : C - 2.0 / C;
    double p1n;
    if (p1 <= p0 - C)
      p1n = p1 + (rng.uniform() < 0.5 ? C : -C + 2.0 / C);
    else
      p1n = rng.uniform() < 0.5 ? std::min(p0, p1) - C : p1 + C;
    return std::make_pair(p0 + d0, p1n);
  };
  return k;
}

struct TwoChainParams {
  double C = 2.0;
  double c_min = 0.0;
  double c_tilde = 8.0;         // c_start = c_min + c_tilde
  double p0_offset = 6.0;       // P0(0) = c_start + p0_offset
  double p1_offset = 2.0;       // P1(0) = c_start + p1_offset
  std::optional<TwoChainKernel> kernel;  // default built from C
  long long t_max = 1'000'000;
  long long trials = 10'000;
  std::uint64_t seed = 0;
};

struct TrialOutcome {
  long long t0 = 0;
  enum class Escape { p0_crossed, p1_crossed } via = Escape::p0_crossed;
  bool capped = false;
};

/// Runs trials of the stopped pair until P0 <= c_start or P1 <= c_min.
/// via == p1_crossed exactly when P1(t0) <= c_min. Capped trials report
/// t0 = t_max with the flag set.
inline std::vector<TrialOutcome> run_two_chain(const TwoChainParams& params) {
  if (!(params.p0_offset > 0) || !(params.p1_offset > 0))
    throw Error("initial values must start above c_start");
  const TwoChainKernel kernel =
      params.kernel ? *params.kernel : default_two_chain_kernel(params.C);
  const double c_start = params.c_min + params.c_tilde;
  const double tol = 1e-9;

  std::vector<TrialOutcome> out;
  out.reserve(params.trials);
  for (long long trial = 0; trial < params.trials; ++trial) {
    Rng rng(params.seed, std::uint64_t(trial));
    double p0 = c_start + params.p0_offset;
    double p1 = c_start + params.p1_offset;
    TrialOutcome o;
    o.capped = true;
    o.t0 = params.t_max;
    for (long long t = 0; t < params.t_max; ++t) {
      const auto [p0n, p1n] = kernel.step(p0, p1, rng);
      if (std::abs(p0n - p0) > kernel.C + tol)
        throw KernelViolation("P0 step exceeded declared bound");
      if (p1n < std::min(p0, p1) - kernel.C - tol)
        throw KernelViolation("P1 step fell below its floor");
      if (p1 <= p0 - kernel.C && std::abs(p1n - p1) > kernel.C + tol)
        throw KernelViolation("P1 step exceeded declared bound");
      p0 = p0n;
      p1 = p1n;
      if (p1 <= params.c_min) {
        o = {t + 1, TrialOutcome::Escape::p1_crossed, false};
        break;
      }
      if (p0 <= c_start) {
        o = {t + 1, TrialOutcome::Escape::p0_crossed, false};
        break;
      }
    }
    out.push_back(o);
  }
  return out;
}

struct AzumaParams {
  double c1 = 1.0;
  double c2 = 0.2;
  long long horizon = 500;
  long long trials = 100'000;
  std::uint64_t seed = 0;
  // default: steps uniform on {-c1, c1 - 2 c2}, mean exactly -c2
  std::function<double(Rng&)> step;
};

struct AzumaResult {
  double empirical = 0;  // Pr[X(t) >= X(0) - c2 t / 2]
  double bound = 0;      // exp(-c2^2 t / (32 c1^2))
  long long trials = 0;
};

/// Empirical tail of a bounded process with conditional-mean decrease c2
/// against the analytic supermartingale bound.
inline AzumaResult azuma_tail(const AzumaParams& params) {
  if (params.horizon < 0 || params.trials <= 0)
    throw Error("need horizon >= 0 and trials > 0");
  if (!(params.c1 > 0) || !(params.c2 > 0) || params.c2 > params.c1)
    throw Error("need 0 < c2 <= c1");
  auto step = params.step;
  if (!step) {
    const double c1 = params.c1, c2 = params.c2;
    step = [c1, c2](Rng& rng) {
      return rng.uniform() < 0.5 ? -c1 : c1 - 2.0 * c2;
    };
  }
  long long hits = 0;
  const double cut = -params.c2 * double(params.horizon) / 2.0;
  for (long long trial = 0; trial < params.trials; ++trial) {
    Rng rng(params.seed, std::uint64_t(trial));
    double x = 0.0;
    for (long long t = 0; t < params.horizon; ++t) x += step(rng);
    if (x >= cut) ++hits;
  }
  AzumaResult r;
  r.trials = params.trials;
  r.empirical = double(hits) / double(params.trials);
  r.bound = std::exp(-params.c2 * params.c2 * double(params.horizon) /
                     (32.0 * params.c1 * params.c1));
  return r;
}

// ---------------------------------------------------------------------------
// Block-scale trajectory checks.

struct BlockCheckParams {
  std::size_t n = 6, d = 3;
  double alpha = 1.0;
  LabConstants table;           // thresholds (eps, eps1, T, C)
  long long blocks = 1'000;     // boundaries receiving deterministic checks
  long long probed_states = 64; // boundaries receiving resampled-drift checks
  long long replicas = 2'000;   // continuations per probed state
  std::uint64_t seed = 0;
  // Structured states with Q1 << Q0 - C, so the conditional P1 laws bind.
  // Double precision cannot represent delta1 below ~1e-8 (1 - |A| hits the
  // resolution of 1.0), so these states use a wider delta1 eligibility
  // scale (still far inside base inactivity) while delta0 sits 60 orders
  // of magnitude lower on exactly-zero cross supports.
  bool deep_gap_states = false;
};

struct BlockViolation {
  long long trajectory = 0;
  long long block = 0;
  std::string kind;
  double lhs = 0, rhs = 0;
  std::vector<double> state;  // flattened configuration at the boundary
};

struct BlockReport {
  long long boundaries_checked = 0;
  long long p1_bound_binding = 0;  // boundaries where P1 <= P0 - C held
  std::vector<BlockViolation> violations;
  long long probed = 0;
  long long p0_drift_ok = 0;  // mean P0 decreased by >= 1/C within 4 sigma
  long long p1_probed = 0;
  long long p1_drift_ok = 0;  // mean P1 increased by >= 1/C within 4 sigma
};

namespace detail {

// Configuration with two clusters on disjoint coordinate axes and a planted
// cross-correlation of exactly `cross`; within-block scatter ~ spread.
// Keeps delta0 controllable down to the subnormal range, which is how the
// deep-gap (P1 <= P0 - C) regime is reached.
inline Configuration axis_cluster_config(std::size_t n, std::size_t d,
                                         double cross, double spread,
                                         Rng& rng) {
  if (d < 4 || n < 4) throw Error("axis clusters need n, d >= 4");
  const std::size_t half = n / 2;
  std::vector<Vec> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(d, 0.0);
    const bool first = i < half;
    // block axes: {0, 2} for the first block, {1, 3} for the second
    const std::size_t main_axis = first ? 0 : 1;
    const std::size_t side_axis = first ? 2 : 3;
    v[main_axis] = 1.0;
    v[side_axis] = spread * (2.0 * rng.uniform() - 1.0);
    if (i == half) v[0] = cross;  // the only cross-support component
    const double inv = 1.0 / norm(v);
    for (double& x : v) x *= inv;
    rows.push_back(std::move(v));
  }
  return Configuration::from_rows(std::move(rows), true);
}

inline std::optional<Potentials> partition_potentials(const Configuration& u) {
  const CorrelationMatrix a = correlation(u);
  if (auto p = try_clusters(a)) return potentials(a, *p);
  return std::nullopt;
}

}  // namespace detail

/// Simulates trajectories from sampled two-cluster inactive starts and
/// checks, at every block boundary where the state is (eps, eps)-inactive
/// with Q0 finite: the P0 step bound, the P1 floor, the conditional P1
/// step bound, inactivity of every intermediate step, and (on a probed
/// subset) the signs of the conditional block drifts via frozen-state
/// resampling with a 4 sigma allowance. Violations are reported, not
/// thrown.
inline BlockReport verify_block_properties(const BlockCheckParams& params) {
  const LabConstants& tb = params.table;
  const std::size_t dim_used =
      params.deep_gap_states ? std::max<std::size_t>(params.d, 4) : params.d;
  const double eps_b = epsilon_base(dim_used, params.alpha);
  const UpdateRule rule = UpdateRule::linear(params.alpha);
  BlockReport report;

  const long long blocks_per_traj = 16;
  const long long probe_every =
      params.deep_gap_states
          ? 1
          : std::max<long long>(1, params.blocks /
                                       std::max<long long>(params.probed_states, 1));
  // delta1 eligibility: the table scale normally; a representable scale
  // (well inside base inactivity, where delta1 cannot grow) for the
  // deep-gap regime
  const double elig_eps1 =
      params.deep_gap_states ? std::min(1e-3, eps_b / 4.0) : tb.eps;

  long long traj = 0;
  while (report.boundaries_checked < params.blocks) {
    Rng init_rng(params.seed, 0x10000u + std::uint64_t(traj));
    Configuration cur = [&]() {
      if (params.deep_gap_states) {
        const double spread = elig_eps1 / 2.0;
        const double cross = spread * std::exp(-(tb.C + 4.0));
        return detail::axis_cluster_config(params.n, dim_used, cross, spread,
                                           init_rng);
      }
      InactiveSpec spec;
      spec.n = params.n;
      spec.d = params.d;
      spec.k = 2;
      spec.delta0_max = tb.eps / 2.0;
      spec.delta1_max = tb.eps / 2.0;
      return sample_inactive(spec, init_rng).config;
    }();

    Rng rng(params.seed, 0x20000u + std::uint64_t(traj));
    for (long long blk = 0;
         blk < blocks_per_traj && report.boundaries_checked < params.blocks;
         ++blk) {
      const auto pot = detail::partition_potentials(cur);
      const bool eligible = pot && pot->delta0 < tb.eps &&
                            pot->delta1 < elig_eps1 && pot->delta0 > 0.0;
      if (!eligible) break;  // left the regime; start a fresh trajectory

      const double p0 = pot->q0;
      const double p1 = pot->q1;
      const bool p1_binding = p1 <= p0 - tb.C;
      if (p1_binding) report.p1_bound_binding++;

      auto violation = [&](const std::string& kind, double lhs, double rhs) {
        report.violations.push_back({traj, blk, kind, lhs, rhs,
                                     cur.data()});
      };

      // one block of T steps, checking inactivity at every intermediate step
      Configuration next = cur;
      {
        ProcessParams pp;
        pp.n = params.n;
        pp.d = cur.dim();
        pp.rule = rule;
        pp.seed = params.seed;
        pp.stream = 0x30000u + std::uint64_t(traj) * 131 + std::uint64_t(blk);
        Rng step_rng(pp.seed, pp.stream);
        for (long long t = 0; t < tb.T; ++t) {
          const Interaction x = pp.pair_dist.draw(params.n, step_rng);
          next = apply_interaction(next, x, rule);
          if (!is_inactive(correlation(next), eps_b, eps_b).inactive)
            violation("intermediate_inactivity", double(t), 0.0);
        }
      }
      const auto pot_next = detail::partition_potentials(next);
      if (!pot_next) {
        violation("partition_lost", 0.0, 0.0);
        report.boundaries_checked++;
        break;
      }
      if (std::abs(pot_next->q0 - p0) > tb.C)
        violation("p0_step_bound", std::abs(pot_next->q0 - p0), tb.C);
      if (pot_next->q1 < std::min(p0, p1) - tb.C)
        violation("p1_floor", pot_next->q1, std::min(p0, p1) - tb.C);
      if (p1_binding && std::abs(pot_next->q1 - p1) > tb.C)
        violation("p1_step_bound", std::abs(pot_next->q1 - p1), tb.C);

      // frozen-state resampling on the probed subset; deep-gap mode probes
      // exactly the boundaries where the P1 laws bind
      const bool probe_here =
          params.deep_gap_states
              ? p1_binding
              : report.boundaries_checked % probe_every == 0;
      if (probe_here && report.probed < params.probed_states) {
        report.probed++;
        double sum0 = 0, sumsq0 = 0, sum1 = 0, sumsq1 = 0;
        long long ok1 = 0;
        for (long long r = 0; r < params.replicas; ++r) {
          Configuration c = cur;
          Rng rrng(params.seed,
                   0x40000u + std::uint64_t(traj) * 1000003 + std::uint64_t(r));
          PairDistribution pd;
          for (long long t = 0; t < tb.T; ++t)
            c = apply_interaction(c, pd.draw(params.n, rrng), rule);
          const auto rp = detail::partition_potentials(c);
          if (!rp) continue;
          sum0 += rp->q0;
          sumsq0 += rp->q0 * rp->q0;
          if (std::isfinite(rp->q1)) {
            sum1 += rp->q1;
            sumsq1 += rp->q1 * rp->q1;
            ok1++;
          }
        }
        const double m0 = sum0 / double(params.replicas);
        const double var0 =
            std::max(0.0, sumsq0 / double(params.replicas) - m0 * m0);
        const double se0 = std::sqrt(var0 / double(params.replicas));
        if (m0 <= p0 - 1.0 / tb.C + 4.0 * se0) report.p0_drift_ok++;
        if (p1_binding && ok1 > 0) {
          report.p1_probed++;
          const double m1 = sum1 / double(ok1);
          const double var1 = std::max(0.0, sumsq1 / double(ok1) - m1 * m1);
          const double se1 = std::sqrt(var1 / double(ok1));
          if (m1 >= p1 + 1.0 / tb.C - 4.0 * se1) report.p1_drift_ok++;
        }
      }

      report.boundaries_checked++;
      cur = std::move(next);
    }
    ++traj;
    if (traj > params.blocks * 4 + 64) break;  // sampling fail-safe
  }
  return report;
}

// ---------------------------------------------------------------------------
// delta' drift.

/// Exact conditional drift E[delta'(t+1) | U] - delta'(U) under the
/// uniform pair law and the linear rule, by enumerating all n^2
/// interactions through the closed-form row update. No sampling error.
inline double delta_prime_drift_exact(const Configuration& u, double alpha) {
  const CorrelationMatrix a = correlation(u);
  const std::size_t n = u.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ell = 0; ell < n; ++ell) {
      if (i == ell) continue;  // exact fixed point, zero contribution
      const double ail = a(i, ell);
      const double denom2 = 1.0 + (2.0 * alpha + alpha * alpha) * ail * ail;
      double delta = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double nv = (a(i, j) + alpha * ail * a(j, ell));
        delta += nv * nv / denom2 - a(i, j) * a(i, j);
      }
      total += 2.0 * delta;  // row and column i change together
    }
  }
  return total / double(n * n);
}

}  // namespace polarsim

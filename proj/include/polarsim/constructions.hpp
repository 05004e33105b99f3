#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polarsim/analysis.hpp"
#include "polarsim/constants.hpp"
#include "polarsim/dynamics.hpp"
#include "polarsim/geometry.hpp"

// Interaction schedules realized from the constructive arguments: driving a
// configuration to inactivity, establishing cross-cluster consistency,
// amplifying the cross-block minimum, tightening a cluster, and collapsing
// two clusters into one.

namespace polarsim {

struct PreconditionViolated : Error {
  using Error::Error;
};
struct NonConvergent : Error {
  using Error::Error;
};

enum class Provenance {
  path_to_inactive,
  reach_consistency,
  increase_delta,
  tighten,
  collapse,
  random,
};

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::path_to_inactive: return "path_to_inactive";
    case Provenance::reach_consistency: return "reach_consistency";
    case Provenance::increase_delta: return "increase_delta";
    case Provenance::tighten: return "tighten";
    case Provenance::collapse: return "collapse";
    case Provenance::random: return "random";
  }
  return "?";
}

/// An ordered list of interactions plus how it was produced. Annotations,
/// when present, carry one note per step (anchor ids, phases).
struct Schedule {
  std::vector<Interaction> steps;
  Provenance provenance = Provenance::random;
  std::vector<std::string> annotations;

  void push(Interaction x, std::string note = {}) {
    steps.push_back(x);
    annotations.push_back(std::move(note));
  }
  std::size_t size() const { return steps.size(); }
};

inline ScriptedResult run_scripted(const Configuration& init,
                                   const Schedule& s, const UpdateRule& rule,
                                   bool record_potentials = false) {
  return run_scripted(init, std::span<const Interaction>(s.steps), rule,
                      record_potentials);
}

/// One application of the self-reinforcement map: the correlation of an
/// influenced agent with its influencer.
inline double self_reinforcement(double x, double alpha) {
  return (1.0 + alpha) * x /
         std::sqrt(1.0 + (2.0 * alpha + alpha * alpha) * x * x);
}

/// Smallest k such that iterating the self-reinforcement map k times from
/// x0 reaches at least `target`. x0 = 0 is a fixed point and never
/// converges.
inline long long k0_needed(double x0, double target, double alpha) {
  if (!(target < 1.0) || x0 < 0 || x0 > 1.0)
    throw Error("need 0 <= x0 <= 1 and target < 1");
  if (!(alpha > 0)) throw Error("alpha must be positive");
  if (x0 >= target) return 0;
  if (x0 == 0.0) throw NonConvergent("x0 = 0 is a fixed point");
  double x = x0;
  long long k = 0;
  while (x < target) {
    x = self_reinforcement(x, alpha);
    ++k;
    if (k > 1'000'000) throw NonConvergent("reinforcement did not reach target");
  }
  return k;
}

namespace detail {

// Recursive anchor procedure over the agents in `subset`, reading only the
// initial correlations (anchors never move, and processed agents are
// excluded from the recursion, so the initial matrix stays valid).
inline void anchor_schedule(const CorrelationMatrix& a,
                            std::vector<std::size_t> subset, double eps,
                            long long k0, Schedule& out) {
  std::size_t block = 0;
  while (!subset.empty()) {
    const std::size_t anchor = subset.front();
    std::vector<std::size_t> members, rest;
    members.push_back(anchor);
    for (std::size_t idx = 1; idx < subset.size(); ++idx) {
      const std::size_t i = subset[idx];
      if (std::abs(a(anchor, i)) >= eps / 64.0)
        members.push_back(i);
      else
        rest.push_back(i);
    }
    const std::string note =
        "anchor " + std::to_string(anchor) + " block " + std::to_string(block);
    for (std::size_t i : members)
      if (i != anchor)
        for (long long r = 0; r < k0; ++r) out.push({i, anchor}, note);
    subset = std::move(rest);
    ++block;
  }
}

}  // namespace detail

/// Anchor construction: executing the returned schedule makes the
/// configuration (eps, eps)-inactive, with each block led by an unmoved
/// anchor whose correlation to its members exceeds 1 - (eps/64)^2.
inline Schedule path_to_inactive(const Configuration& u, double eps,
                                 double alpha) {
  if (!(eps > 0) || eps > epsilon_base(u.dim(), alpha))
    throw PreconditionViolated("need 0 < eps <= eps_base");
  const double seed = eps / 64.0;
  const double target = 1.0 - seed * seed;
  const long long k0 = k0_needed(seed, target, alpha);
  Schedule s;
  s.provenance = Provenance::path_to_inactive;
  std::vector<std::size_t> all(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) all[i] = i;
  detail::anchor_schedule(correlation(u), std::move(all), eps, k0, s);
  return s;
}

enum class ConsistencyMode { paper_worst_case, adaptive };

/// Makes blocks a and b consistent: the cross pair (i0, j0) of largest
/// magnitude leads; i0 first pulls its own block together k0 times per
/// member, then j0 pulls block b. Worst-case mode uses the fixed counts
/// (k0, k1) padded to n(k0+k1) steps with (0,0) no-ops; adaptive mode
/// checks consistency after block-b sweeps and stops early (empty schedule
/// when already consistent). Signs need no special handling here: the
/// sequence is sign-blind and consistency of the end state is checked in
/// the frame of signs relative to i0 and j0.
inline Schedule reach_consistency(const Configuration& u, std::size_t a,
                                  std::size_t b, ConsistencyMode mode,
                                  double alpha) {
  const auto cc = make_construction_constants(u.size(), u.dim(), alpha);
  const CorrelationMatrix m0 = correlation(u);
  const ClusterPartition p = clusters(m0);
  if (a == b || a >= p.count() || b >= p.count())
    throw PreconditionViolated("need two distinct valid blocks");

  // cross pair of largest magnitude between the two blocks
  std::size_t i0 = 0, j0 = 0;
  double best = 0.0;
  for (std::size_t i : p.blocks[a])
    for (std::size_t j : p.blocks[b])
      if (std::abs(m0(i, j)) > best) {
        best = std::abs(m0(i, j));
        i0 = i;
        j0 = j;
      }
  if (best == 0.0) throw NoCrossPair("no nonzero correlation between blocks");

  Schedule s;
  s.provenance = Provenance::reach_consistency;

  if (mode == ConsistencyMode::adaptive &&
      is_consistent(m0, p, a, b, cc.c_cons).consistent)
    return s;

  const std::string ph1 = "phase1 anchor " + std::to_string(i0);
  for (std::size_t i : p.blocks[a])
    if (i != i0)
      for (long long r = 0; r < cc.k0; ++r) s.push({i, i0}, ph1);

  const std::string ph2 = "phase2 anchor " + std::to_string(j0);
  if (mode == ConsistencyMode::paper_worst_case) {
    for (std::size_t j : p.blocks[b])
      if (j != j0)
        for (long long r = 0; r < cc.k1; ++r) s.push({j, j0}, ph2);
    const long long total =
        static_cast<long long>(u.size()) * (cc.k0 + cc.k1);
    while (static_cast<long long>(s.size()) < total) s.push({0, 0}, "pad");
    return s;
  }

  // adaptive: sweep j0 over block b, re-checking after each sweep
  const UpdateRule rule = UpdateRule::linear(alpha);
  Configuration cur = run_scripted(u, s, rule).final;
  const long long max_sweeps = std::min<long long>(cc.k1, 1'000'000);
  for (long long sweep = 0; sweep < max_sweeps; ++sweep) {
    {
      const CorrelationMatrix m = correlation(cur);
      if (is_consistent(m, p, a, b, cc.c_cons).consistent) break;
    }
    Schedule delta;
    for (std::size_t j : p.blocks[b])
      if (j != j0) delta.push({j, j0}, ph2);
    if (delta.steps.empty()) break;  // singleton block b
    cur = run_scripted(cur, delta, rule).final;
    for (std::size_t k = 0; k < delta.size(); ++k)
      s.push(delta.steps[k], delta.annotations[k]);
  }
  return s;
}

/// All cross pairs between blocks a and b, both directions, cycled and
/// padded to exactly n^2 interactions. On a consistent configuration no
/// cross magnitude ever decreases along it and each gets boosted directly
/// at least once.
inline Schedule increase_delta_schedule(const ClusterPartition& p,
                                        std::size_t a, std::size_t b) {
  if (a == b || a >= p.count() || b >= p.count())
    throw PreconditionViolated("need two distinct valid blocks");
  const std::size_t n = p.agents();
  std::vector<Interaction> pairs;
  for (std::size_t i : p.blocks[a])
    for (std::size_t j : p.blocks[b]) {
      pairs.push_back({j, i});
      pairs.push_back({i, j});
    }
  Schedule s;
  s.provenance = Provenance::increase_delta;
  for (std::size_t k = 0; k < n * n; ++k)
    s.push(pairs[k % pairs.size()]);
  return s;
}

/// Within-block round-robin: each unordered pair once, lower index
/// influences higher. Requires all within-block correlations above
/// sqrt(2)/2; contraction of max(1-|A|) is measured by the caller.
inline Schedule tighten_cluster_schedule(const CorrelationMatrix& m,
                                         const ClusterPartition& p,
                                         std::size_t a) {
  if (a >= p.count()) throw PreconditionViolated("no such block");
  const auto& blk = p.blocks[a];
  if (blk.size() < 2) throw PreconditionViolated("block size must be >= 2");
  const double lo = std::sqrt(2.0) / 2.0;
  for (std::size_t x = 0; x < blk.size(); ++x)
    for (std::size_t y = 0; y < x; ++y)
      if (!(std::abs(m(blk[x], blk[y])) > lo))
        throw PreconditionViolated("within-block |A| must exceed sqrt(2)/2");
  Schedule s;
  s.provenance = Provenance::tighten;
  for (std::size_t x = 0; x < blk.size(); ++x)
    for (std::size_t y = x + 1; y < blk.size(); ++y)
      s.push({blk[y], blk[x]});
  return s;
}

/// Merges the clusters of i0 and j0: members of block a too orthogonal to
/// j0 are first nudged by i0, then j0 absorbs everything correlated at
/// least eps' = min(alpha eps / (4(1+alpha)), eps/64), and the remaining
/// agents are re-anchored. The result is (eps, eps)-inactive with strictly
/// fewer clusters.
inline Schedule collapse_clusters(const Configuration& u, double eps,
                                  std::size_t a, std::size_t b,
                                  std::size_t i0, std::size_t j0,
                                  double alpha) {
  const double eps_b = epsilon_base(u.dim(), alpha);
  if (!(eps > 0) || eps > eps_b)
    throw PreconditionViolated("need 0 < eps <= eps_base");
  const CorrelationMatrix m = correlation(u);
  if (!is_inactive(m, eps_b, eps_b).inactive)
    throw PreconditionViolated("configuration is not base-inactive");
  const ClusterPartition p = clusters(m);
  if (a == b || a >= p.count() || b >= p.count())
    throw PreconditionViolated("need two distinct valid blocks");
  if (p.block_of[i0] != a || p.block_of[j0] != b)
    throw PreconditionViolated("i0, j0 must lie in blocks a, b");
  if (std::abs(m(i0, j0)) < eps)
    throw PreconditionViolated("|A(i0,j0)| must be at least eps");

  Schedule s;
  s.provenance = Provenance::collapse;

  // phase 1: one nudge from i0 for members of a nearly orthogonal to j0;
  // their new correlation with j0 follows the closed form exactly
  const double denom_pow = 2.0 * alpha + alpha * alpha;
  std::vector<double> corr_j0(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) corr_j0[i] = m(i, j0);
  const std::string ph1 = "phase1 anchor " + std::to_string(i0);
  for (std::size_t i : p.blocks[a]) {
    if (i == i0) continue;
    if (std::abs(m(i, j0)) < alpha * eps / 4.0) {
      s.push({i, i0}, ph1);
      const double ai = m(i, i0);
      corr_j0[i] = (m(i, j0) + alpha * ai * m(i0, j0)) /
                   std::sqrt(1.0 + denom_pow * ai * ai);
    }
  }

  // phase 2: j0 absorbs everything already noticeably correlated with it
  const double eps_prime =
      std::min(alpha * eps / (4.0 * (1.0 + alpha)), eps / 64.0);
  const double target = 1.0 - (eps / 64.0) * (eps / 64.0);
  const long long k0 = k0_needed(std::min(eps_prime, target), target, alpha);
  std::vector<std::size_t> absorbed, rest;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (i != j0 && std::abs(corr_j0[i]) >= eps_prime)
      absorbed.push_back(i);
    else if (i != j0)
      rest.push_back(i);
  }
  const std::string ph2 = "phase2 anchor " + std::to_string(j0);
  for (std::size_t i : absorbed)
    for (long long r = 0; r < k0; ++r) s.push({i, j0}, ph2);

  // phase 3: re-anchor the untouched remainder; their mutual correlations
  // are still the initial ones
  detail::anchor_schedule(m, std::move(rest), eps, k0, s);
  return s;
}

}  // namespace polarsim

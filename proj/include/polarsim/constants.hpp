#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "polarsim/analysis.hpp"

// Derived constants used by the schedule builders and the trajectory
// checks. Each value carries its one-line derivation; values marked
// "calibrated" exist because the underlying statement only asserts that
// suitable constants exist.

namespace polarsim {

/// Constants behind the constructive schedules, as functions of (n, alpha)
/// and the inactivity scale eps_base(d, alpha).
struct ConstructionConstants {
  std::size_t n = 0, d = 0;
  double alpha = 0;

  double eps_base = 0;  // epsilon_base(d, alpha)

  // One-step delta0 ratio bound: delta0(t+1)/delta0(t) lies in
  // [1/(2(1+alpha)), 1+alpha], so 2(1+alpha) bounds the ratio both ways.
  double c_step = 0;

  // Iterations of x -> (1+a)x / sqrt(1+(2a+a^2)x^2) that lift any
  // correlation by the factor needed in the consistency construction:
  // ceil(2(1+alpha)/alpha) + 1.
  long long k0 = 0;

  // Worst-case per-agent repetition count in the second consistency phase:
  // ceil(4(1+alpha)^2 c_step^k0 / alpha^2) + 1.
  long long k1 = 0;

  // Consistency magnitude floor alpha^2 / (4(1+alpha)^2 c_step^K) with
  // K = n(k0+k1), evaluated in log space; underflows to DBL_MIN for any
  // realistic K, which reduces the floor check to "nonzero".
  double c_cons = 0;

  // Guaranteed growth per direct cross hit while |A| <= eps_base:
  // (1+alpha)/sqrt(1+(2 alpha+alpha^2) eps_base^2) - 1.
  double c_adv = 0;

  long long t0 = 0;  // n choose 2, the within-cluster round-robin length

  // One-step Q1 floor: Q1(t+1) >= min(Q0, Q1) - k_alpha with
  // k_alpha = ln sqrt(1+2 alpha+alpha^2/2), from
  //   within influencer: delta1'^2 <= ((1+2a)/(1+a)) delta1^2
  //   cross  influencer: delta1'^2 <= delta1^2 + (2a+a^2/2) delta0^2.
  double k_alpha = 0;

  // One-step delta1 ratio bound when delta1 >= c_ratio * delta0 > 0:
  // delta1(t+1)/delta1(t) in [1/kprime_alpha, kprime_alpha], where
  // kprime_alpha = max(e^{k_alpha}, sqrt(2), 2 sqrt(1+a),
  //                    sqrt(8(2a+a^2)(1+a)))
  // collects the subcases (unchanged pair / cross influencer / aligned
  // within influencer / loose within influencer).
  double kprime_alpha = 0;
  double c_ratio = 0;  // max(1, sqrt(2 alpha))
};

inline ConstructionConstants make_construction_constants(std::size_t n,
                                                         std::size_t d,
                                                         double alpha) {
  if (n < 2 || d < 2 || !(alpha > 0)) throw Error("need n,d >= 2, alpha > 0");
  ConstructionConstants c;
  c.n = n;
  c.d = d;
  c.alpha = alpha;
  c.eps_base = epsilon_base(d, alpha);
  c.c_step = 2.0 * (1.0 + alpha);
  c.k0 = static_cast<long long>(std::ceil(2.0 * (1.0 + alpha) / alpha)) + 1;
  const double k1_raw =
      4.0 * (1.0 + alpha) * (1.0 + alpha) * std::pow(c.c_step, double(c.k0)) /
      (alpha * alpha);
  c.k1 = k1_raw > 9e18 ? std::numeric_limits<long long>::max()
                       : static_cast<long long>(std::ceil(k1_raw)) + 1;
  const double total_k = double(n) * (double(c.k0) + double(c.k1));
  const double log_c_cons = 2.0 * std::log(alpha) -
                            std::log(4.0 * (1.0 + alpha) * (1.0 + alpha)) -
                            total_k * std::log(c.c_step);
  c.c_cons = log_c_cons < std::log(std::numeric_limits<double>::min())
                 ? std::numeric_limits<double>::min()
                 : std::exp(log_c_cons);
  c.c_adv = (1.0 + alpha) / std::sqrt(1.0 + (2.0 * alpha + alpha * alpha) *
                                                c.eps_base * c.eps_base) -
            1.0;
  c.t0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const double growth2 = 1.0 + 2.0 * alpha + alpha * alpha / 2.0;
  c.k_alpha = 0.5 * std::log(growth2);
  c.kprime_alpha = std::max(
      {std::sqrt(growth2), std::sqrt(2.0), 2.0 * std::sqrt(1.0 + alpha),
       std::sqrt(8.0 * (2.0 * alpha + alpha * alpha) * (1.0 + alpha))});
  c.c_ratio = std::max(1.0, std::sqrt(2.0 * alpha));
  return c;
}

/// Block-scale table for the sampled-trajectory checks and the escape
/// experiment. T and the sampling scales are calibrated; C follows the
/// block composition C = 2 C' T with C' the one-step movement bound.
struct LabConstants {
  std::size_t n = 0, d = 0;
  double alpha = 0;

  long long T = 0;      // block length; calibrated to n^2 so that any fixed
                        // ordered pair interacts within a block with
                        // probability ~ 1 - 1/e
  double C = 0;         // 2 * max(ln c_step, k_alpha, ln kprime_alpha) * T
  double eps = 0;       // start/escape inactivity scale, calibrated as
                        // eps_base * (1+alpha)^-20: delta0 grows by at most
                        // (1+alpha) per hit of a pair, and 20 hits of one
                        // pair inside a T-step block has probability ~1e-15,
                        // so trajectories stay (eps_base, eps_base)-inactive
                        // across a block
  double eps1 = 0;      // within-cluster failure threshold:
                        // sqrt(eps_base)/2, well above eps
  double c_tilde = 0;   // two-chain start margin, calibrated multiple of C
};

inline LabConstants make_lab_constants(std::size_t n, std::size_t d,
                                       double alpha) {
  const ConstructionConstants cc = make_construction_constants(n, d, alpha);
  LabConstants lc;
  lc.n = n;
  lc.d = d;
  lc.alpha = alpha;
  lc.T = static_cast<long long>(n) * static_cast<long long>(n);
  const double cprime = std::max(
      {std::log(cc.c_step), cc.k_alpha, std::log(cc.kprime_alpha)});
  lc.C = 2.0 * cprime * double(lc.T);
  lc.eps = cc.eps_base * std::pow(1.0 + alpha, -20.0);
  lc.eps1 = std::sqrt(cc.eps_base) / 2.0;
  lc.c_tilde = 4.0 * lc.C;
  return lc;
}

/// Wilson score interval for a binomial proportion.
struct WilsonInterval {
  double center = 0;
  double halfwidth = 0;
  double lo() const { return center - halfwidth; }
  double hi() const { return center + halfwidth; }
};

inline WilsonInterval wilson(long long successes, long long trials,
                             double z = 1.0) {
  if (trials <= 0) throw Error("wilson needs trials > 0");
  const double nn = double(trials);
  const double p = double(successes) / nn;
  const double z2 = z * z;
  WilsonInterval w;
  w.center = (p + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
  w.halfwidth = z *
                std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) /
                (1.0 + z2 / nn);
  return w;
}

}  // namespace polarsim

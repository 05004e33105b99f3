#pragma once

#include <cstddef>
#include <cmath>
#include <vector>

#include "polarsim/analysis.hpp"
#include "polarsim/geometry.hpp"
#include "polarsim/rng.hpp"

// Initial-configuration samplers: uniform on the sphere, antipodally
// symmetrized wrappers, and structured near-inactive configurations used
// by the property checks.

namespace polarsim {

inline Vec random_unit_vector(std::size_t d, Rng& rng) {
  Vec v(d);
  while (true) {
    double n2 = 0.0;
    for (double& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
    if (n2 > 1e-12) {
      const double inv = 1.0 / std::sqrt(n2);
      for (double& x : v) x *= inv;
      return v;
    }
  }
}

/// n i.i.d. opinions, uniform on the unit sphere (normalized Gaussians).
inline Configuration sample_uniform_sphere(std::size_t n, std::size_t d,
                                           Rng& rng) {
  if (n < 2 || d < 2) throw Error("need n >= 2 and d >= 2");
  std::vector<Vec> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rows.push_back(random_unit_vector(d, rng));
  return Configuration::from_rows(std::move(rows), /*renormalize=*/true);
}

/// Wraps any opinion sampler into one symmetric around 0: the base draw is
/// negated with probability 1/2.
template <class Sampler>
Configuration sample_symmetrized(std::size_t n, std::size_t d, Rng& rng,
                                 Sampler&& base) {
  if (n < 2 || d < 2) throw Error("need n >= 2 and d >= 2");
  std::vector<Vec> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec v = base(d, rng);
    if (rng.uniform() < 0.5)
      for (double& x : v) x = -x;
    rows.push_back(std::move(v));
  }
  return Configuration::from_rows(std::move(rows), /*renormalize=*/true);
}

namespace detail {

// First k columns of a random orthonormal d-frame (modified Gram-Schmidt
// on Gaussian vectors).
inline std::vector<Vec> random_frame(std::size_t d, std::size_t k, Rng& rng) {
  std::vector<Vec> frame;
  frame.reserve(k);
  while (frame.size() < k) {
    Vec v(d);
    for (double& x : v) x = rng.normal();
    for (const Vec& f : frame) {
      const double p = dot(v, f);
      for (std::size_t t = 0; t < d; ++t) v[t] -= p * f[t];
    }
    const double n2 = dot(v, v);
    if (n2 < 1e-8) continue;  // resample near-dependent draw
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
    frame.push_back(std::move(v));
  }
  return frame;
}

inline Vec perturbed_unit(const Vec& center, double radius, Rng& rng) {
  Vec v = center;
  for (double& x : v) x += radius * rng.normal() / std::sqrt(double(v.size()));
  const double inv = 1.0 / norm(v);
  for (double& x : v) x *= inv;
  return v;
}

// Perturbation kept orthogonal to `avoid`, so member scatter does not leak
// into cross-block correlations. Falls back to the raw center when the
// projected direction degenerates (k = d).
inline Vec perturbed_unit_avoiding(const Vec& center,
                                   const std::vector<Vec>& avoid,
                                   double radius, Rng& rng) {
  const std::size_t d = center.size();
  Vec eta(d);
  for (double& x : eta) x = radius * rng.normal() / std::sqrt(double(d));
  for (const Vec& w : avoid) {
    const double p = dot(eta, w);
    for (std::size_t t = 0; t < d; ++t) eta[t] -= p * w[t];
  }
  Vec v = center;
  for (std::size_t t = 0; t < d; ++t) v[t] += eta[t];
  const double inv = 1.0 / norm(v);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace detail

/// Generator for near-inactive configurations: k near-orthogonal cluster
/// centers, members scattered around +-center.
///
/// cross_corr > 0 plants a definite correlation of that size between the
/// centers of blocks 0 and 1, which makes the sampled configuration
/// (0,1)-consistent by construction (all other cross correlations stay an
/// order of magnitude smaller).
struct InactiveSpec {
  std::size_t n = 6, d = 3, k = 2;
  double delta0_max = 1e-3;   // cross-block |A| ceiling
  double delta1_max = 1e-3;   // within-block sqrt(1-|A|) ceiling
  double cross_corr = 0.0;    // definite |corr| seeded between blocks 0 and 1
  bool sign_flips = true;     // members around -center as well as +center
  std::vector<std::size_t> sizes;  // optional explicit block sizes
};

struct InactiveSample {
  Configuration config;
  ClusterPartition partition;
};

inline InactiveSample sample_inactive(const InactiveSpec& spec, Rng& rng) {
  if (spec.k < 1 || spec.k > spec.d || spec.k > spec.n)
    throw Error("need 1 <= k <= min(n, d)");
  if (spec.cross_corr > 0 && spec.k < 2)
    throw Error("cross_corr needs at least two blocks");

  std::vector<std::size_t> sizes = spec.sizes;
  if (sizes.empty()) {
    sizes.assign(spec.k, 1);
    for (std::size_t extra = spec.n - spec.k; extra > 0; --extra)
      sizes[rng.uniform_index(spec.k)]++;
  }

  double center_jitter = spec.delta0_max / 4.0;
  double scatter = spec.delta1_max / 2.0;
  if (spec.cross_corr > 0) {
    // keep the planted correlation dominant over jitter and scatter noise
    center_jitter = std::min(center_jitter, spec.cross_corr / 16.0);
    scatter = std::min(scatter, spec.cross_corr / 16.0);
  }

  for (int attempt = 0; attempt < 64; ++attempt) {
    auto frame = detail::random_frame(spec.d, spec.k, rng);
    std::vector<Vec> centers;
    centers.reserve(spec.k);
    for (std::size_t a = 0; a < spec.k; ++a)
      centers.push_back(detail::perturbed_unit(frame[a], center_jitter, rng));
    if (spec.cross_corr > 0) {
      // c1 <- normalize(sqrt(1-g^2) c1 + g c0), so <c0, c1> ~ cross_corr
      const double g = spec.cross_corr * (rng.uniform() < 0.5 ? 1.0 : -1.0);
      Vec mixed(spec.d);
      const double w = std::sqrt(1.0 - g * g);
      for (std::size_t t = 0; t < spec.d; ++t)
        mixed[t] = w * centers[1][t] + g * centers[0][t];
      const double inv = 1.0 / norm(mixed);
      for (double& x : mixed) x *= inv;
      centers[1] = std::move(mixed);
    }

    std::vector<Vec> rows(spec.n);
    std::vector<std::size_t> block_of(spec.n);
    std::size_t next = 0;
    for (std::size_t a = 0; a < spec.k; ++a) {
      std::vector<Vec> others;
      for (std::size_t b = 0; b < spec.k; ++b)
        if (b != a) others.push_back(centers[b]);
      for (std::size_t m = 0; m < sizes[a]; ++m) {
        Vec u = detail::perturbed_unit_avoiding(centers[a], others, scatter, rng);
        if (spec.sign_flips && rng.uniform() < 0.5)
          for (double& x : u) x = -x;
        block_of[next] = a;
        rows[next++] = std::move(u);
      }
    }

    Configuration cfg = Configuration::from_rows(std::move(rows), true);
    const CorrelationMatrix a = correlation(cfg);
    auto part = try_clusters(a);
    if (!part || part->count() != spec.k) {
      center_jitter *= 0.5;
      scatter *= 0.5;
      continue;
    }
    // agents were emitted block-contiguously, so blocks match construction
    const Potentials pot = potentials(a, *part);
    bool ok = pot.delta0 <= spec.delta0_max && pot.delta1 <= spec.delta1_max;
    if (ok && spec.cross_corr > 0)
      ok = delta_ab(a, *part, 0, 1) >= spec.cross_corr / 2.0 &&
           is_consistent(a, *part, 0, 1, 0.0).consistent;
    if (ok && spec.k >= 2 && pot.delta0 == 0.0) ok = false;  // want Q0 finite
    if (ok) return {std::move(cfg), *std::move(part)};
    center_jitter *= 0.5;
    scatter *= 0.5;
  }
  throw Error("inactive sampler failed to meet its targets");
}

}  // namespace polarsim

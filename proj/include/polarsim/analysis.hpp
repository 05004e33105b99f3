#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "polarsim/geometry.hpp"

// Structural predicates and potentials: clusters, inactivity, separability,
// consistency, delta0/delta1/Q0/Q1/delta' and the cross-block minimum.

namespace polarsim {

struct NotClusterable : Error {
  using Error::Error;
};
struct ZeroSign : Error {
  using Error::Error;
};
struct NoCrossPair : Error {
  using Error::Error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Largest inactivity scale at which the cluster/step lemmas apply:
/// min(1/256, 1/(2d(d+1)), 1/(4(2+alpha)^2)).
inline double epsilon_base(std::size_t d, double alpha) {
  if (d < 2 || !(alpha > 0)) throw Error("need d >= 2 and alpha > 0");
  const double dd = double(d);
  return std::min({1.0 / 256.0, 1.0 / (2.0 * dd * (dd + 1.0)),
                   1.0 / (4.0 * (2.0 + alpha) * (2.0 + alpha))});
}

/// Disjoint blocks covering [n]: pairwise |A| > 1/2 inside each block,
/// |A| < 1/2 across. Blocks are ordered by smallest member.
struct ClusterPartition {
  std::vector<std::vector<std::size_t>> blocks;
  std::vector<std::size_t> block_of;  // agent -> block index

  std::size_t count() const { return blocks.size(); }
  std::size_t agents() const { return block_of.size(); }
};

namespace detail {

// Union-find over the |A_ij| > 1/2 graph.
inline std::size_t uf_find(std::vector<std::size_t>& p, std::size_t i) {
  while (p[i] != i) {
    p[i] = p[p[i]];
    i = p[i];
  }
  return i;
}

}  // namespace detail

/// The partition exists iff connected components of the |A|>1/2 graph have
/// all internal pairs above 1/2; |A_ij| = 1/2 exactly can never satisfy
/// either side and makes the configuration non-clusterable.
inline std::optional<ClusterPartition> try_clusters(
    const CorrelationMatrix& a) {
  const std::size_t n = a.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j)) > 0.5) {
        const std::size_t ri = detail::uf_find(parent, i);
        const std::size_t rj = detail::uf_find(parent, j);
        if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
      }

  ClusterPartition p;
  p.block_of.assign(n, 0);
  std::vector<long long> root_to_block(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = detail::uf_find(parent, i);
    if (root_to_block[r] < 0) {
      root_to_block[r] = static_cast<long long>(p.blocks.size());
      p.blocks.emplace_back();
    }
    const std::size_t b = static_cast<std::size_t>(root_to_block[r]);
    p.block_of[i] = b;
    p.blocks[b].push_back(i);  // ascending; block order = smallest member
  }

  // Components only guarantee connectivity; verify the full definition.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const bool same = p.block_of[i] == p.block_of[j];
      const double v = std::abs(a(i, j));
      if (same ? !(v > 0.5) : !(v < 0.5)) return std::nullopt;
    }
  return p;
}

inline ClusterPartition clusters(const CorrelationMatrix& a) {
  if (auto p = try_clusters(a)) return *std::move(p);
  throw NotClusterable("no valid cluster partition");
}

/// Every pair either nearly aligned (|A| > 1 - eps1^2) or nearly
/// orthogonal (|A| < eps0). The witness is the first pair (lexicographic,
/// i < j) violating both.
struct InactivityReport {
  double eps0 = 0, eps1 = 0;
  bool inactive = false;
  std::optional<std::pair<std::size_t, std::size_t>> witness;
};

inline InactivityReport is_inactive(const CorrelationMatrix& a, double eps0,
                                    double eps1) {
  if (!(eps0 > 0) || !(eps1 > 0)) throw Error("thresholds must be positive");
  InactivityReport r;
  r.eps0 = eps0;
  r.eps1 = eps1;
  r.inactive = true;
  // |A| > 1 - eps1^2 evaluated as 1 - |A| < eps1^2, which stays exact
  // when eps1^2 drops below one ulp of 1
  const double hi = eps1 * eps1;
  for (std::size_t i = 0; i + 1 < a.size() && r.inactive; ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double v = std::abs(a(i, j));
      if (!(1.0 - v < hi) && !(v < eps0)) {
        r.inactive = false;
        r.witness = {i, j};
        break;
      }
    }
  return r;
}

/// Two groups with all cross correlations below tol_orth in magnitude.
/// `component` is the group reachable from agent 0 through |A| > tol_orth.
struct SeparabilityReport {
  bool separable = false;
  std::vector<std::size_t> component;
};

inline SeparabilityReport is_separable(const CorrelationMatrix& a,
                                       double tol_orth = 0.0) {
  if (tol_orth < 0) throw Error("tol_orth must be >= 0");
  const std::size_t n = a.size();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack = {0};
  seen[0] = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j)
      if (!seen[j] && std::abs(a(i, j)) > tol_orth) {
        seen[j] = 1;
        stack.push_back(j);
      }
  }
  SeparabilityReport r;
  for (std::size_t i = 0; i < n; ++i)
    if (seen[i]) r.component.push_back(i);
  r.separable = r.component.size() < n;
  return r;
}

/// delta0: max cross-block |A| (0 for a single block).
/// delta1: max within-block sqrt(1-|A|) (0 when all blocks are singletons).
/// Q = -ln(delta), infinite when delta = 0.
/// delta_prime: sum of all squared entries, diagonal included; equals n^2
/// exactly at polarization.
struct Potentials {
  double delta0 = 0, delta1 = 0;
  double q0 = kInf, q1 = kInf;
  double delta_prime = 0;
};

inline double delta_prime(const CorrelationMatrix& a) {
  double s = 0.0;
  for (double v : a.entries()) s += v * v;
  return s;
}

inline Potentials potentials(const CorrelationMatrix& a,
                             const ClusterPartition& p) {
  if (p.agents() != a.size()) throw Error("partition does not match matrix");
  Potentials out;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = std::abs(a(i, j));
      if (p.block_of[i] == p.block_of[j])
        out.delta1 = std::max(out.delta1, std::sqrt(std::max(0.0, 1.0 - v)));
      else
        out.delta0 = std::max(out.delta0, v);
    }
  out.q0 = out.delta0 > 0 ? -std::log(out.delta0) : kInf;
  out.q1 = out.delta1 > 0 ? -std::log(out.delta1) : kInf;
  out.delta_prime = delta_prime(a);
  return out;
}

/// Smallest cross |A_ij| between blocks a and b.
inline double delta_ab(const CorrelationMatrix& m, const ClusterPartition& p,
                       std::size_t a, std::size_t b) {
  if (a == b || a >= p.count() || b >= p.count())
    throw Error("need two distinct valid blocks");
  double v = kInf;
  for (std::size_t i : p.blocks[a])
    for (std::size_t j : p.blocks[b]) v = std::min(v, std::abs(m(i, j)));
  return v;
}

inline int sign_of(double x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); }

/// sign(A_ij) == sign(A_il) * sign(A_jl), all three entries nonzero.
inline bool sign_triple_consistent(const CorrelationMatrix& a, std::size_t i,
                                   std::size_t j, std::size_t l) {
  if (i == j || i == l || j == l) throw Error("indices must be distinct");
  const int sij = sign_of(a(i, j));
  const int sil = sign_of(a(i, l));
  const int sjl = sign_of(a(j, l));
  if (sij == 0 || sil == 0 || sjl == 0)
    throw ZeroSign("zero correlation in sign triple");
  return sij == sil * sjl;
}

/// Cross-block sign pattern multiplicative over within-block signs, with
/// all cross magnitudes at least m * delta0. The first violating quadruple
/// (i, i', j, j') in lexicographic order is reported.
struct ConsistencyReport {
  std::size_t a = 0, b = 0;
  double m = 0;
  bool consistent = false;

  enum class Reason { sign, magnitude };
  struct Violation {
    std::size_t i, i2, j, j2;
    Reason reason;
  };
  std::optional<Violation> violation;
};

inline ConsistencyReport is_consistent(const CorrelationMatrix& mat,
                                       const ClusterPartition& p,
                                       std::size_t a, std::size_t b,
                                       double m) {
  if (a == b || a >= p.count() || b >= p.count())
    throw Error("need two distinct valid blocks");
  if (m < 0) throw Error("m must be >= 0");
  ConsistencyReport r;
  r.a = a;
  r.b = b;
  r.m = m;
  r.consistent = true;
  const double floor = m * potentials(mat, p).delta0;
  for (std::size_t i : p.blocks[a]) {
    for (std::size_t i2 : p.blocks[a]) {
      for (std::size_t j : p.blocks[b]) {
        for (std::size_t j2 : p.blocks[b]) {
          const int lhs = sign_of(mat(i2, j2));
          const int rhs = sign_of(mat(i, i2)) * sign_of(mat(i, j)) *
                          sign_of(mat(j, j2));
          if (lhs == 0 || rhs == 0 || lhs != rhs) {
            r.consistent = false;
            r.violation = {{i, i2, j, j2, ConsistencyReport::Reason::sign}};
            return r;
          }
          if (std::abs(mat(i2, j2)) < floor) {
            r.consistent = false;
            r.violation = {
                {i, i2, j, j2, ConsistencyReport::Reason::magnitude}};
            return r;
          }
        }
      }
    }
  }
  return r;
}

/// The cross pair achieving delta0; ties broken lexicographically on (i, j).
struct RealizedPair {
  std::size_t a, b;  // blocks, a = block of i
  std::size_t i, j;
  double value;
};

inline RealizedPair realizing_pair(const CorrelationMatrix& m,
                                   const ClusterPartition& p) {
  if (p.count() < 2) throw NoCrossPair("single block, delta0 undefined");
  RealizedPair best{0, 0, 0, 0, 0.0};
  bool found = false;
  for (std::size_t i = 0; i + 1 < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      if (p.block_of[i] == p.block_of[j]) continue;
      const double v = std::abs(m(i, j));
      if (v > best.value) {
        best = {p.block_of[i], p.block_of[j], i, j, v};
        found = true;
      }
    }
  if (!found || best.value == 0.0)
    throw NoCrossPair("all cross correlations are zero");
  return best;
}

}  // namespace polarsim

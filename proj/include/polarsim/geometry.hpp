#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Opinions as unit vectors, configurations, the biased-assimilation update
// and its closed-form correlation recurrence.

namespace polarsim {

using Vec = std::vector<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ||w|| collapsed below kDegenerateNorm; only reachable with a custom
// update function, never with the linear rule.
struct DegenerateUpdate : Error {
  using Error::Error;
};

inline constexpr double kUnitTol = 1e-12;
inline constexpr double kDegenerateNorm = 1e-12;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Correlations may exceed 1 by a few ulp; clamp before acos/sqrt(1-|A|) use.
inline double clamp_corr(double a) { return std::clamp(a, -1.0, 1.0); }

/// A unit vector in R^d, d >= 2.
class Opinion {
 public:
  explicit Opinion(Vec components) : c_(std::move(components)) {
    if (c_.size() < 2) throw Error("opinion dimension must be >= 2");
    if (std::abs(norm(c_) - 1.0) > kUnitTol)
      throw Error("opinion is not unit norm");
  }

  // Scales an arbitrary nonzero vector onto the sphere.
  static Opinion renormalized(Vec v) {
    const double r = norm(v);
    if (r < kDegenerateNorm) throw Error("cannot normalize near-zero vector");
    for (double& x : v) x /= r;
    return Opinion(std::move(v));
  }

  std::size_t dim() const { return c_.size(); }
  double operator[](std::size_t k) const { return c_[k]; }
  const Vec& components() const { return c_; }

 private:
  Vec c_;
};

/// The full process state: n unit opinions in dimension d, stored flat.
///
/// Treated as an immutable value snapshot everywhere except inside the
/// stepping kernels, which go through raw_opinion() and re-normalize.
class Configuration {
 public:
  explicit Configuration(const std::vector<Opinion>& ops) {
    if (ops.size() < 2) throw Error("configuration needs n >= 2 agents");
    n_ = ops.size();
    d_ = ops[0].dim();
    x_.reserve(n_ * d_);
    for (const Opinion& o : ops) {
      if (o.dim() != d_) throw Error("mixed opinion dimensions");
      x_.insert(x_.end(), o.components().begin(), o.components().end());
    }
  }

  // Ingestion path: rows are validated against unit_tol, or rescaled when
  // renormalize is set.
  static Configuration from_rows(std::vector<Vec> rows, bool renormalize = false,
                                 double unit_tol = 1e-9) {
    if (rows.size() < 2) throw Error("configuration needs n >= 2 agents");
    std::vector<Opinion> ops;
    ops.reserve(rows.size());
    for (Vec& r : rows) {
      if (renormalize) {
        ops.push_back(Opinion::renormalized(std::move(r)));
      } else {
        if (r.size() < 2) throw Error("opinion dimension must be >= 2");
        if (std::abs(norm(r) - 1.0) > unit_tol)
          throw Error("opinion row is not unit norm (use renormalize)");
        double s = norm(r);
        for (double& x : r) x /= s;  // snap residual error below kUnitTol
        ops.push_back(Opinion(std::move(r)));
      }
    }
    return Configuration(ops);
  }

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }

  std::span<const double> opinion(std::size_t i) const {
    return {x_.data() + i * d_, d_};
  }
  Vec opinion_vec(std::size_t i) const {
    auto s = opinion(i);
    return Vec(s.begin(), s.end());
  }
  const std::vector<double>& data() const { return x_; }

  // Low-level hook for the update kernels; callers must leave the row unit.
  std::span<double> raw_opinion(std::size_t i) {
    return {x_.data() + i * d_, d_};
  }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.n_ == b.n_ && a.d_ == b.d_ && a.x_ == b.x_;
  }

 private:
  Configuration() = default;
  std::size_t n_ = 0, d_ = 0;
  std::vector<double> x_;
};

/// One interaction: `influencer` acts on `influenced`. influenced ==
/// influencer is a legal no-op.
struct Interaction {
  std::size_t influenced = 0;
  std::size_t influencer = 0;
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Coupling strength f(A) applied to the influencer's opinion.
struct UpdateRule {
  enum class Kind { linear, piecewise, custom };

  Kind kind = Kind::linear;
  double alpha = 1.0;  // slope (x >= 0 branch for piecewise)
  double beta = 1.0;   // x < 0 branch, piecewise only
  // custom: f sampled on a uniform grid over [-1, 1]; linear interpolation.
  // The caller is responsible for tabulating (and odd-extending) f.
  std::vector<double> table;

  static UpdateRule linear(double alpha) {
    if (!(alpha > 0)) throw Error("alpha must be positive");
    UpdateRule r;
    r.kind = Kind::linear;
    r.alpha = alpha;
    return r;
  }

  static UpdateRule piecewise(double alpha, double beta) {
    if (!(alpha > 0) || !(beta > 0)) throw Error("alpha, beta must be positive");
    UpdateRule r;
    r.kind = Kind::piecewise;
    r.alpha = alpha;
    r.beta = beta;
    return r;
  }

  static UpdateRule custom(std::vector<double> table) {
    if (table.size() < 2) throw Error("custom table needs >= 2 samples");
    UpdateRule r;
    r.kind = Kind::custom;
    r.table = std::move(table);
    return r;
  }

  double f(double x) const {
    switch (kind) {
      case Kind::linear:
        return alpha * x;
      case Kind::piecewise:
        return x >= 0 ? alpha * x : beta * x;
      case Kind::custom: {
        const double xc = clamp_corr(x);
        const double pos = (xc + 1.0) * 0.5 * double(table.size() - 1);
        const std::size_t k =
            std::min(std::size_t(pos), table.size() - 2);
        const double frac = pos - double(k);
        return table[k] + frac * (table[k + 1] - table[k]);
      }
    }
    return 0.0;
  }
};

/// Gram matrix of a configuration. Entries are clamped into [-1, 1];
/// the diagonal is exactly 1.
class CorrelationMatrix {
 public:
  CorrelationMatrix(std::size_t n, std::vector<double> entries)
      : n_(n), a_(std::move(entries)) {
    if (a_.size() != n_ * n_) throw Error("correlation matrix size mismatch");
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const {
    return a_[i * n_ + j];
  }
  std::span<const double> row(std::size_t i) const {
    return {a_.data() + i * n_, n_};
  }
  const std::vector<double>& entries() const { return a_; }

  // Symmetry, unit diagonal, range, and positive semidefiniteness
  // (Cholesky of A + psd_tol*I). Intended for ingested matrices; matrices
  // computed from a Configuration satisfy this by construction.
  void validate(double psd_tol = 1e-9) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (std::abs((*this)(i, i) - 1.0) > kUnitTol)
        throw Error("correlation diagonal must be 1");
      for (std::size_t j = 0; j < i; ++j) {
        if ((*this)(i, j) != (*this)(j, i))
          throw Error("correlation matrix must be symmetric");
        if (std::abs((*this)(i, j)) > 1.0 + kUnitTol)
          throw Error("correlation entry out of [-1, 1]");
      }
    }
    // Cholesky of A + tol*I succeeds iff all eigenvalues exceed -tol.
    std::vector<double> m(a_);
    for (std::size_t i = 0; i < n_; ++i) m[i * n_ + i] += psd_tol;
    for (std::size_t j = 0; j < n_; ++j) {
      double diag = m[j * n_ + j];
      for (std::size_t k = 0; k < j; ++k) diag -= m[j * n_ + k] * m[j * n_ + k];
      if (diag <= 0.0) throw Error("correlation matrix is not PSD");
      const double l = std::sqrt(diag);
      m[j * n_ + j] = l;
      for (std::size_t i = j + 1; i < n_; ++i) {
        double s = m[i * n_ + j];
        for (std::size_t k = 0; k < j; ++k) s -= m[i * n_ + k] * m[j * n_ + k];
        m[i * n_ + j] = s / l;
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<double> a_;  // row-major n*n
};

inline CorrelationMatrix correlation(const Configuration& u) {
  const std::size_t n = u.size();
  std::vector<double> a(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = clamp_corr(dot(u.opinion(i), u.opinion(j)));
      a[i * n + j] = v;
      a[j * n + i] = v;
    }
  return CorrelationMatrix(n, std::move(a));
}

namespace detail {

// In-place w = u_i + coupling * u_j followed by renormalization.
// Returns false when ||w|| collapses (degenerate custom-f geometry).
inline bool biased_update(std::span<double> ui, std::span<const double> uj,
                          double coupling) {
  if (coupling == 0.0) return true;  // exact no-op, preserves separability
  double nw2 = 0.0;
  for (std::size_t k = 0; k < ui.size(); ++k) {
    ui[k] += coupling * uj[k];
    nw2 += ui[k] * ui[k];
  }
  const double nw = std::sqrt(nw2);
  if (nw < kDegenerateNorm) return false;
  for (double& x : ui) x /= nw;
  return true;
}

}  // namespace detail

/// Applies one interaction; only the influenced opinion changes.
inline Configuration apply_interaction(const Configuration& u,
                                       const Interaction& x,
                                       const UpdateRule& rule) {
  if (x.influenced >= u.size() || x.influencer >= u.size())
    throw Error("interaction index out of range");
  if (x.influenced == x.influencer) return u;  // fixed point
  Configuration out = u;
  const double a = dot(u.opinion(x.influenced), u.opinion(x.influencer));
  if (!detail::biased_update(out.raw_opinion(x.influenced),
                             u.opinion(x.influencer), rule.f(clamp_corr(a))))
    throw DegenerateUpdate("update collapsed to the origin");
  return out;
}

/// Closed-form row update for the linear rule: after `ell` influences `i`,
/// returns the new correlations of agent i with every agent.
///
/// A'_ij = (A_ij + alpha A_il A_jl) / sqrt(1 + (2 alpha + alpha^2) A_il^2),
/// entry i itself is 1.
inline Vec predicted_row(const CorrelationMatrix& a, std::size_t i,
                         std::size_t ell, double alpha) {
  const std::size_t n = a.size();
  if (i >= n || ell >= n) throw Error("agent index out of range");
  const double ail = a(i, ell);
  const double denom = std::sqrt(1.0 + (2.0 * alpha + alpha * alpha) * ail * ail);
  Vec out(n);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = (a(i, j) + alpha * ail * a(j, ell)) / denom;
  out[i] = 1.0;
  return out;
}

// min(||u_i - u_j||, ||u_i + u_j||): distance up to sign.
inline double antipodal_distance(std::span<const double> ui,
                                 std::span<const double> uj) {
  double dm = 0.0, dp = 0.0;
  for (std::size_t k = 0; k < ui.size(); ++k) {
    const double m = ui[k] - uj[k];
    const double p = ui[k] + uj[k];
    dm += m * m;
    dp += p * p;
  }
  return std::sqrt(std::min(dm, dp));
}

/// Every pair of opinions equal up to sign, within tol.
inline bool is_polarized(const Configuration& u, double tol) {
  if (!(tol > 0)) throw Error("tolerance must be positive");
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (antipodal_distance(u.opinion(i), u.opinion(j)) > tol) return false;
  return true;
}

/// Negates opinion i; everything else bit-identical.
inline Configuration flip_agent(const Configuration& u, std::size_t i) {
  if (i >= u.size()) throw Error("agent index out of range");
  Configuration out = u;
  for (double& x : out.raw_opinion(i)) x = -x;
  return out;
}

}  // namespace polarsim

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "polarsim/analysis.hpp"
#include "polarsim/geometry.hpp"
#include "polarsim/rng.hpp"
#include "polarsim/sampling.hpp"

using namespace polarsim;

namespace {

CorrelationMatrix mat3(double a01, double a02, double a12) {
  return CorrelationMatrix(
      3, {1.0, a01, a02, a01, 1.0, a12, a02, a12, 1.0});
}

// unit vector with a prescribed correlation to u
Vec mixed_with(const Vec& u, double corr, Rng& rng) {
  Vec p(u.size());
  while (true) {
    for (double& x : p) x = rng.normal();
    const double proj = dot(p, u);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= proj * u[k];
    const double n2 = dot(p, p);
    if (n2 > 1e-12) {
      const double inv = 1.0 / std::sqrt(n2);
      for (double& x : p) x *= inv;
      break;
    }
  }
  Vec v(u.size());
  const double w = std::sqrt(std::max(0.0, 1.0 - corr * corr));
  for (std::size_t k = 0; k < u.size(); ++k) v[k] = corr * u[k] + w * p[k];
  return v;
}

}  // namespace

TEST_CASE("epsilon_base formula") {
  CHECK(epsilon_base(3, 1.0) == Catch::Approx(1.0 / 256.0));
  CHECK(epsilon_base(12, 1.0) == Catch::Approx(1.0 / 312.0));
  CHECK(epsilon_base(2, 6.0) == Catch::Approx(1.0 / 256.0));
  CHECK_THROWS_AS(epsilon_base(1, 1.0), Error);
}

TEST_CASE("clusters of simple matrices") {
  // all opinions equal: one block
  auto all = correlation(Configuration::from_rows(
      {{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}));
  auto p = clusters(all);
  REQUIRE(p.count() == 1);
  CHECK(p.blocks[0] == std::vector<std::size_t>{0, 1, 2});

  // standard basis: three singletons
  auto basis = correlation(Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}));
  auto q = clusters(basis);
  REQUIRE(q.count() == 3);
  CHECK(q.blocks[1] == std::vector<std::size_t>{1});

  // thresholds of the cluster definition
  auto r = clusters(mat3(0.99, 0.01, 0.01));
  REQUIRE(r.count() == 2);
  CHECK(r.blocks[0] == std::vector<std::size_t>{0, 1});
  CHECK(r.blocks[1] == std::vector<std::size_t>{2});
  CHECK(r.block_of[2] == 1);
}

TEST_CASE("non-clusterable chain") {
  // angles 0, 35, 70 degrees on a circle: 0-1 and 1-2 correlate above 1/2,
  // 0-2 below, so the connected component fails the within condition
  const double t1 = 35.0 * M_PI / 180.0, t2 = 70.0 * M_PI / 180.0;
  auto u = Configuration::from_rows({{1.0, 0.0},
                                     {std::cos(t1), std::sin(t1)},
                                     {std::cos(t2), std::sin(t2)}});
  CHECK_THROWS_AS(clusters(correlation(u)), NotClusterable);
  CHECK_FALSE(try_clusters(correlation(u)).has_value());

  // |A| = 1/2 exactly violates both sides of the definition
  CHECK_FALSE(try_clusters(mat3(0.5, 0.0, 0.0)).has_value());
}

TEST_CASE("inactivity scan and witness order") {
  auto polarized = correlation(Configuration::from_rows(
      {{1.0, 0.0}, {-1.0, 0.0}, {1.0, 0.0}}));
  CHECK(is_inactive(polarized, 1e-9, 1e-9).inactive);

  auto basis = correlation(Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}));
  CHECK(is_inactive(basis, 0.01, 0.01).inactive);

  auto mid = mat3(0.5, 0.0, 0.0);
  auto rep = is_inactive(mid, 0.01, 0.1);
  CHECK_FALSE(rep.inactive);
  REQUIRE(rep.witness.has_value());
  CHECK(rep.witness->first == 0);
  CHECK(rep.witness->second == 1);
}

TEST_CASE("separability") {
  auto basis = correlation(Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}));
  auto s = is_separable(basis);
  CHECK(s.separable);
  CHECK(s.component == std::vector<std::size_t>{0});

  auto coupled = mat3(0.3, 0.2, 0.1);
  CHECK_FALSE(is_separable(coupled).separable);

  auto two_one = correlation(Configuration::from_rows(
      {{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}));
  auto s2 = is_separable(two_one);
  CHECK(s2.separable);
  CHECK(s2.component == std::vector<std::size_t>{0, 1});
}

TEST_CASE("potentials on worked examples") {
  // polarized: single block, delta0 = 0, Q0 infinite, delta' = n^2
  auto pol = correlation(Configuration::from_rows(
      {{1.0, 0.0}, {-1.0, 0.0}, {1.0, 0.0}}));
  auto pp = clusters(pol);
  auto pot = potentials(pol, pp);
  CHECK(pot.delta0 == 0.0);
  CHECK(std::isinf(pot.q0));
  CHECK(pot.delta_prime == Catch::Approx(9.0));

  // blocks {0,1},{2}: delta0 = 0.01, delta1 = sqrt(1-0.99) = 0.1,
  // delta' = 3 + 2(0.99^2 + 0.01^2)
  auto m = mat3(0.99, 0.01, 0.0);
  auto p = clusters(m);
  auto q = potentials(m, p);
  CHECK(q.delta0 == Catch::Approx(0.01));
  CHECK(q.delta1 == Catch::Approx(0.1));
  CHECK(q.delta_prime == Catch::Approx(3.0 + 2.0 * (0.9801 + 0.0001)));
  CHECK(q.q0 == Catch::Approx(-std::log(0.01)));

  // singleton blocks only: delta1 = 0, Q1 infinite
  auto basis = correlation(Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}));
  auto bq = potentials(basis, clusters(basis));
  CHECK(bq.delta1 == 0.0);
  CHECK(std::isinf(bq.q1));
}

TEST_CASE("inactivity matches potentials exactly") {
  Rng rng(31337);
  for (int iter = 0; iter < 400; ++iter) {
    InactiveSpec spec;
    spec.n = 4 + rng.uniform_index(4);
    spec.d = 3 + rng.uniform_index(2);
    spec.k = 1 + rng.uniform_index(std::min<std::size_t>(spec.d, 3));
    spec.delta0_max = 0.002 + 0.05 * rng.uniform();
    spec.delta1_max = 0.002 + 0.05 * rng.uniform();
    auto s = sample_inactive(spec, rng);
    const CorrelationMatrix a = correlation(s.config);
    const Potentials pot = potentials(a, s.partition);
    for (int k = 0; k < 8; ++k) {
      const double e0 = 0.001 + 0.45 * rng.uniform();
      const double e1 = 0.001 + 0.45 * rng.uniform();
      const bool via_def = is_inactive(a, e0, e1).inactive;
      const bool via_pot = pot.delta0 < e0 && pot.delta1 < e1;
      REQUIRE(via_def == via_pot);
    }
  }
}

TEST_CASE("cluster recovery at the guaranteed scale") {
  Rng rng(4242);
  for (int iter = 0; iter < 500; ++iter) {
    InactiveSpec spec;
    spec.d = 3 + rng.uniform_index(3);
    spec.n = spec.d + rng.uniform_index(4);
    spec.k = 1 + rng.uniform_index(spec.d);
    const double eps = 1.0 / 256.0;
    spec.delta0_max = eps * (0.2 + 0.7 * rng.uniform());
    spec.delta1_max = eps * (0.2 + 0.7 * rng.uniform());
    auto s = sample_inactive(spec, rng);
    const CorrelationMatrix a = correlation(s.config);
    REQUIRE(is_inactive(a, eps, eps).inactive);
    auto p = try_clusters(a);
    REQUIRE(p.has_value());
    REQUIRE(p->count() == spec.k);
    REQUIRE(p->count() <= spec.d);  // max(eps, eps^2) < 1/(d(d+1)) here
    // blocks are exactly the components: partition equals construction
    for (std::size_t i = 0; i < s.partition.agents(); ++i)
      REQUIRE(p->block_of[i] == s.partition.block_of[i]);
  }
}

TEST_CASE("delta_ab") {
  auto m = mat3(0.99, 0.03, -0.01);
  auto p = clusters(m);
  CHECK(delta_ab(m, p, 0, 1) == Catch::Approx(0.01));
  CHECK(delta_ab(m, p, 1, 0) == Catch::Approx(0.01));
  CHECK_THROWS_AS(delta_ab(m, p, 0, 0), Error);

  auto z = mat3(0.99, 0.03, 0.0);
  CHECK(delta_ab(z, clusters(z), 0, 1) == 0.0);

  // singleton blocks: just |A_ij|
  auto basis = mat3(0.2, 0.3, 0.4);
  auto bp = clusters(basis);
  CHECK(delta_ab(basis, bp, 0, 1) == Catch::Approx(0.2));
}

TEST_CASE("sign triples") {
  CHECK(sign_triple_consistent(mat3(0.5, 0.5, 0.5), 0, 1, 2));
  CHECK_FALSE(sign_triple_consistent(mat3(-0.5, 0.5, 0.5), 0, 1, 2));
  CHECK(sign_triple_consistent(mat3(-0.5, -0.5, 0.5), 0, 1, 2));
  CHECK_THROWS_AS(sign_triple_consistent(mat3(0.0, 0.5, 0.5), 0, 1, 2),
                  ZeroSign);
  CHECK_THROWS_AS(sign_triple_consistent(mat3(0.5, 0.5, 0.5), 0, 0, 2), Error);
}

TEST_CASE("aligned triples inside a cluster are sign-consistent") {
  Rng rng(271828);
  for (int iter = 0; iter < 400; ++iter) {
    const std::size_t d = 3 + rng.uniform_index(3);
    const double alpha = 0.25 + 3.0 * rng.uniform();
    const double eb = epsilon_base(d, alpha);
    InactiveSpec spec;
    spec.d = d;
    spec.n = 4 + rng.uniform_index(4);
    spec.k = 1 + rng.uniform_index(2);
    spec.delta0_max = eb / 2;
    spec.delta1_max = eb / 2;
    auto s = sample_inactive(spec, rng);
    const CorrelationMatrix a = correlation(s.config);
    double max_eps1 = 0.0;  // realized within-cluster looseness
    for (std::size_t i = 0; i < spec.n; ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (s.partition.block_of[i] == s.partition.block_of[j])
          max_eps1 = std::max(max_eps1, std::sqrt(1.0 - std::abs(a(i, j))));
    for (std::size_t i = 0; i < spec.n; ++i)
      for (std::size_t j = 0; j < spec.n; ++j)
        for (std::size_t l = 0; l < spec.n; ++l) {
          if (i == j || i == l || j == l) continue;
          const std::size_t bi = s.partition.block_of[i];
          if (s.partition.block_of[j] != bi ||
              s.partition.block_of[l] != bi)
            continue;
          REQUIRE(sign_triple_consistent(a, i, j, l));
          // near-unit legs force a near-unit third side
          REQUIRE(std::abs(a(j, l)) >=
                  1.0 - 4.0 * max_eps1 * max_eps1 - 1e-12);
        }
  }
}

TEST_CASE("almost-orthogonal transfer across aligned copies") {
  Rng rng(1618);
  for (int iter = 0; iter < 2000; ++iter) {
    const std::size_t d = 3 + rng.uniform_index(4);
    const double eps = std::pow(10.0, -3.0 * rng.uniform() - 0.5);

    Vec ui = random_unit_vector(d, rng);
    Vec uj = mixed_with(ui, eps * (2.0 * rng.uniform() - 1.0), rng);
    const double c_i = (1.0 - eps * eps * rng.uniform()) *
                       (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const double c_j = (1.0 - eps * eps * rng.uniform()) *
                       (rng.uniform() < 0.5 ? -1.0 : 1.0);
    Vec ui2 = mixed_with(ui, c_i, rng);
    Vec uj2 = mixed_with(uj, c_j, rng);

    auto u = Configuration::from_rows({ui, uj, ui2, uj2}, true);
    const CorrelationMatrix a = correlation(u);
    REQUIRE(std::abs(a(0, 1)) <= eps + 1e-12);
    REQUIRE(std::abs(a(0, 2)) >= 1.0 - eps * eps - 1e-12);
    REQUIRE(std::abs(a(1, 3)) >= 1.0 - eps * eps - 1e-12);
    REQUIRE(std::abs(a(2, 3)) <= 64.0 * eps);
  }
}

TEST_CASE("consistency reports") {
  // all-positive cross block: consistent
  auto m = mat3(0.99, 0.02, 0.03);
  auto p = clusters(m);
  CHECK(is_consistent(m, p, 0, 1, 0.0).consistent);

  // singleton blocks with nonzero entry: the identity degenerates
  auto basis = mat3(0.2, 0.3, 0.4);
  auto bp = clusters(basis);
  CHECK(is_consistent(basis, bp, 0, 1, 0.0).consistent);
  CHECK(is_consistent(basis, bp, 1, 2, 0.0).consistent);

  // mixed cross signs: violation, reported lexicographically first
  auto bad = mat3(0.99, 0.02, -0.02);
  auto bq = clusters(bad);
  auto rep = is_consistent(bad, bq, 0, 1, 0.0);
  CHECK_FALSE(rep.consistent);
  REQUIRE(rep.violation.has_value());
  CHECK(rep.violation->reason == ConsistencyReport::Reason::sign);

  // magnitude floor: delta0 = 0.03, entry 0.02 fails m = 0.9
  auto tight = mat3(0.99, 0.03, 0.02);
  auto tp = clusters(tight);
  CHECK(is_consistent(tight, tp, 0, 1, 0.0).consistent);
  auto rep2 = is_consistent(tight, tp, 0, 1, 0.9);
  CHECK_FALSE(rep2.consistent);
  REQUIRE(rep2.violation.has_value());
  CHECK(rep2.violation->reason == ConsistencyReport::Reason::magnitude);
}

TEST_CASE("realizing pair") {
  auto m = mat3(0.99, 0.03, -0.01);
  auto p = clusters(m);
  auto r = realizing_pair(m, p);
  CHECK(r.i == 0);
  CHECK(r.j == 2);
  CHECK(r.value == Catch::Approx(0.03));
  CHECK(r.a == 0);
  CHECK(r.b == 1);

  // tie: takes the lexicographically smaller (i, j)
  auto tie = mat3(0.99, 0.03, 0.03);
  auto tr = realizing_pair(tie, clusters(tie));
  CHECK(tr.i == 0);
  CHECK(tr.j == 2);

  // all cross entries zero
  auto z = mat3(0.99, 0.0, 0.0);
  CHECK_THROWS_AS(realizing_pair(z, clusters(z)), NoCrossPair);
  auto single = correlation(
      Configuration::from_rows({{1.0, 0.0}, {1.0, 0.0}}));
  CHECK_THROWS_AS(realizing_pair(single, clusters(single)), NoCrossPair);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "polarsim/constants.hpp"
#include "polarsim/constructions.hpp"
#include "polarsim/dynamics.hpp"
#include "polarsim/geometry.hpp"
#include "polarsim/rng.hpp"
#include "polarsim/sampling.hpp"

using namespace polarsim;

namespace {

// blocks {0,1} and {2} with opposite-sign cross correlations of size ~g
Configuration mixed_sign_pair(double g) {
  const double w = 1.0 / std::sqrt(1.0 + g * g);
  return Configuration::from_rows({{w, g * w, 0.0},
                                   {w, -g * w, 0.0},
                                   {0.0, 1.0, 0.0}});
}

}  // namespace

TEST_CASE("k0_needed") {
  CHECK(k0_needed(0.5, 0.5, 1.0) == 0);
  CHECK(k0_needed(0.9, 0.5, 1.0) == 0);
  CHECK_THROWS_AS(k0_needed(-0.1, 0.5, 1.0), Error);
  CHECK_THROWS_AS(k0_needed(0.0, 0.5, 1.0), NonConvergent);
  CHECK_THROWS_AS(k0_needed(0.5, 1.0, 1.0), Error);

  // frozen fixture, derived by iterating the map directly
  double x = 0.1;
  long long k = 0;
  while (x < 0.9) {
    x = 2.0 * x / std::sqrt(1.0 + 3.0 * x * x);
    ++k;
  }
  CHECK(k == 5);
  CHECK(k0_needed(0.1, 0.9, 1.0) == k);
}

TEST_CASE("construction constants table") {
  const auto cc = make_construction_constants(6, 3, 1.0);
  CHECK(cc.eps_base == Catch::Approx(1.0 / 256.0));
  CHECK(cc.c_step == Catch::Approx(4.0));
  CHECK(cc.k0 == 5);                     // ceil(2*2/1) + 1
  CHECK(cc.k1 == 16385);                 // ceil(16 * 4^5) + 1
  CHECK(cc.t0 == 15);
  CHECK(cc.c_cons > 0.0);
  CHECK(cc.c_adv > 0.0);
  CHECK(cc.k_alpha == Catch::Approx(0.5 * std::log(3.5)));
  CHECK(cc.kprime_alpha == Catch::Approx(std::sqrt(48.0)));
  CHECK(cc.c_ratio == Catch::Approx(std::sqrt(2.0)));
}

TEST_CASE("path_to_inactive on hand-built configurations") {
  const double alpha = 1.0;
  const double eps = epsilon_base(3, alpha);

  // pairwise nearly orthogonal singletons: nothing to do
  Configuration basis = Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
  CHECK(path_to_inactive(basis, eps, alpha).size() == 0);

  // n = 2 with a noticeable correlation: one block, anchor 0
  Configuration pair = Configuration::from_rows({{1.0, 0.0}, {0.6, 0.8}});
  const double eps2 = epsilon_base(2, alpha);
  const Schedule s2 = path_to_inactive(pair, eps2, alpha);
  REQUIRE(s2.size() > 0);
  for (const Interaction& x : s2.steps) {
    CHECK(x.influenced == 1);
    CHECK(x.influencer == 0);
  }
  const Configuration after = run_scripted(pair, s2, UpdateRule::linear(alpha)).final;
  const double seed = eps2 / 64.0;
  CHECK(std::abs(correlation(after)(0, 1)) > 1.0 - seed * seed);
  // anchor unmoved
  CHECK(after.opinion_vec(0) == pair.opinion_vec(0));

  CHECK_THROWS_AS(path_to_inactive(pair, 0.5, alpha), PreconditionViolated);
}

TEST_CASE("path_to_inactive drives random configurations inactive") {
  Rng rng(2024);
  for (int iter = 0; iter < 60; ++iter) {
    const std::size_t n = 3 + rng.uniform_index(4);
    const std::size_t d = 2 + rng.uniform_index(3);
    const double alpha = 0.3 + 2.0 * rng.uniform();
    const double eps = epsilon_base(d, alpha);
    const Configuration u = sample_uniform_sphere(n, d, rng);
    const Schedule s = path_to_inactive(u, eps, alpha);
    const Configuration v = run_scripted(u, s, UpdateRule::linear(alpha)).final;
    REQUIRE(is_inactive(correlation(v), eps, eps).inactive);
  }
}

TEST_CASE("reach_consistency adaptive mode") {
  const double alpha = 1.0;
  const double eb = epsilon_base(3, alpha);
  const auto cc = make_construction_constants(3, 3, alpha);

  // already consistent: empty schedule
  Rng rng(1);
  InactiveSpec spec;
  spec.n = 4;
  spec.d = 3;
  spec.k = 2;
  spec.sizes = {2, 2};
  spec.delta0_max = eb / 2;
  spec.delta1_max = eb / 2;
  spec.cross_corr = eb / 4;
  auto cons = sample_inactive(spec, rng);
  {
    const auto m = correlation(cons.config);
    REQUIRE(is_consistent(m, cons.partition, 0, 1,
                          make_construction_constants(4, 3, alpha).c_cons)
                .consistent);
    const Schedule s =
        reach_consistency(cons.config, 0, 1, ConsistencyMode::adaptive, alpha);
    CHECK(s.size() == 0);
  }

  // mixed cross signs get repaired
  const Configuration bad = mixed_sign_pair(eb / 4);
  {
    const auto m0 = correlation(bad);
    const auto p0 = clusters(m0);
    REQUIRE_FALSE(is_consistent(m0, p0, 0, 1, 0.0).consistent);
    const Schedule s =
        reach_consistency(bad, 0, 1, ConsistencyMode::adaptive, alpha);
    REQUIRE(s.size() > 0);
    const Configuration v = run_scripted(bad, s, UpdateRule::linear(alpha)).final;
    const auto m1 = correlation(v);
    const auto p1 = clusters(m1);
    REQUIRE(is_consistent(m1, p1, 0, 1, cc.c_cons).consistent);
  }

  // singleton blocks with a nonzero cross entry: nothing to repair
  {
    Configuration singles = Configuration::from_rows(
        {{1.0, 0.0, 0.0}, {0.002, 1.0, 0.0}, {0.001, 0.003, 1.0}}, true);
    const Schedule s =
        reach_consistency(singles, 0, 1, ConsistencyMode::adaptive, alpha);
    CHECK(s.size() == 0);
  }
}

TEST_CASE("reach_consistency worst-case mode length and result") {
  const double alpha = 1.0;
  const double eb = epsilon_base(3, alpha);
  const auto cc = make_construction_constants(3, 3, alpha);
  const Configuration bad = mixed_sign_pair(eb / 4);
  const Schedule s =
      reach_consistency(bad, 0, 1, ConsistencyMode::paper_worst_case, alpha);
  CHECK(static_cast<long long>(s.size()) == 3 * (cc.k0 + cc.k1));
  const Configuration v = run_scripted(bad, s, UpdateRule::linear(alpha)).final;
  const auto m1 = correlation(v);
  REQUIRE(is_consistent(m1, clusters(m1), 0, 1, cc.c_cons).consistent);
}

TEST_CASE("increase_delta_schedule layout") {
  // singleton blocks: both directions, padded by cycling to n^2
  auto m = correlation(Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}));
  auto p = clusters(m);
  const Schedule s = increase_delta_schedule(p, 0, 1);
  REQUIRE(s.size() == 9);
  CHECK(s.steps[0] == Interaction{1, 0});
  CHECK(s.steps[1] == Interaction{0, 1});
  CHECK(s.steps[2] == Interaction{1, 0});

  // 2 + 1 blocks: all cross pairs in both directions appear
  auto m2 = correlation(Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}));
  auto p2 = clusters(m2);
  const Schedule s2 = increase_delta_schedule(p2, 0, 1);
  REQUIRE(s2.size() == 9);
  bool seen[3][3] = {};
  for (const Interaction& x : s2.steps) seen[x.influenced][x.influencer] = true;
  CHECK(seen[2][0]);
  CHECK(seen[0][2]);
  CHECK(seen[2][1]);
  CHECK(seen[1][2]);
}

TEST_CASE("increase_delta_schedule amplifies the cross minimum") {
  Rng rng(7);
  int tested = 0;
  for (int iter = 0; iter < 120; ++iter) {
    const double alpha = 0.3 + 2.2 * rng.uniform();
    const std::size_t d = 3;
    const double eb = epsilon_base(d, alpha);
    const auto cc = make_construction_constants(5, d, alpha);
    InactiveSpec spec;
    spec.n = 5;
    spec.d = d;
    spec.k = 2;
    spec.sizes = {3, 2};
    spec.delta0_max = eb / 32;
    spec.delta1_max = eb / 32;
    spec.cross_corr = eb / 64;
    auto s = sample_inactive(spec, rng);
    const CorrelationMatrix a = correlation(s.config);
    if (!is_consistent(a, s.partition, 0, 1, 0.0).consistent) continue;

    const double before = delta_ab(a, s.partition, 0, 1);
    REQUIRE(before > 0.0);
    const Schedule sched = increase_delta_schedule(s.partition, 0, 1);

    // no cross magnitude ever decreases along the consistent run
    Configuration cur = s.config;
    CorrelationMatrix prev = a;
    for (const Interaction& x : sched.steps) {
      cur = apply_interaction(cur, x, UpdateRule::linear(alpha));
      const CorrelationMatrix now = correlation(cur);
      for (std::size_t i : s.partition.blocks[0])
        for (std::size_t j : s.partition.blocks[1]) {
          REQUIRE(std::abs(now(i, j)) >= std::abs(prev(i, j)) - 1e-12);
          REQUIRE(sign_of(now(i, j)) == sign_of(prev(i, j)));
        }
      prev = now;
    }
    const double after = delta_ab(prev, s.partition, 0, 1);
    REQUIRE(after >= (1.0 + cc.c_adv) * before);
    tested++;
  }
  REQUIRE(tested >= 100);
}

TEST_CASE("tighten contracts a block") {
  const double alpha = 1.0;

  // pair block: single interaction, strict contraction
  Configuration pair = Configuration::from_rows({{1.0, 0.0}, {0.8, 0.6}});
  auto mp = correlation(pair);
  auto pp = clusters(mp);
  const Schedule s = tighten_cluster_schedule(mp, pp, 0);
  REQUIRE(s.size() == 1);
  const Configuration after = run_scripted(pair, s, UpdateRule::linear(alpha)).final;
  const double loose0 = 1.0 - std::abs(mp(0, 1));
  const double loose1 = 1.0 - std::abs(correlation(after)(0, 1));
  CHECK(loose1 < loose0);

  // fully aligned block: both sides stay at zero
  Configuration aligned = Configuration::from_rows(
      {{1.0, 0.0}, {1.0, 0.0}, {-1.0, 0.0}});
  auto ma = correlation(aligned);
  const Schedule sa = tighten_cluster_schedule(ma, clusters(ma), 0);
  const Configuration after_a =
      run_scripted(aligned, sa, UpdateRule::linear(alpha)).final;
  const auto maf = correlation(after_a);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < i; ++j)
      CHECK(1.0 - std::abs(maf(i, j)) <= 1e-12);

  // precondition: a block pair at 0.5 is too loose
  const double t1 = 65.0 * M_PI / 180.0;
  Configuration loose = Configuration::from_rows(
      {{1.0, 0.0}, {std::cos(t1), std::sin(t1)}});
  auto ml = correlation(loose);
  CHECK_THROWS_AS(tighten_cluster_schedule(ml, clusters(ml), 0),
                  PreconditionViolated);
  CHECK_THROWS_AS(tighten_cluster_schedule(mp, pp, 1), PreconditionViolated);
}

TEST_CASE("tighten round-robin on random blocks") {
  Rng rng(99);
  for (int iter = 0; iter < 200; ++iter) {
    const double alpha = 0.4 + 2.0 * rng.uniform();
    const std::size_t nb = 3 + rng.uniform_index(2);  // block size 3..4
    // members mixed around a base direction, min |A| around 0.8
    Vec base = random_unit_vector(4, rng);
    std::vector<Vec> rows;
    for (std::size_t i = 0; i < nb; ++i) {
      Vec v(4);
      while (true) {
        Vec p = random_unit_vector(4, rng);
        const double c = 0.93 + 0.06 * rng.uniform();
        const double w = std::sqrt(1.0 - c * c);
        for (std::size_t k = 0; k < 4; ++k) v[k] = c * base[k] + w * p[k];
        double n2 = norm(v);
        for (double& x : v) x /= n2;
        break;
      }
      if (rng.uniform() < 0.5)
        for (double& x : v) x = -x;
      rows.push_back(v);
    }
    Configuration u = Configuration::from_rows(std::move(rows), true);
    const CorrelationMatrix m = correlation(u);
    bool admissible = true;
    double before = 0.0;
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j = 0; j < i; ++j) {
        admissible = admissible && std::abs(m(i, j)) > std::sqrt(2.0) / 2.0;
        before = std::max(before, 1.0 - std::abs(m(i, j)));
      }
    if (!admissible) continue;
    auto p = clusters(m);
    REQUIRE(p.count() == 1);
    const Schedule s = tighten_cluster_schedule(m, p, 0);
    REQUIRE(s.size() == nb * (nb - 1) / 2);

    // per-step floor |A'_ij| >= min(|A_ij|, |A_jl|)
    Configuration cur = u;
    CorrelationMatrix prev = m;
    for (const Interaction& x : s.steps) {
      cur = apply_interaction(cur, x, UpdateRule::linear(alpha));
      const CorrelationMatrix now = correlation(cur);
      for (std::size_t j = 0; j < nb; ++j) {
        if (j == x.influenced) continue;
        const double floor =
            std::min(std::abs(prev(x.influenced, j)),
                     std::abs(prev(j, x.influencer)));
        REQUIRE(std::abs(now(x.influenced, j)) >= floor - 1e-12);
      }
      prev = now;
    }
    double after = 0.0;
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j = 0; j < i; ++j)
        after = std::max(after, 1.0 - std::abs(prev(i, j)));
    REQUIRE(after < before);
  }
}

TEST_CASE("collapse_clusters merges the planted pair") {
  Rng rng(31);
  const double alpha = 1.0;
  int tested = 0;
  for (int iter = 0; iter < 80; ++iter) {
    const std::size_t d = 3;
    const double eb = epsilon_base(d, alpha);
    InactiveSpec spec;
    spec.n = 5 + rng.uniform_index(2);
    spec.d = d;
    spec.k = 3;
    spec.delta0_max = eb / 2;
    spec.delta1_max = eb / 2;
    spec.cross_corr = eb / 4;  // noticeable correlation between blocks 0, 1
    auto s = sample_inactive(spec, rng);
    const CorrelationMatrix a = correlation(s.config);

    // strongest cross pair between blocks 0 and 1
    std::size_t i0 = 0, j0 = 0;
    double best = 0.0;
    for (std::size_t i : s.partition.blocks[0])
      for (std::size_t j : s.partition.blocks[1])
        if (std::abs(a(i, j)) > best) {
          best = std::abs(a(i, j));
          i0 = i;
          j0 = j;
        }
    const double eps = best * 0.9;
    if (eps <= 0.0 || eps > eb) continue;

    const Schedule sched =
        collapse_clusters(s.config, eps, 0, 1, i0, j0, alpha);
    const Configuration v =
        run_scripted(s.config, sched, UpdateRule::linear(alpha)).final;
    const CorrelationMatrix b = correlation(v);
    REQUIRE(is_inactive(b, eps, eps).inactive);
    const auto p2 = try_clusters(b);
    REQUIRE(p2.has_value());
    REQUIRE(p2->count() < s.partition.count());
    tested++;
  }
  REQUIRE(tested >= 60);
}

TEST_CASE("collapse_clusters preconditions") {
  const double alpha = 1.0;
  // one cluster only: no block b to merge
  Configuration one = Configuration::from_rows({{1.0, 0.0}, {1.0, 0.0}});
  CHECK_THROWS_AS(collapse_clusters(one, 0.01, 0, 1, 0, 1, alpha),
                  PreconditionViolated);

  // cross correlation below the requested eps
  Configuration two = Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {0.001, 1.0, 0.0}}, true);
  CHECK_THROWS_AS(collapse_clusters(two, 0.01, 0, 1, 0, 1, alpha),
                  PreconditionViolated);
}

TEST_CASE("two singleton clusters collapse to one") {
  const double alpha = 1.0;
  const double eb = epsilon_base(3, alpha);
  const double g = eb / 2;
  Configuration u = Configuration::from_rows(
      {{1.0, 0.0, 0.0}, {g, std::sqrt(1.0 - g * g), 0.0}});
  const Schedule s = collapse_clusters(u, g * 0.99, 0, 1, 0, 1, alpha);
  const Configuration v = run_scripted(u, s, UpdateRule::linear(alpha)).final;
  const auto p = try_clusters(correlation(v));
  REQUIRE(p.has_value());
  CHECK(p->count() == 1);
}

TEST_CASE("consistency persists over short random windows") {
  Rng rng(13);
  const double alpha = 1.0;
  const long long T = 5;
  const double c = 0.5;
  int tested = 0;
  for (int iter = 0; iter < 150 && tested < 100; ++iter) {
    const double eb = epsilon_base(3, alpha);
    const double c_step = 2.0 * (1.0 + alpha);
    // admissibility scale from the persistence statement, with the
    // measured consistency margin m in place of the worst-case floor
    const double m_measured = 0.5;
    const double eps_window =
        std::min(eb, c * m_measured /
                         (2.0 * double(T) * (3.0 * alpha + alpha * alpha) *
                          std::pow(c_step, 2.0 * double(T))));
    InactiveSpec spec;
    spec.n = 5;
    spec.d = 3;
    spec.k = 2;
    spec.sizes = {3, 2};
    spec.delta0_max = eps_window;
    spec.delta1_max = eps_window;
    spec.cross_corr = eps_window / 2;
    auto s = sample_inactive(spec, rng);
    const CorrelationMatrix a = correlation(s.config);
    if (!is_consistent(a, s.partition, 0, 1, m_measured).consistent) continue;

    Configuration cur = s.config;
    std::vector<double> dab = {delta_ab(a, s.partition, 0, 1)};
    for (long long t = 0; t < T; ++t) {
      const Interaction x = {rng.uniform_index(5), rng.uniform_index(5)};
      cur = apply_interaction(cur, x, UpdateRule::linear(alpha));
      const CorrelationMatrix now = correlation(cur);
      REQUIRE(is_consistent(now, s.partition, 0, 1, 0.0).consistent);
      dab.push_back(delta_ab(now, s.partition, 0, 1));
    }
    for (std::size_t t1 = 0; t1 < dab.size(); ++t1)
      for (std::size_t t2 = t1; t2 < dab.size(); ++t2)
        REQUIRE(dab[t2] >= (1.0 - c) * dab[t1]);
    tested++;
  }
  REQUIRE(tested >= 100);
}

TEST_CASE("third-cluster interactions barely move consistent cross entries") {
  Rng rng(17);
  const double alpha = 1.0;
  int tested = 0;
  for (int iter = 0; iter < 200 && tested < 120; ++iter) {
    const double eb = epsilon_base(4, alpha);
    InactiveSpec spec;
    spec.n = 6;
    spec.d = 4;
    spec.k = 3;
    spec.sizes = {2, 2, 2};
    spec.delta0_max = eb / 2;
    spec.delta1_max = eb / 2;
    spec.cross_corr = eb / 4;
    auto s = sample_inactive(spec, rng);
    const CorrelationMatrix a = correlation(s.config);
    if (!is_consistent(a, s.partition, 0, 1, 0.0).consistent) continue;
    const double d0 = potentials(a, s.partition).delta0;

    // influencer from the third block acts on a member of block 0
    const std::size_t i = s.partition.blocks[0][rng.uniform_index(2)];
    const std::size_t l = s.partition.blocks[2][rng.uniform_index(2)];
    const Configuration v =
        apply_interaction(s.config, {i, l}, UpdateRule::linear(alpha));
    const CorrelationMatrix b = correlation(v);
    const double bound = (3.0 * alpha + alpha * alpha) * d0 * d0;
    for (std::size_t j : s.partition.blocks[1])
      REQUIRE(std::abs(b(i, j) - a(i, j)) <= bound + 1e-15);
    tested++;
  }
  REQUIRE(tested >= 120);
}

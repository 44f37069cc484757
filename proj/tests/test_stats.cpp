#include <doctest.h>

#include <cmath>
#include <set>

#include "abevo/rng.hpp"
#include "abevo/special.hpp"
#include "abevo/stats.hpp"
#include "oracle_helpers.hpp"

using namespace abevo;

TEST_CASE("chi-squared test trivial and derived examples") {
  // identical group distributions -> statistic 0, p = 1
  auto equal = stats::chi_squared_test({{10, 10}, {10, 10}});
  CHECK(equal.statistic == doctest::Approx(0.0));
  CHECK(equal.p_value == doctest::Approx(1.0));

  // [[20,5],[5,20]] -> statistic 18, dof 1, p ~ 2.2e-5
  auto skewed = stats::chi_squared_test({{20, 5}, {5, 20}});
  CHECK(skewed.statistic == doctest::Approx(18.0).epsilon(1e-12));
  CHECK(skewed.dof == 1.0);
  CHECK(skewed.p_value == doctest::Approx(2.2090496998585465e-05).epsilon(1e-8));
  CHECK(skewed.statistic ==
        doctest::Approx(oracle::ref_chi2_statistic({{20, 5}, {5, 20}})).epsilon(1e-12));

  CHECK_THROWS_AS(stats::chi_squared_test({}), DataError);
  CHECK_THROWS_AS(stats::chi_squared_test({{1, 2}}), DataError);
}

TEST_CASE("incomplete gamma and beta match the bottom-up continued fractions") {
  for (double a : {0.5, 1.0, 2.5, 7.0, 15.5}) {
    for (double x : {0.01, 0.4, 1.0, 2.3, 8.0, 30.0}) {
      CHECK(special::gamma_p(a, x) == doctest::Approx(oracle::cf_gamma_p(a, x)).epsilon(1e-10));
      CHECK(special::gamma_q(a, x) ==
            doctest::Approx(1.0 - oracle::cf_gamma_p(a, x)).epsilon(1e-10));
    }
  }
  for (double a : {0.5, 1.0, 3.0, 9.5}) {
    for (double b : {0.5, 2.0, 6.5}) {
      for (double x : {0.05, 0.3, 0.5, 0.8, 0.97}) {
        CHECK(special::beta_inc(a, b, x) ==
              doctest::Approx(oracle::cf_beta_inc(a, b, x)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("chi-squared p-values match the oracle on random tables") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    size_t rows = 2 + rng.below(3), cols = 2 + rng.below(4);
    std::vector<std::vector<double>> table(rows, std::vector<double>(cols, 0.0));
    for (auto& r : table)
      for (auto& c : r) c = static_cast<double>(1 + rng.below(40));
    auto result = stats::chi_squared_test(table);
    CHECK(result.statistic ==
          doctest::Approx(oracle::ref_chi2_statistic(table)).epsilon(1e-10));
    CHECK(result.p_value ==
          doctest::Approx(oracle::cf_chi2_sf(result.statistic, result.dof)).epsilon(1e-8));
  }
}

TEST_CASE("kruskal-wallis basics and oracle comparison") {
  // identical groups: H = 0 (all values distinct case)
  auto flat = stats::kruskal_wallis_test({{1, 2, 3}, {1.5, 2.5, 3.5}, {1.2, 2.2, 3.2}});
  CHECK(flat.dof == 2.0);
  CHECK(flat.p_value ==
        doctest::Approx(oracle::cf_chi2_sf(flat.statistic, flat.dof)).epsilon(1e-10));

  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n_groups = 2 + rng.below(4);
    std::vector<std::vector<double>> groups(n_groups);
    for (auto& g : groups) {
      size_t n = 3 + rng.below(20);
      for (size_t i = 0; i < n; ++i) g.push_back(static_cast<double>(rng.below(15)));
    }
    bool all_same = true;
    for (const auto& g : groups)
      for (double v : g) all_same = all_same && v == groups[0][0];
    if (all_same) continue;
    auto result = stats::kruskal_wallis_test(groups);
    CHECK(result.p_value ==
          doctest::Approx(oracle::cf_chi2_sf(result.statistic, result.dof)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(stats::kruskal_wallis_test({{1.0, 2.0}}), DataError);
  CHECK_THROWS_AS(stats::kruskal_wallis_test({{1.0, 1.0}, {1.0, 1.0}}), NumericError);
}

TEST_CASE("kruskal-wallis with two tie-free groups equals the Mann-Whitney statistic") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a, b;
    std::set<double> used;
    size_t na = 4 + rng.below(12), nb = 4 + rng.below(12);
    while (a.size() < na) {
      double v = rng.uniform();
      if (used.insert(v).second) a.push_back(v);
    }
    while (b.size() < nb) {
      double v = rng.uniform();
      if (used.insert(v).second) b.push_back(v);
    }
    // Mann-Whitney U -> H via the standard identity
    double u = 0.0;
    for (double x : a)
      for (double y : b) u += x > y ? 1.0 : 0.0;
    double n = static_cast<double>(na + nb);
    double mean_u = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
    double var_u = static_cast<double>(na) * static_cast<double>(nb) * (n + 1.0) / 12.0;
    double z = (u - mean_u);
    double h_expected = z * z / var_u;
    auto kw = stats::kruskal_wallis_test({a, b});
    CHECK(kw.statistic == doctest::Approx(h_expected).epsilon(1e-9));
  }
}

TEST_CASE("welch t-test values and oracle p-values") {
  auto result = stats::welch_t_test({1.1, 2.3, 2.9, 3.7, 4.1}, {4.8, 5.3, 6.1, 6.6});
  // hand-computed Welch statistic
  double ma = (1.1 + 2.3 + 2.9 + 3.7 + 4.1) / 5.0;
  double mb = (4.8 + 5.3 + 6.1 + 6.6) / 4.0;
  double va = 0, vb = 0;
  for (double x : {1.1, 2.3, 2.9, 3.7, 4.1}) va += (x - ma) * (x - ma);
  va /= 4.0;
  for (double x : {4.8, 5.3, 6.1, 6.6}) vb += (x - mb) * (x - mb);
  vb /= 3.0;
  double t = (ma - mb) / std::sqrt(va / 5.0 + vb / 4.0);
  CHECK(result.statistic == doctest::Approx(t).epsilon(1e-12));
  CHECK(result.p_value ==
        doctest::Approx(oracle::cf_t_sf_two_sided(result.statistic, result.dof)).epsilon(1e-10));

  CHECK_THROWS_AS(stats::welch_t_test({1.0, 1.0}, {1.0, 1.0}), NumericError);
  CHECK_THROWS_AS(stats::welch_t_test({1.0}, {2.0, 3.0}), DataError);

  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a, b;
    size_t na = 3 + rng.below(20), nb = 3 + rng.below(20);
    for (size_t i = 0; i < na; ++i) a.push_back(rng.normal());
    for (size_t i = 0; i < nb; ++i) b.push_back(0.4 + 1.3 * rng.normal());
    auto w = stats::welch_t_test(a, b);
    CHECK(w.p_value ==
          doctest::Approx(oracle::cf_t_sf_two_sided(w.statistic, w.dof)).epsilon(1e-8));
    CHECK(w.p_value >= 0.0);
    CHECK(w.p_value <= 1.0);
  }
}

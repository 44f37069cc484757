#pragma once

#include <string>
#include <vector>

#include "abevo/errors.hpp"

namespace abevo::stats {

struct TestResult {
  std::string test_name;
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

// Pearson chi-squared test of independence on an r x c contingency table
// with (r-1)(c-1) degrees of freedom.
TestResult chi_squared_test(const std::vector<std::vector<double>>& table);

// Kruskal-Wallis H with tie correction; chi-squared approximation with
// g-1 degrees of freedom.
TestResult kruskal_wallis_test(const std::vector<std::vector<double>>& groups);

// Welch two-sample t-test (unequal variances), two-sided p.
TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct SpecificityReport {
  TestResult germline_usage;   // chi-squared on label x germline-subtype counts
  TestResult mutation_counts;  // Kruskal-Wallis on per-label mutation counts
  bool has_pairwise_t = false;
  TestResult pairwise_t;       // Welch t when there are exactly two groups
};

}  // namespace abevo::stats

#include "abevo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abevo/special.hpp"

namespace abevo::stats {

TestResult chi_squared_test(const std::vector<std::vector<double>>& table) {
  if (table.empty() || table[0].empty()) throw DataError("chi_squared_test: empty table");
  const size_t rows = table.size();
  const size_t cols = table[0].size();
  for (const auto& row : table) {
    if (row.size() != cols) throw DataError("chi_squared_test: ragged table");
    for (double x : row)
      if (x < 0.0) throw DataError("chi_squared_test: negative count");
  }
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double total = 0.0;
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) {
      row_sum[i] += table[i][j];
      col_sum[j] += table[i][j];
      total += table[i][j];
    }
  }
  if (total <= 0.0) throw DataError("chi_squared_test: all-zero table");

  TestResult r;
  r.test_name = "chi-squared";
  r.dof = static_cast<double>((rows - 1) * (cols - 1));
  if (r.dof <= 0.0) throw DataError("chi_squared_test: table needs >= 2 rows and columns");
  double stat = 0.0;
  for (size_t i = 0; i < rows; ++i) {
    if (row_sum[i] == 0.0) continue;
    for (size_t j = 0; j < cols; ++j) {
      double expected = row_sum[i] * col_sum[j] / total;
      if (expected == 0.0) continue;
      double d = table[i][j] - expected;
      stat += d * d / expected;
    }
  }
  r.statistic = stat;
  r.p_value = special::chi_squared_sf(stat, r.dof);
  return r;
}

namespace {

// midranks over the pooled sample plus the tie-correction accumulator
std::vector<double> midranks(const std::vector<double>& pooled, double* tie_sum) {
  const size_t n = pooled.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(n);
  *tie_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    double t = static_cast<double>(j - i + 1);
    *tie_sum += t * t * t - t;
    i = j + 1;
  }
  return rank;
}

}  // namespace

TestResult kruskal_wallis_test(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DataError("kruskal_wallis_test: needs >= 2 groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty()) throw DataError("kruskal_wallis_test: empty group");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const double n = static_cast<double>(pooled.size());
  double tie_sum = 0.0;
  std::vector<double> rank = midranks(pooled, &tie_sum);

  double h = 0.0;
  size_t offset = 0;
  for (const auto& g : groups) {
    double rsum = 0.0;
    for (size_t k = 0; k < g.size(); ++k) rsum += rank[offset + k];
    h += rsum * rsum / static_cast<double>(g.size());
    offset += g.size();
  }
  h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
  double correction = 1.0 - tie_sum / (n * n * n - n);
  if (correction <= 0.0)
    throw NumericError("kruskal_wallis_test: all pooled values identical");
  h /= correction;

  TestResult r;
  r.test_name = "kruskal-wallis";
  r.statistic = h;
  r.dof = static_cast<double>(groups.size() - 1);
  r.p_value = special::chi_squared_sf(h, r.dof);
  return r;
}

TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("welch_t_test: each sample needs >= 2 values");
  auto mean_var = [](const std::vector<double>& x) {
    double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double v = 0.0;
    for (double xi : x) v += (xi - m) * (xi - m);
    v /= static_cast<double>(x.size() - 1);
    return std::pair<double, double>{m, v};
  };
  auto [ma, va] = mean_var(a);
  auto [mb, vb] = mean_var(b);
  double sa = va / static_cast<double>(a.size());
  double sb = vb / static_cast<double>(b.size());
  if (sa + sb <= 0.0) throw NumericError("welch_t_test: degenerate variance");

  TestResult r;
  r.test_name = "welch-t";
  r.statistic = (ma - mb) / std::sqrt(sa + sb);
  r.dof = (sa + sb) * (sa + sb) /
          (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  r.p_value = special::student_t_sf_two_sided(r.statistic, r.dof);
  return r;
}

}  // namespace abevo::stats

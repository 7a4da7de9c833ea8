#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mtseg {

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped and tied absolute differences get averaged ranks. Uses the
/// exact sign-flip distribution for n <= 25 and the normal approximation with
/// tie correction beyond. All differences zero yields p = 1 by convention.
inline double wilcoxon_signed_rank(const std::vector<double>& a,
                                   const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("wilcoxon_signed_rank: unequal sample lengths");
  std::vector<double> diff;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0) diff.push_back(d);
  }
  const int n = static_cast<int>(diff.size());
  if (n == 0) return 1.0;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(diff[i]) < std::abs(diff[j]);
  });
  std::vector<double> rank(n);
  std::vector<int> tie_sizes;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::abs(diff[order[j]]) == std::abs(diff[order[i]])) ++j;
    const double avg = (i + 1 + j) / 2.0;  // mean of ranks i+1 .. j
    for (int k = i; k < j; ++k) rank[order[k]] = avg;
    tie_sizes.push_back(j - i);
    i = j;
  }

  double w_plus = 0;
  for (int i = 0; i < n; ++i)
    if (diff[i] > 0) w_plus += rank[i];

  if (n <= 25) {
    // exact distribution of 2*W+ over the 2^n equiprobable sign assignments
    const int max2 = n * (n + 1);
    std::vector<double> count(max2 + 1, 0.0);
    count[0] = 1.0;
    for (int i = 0; i < n; ++i) {
      const int r2 = static_cast<int>(std::lround(2.0 * rank[i]));
      for (int s = max2; s >= r2; --s) count[s] += count[s - r2];
    }
    const double total = std::pow(2.0, n);
    const int w2 = static_cast<int>(std::lround(2.0 * w_plus));
    double le = 0, ge = 0;
    for (int s = 0; s <= max2; ++s) {
      if (s <= w2) le += count[s];
      if (s >= w2) ge += count[s];
    }
    return std::min(1.0, 2.0 * std::min(le, ge) / total);
  }

  const double mu = n * (n + 1) / 4.0;
  double tie_term = 0;
  for (int t : tie_sizes) tie_term += static_cast<double>(t) * t * t - t;
  const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_term / 48.0;
  if (var <= 0) return 1.0;
  const double z = (w_plus - mu) / std::sqrt(var);
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

}  // namespace mtseg

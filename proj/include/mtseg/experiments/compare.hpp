#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtseg/experiments/runner.hpp"
#include "mtseg/stats/wilcoxon.hpp"

namespace mtseg {

/// Paired comparison of two result sets over identical (fold, frame) keys:
/// per-metric medians/means/stds plus a two-sided Wilcoxon signed-rank p.
struct Comparison {
  std::string label_a, label_b;
  Aggregate dice_a, dice_b;
  Aggregate hd95_a, hd95_b;
  double dice_p = 1.0;
  double hd95_p = 1.0;
  int hd95_excluded_pairs = 0;
};

inline Comparison compare(const std::vector<MetricRecord>& res_a,
                          const std::vector<MetricRecord>& res_b,
                          const std::string& label_a = "SL",
                          const std::string& label_b = "MT") {
  auto key_map = [](const std::vector<MetricRecord>& rs) {
    std::map<std::pair<int, std::string>, const MetricRecord*> m;
    for (const auto& r : rs) m[{r.fold, r.frame}] = &r;
    return m;
  };
  const auto ma = key_map(res_a);
  const auto mb = key_map(res_b);
  if (ma.size() != res_a.size() || mb.size() != res_b.size())
    throw std::invalid_argument("compare: duplicate (fold, frame) records");
  if (ma.size() != mb.size())
    throw std::invalid_argument("compare: result sets are not paired");
  for (const auto& [k, v] : ma)
    if (!mb.count(k))
      throw std::invalid_argument("compare: frame " + k.second +
                                  " missing from second result set");

  Comparison cmp;
  cmp.label_a = label_a;
  cmp.label_b = label_b;
  std::vector<double> da, db, ha, hb;
  for (const auto& [k, ra] : ma) {
    const MetricRecord* rb = mb.at(k);
    da.push_back(ra->dice);
    db.push_back(rb->dice);
    if (ra->hd95 && rb->hd95) {  // HD pairs drop frames undefined on either side
      ha.push_back(*ra->hd95);
      hb.push_back(*rb->hd95);
    } else {
      ++cmp.hd95_excluded_pairs;
    }
  }
  cmp.dice_a = aggregate(da);
  cmp.dice_b = aggregate(db);
  cmp.hd95_a = aggregate(ha);
  cmp.hd95_b = aggregate(hb);
  cmp.dice_p = wilcoxon_signed_rank(da, db);
  cmp.hd95_p = ha.empty() ? 1.0 : wilcoxon_signed_rank(ha, hb);
  return cmp;
}

/// Text table with the reporting schema columns
/// Metric | Method | Median | Mean | Std | Wilcoxon.
inline std::string comparison_table(const Comparison& cmp) {
  char buf[160];
  std::string out;
  out += "Metric              Method  Median    Mean      Std       Wilcoxon\n";
  auto row = [&](const char* metric, const std::string& method, const Aggregate& a,
                 double p, bool with_p, const char* fmt) {
    char num[96];
    std::snprintf(num, sizeof(num), fmt, a.median, a.mean, a.stddev);
    if (with_p)
      std::snprintf(buf, sizeof(buf), "%-19s %-7s %s %.3g\n", metric, method.c_str(),
                    num, p);
    else
      std::snprintf(buf, sizeof(buf), "%-19s %-7s %s\n", metric, method.c_str(), num);
    out += buf;
  };
  row("Dice Score", cmp.label_a, cmp.dice_a, cmp.dice_p, true,
      "%-9.4f %-9.4f %-9.4f");
  row("", cmp.label_b, cmp.dice_b, 0, false, "%-9.4f %-9.4f %-9.4f");
  row("Hausdorff Distance", cmp.label_a, cmp.hd95_a, cmp.hd95_p, true,
      "%-9.2f %-9.2f %-9.2f");
  row("", cmp.label_b, cmp.hd95_b, 0, false, "%-9.2f %-9.2f %-9.2f");
  if (cmp.hd95_excluded_pairs > 0) {
    std::snprintf(buf, sizeof(buf), "# HD95 pairs excluded (undefined): %d\n",
                  cmp.hd95_excluded_pairs);
    out += buf;
  }
  return out;
}

}  // namespace mtseg

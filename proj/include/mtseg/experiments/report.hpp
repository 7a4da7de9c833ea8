#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mtseg/experiments/compare.hpp"
#include "mtseg/experiments/svg_plot.hpp"

namespace mtseg {

/// Emits the sweep artefacts under `out_dir`: per-cell aggregate CSV,
/// SL-vs-MT comparison tables, the labelled-fraction curves (Dice and HD95)
/// and the unlabelled-fraction curves (one series per labelled fraction).
/// Pure function of the SweepResult; regenerating from the same input
/// reproduces the same bytes.
inline void report(const SweepResult& sweep, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (sweep.cells.empty()) throw std::invalid_argument("report: empty sweep result");
  fs::create_directories(out_dir);
  char buf[256];

  {
    std::ofstream out(out_dir + "/aggregates.csv", std::ios::trunc);
    out << "cell,mode,labelled_fraction,unlabelled_fraction,n,dice_median,dice_mean,"
           "dice_std,hd95_median,hd95_mean,hd95_std,hd95_excluded,failed_folds\n";
    for (const auto& cell : sweep.cells) {
      const CellAggregates agg = cell_aggregates(cell.records);
      std::snprintf(buf, sizeof(buf),
                    "%s,%s,%g,%g,%d,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f,%d,%zu\n",
                    cell_id(cell.spec).c_str(),
                    cell.spec.mode == TrainMode::SL ? "SL" : "MT",
                    cell.spec.labelled_fraction,
                    cell.spec.mode == TrainMode::SL ? 0.0 : cell.spec.unlabelled_fraction,
                    agg.dice.n, agg.dice.median, agg.dice.mean, agg.dice.stddev,
                    agg.hd95.median, agg.hd95.mean, agg.hd95.stddev,
                    agg.hd95_excluded, cell.failed_folds.size());
      out << buf;
    }
  }

  {
    std::ofstream meta(out_dir + "/metadata.txt", std::ios::trunc);
    meta << "hd95_convention = max over directions of nearest-rank 95th percentile\n";
    meta << "wilcoxon_pairing = per test frame, pooled across folds\n";
    meta << "dice_denominator = squared\n";
  }

  const double max_uf = [&] {
    double m = 0;
    for (const auto& c : sweep.cells)
      if (c.spec.mode == TrainMode::MT) m = std::max(m, c.spec.unlabelled_fraction);
    return m;
  }();

  // Table-schema comparisons: SL vs MT (at the largest unlabelled fraction)
  // for every labelled fraction present on both sides.
  {
    std::ofstream tables(out_dir + "/comparisons.txt", std::ios::trunc);
    for (const auto& cell : sweep.cells) {
      if (cell.spec.mode != TrainMode::SL || cell.records.empty()) continue;
      const auto* mt = sweep.find({TrainMode::MT, cell.spec.labelled_fraction, max_uf});
      if (!mt || mt->records.empty()) continue;
      tables << "== labelled fraction " << format_frac(cell.spec.labelled_fraction)
             << ", unlabelled fraction " << format_frac(max_uf) << " ==\n";
      try {
        tables << comparison_table(compare(cell.records, mt->records, "SL", "MT"))
               << "\n";
      } catch (const std::exception& e) {
        tables << "comparison unavailable: " << e.what() << "\n\n";
      }
    }
  }

  // Fig. 3 analogue: metric vs labelled fraction, SL and MT series.
  {
    PlotSeries sl_d{"SL", {}}, mt_d{"MT", {}}, sl_h{"SL", {}}, mt_h{"MT", {}};
    for (const auto& cell : sweep.cells) {
      if (cell.records.empty()) continue;
      const CellAggregates agg = cell_aggregates(cell.records);
      if (cell.spec.mode == TrainMode::SL) {
        sl_d.points.push_back({cell.spec.labelled_fraction, agg.dice.median});
        if (agg.hd95.n > 0)
          sl_h.points.push_back({cell.spec.labelled_fraction, agg.hd95.median});
      } else if (cell.spec.unlabelled_fraction == max_uf) {
        mt_d.points.push_back({cell.spec.labelled_fraction, agg.dice.median});
        if (agg.hd95.n > 0)
          mt_h.points.push_back({cell.spec.labelled_fraction, agg.hd95.median});
      }
    }
    std::vector<PlotSeries> dice_series, hd_series;
    if (!sl_d.points.empty()) dice_series.push_back(sl_d);
    if (!mt_d.points.empty()) dice_series.push_back(mt_d);
    if (!sl_h.points.empty()) hd_series.push_back(sl_h);
    if (!mt_h.points.empty()) hd_series.push_back(mt_h);
    if (!dice_series.empty())
      write_line_chart(out_dir + "/dice_vs_labelled.svg",
                       "Median Dice vs labelled fraction", "labelled fraction",
                       "median Dice", dice_series);
    if (!hd_series.empty())
      write_line_chart(out_dir + "/hd95_vs_labelled.svg",
                       "Median HD95 vs labelled fraction", "labelled fraction",
                       "median HD95 (px)", hd_series);
  }

  // Fig. 4 analogue: median Dice vs unlabelled fraction, one series per
  // labelled fraction.
  {
    std::vector<PlotSeries> series;
    for (const auto& cell : sweep.cells) {
      if (cell.spec.mode != TrainMode::MT || cell.records.empty()) continue;
      const std::string label = "MT (" + format_frac(cell.spec.labelled_fraction) + ")";
      PlotSeries* s = nullptr;
      for (auto& existing : series)
        if (existing.label == label) s = &existing;
      if (!s) {
        series.push_back({label, {}});
        s = &series.back();
      }
      const CellAggregates agg = cell_aggregates(cell.records);
      s->points.push_back({cell.spec.unlabelled_fraction, agg.dice.median});
    }
    for (auto& s : series)
      std::sort(s.points.begin(), s.points.end());
    if (!series.empty())
      write_line_chart(out_dir + "/dice_vs_unlabelled.svg",
                       "Median Dice vs unlabelled fraction", "unlabelled fraction",
                       "median Dice", series);
  }
}

}  // namespace mtseg

#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mtseg/data/preprocess.hpp"
#include "mtseg/data/synth.hpp"
#include "mtseg/experiments/folds.hpp"
#include "mtseg/metrics/masks.hpp"
#include "mtseg/teacher/trainer.hpp"

namespace mtseg {

/// One cell of the labelled x unlabelled sweep grid.
struct CellSpec {
  TrainMode mode = TrainMode::MT;
  double labelled_fraction = 1.0;
  double unlabelled_fraction = 1.0;  // ignored for SL

  bool operator==(const CellSpec& o) const {
    return mode == o.mode && labelled_fraction == o.labelled_fraction &&
           (mode == TrainMode::SL || unlabelled_fraction == o.unlabelled_fraction);
  }
};

inline std::string format_frac(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

inline std::string cell_id(const CellSpec& cell) {
  if (cell.mode == TrainMode::SL) return "SL_l" + format_frac(cell.labelled_fraction);
  return "MT_l" + format_frac(cell.labelled_fraction) + "_u" +
         format_frac(cell.unlabelled_fraction);
}

/// Deterministic per-(cell, fold) seed derived from the base seed.
inline uint64_t cell_seed(const CellSpec& cell, int fold, uint64_t base_seed) {
  return hash_combine(fnv1a(cell_id(cell) + "/fold" + std::to_string(fold)), base_seed);
}

inline Tensor<uint8_t> mask_to_tensor_resized(const Tensor<uint8_t>& mask,
                                              int target_h, int target_w) {
  if (mask.h() == target_h && mask.w() == target_w) return mask;
  // nearest resize, used only when evaluating at a non-native resolution
  Tensor<uint8_t> out(1, target_h, target_w, 1);
  for (int y = 0; y < target_h; ++y)
    for (int x = 0; x < target_w; ++x) {
      const int sy = std::min(static_cast<int>((y + 0.5) * mask.h() / target_h),
                              mask.h() - 1);
      const int sx = std::min(static_cast<int>((x + 0.5) * mask.w() / target_w),
                              mask.w() - 1);
      out.at(0, y, x, 0) = mask.at(0, sy, sx, 0);
    }
  return out;
}

inline BinaryMask tensor_to_mask(const Tensor<uint8_t>& t) {
  BinaryMask m(t.h(), t.w());
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x) m.at(y, x) = t.at(0, y, x, 0) ? 1 : 0;
  return m;
}

/// Evaluates a model on every labelled frame of one group: standardised
/// eval-mode forward, post-processing to the target size, Dice and HD95
/// against the ground truth.
template <typename T>
std::vector<MetricRecord> evaluate_on_group(const ModelParams<T>& params,
                                            const GroupedDataset<T>& ds,
                                            const std::string& group_id, int fold_id,
                                            int target_w = 0, int target_h = 0) {
  if (target_w <= 0) target_w = ds.width;
  if (target_h <= 0) target_h = ds.height;
  std::vector<MetricRecord> records;
  const auto& group = ds.group(group_id);
  for (int fi : group.frames) {
    const Frame<T>& f = ds.frames[fi];
    if (!f.labelled) continue;
    Tensor<T> x = f.image;
    standardize_item(x, 0);
    const Tensor<T> prob = forward(params, x, /*train_mode=*/false);
    const BinaryMask pred = postprocess(prob, target_w, target_h);
    const BinaryMask gt =
        tensor_to_mask(mask_to_tensor_resized(f.mask, target_h, target_w));
    MetricRecord rec;
    rec.frame = group_id + "/" + f.id;
    rec.fold = fold_id;
    rec.dice = dice_score(pred, gt);
    rec.hd95 = hausdorff95(pred, gt);
    records.push_back(std::move(rec));
  }
  return records;
}

/// Trains one sweep cell on one fold and evaluates every labelled test frame.
/// Test-group frames (labelled or not) never enter the training pools.
template <typename T>
std::vector<MetricRecord> run_fold(const GroupedDataset<T>& ds, const FoldPlan& plan,
                                   const SampleSpec& spec, TrainMode mode,
                                   TrainConfig cfg) {
  spec.validate();
  GroupedDataset<T> train_ds = fold_train_subset(ds, plan);
  SampleSpec eff = spec;
  if (mode == TrainMode::SL) eff.unlabelled_fraction = 0.0;
  train_ds = sample_fractions(train_ds, eff);
  for (const auto& g : train_ds.groups)
    if (g.id == plan.test_group)
      throw std::logic_error("run_fold: test group leaked into training data");

  cfg.mode = mode;
  cfg.seed = spec.seed;
  TrainState<T> state;
  try {
    state = train(train_ds, cfg);
  } catch (const std::exception& e) {
    throw std::runtime_error("run_fold: fold " + std::to_string(plan.fold_id) +
                             " failed: " + e.what());
  }
  return evaluate_on_group(state.eval_params(mode), ds, plan.test_group,
                           plan.fold_id);
}

// ---- sweep orchestration ----

struct SweepGrid {
  std::vector<double> labelled_fractions{0.02, 0.10, 0.25, 0.50, 1.00};
  std::vector<double> unlabelled_fractions{0.0, 0.0625, 0.25, 1.00};
  bool include_sl = true;
  bool include_mt = true;
  std::vector<int> folds;  // empty = all folds

  std::vector<CellSpec> cells() const {
    std::vector<CellSpec> out;
    if (include_sl)
      for (double lf : labelled_fractions) out.push_back({TrainMode::SL, lf, 0.0});
    if (include_mt)
      for (double lf : labelled_fractions)
        for (double uf : unlabelled_fractions)
          out.push_back({TrainMode::MT, lf, uf});
    return out;
  }
};

struct SweepResult {
  struct Cell {
    CellSpec spec;
    std::vector<MetricRecord> records;
    std::vector<std::string> failed_folds;
  };
  std::vector<Cell> cells;

  const Cell* find(const CellSpec& spec) const {
    for (const auto& c : cells)
      if (c.spec == spec) return &c;
    return nullptr;
  }
};

inline void write_metric_records(const std::string& run_id,
                                 const std::vector<MetricRecord>& records,
                                 const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << "run_id,fold,frame,dice,hd95,hd95_defined\n";
    char line[256];
    for (const auto& r : records) {
      if (r.hd95)
        std::snprintf(line, sizeof(line), "%s,%d,%s,%.6f,%.4f,1\n", run_id.c_str(),
                      r.fold, r.frame.c_str(), r.dice, *r.hd95);
      else
        std::snprintf(line, sizeof(line), "%s,%d,%s,%.6f,,0\n", run_id.c_str(),
                      r.fold, r.frame.c_str(), r.dice);
      out << line;
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<MetricRecord> read_metric_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<MetricRecord> records;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string run, fold, frame, dice, hd, defined;
    std::getline(ss, run, ',');
    std::getline(ss, fold, ',');
    std::getline(ss, frame, ',');
    std::getline(ss, dice, ',');
    std::getline(ss, hd, ',');
    std::getline(ss, defined, ',');
    MetricRecord r;
    r.fold = std::stoi(fold);
    r.frame = frame;
    r.dice = std::stod(dice);
    if (defined == "1") r.hd95 = std::stod(hd);
    records.push_back(std::move(r));
  }
  return records;
}

/// Executes every (cell x fold) job. Completed jobs (metrics.csv on disk) are
/// skipped, so an interrupted sweep resumes where it stopped; results are
/// always reloaded from disk so fresh and resumed sweeps agree byte-for-byte.
/// Failures are recorded per job and the sweep continues.
template <typename T>
SweepResult run_sweep(const GroupedDataset<T>& ds, const SweepGrid& grid,
                      const TrainConfig& base_cfg, const std::string& out_dir,
                      uint64_t base_seed, int jobs = 1) {
  namespace fs = std::filesystem;
  auto folds = make_folds(ds);
  if (!grid.folds.empty()) {
    std::vector<FoldPlan> keep;
    for (const auto& p : folds)
      if (std::find(grid.folds.begin(), grid.folds.end(), p.fold_id) != grid.folds.end())
        keep.push_back(p);
    folds = keep;
  }
  const auto cells = grid.cells();

  struct Job { CellSpec cell; FoldPlan plan; std::string dir; };
  std::vector<Job> todo;
  for (const auto& cell : cells)
    for (const auto& plan : folds) {
      const std::string dir = out_dir + "/runs/" + cell_id(cell) + "/fold" +
                              std::to_string(plan.fold_id);
      todo.push_back({cell, plan, dir});
    }

  auto run_job = [&](const Job& job) {
    const std::string metrics_path = job.dir + "/metrics.csv";
    if (fs::exists(metrics_path)) return;  // resume: already done
    fs::create_directories(job.dir);
    SampleSpec spec;
    spec.labelled_fraction = job.cell.labelled_fraction;
    spec.unlabelled_fraction =
        job.cell.mode == TrainMode::SL ? 0.0 : job.cell.unlabelled_fraction;
    spec.seed = cell_seed(job.cell, job.plan.fold_id, base_seed);
    TrainConfig cfg = base_cfg;
    cfg.out_dir = job.dir;
    try {
      const auto records = run_fold(ds, job.plan, spec, job.cell.mode, cfg);
      write_metric_records(cell_id(job.cell), records, metrics_path);
      std::error_code ec;
      fs::remove(job.dir + "/FAILED", ec);
    } catch (const std::exception& e) {
      std::ofstream fail(job.dir + "/FAILED", std::ios::trunc);
      fail << e.what() << "\n";
    }
  };

  if (jobs <= 1) {
    for (const auto& job : todo) run_job(job);
  } else {
    // job-level parallelism; cap intra-op threads so workers do not oversubscribe
    const int saved_threads = num_threads();
    set_num_threads(1);
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < jobs; ++t)
      workers.emplace_back([&]() {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= todo.size()) return;
          run_job(todo[i]);
        }
      });
    for (auto& w : workers) w.join();
    set_num_threads(saved_threads);
  }

  SweepResult result;
  for (const auto& cell : cells) {
    typename SweepResult::Cell rc;
    rc.spec = cell;
    for (const auto& plan : folds) {
      const std::string dir = out_dir + "/runs/" + cell_id(cell) + "/fold" +
                              std::to_string(plan.fold_id);
      const std::string metrics_path = dir + "/metrics.csv";
      if (fs::exists(metrics_path)) {
        auto recs = read_metric_records(metrics_path);
        rc.records.insert(rc.records.end(), recs.begin(), recs.end());
      } else {
        rc.failed_folds.push_back("fold" + std::to_string(plan.fold_id));
      }
    }
    result.cells.push_back(std::move(rc));
  }
  return result;
}

// ---- aggregates ----

struct Aggregate {
  int n = 0;
  double median = 0, mean = 0, stddev = 0;
};

inline Aggregate aggregate(std::vector<double> values) {
  Aggregate a;
  a.n = static_cast<int>(values.size());
  if (values.empty()) return a;
  std::sort(values.begin(), values.end());
  const size_t m = values.size() / 2;
  a.median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  double sum = 0;
  for (double v : values) sum += v;
  a.mean = sum / a.n;
  if (a.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / (a.n - 1));
  }
  return a;
}

struct CellAggregates {
  Aggregate dice;
  Aggregate hd95;
  int hd95_excluded = 0;
};

inline CellAggregates cell_aggregates(const std::vector<MetricRecord>& records) {
  CellAggregates out;
  std::vector<double> dice, hd;
  for (const auto& r : records) {
    dice.push_back(r.dice);
    if (r.hd95)
      hd.push_back(*r.hd95);
    else
      ++out.hd95_excluded;
  }
  out.dice = aggregate(std::move(dice));
  out.hd95 = aggregate(std::move(hd));
  return out;
}

/// Desk-scale profile: runs an SL-vs-MT comparison on synthetic data on a CPU
/// in minutes while exercising every code path.
inline TrainConfig desk_profile() {
  TrainConfig cfg;
  cfg.net.depth = 3;
  cfg.net.base_filters = 8;
  cfg.iterations = 800;
  cfg.batch_size = 8;
  cfg.labelled_per_batch = 4;
  cfg.adam.lr = 1e-3;
  cfg.ramp.ramp_length = 400;
  cfg.ramp.lambda_max = 0.1;
  cfg.ema.switch_step = 400;
  return cfg;
}

/// Full-scale profile matching the reference training setup.
inline TrainConfig paper_profile() {
  TrainConfig cfg;
  cfg.net.depth = 4;
  cfg.net.base_filters = 16;
  cfg.iterations = 10000;
  cfg.batch_size = 32;
  cfg.labelled_per_batch = 16;
  cfg.adam.lr = 1e-4;
  cfg.ramp.ramp_length = 1000;
  cfg.ramp.lambda_max = 0.1;
  cfg.ema.switch_step = 1000;
  return cfg;
}

inline SynthConfig desk_synth_profile() {
  SynthConfig cfg;
  cfg.groups = 8;
  cfg.frames_per_group = 100;
  cfg.labelled_per_group = 20;
  cfg.height = 64;
  cfg.width = 64;
  return cfg;
}

}  // namespace mtseg

// Command-line front door: synth / train / sweep / evaluate / report.
#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "mtseg/mtseg.hpp"

using namespace mtseg;

namespace {

TrainConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw std::runtime_error("unknown profile: " + name + " (expected desk or paper)");
}

TrainConfig apply_config(TrainConfig cfg, const Config& file) {
  cfg.iterations = file.get_long("train.iterations", cfg.iterations);
  cfg.batch_size = file.get_int("train.batch_size", cfg.batch_size);
  cfg.labelled_per_batch = file.get_int("train.labelled_per_batch", cfg.labelled_per_batch);
  cfg.adam.lr = file.get_double("train.lr", cfg.adam.lr);
  cfg.l2_weight = file.get_double("train.l2_weight", cfg.l2_weight);
  cfg.checkpoint_interval = file.get_long("train.checkpoint_interval", cfg.checkpoint_interval);
  cfg.ramp.ramp_length = file.get_long("ramp.length", cfg.ramp.ramp_length);
  cfg.ramp.lambda_max = file.get_double("ramp.lambda_max", cfg.ramp.lambda_max);
  cfg.ema.alpha_rampup = file.get_double("ema.alpha_rampup", cfg.ema.alpha_rampup);
  cfg.ema.alpha_after = file.get_double("ema.alpha_after", cfg.ema.alpha_after);
  cfg.ema.switch_step = file.get_long("ema.switch_step", cfg.ema.switch_step);
  cfg.noise.rotation_deg = file.get_double("noise.rotation_deg", cfg.noise.rotation_deg);
  cfg.noise.scale_min = file.get_double("noise.scale_min", cfg.noise.scale_min);
  cfg.noise.scale_max = file.get_double("noise.scale_max", cfg.noise.scale_max);
  cfg.noise.shear_deg = file.get_double("noise.shear_deg", cfg.noise.shear_deg);
  cfg.noise.translation_frac =
      file.get_double("noise.translation_frac", cfg.noise.translation_frac);
  cfg.noise.fill_value = file.get_double("noise.fill_value", cfg.noise.fill_value);
  cfg.augment_cfg.contrast_min =
      file.get_double("augment.contrast_min", cfg.augment_cfg.contrast_min);
  cfg.augment_cfg.contrast_max =
      file.get_double("augment.contrast_max", cfg.augment_cfg.contrast_max);
  cfg.augment_cfg.brightness =
      file.get_double("augment.brightness", cfg.augment_cfg.brightness);
  cfg.augment_enabled = file.get_bool("augment.enabled", cfg.augment_enabled);
  cfg.net.depth = file.get_int("net.depth", cfg.net.depth);
  cfg.net.base_filters = file.get_int("net.base_filters", cfg.net.base_filters);
  cfg.dice.eps = file.get_double("dice.eps", cfg.dice.eps);
  cfg.dice.squared = file.get_bool("dice.squared", cfg.dice.squared);
  return cfg;
}

SweepGrid grid_from_config(const Config& file) {
  SweepGrid grid;
  grid.labelled_fractions = file.get_list("sweep.labelled", grid.labelled_fractions);
  grid.unlabelled_fractions =
      file.get_list("sweep.unlabelled", grid.unlabelled_fractions);
  grid.include_sl = file.get_bool("sweep.include_sl", grid.include_sl);
  grid.include_mt = file.get_bool("sweep.include_mt", grid.include_mt);
  for (double f : file.get_list("sweep.folds", {}))
    grid.folds.push_back(static_cast<int>(f));
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised mean-teacher segmentation experiments"};
  app.require_subcommand(1);

  std::string config_path, profile = "desk";
  uint64_t seed = 0;
  app.add_option("--config", config_path, "flat key = value config file")
      ->configurable(false);
  app.add_option("--seed", seed, "base RNG seed");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic grouped dataset");
  SynthConfig synth_cfg = desk_synth_profile();
  std::string synth_out;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--groups", synth_cfg.groups, "number of groups");
  synth->add_option("--frames", synth_cfg.frames_per_group, "frames per group");
  synth->add_option("--labelled", synth_cfg.labelled_per_group, "labelled frames per group");
  synth->add_option("--width", synth_cfg.width, "frame width");
  synth->add_option("--height", synth_cfg.height, "frame height");

  // train
  auto* train_cmd = app.add_subcommand("train", "train one sweep cell on one fold");
  std::string train_data, train_out, train_mode = "MT";
  double labelled_frac = 1.0, unlabelled_frac = 1.0;
  int train_fold = 0;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "run output directory")->required();
  train_cmd->add_option("--mode", train_mode, "SL or MT");
  train_cmd->add_option("--labelled-frac", labelled_frac, "labelled fraction");
  train_cmd->add_option("--unlabelled-frac", unlabelled_frac, "unlabelled fraction");
  train_cmd->add_option("--fold", train_fold, "leave-one-group-out fold index");
  train_cmd->add_option("--profile", profile, "desk or paper profile");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run the labelled x unlabelled grid");
  std::string sweep_data, sweep_out;
  int sweep_jobs = 1;
  sweep_cmd->add_option("--data", sweep_data, "dataset directory")->required();
  sweep_cmd->add_option("--out", sweep_out, "sweep output directory")->required();
  sweep_cmd->add_option("--jobs", sweep_jobs, "parallel jobs");
  sweep_cmd->add_option("--profile", profile, "desk or paper profile");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on one group");
  std::string eval_ckpt, eval_data, eval_group, eval_out;
  int eval_fold = 0, eval_tw = 0, eval_th = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--group", eval_group, "group id to evaluate")->required();
  eval_cmd->add_option("--out", eval_out, "metrics CSV path")->required();
  eval_cmd->add_option("--fold", eval_fold, "fold id recorded in the CSV");
  eval_cmd->add_option("--target-width", eval_tw, "evaluation width (default native)");
  eval_cmd->add_option("--target-height", eval_th, "evaluation height (default native)");

  // report
  auto* report_cmd = app.add_subcommand("report", "aggregate sweep results into figures");
  std::string report_in, report_out;
  report_cmd->add_option("--in", report_in, "sweep output directory")->required();
  report_cmd->add_option("--out", report_out, "figures directory")->required();
  report_cmd->add_option("--profile", profile, "desk or paper profile");

  CLI11_PARSE(app, argc, argv);

  try {
    Config file_cfg;
    if (!config_path.empty()) file_cfg = Config::from_file(config_path);
    if (file_cfg.has("threads")) set_num_threads(file_cfg.get_int("threads", 0));

    if (*synth) {
      Rng rng(seed);
      const auto ds = synth_generate<float>(synth_cfg, rng);
      write_dataset(ds, synth_out);
      std::printf("wrote %d groups x %d frames to %s\n", synth_cfg.groups,
                  synth_cfg.frames_per_group, synth_out.c_str());
    } else if (*train_cmd) {
      const auto ds = load_dataset<float>(train_data);
      TrainConfig cfg = apply_config(profile_by_name(profile), file_cfg);
      cfg.out_dir = train_out;
      const auto folds = make_folds(ds);
      if (train_fold < 0 || train_fold >= static_cast<int>(folds.size()))
        throw std::runtime_error("fold index out of range (dataset has " +
                                 std::to_string(folds.size()) + " folds)");
      SampleSpec spec;
      spec.labelled_fraction = labelled_frac;
      spec.unlabelled_fraction = unlabelled_frac;
      spec.seed = seed;
      const auto mode = parse_mode(train_mode);
      const auto records = run_fold(ds, folds[train_fold], spec, mode, cfg);
      std::filesystem::create_directories(train_out);
      write_metric_records(cell_id({mode, labelled_frac, unlabelled_frac}), records,
                           train_out + "/metrics.csv");
      const auto agg = cell_aggregates(records);
      std::printf("fold %d: %d test frames, median dice %.4f, median hd95 %.2f\n",
                  train_fold, agg.dice.n, agg.dice.median, agg.hd95.median);
    } else if (*sweep_cmd) {
      const auto ds = load_dataset<float>(sweep_data);
      const TrainConfig cfg = apply_config(profile_by_name(profile), file_cfg);
      const SweepGrid grid = grid_from_config(file_cfg);
      const auto result = run_sweep(ds, grid, cfg, sweep_out, seed, sweep_jobs);
      int done = 0, failed = 0;
      for (const auto& cell : result.cells) {
        done += static_cast<int>(cell.records.size());
        failed += static_cast<int>(cell.failed_folds.size());
      }
      std::printf("sweep complete: %zu cells, %d records, %d failed fold runs\n",
                  result.cells.size(), done, failed);
      if (failed > 0) return 2;
    } else if (*eval_cmd) {
      const auto ds = load_dataset<float>(eval_data);
      const auto ckpt = load_checkpoint<float>(eval_ckpt);
      const auto records = evaluate_on_group(ckpt.params, ds, eval_group, eval_fold,
                                             eval_tw, eval_th);
      write_metric_records("evaluate", records, eval_out);
      const auto agg = cell_aggregates(records);
      std::printf("%d frames, median dice %.4f, median hd95 %.2f (%d undefined)\n",
                  agg.dice.n, agg.dice.median, agg.hd95.median, agg.hd95_excluded);
    } else if (*report_cmd) {
      // rebuild the sweep result from the on-disk run records
      SweepResult sweep;
      namespace fs = std::filesystem;
      const fs::path runs = fs::path(report_in) / "runs";
      if (!fs::is_directory(runs))
        throw std::runtime_error("no runs/ directory under " + report_in);
      for (const auto& cell_dir : fs::directory_iterator(runs)) {
        if (!cell_dir.is_directory()) continue;
        const std::string id = cell_dir.path().filename().string();
        SweepResult::Cell cell;
        // parse "SL_l<frac>" / "MT_l<frac>_u<frac>"
        if (id.rfind("SL_l", 0) == 0) {
          cell.spec = {TrainMode::SL, std::stod(id.substr(4)), 0.0};
        } else if (id.rfind("MT_l", 0) == 0) {
          const auto upos = id.find("_u");
          if (upos == std::string::npos) continue;
          cell.spec = {TrainMode::MT, std::stod(id.substr(4, upos - 4)),
                       std::stod(id.substr(upos + 2))};
        } else {
          continue;
        }
        std::vector<fs::path> fold_dirs;
        for (const auto& fd : fs::directory_iterator(cell_dir))
          if (fd.is_directory()) fold_dirs.push_back(fd.path());
        std::sort(fold_dirs.begin(), fold_dirs.end());
        for (const auto& fd : fold_dirs) {
          const auto mp = fd / "metrics.csv";
          if (fs::exists(mp)) {
            const auto recs = read_metric_records(mp.string());
            cell.records.insert(cell.records.end(), recs.begin(), recs.end());
          } else {
            cell.failed_folds.push_back(fd.filename().string());
          }
        }
        sweep.cells.push_back(std::move(cell));
      }
      std::sort(sweep.cells.begin(), sweep.cells.end(),
                [](const SweepResult::Cell& a, const SweepResult::Cell& b) {
                  if (a.spec.mode != b.spec.mode) return a.spec.mode == TrainMode::SL;
                  if (a.spec.labelled_fraction != b.spec.labelled_fraction)
                    return a.spec.labelled_fraction < b.spec.labelled_fraction;
                  return a.spec.unlabelled_fraction < b.spec.unlabelled_fraction;
                });
      report(sweep, report_out);
      std::printf("report written to %s\n", report_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

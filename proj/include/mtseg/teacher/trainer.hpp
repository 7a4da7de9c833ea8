#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "mtseg/core/rng.hpp"
#include "mtseg/data/dataset.hpp"
#include "mtseg/data/preprocess.hpp"
#include "mtseg/geometry/affine.hpp"
#include "mtseg/losses/dice.hpp"
#include "mtseg/nn/adam.hpp"
#include "mtseg/nn/checkpoint.hpp"
#include "mtseg/nn/graph.hpp"
#include "mtseg/nn/unet.hpp"

namespace mtseg {

/// EMA decay: alpha_rampup while step < switch_step, alpha_after from then on.
struct EmaSchedule {
  double alpha_rampup = 0.99;
  double alpha_after = 0.999;
  long switch_step = 1000;

  void validate() const {
    if (!(alpha_rampup >= 0 && alpha_rampup < 1) ||
        !(alpha_after >= 0 && alpha_after < 1))
      throw std::invalid_argument("EmaSchedule: alphas must be in [0, 1)");
    if (switch_step < 0)
      throw std::invalid_argument("EmaSchedule: switch_step must be >= 0");
  }
};

inline double alpha_schedule(long step, const EmaSchedule& sched) {
  sched.validate();
  if (step < 0) throw std::invalid_argument("alpha_schedule: step must be >= 0");
  return step < sched.switch_step ? sched.alpha_rampup : sched.alpha_after;
}

/// Teacher starts as a value copy of the student.
template <typename T>
ModelParams<T> init_teacher(const ModelParams<T>& student) {
  return student;
}

/// theta_t' = alpha * theta_t + (1 - alpha) * theta_s, elementwise over every
/// weight array. Normalisation running statistics are state, not weights;
/// they are left untouched (the student's are copied at checkpoint time).
template <typename T>
void ema_update_inplace(ModelParams<T>& teacher, const ModelParams<T>& student,
                        double alpha) {
  if (!(alpha >= 0 && alpha < 1))
    throw std::invalid_argument("ema_update: alpha must be in [0, 1)");
  if (!teacher.same_structure(student))
    throw std::invalid_argument("ema_update: key sets or shapes differ");
  for (auto& [key, t] : teacher.arrays) {
    if (key.find("running_") != std::string::npos) continue;
    const Tensor<T>& s = student.arrays.at(key);
    for (size_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<T>(alpha * t[i] + (1 - alpha) * s[i]);
  }
}

template <typename T>
ModelParams<T> ema_update(const ModelParams<T>& teacher,
                          const ModelParams<T>& student, double alpha) {
  ModelParams<T> out = teacher;
  ema_update_inplace(out, student, alpha);
  return out;
}

template <typename T>
void copy_running_stats(ModelParams<T>& dst, const ModelParams<T>& src) {
  for (auto& [key, t] : dst.arrays)
    if (key.find("running_") != std::string::npos) t = src.arrays.at(key);
}

/// Mixed labelled/unlabelled batch x_m = [x_l; x_u].
template <typename T>
struct MixedBatch {
  Tensor<T> images;                 // (B, H, W, C)
  std::vector<uint8_t> labelled;    // per-item flag
  Tensor<uint8_t> labels;           // (B, H, W, 1); zeros on unflagged items

  int count_labelled() const {
    int n = 0;
    for (uint8_t f : labelled) n += f != 0;
    return n;
  }

  void validate() const {
    if (images.n() == 0) throw std::invalid_argument("MixedBatch: empty batch");
    if (static_cast<int>(labelled.size()) != images.n())
      throw std::invalid_argument("MixedBatch: flag count mismatch");
    if (count_labelled() < 1)
      throw std::invalid_argument("MixedBatch: needs at least one labelled item");
    if (labels.n() != images.n() || labels.h() != images.h() || labels.w() != images.w())
      throw std::invalid_argument("MixedBatch: label shape mismatch");
  }
};

/// Assembles a batch with exactly labelled_per_batch labelled items (drawn
/// uniformly with replacement), the rest unlabelled. When the unlabelled pool
/// is empty the remaining slots also draw labelled frames, so a 0%-unlabelled
/// run is still a valid (fully supervised) mean-teacher configuration.
template <typename T>
MixedBatch<T> make_mixed_batch(const GroupedDataset<T>& ds,
                               const std::vector<int>& labelled_pool,
                               const std::vector<int>& unlabelled_pool,
                               int batch_size, int labelled_per_batch, Rng& rng) {
  if (labelled_pool.empty())
    throw std::invalid_argument("make_mixed_batch: empty labelled pool");
  if (labelled_per_batch < 1 || labelled_per_batch > batch_size)
    throw std::invalid_argument("make_mixed_batch: labelled_per_batch out of range");

  MixedBatch<T> batch;
  batch.images = Tensor<T>(batch_size, ds.height, ds.width, ds.channels);
  batch.labels = Tensor<uint8_t>(batch_size, ds.height, ds.width, 1);
  batch.labelled.assign(batch_size, 0);
  for (int i = 0; i < batch_size; ++i) {
    const bool want_labelled = i < labelled_per_batch || unlabelled_pool.empty();
    const auto& pool = want_labelled ? labelled_pool : unlabelled_pool;
    const int fi = pool[rng.uniform_int(static_cast<int>(pool.size()))];
    const Frame<T>& f = ds.frames[fi];
    std::copy(f.image.data(), f.image.data() + f.image.size(),
              batch.images.data() + batch.images.idx(i, 0, 0, 0));
    if (want_labelled && f.labelled) {
      batch.labelled[i] = 1;
      std::copy(f.mask.data(), f.mask.data() + f.mask.size(),
                batch.labels.data() + batch.labels.idx(i, 0, 0, 0));
    }
  }
  batch.validate();
  return batch;
}

enum class TrainMode { SL, MT };

inline TrainMode parse_mode(const std::string& s) {
  if (s == "SL" || s == "sl") return TrainMode::SL;
  if (s == "MT" || s == "mt") return TrainMode::MT;
  throw std::invalid_argument("unknown training mode: " + s);
}

struct TrainConfig {
  TrainMode mode = TrainMode::MT;
  NetConfig net;
  long iterations = 10000;
  int batch_size = 32;
  int labelled_per_batch = 16;  // default: half the batch
  AdamConfig adam;
  double l2_weight = 1e-5;
  RampSchedule ramp;
  EmaSchedule ema;
  AffineNoiseConfig noise;
  AugmentConfig augment_cfg;
  bool augment_enabled = true;
  DiceConfig dice;
  uint64_t seed = 0;
  long checkpoint_interval = 0;   // 0 = final only
  std::string out_dir;            // empty = no files written
  bool eval_mode_forward = false; // batch-norm uses running stats in the step

  void validate() const {
    net.validate();
    adam.validate();
    ramp.validate();
    ema.validate();
    noise.validate();
    augment_cfg.validate();
    if (iterations < 0) throw std::invalid_argument("TrainConfig: negative iterations");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (labelled_per_batch < 1 || labelled_per_batch > batch_size)
      throw std::invalid_argument("TrainConfig: labelled_per_batch out of range");
    if (l2_weight < 0) throw std::invalid_argument("TrainConfig: l2_weight must be >= 0");
  }
};

template <typename T>
struct TrainState {
  ModelParams<T> student;
  ModelParams<T> teacher;
  Adam<T> optimizer;
  long step = 0;
  std::vector<LossReport> history;
  Rng noise_rng{0};

  /// The parameters an evaluation should use: the EMA teacher for MT (with
  /// the student's running statistics), the single network for SL.
  ModelParams<T> eval_params(TrainMode mode) const {
    if (mode == TrainMode::SL) return student;
    ModelParams<T> t = teacher;
    copy_running_stats(t, student);
    return t;
  }
};

namespace detail {

inline void check_finite_term(double v, const char* term) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("train_step: non-finite ") + term + " loss");
}

template <typename T>
void add_l2_to_grads(Grads<T>& grads, const ModelParams<T>& params, double l2_weight) {
  if (l2_weight == 0) return;
  for (auto& [key, g] : grads) {
    if (!is_l2_key(key)) continue;
    const Tensor<T>& w = params.arrays.at(key);
    for (size_t i = 0; i < g.size(); ++i)
      g[i] = static_cast<T>(g[i] + 2.0 * l2_weight * w[i]);
  }
}

}  // namespace detail

/// One optimisation step. MT: draws two affine noises, warps inputs/labels,
/// runs student and teacher, back-propagates L_l + lambda * L_u (+ L2) into
/// the student and moves the teacher by EMA. SL: supervised Dice + L2 only.
template <typename T>
void train_step(TrainState<T>& state, const MixedBatch<T>& batch,
                const TrainConfig& cfg, Grads<T>& grads) {
  batch.validate();
  const bool train_fwd = !cfg.eval_mode_forward;
  LossReport report;
  report.lambda_used =
      cfg.mode == TrainMode::MT ? ramp_weight(state.step, cfg.ramp) : 0.0;

  std::vector<double> label_weights(batch.labelled.begin(), batch.labelled.end());
  Graph<T> graph;
  zero_grads(grads);

  if (cfg.mode == TrainMode::MT) {
    const int W = batch.images.w(), H = batch.images.h();
    const AffineTransform t1 = sample_affine(state.noise_rng, cfg.noise, W, H);
    const AffineTransform t2 = sample_affine(state.noise_rng, cfg.noise, W, H);

    const Tensor<T> student_in =
        warp_image(batch.images, t1, WarpMode::bilinear, cfg.noise.fill_value);
    const Tensor<uint8_t> warped_labels = warp_mask(batch.labels, t1);
    const Tensor<T> teacher_in = warp_image(batch.images, compose(t2, t1),
                                            WarpMode::bilinear, cfg.noise.fill_value);

    Tensor<T> teacher_pred;
    {
      Graph<T> tg;
      const auto node = forward_graph<T>(tg, state.teacher, nullptr, teacher_in,
                                         train_fwd, /*update_running=*/false);
      teacher_pred = tg.value(node);
    }

    const auto student_pred = forward_graph<T>(graph, state.student, &grads,
                                               student_in, train_fwd,
                                               /*update_running=*/train_fwd);
    const auto supervised = graph.dice_loss(student_pred, one_hot<T>(warped_labels),
                                            label_weights, cfg.dice);
    const auto warped_pred = graph.warp_probmap_node(student_pred, t2);
    const auto consistency =
        graph.dice_loss(warped_pred, std::move(teacher_pred), {}, cfg.dice);
    const auto total =
        graph.add_weighted(supervised, consistency, 1.0, report.lambda_used);

    report.supervised = graph.scalar(supervised);
    report.consistency = graph.scalar(consistency);
    detail::check_finite_term(report.supervised, "supervised");
    detail::check_finite_term(report.consistency, "consistency");
    graph.backward(total);
  } else {
    const auto student_pred = forward_graph<T>(graph, state.student, &grads,
                                               batch.images, train_fwd,
                                               /*update_running=*/train_fwd);
    const auto supervised = graph.dice_loss(student_pred, one_hot<T>(batch.labels),
                                            label_weights, cfg.dice);
    report.supervised = graph.scalar(supervised);
    detail::check_finite_term(report.supervised, "supervised");
    graph.backward(supervised);
  }

  report.l2 = l2_penalty(state.student.arrays);
  detail::check_finite_term(report.l2, "l2");
  report.total = report.supervised + report.lambda_used * report.consistency +
                 cfg.l2_weight * report.l2;
  detail::check_finite_term(report.total, "total");

  detail::add_l2_to_grads(grads, state.student, cfg.l2_weight);
  state.optimizer.step(state.student, grads);

  if (cfg.mode == TrainMode::MT)
    ema_update_inplace(state.teacher, state.student,
                       alpha_schedule(state.step, cfg.ema));
  state.history.push_back(report);
  ++state.step;
}

template <typename T>
void write_loss_history(const std::vector<LossReport>& history,
                        const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,L_l,L_u,lambda,l2,total\n";
  char line[192];
  for (size_t i = 0; i < history.size(); ++i) {
    const LossReport& r = history[i];
    std::snprintf(line, sizeof(line), "%zu,%.8g,%.8g,%.8g,%.8g,%.8g\n", i,
                  r.supervised, r.consistency, r.lambda_used, r.l2, r.total);
    out << line;
  }
}

/// Full training run over a dataset's frames. The labelled pool is every
/// labelled frame, the unlabelled pool the rest. One seed governs
/// initialisation, batching, noise and augmentation.
template <typename T>
TrainState<T> train(const GroupedDataset<T>& ds, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<int> labelled_pool, unlabelled_pool;
  for (size_t i = 0; i < ds.frames.size(); ++i)
    (ds.frames[i].labelled ? labelled_pool : unlabelled_pool)
        .push_back(static_cast<int>(i));
  if (labelled_pool.empty())
    throw std::invalid_argument("train: dataset has no labelled frames");

  NetConfig net = cfg.net;
  net.in_channels = ds.channels;
  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  Rng batch_rng = root.fork(2);
  Rng noise_rng = root.fork(3);
  Rng augment_rng = root.fork(4);

  TrainState<T> state;
  state.student = build<T>(net, init_rng);
  state.teacher = init_teacher(state.student);
  state.optimizer = Adam<T>(cfg.adam);
  state.noise_rng = noise_rng;

  TrainConfig run_cfg = cfg;
  run_cfg.net = net;
  const int labelled_per_batch =
      cfg.mode == TrainMode::SL ? cfg.batch_size
                                : std::min(cfg.labelled_per_batch, cfg.batch_size);
  run_cfg.labelled_per_batch = labelled_per_batch;

  Grads<T> grads = make_grads(state.student);
  const bool emit = !cfg.out_dir.empty();
  if (emit) std::filesystem::create_directories(cfg.out_dir);

  for (long it = 0; it < cfg.iterations; ++it) {
    MixedBatch<T> batch = make_mixed_batch(ds, labelled_pool, unlabelled_pool,
                                           cfg.batch_size, labelled_per_batch,
                                           batch_rng);
    if (cfg.augment_enabled)
      batch.images = augment(batch.images, augment_rng, cfg.augment_cfg);
    train_step(state, batch, run_cfg, grads);
    if (emit && cfg.checkpoint_interval > 0 &&
        state.step % cfg.checkpoint_interval == 0) {
      save_checkpoint(state.eval_params(cfg.mode), state.step,
                      cfg.out_dir + "/checkpoint.bin");
      write_loss_history<T>(state.history, cfg.out_dir + "/losses.csv");
    }
  }
  if (emit) {
    save_checkpoint(state.eval_params(cfg.mode), state.step,
                    cfg.out_dir + "/checkpoint.bin");
    write_loss_history<T>(state.history, cfg.out_dir + "/losses.csv");
  }
  return state;
}

}  // namespace mtseg

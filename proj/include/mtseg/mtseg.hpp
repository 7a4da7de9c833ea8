#pragma once

// Umbrella header for the mean-teacher segmentation library.

#include "mtseg/core/parallel.hpp"
#include "mtseg/core/rng.hpp"
#include "mtseg/core/tensor.hpp"
#include "mtseg/data/dataset.hpp"
#include "mtseg/data/preprocess.hpp"
#include "mtseg/data/synth.hpp"
#include "mtseg/experiments/compare.hpp"
#include "mtseg/experiments/config.hpp"
#include "mtseg/experiments/folds.hpp"
#include "mtseg/experiments/report.hpp"
#include "mtseg/experiments/runner.hpp"
#include "mtseg/geometry/affine.hpp"
#include "mtseg/geometry/resize.hpp"
#include "mtseg/losses/dice.hpp"
#include "mtseg/metrics/masks.hpp"
#include "mtseg/nn/adam.hpp"
#include "mtseg/nn/checkpoint.hpp"
#include "mtseg/nn/graph.hpp"
#include "mtseg/nn/unet.hpp"
#include "mtseg/stats/wilcoxon.hpp"
#include "mtseg/teacher/trainer.hpp"

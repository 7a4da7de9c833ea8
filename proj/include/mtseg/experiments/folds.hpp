#pragma once

#include <string>
#include <vector>

#include "mtseg/data/dataset.hpp"

namespace mtseg {

/// One leave-one-group-out fold: the test group is held out entirely.
struct FoldPlan {
  int fold_id = 0;
  std::string test_group;
  std::vector<std::string> train_groups;
};

/// One fold per group, each group held out exactly once, in group-id order.
template <typename T>
std::vector<FoldPlan> make_folds(const GroupedDataset<T>& ds) {
  if (ds.groups.size() < 2)
    throw std::invalid_argument("make_folds: need at least 2 groups, have " +
                                std::to_string(ds.groups.size()));
  std::vector<FoldPlan> folds;
  for (size_t i = 0; i < ds.groups.size(); ++i) {
    FoldPlan plan;
    plan.fold_id = static_cast<int>(i);
    plan.test_group = ds.groups[i].id;
    for (size_t j = 0; j < ds.groups.size(); ++j)
      if (j != i) plan.train_groups.push_back(ds.groups[j].id);
    folds.push_back(std::move(plan));
  }
  return folds;
}

/// The training-side sub-dataset for a fold (test group excluded).
template <typename T>
GroupedDataset<T> fold_train_subset(const GroupedDataset<T>& ds, const FoldPlan& plan) {
  GroupedDataset<T> out;
  out.height = ds.height;
  out.width = ds.width;
  out.channels = ds.channels;
  for (const auto& gid : plan.train_groups) {
    const auto& g = ds.group(gid);
    typename GroupedDataset<T>::Group og;
    og.id = g.id;
    og.n_labelled = g.n_labelled;
    for (int fi : g.frames) {
      og.frames.push_back(static_cast<int>(out.frames.size()));
      out.frames.push_back(ds.frames[fi]);
    }
    out.groups.push_back(std::move(og));
  }
  return out;
}

}  // namespace mtseg

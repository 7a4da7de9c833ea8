#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mtseg/core/rng.hpp"
#include "mtseg/core/tensor.hpp"
#include "mtseg/io/png_io.hpp"

namespace mtseg {

template <typename T>
struct Frame {
  std::string id;         // unique within its group
  Tensor<T> image;        // (1, H, W, C), intensities in [0, 1]
  bool labelled = false;
  Tensor<uint8_t> mask;   // (1, H, W, 1), values 0/1; empty when unlabelled
};

/// Frames partitioned by group ("patient"); each frame optionally labelled.
template <typename T>
struct GroupedDataset {
  struct Group {
    std::string id;
    std::vector<int> frames;  // indices into `frames`
    int n_labelled = 0;
  };

  std::vector<Frame<T>> frames;
  std::vector<Group> groups;
  int height = 0, width = 0, channels = 0;

  const Group& group(const std::string& id) const {
    for (const auto& g : groups)
      if (g.id == id) return g;
    throw std::invalid_argument("GroupedDataset: unknown group " + id);
  }

  int total_frames() const { return static_cast<int>(frames.size()); }

  int total_labelled() const {
    int n = 0;
    for (const auto& g : groups) n += g.n_labelled;
    return n;
  }

  void validate() const {
    std::vector<std::string> ids;
    for (const auto& g : groups) {
      ids.push_back(g.id);
      if (g.frames.empty())
        throw std::invalid_argument("GroupedDataset: empty group " + g.id);
      int lab = 0;
      for (int fi : g.frames) {
        const Frame<T>& f = frames.at(fi);
        if (f.image.h() != height || f.image.w() != width || f.image.c() != channels)
          throw std::invalid_argument("GroupedDataset: frame " + g.id + "/" + f.id +
                                      " has inconsistent size");
        if (f.labelled) {
          ++lab;
          if (f.mask.h() != height || f.mask.w() != width)
            throw std::invalid_argument("GroupedDataset: mask size mismatch for " +
                                        g.id + "/" + f.id);
        }
      }
      if (lab != g.n_labelled)
        throw std::invalid_argument("GroupedDataset: labelled count mismatch for group " + g.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw std::invalid_argument("GroupedDataset: duplicate group ids");
  }
};

/// Per-group sampling fractions for the data-planning sweeps.
struct SampleSpec {
  double labelled_fraction = 1.0;
  double unlabelled_fraction = 1.0;
  uint64_t seed = 0;

  void validate() const {
    if (!(labelled_fraction > 0 && labelled_fraction <= 1.0))
      throw std::invalid_argument("SampleSpec: labelled_fraction must be in (0, 1]");
    if (!(unlabelled_fraction >= 0 && unlabelled_fraction <= 1.0))
      throw std::invalid_argument("SampleSpec: unlabelled_fraction must be in [0, 1]");
  }
};

/// Independently per group, keeps round(fraction * count) labelled frames
/// (at least 1) and round(fraction * count) unlabelled frames, sampled
/// without replacement. A single per-group permutation is drawn and prefixes
/// taken, so at a fixed seed larger fractions are supersets of smaller ones.
template <typename T>
GroupedDataset<T> sample_fractions(const GroupedDataset<T>& ds, const SampleSpec& spec) {
  spec.validate();
  GroupedDataset<T> out;
  out.height = ds.height;
  out.width = ds.width;
  out.channels = ds.channels;
  for (const auto& g : ds.groups) {
    std::vector<int> lab, unlab;
    for (int fi : g.frames)
      (ds.frames[fi].labelled ? lab : unlab).push_back(fi);
    if (lab.empty())
      throw std::invalid_argument("sample_fractions: group " + g.id +
                                  " has no labelled frames");
    Rng rng(hash_combine(spec.seed, fnv1a(g.id)));
    rng.shuffle(lab);
    rng.shuffle(unlab);
    const int n_lab = std::max<long>(
        1, std::lround(spec.labelled_fraction * static_cast<double>(lab.size())));
    const int n_unlab = static_cast<int>(
        std::lround(spec.unlabelled_fraction * static_cast<double>(unlab.size())));

    typename GroupedDataset<T>::Group og;
    og.id = g.id;
    std::vector<int> take(lab.begin(), lab.begin() + std::min<size_t>(n_lab, lab.size()));
    take.insert(take.end(), unlab.begin(),
                unlab.begin() + std::min<size_t>(n_unlab, unlab.size()));
    for (int fi : take) {
      og.frames.push_back(static_cast<int>(out.frames.size()));
      out.frames.push_back(ds.frames[fi]);
      if (ds.frames[fi].labelled) ++og.n_labelled;
    }
    out.groups.push_back(std::move(og));
  }
  return out;
}

namespace detail {

inline std::vector<std::string> sorted_png_stems(const std::filesystem::path& dir) {
  std::vector<std::string> stems;
  if (!std::filesystem::is_directory(dir)) return stems;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  return stems;
}

}  // namespace detail

/// Loads `root/<group>/frames/*.png` (+ optional `labels/*.png`) and checks
/// the manifest. Labels are 8-bit masks with foreground 255.
template <typename T>
GroupedDataset<T> load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  const fs::path base(root);
  if (!fs::is_directory(base))
    throw std::runtime_error("load_dataset: not a directory: " + root);

  std::map<std::string, std::pair<int, int>> manifest;  // group -> (frames, labelled)
  {
    const fs::path mp = base / "manifest.csv";
    std::ifstream in(mp);
    if (!in) throw std::runtime_error("load_dataset: missing manifest " + mp.string());
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string gid, nf, nl;
      std::getline(ss, gid, ',');
      std::getline(ss, nf, ',');
      std::getline(ss, nl, ',');
      manifest[gid] = {std::stoi(nf), std::stoi(nl)};
    }
  }

  GroupedDataset<T> ds;
  std::vector<std::string> group_ids;
  for (const auto& e : fs::directory_iterator(base))
    if (e.is_directory()) group_ids.push_back(e.path().filename().string());
  std::sort(group_ids.begin(), group_ids.end());

  for (const auto& gid : group_ids) {
    const fs::path gdir = base / gid;
    const auto frame_stems = detail::sorted_png_stems(gdir / "frames");
    const auto label_stems = detail::sorted_png_stems(gdir / "labels");
    if (frame_stems.empty())
      throw std::runtime_error("load_dataset: empty group " + gdir.string());
    for (const auto& ls : label_stems)
      if (!std::binary_search(frame_stems.begin(), frame_stems.end(), ls))
        throw std::runtime_error("load_dataset: label without matching frame: " +
                                 (gdir / "labels" / (ls + ".png")).string());

    typename GroupedDataset<T>::Group g;
    g.id = gid;
    for (const auto& stem : frame_stems) {
      Frame<T> f;
      f.id = stem;
      const auto img = read_png((gdir / "frames" / (stem + ".png")).string());
      f.image = to_unit_range<T>(img);
      if (ds.height == 0) {
        ds.height = f.image.h();
        ds.width = f.image.w();
        ds.channels = f.image.c();
      }
      const fs::path lp = gdir / "labels" / (stem + ".png");
      if (fs::exists(lp)) {
        const auto lbl = read_png(lp.string());
        if (lbl.h() != f.image.h() || lbl.w() != f.image.w())
          throw std::runtime_error("load_dataset: mask size mismatch: " + lp.string());
        f.labelled = true;
        f.mask = Tensor<uint8_t>(1, lbl.h(), lbl.w(), 1);
        for (int y = 0; y < lbl.h(); ++y)
          for (int x = 0; x < lbl.w(); ++x)
            f.mask.at(0, y, x, 0) = lbl.at(0, y, x, 0) >= 128 ? 1 : 0;
        ++g.n_labelled;
      }
      g.frames.push_back(static_cast<int>(ds.frames.size()));
      ds.frames.push_back(std::move(f));
    }

    const auto mit = manifest.find(gid);
    if (mit == manifest.end())
      throw std::runtime_error("load_dataset: group " + gid + " missing from manifest");
    if (mit->second.first != static_cast<int>(g.frames.size()) ||
        mit->second.second != g.n_labelled)
      throw std::runtime_error("load_dataset: manifest counts disagree for group " + gid);
    ds.groups.push_back(std::move(g));
  }
  ds.validate();
  return ds;
}

/// Writes the standard on-disk layout (the synthetic generator uses this).
template <typename T>
void write_dataset(const GroupedDataset<T>& ds, const std::string& root) {
  namespace fs = std::filesystem;
  const fs::path base(root);
  fs::create_directories(base);
  std::ofstream manifest(base / "manifest.csv", std::ios::trunc);
  manifest << "group_id,n_frames,n_labelled\n";
  for (const auto& g : ds.groups) {
    fs::create_directories(base / g.id / "frames");
    if (g.n_labelled > 0) fs::create_directories(base / g.id / "labels");
    for (int fi : g.frames) {
      const Frame<T>& f = ds.frames[fi];
      write_png((base / g.id / "frames" / (f.id + ".png")).string(),
                to_bytes(f.image));
      if (f.labelled) {
        Tensor<uint8_t> m(1, f.mask.h(), f.mask.w(), 1);
        for (size_t i = 0; i < m.size(); ++i) m[i] = f.mask[i] ? 255 : 0;
        write_png((base / g.id / "labels" / (f.id + ".png")).string(), m);
      }
    }
    manifest << g.id << "," << g.frames.size() << "," << g.n_labelled << "\n";
  }
}

}  // namespace mtseg

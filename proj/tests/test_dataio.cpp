#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "mtseg/data/dataset.hpp"
#include "mtseg/data/preprocess.hpp"
#include "mtseg/data/synth.hpp"

using namespace mtseg;
namespace fs = std::filesystem;

namespace {

/// Dataset with the reference per-patient labelled counts, 1x1 frames.
GroupedDataset<float> manifest_dataset() {
  const std::vector<int> counts{67, 156, 148, 168, 246, 180, 140,
                                260, 198, 178, 166, 144, 158};
  GroupedDataset<float> ds;
  ds.height = ds.width = 1;
  ds.channels = 3;
  for (size_t g = 0; g < counts.size(); ++g) {
    typename GroupedDataset<float>::Group group;
    char gid[8];
    std::snprintf(gid, sizeof(gid), "p%02zu", g);
    group.id = gid;
    for (int f = 0; f < counts[g] + 10; ++f) {  // +10 unlabelled frames
      Frame<float> frame;
      char fid[16];
      std::snprintf(fid, sizeof(fid), "f%04d", f);
      frame.id = fid;
      frame.image = Tensor<float>(1, 1, 1, 3);
      if (f < counts[g]) {
        frame.labelled = true;
        frame.mask = Tensor<uint8_t>(1, 1, 1, 1);
        ++group.n_labelled;
      }
      group.frames.push_back(static_cast<int>(ds.frames.size()));
      ds.frames.push_back(std::move(frame));
    }
    ds.groups.push_back(std::move(group));
  }
  ds.validate();
  return ds;
}

}  // namespace

TEST_CASE("preprocess_frame crops the borders and resamples to 128x384") {
  SECTION("constant frame stays constant") {
    const auto raw = Tensor<float>::full(1, 540, 1920, 3, 0.42f);
    const auto out = preprocess_frame(raw);
    REQUIRE(out.shape() == std::array<int, 4>{1, 128, 384, 3});
    REQUIRE(out.min() == Catch::Approx(0.42).margin(1e-6));
    REQUIRE(out.max() == Catch::Approx(0.42).margin(1e-6));
  }
  SECTION("border stripes vanish after the crop") {
    Tensor<float> raw = Tensor<float>::full(1, 540, 1920, 3, 0.3f);
    for (int y = 0; y < 540; ++y)
      for (int x = 0; x < 130; ++x)
        for (int c = 0; c < 3; ++c) {
          raw.at(0, y, x, c) = 0.9f;
          raw.at(0, y, 1920 - 1 - x, c) = 0.8f;
        }
    const auto out = preprocess_frame(raw);
    REQUIRE(out.max() < 0.35);
    REQUIRE(out.min() > 0.25);
  }
  SECTION("wrong input size is rejected") {
    REQUIRE_THROWS_AS(preprocess_frame(Tensor<float>(1, 540, 1910, 3)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(preprocess_frame(Tensor<float>(1, 560, 1920, 3)),
                      std::invalid_argument);
  }
}

TEST_CASE("augment applies photometric jitter then standardises") {
  Rng rng(3);
  Tensor<float> img(1, 8, 8, 3);
  for (size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(rng.uniform(0.2, 0.8));

  SECTION("degenerate config reduces to pure standardisation") {
    Rng r1(5);
    const auto out = augment(img, r1, AugmentConfig::none());
    Tensor<float> expect = img;
    standardize_item(expect, 0);
    REQUIRE(max_abs_diff(out, expect) < 1e-6);
  }
  SECTION("outputs have zero mean and unit variance") {
    Rng r2(6);
    const auto out = augment(img, r2);
    double mean = 0;
    for (size_t i = 0; i < out.size(); ++i) mean += out[i];
    mean /= static_cast<double>(out.size());
    double var = 0;
    for (size_t i = 0; i < out.size(); ++i)
      var += (out[i] - mean) * (out[i] - mean);
    var /= static_cast<double>(out.size());
    REQUIRE(std::abs(mean) < 1e-5);
    REQUIRE(std::abs(var - 1.0) < 1e-4);
  }
  SECTION("constant image standardises to zero under the guarded variance") {
    const auto constant = Tensor<float>::full(1, 8, 8, 3, 0.5f);
    Rng r3(7);
    const auto out = augment(constant, r3, AugmentConfig::none());
    REQUIRE(out.min() == 0.0);
    REQUIRE(out.max() == 0.0);
    // the jittering path stays finite on degenerate input too
    Rng r4(8);
    REQUIRE(augment(constant, r4).all_finite());
  }
}

TEST_CASE("sample_fractions keeps identity at full fractions") {
  Rng rng(4);
  SynthConfig cfg;
  cfg.groups = 3;
  cfg.frames_per_group = 10;
  cfg.labelled_per_group = 4;
  cfg.height = cfg.width = 8;
  const auto ds = synth_generate<float>(cfg, rng);
  const auto out = sample_fractions(ds, SampleSpec{1.0, 1.0, 42});
  REQUIRE(out.groups.size() == ds.groups.size());
  for (size_t g = 0; g < out.groups.size(); ++g) {
    REQUIRE(out.groups[g].frames.size() == ds.groups[g].frames.size());
    REQUIRE(out.groups[g].n_labelled == ds.groups[g].n_labelled);
  }
}

TEST_CASE("sample_fractions follows the max(1, round(f*n)) rule per group") {
  const auto ds = manifest_dataset();
  const std::vector<int> counts{67, 156, 148, 168, 246, 180, 140,
                                260, 198, 178, 166, 144, 158};
  const auto out = sample_fractions(ds, SampleSpec{0.02, 0.0, 7});
  REQUIRE(out.groups.size() == 13);
  for (size_t g = 0; g < counts.size(); ++g) {
    const long expect = std::max<long>(1, std::lround(0.02 * counts[g]));
    REQUIRE(out.groups[g].n_labelled == expect);
    // unlabelled fraction 0: no unlabelled frames kept
    REQUIRE(static_cast<int>(out.groups[g].frames.size()) == out.groups[g].n_labelled);
  }
  REQUIRE(out.groups[0].n_labelled == 1);  // max(1, round(1.34)) = 1
}

TEST_CASE("sample_fractions draws prefixes: larger fractions are supersets") {
  Rng rng(9);
  SynthConfig cfg;
  cfg.groups = 4;
  cfg.frames_per_group = 20;
  cfg.labelled_per_group = 12;
  cfg.height = cfg.width = 8;
  const auto ds = synth_generate<float>(cfg, rng);

  auto frame_ids = [](const GroupedDataset<float>& d) {
    std::set<std::string> ids;
    for (const auto& g : d.groups)
      for (int fi : g.frames)
        ids.insert(g.id + "/" + d.frames[fi].id);
    return ids;
  };
  const uint64_t seed = 1234;
  const auto small = frame_ids(sample_fractions(ds, SampleSpec{0.25, 0.25, seed}));
  const auto mid = frame_ids(sample_fractions(ds, SampleSpec{0.5, 0.5, seed}));
  const auto all = frame_ids(sample_fractions(ds, SampleSpec{1.0, 1.0, seed}));
  REQUIRE(std::includes(mid.begin(), mid.end(), small.begin(), small.end()));
  REQUIRE(std::includes(all.begin(), all.end(), mid.begin(), mid.end()));
}

TEST_CASE("sample_fractions rejects groups without labels and bad specs") {
  GroupedDataset<float> ds;
  ds.height = ds.width = 1;
  ds.channels = 3;
  typename GroupedDataset<float>::Group g;
  g.id = "empty_group";
  Frame<float> f;
  f.id = "f0";
  f.image = Tensor<float>(1, 1, 1, 3);
  g.frames.push_back(0);
  ds.frames.push_back(std::move(f));
  ds.groups.push_back(std::move(g));
  REQUIRE_THROWS_WITH(sample_fractions(ds, SampleSpec{0.5, 0.5, 1}),
                      Catch::Matchers::ContainsSubstring("empty_group"));
  REQUIRE_THROWS_AS(sample_fractions(ds, SampleSpec{0.0, 0.5, 1}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sample_fractions(ds, SampleSpec{0.5, 1.5, 1}),
                    std::invalid_argument);
}

TEST_CASE("synthetic generator matches its manifest and analytic masks") {
  SynthConfig cfg;
  cfg.groups = 8;
  cfg.frames_per_group = 100;
  cfg.labelled_per_group = 20;
  cfg.height = cfg.width = 32;
  Rng rng(11);
  const auto ds = synth_generate<float>(cfg, rng);
  REQUIRE(ds.groups.size() == 8);
  for (const auto& g : ds.groups) {
    REQUIRE(g.frames.size() == 100);
    REQUIRE(g.n_labelled == 20);
  }

  SECTION("same seed regenerates the dataset bit for bit") {
    Rng r2(11);
    const auto ds2 = synth_generate<float>(cfg, r2);
    for (size_t i = 0; i < ds.frames.size(); ++i) {
      REQUIRE(ds.frames[i].image == ds2.frames[i].image);
      REQUIRE(ds.frames[i].mask == ds2.frames[i].mask);
    }
  }
}

TEST_CASE("rendered masks equal the analytic shape rasterisation") {
  SynthConfig cfg;
  cfg.height = cfg.width = 48;
  Rng rng(13);
  GroupStyle style = detail::make_group_style(rng, cfg.height, cfg.width);
  const BlobShape shape = detail::make_frame_shape(style, rng, cfg.height, cfg.width);
  const auto [img, mask] = render_synth_frame<float>(style, shape, rng, cfg);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x)
      REQUIRE(mask.at(0, y, x, 0) == (shape.inside(x, y) ? 1 : 0));
  REQUIRE(img.min() >= 0.0);
  REQUIRE(img.max() <= 1.0);
}

TEST_CASE("dataset round-trips through the on-disk layout") {
  SynthConfig cfg;
  cfg.groups = 2;
  cfg.frames_per_group = 5;
  cfg.labelled_per_group = 3;
  cfg.height = cfg.width = 16;
  Rng rng(17);
  const auto ds = synth_generate<float>(cfg, rng);

  const auto root = fs::temp_directory_path() / "mtseg_ds_test";
  fs::remove_all(root);
  write_dataset(ds, root.string());
  const auto loaded = load_dataset<float>(root.string());

  REQUIRE(loaded.groups.size() == 2);
  REQUIRE(loaded.height == 16);
  REQUIRE(loaded.channels == 3);
  for (size_t g = 0; g < ds.groups.size(); ++g) {
    REQUIRE(loaded.groups[g].id == ds.groups[g].id);
    REQUIRE(loaded.groups[g].frames.size() == ds.groups[g].frames.size());
    REQUIRE(loaded.groups[g].n_labelled == ds.groups[g].n_labelled);
  }
  for (size_t i = 0; i < ds.frames.size(); ++i) {
    // images round-trip through 8-bit quantisation
    REQUIRE(max_abs_diff(loaded.frames[i].image, ds.frames[i].image) <= 0.5 / 255 + 1e-6);
    REQUIRE(loaded.frames[i].labelled == ds.frames[i].labelled);
    if (ds.frames[i].labelled)
      REQUIRE(loaded.frames[i].mask == ds.frames[i].mask);
  }

  SECTION("a label without a matching frame is rejected by name") {
    const auto stray = root / "g00" / "labels" / "zz99.png";
    Tensor<uint8_t> blank(1, 16, 16, 1);
    write_png(stray.string(), blank);
    REQUIRE_THROWS_WITH(load_dataset<float>(root.string()),
                        Catch::Matchers::ContainsSubstring("zz99"));
    fs::remove(stray);
  }
  SECTION("manifest disagreement is rejected") {
    std::ofstream bad(root / "manifest.csv", std::ios::trunc);
    bad << "group_id,n_frames,n_labelled\ng00,5,3\ng01,5,2\n";
    bad.close();
    REQUIRE_THROWS_WITH(load_dataset<float>(root.string()),
                        Catch::Matchers::ContainsSubstring("g01"));
  }
  fs::remove_all(root);
}

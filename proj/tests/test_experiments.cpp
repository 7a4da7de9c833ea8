#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "mtseg/experiments/compare.hpp"
#include "mtseg/experiments/config.hpp"
#include "mtseg/experiments/report.hpp"
#include "mtseg/experiments/runner.hpp"

using namespace mtseg;
namespace fs = std::filesystem;

namespace {

GroupedDataset<float> tiny_dataset(int groups, uint64_t seed = 5) {
  SynthConfig cfg;
  cfg.groups = groups;
  cfg.frames_per_group = 8;
  cfg.labelled_per_group = 4;
  cfg.height = cfg.width = 16;
  Rng rng(seed);
  return synth_generate<float>(cfg, rng);
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.net = NetConfig{2, 4, 3, 2};
  cfg.iterations = 3;
  cfg.batch_size = 4;
  cfg.labelled_per_batch = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("make_folds covers every group exactly once") {
  SECTION("13 groups give 13 folds") {
    const auto ds = tiny_dataset(13);
    const auto folds = make_folds(ds);
    REQUIRE(folds.size() == 13);
    std::set<std::string> tested;
    for (const auto& f : folds) {
      tested.insert(f.test_group);
      REQUIRE(f.train_groups.size() == 12);
      for (const auto& g : f.train_groups) REQUIRE(g != f.test_group);
    }
    REQUIRE(tested.size() == 13);
  }
  SECTION("2 groups give swapped roles") {
    const auto ds = tiny_dataset(2);
    const auto folds = make_folds(ds);
    REQUIRE(folds.size() == 2);
    REQUIRE(folds[0].test_group == folds[1].train_groups[0]);
    REQUIRE(folds[1].test_group == folds[0].train_groups[0]);
  }
  SECTION("fewer than 2 groups is rejected") {
    const auto ds = tiny_dataset(1);
    REQUIRE_THROWS_AS(make_folds(ds), std::invalid_argument);
  }
}

TEST_CASE("fold train subsets exclude the test group entirely") {
  const auto ds = tiny_dataset(4);
  const auto folds = make_folds(ds);
  for (const auto& plan : folds) {
    const auto sub = fold_train_subset(ds, plan);
    std::set<std::string> groups;
    for (const auto& g : sub.groups) groups.insert(g.id);
    REQUIRE(groups.count(plan.test_group) == 0);
    REQUIRE(groups.size() == 3);
    // frame identity check: no shared (group, frame) ids with the test group
    std::set<std::string> train_ids;
    for (const auto& g : sub.groups)
      for (int fi : g.frames) train_ids.insert(g.id + "/" + sub.frames[fi].id);
    for (int fi : ds.group(plan.test_group).frames) {
      const std::string id = plan.test_group + "/" + ds.frames[fi].id;
      REQUIRE(train_ids.count(id) == 0);
    }
  }
}

TEST_CASE("run_fold emits records only for labelled test frames") {
  const auto ds = tiny_dataset(3);
  const auto folds = make_folds(ds);
  const auto cfg = tiny_train_config();
  const auto records = run_fold(ds, folds[1], SampleSpec{1.0, 1.0, 99},
                                TrainMode::MT, cfg);
  REQUIRE(records.size() == 4);  // labelled_per_group
  for (const auto& r : records) {
    REQUIRE(r.frame.rfind(folds[1].test_group + "/", 0) == 0);
    REQUIRE(r.fold == 1);
    REQUIRE(r.dice >= 0.0);
    REQUIRE(r.dice <= 1.0);
  }
}

TEST_CASE("SL runs ignore the unlabelled fraction") {
  const auto ds = tiny_dataset(3);
  const auto folds = make_folds(ds);
  const auto cfg = tiny_train_config();
  const auto a = run_fold(ds, folds[0], SampleSpec{0.5, 0.0, 7}, TrainMode::SL, cfg);
  const auto b = run_fold(ds, folds[0], SampleSpec{0.5, 1.0, 7}, TrainMode::SL, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].frame == b[i].frame);
    REQUIRE(a[i].dice == b[i].dice);
    REQUIRE(a[i].hd95.has_value() == b[i].hd95.has_value());
  }
}

TEST_CASE("run_sweep merges fold records and resumes deterministically") {
  const auto ds = tiny_dataset(3);
  SweepGrid grid;
  grid.labelled_fractions = {1.0};
  grid.unlabelled_fractions = {1.0};
  grid.include_sl = false;
  const auto cfg = tiny_train_config();

  const auto out1 = fs::temp_directory_path() / "mtseg_sweep_a";
  fs::remove_all(out1);
  const auto res1 = run_sweep(ds, grid, cfg, out1.string(), 42);
  REQUIRE(res1.cells.size() == 1);
  REQUIRE(res1.cells[0].records.size() == 3 * 4);  // folds x labelled test frames
  REQUIRE(res1.cells[0].failed_folds.empty());

  // simulate an interrupt: drop one fold's results, rerun, compare
  fs::remove(out1 / "runs" / cell_id(grid.cells()[0]) / "fold1" / "metrics.csv");
  const auto res2 = run_sweep(ds, grid, cfg, out1.string(), 42);
  REQUIRE(res2.cells[0].records.size() == res1.cells[0].records.size());
  for (size_t i = 0; i < res1.cells[0].records.size(); ++i) {
    REQUIRE(res1.cells[0].records[i].frame == res2.cells[0].records[i].frame);
    REQUIRE(res1.cells[0].records[i].dice == res2.cells[0].records[i].dice);
  }
  // untouched rerun is also identical
  const auto res3 = run_sweep(ds, grid, cfg, out1.string(), 42);
  for (size_t i = 0; i < res1.cells[0].records.size(); ++i)
    REQUIRE(res1.cells[0].records[i].dice == res3.cells[0].records[i].dice);
  fs::remove_all(out1);
}

TEST_CASE("metric record CSV round-trips") {
  std::vector<MetricRecord> records;
  records.push_back({"g00/f0001", 0, 0.912345, 12.3456});
  records.push_back({"g00/f0002", 0, 0.5, std::nullopt});
  const auto path = fs::temp_directory_path() / "mtseg_records.csv";
  write_metric_records("CELL", records, path.string());
  const auto back = read_metric_records(path.string());
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].frame == "g00/f0001");
  REQUIRE(back[0].dice == Catch::Approx(0.912345).margin(1e-6));
  REQUIRE(back[0].hd95.value() == Catch::Approx(12.3456).margin(1e-4));
  REQUIRE_FALSE(back[1].hd95.has_value());
  fs::remove(path);
}

TEST_CASE("compare of a result set with itself is the identity comparison") {
  std::vector<MetricRecord> res;
  for (int i = 0; i < 8; ++i)
    res.push_back({"g/f" + std::to_string(i), i % 2, 0.8 + 0.01 * i, 10.0 + i});
  const auto cmp = compare(res, res);
  REQUIRE(cmp.dice_p == 1.0);
  REQUIRE(cmp.hd95_p == 1.0);
  REQUIRE(cmp.dice_a.median == cmp.dice_b.median);
  REQUIRE(cmp.dice_a.mean == cmp.dice_b.mean);
  REQUIRE(cmp.hd95_a.stddev == cmp.hd95_b.stddev);
}

TEST_CASE("compare rejects unpaired result sets") {
  std::vector<MetricRecord> a{{"g/f0", 0, 0.9, 1.0}, {"g/f1", 0, 0.8, 2.0}};
  std::vector<MetricRecord> b{{"g/f0", 0, 0.9, 1.0}, {"g/f2", 0, 0.8, 2.0}};
  REQUIRE_THROWS_AS(compare(a, b), std::invalid_argument);
  std::vector<MetricRecord> c{{"g/f0", 0, 0.9, 1.0}};
  REQUIRE_THROWS_AS(compare(a, c), std::invalid_argument);
}

TEST_CASE("comparison table reproduces the reporting schema byte-stably") {
  // fixture with hand-checkable aggregates:
  //   dice A: {0.90..1.00 step 0.02} -> median 0.95, mean 0.95, std 0.0374
  //   dice B = A - 0.10               -> median 0.85, mean 0.85, std 0.0374
  //   hd A: {10,12,14,16,18,20} -> median 15, mean 15, std 3.74
  //   hd B = A + 5               -> median 20, mean 20, std 3.74
  //   all six dice differences equal +0.10 -> exact two-sided p = 2/2^6
  std::vector<MetricRecord> a, b;
  for (int i = 0; i < 6; ++i) {
    a.push_back({"g/f" + std::to_string(i), 0, 0.90 + 0.02 * i, 10.0 + 2 * i});
    b.push_back({"g/f" + std::to_string(i), 0, 0.80 + 0.02 * i, 15.0 + 2 * i});
  }
  const auto cmp = compare(a, b, "SL", "MT");
  REQUIRE(cmp.dice_p == 0.03125);
  REQUIRE(cmp.hd95_p == 0.03125);
  const std::string table = comparison_table(cmp);
  const std::string expect =
      "Metric              Method  Median    Mean      Std       Wilcoxon\n"
      "Dice Score          SL      0.9500    0.9500    0.0374    0.0312\n"
      "                    MT      0.8500    0.8500    0.0374   \n"
      "Hausdorff Distance  SL      15.00     15.00     3.74      0.0312\n"
      "                    MT      20.00     20.00     3.74     \n";
  REQUIRE(table == expect);
  // regenerating gives the same bytes
  REQUIRE(comparison_table(compare(a, b, "SL", "MT")) == table);
}

TEST_CASE("report writes aggregates, tables and plots deterministically") {
  SweepResult sweep;
  {
    SweepResult::Cell sl;
    sl.spec = {TrainMode::SL, 0.5, 0.0};
    for (int i = 0; i < 6; ++i)
      sl.records.push_back({"g/f" + std::to_string(i), i % 3, 0.80 + 0.02 * i, 20.0 - i});
    sweep.cells.push_back(sl);
    SweepResult::Cell mt;
    mt.spec = {TrainMode::MT, 0.5, 1.0};
    for (int i = 0; i < 6; ++i)
      mt.records.push_back({"g/f" + std::to_string(i), i % 3, 0.85 + 0.02 * i, 15.0 - i});
    sweep.cells.push_back(mt);
  }
  const auto out = fs::temp_directory_path() / "mtseg_report";
  fs::remove_all(out);
  report(sweep, out.string());
  for (const char* name : {"aggregates.csv", "comparisons.txt", "metadata.txt",
                           "dice_vs_labelled.svg", "hd95_vs_labelled.svg",
                           "dice_vs_unlabelled.svg"}) {
    INFO(name);
    REQUIRE(fs::exists(out / name));
  }
  const auto agg_bytes = slurp(out / "aggregates.csv");
  const auto svg_bytes = slurp(out / "dice_vs_unlabelled.svg");
  report(sweep, out.string());  // regenerate
  REQUIRE(slurp(out / "aggregates.csv") == agg_bytes);
  REQUIRE(slurp(out / "dice_vs_unlabelled.svg") == svg_bytes);

  // CSV aggregates equal recomputation from the per-frame records
  std::vector<double> dice;
  for (const auto& r : sweep.cells[0].records) dice.push_back(r.dice);
  const auto agg = aggregate(dice);
  std::stringstream ss(agg_bytes);
  std::string header, line;
  std::getline(ss, header);
  std::getline(ss, line);  // SL row
  std::stringstream ls(line);
  std::string tok;
  for (int i = 0; i < 6; ++i) std::getline(ls, tok, ',');
  REQUIRE(std::stod(tok) == Catch::Approx(agg.median).margin(1e-6));
  std::getline(ls, tok, ',');
  REQUIRE(std::stod(tok) == Catch::Approx(agg.mean).margin(1e-6));

  REQUIRE_THROWS_AS(report(SweepResult{}, out.string()), std::invalid_argument);
  fs::remove_all(out);
}

TEST_CASE("flat key-value config parsing and overrides") {
  const auto path = fs::temp_directory_path() / "mtseg_test.cfg";
  {
    std::ofstream out(path, std::ios::trunc);
    out << "# comment line\n"
        << "train.iterations = 500\n"
        << "train.lr = 5e-4   # trailing comment\n"
        << "net.depth=3\n"
        << "sweep.labelled = 0.1, 0.5, 1.0\n"
        << "augment.enabled = false\n";
  }
  auto cfg = Config::from_file(path.string());
  REQUIRE(cfg.get_long("train.iterations", 0) == 500);
  REQUIRE(cfg.get_double("train.lr", 0) == 5e-4);
  REQUIRE(cfg.get_int("net.depth", 0) == 3);
  REQUIRE(cfg.get_bool("augment.enabled", true) == false);
  REQUIRE(cfg.get_list("sweep.labelled", {}) == std::vector<double>{0.1, 0.5, 1.0});
  REQUIRE(cfg.get_str("missing", "dflt") == "dflt");
  cfg.set("net.depth", "4");  // CLI-style override
  REQUIRE(cfg.get_int("net.depth", 0) == 4);

  {
    std::ofstream out(path, std::ios::trunc);
    out << "oops no equals\n";
  }
  REQUIRE_THROWS_AS(Config::from_file(path.string()), std::runtime_error);
  {
    std::ofstream out(path, std::ios::trunc);
    out << "train.lr = not_a_number\n";
  }
  auto bad = Config::from_file(path.string());
  REQUIRE_THROWS_AS(bad.get_double("train.lr", 0), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("cell ids and per-cell seeds are deterministic") {
  const CellSpec sl{TrainMode::SL, 0.1, 0.0};
  const CellSpec mt{TrainMode::MT, 0.0625, 1.0};
  REQUIRE(cell_id(sl) == "SL_l0.1");
  REQUIRE(cell_id(mt) == "MT_l0.0625_u1");
  REQUIRE(cell_seed(sl, 0, 7) == cell_seed(sl, 0, 7));
  REQUIRE(cell_seed(sl, 0, 7) != cell_seed(sl, 1, 7));
  REQUIRE(cell_seed(sl, 0, 7) != cell_seed(mt, 0, 7));
  REQUIRE(cell_seed(sl, 0, 7) != cell_seed(sl, 0, 8));
}

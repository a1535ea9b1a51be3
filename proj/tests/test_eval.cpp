#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "rodial/eval.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace rodial;

namespace {

// Drops the report lines that are allowed to differ between runs.
std::string stable_lines(const std::string& report) {
  std::string out;
  std::size_t pos = 0;
  while (pos < report.size()) {
    std::size_t end = report.find('\n', pos);
    if (end == std::string::npos) end = report.size();
    std::string line = report.substr(pos, end - pos);
    if (line.rfind("time_", 0) != 0 && line.rfind("host_", 0) != 0) {
      out += line + "\n";
    }
    pos = end + 1;
  }
  return out;
}

ExperimentSpec base_spec(std::vector<std::string> models) {
  ExperimentSpec spec;
  spec.models = std::move(models);
  spec.workers = 2;
  spec.seed = 7;
  return spec;
}

TaskData fixture_task(Scenario scenario = Scenario::full_articles) {
  DataRoot data = load_data_root(testutil::fixture_dir(), false);
  return build_task(data, scenario, Task::dialect);
}

std::map<std::string, double> per_model_accuracy(const std::string& predictions_path,
                                                 const TaskData& task) {
  std::map<std::string, int> gold;
  for (std::size_t i = 0; i < task.test.ids.size(); ++i) {
    gold[task.test.ids[i]] = task.test.labels[i];
  }
  std::map<std::string, std::pair<int, int>> tally;  // model -> (correct, total)
  for (const LevelZeroPrediction& p :
       import_predictions(predictions_path, task.class_names, nullptr)) {
    auto it = gold.find(p.sample_id);
    if (it == gold.end()) continue;  // validation rows share the file format
    auto& t = tally[p.model_id];
    if (p.hard_label == it->second) ++t.first;
    ++t.second;
  }
  std::map<std::string, double> out;
  for (const auto& [model, t] : tally) {
    out[model] = static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return out;
}

}  // namespace

TEST_CASE("accuracy and macro F1 match hand-checked values", "[eval]") {
  std::vector<int> golds{0, 0, 1, 1};
  std::vector<int> all_right = golds;
  REQUIRE(accuracy(all_right, golds) == 1.0);
  REQUIRE(macro_f1(all_right, golds, 2) == 1.0);

  REQUIRE_THAT(accuracy({0, 1, 0}, {0, 0, 0}),
               Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));

  std::vector<int> preds{0, 1, 1, 1};
  REQUIRE(accuracy(preds, golds) == 0.75);
  auto m = confusion_matrix(preds, golds, 2);
  REQUIRE(m == std::vector<std::vector<long long>>{{1, 1}, {0, 2}});
  auto per_class = per_class_metrics(preds, golds, 2);
  REQUIRE(per_class[0].precision == 1.0);
  REQUIRE(per_class[0].recall == 0.5);
  REQUIRE_THAT(per_class[0].f1, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  REQUIRE_THAT(per_class[1].precision, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  REQUIRE(per_class[1].recall == 1.0);
  REQUIRE_THAT(per_class[1].f1, Catch::Matchers::WithinAbs(0.8, 1e-12));
  REQUIRE_THAT(macro_f1(preds, golds, 2),
               Catch::Matchers::WithinAbs((2.0 / 3.0 + 0.8) / 2.0, 1e-12));
}

TEST_CASE("undefined per-class metrics collapse to zero", "[eval]") {
  // Class 1 never appears on either side: precision, recall and F1 are all 0,
  // and it still counts toward the macro average.
  auto per_class = per_class_metrics({0, 0}, {0, 0}, 2);
  REQUIRE(per_class[1].precision == 0.0);
  REQUIRE(per_class[1].recall == 0.0);
  REQUIRE(per_class[1].f1 == 0.0);
  REQUIRE(macro_f1({0, 0}, {0, 0}, 2) == 0.5);

  // Class 1 exists in the golds but is never predicted.
  auto missed = per_class_metrics({0, 0}, {0, 1}, 2);
  REQUIRE(missed[1].f1 == 0.0);
  REQUIRE_THAT(macro_f1({0, 0}, {0, 1}, 2),
               Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("metric inputs are validated", "[eval]") {
  REQUIRE_THROWS_AS(accuracy({}, {}), validation_error);
  REQUIRE_THROWS_AS(accuracy({0}, {0, 1}), validation_error);
  REQUIRE_THROWS_AS(macro_f1({}, {}, 2), validation_error);
  REQUIRE_THROWS_AS(confusion_matrix({2}, {0}, 2), validation_error);
  REQUIRE_THROWS_AS(confusion_matrix({0}, {-1}, 2), validation_error);
  REQUIRE_THROWS_AS(macro_f1({0}, {0}, 0), usage_error);
}

TEST_CASE("macro F1 is invariant under class relabeling", "[eval]") {
  std::mt19937 rng(404);
  const int num_classes = 4;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> golds(60), preds(60);
    std::uniform_int_distribution<int> label(0, num_classes - 1);
    for (auto& g : golds) g = label(rng);
    for (auto& p : preds) p = label(rng);
    std::vector<int> perm(num_classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> golds2(60), preds2(60);
    for (int i = 0; i < 60; ++i) {
      golds2[static_cast<std::size_t>(i)] =
          perm[static_cast<std::size_t>(golds[static_cast<std::size_t>(i)])];
      preds2[static_cast<std::size_t>(i)] =
          perm[static_cast<std::size_t>(preds[static_cast<std::size_t>(i)])];
    }
    REQUIRE_THAT(macro_f1(preds2, golds2, num_classes),
                 Catch::Matchers::WithinAbs(macro_f1(preds, golds, num_classes), 1e-12));
    REQUIRE(accuracy(preds2, golds2) == accuracy(preds, golds));
  }
}

TEST_CASE("confusion rows sum to gold counts and the trace is the accuracy", "[eval]") {
  std::mt19937 rng(505);
  for (int trial = 0; trial < 20; ++trial) {
    const int num_classes = 3;
    std::vector<int> golds(45), preds(45);
    std::uniform_int_distribution<int> label(0, num_classes - 1);
    for (auto& g : golds) g = label(rng);
    for (auto& p : preds) p = label(rng);
    auto m = confusion_matrix(preds, golds, num_classes);
    std::vector<long long> gold_counts(num_classes, 0);
    for (int g : golds) ++gold_counts[static_cast<std::size_t>(g)];
    long long trace = 0;
    for (int g = 0; g < num_classes; ++g) {
      long long row_sum = 0;
      for (int p = 0; p < num_classes; ++p) row_sum += m[g][p];
      REQUIRE(row_sum == gold_counts[static_cast<std::size_t>(g)]);
      trace += m[g][g];
    }
    REQUIRE(static_cast<double>(trace) / 45.0 == accuracy(preds, golds));
  }
}

TEST_CASE("constant predictor reports chance accuracy on the balanced fixture", "[eval]") {
  testutil::TempDir td("eval-const");
  std::string out = (td.path() / "out").string();
  EvalReport r = run_experiment(base_spec({"constant0"}), testutil::fixture_dir(), out);

  REQUIRE(r.final_model == "constant0");
  REQUIRE(r.class_names == std::vector<std::string>{"MD", "RO"});
  REQUIRE(r.n_train == 120);
  REQUIRE(r.n_validation == 24);
  REQUIRE(r.n_test == 24);
  REQUIRE(r.accuracy == 0.5);
  REQUIRE_THAT(r.macro_f1, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
  REQUIRE(r.confusion == std::vector<std::vector<long long>>{{12, 0}, {12, 0}});
  REQUIRE(r.per_class[0].recall == 1.0);
  REQUIRE(r.per_class[1].f1 == 0.0);
  REQUIRE(r.config_fingerprint.size() == 16);

  std::string kv = read_text_file(out + "/report.txt");
  REQUIRE(kv.find("f1_convention=zero_when_undefined\n") != std::string::npos);
  REQUIRE(kv.find("accuracy=0.500000\n") != std::string::npos);
  REQUIRE(kv.find("models=constant0\n") != std::string::npos);
  REQUIRE(read_text_file(out + "/confusion.csv") == "gold\\pred,MD,RO\nMD,12,0\nRO,12,0\n");
  REQUIRE(fs::exists(out + "/report_table.txt"));

  // The emitted prediction files round-trip through the interchange reader.
  TaskData task = fixture_task();
  auto rows = import_predictions(out + "/predictions_test.tsv", task.class_names, nullptr);
  REQUIRE(rows.size() == 24);
  for (const auto& p : rows) {
    REQUIRE(p.model_id == "constant0");
    REQUIRE(p.hard_label == 0);
  }
}

TEST_CASE("kernel models separate the fixture dialects", "[eval]") {
  testutil::TempDir td("eval-kernel");
  EvalReport krr = run_experiment(base_spec({"krr"}), testutil::fixture_dir(),
                                  (td.path() / "krr").string());
  REQUIRE(krr.model_ids == std::vector<std::string>{"krr"});
  REQUIRE(krr.accuracy >= 0.9);
  REQUIRE(krr.macro_f1 >= 0.9);

  EvalReport svm = run_experiment(base_spec({"svm"}), testutil::fixture_dir(),
                                  (td.path() / "svm").string());
  REQUIRE(svm.accuracy >= 0.9);
}

TEST_CASE("reports are byte-stable apart from timing lines", "[eval]") {
  testutil::TempDir td("eval-repro");
  ExperimentSpec spec = base_spec({"krr"});
  EvalReport a = run_experiment(spec, testutil::fixture_dir(), (td.path() / "a").string());
  EvalReport b = run_experiment(spec, testutil::fixture_dir(), (td.path() / "b").string());
  REQUIRE(a.config_fingerprint == b.config_fingerprint);
  REQUIRE(stable_lines(read_text_file((td.path() / "a" / "report.txt").string())) ==
          stable_lines(read_text_file((td.path() / "b" / "report.txt").string())));
  REQUIRE(read_text_file((td.path() / "a" / "predictions_test.tsv").string()) ==
          read_text_file((td.path() / "b" / "predictions_test.tsv").string()));
}

TEST_CASE("gram cache entries are honored and stale ids are rebuilt", "[eval]") {
  testutil::TempDir td("eval-cache");
  TaskData task = fixture_task();
  std::string cache = (td.path() / "cache").string();
  fs::create_directories(cache);
  std::string stem = cache + "/K_" + task.corpus_checksum + "_n6_norm_";

  // A valid cached test-part matrix with all-zero values: if the run honors it,
  // every test score is zero and the balanced split lands at chance exactly.
  KernelMatrix zero_test;
  zero_test.rows = task.test.ids.size();
  zero_test.cols = task.train.ids.size();
  zero_test.values.assign(zero_test.rows * zero_test.cols, 0.0f);
  zero_test.row_ids = task.test.ids;
  zero_test.col_ids = task.train.ids;
  save_kernel(zero_test, stem + "test.bin");

  // A validation-part entry whose row ids do not match must be rebuilt.
  KernelMatrix stale = zero_test;
  stale.rows = task.validation.ids.size();
  stale.values.assign(stale.rows * stale.cols, 0.0f);
  stale.row_ids.assign(task.validation.ids.rbegin(), task.validation.ids.rend());
  save_kernel(stale, stem + "validation.bin");

  ExperimentSpec spec = base_spec({"krr"});
  spec.cache_dir = cache;
  EvalReport cached = run_experiment(spec, testutil::fixture_dir(),
                                     (td.path() / "cached").string());
  REQUIRE(cached.accuracy == 0.5);

  ExperimentSpec fresh = base_spec({"krr"});
  EvalReport uncached = run_experiment(fresh, testutil::fixture_dir(),
                                       (td.path() / "fresh").string());
  REQUIRE(uncached.accuracy > cached.accuracy);

  REQUIRE(fs::exists(stem + "train.bin"));
  KernelMatrix rebuilt = load_kernel(stem + "validation.bin");
  REQUIRE(rebuilt.row_ids == task.validation.ids);
}

TEST_CASE("sentence scenario scores opening sentences", "[eval]") {
  testutil::TempDir td("eval-sent");
  ExperimentSpec spec = base_spec({"krr"});
  spec.scenario = Scenario::sentences;
  EvalReport r = run_experiment(spec, testutil::fixture_dir(), (td.path() / "out").string());
  REQUIRE(r.scenario == "sentences");
  REQUIRE(r.n_test == 24);
  REQUIRE(r.accuracy >= 0.9);
}

TEST_CASE("cross-genre scenario trains on opening sentences and scores tweets",
          "[eval]") {
  testutil::TempDir td("eval-tweets");
  ExperimentSpec spec = base_spec({"krr"});
  spec.scenario = Scenario::cross_genre_tweets;
  EvalReport r = run_experiment(spec, testutil::fixture_dir(), (td.path() / "out").string());
  REQUIRE(r.scenario == "cross_genre_tweets");
  REQUIRE(r.n_train == 120);
  REQUIRE(r.n_validation == 12);
  REQUIRE(r.n_test == 24);
  REQUIRE(r.accuracy >= 0.9);
}

TEST_CASE("cnn experiment runs end to end on the fixture", "[eval]") {
  testutil::TempDir td("eval-cnn");
  ExperimentSpec spec = base_spec({"cnn"});
  spec.workers = 1;
  spec.cnn_auto_input_len = false;
  spec.cnn.input_len = 216;
  spec.cnn.embed_dim = 12;
  spec.cnn.conv_filters = 12;
  spec.cnn.conv_widths = {5, 3};
  spec.cnn.pool_width = 3;
  spec.cnn.se_reduction = 4;
  spec.cnn.fc_dims = {16};
  spec.cnn.dropout = 0.1f;
  spec.cnn.lr = 3e-3;
  spec.cnn.epochs = 60;
  spec.cnn.batch_size = 12;
  spec.cnn.min_count = 1;
  EvalReport r = run_experiment(spec, testutil::fixture_dir(), (td.path() / "out").string());
  REQUIRE(r.model_ids == std::vector<std::string>{"cnn"});
  REQUIRE(r.accuracy >= 0.85);
  REQUIRE(r.train_seconds > 0.0);
}

TEST_CASE("stacking and voting combine fixture components", "[eval]") {
  testutil::TempDir td("eval-ens");
  std::string stack_out = (td.path() / "stack").string();
  EvalReport stack = run_experiment(base_spec({"krr", "svm", "stacking"}),
                                    testutil::fixture_dir(), stack_out);
  REQUIRE(stack.model_ids == std::vector<std::string>{"krr", "svm", "stacking"});
  REQUIRE(stack.final_model == "stacking");

  TaskData task = fixture_task();
  auto components = per_model_accuracy(stack_out + "/predictions_test.tsv", task);
  REQUIRE(components.count("krr") == 1);
  REQUIRE(components.count("svm") == 1);
  double best = std::max(components["krr"], components["svm"]);
  REQUIRE(stack.accuracy >= best - 1e-9);

  EvalReport vote = run_experiment(base_spec({"krr", "svm", "constant0", "vote"}),
                                   testutil::fixture_dir(), (td.path() / "vote").string());
  REQUIRE(vote.final_model == "vote");
  REQUIRE(vote.accuracy >= best - 1e-9);
}

TEST_CASE("imported predictions join the stacker and raise its score", "[eval]") {
  testutil::TempDir td("eval-import");
  TaskData task = fixture_task();

  // An external model that is right everywhere except one test article.
  std::vector<LevelZeroPrediction> ext;
  auto add = [&](const TaskSplit& split, std::size_t flip_index) {
    for (std::size_t i = 0; i < split.ids.size(); ++i) {
      int label = split.labels[i];
      if (i == flip_index) label = 1 - label;
      LevelZeroPrediction p;
      p.sample_id = split.ids[i];
      p.model_id = "ext";
      p.hard_label = label;
      p.probs = {label == 0 ? 0.95 : 0.05, label == 0 ? 0.05 : 0.95};
      ext.push_back(std::move(p));
    }
  };
  add(task.validation, task.validation.ids.size());  // no flip on validation
  add(task.test, 0);
  std::string ext_path = (td.path() / "ext.tsv").string();
  export_predictions(ext_path, ext, task.class_names);

  // A constant-only stacker has no signal to work with: it predicts one class
  // for every sample, which is chance on the balanced split.
  EvalReport alone = run_experiment(base_spec({"constant0", "stacking"}),
                                    testutil::fixture_dir(), (td.path() / "alone").string());
  REQUIRE(alone.accuracy == 0.5);

  ExperimentSpec with_ext = base_spec({"constant0", "stacking"});
  with_ext.import_files = {ext_path};
  EvalReport joined = run_experiment(with_ext, testutil::fixture_dir(),
                                     (td.path() / "joined").string());
  REQUIRE(joined.model_ids == std::vector<std::string>{"constant0", "ext", "stacking"});
  REQUIRE_THAT(joined.accuracy, Catch::Matchers::WithinAbs(23.0 / 24.0, 1e-12));
  REQUIRE(joined.accuracy > alone.accuracy);

  // Imported ids must not shadow an internal model.
  std::vector<LevelZeroPrediction> clash;
  LevelZeroPrediction p;
  p.sample_id = task.validation.ids[0];
  p.model_id = "krr";
  p.hard_label = 0;
  p.probs = {0.9, 0.1};
  clash.push_back(p);
  std::string clash_path = (td.path() / "clash.tsv").string();
  export_predictions(clash_path, clash, task.class_names);
  ExperimentSpec bad = base_spec({"krr", "stacking"});
  bad.import_files = {clash_path};
  REQUIRE_THROWS_AS(run_experiment(bad, testutil::fixture_dir(),
                                   (td.path() / "bad").string()),
                    validation_error);

  // Imported rows must reference this task's samples.
  p.sample_id = "no-such-article";
  p.model_id = "ext2";
  std::string orphan_path = (td.path() / "orphan.tsv").string();
  export_predictions(orphan_path, {p}, task.class_names);
  ExperimentSpec orphan = base_spec({"constant0", "stacking"});
  orphan.import_files = {orphan_path};
  REQUIRE_THROWS_AS(run_experiment(orphan, testutil::fixture_dir(),
                                   (td.path() / "orphan").string()),
                    validation_error);
}

TEST_CASE("model lists are validated before any training", "[eval]") {
  testutil::TempDir td("eval-badspec");
  std::string out = (td.path() / "out").string();
  auto run = [&](std::vector<std::string> models) {
    return run_experiment(base_spec(std::move(models)), testutil::fixture_dir(), out);
  };
  REQUIRE_THROWS_AS(run({"krr", "svm"}), usage_error);
  REQUIRE_THROWS_AS(run({"vote", "stacking"}), usage_error);
  REQUIRE_THROWS_AS(run({"stacking"}), usage_error);
  REQUIRE_THROWS_AS(run({"nonsense"}), usage_error);
  REQUIRE_THROWS_AS(run({"constant5"}), usage_error);
  REQUIRE_THROWS_AS(run({}), usage_error);
}

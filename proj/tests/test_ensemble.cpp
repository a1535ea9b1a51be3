#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "rodial/common.hpp"
#include "rodial/ensemble.hpp"
#include "test_util.hpp"

using namespace rodial;
using testutil::TempDir;

namespace {

LevelZeroPrediction pred(std::string sample, std::string model, int hard,
                         std::vector<double> probs) {
  LevelZeroPrediction p;
  p.sample_id = std::move(sample);
  p.model_id = std::move(model);
  p.hard_label = hard;
  p.probs = std::move(probs);
  return p;
}

}  // namespace

TEST_CASE("calibration maps margins to probabilities", "[ensemble]") {
  auto mid = calibrate_scores({0.0}, CalibrationMethod::logistic);
  REQUIRE(mid.size() == 2);
  CHECK(mid[0] == Catch::Approx(0.5).margin(1e-12));
  CHECK(mid[1] == Catch::Approx(0.5).margin(1e-12));

  auto sure = calibrate_scores({50.0}, CalibrationMethod::logistic);
  CHECK(sure[0] > 0.9999999);
  CHECK(sure[0] + sure[1] == Catch::Approx(1.0).margin(1e-12));

  auto one_and_half = calibrate_scores({1.5}, CalibrationMethod::logistic);
  CHECK(one_and_half[0] == Catch::Approx(0.817574476).margin(1e-9));

  auto soft = calibrate_scores({2.0, 1.0, 0.0, -1.0, -2.0, -3.0}, CalibrationMethod::softmax);
  std::vector<double> expected{0.633691, 0.233122, 0.085761, 0.031550, 0.011606, 0.004270};
  REQUIRE(soft.size() == expected.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < soft.size(); ++i) {
    CHECK(soft[i] == Catch::Approx(expected[i]).margin(5e-7));
    sum += soft[i];
  }
  CHECK(sum == Catch::Approx(1.0).margin(1e-12));

  // Positive scaling moves binary probabilities but never flips the argmax.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> margin(-4.0, 4.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    double s = margin(rng);
    if (s == 0.0) continue;
    auto a = calibrate_scores({s}, CalibrationMethod::logistic);
    auto b = calibrate_scores({s * scale(rng)}, CalibrationMethod::logistic);
    CHECK((a[0] > a[1]) == (b[0] > b[1]));
  }

  CHECK_THROWS_AS(calibrate_scores({1.0, 2.0}, CalibrationMethod::logistic), usage_error);
  CHECK_THROWS_AS(calibrate_scores({}, CalibrationMethod::softmax), usage_error);
}

TEST_CASE("plurality vote follows majority then mean probability then index", "[ensemble]") {
  auto a1 = pred("s", "m1", 0, {0.9, 0.1});
  auto a2 = pred("s", "m2", 0, {0.8, 0.2});
  auto b1 = pred("s", "m3", 1, {0.3, 0.7});
  CHECK(plurality_vote({a1, a2, b1}) == 0);
  CHECK(plurality_vote({b1, b1, b1}) == 1);

  // A 1-1 tie goes to the class with the higher mean probability.
  auto strong_b = pred("s", "m2", 1, {0.1, 0.9});
  auto weak_a = pred("s", "m1", 0, {0.55, 0.45});
  CHECK(plurality_vote({weak_a, strong_b}) == 1);
  CHECK(plurality_vote({strong_b, weak_a}) == 1);  // order never matters

  // Identical mean probabilities: lowest class index wins.
  auto even_a = pred("s", "m1", 0, {0.5, 0.5});
  auto even_b = pred("s", "m2", 1, {0.5, 0.5});
  CHECK(plurality_vote({even_a, even_b}) == 0);

  // Voting is invariant to model ordering.
  std::vector<LevelZeroPrediction> votes{a1, a2, b1, strong_b, weak_a};
  int baseline = plurality_vote(votes);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(votes.begin(), votes.end(), rng);
    CHECK(plurality_vote(votes) == baseline);
  }

  CHECK_THROWS_AS(plurality_vote({}), usage_error);
  CHECK_THROWS_AS(plurality_vote({pred("s", "m", 0, {0.7, 0.2})}), validation_error);
}

TEST_CASE("meta features concatenate one-hot and probabilities in registry order", "[ensemble]") {
  StackerRegistry reg;
  reg.model_ids = {"svm"};
  reg.class_names = {"MD", "RO"};
  auto features = to_meta_features({pred("s1", "svm", 0, {0.8, 0.2})}, reg);
  CHECK(features == std::vector<double>{1.0, 0.0, 0.8, 0.2});
  CHECK(reg.feature_dim() == 4);

  StackerRegistry fifteen;
  for (int i = 0; i < 15; ++i) fifteen.model_ids.push_back("m" + std::to_string(i));
  fifteen.class_names = {"MD", "RO"};
  CHECK(fifteen.feature_dim() == 60);

  StackerRegistry two;
  two.model_ids = {"svm", "krr"};
  two.class_names = {"MD", "RO"};
  auto svm_pred = pred("s1", "svm", 0, {0.8, 0.2});
  auto krr_pred = pred("s1", "krr", 1, {0.4, 0.6});
  auto ordered = to_meta_features({krr_pred, svm_pred}, two);  // lookup, not input order
  CHECK(ordered == std::vector<double>{1.0, 0.0, 0.8, 0.2, 0.0, 1.0, 0.4, 0.6});

  // Registry order is part of the model: swapping it swaps the blocks.
  StackerRegistry swapped;
  swapped.model_ids = {"krr", "svm"};
  swapped.class_names = {"MD", "RO"};
  auto swapped_features = to_meta_features({svm_pred, krr_pred}, swapped);
  CHECK(swapped_features == std::vector<double>{0.0, 1.0, 0.4, 0.6, 1.0, 0.0, 0.8, 0.2});

  CHECK_THROWS_WITH(to_meta_features({svm_pred}, two),
                    Catch::Matchers::ContainsSubstring("krr"));
  auto three_class = pred("s1", "svm", 0, {0.5, 0.3, 0.2});
  CHECK_THROWS_AS(to_meta_features({three_class, krr_pred}, two), validation_error);
}

TEST_CASE("stacker learns a perfectly predictive one-hot block", "[ensemble]") {
  StackerRegistry reg;
  reg.model_ids = {"only"};
  reg.class_names = {"MD", "RO"};

  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> jitter(0.55, 0.95);
  for (int i = 0; i < 24; ++i) {
    int gold = i % 2;
    double p = jitter(rng);
    auto one = pred("s" + std::to_string(i), "only", gold,
                    gold == 0 ? std::vector<double>{p, 1 - p} : std::vector<double>{1 - p, p});
    features.push_back(to_meta_features({one}, reg));
    labels.push_back(gold);
  }

  StackerFitReport report;
  StackerModel model = train_stacker(features, labels, reg, StackerPenalty::l2, 1.0, &report);

  int correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto [probs, hard] = predict_stacker(model, features[i]);
    if (hard == labels[i]) ++correct;
    CHECK(probs[0] + probs[1] == Catch::Approx(1.0).margin(1e-9));
  }
  CHECK(correct == 24);
  CHECK(report.final_grad_norm <= 1e-6);

  // Convexity: the optimizer's loss trace never increases.
  for (std::size_t i = 1; i < report.loss_history.size(); ++i) {
    CHECK(report.loss_history[i] <= report.loss_history[i - 1] + 1e-12);
  }

  // Determinism: refitting reproduces the weights bit for bit.
  StackerModel again = train_stacker(features, labels, reg, StackerPenalty::l2, 1.0);
  CHECK(again.w == model.w);
  CHECK(again.b == model.b);
}

TEST_CASE("extreme regularization collapses weights onto intercept priors", "[ensemble]") {
  StackerRegistry reg;
  reg.model_ids = {"only"};
  reg.class_names = {"MD", "RO"};

  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (int i = 0; i < 16; ++i) {
    int gold = i < 12 ? 0 : 1;  // priors 0.75 / 0.25
    auto one = pred("s" + std::to_string(i), "only", gold,
                    gold == 0 ? std::vector<double>{0.9, 0.1} : std::vector<double>{0.2, 0.8});
    features.push_back(to_meta_features({one}, reg));
    labels.push_back(gold);
  }

  StackerModel model = train_stacker(features, labels, reg, StackerPenalty::l2, 1e-10);
  for (double v : model.w) CHECK(std::abs(v) <= 1e-6);
  auto [probs, hard] = predict_stacker(model, features.front());
  CHECK(probs[0] == Catch::Approx(0.75).margin(1e-3));
  CHECK(probs[1] == Catch::Approx(0.25).margin(1e-3));
  CHECK(hard == 0);
}

TEST_CASE("l1 stacking drives uninformative weights to exact zero", "[ensemble]") {
  StackerRegistry reg;
  reg.model_ids = {"informative", "noise"};
  reg.class_names = {"MD", "RO"};

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    int gold = i % 2;
    auto good = pred("s" + std::to_string(i), "informative", gold,
                     gold == 0 ? std::vector<double>{0.9, 0.1} : std::vector<double>{0.1, 0.9});
    int noise_label = coin(rng) < 0.5 ? 0 : 1;
    auto bad = pred("s" + std::to_string(i), "noise", noise_label,
                    noise_label == 0 ? std::vector<double>{0.6, 0.4}
                                     : std::vector<double>{0.4, 0.6});
    features.push_back(to_meta_features({good, bad}, reg));
    labels.push_back(gold);
  }

  StackerFitReport report;
  StackerModel model = train_stacker(features, labels, reg, StackerPenalty::l1, 1.0, &report);
  for (std::size_t i = 1; i < report.loss_history.size(); ++i) {
    CHECK(report.loss_history[i] <= report.loss_history[i - 1] + 1e-12);
  }
  int zeros = 0;
  for (double v : model.w) {
    if (v == 0.0) ++zeros;
  }
  CHECK(zeros > 0);  // soft thresholding produces exact sparsity

  int correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (predict_stacker(model, features[i]).second == labels[i]) ++correct;
  }
  CHECK(correct == 40);
}

TEST_CASE("stacker rejects degenerate inputs and mismatched dimensions", "[ensemble]") {
  StackerRegistry reg;
  reg.model_ids = {"only"};
  reg.class_names = {"MD", "RO"};
  std::vector<std::vector<double>> features{{1, 0, 0.9, 0.1}, {1, 0, 0.8, 0.2}};

  CHECK_THROWS_AS(train_stacker(features, {0, 0}, reg, StackerPenalty::l2, 1.0),
                  validation_error);
  CHECK_THROWS_AS(train_stacker(features, {0}, reg, StackerPenalty::l2, 1.0),
                  validation_error);
  CHECK_THROWS_AS(train_stacker(features, {0, 1}, reg, StackerPenalty::l2, 0.0), usage_error);
  CHECK_THROWS_AS(train_stacker({{1, 0, 0.9}}, {0}, reg, StackerPenalty::l2, 1.0),
                  validation_error);

  StackerModel zero;
  zero.registry = reg;
  zero.w.assign(8, 0.0);
  zero.b.assign(2, 0.0);
  auto [probs, hard] = predict_stacker(zero, {1, 0, 0.9, 0.1});
  CHECK(probs[0] == Catch::Approx(0.5).margin(1e-12));
  CHECK(probs[1] == Catch::Approx(0.5).margin(1e-12));
  CHECK(hard == 0);  // tie goes to the lowest class index

  CHECK_THROWS_AS(predict_stacker(zero, {1, 0, 0.9}), validation_error);
}

TEST_CASE("interchange files round-trip doubles exactly", "[ensemble]") {
  TempDir tmp("ensemble");
  std::vector<std::string> classes{"MD", "RO"};

  double third = 1.0 / 3.0;
  std::vector<LevelZeroPrediction> preds{
      pred("s1", "svm", 0, {third, 1.0 - third}),
      pred("s1", "krr", 1, {0.1 + 0.2, 1.0 - (0.1 + 0.2)}),
      pred("s2", "svm", 1, {0.25, 0.75}),
  };
  std::string path = (tmp.path() / "preds.tsv").string();
  export_predictions(path, preds, classes);

  std::vector<std::string> ids{"s1", "s2"};
  auto loaded = import_predictions(path, classes, &ids);
  REQUIRE(loaded.size() == preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(loaded[i].sample_id == preds[i].sample_id);
    CHECK(loaded[i].model_id == preds[i].model_id);
    CHECK(loaded[i].hard_label == preds[i].hard_label);
    REQUIRE(loaded[i].probs.size() == preds[i].probs.size());
    for (std::size_t c = 0; c < preds[i].probs.size(); ++c) {
      CHECK(loaded[i].probs[c] == preds[i].probs[c]);  // bitwise
    }
  }

  auto groups = group_by_sample(loaded);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].first == "s1");
  CHECK(groups[0].second.size() == 2);
  CHECK(groups[1].first == "s2");
}

TEST_CASE("interchange import reports bad rows with line numbers", "[ensemble]") {
  TempDir tmp("ensemble_bad");
  std::vector<std::string> classes{"MD", "RO"};
  auto write = [&](const std::string& name, const std::string& content) {
    std::string p = (tmp.path() / name).string();
    write_text_file(p, content);
    return p;
  };
  const std::string header = "sample_id\tmodel_id\thard_label\tp_MD\tp_RO\n";

  CHECK_THROWS_WITH(import_predictions(write("h.tsv", "sample\tmodel\n"), classes),
                    Catch::Matchers::ContainsSubstring("line 1"));
  CHECK_THROWS_AS(import_predictions(write("e.tsv", ""), classes), parse_error);

  CHECK_THROWS_WITH(import_predictions(write("c.tsv", header + "s1\tm1\t0\t0.5\n"), classes),
                    Catch::Matchers::ContainsSubstring("line 2"));

  CHECK_THROWS_WITH(
      import_predictions(write("s.tsv", header + "s1\tm1\t0\t0.5\t0.4\n"), classes),
      Catch::Matchers::ContainsSubstring("line 2"));

  CHECK_THROWS_WITH(
      import_predictions(write("f.tsv", header + "s1\tm1\t0\tabc\t0.5\n"), classes),
      Catch::Matchers::ContainsSubstring("bad probability"));

  CHECK_THROWS_WITH(
      import_predictions(write("l.tsv", header + "s1\tm1\ttwo\t0.5\t0.5\n"), classes),
      Catch::Matchers::ContainsSubstring("bad hard label"));

  std::vector<std::string> ids{"s1"};
  CHECK_THROWS_WITH(
      import_predictions(write("u.tsv", header + "ghost\tm1\t0\t0.5\t0.5\n"), classes, &ids),
      Catch::Matchers::ContainsSubstring("unknown sample id"));

  CHECK_THROWS_WITH(
      import_predictions(
          write("d.tsv", header + "s1\tm1\t0\t0.5\t0.5\ns1\tm1\t1\t0.4\t0.6\n"), classes),
      Catch::Matchers::ContainsSubstring("duplicate"));

  // Well-formed rows all load.
  auto ok = import_predictions(
      write("ok.tsv", header + "s1\tm1\t0\t0.5\t0.5\ns1\tm2\t1\t0.25\t0.75\n"), classes);
  CHECK(ok.size() == 2);
}

TEST_CASE("stacker artifacts survive a save-load round trip", "[ensemble]") {
  TempDir tmp("stacker_io");
  StackerRegistry reg;
  reg.model_ids = {"svm", "krr"};
  reg.class_names = {"MD", "RO"};

  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    int gold = i % 2;
    auto a = pred("s", "svm", gold,
                  gold == 0 ? std::vector<double>{0.8, 0.2} : std::vector<double>{0.3, 0.7});
    auto b = pred("s", "krr", gold,
                  gold == 0 ? std::vector<double>{0.7, 0.3} : std::vector<double>{0.4, 0.6});
    features.push_back(to_meta_features({a, b}, reg));
    labels.push_back(gold);
  }
  StackerModel model = train_stacker(features, labels, reg, StackerPenalty::l2, 10.0);

  std::string path = (tmp.path() / "stacker.bin").string();
  save_stacker(model, path);
  StackerModel back = load_stacker(path);
  CHECK(back.registry.model_ids == model.registry.model_ids);
  CHECK(back.registry.class_names == model.registry.class_names);
  CHECK(back.penalty == model.penalty);
  CHECK(back.c == model.c);
  CHECK(back.w == model.w);
  CHECK(back.b == model.b);

  auto [p1, h1] = predict_stacker(model, features.front());
  auto [p2, h2] = predict_stacker(back, features.front());
  CHECK(p1 == p2);
  CHECK(h1 == h2);

  // Corruption is caught.
  std::string raw = read_text_file(path);
  std::string bad_magic = raw;
  bad_magic[0] = 'X';
  std::string bad_path = (tmp.path() / "bad.bin").string();
  write_text_file(bad_path, bad_magic);
  CHECK_THROWS_AS(load_stacker(bad_path), parse_error);

  std::string truncated = raw.substr(0, raw.size() - 3);
  std::string trunc_path = (tmp.path() / "trunc.bin").string();
  write_text_file(trunc_path, truncated);
  CHECK_THROWS_AS(load_stacker(trunc_path), parse_error);

  std::string trailing = raw + "x";
  std::string trail_path = (tmp.path() / "trail.bin").string();
  write_text_file(trail_path, trailing);
  CHECK_THROWS_AS(load_stacker(trail_path), parse_error);
}

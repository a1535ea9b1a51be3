#pragma once

// Metrics (accuracy, macro F1, confusion matrices) and end-to-end experiment
// orchestration: load a data root, build the task view, train the requested
// models, combine them if asked, score the test split, and emit a report as
// key=value text, a rendered table, and a confusion-matrix CSV. Reports are
// byte-reproducible for a fixed spec, seed, and data, except for lines
// prefixed time_ or host_.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rodial/charcnn.hpp"
#include "rodial/common.hpp"
#include "rodial/corpus.hpp"
#include "rodial/ensemble.hpp"
#include "rodial/kernel_models.hpp"
#include "rodial/strkernel.hpp"

namespace rodial {

// --- Metrics -----------------------------------------------------------------

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline void check_aligned_labels(const std::vector<int>& preds, const std::vector<int>& golds,
                                 int num_classes) {
  if (preds.size() != golds.size()) {
    throw validation_error("predictions and golds differ in length (" +
                           std::to_string(preds.size()) + " vs " +
                           std::to_string(golds.size()) + ")");
  }
  if (preds.empty()) throw validation_error("metrics are undefined on empty inputs");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || golds[i] < 0 || golds[i] >= num_classes) {
      throw validation_error("unknown label at row " + std::to_string(i));
    }
  }
}

}  // namespace detail

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& golds) {
  if (preds.size() != golds.size()) {
    throw validation_error("predictions and golds differ in length (" +
                           std::to_string(preds.size()) + " vs " +
                           std::to_string(golds.size()) + ")");
  }
  if (preds.empty()) throw validation_error("accuracy is undefined on empty inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

inline std::vector<std::vector<long long>> confusion_matrix(const std::vector<int>& preds,
                                                            const std::vector<int>& golds,
                                                            int num_classes) {
  detail::check_aligned_labels(preds, golds, num_classes);
  std::vector<std::vector<long long>> m(
      static_cast<std::size_t>(num_classes),
      std::vector<long long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++m[static_cast<std::size_t>(golds[i])][static_cast<std::size_t>(preds[i])];
  }
  return m;
}

// Per-class precision/recall/F1 with the zero-when-undefined convention:
// a zero denominator makes the metric 0, and classes absent from both sides
// still count toward the macro average.
inline std::vector<ClassMetrics> per_class_metrics(const std::vector<int>& preds,
                                                   const std::vector<int>& golds,
                                                   int num_classes) {
  auto m = confusion_matrix(preds, golds, num_classes);
  std::vector<ClassMetrics> out(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    long long tp = m[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    long long gold_count = 0, pred_count = 0;
    for (int j = 0; j < num_classes; ++j) {
      gold_count += m[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      pred_count += m[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    }
    ClassMetrics& cm = out[static_cast<std::size_t>(k)];
    cm.precision = pred_count > 0 ? static_cast<double>(tp) / static_cast<double>(pred_count) : 0.0;
    cm.recall = gold_count > 0 ? static_cast<double>(tp) / static_cast<double>(gold_count) : 0.0;
    double denom = cm.precision + cm.recall;
    cm.f1 = denom > 0.0 ? 2.0 * cm.precision * cm.recall / denom : 0.0;
  }
  return out;
}

inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& golds,
                       int num_classes) {
  if (num_classes <= 0) throw usage_error("macro F1 needs a non-empty class set");
  auto per_class = per_class_metrics(preds, golds, num_classes);
  double sum = 0.0;
  for (const ClassMetrics& cm : per_class) sum += cm.f1;
  return sum / static_cast<double>(num_classes);
}

// --- Experiment specification ------------------------------------------------

struct ExperimentSpec {
  Task task = Task::dialect;
  Scenario scenario = Scenario::full_articles;
  // The last entry is the model the report evaluates; any earlier entries are
  // its level-zero inputs and require the last to be "vote" or "stacking".
  // Base entries: krr, svm, cnn, constant<k>.
  std::vector<std::string> models{"krr"};
  KernelSpec kernel;
  KernelHyper hyper;
  std::optional<MulticlassScheme> scheme;
  CnnConfig cnn;
  bool cnn_auto_input_len = true;  // 5000 for article training, 1000 for sentences
  StackerPenalty stacker_penalty = StackerPenalty::l2;
  double stacker_c = 1.0;
  std::vector<std::string> import_files;  // interchange TSVs with external predictions
  std::string cache_dir;                  // when set, Gram matrices are cached here
  int workers = 0;                        // 0 → all hardware threads
  std::uint64_t seed = 42;
};

struct EvalReport {
  std::string task;
  std::string scenario;
  std::vector<std::string> model_ids;  // every model that ran, final last
  std::string final_model;
  std::vector<std::string> class_names;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<long long>> confusion;
  double train_seconds = 0.0;
  double inference_ms_per_sample = 0.0;
  std::string config_fingerprint;
  std::uint64_t seed = 0;
};

// --- Report rendering --------------------------------------------------------

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace detail

inline std::string render_report_kv(const EvalReport& r) {
  std::string out;
  out += "task=" + r.task + "\n";
  out += "scenario=" + r.scenario + "\n";
  out += "models=" + join(r.model_ids, ",") + "\n";
  out += "final_model=" + r.final_model + "\n";
  out += "classes=" + join(r.class_names, ",") + "\n";
  out += "n_train=" + std::to_string(r.n_train) + "\n";
  out += "n_validation=" + std::to_string(r.n_validation) + "\n";
  out += "n_test=" + std::to_string(r.n_test) + "\n";
  out += "accuracy=" + detail::fmt("%.6f", r.accuracy) + "\n";
  out += "macro_f1=" + detail::fmt("%.6f", r.macro_f1) + "\n";
  for (std::size_t k = 0; k < r.class_names.size(); ++k) {
    const std::string& name = r.class_names[k];
    out += "precision_" + name + "=" + detail::fmt("%.6f", r.per_class[k].precision) + "\n";
    out += "recall_" + name + "=" + detail::fmt("%.6f", r.per_class[k].recall) + "\n";
    out += "f1_" + name + "=" + detail::fmt("%.6f", r.per_class[k].f1) + "\n";
  }
  out += "f1_convention=zero_when_undefined\n";
  out += "config_fingerprint=" + r.config_fingerprint + "\n";
  out += "seed=" + std::to_string(r.seed) + "\n";
  out += "time_train_seconds=" + detail::fmt("%.3f", r.train_seconds) + "\n";
  out += "time_inference_ms_per_sample=" + detail::fmt("%.4f", r.inference_ms_per_sample) + "\n";
  out += "host_threads=" + std::to_string(default_workers()) + "\n";
  return out;
}

inline std::string render_report_table(const EvalReport& r) {
  std::string out;
  out += r.task + " / " + r.scenario + "\n";
  out += "model            accuracy   macro_F1   train_s    infer_ms\n";
  char row[160];
  std::snprintf(row, sizeof(row), "%-16s %-10.4f %-10.4f %-10.3f %-10.4f\n",
                r.final_model.c_str(), r.accuracy, r.macro_f1, r.train_seconds,
                r.inference_ms_per_sample);
  out += row;
  out += "\nclass            precision  recall     F1\n";
  for (std::size_t k = 0; k < r.class_names.size(); ++k) {
    std::snprintf(row, sizeof(row), "%-16s %-10.4f %-10.4f %-10.4f\n",
                  r.class_names[k].c_str(), r.per_class[k].precision, r.per_class[k].recall,
                  r.per_class[k].f1);
    out += row;
  }
  return out;
}

inline std::string render_confusion_csv(const EvalReport& r) {
  std::string out = "gold\\pred";
  for (const std::string& name : r.class_names) out += "," + name;
  out += "\n";
  for (std::size_t g = 0; g < r.class_names.size(); ++g) {
    out += r.class_names[g];
    for (std::size_t p = 0; p < r.class_names.size(); ++p) {
      out += "," + std::to_string(r.confusion[g][p]);
    }
    out += "\n";
  }
  return out;
}

// --- Orchestration -----------------------------------------------------------

namespace detail {

struct LevelZeroRun {
  std::string model_id;
  std::vector<LevelZeroPrediction> val;   // aligned with the validation split
  std::vector<LevelZeroPrediction> test;  // aligned with the test split
};

inline bool is_ensemble_name(const std::string& name) {
  return name == "vote" || name == "stacking";
}

inline std::optional<int> parse_constant_model(const std::string& name) {
  if (name.rfind("constant", 0) != 0) return std::nullopt;
  std::string digits = name.substr(8);
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
    return std::nullopt;
  }
  return std::stoi(digits);
}

inline std::vector<LevelZeroPrediction> kernel_split_predictions(
    const KernelModel& model, const KernelMatrix& cross, const std::vector<std::string>& ids,
    const std::string& model_id, int workers) {
  KernelPrediction raw = predict_kernel_model(model, cross, workers);
  std::vector<LevelZeroPrediction> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[i].sample_id = ids[i];
    out[i].model_id = model_id;
    out[i].hard_label = raw.labels[i];
    out[i].probs = raw.scores[i].size() == 1
                       ? calibrate_scores(raw.scores[i], CalibrationMethod::logistic)
                       : calibrate_scores(raw.scores[i], CalibrationMethod::softmax);
  }
  return out;
}

inline std::vector<LevelZeroPrediction> cnn_split_predictions(
    const CnnConfig& c, const CnnParams& params, const std::vector<std::vector<int>>& ids_enc,
    const std::vector<std::string>& ids, const std::string& model_id, int workers) {
  auto probs = predict_probs(c, params, ids_enc, workers);
  std::vector<LevelZeroPrediction> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[i].sample_id = ids[i];
    out[i].model_id = model_id;
    out[i].hard_label = argmax_label(probs[i]);
    out[i].probs = std::move(probs[i]);
  }
  return out;
}

inline KernelMatrix head_rows(const KernelMatrix& K, std::size_t n) {
  std::vector<std::size_t> rows(std::min(n, K.rows));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::vector<std::size_t> cols(K.cols);
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
  return submatrix(K, rows, cols);
}

inline std::string kernel_cache_path(const std::string& dir, const std::string& checksum,
                                     const KernelSpec& spec, const std::string& part) {
  return dir + "/K_" + checksum + "_n" + std::to_string(spec.n) +
         (spec.normalized ? "_norm_" : "_raw_") + part + ".bin";
}

// Gram matrix with an optional on-disk cache. A cached file is used only when
// its row and column ids match the requested collections exactly; anything
// else is recomputed and the cache entry replaced.
inline KernelMatrix cached_gram(const TextCollection& a, const TextCollection& b,
                                const KernelSpec& spec, const std::string& cache_dir,
                                const std::string& checksum, const std::string& part,
                                int workers) {
  if (cache_dir.empty()) return gram_matrix(a, b, spec, workers);
  std::string path = kernel_cache_path(cache_dir, checksum, spec, part);
  if (std::filesystem::exists(path)) {
    KernelMatrix cached = load_kernel(path);
    if (cached.row_ids == a.ids && cached.col_ids == b.ids) return cached;
  }
  KernelMatrix K = gram_matrix(a, b, spec, workers);
  std::filesystem::create_directories(cache_dir);
  save_kernel(K, path);
  return K;
}

}  // namespace detail

inline EvalReport run_experiment(const ExperimentSpec& spec, const std::string& data_root,
                                 const std::string& out_dir) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  if (spec.models.empty()) throw usage_error("experiment needs at least one model");
  int workers = spec.workers > 0 ? spec.workers : default_workers();

  const std::string final_model = spec.models.back();
  std::vector<std::string> base_models(spec.models.begin(), spec.models.end());
  bool ensemble_final = detail::is_ensemble_name(final_model);
  if (ensemble_final) base_models.pop_back();
  if (!ensemble_final && spec.models.size() > 1) {
    throw usage_error("multiple models require the last one to be vote or stacking");
  }
  for (const std::string& name : base_models) {
    if (detail::is_ensemble_name(name)) {
      throw usage_error("'" + name + "' can only be the final model of the list");
    }
  }
  if (ensemble_final && base_models.empty() && spec.import_files.empty()) {
    throw usage_error(final_model + " needs at least one level-zero model or import file");
  }

  DataRoot data = load_data_root(data_root, spec.scenario == Scenario::cross_genre_tweets);
  TaskData task = build_task(data, spec.scenario, spec.task);
  int num_classes = static_cast<int>(task.class_names.size());

  double train_seconds = 0.0;
  auto timed = [&](auto&& fn) {
    auto begin = clock::now();
    fn();
    train_seconds += std::chrono::duration<double>(clock::now() - begin).count();
  };

  // Shared kernel matrices for svm/krr, built (or loaded) once.
  bool needs_kernel = false;
  for (const std::string& name : base_models) {
    if (name == "svm" || name == "krr") needs_kernel = true;
  }
  KernelMatrix k_train, k_val, k_test;
  if (needs_kernel) {
    TextCollection train_col{task.train.ids, task.train.texts};
    TextCollection val_col{task.validation.ids, task.validation.texts};
    TextCollection test_col{task.test.ids, task.test.texts};
    k_train = detail::cached_gram(train_col, train_col, spec.kernel, spec.cache_dir,
                                  task.corpus_checksum, "train", workers);
    k_val = detail::cached_gram(val_col, train_col, spec.kernel, spec.cache_dir,
                                task.corpus_checksum, "validation", workers);
    k_test = detail::cached_gram(test_col, train_col, spec.kernel, spec.cache_dir,
                                 task.corpus_checksum, "test", workers);
  }

  // CNN artifacts, trained once if requested.
  bool needs_cnn = false;
  for (const std::string& name : base_models) {
    if (name == "cnn") needs_cnn = true;
  }
  CnnConfig cnn_config = spec.cnn;
  CharVocab cnn_vocab;
  CnnParams cnn_params;
  EncodedDataset cnn_test_enc;
  if (needs_cnn) {
    cnn_config.seed = spec.seed;
    if (spec.cnn_auto_input_len) {
      cnn_config.input_len =
          spec.scenario == Scenario::full_articles ? 5000 : 1000;
    }
    cnn_config.num_classes = num_classes;
    timed([&] {
      cnn_vocab = build_vocab(task.train.texts, cnn_config.min_count);
      EncodedDataset train_enc =
          encode_dataset(task.train.texts, task.train.labels, cnn_vocab, cnn_config.input_len);
      EncodedDataset val_enc = encode_dataset(task.validation.texts, task.validation.labels,
                                              cnn_vocab, cnn_config.input_len);
      TrainResult r = train_cnn(cnn_config, cnn_vocab, train_enc, val_enc, workers);
      cnn_params = std::move(r.params);
    });
    cnn_test_enc =
        encode_dataset(task.test.texts, task.test.labels, cnn_vocab, cnn_config.input_len);
  }

  // Level-zero runs in the listed order.
  std::vector<detail::LevelZeroRun> runs;
  std::map<std::string, KernelModel> kernel_models;
  for (const std::string& name : base_models) {
    detail::LevelZeroRun run;
    run.model_id = name;
    if (name == "svm" || name == "krr") {
      KernelModelKind kind = name == "svm" ? KernelModelKind::svm : KernelModelKind::krr;
      KernelModel model;
      timed([&] {
        model = train_kernel_model(k_train, task.train.labels, task.class_names, kind,
                                   spec.hyper, spec.scheme, workers);
      });
      run.val = detail::kernel_split_predictions(model, k_val, task.validation.ids, name, workers);
      run.test = detail::kernel_split_predictions(model, k_test, task.test.ids, name, workers);
      kernel_models.emplace(name, std::move(model));
    } else if (name == "cnn") {
      EncodedDataset val_enc = encode_dataset(task.validation.texts, task.validation.labels,
                                              cnn_vocab, cnn_config.input_len);
      run.val = detail::cnn_split_predictions(cnn_config, cnn_params, val_enc.ids,
                                              task.validation.ids, name, workers);
      run.test = detail::cnn_split_predictions(cnn_config, cnn_params, cnn_test_enc.ids,
                                               task.test.ids, name, workers);
    } else if (auto constant = detail::parse_constant_model(name)) {
      if (*constant < 0 || *constant >= num_classes) {
        throw usage_error("constant model class " + std::to_string(*constant) +
                          " out of range for " + std::to_string(num_classes) + " classes");
      }
      auto fill = [&](const TaskSplit& split) {
        std::vector<LevelZeroPrediction> out(split.ids.size());
        for (std::size_t i = 0; i < split.ids.size(); ++i) {
          out[i].sample_id = split.ids[i];
          out[i].model_id = name;
          out[i].hard_label = *constant;
          out[i].probs.assign(static_cast<std::size_t>(num_classes), 0.0);
          out[i].probs[static_cast<std::size_t>(*constant)] = 1.0;
        }
        return out;
      };
      run.val = fill(task.validation);
      run.test = fill(task.test);
    } else {
      throw usage_error("unknown model '" + name +
                        "' (expected krr, svm, cnn, constant<k>, vote, or stacking)");
    }
    runs.push_back(std::move(run));
  }

  // Imported predictions, validated against this task's sample ids.
  std::vector<std::string> known_ids = task.validation.ids;
  known_ids.insert(known_ids.end(), task.test.ids.begin(), task.test.ids.end());
  std::unordered_set<std::string> val_id_set(task.validation.ids.begin(),
                                             task.validation.ids.end());
  std::vector<std::string> imported_order;
  std::map<std::string, std::unordered_map<std::string, LevelZeroPrediction>> imported_val,
      imported_test;
  for (const std::string& file : spec.import_files) {
    auto rows = import_predictions(file, task.class_names, &known_ids);
    for (LevelZeroPrediction& p : rows) {
      for (const detail::LevelZeroRun& run : runs) {
        if (run.model_id == p.model_id) {
          throw validation_error(file + ": imported model id '" + p.model_id +
                                 "' collides with an internal model");
        }
      }
      auto& bucket = val_id_set.count(p.sample_id) ? imported_val : imported_test;
      if (imported_val.find(p.model_id) == imported_val.end() &&
          imported_test.find(p.model_id) == imported_test.end()) {
        imported_order.push_back(p.model_id);
      }
      auto& per_sample = bucket[p.model_id];
      std::string sample_id = p.sample_id;
      per_sample.emplace(std::move(sample_id), std::move(p));
    }
  }

  std::vector<std::string> all_model_ids;
  for (const detail::LevelZeroRun& run : runs) all_model_ids.push_back(run.model_id);
  all_model_ids.insert(all_model_ids.end(), imported_order.begin(), imported_order.end());

  // Per-sample prediction assembly across internal runs and imports.
  auto assemble = [&](const std::vector<std::string>& ids, bool validation_side,
                      std::size_t index) {
    std::vector<LevelZeroPrediction> preds;
    for (const detail::LevelZeroRun& run : runs) {
      preds.push_back(validation_side ? run.val[index] : run.test[index]);
    }
    const auto& imported = validation_side ? imported_val : imported_test;
    for (const std::string& model_id : imported_order) {
      auto model_it = imported.find(model_id);
      if (model_it != imported.end()) {
        auto it = model_it->second.find(ids[index]);
        if (it != model_it->second.end()) preds.push_back(it->second);
      }
    }
    return preds;
  };

  // Final test predictions plus a scoring closure used only for timing.
  std::vector<int> test_preds(task.test.ids.size(), 0);
  StackerModel stacker;
  StackerRegistry registry;
  registry.model_ids = all_model_ids;
  registry.class_names = task.class_names;

  if (final_model == "stacking") {
    std::vector<std::vector<double>> meta;
    for (std::size_t i = 0; i < task.validation.ids.size(); ++i) {
      meta.push_back(to_meta_features(assemble(task.validation.ids, true, i), registry));
    }
    timed([&] {
      stacker = train_stacker(meta, task.validation.labels, registry, spec.stacker_penalty,
                              spec.stacker_c);
    });
    for (std::size_t i = 0; i < task.test.ids.size(); ++i) {
      test_preds[i] =
          predict_stacker(stacker, to_meta_features(assemble(task.test.ids, false, i), registry))
              .second;
    }
  } else if (final_model == "vote") {
    for (std::size_t i = 0; i < task.test.ids.size(); ++i) {
      test_preds[i] = plurality_vote(assemble(task.test.ids, false, i));
    }
  } else {
    const detail::LevelZeroRun& run = runs.back();
    for (std::size_t i = 0; i < task.test.ids.size(); ++i) {
      test_preds[i] = run.test[i].hard_label;
    }
  }

  // Inference timing: re-score the test split from trained artifacts after a
  // warm-up batch. Kernel rows and CNN encodings count as precomputed input
  // representations; the timed region covers decision-function evaluation
  // and, for ensembles, member scoring plus combination.
  double inference_ms = 0.0;
  {
    auto score_slice = [&](std::size_t n) {
      for (const std::string& name : base_models) {
        if (name == "svm" || name == "krr") {
          const KernelModel& model = kernel_models.at(name);
          if (n == k_test.rows) {
            predict_kernel_model(model, k_test, workers);
          } else {
            predict_kernel_model(model, detail::head_rows(k_test, n), workers);
          }
        } else if (name == "cnn") {
          if (n == cnn_test_enc.ids.size()) {
            predict_probs(cnn_config, cnn_params, cnn_test_enc.ids, workers);
          } else {
            std::vector<std::vector<int>> head(cnn_test_enc.ids.begin(),
                                               cnn_test_enc.ids.begin() +
                                                   static_cast<std::ptrdiff_t>(n));
            predict_probs(cnn_config, cnn_params, head, workers);
          }
        }
      }
      if (final_model == "stacking") {
        for (std::size_t i = 0; i < n; ++i) {
          predict_stacker(stacker, to_meta_features(assemble(task.test.ids, false, i), registry));
        }
      } else if (final_model == "vote") {
        for (std::size_t i = 0; i < n; ++i) {
          plurality_vote(assemble(task.test.ids, false, i));
        }
      }
    };
    score_slice(std::min<std::size_t>(32, task.test.ids.size()));  // warm-up
    auto begin = clock::now();
    score_slice(task.test.ids.size());
    double seconds = std::chrono::duration<double>(clock::now() - begin).count();
    inference_ms = 1000.0 * seconds / static_cast<double>(task.test.ids.size());
  }

  // Metrics and report assembly.
  EvalReport report;
  report.task = to_string(spec.task);
  report.scenario = to_string(spec.scenario);
  report.model_ids = all_model_ids;
  if (ensemble_final) report.model_ids.push_back(final_model);
  report.final_model = final_model;
  report.class_names = task.class_names;
  report.n_train = task.train.ids.size();
  report.n_validation = task.validation.ids.size();
  report.n_test = task.test.ids.size();
  report.accuracy = accuracy(test_preds, task.test.labels);
  report.macro_f1 = macro_f1(test_preds, task.test.labels, num_classes);
  report.per_class = per_class_metrics(test_preds, task.test.labels, num_classes);
  report.confusion = confusion_matrix(test_preds, task.test.labels, num_classes);
  report.train_seconds = train_seconds;
  report.inference_ms_per_sample = inference_ms;
  report.seed = spec.seed;

  // Invariants checked on every report: row sums match gold counts and the
  // trace recovers the accuracy.
  {
    long long total = 0, trace = 0;
    std::vector<long long> gold_counts(static_cast<std::size_t>(num_classes), 0);
    for (int g : task.test.labels) ++gold_counts[static_cast<std::size_t>(g)];
    for (int g = 0; g < num_classes; ++g) {
      long long row_sum = 0;
      for (int p = 0; p < num_classes; ++p) {
        row_sum += report.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
        total += report.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
      }
      if (row_sum != gold_counts[static_cast<std::size_t>(g)]) {
        throw numeric_error("confusion row sum does not match gold count for class " +
                            task.class_names[static_cast<std::size_t>(g)]);
      }
      trace += report.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(g)];
    }
    double trace_acc = static_cast<double>(trace) / static_cast<double>(total);
    if (trace_acc != report.accuracy) {
      throw numeric_error("confusion trace does not reproduce the accuracy");
    }
  }

  // Config fingerprint covers everything that determines the numbers.
  {
    std::uint64_t h = fnv1a64(report.task);
    h = fnv1a64(report.scenario, h);
    h = fnv1a64(join(spec.models, ","), h);
    h = fnv1a64(join(spec.import_files, ","), h);
    h = fnv1a64(std::to_string(spec.kernel.n) + "/" + std::to_string(spec.kernel.normalized), h);
    h = fnv1a64(detail::fmt("%.17g", spec.hyper.lambda) + "/" + detail::fmt("%.17g", spec.hyper.C) +
                    "/" + detail::fmt("%.17g", spec.hyper.tol),
                h);
    if (needs_cnn) {
      h = fnv1a64(std::to_string(cnn_config.input_len) + "/" +
                      std::to_string(cnn_config.embed_dim) + "/" +
                      std::to_string(cnn_config.epochs) + "/" +
                      detail::fmt("%.17g", cnn_config.lr),
                  h);
    }
    if (final_model == "stacking") {
      h = fnv1a64((spec.stacker_penalty == StackerPenalty::l1 ? "l1/" : "l2/") +
                      detail::fmt("%.17g", spec.stacker_c),
                  h);
    }
    h = fnv1a64(std::to_string(spec.seed), h);
    h = fnv1a64(task.corpus_checksum, h);
    report.config_fingerprint = to_hex(h);
  }

  // Emission.
  fs::create_directories(out_dir);
  write_text_file(out_dir + "/report.txt", render_report_kv(report));
  write_text_file(out_dir + "/report_table.txt", render_report_table(report));
  write_text_file(out_dir + "/confusion.csv", render_confusion_csv(report));
  if (!runs.empty()) {
    std::vector<LevelZeroPrediction> val_rows, test_rows;
    for (const detail::LevelZeroRun& run : runs) {
      val_rows.insert(val_rows.end(), run.val.begin(), run.val.end());
      test_rows.insert(test_rows.end(), run.test.begin(), run.test.end());
    }
    export_predictions(out_dir + "/predictions_validation.tsv", val_rows, task.class_names);
    export_predictions(out_dir + "/predictions_test.tsv", test_rows, task.class_names);
  }
  return report;
}

}  // namespace rodial

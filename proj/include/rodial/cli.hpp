#pragma once

// Command line front end over the library: corpus validation, kernel
// precomputation, model training, prediction interchange, ensembling,
// evaluation runs, and attribution rendering. Exit codes: 0 success,
// 1 usage problems, 2 data/parse/io problems, 3 numerical failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "rodial/common.hpp"
#include "rodial/corpus.hpp"
#include "rodial/charcnn.hpp"
#include "rodial/ensemble.hpp"
#include "rodial/eval.hpp"
#include "rodial/gradcam.hpp"
#include "rodial/kernel_models.hpp"
#include "rodial/strkernel.hpp"

namespace rodial::cli {

// --- Shared option bundles ---------------------------------------------------

struct DataOpts {
  std::string root;
  Scenario scenario = Scenario::full_articles;
  Task task = Task::dialect;
};

struct KernelFlags {
  int ngram = 6;
  bool raw = false;
  double lambda = 1e-2;
  double cost = 1e2;
  double tol = 1e-3;
  std::string scheme;  // "", "ovo", "ovr"

  KernelSpec spec() const {
    KernelSpec s;
    s.n = ngram;
    s.normalized = !raw;
    return s;
  }
  KernelHyper hyper() const {
    KernelHyper h;
    h.lambda = lambda;
    h.C = cost;
    h.tol = tol;
    return h;
  }
  std::optional<MulticlassScheme> scheme_opt() const {
    if (scheme.empty()) return std::nullopt;
    return scheme == "ovo" ? MulticlassScheme::one_vs_one : MulticlassScheme::one_vs_rest;
  }
};

struct CnnFlags {
  int input_len = 0;  // 0 picks 1000 for the sentence scenario, 5000 otherwise
  int embed = 128;
  int filters = 128;
  std::vector<int> widths{7, 7, 3};
  int pool = 3;
  int se = 64;
  std::vector<int> fc{128, 128};
  double dropout = 0.3;
  double lr = 2e-4;
  int epochs = 50;
  int batch = 128;
  int min_count = 2;

  CnnConfig config(Scenario scenario, int num_classes, std::uint64_t seed) const {
    CnnConfig c;
    c.input_len = input_len > 0 ? input_len
                                : (scenario == Scenario::sentences ? 1000 : 5000);
    c.embed_dim = embed;
    c.conv_filters = filters;
    c.conv_widths = widths;
    c.pool_width = pool;
    c.se_reduction = se;
    c.fc_dims = fc;
    if (c.fc_dims == std::vector<int>{0}) c.fc_dims.clear();  // "--fc 0" = no fc stack
    c.dropout = static_cast<float>(dropout);
    c.num_classes = num_classes;
    c.lr = lr;
    c.epochs = epochs;
    c.batch_size = batch;
    c.seed = seed;
    c.min_count = min_count;
    return c;
  }
};

inline const std::map<std::string, Scenario>& scenario_names() {
  static const std::map<std::string, Scenario> m{
      {"full_articles", Scenario::full_articles},
      {"sentences", Scenario::sentences},
      {"cross_genre_tweets", Scenario::cross_genre_tweets},
  };
  return m;
}

inline const std::map<std::string, Task>& task_names() {
  static const std::map<std::string, Task> m{
      {"dialect", Task::dialect},
      {"topic_intra_md", Task::topic_intra_md},
      {"topic_intra_ro", Task::topic_intra_ro},
      {"topic_cross_md_to_ro", Task::topic_cross_md_to_ro},
      {"topic_cross_ro_to_md", Task::topic_cross_ro_to_md},
  };
  return m;
}

inline void add_data_options(CLI::App* sub, DataOpts& o) {
  sub->add_option("--data-root", o.root,
                  "corpus root (articles under <root>/moroco, tweets under <root>/moroco-tweets)")
      ->envname("RODIAL_DATA_ROOT")
      ->required();
  sub->add_option("--scenario", o.scenario, "training/evaluation text view")
      ->transform(CLI::CheckedTransformer(scenario_names(), CLI::ignore_case))
      ->capture_default_str();
  sub->add_option("--task", o.task, "classification target")
      ->transform(CLI::CheckedTransformer(task_names(), CLI::ignore_case))
      ->capture_default_str();
}

inline void add_kernel_options(CLI::App* sub, KernelFlags& k) {
  sub->add_option("--ngram", k.ngram, "character n-gram order")->capture_default_str();
  sub->add_flag("--raw", k.raw, "skip kernel normalization");
  sub->add_option("--lambda", k.lambda, "ridge strength for krr")->capture_default_str();
  sub->add_option("--cost", k.cost, "box constraint for svm")->capture_default_str();
  sub->add_option("--tol", k.tol, "svm stopping tolerance")->capture_default_str();
  sub->add_option("--scheme", k.scheme, "multiclass reduction (ovo or ovr)")
      ->check(CLI::IsMember({"ovo", "ovr"}));
}

inline void add_cnn_options(CLI::App* sub, CnnFlags& c) {
  sub->add_option("--input-len", c.input_len, "input characters (0 = by scenario)")
      ->capture_default_str();
  sub->add_option("--embed", c.embed, "character embedding width")->capture_default_str();
  sub->add_option("--filters", c.filters, "filters per conv block")->capture_default_str();
  sub->add_option("--widths", c.widths, "conv filter widths")->delimiter(',')->capture_default_str();
  sub->add_option("--pool", c.pool, "max-pool width")->capture_default_str();
  sub->add_option("--se", c.se, "squeeze-excitation reduction")->capture_default_str();
  sub->add_option("--fc", c.fc, "fully connected widths (0 = none)")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--dropout", c.dropout, "dropout rate in the fc stack")->capture_default_str();
  sub->add_option("--lr", c.lr, "adam learning rate")->capture_default_str();
  sub->add_option("--epochs", c.epochs, "training epochs")->capture_default_str();
  sub->add_option("--batch", c.batch, "batch size")->capture_default_str();
  sub->add_option("--min-count", c.min_count, "vocabulary frequency floor")->capture_default_str();
}

// --- Small helpers -----------------------------------------------------------

using KvList = std::vector<std::pair<std::string, std::string>>;

inline void write_manifest(const std::string& path, const KvList& kv) {
  std::string out;
  for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
  write_text_file(path, out);
}

inline KvList data_manifest(const char* command, const DataOpts& d, const TaskData& task,
                            std::uint64_t seed) {
  return {
      {"command", command},
      {"data_root", d.root},
      {"scenario", to_string(d.scenario)},
      {"task", to_string(d.task)},
      {"corpus_checksum", task.corpus_checksum},
      {"seed", std::to_string(seed)},
  };
}

inline std::string sniff_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open model file: " + path);
  char buf[16] = {};
  in.read(buf, sizeof(buf));
  if (in.gcount() != sizeof(buf)) {
    throw parse_error("unrecognized model file (too short): " + path);
  }
  return std::string(buf, sizeof(buf));
}

inline const TaskSplit& split_by_name(const TaskData& task, const std::string& name) {
  if (name == "train") return task.train;
  if (name == "validation") return task.validation;
  if (name == "test") return task.test;
  throw usage_error("unknown split '" + name + "' (expected train, validation, or test)");
}

inline TextCollection to_collection(const TaskSplit& split) {
  return TextCollection{split.ids, split.texts};
}

inline std::pair<std::vector<std::string>, std::vector<int>> read_golds(
    const std::string& path, const std::vector<std::string>& class_names) {
  std::string content = read_text_file(path);
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    std::string line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw parse_error(path + ": line " + std::to_string(line_no) +
                        ": expected <sample_id>\\t<class>");
    }
    std::string id = line.substr(0, tab);
    std::string cls = line.substr(tab + 1);
    auto it = std::find(class_names.begin(), class_names.end(), cls);
    if (it == class_names.end()) {
      throw validation_error(path + ": line " + std::to_string(line_no) + ": unknown class '" +
                             cls + "'");
    }
    if (!seen.insert(id).second) {
      throw validation_error(path + ": line " + std::to_string(line_no) + ": duplicate sample '" +
                             id + "'");
    }
    ids.push_back(std::move(id));
    labels.push_back(static_cast<int>(it - class_names.begin()));
  }
  if (ids.empty()) throw validation_error("golds file has no rows: " + path);
  return {std::move(ids), std::move(labels)};
}

// Imports interchange files and indexes them as model -> sample -> prediction,
// recording model ids in first-seen order.
struct ImportedSet {
  std::vector<std::string> model_order;
  std::map<std::string, std::unordered_map<std::string, LevelZeroPrediction>> by_model;

  std::vector<LevelZeroPrediction> sample_row(const std::string& id) const {
    std::vector<LevelZeroPrediction> out;
    for (const std::string& model : model_order) {
      const auto& per_sample = by_model.at(model);
      auto it = per_sample.find(id);
      if (it == per_sample.end()) {
        throw validation_error("model '" + model + "' has no prediction for sample '" + id + "'");
      }
      out.push_back(it->second);
    }
    return out;
  }
};

inline ImportedSet import_files(const std::vector<std::string>& paths,
                                const std::vector<std::string>& class_names,
                                const std::vector<std::string>& expected_ids) {
  ImportedSet set;
  for (const std::string& path : paths) {
    for (LevelZeroPrediction& p : import_predictions(path, class_names, &expected_ids)) {
      if (set.by_model.find(p.model_id) == set.by_model.end()) {
        set.model_order.push_back(p.model_id);
      }
      auto& per_sample = set.by_model[p.model_id];
      std::string id = p.sample_id;
      per_sample.emplace(std::move(id), std::move(p));
    }
  }
  return set;
}

inline std::string safe_file_stem(const std::string& id) {
  std::string out = id;
  for (char& ch : out) {
    bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
              ch == '.' || ch == '_' || ch == '-';
    if (!ok) ch = '_';
  }
  return out;
}

// --- Subcommand options ------------------------------------------------------

struct ValidateOpts {
  std::string root;
  bool require_tweets = false;
};

struct PrecomputeOpts {
  DataOpts data;
  KernelFlags kernel;
  std::string cache_dir;
  int workers = 0;
};

struct TrainOpts {
  DataOpts data;
  std::string model = "krr";
  std::string out;
  KernelFlags kernel;
  CnnFlags cnn;
  std::string cache_dir;
  std::uint64_t seed = 42;
  int workers = 0;
};

struct PredictOpts {
  DataOpts data;
  std::string model_path;
  std::string split = "test";
  std::string out;
  std::string model_id;
  std::string cache_dir;
  int workers = 0;
};

struct StackerOpts {
  std::vector<std::string> inputs;
  std::string golds;
  std::vector<std::string> classes;
  std::string penalty = "l2";
  double c = 1.0;
  std::string out;
};

struct VoteOpts {
  std::vector<std::string> inputs;
  std::string golds;
  std::vector<std::string> classes;
  std::string out;
};

struct EvaluateOpts {
  DataOpts data;
  std::vector<std::string> models{"krr"};
  std::vector<std::string> imports;
  KernelFlags kernel;
  CnnFlags cnn;
  std::string stacker_penalty = "l2";
  double stacker_c = 1.0;
  std::string cache_dir;
  std::string out_dir;
  std::uint64_t seed = 42;
  int workers = 0;
};

struct GradcamOpts {
  DataOpts data;
  std::string model_path;
  std::string split = "test";
  std::vector<std::string> ids;
  int limit = 8;
  std::string target;
  std::string out_dir;
  int workers = 0;
};

// --- Subcommand implementations ----------------------------------------------

inline int do_validate(const ValidateOpts& o) {
  DataRoot data = load_data_root(o.root, o.require_tweets);
  for (const char* split : {"train", "validation", "test"}) {
    std::printf("articles_%s=%zu\n", split, data.articles.split(split).size());
  }
  std::printf("articles_checksum=%s\n", data.articles.checksum.c_str());
  if (data.tweets) {
    for (const char* split : {"validation", "test"}) {
      std::printf("tweets_%s=%zu\n", split, data.tweets->split(split).size());
    }
    std::printf("tweets_checksum=%s\n", data.tweets->checksum.c_str());
  }
  std::printf("status=ok\n");
  return 0;
}

inline int do_precompute(const PrecomputeOpts& o) {
  int workers = o.workers > 0 ? o.workers : default_workers();
  DataRoot data = load_data_root(o.data.root, o.data.scenario == Scenario::cross_genre_tweets);
  TaskData task = build_task(data, o.data.scenario, o.data.task);
  KernelSpec spec = o.kernel.spec();
  TextCollection train_col = to_collection(task.train);
  for (const char* part : {"train", "validation", "test"}) {
    TextCollection rows = part == std::string("train") ? train_col
                                                       : to_collection(split_by_name(task, part));
    detail::cached_gram(rows, train_col, spec, o.cache_dir, task.corpus_checksum, part, workers);
    std::printf("ready=%s\n",
                detail::kernel_cache_path(o.cache_dir, task.corpus_checksum, spec, part).c_str());
  }
  KvList kv = data_manifest("precompute-kernel", o.data, task, 0);
  kv.emplace_back("kernel_ngram", std::to_string(spec.n));
  kv.emplace_back("kernel_normalized", spec.normalized ? "1" : "0");
  write_manifest(o.cache_dir + "/K_" + task.corpus_checksum + "_n" + std::to_string(spec.n) +
                     (spec.normalized ? "_norm" : "_raw") + ".manifest",
                 kv);
  return 0;
}

inline int do_train(const TrainOpts& o) {
  int workers = o.workers > 0 ? o.workers : default_workers();
  DataRoot data = load_data_root(o.data.root, o.data.scenario == Scenario::cross_genre_tweets);
  TaskData task = build_task(data, o.data.scenario, o.data.task);
  KvList kv = data_manifest("train", o.data, task, o.seed);
  kv.emplace_back("model", o.model);

  if (o.model == "krr" || o.model == "svm") {
    KernelModelKind kind = o.model == "svm" ? KernelModelKind::svm : KernelModelKind::krr;
    KernelMatrix k_train =
        detail::cached_gram(to_collection(task.train), to_collection(task.train), o.kernel.spec(),
                            o.cache_dir, task.corpus_checksum, "train", workers);
    KernelModel model = train_kernel_model(k_train, task.train.labels, task.class_names, kind,
                                           o.kernel.hyper(), o.kernel.scheme_opt(), workers);
    save_kernel_model(model, o.out);
    std::printf("classes=%s\n", join(task.class_names, ",").c_str());
    std::printf("machines=%zu\n", model.machines.size());
  } else {  // cnn
    CnnConfig config =
        o.cnn.config(o.data.scenario, static_cast<int>(task.class_names.size()), o.seed);
    CharVocab vocab = build_vocab(task.train.texts, config.min_count);
    EncodedDataset train_enc =
        encode_dataset(task.train.texts, task.train.labels, vocab, config.input_len);
    EncodedDataset val_enc =
        encode_dataset(task.validation.texts, task.validation.labels, vocab, config.input_len);
    TrainResult result = train_cnn(config, vocab, train_enc, val_enc, workers);
    CnnModel model{config, vocab, task.class_names, std::move(result.params)};
    save_cnn_model(model, o.out);
    std::printf("classes=%s\n", join(task.class_names, ",").c_str());
    std::printf("best_epoch=%d\n", result.best_epoch);
    std::printf("best_val_accuracy=%.6f\n", result.best_val_accuracy);
  }
  std::printf("saved=%s\n", o.out.c_str());
  kv.emplace_back("output", o.out);
  kv.emplace_back("output_checksum", file_checksum(o.out));
  write_manifest(o.out + ".manifest", kv);
  return 0;
}

inline int do_predict(const PredictOpts& o) {
  int workers = o.workers > 0 ? o.workers : default_workers();
  std::string magic = sniff_magic(o.model_path);
  DataRoot data = load_data_root(o.data.root, o.data.scenario == Scenario::cross_genre_tweets);
  TaskData task = build_task(data, o.data.scenario, o.data.task);
  const TaskSplit& split = split_by_name(task, o.split);

  std::vector<LevelZeroPrediction> rows;
  std::string model_id = o.model_id;
  if (magic == std::string(kernel_model_magic, 16)) {
    KernelModel model = load_kernel_model(o.model_path);
    if (model.class_names != task.class_names) {
      throw validation_error("model classes (" + join(model.class_names, ",") +
                             ") do not match the task classes (" + join(task.class_names, ",") +
                             ")");
    }
    if (model.train_ids != task.train.ids) {
      throw validation_error("model was trained on a different training split than '" +
                             o.data.root + "' provides for this scenario");
    }
    if (model_id.empty()) model_id = to_string(model.kind);
    KernelMatrix cross =
        detail::cached_gram(to_collection(split), to_collection(task.train), model.spec,
                            o.cache_dir, task.corpus_checksum, o.split, workers);
    rows = detail::kernel_split_predictions(model, cross, split.ids, model_id, workers);
  } else if (magic == std::string(cnn_magic, 16)) {
    CnnModel model = load_cnn_model(o.model_path);
    if (model.class_names != task.class_names) {
      throw validation_error("model classes (" + join(model.class_names, ",") +
                             ") do not match the task classes (" + join(task.class_names, ",") +
                             ")");
    }
    if (model_id.empty()) model_id = "cnn";
    EncodedDataset enc =
        encode_dataset(split.texts, split.labels, model.vocab, model.config.input_len);
    rows = detail::cnn_split_predictions(model.config, model.params, enc.ids, split.ids, model_id,
                                         workers);
  } else {
    throw parse_error("unrecognized model file: " + o.model_path);
  }

  export_predictions(o.out, rows, task.class_names);
  std::vector<int> hard(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) hard[i] = rows[i].hard_label;
  std::printf("model_id=%s\n", model_id.c_str());
  std::printf("samples=%zu\n", rows.size());
  std::printf("accuracy=%.6f\n", accuracy(hard, split.labels));
  std::printf("wrote=%s\n", o.out.c_str());

  KvList kv = data_manifest("predict", o.data, task, 0);
  kv.emplace_back("model_file", o.model_path);
  kv.emplace_back("model_checksum", file_checksum(o.model_path));
  kv.emplace_back("split", o.split);
  kv.emplace_back("output", o.out);
  kv.emplace_back("output_checksum", file_checksum(o.out));
  write_manifest(o.out + ".manifest", kv);
  return 0;
}

inline int do_train_stacker(const StackerOpts& o) {
  auto [ids, labels] = read_golds(o.golds, o.classes);
  ImportedSet imported = import_files(o.inputs, o.classes, ids);
  if (imported.model_order.empty()) {
    throw validation_error("no predictions found in the input files");
  }
  StackerRegistry registry;
  registry.model_ids = imported.model_order;
  registry.class_names = o.classes;

  std::vector<std::vector<double>> features;
  features.reserve(ids.size());
  for (const std::string& id : ids) {
    features.push_back(to_meta_features(imported.sample_row(id), registry));
  }
  StackerPenalty penalty = o.penalty == "l1" ? StackerPenalty::l1 : StackerPenalty::l2;
  StackerFitReport report;
  StackerModel model = train_stacker(features, labels, registry, penalty, o.c, &report);
  save_stacker(model, o.out);

  std::vector<int> hard(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    hard[i] = predict_stacker(model, features[i]).second;
  }
  std::printf("models=%s\n", join(imported.model_order, ",").c_str());
  std::printf("samples=%zu\n", ids.size());
  std::printf("iterations=%d\n", report.iterations);
  std::printf("train_accuracy=%.6f\n", accuracy(hard, labels));
  std::printf("saved=%s\n", o.out.c_str());

  KvList kv{{"command", "train-stacker"},
            {"golds", o.golds},
            {"classes", join(o.classes, ",")},
            {"penalty", o.penalty},
            {"c", detail::fmt("%.17g", o.c)}};
  for (const std::string& path : o.inputs) {
    kv.emplace_back("input", path);
    kv.emplace_back("input_checksum", file_checksum(path));
  }
  kv.emplace_back("output", o.out);
  kv.emplace_back("output_checksum", file_checksum(o.out));
  write_manifest(o.out + ".manifest", kv);
  return 0;
}

inline int do_vote(const VoteOpts& o) {
  auto [ids, labels] = read_golds(o.golds, o.classes);
  ImportedSet imported = import_files(o.inputs, o.classes, ids);
  if (imported.model_order.empty()) {
    throw validation_error("no predictions found in the input files");
  }
  std::vector<int> voted(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    voted[i] = plurality_vote(imported.sample_row(ids[i]));
  }
  std::printf("models=%s\n", join(imported.model_order, ",").c_str());
  std::printf("samples=%zu\n", ids.size());
  std::printf("accuracy=%.6f\n", accuracy(voted, labels));
  if (!o.out.empty()) {
    std::string content;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      content += ids[i] + "\t" + o.classes[static_cast<std::size_t>(voted[i])] + "\n";
    }
    write_text_file(o.out, content);
    std::printf("wrote=%s\n", o.out.c_str());
  }
  return 0;
}

inline int do_evaluate(const EvaluateOpts& o) {
  ExperimentSpec spec;
  spec.task = o.data.task;
  spec.scenario = o.data.scenario;
  spec.models = o.models;
  spec.kernel = o.kernel.spec();
  spec.hyper = o.kernel.hyper();
  spec.scheme = o.kernel.scheme_opt();
  spec.cnn = o.cnn.config(o.data.scenario, 2, o.seed);  // class count is set by the run
  spec.cnn_auto_input_len = o.cnn.input_len <= 0;
  spec.stacker_penalty = o.stacker_penalty == "l1" ? StackerPenalty::l1 : StackerPenalty::l2;
  spec.stacker_c = o.stacker_c;
  spec.import_files = o.imports;
  spec.cache_dir = o.cache_dir;
  spec.workers = o.workers;
  spec.seed = o.seed;

  EvalReport report = run_experiment(spec, o.data.root, o.out_dir);
  std::fputs(render_report_table(report).c_str(), stdout);
  std::printf("report_dir=%s\n", o.out_dir.c_str());

  KvList kv{{"command", "evaluate"},
            {"data_root", o.data.root},
            {"scenario", report.scenario},
            {"task", report.task},
            {"models", join(spec.models, ",")},
            {"config_fingerprint", report.config_fingerprint},
            {"seed", std::to_string(o.seed)}};
  for (const std::string& path : o.imports) {
    kv.emplace_back("import", path);
    kv.emplace_back("import_checksum", file_checksum(path));
  }
  write_manifest(o.out_dir + "/manifest.txt", kv);
  return 0;
}

inline int do_gradcam(const GradcamOpts& o) {
  int workers = o.workers > 0 ? o.workers : default_workers();
  if (sniff_magic(o.model_path) != std::string(cnn_magic, 16)) {
    throw usage_error("attribution requires a cnn model file");
  }
  CnnModel model = load_cnn_model(o.model_path);
  if (o.data.task != Task::dialect) {
    throw usage_error("attribution rendering is defined for the dialect task");
  }
  DataRoot data = load_data_root(o.data.root, o.data.scenario == Scenario::cross_genre_tweets);
  TaskData task = build_task(data, o.data.scenario, o.data.task);
  if (model.class_names != task.class_names) {
    throw validation_error("model classes (" + join(model.class_names, ",") +
                           ") do not match the task classes (" + join(task.class_names, ",") + ")");
  }
  const TaskSplit& split = split_by_name(task, o.split);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < split.ids.size(); ++i) index[split.ids[i]] = i;
  std::vector<std::size_t> chosen;
  if (o.ids.empty()) {
    for (std::size_t i = 0; i < split.ids.size() && i < static_cast<std::size_t>(o.limit); ++i) {
      chosen.push_back(i);
    }
  } else {
    for (const std::string& id : o.ids) {
      auto it = index.find(id);
      if (it == index.end()) {
        throw validation_error("sample '" + id + "' is not in the " + o.split + " split");
      }
      chosen.push_back(it->second);
    }
  }

  int forced_target = -1;
  if (!o.target.empty()) {
    auto it = std::find(task.class_names.begin(), task.class_names.end(), o.target);
    if (it == task.class_names.end()) {
      throw usage_error("unknown target class '" + o.target + "' (expected " +
                        join(task.class_names, " or ") + ")");
    }
    forced_target = static_cast<int>(it - task.class_names.begin());
  }

  std::filesystem::create_directories(o.out_dir);
  std::vector<GalleryEntry> entries;
  for (std::size_t i : chosen) {
    const std::string& text = split.texts[i];
    std::vector<int> enc = encode(text, model.vocab, model.config.input_len);
    std::vector<double> probs =
        predict_probs(model.config, model.params, {enc}, workers)[0];
    int predicted = argmax_label(probs);
    int target = forced_target >= 0 ? forced_target : predicted;
    CharAttribution attr = attribute(model.config, model.params, enc, target, split.ids[i]);
    QuantizedAttribution q =
        quantize(attr, dialect_palette(task.class_names[static_cast<std::size_t>(target)]));
    std::string file_name = safe_file_stem(split.ids[i]) + ".html";
    render_html(text, q, split.ids[i], task.class_names, probs, predicted,
                o.out_dir + "/" + file_name);
    entries.push_back(
        {split.ids[i], file_name, task.class_names[static_cast<std::size_t>(predicted)]});
  }
  render_gallery_index(entries, o.out_dir + "/index.html");
  std::printf("pages=%zu\n", entries.size());
  std::printf("wrote=%s\n", (o.out_dir + "/index.html").c_str());

  KvList kv = data_manifest("gradcam", o.data, task, 0);
  kv.emplace_back("model_file", o.model_path);
  kv.emplace_back("model_checksum", file_checksum(o.model_path));
  kv.emplace_back("split", o.split);
  kv.emplace_back("pages", std::to_string(entries.size()));
  write_manifest(o.out_dir + "/manifest.txt", kv);
  return 0;
}

// --- Entry point -------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Moldavian vs Romanian dialect identification toolkit"};
  app.set_version_flag("--version", "rodial 1.0.0");
  app.set_config("--config", "", "read option defaults from a key=value file (# comments)");

  ValidateOpts validate_opts;
  auto* validate = app.add_subcommand("validate-corpus", "check a corpus root and print counts");
  validate->add_option("--data-root", validate_opts.root, "corpus root directory")
      ->envname("RODIAL_DATA_ROOT")
      ->required();
  validate->add_flag("--require-tweets", validate_opts.require_tweets,
                     "fail when the tweet source is missing");

  PrecomputeOpts pre_opts;
  auto* pre = app.add_subcommand("precompute-kernel", "compute and cache the Gram matrices");
  add_data_options(pre, pre_opts.data);
  add_kernel_options(pre, pre_opts.kernel);
  pre->add_option("--cache-dir", pre_opts.cache_dir, "directory for cached kernels")->required();
  pre->add_option("--workers", pre_opts.workers, "worker threads (0 = all)");

  TrainOpts train_opts;
  auto* train = app.add_subcommand("train", "train a model and save it");
  add_data_options(train, train_opts.data);
  train->add_option("--model", train_opts.model, "model kind")
      ->check(CLI::IsMember({"krr", "svm", "cnn"}))
      ->capture_default_str();
  train->add_option("--out", train_opts.out, "output model file")->required();
  add_kernel_options(train, train_opts.kernel);
  add_cnn_options(train, train_opts.cnn);
  train->add_option("--cache-dir", train_opts.cache_dir, "directory for cached kernels");
  train->add_option("--seed", train_opts.seed, "random seed")->capture_default_str();
  train->add_option("--workers", train_opts.workers, "worker threads (0 = all)");

  PredictOpts predict_opts;
  auto* predict = app.add_subcommand("predict", "score a split and write an interchange file");
  add_data_options(predict, predict_opts.data);
  predict->add_option("--model", predict_opts.model_path, "trained model file")->required();
  predict->add_option("--split", predict_opts.split, "split to score")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  predict->add_option("--out", predict_opts.out, "output predictions file")->required();
  predict->add_option("--model-id", predict_opts.model_id,
                      "model id column value (defaults to the model kind)");
  predict->add_option("--cache-dir", predict_opts.cache_dir, "directory for cached kernels");
  predict->add_option("--workers", predict_opts.workers, "worker threads (0 = all)");

  StackerOpts stacker_opts;
  auto* stacker = app.add_subcommand("train-stacker", "fit a stacker over prediction files");
  stacker->add_option("--inputs", stacker_opts.inputs, "prediction interchange files")
      ->delimiter(',')
      ->required();
  stacker->add_option("--golds", stacker_opts.golds, "gold labels file (<id>\\t<class>)")
      ->required();
  stacker->add_option("--classes", stacker_opts.classes, "ordered class names")
      ->delimiter(',')
      ->required();
  stacker->add_option("--penalty", stacker_opts.penalty, "regularization penalty")
      ->check(CLI::IsMember({"l2", "l1"}))
      ->capture_default_str();
  stacker->add_option("--c", stacker_opts.c, "inverse regularization strength")
      ->capture_default_str();
  stacker->add_option("--out", stacker_opts.out, "output stacker file")->required();

  VoteOpts vote_opts;
  auto* vote = app.add_subcommand("vote", "plurality-vote prediction files against golds");
  vote->add_option("--inputs", vote_opts.inputs, "prediction interchange files")
      ->delimiter(',')
      ->required();
  vote->add_option("--golds", vote_opts.golds, "gold labels file (<id>\\t<class>)")->required();
  vote->add_option("--classes", vote_opts.classes, "ordered class names")
      ->delimiter(',')
      ->required();
  vote->add_option("--out", vote_opts.out, "optional voted-labels output file");

  EvaluateOpts eval_opts;
  auto* evaluate = app.add_subcommand("evaluate", "run a full experiment and write reports");
  add_data_options(evaluate, eval_opts.data);
  evaluate->add_option("--models", eval_opts.models,
                       "model list; end with vote or stacking to combine")
      ->delimiter(',')
      ->capture_default_str();
  evaluate->add_option("--import", eval_opts.imports, "prediction files to join the ensemble");
  add_kernel_options(evaluate, eval_opts.kernel);
  add_cnn_options(evaluate, eval_opts.cnn);
  evaluate->add_option("--stacker-penalty", eval_opts.stacker_penalty, "stacker penalty")
      ->check(CLI::IsMember({"l2", "l1"}))
      ->capture_default_str();
  evaluate->add_option("--stacker-c", eval_opts.stacker_c, "stacker inverse regularization")
      ->capture_default_str();
  evaluate->add_option("--cache-dir", eval_opts.cache_dir, "directory for cached kernels");
  evaluate->add_option("--out-dir", eval_opts.out_dir, "report output directory")->required();
  evaluate->add_option("--seed", eval_opts.seed, "random seed")->capture_default_str();
  evaluate->add_option("--workers", eval_opts.workers, "worker threads (0 = all)");

  GradcamOpts grad_opts;
  auto* grad = app.add_subcommand("gradcam", "render character attribution pages");
  add_data_options(grad, grad_opts.data);
  grad->add_option("--model", grad_opts.model_path, "trained cnn model file")->required();
  grad->add_option("--split", grad_opts.split, "split to read samples from")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  grad->add_option("--ids", grad_opts.ids, "sample ids to render (default: first --limit)")
      ->delimiter(',');
  grad->add_option("--limit", grad_opts.limit, "page count when --ids is not given")
      ->capture_default_str();
  grad->add_option("--target", grad_opts.target,
                   "attribution target class (default: the prediction)");
  grad->add_option("--out-dir", grad_opts.out_dir, "output directory")->required();
  grad->add_option("--workers", grad_opts.workers, "worker threads (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*validate) return do_validate(validate_opts);
    if (*pre) return do_precompute(pre_opts);
    if (*train) return do_train(train_opts);
    if (*predict) return do_predict(predict_opts);
    if (*stacker) return do_train_stacker(stacker_opts);
    if (*vote) return do_vote(vote_opts);
    if (*evaluate) return do_evaluate(eval_opts);
    if (*grad) return do_gradcam(grad_opts);
  } catch (const usage_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const parse_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const validation_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
  std::fputs(app.help().c_str(), stderr);  // no subcommand given
  return 1;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"rodial"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace rodial::cli

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "rodial/corpus.hpp"
#include "rodial/ensemble.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace rodial;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string cli_binary() { return std::string(RODIAL_BIN_DIR) + "/rodial"; }

// Runs the CLI via the shell with stdout/stderr captured into files.
// `prefix` can set or unset environment variables for the invocation.
RunResult run_cli(const testutil::TempDir& td, const std::string& name, const std::string& args,
                  const std::string& prefix = "env -u RODIAL_DATA_ROOT") {
  std::string out_path = (td.path() / (name + ".out")).string();
  std::string err_path = (td.path() / (name + ".err")).string();
  std::string cmd = prefix + " " + cli_binary() + " " + args + " >" + out_path + " 2>" + err_path;
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out_path);
  r.err = read_text_file(err_path);
  return r;
}

std::string fixture() { return testutil::fixture_dir(); }

void write_golds(const TaskSplit& split, const std::vector<std::string>& class_names,
                 const std::string& path) {
  std::string content;
  for (std::size_t i = 0; i < split.ids.size(); ++i) {
    content += split.ids[i] + "\t" + class_names[static_cast<std::size_t>(split.labels[i])] + "\n";
  }
  write_text_file(path, content);
}

}  // namespace

TEST_CASE("help and version exit zero", "[cli]") {
  testutil::TempDir td("cli-help");
  RunResult help = run_cli(td, "help", "--help");
  REQUIRE(help.code == 0);
  REQUIRE(help.out.find("validate-corpus") != std::string::npos);
  REQUIRE(help.out.find("evaluate") != std::string::npos);
  REQUIRE(help.out.find("gradcam") != std::string::npos);

  RunResult sub_help = run_cli(td, "sub_help", "evaluate --help");
  REQUIRE(sub_help.code == 0);
  REQUIRE(sub_help.out.find("--models") != std::string::npos);
  REQUIRE(sub_help.out.find("--out-dir") != std::string::npos);

  RunResult version = run_cli(td, "version", "--version");
  REQUIRE(version.code == 0);
  REQUIRE(version.out.find("rodial") != std::string::npos);
}

TEST_CASE("usage problems exit 1 with a message on stderr", "[cli]") {
  testutil::TempDir td("cli-usage");
  RunResult unknown = run_cli(td, "unknown", "frobnicate");
  REQUIRE(unknown.code == 1);
  REQUIRE(unknown.err.find("frobnicate") != std::string::npos);
  REQUIRE(unknown.out.empty());

  RunResult bare = run_cli(td, "bare", "");
  REQUIRE(bare.code == 1);
  REQUIRE_FALSE(bare.err.empty());

  RunResult missing = run_cli(td, "missing", "evaluate --out-dir " + (td.path() / "x").string());
  REQUIRE(missing.code == 1);
  REQUIRE(missing.err.find("--data-root") != std::string::npos);

  RunResult bad_enum =
      run_cli(td, "bad_enum",
              "evaluate --data-root " + fixture() + " --scenario bogus --out-dir " +
                  (td.path() / "y").string());
  REQUIRE(bad_enum.code == 1);
  REQUIRE_FALSE(bad_enum.err.empty());
}

TEST_CASE("library errors map onto the documented exit codes", "[cli]") {
  testutil::TempDir td("cli-codes");
  RunResult no_data = run_cli(td, "no_data",
                              "evaluate --data-root /nonexistent-rodial --models constant0 "
                              "--out-dir " +
                                  (td.path() / "o1").string());
  REQUIRE(no_data.code == 2);
  REQUIRE(no_data.err.find("error:") != std::string::npos);

  RunResult bad_model = run_cli(td, "bad_model",
                                "evaluate --data-root " + fixture() +
                                    " --models nonsense --out-dir " + (td.path() / "o2").string());
  REQUIRE(bad_model.code == 1);

  std::string junk = (td.path() / "junk.bin").string();
  write_text_file(junk, "this is not a rodial model file at all");
  RunResult bad_file = run_cli(td, "bad_file",
                               "predict --data-root " + fixture() + " --model " + junk +
                                   " --out " + (td.path() / "p.tsv").string());
  REQUIRE(bad_file.code == 2);
  REQUIRE(bad_file.err.find("unrecognized") != std::string::npos);
}

TEST_CASE("validate-corpus prints counts and honors the data-root env var", "[cli]") {
  testutil::TempDir td("cli-validate");
  RunResult flag = run_cli(td, "flag", "validate-corpus --data-root " + fixture());
  REQUIRE(flag.code == 0);
  REQUIRE(flag.out.find("articles_train=120") != std::string::npos);
  REQUIRE(flag.out.find("articles_validation=24") != std::string::npos);
  REQUIRE(flag.out.find("tweets_test=24") != std::string::npos);
  REQUIRE(flag.out.find("status=ok") != std::string::npos);

  RunResult env = run_cli(td, "env", "validate-corpus", "env RODIAL_DATA_ROOT=" + fixture());
  REQUIRE(env.code == 0);
  REQUIRE(env.out.find("status=ok") != std::string::npos);
}

TEST_CASE("evaluate writes a report directory", "[cli]") {
  testutil::TempDir td("cli-evaluate");
  std::string rep = (td.path() / "rep").string();
  RunResult r = run_cli(td, "eval",
                        "evaluate --data-root " + fixture() +
                            " --models constant0 --workers 2 --out-dir " + rep);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("report_dir=") != std::string::npos);
  std::string kv = read_text_file(rep + "/report.txt");
  REQUIRE(kv.find("accuracy=0.500000") != std::string::npos);
  REQUIRE(fs::exists(rep + "/confusion.csv"));
  std::string manifest = read_text_file(rep + "/manifest.txt");
  REQUIRE(manifest.find("command=evaluate") != std::string::npos);
  REQUIRE(manifest.find("models=constant0") != std::string::npos);
}

TEST_CASE("config files supply option defaults", "[cli]") {
  testutil::TempDir td("cli-config");
  std::string cfg = (td.path() / "run.cfg").string();
  write_text_file(cfg, "# experiment defaults\n[evaluate]\nmodels=constant0\nworkers=2\n");
  std::string rep = (td.path() / "rep").string();
  RunResult r = run_cli(td, "cfg",
                        "--config " + cfg + " evaluate --data-root " + fixture() +
                            " --out-dir " + rep);
  REQUIRE(r.code == 0);
  REQUIRE(read_text_file(rep + "/report.txt").find("models=constant0\n") != std::string::npos);
}

TEST_CASE("train, predict, stack, and vote round trip", "[cli]") {
  testutil::TempDir td("cli-roundtrip");
  TaskData task = [] {
    DataRoot data = load_data_root(testutil::fixture_dir(), false);
    return build_task(data, Scenario::full_articles, Task::dialect);
  }();
  std::string golds_val = (td.path() / "golds_val.tsv").string();
  std::string golds_test = (td.path() / "golds_test.tsv").string();
  write_golds(task.validation, task.class_names, golds_val);
  write_golds(task.test, task.class_names, golds_test);

  std::string krr_model = (td.path() / "krr.bin").string();
  std::string svm_model = (td.path() / "svm.bin").string();
  RunResult train_krr = run_cli(td, "train_krr",
                                "train --data-root " + fixture() + " --model krr --workers 2 "
                                "--out " + krr_model);
  REQUIRE(train_krr.code == 0);
  REQUIRE(train_krr.out.find("saved=") != std::string::npos);
  REQUIRE(fs::exists(krr_model));
  REQUIRE(read_text_file(krr_model + ".manifest").find("command=train") != std::string::npos);
  REQUIRE(run_cli(td, "train_svm",
                  "train --data-root " + fixture() + " --model svm --workers 2 --out " + svm_model)
              .code == 0);

  auto predict = [&](const std::string& name, const std::string& model,
                     const std::string& split, const std::string& out) {
    return run_cli(td, name,
                   "predict --data-root " + fixture() + " --model " + model + " --split " + split +
                       " --workers 2 --out " + out);
  };
  std::string krr_val = (td.path() / "krr_val.tsv").string();
  std::string svm_val = (td.path() / "svm_val.tsv").string();
  std::string krr_test = (td.path() / "krr_test.tsv").string();
  std::string svm_test = (td.path() / "svm_test.tsv").string();
  RunResult p1 = predict("p1", krr_model, "validation", krr_val);
  REQUIRE(p1.code == 0);
  REQUIRE(p1.out.find("model_id=krr") != std::string::npos);
  REQUIRE(p1.out.find("accuracy=") != std::string::npos);
  REQUIRE(predict("p2", svm_model, "validation", svm_val).code == 0);
  REQUIRE(predict("p3", krr_model, "test", krr_test).code == 0);
  REQUIRE(predict("p4", svm_model, "test", svm_test).code == 0);

  // The interchange files parse back and cover the right split.
  auto rows = import_predictions(krr_test, task.class_names, &task.test.ids);
  REQUIRE(rows.size() == 24);

  std::string stacker = (td.path() / "stacker.bin").string();
  RunResult st = run_cli(td, "stacker",
                         "train-stacker --inputs " + krr_val + "," + svm_val + " --golds " +
                             golds_val + " --classes MD,RO --out " + stacker);
  REQUIRE(st.code == 0);
  REQUIRE(st.out.find("models=krr,svm") != std::string::npos);
  REQUIRE(st.out.find("train_accuracy=") != std::string::npos);
  REQUIRE(fs::exists(stacker));

  std::string voted = (td.path() / "voted.tsv").string();
  RunResult vote = run_cli(td, "vote",
                           "vote --inputs " + krr_test + "," + svm_test + " --golds " +
                               golds_test + " --classes MD,RO --out " + voted);
  REQUIRE(vote.code == 0);
  REQUIRE(vote.out.find("accuracy=") != std::string::npos);
  std::string voted_content = read_text_file(voted);
  REQUIRE(std::count(voted_content.begin(), voted_content.end(), '\n') == 24);
}

TEST_CASE("gradcam renders attribution pages from a trained cnn", "[cli]") {
  testutil::TempDir td("cli-gradcam");
  TaskData task = [] {
    DataRoot data = load_data_root(testutil::fixture_dir(), false);
    return build_task(data, Scenario::full_articles, Task::dialect);
  }();
  std::string cnn_model = (td.path() / "cnn.bin").string();
  RunResult train = run_cli(td, "train_cnn",
                            "train --data-root " + fixture() + " --model cnn --epochs 4 "
                            "--lr 3e-3 --embed 8 --filters 8 --widths 5,3 --pool 3 --se 4 "
                            "--fc 16 --input-len 216 --min-count 1 --batch 12 --workers 1 "
                            "--out " + cnn_model);
  REQUIRE(train.code == 0);
  REQUIRE(train.out.find("best_val_accuracy=") != std::string::npos);

  std::string pages = (td.path() / "pages").string();
  const std::string& id0 = task.test.ids[0];
  const std::string& id1 = task.test.ids[1];
  RunResult grad = run_cli(td, "grad",
                           "gradcam --data-root " + fixture() + " --model " + cnn_model +
                               " --ids " + id0 + "," + id1 + " --workers 1 --out-dir " + pages);
  REQUIRE(grad.code == 0);
  REQUIRE(grad.out.find("pages=2") != std::string::npos);
  REQUIRE(fs::exists(pages + "/" + id0 + ".html"));
  std::string page = read_text_file(pages + "/" + id0 + ".html");
  REQUIRE(page.find("class=\"l") != std::string::npos);
  REQUIRE(read_text_file(pages + "/index.html").find(id0) != std::string::npos);
  REQUIRE(read_text_file(pages + "/manifest.txt").find("command=gradcam") != std::string::npos);

  // Attribution needs a cnn model; a kernel model is a usage error.
  std::string krr_model = (td.path() / "krr.bin").string();
  REQUIRE(run_cli(td, "train_krr2",
                  "train --data-root " + fixture() + " --model krr --workers 2 --out " + krr_model)
              .code == 0);
  RunResult wrong = run_cli(td, "wrong",
                            "gradcam --data-root " + fixture() + " --model " + krr_model +
                                " --out-dir " + (td.path() / "x").string());
  REQUIRE(wrong.code == 1);
  REQUIRE(wrong.err.find("cnn") != std::string::npos);
}

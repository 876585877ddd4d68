// Drives the installed command-line binary (path in $FACECHANNEL_CLI) as a
// subprocess and checks its artifacts, exit codes, and error channels.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "facechannel/model.hpp"
#include "test_support.hpp"

using namespace facechannel;
using testsupport::TempDir;
using testsupport::contains;
using testsupport::write_image_tree;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return {};
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (const char c : text)
    if (c == '\n') ++n;
  return n;
}

const char* cli_binary() {
  const char* env = std::getenv("FACECHANNEL_CLI");
  REQUIRE_MESSAGE(env != nullptr, "FACECHANNEL_CLI must point at the facechannel binary");
  return env;
}

CliResult run_cli(const std::vector<std::string>& args, const TempDir& scratch) {
  const std::string out_file = scratch.str("cli_stdout.txt");
  const std::string err_file = scratch.str("cli_stderr.txt");
  std::string cmd = std::string("'") + cli_binary() + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " >'" + out_file + "' 2>'" + err_file + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::string write_text(const TempDir& dir, const std::string& name, const std::string& text) {
  const std::string p = dir.str(name);
  std::ofstream f(p);
  f << text;
  return p;
}

const char* kFastConfig =
    R"({"model": {"dropout_rate": 0.0}, "train": {"learning_rate": 0.005, "batch_size": 6}})";

} // namespace

TEST_CASE("train writes a loadable weight file, history, and eval report") {
  TempDir dir("cli_train");
  const std::string manifest = write_image_tree(dir.path() / "data", 6, 5, 2);
  const std::string config = write_text(dir, "config.json", kFastConfig);

  const CliResult r = run_cli({"train", "--config", config, "--train-manifest", manifest,
                               "--out", dir.str("out"), "--epochs", "5", "--seed", "3"},
                              dir);
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(contains(r.out, "wrote "));

  const std::string history = slurp(dir.str("out/history.csv"));
  CHECK(contains(history, "epoch,loss,val_metric\n"));
  CHECK(count_lines(history) == 6); // header + 5 epochs
  CHECK(contains(history, "\n5,"));

  Model<float> model = load_model(dir.str("out/weights.fcw"));
  CHECK(model.parameter_count() == 2'265'962); // budget for the 2-class head

  const std::string eval_json = slurp(dir.str("out/eval.json"));
  CHECK(contains(eval_json, "\"accuracy\""));
  CHECK(contains(eval_json, "\"n\": 6"));
}

TEST_CASE("mismatched label schema exits nonzero with the schema named") {
  TempDir dir("cli_schema");
  const std::string manifest = write_image_tree(dir.path() / "data", 4, 5, 2);
  const std::string config = write_text(
      dir, "config.json", R"({"model": {"num_classes": 3}, "train": {"batch_size": 4}})");
  const CliResult r = run_cli({"train", "--config", config, "--train-manifest", manifest,
                               "--out", dir.str("out"), "--epochs", "1"},
                              dir);
  CHECK(r.exit_code != 0);
  CHECK(contains(r.err, "label schema"));
}

TEST_CASE("identical seeded runs produce byte-identical artifacts") {
  TempDir dir("cli_determinism");
  const std::string manifest = write_image_tree(dir.path() / "data", 6, 8, 2);
  const std::string config = write_text(dir, "config.json", kFastConfig);

  auto train_into = [&](const std::string& out, const std::string& seed) {
    const CliResult r = run_cli({"train", "--config", config, "--train-manifest", manifest,
                                 "--out", dir.str(out), "--epochs", "2", "--seed", seed},
                                dir);
    CAPTURE(r.err);
    REQUIRE(r.exit_code == 0);
  };
  train_into("a", "11");
  train_into("b", "11");
  train_into("c", "12");

  const std::string wa = slurp(dir.str("a/weights.fcw"));
  const std::string wb = slurp(dir.str("b/weights.fcw"));
  const std::string wc = slurp(dir.str("c/weights.fcw"));
  REQUIRE(!wa.empty());
  CHECK(wa == wb);
  CHECK(wa != wc); // another seed lands elsewhere
  CHECK(slurp(dir.str("a/history.csv")) == slurp(dir.str("b/history.csv")));
}

TEST_CASE("finetune with the trunk frozen keeps trunk bytes and swaps heads") {
  TempDir dir("cli_finetune");
  const std::string manifest = write_image_tree(dir.path() / "data", 6, 9, 2);
  const std::string config = write_text(dir, "config.json", kFastConfig);

  const CliResult pre = run_cli({"train", "--config", config, "--train-manifest", manifest,
                                 "--out", dir.str("pre"), "--epochs", "2", "--seed", "4"},
                                dir);
  CAPTURE(pre.err);
  REQUIRE(pre.exit_code == 0);

  const CliResult ft = run_cli(
      {"finetune", "--config", config, "--weights", dir.str("pre/weights.fcw"),
       "--train-manifest", manifest, "--out", dir.str("ft"), "--epochs", "2", "--seed", "5",
       "--freeze-prefix", "22"},
      dir);
  CAPTURE(ft.err);
  REQUIRE(ft.exit_code == 0);

  const auto before = read_weight_file(dir.str("pre/weights.fcw"));
  const auto after = read_weight_file(dir.str("ft/weights.fcw"));
  REQUIRE(before.size() == after.size());
  bool head_changed = false;
  for (std::size_t i = 0; i < before.size(); ++i) {
    REQUIRE(before[i].name == after[i].name);
    const bool same = before[i].data == after[i].data;
    if (before[i].name.rfind("head_", 0) == 0)
      head_changed = head_changed || !same;
    else {
      INFO(before[i].name);
      CHECK(same);
    }
  }
  CHECK(head_changed);
}

TEST_CASE("finetune onto a different class count re-initializes the head") {
  TempDir dir("cli_headswap");
  const std::string two_class = write_image_tree(dir.path() / "two", 4, 9, 2);
  const std::string three_class = write_image_tree(dir.path() / "three", 6, 10, 3);
  const std::string config = write_text(
      dir, "config.json",
      R"({"model": {"dropout_rate": 0.0}, "train": {"learning_rate": 0.005, "batch_size": 2}})");

  const CliResult pre = run_cli({"train", "--config", config, "--train-manifest", two_class,
                                 "--out", dir.str("pre"), "--epochs", "1", "--seed", "4"},
                                dir);
  REQUIRE(pre.exit_code == 0);

  const CliResult ft = run_cli({"finetune", "--config", config, "--weights",
                                dir.str("pre/weights.fcw"), "--train-manifest", three_class,
                                "--out", dir.str("ft"), "--epochs", "1", "--seed", "5"},
                               dir);
  CAPTURE(ft.err);
  REQUIRE(ft.exit_code == 0);
  for (const auto& blob : read_weight_file(dir.str("ft/weights.fcw")))
    if (blob.name == "head_cat.weight") CHECK(blob.shape == Shape{200, 3});
}

TEST_CASE("missing weight file exits nonzero") {
  TempDir dir("cli_noweights");
  const std::string manifest = write_image_tree(dir.path() / "data", 4, 9, 2);
  const CliResult r = run_cli({"finetune", "--weights", dir.str("ghost.fcw"),
                               "--train-manifest", manifest, "--out", dir.str("out")},
                              dir);
  CHECK(r.exit_code != 0);
  CHECK(contains(r.err, "error:"));
  CHECK(contains(r.err, "ghost.fcw"));

  const CliResult e = run_cli({"eval", "--weights", dir.str("ghost.fcw"), "--val-manifest",
                               manifest},
                              dir);
  CHECK(e.exit_code != 0);
  CHECK(contains(e.err, "ghost.fcw"));
}

TEST_CASE("eval prints a categorical report as json") {
  TempDir dir("cli_eval");
  const std::string manifest = write_image_tree(dir.path() / "data", 6, 12, 2);
  const std::string config = write_text(dir, "config.json", kFastConfig);
  const CliResult tr = run_cli({"train", "--config", config, "--train-manifest", manifest,
                                "--out", dir.str("out"), "--epochs", "1", "--seed", "2"},
                               dir);
  REQUIRE(tr.exit_code == 0);

  const CliResult ev = run_cli(
      {"eval", "--weights", dir.str("out/weights.fcw"), "--val-manifest", manifest}, dir);
  CAPTURE(ev.err);
  REQUIRE(ev.exit_code == 0);
  CHECK(contains(ev.out, "\"accuracy\""));
  CHECK(contains(ev.out, "\"confusion\""));
  CHECK(contains(ev.out, "\"n\": 6"));
}

TEST_CASE("dimensional eval reports ccc, pooled and per-group") {
  TempDir dir("cli_dim");
  write_image_tree(dir.path() / "data", 6, 13, 2); // provides class0/, class1/ images
  std::ostringstream manifest_text;
  manifest_text << "path,valence,arousal\n";
  for (int i = 0; i < 6; ++i)
    manifest_text << "class" << i % 2 << "/img" << i << ".ppm," << (i % 2 ? 0.4 : -0.2) + 0.05 * i
                  << "," << ((i % 3) * 0.3 - 0.3) << "\n";
  // Paths resolve against the manifest's own directory; class0/, class1/
  // double as ccc groups.
  const std::string moved = (dir.path() / "data" / "dim.csv").string();
  std::ofstream(moved) << manifest_text.str();

  const std::string config = write_text(
      dir, "config.json",
      R"({"model": {"dropout_rate": 0.0}, "train": {"learning_rate": 0.001, "batch_size": 6}})");
  const CliResult tr = run_cli({"train", "--config", config, "--train-manifest", moved, "--out",
                                dir.str("out"), "--epochs", "1", "--seed", "2"},
                               dir);
  CAPTURE(tr.err);
  REQUIRE(tr.exit_code == 0);

  const CliResult ev =
      run_cli({"eval", "--weights", dir.str("out/weights.fcw"), "--val-manifest", moved}, dir);
  CAPTURE(ev.err);
  REQUIRE(ev.exit_code == 0);
  CHECK(contains(ev.out, "\"ccc_arousal\""));
  CHECK(contains(ev.out, "\"ccc_valence\""));
  CHECK(contains(ev.out, "\"accuracy\": null"));

  const CliResult grouped = run_cli({"eval", "--weights", dir.str("out/weights.fcw"),
                                     "--val-manifest", moved, "--ccc-per-group"},
                                    dir);
  CAPTURE(grouped.err);
  REQUIRE(grouped.exit_code == 0);
  CHECK(contains(grouped.out, "\"ccc_arousal\""));

  // Per-group averaging is only defined for dimensional labels.
  const std::string cat_manifest = write_image_tree(dir.path() / "cat", 4, 14, 2);
  const CliResult tr2 = run_cli({"train", "--config", config, "--train-manifest", cat_manifest,
                                 "--out", dir.str("cat_out"), "--epochs", "1", "--seed", "2"},
                                dir);
  REQUIRE(tr2.exit_code == 0);
  const CliResult bad = run_cli({"eval", "--weights", dir.str("cat_out/weights.fcw"),
                                 "--val-manifest", cat_manifest, "--ccc-per-group"},
                                dir);
  CHECK(bad.exit_code != 0);
  CHECK(contains(bad.err, "label schema"));
}

TEST_CASE("an untrained model scores at chance level") {
  TempDir dir("cli_chance");
  const std::string manifest = write_image_tree(dir.path() / "data", 10, 21, 2);
  // One epoch at learning rate zero leaves the weights at their seeded
  // initialization but gives the normalization layers their running
  // statistics, which evaluation requires.
  const std::string config = write_text(
      dir, "config.json",
      R"({"model": {"dropout_rate": 0.0}, "train": {"learning_rate": 0.0, "batch_size": 10}})");

  double total_accuracy = 0;
  const int seeds = 5;
  for (int seed = 1; seed <= seeds; ++seed) {
    const std::string out = dir.str("out" + std::to_string(seed));
    const CliResult tr = run_cli({"train", "--config", config, "--train-manifest", manifest,
                                  "--out", out, "--epochs", "1", "--seed", std::to_string(seed)},
                                 dir);
    CAPTURE(tr.err);
    REQUIRE(tr.exit_code == 0);
    const std::string eval_json = slurp(out + "/eval.json");
    const std::size_t at = eval_json.find("\"accuracy\": ");
    REQUIRE(at != std::string::npos);
    total_accuracy += std::strtod(eval_json.c_str() + at + 12, nullptr);
  }
  const double mean = total_accuracy / seeds;
  CHECK(mean >= 0.3); // chance level for 2 balanced classes is 0.5
  CHECK(mean <= 0.7);
}

TEST_CASE("gradcheck passes on a fresh build and exits zero") {
  TempDir dir("cli_gradcheck");
  const CliResult r = run_cli({"gradcheck", "--seed", "17"}, dir);
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  for (const char* layer : {"conv2d", "maxpool2d", "batchnorm2d", "dropout", "dense", "shunting",
                            "softmax_cross_entropy"}) {
    INFO(layer);
    CHECK(contains(r.out, std::string(layer) + ": PASS"));
  }
  CHECK(!contains(r.out, "FAIL"));
}

TEST_CASE("hpo writes one trial per line and resumes into the same log") {
  TempDir dir("cli_hpo");
  const std::string manifest = write_image_tree(dir.path() / "data", 4, 31, 2);
  const std::string config = write_text(
      dir, "config.json",
      R"({"model": {"dropout_rate": 0.0}, "train": {"batch_size": 4, "momentum": 0.5}})");
  const std::string space = write_text(
      dir, "space.json",
      R"({"learning_rate": {"type": "log_uniform", "low": 0.001, "high": 0.01}})");

  const CliResult first = run_cli({"hpo", "--config", config, "--train-manifest", manifest,
                                   "--out", dir.str("out"), "--epochs", "1", "--seed", "6",
                                   "--space", space, "--budget", "3"},
                                  dir);
  CAPTURE(first.err);
  REQUIRE(first.exit_code == 0);
  const std::string log1 = slurp(dir.str("out/trials.jsonl"));
  CHECK(count_lines(log1) == 3);
  const std::string best = slurp(dir.str("out/best_config.json"));
  CHECK(contains(best, "\"config\""));
  CHECK(contains(best, "\"learning_rate\""));
  CHECK(contains(best, "\"objective\""));

  const CliResult second = run_cli({"hpo", "--config", config, "--train-manifest", manifest,
                                    "--out", dir.str("out"), "--epochs", "1", "--seed", "6",
                                    "--space", space, "--budget", "5"},
                                   dir);
  CAPTURE(second.err);
  REQUIRE(second.exit_code == 0);
  CHECK(contains(second.out, "resuming from 3 recorded trials"));
  CHECK(count_lines(slurp(dir.str("out/trials.jsonl"))) == 5);
}

TEST_CASE("predict emits a csv with one probability column per class") {
  TempDir dir("cli_predict");
  const std::string manifest = write_image_tree(dir.path() / "data", 4, 33, 2);
  const std::string config = write_text(dir, "config.json", kFastConfig);
  const CliResult tr = run_cli({"train", "--config", config, "--train-manifest", manifest,
                                "--out", dir.str("out"), "--epochs", "1", "--seed", "2"},
                               dir);
  REQUIRE(tr.exit_code == 0);

  const CliResult pr = run_cli(
      {"predict", "--weights", dir.str("out/weights.fcw"), "--val-manifest", manifest}, dir);
  CAPTURE(pr.err);
  REQUIRE(pr.exit_code == 0);
  REQUIRE(count_lines(pr.out) == 5); // header + 4 rows
  std::istringstream lines(pr.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "path,p0,p1");
  std::string row;
  while (std::getline(lines, row)) {
    CHECK(contains(row, ".ppm"));
    // Two prob columns that parse and sum to ~1.
    const std::size_t c1 = row.find(','), c2 = row.find(',', c1 + 1);
    REQUIRE(c1 != std::string::npos);
    REQUIRE(c2 != std::string::npos);
    const double p0 = std::strtod(row.c_str() + c1 + 1, nullptr);
    const double p1 = std::strtod(row.c_str() + c2 + 1, nullptr);
    CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("usage errors exit nonzero") {
  TempDir dir("cli_usage");
  CHECK(run_cli({}, dir).exit_code != 0);                      // no subcommand
  CHECK(run_cli({"train"}, dir).exit_code != 0);               // missing required manifest
  CHECK(run_cli({"train", "--bogus"}, dir).exit_code != 0);    // unknown flag
  CHECK(run_cli({"frobnicate"}, dir).exit_code != 0);          // unknown subcommand
}

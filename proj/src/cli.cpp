#include "facechannel/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "facechannel/data.hpp"
#include "facechannel/layer_suite.hpp"
#include "facechannel/model.hpp"
#include "facechannel/tpe.hpp"
#include "facechannel/train.hpp"

namespace facechannel::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunSettings {
  ModelConfig model;
  TrainConfig train;
  bool head_set = false;
  bool classes_set = false;
  bool loss_set = false;
  bool lr_set = false;
};

json read_json_file(const std::string& path, const char* what) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error(std::string("cannot open ") + what + ": " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string(what) + " " + path + ": " + e.what());
  }
}

Head parse_head(const std::string& s) {
  if (s == "categorical") return Head::categorical;
  if (s == "dimensional") return Head::dimensional;
  if (s == "both") return Head::both;
  throw std::runtime_error("config: head must be categorical|dimensional|both, got '" + s + "'");
}

LossKind parse_loss(const std::string& s) {
  if (s == "soft_cross_entropy") return LossKind::soft_cross_entropy;
  if (s == "mse") return LossKind::mse;
  if (s == "ccc") return LossKind::ccc;
  throw std::runtime_error("config: loss must be soft_cross_entropy|mse|ccc, got '" + s + "'");
}

void apply_model_section(RunSettings& s, const json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "conv_blocks") {
      s.model.conv_blocks.clear();
      for (const auto& block : value) {
        std::vector<std::size_t> widths;
        for (const auto& w : block) widths.push_back(w.get<std::size_t>());
        s.model.conv_blocks.push_back(std::move(widths));
      }
    } else if (key == "dense_units") {
      s.model.dense_units = value.get<std::size_t>();
    } else if (key == "head") {
      s.model.head = parse_head(value.get<std::string>());
      s.head_set = true;
    } else if (key == "num_classes") {
      s.model.num_classes = value.get<std::size_t>();
      s.classes_set = true;
    } else if (key == "dropout_rate") {
      s.model.dropout_rate = value.get<double>();
    } else if (key == "shunting_kernel") {
      s.model.shunting_kernel = value.get<int>();
    } else if (key == "seed") {
      s.model.seed = value.get<std::uint64_t>();
    } else {
      throw std::runtime_error("config: unknown key '" + key + "' in model section");
    }
  }
}

void apply_train_section(RunSettings& s, const json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate") {
      s.train.learning_rate = value.get<double>();
      s.lr_set = true;
    } else if (key == "momentum") {
      s.train.momentum = value.get<double>();
    } else if (key == "batch_size") {
      s.train.batch_size = value.get<std::size_t>();
    } else if (key == "epochs") {
      s.train.epochs = value.get<std::size_t>();
    } else if (key == "seed") {
      s.train.seed = value.get<std::uint64_t>();
    } else if (key == "freeze_prefix") {
      s.train.freeze_prefix = value.get<std::size_t>();
    } else if (key == "loss") {
      s.train.loss = parse_loss(value.get<std::string>());
      s.loss_set = true;
    } else {
      throw std::runtime_error("config: unknown key '" + key + "' in train section");
    }
  }
}

struct CommonArgs {
  std::string config;
  std::string train_manifest;
  std::string val_manifest;
  std::string weights;
  std::string out = ".";
  std::string space;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> freeze_prefix;
  std::size_t budget = 20;
  bool ccc_per_group = false;
  bool neutral_class = false;
};

RunSettings resolve_settings(const CommonArgs& args) {
  RunSettings s;
  if (!args.config.empty()) {
    const json j = read_json_file(args.config, "config");
    for (const auto& [key, value] : j.items()) {
      if (key == "model")
        apply_model_section(s, value);
      else if (key == "train")
        apply_train_section(s, value);
      else
        throw std::runtime_error("config: unknown section '" + key + "'");
    }
  }
  if (args.seed) {
    s.model.seed = *args.seed;
    s.train.seed = *args.seed;
  }
  if (args.epochs) s.train.epochs = *args.epochs;
  if (args.freeze_prefix) s.train.freeze_prefix = *args.freeze_prefix;
  return s;
}

/// Pick head, class count, and loss from the label schema unless the config
/// file pinned them. --neutral-class reserves one extra trailing class.
void adapt_to_schema(RunSettings& s, const Manifest& manifest, bool neutral_class) {
  if (manifest.schema == LabelSchema::dimensional) {
    if (!s.head_set) s.model.head = Head::dimensional;
    if (!s.loss_set) s.train.loss = LossKind::mse;
  } else {
    if (!s.head_set) s.model.head = Head::categorical;
    if (!s.classes_set)
      s.model.num_classes = manifest.num_classes + (neutral_class ? 1 : 0);
    if (!s.loss_set) s.train.loss = LossKind::soft_cross_entropy;
  }
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

/// Shared tail of train/finetune: fit, then write weights + history + eval
/// report into the output directory.
int fit_and_emit(Model<float>& model, const Dataset& train_set, const Dataset* val_set,
                 const TrainConfig& cfg, const std::string& out_dir) {
  const History history = train(model, train_set, val_set, cfg);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  model.save((out / "weights.fcw").string());
  write_history_csv((out / "history.csv").string(), history);
  EvalReport report = evaluate(model, val_set ? *val_set : train_set);
  write_text_file(out / "eval.json", report.to_json() + "\n");
  std::cout << "wrote " << (out / "weights.fcw").string() << "\n"
            << "wrote " << (out / "history.csv").string() << "\n"
            << "wrote " << (out / "eval.json").string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  RunSettings s = resolve_settings(args);
  const Manifest train_manifest = load_manifest(args.train_manifest);
  adapt_to_schema(s, train_manifest, args.neutral_class);
  Model<float> model(s.model);
  const Dataset train_set = load_dataset(train_manifest);
  Dataset val_set;
  if (!args.val_manifest.empty()) val_set = load_dataset(load_manifest(args.val_manifest));
  return fit_and_emit(model, train_set, val_set.size() ? &val_set : nullptr, s.train, args.out);
}

int cmd_finetune(const CommonArgs& args) {
  RunSettings s = resolve_settings(args);
  if (!s.lr_set) s.train.learning_rate *= 0.1; // fine-tune default: a gentler step
  const std::vector<TensorBlob> blobs = read_weight_file(args.weights);
  const Manifest train_manifest = load_manifest(args.train_manifest);
  adapt_to_schema(s, train_manifest, args.neutral_class);

  // Trunk topology comes from the file; head and run settings from the CLI.
  ModelConfig cfg = config_from_blobs(blobs, s.model);
  cfg.head = s.model.head;
  cfg.num_classes = s.model.num_classes;
  cfg.dropout_rate = s.model.dropout_rate;
  cfg.seed = s.model.seed;
  Model<float> model(cfg);
  model.load_blobs(blobs, Model<float>::LoadPolicy::reinit_head_on_mismatch);

  const Dataset train_set = load_dataset(train_manifest);
  Dataset val_set;
  if (!args.val_manifest.empty()) val_set = load_dataset(load_manifest(args.val_manifest));
  return fit_and_emit(model, train_set, val_set.size() ? &val_set : nullptr, s.train, args.out);
}

Model<float> load_model_for_inference(const CommonArgs& args) {
  const std::vector<TensorBlob> blobs = read_weight_file(args.weights);
  const RunSettings s = resolve_settings(args);
  Model<float> model(config_from_blobs(blobs, s.model));
  model.load_blobs(blobs);
  return model;
}

void apply_grouped_ccc(EvalReport& report, const Dataset& data, const Tensor<float>& dim_preds) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i)
    groups[fs::path(data.paths[i]).parent_path().string()].push_back(i);
  double sum_v = 0, sum_a = 0;
  std::size_t used = 0;
  for (const auto& [name, idx] : groups) {
    if (idx.size() < 2) continue; // CCC needs at least 2 samples
    std::vector<double> pv, pa, tv, ta;
    for (const std::size_t i : idx) {
      pv.push_back(dim_preds[i * 2]);
      pa.push_back(dim_preds[i * 2 + 1]);
      tv.push_back(data.labels[i][0]);
      ta.push_back(data.labels[i][1]);
    }
    sum_v += ccc(pv, tv);
    sum_a += ccc(pa, ta);
    ++used;
  }
  if (used == 0)
    throw std::runtime_error("--ccc-per-group: no group (parent directory) has at least 2 samples");
  report.ccc_valence = sum_v / static_cast<double>(used);
  report.ccc_arousal = sum_a / static_cast<double>(used);
}

int cmd_eval(const CommonArgs& args) {
  Model<float> model = load_model_for_inference(args);
  const Dataset data = load_dataset(load_manifest(args.val_manifest));
  EvalReport report = evaluate(model, data);
  if (args.ccc_per_group) {
    if (data.schema != LabelSchema::dimensional)
      throw std::runtime_error("--ccc-per-group needs dimensional labels, label schema is '" +
                               schema_name(data.schema) + "'");
    const Predictions<float> preds = predict_all(model, data);
    apply_grouped_ccc(report, data, preds.dimensional);
  }
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_predict(const CommonArgs& args) {
  Model<float> model = load_model_for_inference(args);
  const Manifest manifest = load_manifest(args.val_manifest);
  const Dataset data = load_dataset(manifest);
  const Predictions<float> preds = predict_all(model, data);

  std::string header = "path";
  if (!preds.categorical.empty())
    for (std::size_t k = 0; k < preds.categorical.dim(1); ++k) header += ",p" + std::to_string(k);
  if (!preds.dimensional.empty()) header += ",valence,arousal";
  std::cout << header << "\n";
  char buf[48];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::string line = manifest.records[i].path;
    if (!preds.categorical.empty()) {
      const std::size_t k = preds.categorical.dim(1);
      for (std::size_t j = 0; j < k; ++j) {
        std::snprintf(buf, sizeof buf, ",%.9g", double(preds.categorical[i * k + j]));
        line += buf;
      }
    }
    if (!preds.dimensional.empty()) {
      std::snprintf(buf, sizeof buf, ",%.9g,%.9g", double(preds.dimensional[i * 2]),
                    double(preds.dimensional[i * 2 + 1]));
      line += buf;
    }
    std::cout << line << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const std::vector<LayerSuiteEntry> suite = run_layer_suite(seed);
  bool all_passed = true;
  for (const auto& entry : suite) {
    std::cout << entry.layer << ": " << (entry.report.passed ? "PASS" : "FAIL") << " (max rel err "
              << entry.report.max_rel_err << ", tolerance " << entry.report.tolerance << ")\n";
    all_passed = all_passed && entry.report.passed;
  }
  if (!all_passed) std::cerr << "gradient check failed\n";
  return all_passed ? 0 : 1;
}

SearchSpace default_space() {
  SearchSpace space;
  space.add("learning_rate", Dimension::log_uniform(1e-3, 0.3));
  space.add("momentum", Dimension::uniform(0.0, 0.95));
  space.add("dropout_rate", Dimension::uniform(0.0, 0.7));
  space.add("batch_size", Dimension::choice({4, 8, 16, 32}));
  space.add("dense_units", Dimension::choice({144, 176, 200}));
  return space;
}

SearchSpace parse_space(const json& j) {
  static const std::set<std::string> known = {"learning_rate", "momentum",     "batch_size",
                                              "epochs",        "dropout_rate", "dense_units"};
  SearchSpace space;
  for (const auto& [name, spec] : j.items()) {
    if (!known.count(name))
      throw std::runtime_error("hpo space: unknown hyperparameter '" + name + "'");
    const std::string type = spec.at("type").get<std::string>();
    if (type == "uniform") {
      space.add(name, Dimension::uniform(spec.at("low").get<double>(), spec.at("high").get<double>()));
    } else if (type == "log_uniform") {
      space.add(name,
                Dimension::log_uniform(spec.at("low").get<double>(), spec.at("high").get<double>()));
    } else if (type == "choice") {
      std::vector<double> options;
      for (const auto& o : spec.at("options")) options.push_back(o.get<double>());
      space.add(name, Dimension::choice(std::move(options)));
    } else {
      throw std::runtime_error("hpo space: dimension '" + name +
                               "': type must be uniform|log_uniform|choice, got '" + type + "'");
    }
  }
  return space;
}

void apply_point(RunSettings& s, const ParamPoint& point) {
  for (const auto& [name, value] : point) {
    if (name == "learning_rate")
      s.train.learning_rate = value;
    else if (name == "momentum")
      s.train.momentum = value;
    else if (name == "batch_size")
      s.train.batch_size = static_cast<std::size_t>(std::llround(value));
    else if (name == "epochs")
      s.train.epochs = static_cast<std::size_t>(std::llround(value));
    else if (name == "dropout_rate")
      s.model.dropout_rate = value;
    else if (name == "dense_units")
      s.model.dense_units = static_cast<std::size_t>(std::llround(value));
  }
}

int cmd_hpo(const CommonArgs& args) {
  const RunSettings base = resolve_settings(args);
  const SearchSpace space =
      args.space.empty() ? default_space() : parse_space(read_json_file(args.space, "hpo space"));
  space.validate();

  const Manifest train_manifest = load_manifest(args.train_manifest);
  const Dataset train_set = load_dataset(train_manifest);
  Dataset val_set;
  if (!args.val_manifest.empty()) val_set = load_dataset(load_manifest(args.val_manifest));

  fs::create_directories(args.out);
  const fs::path log_path = fs::path(args.out) / "trials.jsonl";
  std::vector<TrialRecord> history;
  if (fs::exists(log_path)) {
    std::ifstream log_in(log_path);
    std::string line;
    while (std::getline(log_in, line))
      if (!line.empty()) history.push_back(trial_from_json(line));
    std::cout << "resuming from " << history.size() << " recorded trials\n";
  }

  std::ofstream log_out(log_path, std::ios::app);
  if (!log_out) throw std::runtime_error("cannot open for writing: " + log_path.string());

  auto objective = [&](const ParamPoint& point) {
    RunSettings s = base;
    apply_point(s, point);
    adapt_to_schema(s, train_manifest, args.neutral_class);
    Model<float> model(s.model);
    train(model, train_set, nullptr, s.train);
    const EvalReport report = evaluate(model, val_set.size() ? val_set : train_set);
    return -headline_metric(report); // minimized internally, so negate
  };

  const OptimizeResult result =
      optimize(objective, space, args.budget, base.train.seed,
               [&](const TrialRecord& trial) { log_out << trial_to_json(trial) << "\n" << std::flush; },
               std::move(history));
  if (!result.best) throw std::runtime_error("hpo: all trials failed");

  json best;
  best["config"] = result.best->config;
  best["objective"] = result.best->objective;
  const std::string best_text = best.dump(2) + "\n";
  write_text_file(fs::path(args.out) / "best_config.json", best_text);
  std::cout << best_text;
  return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"FaceChannel facial-expression network: train, fine-tune, evaluate, search"};
  app.require_subcommand(1);
  CommonArgs args;

  auto add_common = [&args](CLI::App* sub, bool with_training) {
    sub->add_option("--config", args.config, "JSON config (model/train sections)");
    sub->add_option("--seed", args.seed, "seed for init, shuffling, dropout");
    if (with_training) {
      sub->add_option("--train-manifest", args.train_manifest, "training CSV manifest")
          ->required();
      sub->add_option("--val-manifest", args.val_manifest, "validation CSV manifest");
      sub->add_option("--out", args.out, "output directory");
      sub->add_option("--epochs", args.epochs, "training epochs");
      sub->add_flag("--neutral-class", args.neutral_class,
                    "reserve one extra trailing class index for Neutral");
    }
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model from scratch");
  add_common(train_cmd, true);
  train_cmd->add_option("--freeze-prefix", args.freeze_prefix,
                        "leading parameter layers to freeze");

  CLI::App* finetune_cmd = app.add_subcommand("finetune", "continue training from a weight file");
  add_common(finetune_cmd, true);
  finetune_cmd->add_option("--weights", args.weights, "pretrained weight file")->required();
  finetune_cmd->add_option("--freeze-prefix", args.freeze_prefix,
                           "leading parameter layers to freeze");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a weight file on a manifest");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--weights", args.weights, "weight file")->required();
  eval_cmd->add_option("--val-manifest", args.val_manifest, "manifest of the split to evaluate")
      ->required();
  eval_cmd->add_flag("--ccc-per-group", args.ccc_per_group,
                     "average CCC over per-directory groups instead of pooling");

  CLI::App* predict_cmd = app.add_subcommand("predict", "print per-sample predictions as CSV");
  add_common(predict_cmd, false);
  predict_cmd->add_option("--weights", args.weights, "weight file")->required();
  predict_cmd->add_option("--val-manifest", args.val_manifest, "manifest of samples to predict")
      ->required();

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of every layer type");
  gradcheck_cmd->add_option("--seed", args.seed, "seed for the random probes");

  CLI::App* hpo_cmd = app.add_subcommand("hpo", "hyperparameter search (TPE, minimizing)");
  add_common(hpo_cmd, true);
  hpo_cmd->add_option("--space", args.space, "JSON search-space file (default space if omitted)");
  hpo_cmd->add_option("--budget", args.budget, "total trial count, including resumed trials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(args);
    if (app.got_subcommand(finetune_cmd)) return cmd_finetune(args);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(args);
    if (app.got_subcommand(predict_cmd)) return cmd_predict(args);
    if (app.got_subcommand(gradcheck_cmd)) return cmd_gradcheck(args.seed.value_or(17));
    if (app.got_subcommand(hpo_cmd)) return cmd_hpo(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace facechannel::cli

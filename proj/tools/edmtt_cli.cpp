// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synth, train, evaluate, predict, ablate.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include <CLI11.hpp>
#include <json.hpp>

#include "edmtt/edmtt.hpp"

namespace fs = std::filesystem;
using namespace edmtt;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kTrainingAbort = 3 };

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::NonFiniteActivation: return kTrainingAbort;
    case ErrorKind::InvalidArgument:
    case ErrorKind::BudgetExceedsSpace: return kUsage;
    default: return kData;
  }
}

struct ModelFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> margin;
  std::optional<double> triplet_weight;
  std::optional<int> windows;
  std::optional<int> epochs;
  std::optional<int> hidden;
  std::optional<double> learning_rate;
  std::string groups = "gaze,pose,aus";
  std::string precision = "float";
  double min_confidence = 0.75;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON file with ModelConfig fields");
    app->add_option("--seed", seed, "Random seed (falls back to $EDMTT_SEED, then the config file)");
    app->add_option("--margin", margin, "Triplet margin");
    app->add_option("--triplet-weight", triplet_weight, "Weight of the triplet loss");
    app->add_option("--a", windows, "Number of aggregation windows");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--hidden", hidden, "Recurrent hidden size");
    app->add_option("--lr", learning_rate, "Learning rate");
    app->add_option("--groups", groups, "Feature groups: comma list of gaze,pose,rotation,aus")
        ->capture_default_str();
    app->add_option("--precision", precision, "Arithmetic for training: float or double")
        ->check(CLI::IsMember({"float", "double"}))
        ->capture_default_str();
    app->add_option("--min-confidence", min_confidence, "Drop frames below this face confidence")
        ->capture_default_str();
  }

  /// defaults < config file < EDMTT_SEED (seed only) < flags
  ModelConfig resolve(GroupSet group_set) const {
    ModelConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      require(static_cast<bool>(in), ErrorKind::Io, "cannot open config file " + config_path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArgument, config_path + ": " + e.what());
      }
      from_json(j, config);
    }
    if (const char* env = std::getenv("EDMTT_SEED"); env != nullptr && *env != '\0') {
      try {
        config.seed = std::stoull(env);
      } catch (const std::exception&) {
        fail(ErrorKind::InvalidArgument, std::string("EDMTT_SEED='") + env + "' is not an integer");
      }
    }
    if (seed) config.seed = *seed;
    if (margin) config.margin = *margin;
    if (triplet_weight) config.triplet_weight = *triplet_weight;
    if (windows) config.window_count = *windows;
    if (epochs) config.epochs = *epochs;
    if (hidden) config.hidden_size = *hidden;
    if (learning_rate) config.learning_rate = *learning_rate;
    config.feature_dim = static_cast<int>(kStatisticsPerFeature * group_set.column_count());
    config.validate();
    return config;
  }
};

struct DataFlags {
  std::string features_dir;
  std::string labels;
  std::string val_labels;
  double val_fraction = 0.25;

  void attach(CLI::App* app) {
    app->add_option("--features-dir", features_dir, "Directory of <sample_id>.csv OpenFace files")
        ->required();
    app->add_option("--labels", labels, "Training labels CSV (sample_id,raw_label)")->required();
    app->add_option("--val-labels", val_labels, "Validation labels CSV; otherwise split --labels");
    app->add_option("--val-fraction", val_fraction, "Validation share when splitting --labels")
        ->capture_default_str();
  }

  PipelineInputs resolve(double min_confidence, std::uint64_t seed) const {
    require(fs::is_directory(features_dir), ErrorKind::Io,
            "features directory " + features_dir + " does not exist");
    PipelineInputs inputs;
    inputs.features_dir = features_dir;
    inputs.min_confidence = min_confidence;
    auto entries = read_labels_csv(labels);
    if (!val_labels.empty()) {
      inputs.train_labels = std::move(entries);
      inputs.val_labels = read_labels_csv(val_labels);
    } else {
      std::tie(inputs.train_labels, inputs.val_labels) =
          split_train_validation(std::move(entries), val_fraction, seed);
    }
    return inputs;
  }
};

template <typename Scalar>
int run_train(const DataFlags& data_flags, const ModelFlags& model_flags, const fs::path& out) {
  const GroupSet groups = GroupSet::parse(model_flags.groups);
  const ModelConfig config = model_flags.resolve(groups);
  const PipelineInputs inputs = data_flags.resolve(model_flags.min_confidence, config.seed);
  const PreparedData data = prepare_data(inputs, groups, config.window_count);
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "config.json");
    cfg << nlohmann::json(config).dump(2) << '\n';
  }

  TrainOptions options;
  options.checkpoint_dir = out;
  options.metadata = {{"feature_groups", groups.to_string()},
                      {"min_confidence", model_flags.min_confidence}};
  options.on_epoch = [](const EpochRecord& r) {
    std::fprintf(stderr, "epoch %4d  train_mse %.5f  triplet %.5f  total %.5f  val_mse %.5f\n",
                 r.epoch, r.train_mse, r.train_triplet, r.train_total, r.val_mse);
  };
  try {
    const auto result = train<Scalar>(data.train, data.val, config, options);
    write_training_log_csv(result.log, out / "train_log.csv");
    save_model(result.model, out / "model.ckpt", options.metadata);
    std::cout << "best epoch " << result.best_epoch << " val_mse " << result.best_val_mse << '\n'
              << "checkpoint " << (out / "model.ckpt").string() << '\n';
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFiniteActivation) {
      std::cerr << "training aborted: " << e.what() << "\n"
                << "last best checkpoint (if any): " << (out / kBestCheckpointName).string() << '\n';
    }
    throw;
  }
  return kOk;
}

std::string stored_dtype(const CheckpointData& data) {
  return data.arrays.empty() ? "f64" : data.arrays.front().dtype;
}

struct LoadedModel {
  std::variant<EdmttModel<float>, EdmttModel<double>> model;
  GroupSet groups;
  double min_confidence = 0.75;
};

LoadedModel load_any(const fs::path& path) {
  const auto data = read_checkpoint(path);
  GroupSet groups = GroupSet::all();
  double min_confidence = 0.75;
  if (data.metadata.contains("feature_groups"))
    groups = GroupSet::parse(data.metadata.at("feature_groups").get<std::string>());
  if (data.metadata.contains("min_confidence"))
    min_confidence = data.metadata.at("min_confidence").get<double>();
  if (stored_dtype(data) == "f32") return {model_from_checkpoint<float>(data), groups, min_confidence};
  return {model_from_checkpoint<double>(data), groups, min_confidence};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Engagement regression with multi-task (MSE + triplet) Bi-LSTM training"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic OpenFace-format dataset");
  std::string synth_out;
  synth::GeneratorOptions gen;
  std::vector<double> class_probs(synth::kDefaultClassProbs.begin(), synth::kDefaultClassProbs.end());
  std::optional<std::uint64_t> synth_seed;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--samples", gen.num_samples, "Number of samples")->capture_default_str();
  synth_cmd->add_option("--frames", gen.frames, "Frames per sample (>= 100)")->capture_default_str();
  synth_cmd->add_option("--noise", gen.noise, "Noise sigma")->capture_default_str();
  synth_cmd->add_option("--class-probs", class_probs, "Probabilities of raw classes 0..3")
      ->expected(4)
      ->delimiter(',');
  synth_cmd->add_option("--seed", synth_seed, "Random seed (falls back to $EDMTT_SEED)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes model.ckpt and train_log.csv");
  DataFlags train_data;
  ModelFlags train_model;
  std::string train_out;
  train_data.attach(train_cmd);
  train_model.attach(train_cmd);
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "MSE and per-class prediction statistics");
  std::string eval_ckpt, eval_features, eval_labels, eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--features-dir", eval_features, "Directory of OpenFace CSVs")->required();
  eval_cmd->add_option("--labels", eval_labels, "Labels CSV")->required();
  eval_cmd->add_option("--out", eval_out, "Report path (JSON); standard output when omitted");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Engagement level of one OpenFace CSV");
  std::string predict_ckpt, predict_csv;
  predict_cmd->add_option("--checkpoint", predict_ckpt, "Model checkpoint")->required();
  predict_cmd->add_option("--csv", predict_csv, "OpenFace CSV of one video")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Feature-group ablation table (12 rows)");
  DataFlags ablate_data;
  ModelFlags ablate_model;
  std::string ablate_out;
  ablate_data.attach(ablate_cmd);
  ablate_model.attach(ablate_cmd);
  ablate_cmd->add_option("--out", ablate_out, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) {
      std::copy(class_probs.begin(), class_probs.end(), gen.class_probs.begin());
      gen.seed = synth_seed.value_or(0);
      if (!synth_seed) {
        if (const char* env = std::getenv("EDMTT_SEED"); env != nullptr && *env != '\0')
          gen.seed = std::stoull(env);
      }
      const auto labels = synth::write_dataset(synth::generate(gen), synth_out);
      std::cout << "wrote " << labels.size() << " samples to " << synth_out << '\n';
      return kOk;
    }
    if (*train_cmd) {
      return train_model.precision == "double"
                 ? run_train<double>(train_data, train_model, train_out)
                 : run_train<float>(train_data, train_model, train_out);
    }
    if (*eval_cmd) {
      const auto loaded = load_any(eval_ckpt);
      const auto labels = read_labels_csv(eval_labels);
      const EvalReport report = std::visit(
          [&](const auto& model) {
            const auto seqs =
                load_labelled_sequences(eval_features, labels, loaded.groups, loaded.min_confidence);
            const auto data = aggregate_all(seqs, model.config().window_count);
            return evaluate(model, data);
          },
          loaded.model);
      const std::string text = nlohmann::json(report).dump(2);
      if (eval_out.empty()) {
        std::cout << text << '\n';
      } else {
        std::ofstream out(eval_out);
        require(static_cast<bool>(out), ErrorKind::Io, "cannot write report " + eval_out);
        out << text << '\n';
      }
      return kOk;
    }
    if (*predict_cmd) {
      const auto loaded = load_any(predict_ckpt);
      const double value = std::visit(
          [&](const auto& model) {
            const auto seq = parse_openface_csv(predict_csv, loaded.groups, loaded.min_confidence);
            const std::vector<AggregatedSequence> batch = {
                aggregate_windows(seq, model.config().window_count)};
            return model.predict_engagement(batch).front();
          },
          loaded.model);
      std::printf("%.6f\n", value);
      return kOk;
    }
    if (*ablate_cmd) {
      ModelConfig base = ablate_model.resolve(GroupSet::all());
      const PipelineInputs inputs = ablate_data.resolve(ablate_model.min_confidence, base.seed);
      auto on_row = [](const AblationRow& r) {
        std::fprintf(stderr, "%-24s val_mse %.5f\n", r.groups.to_string().c_str(), r.val_mse);
      };
      const auto& masks = ablation_masks();
      const auto rows = ablate_model.precision == "double"
                            ? ablate<double>(masks, inputs, base, on_row)
                            : ablate<float>(masks, inputs, base, on_row);
      write_ablation_csv(rows, ablate_out);
      std::cout << "wrote " << rows.size() << " rows to " << ablate_out << '\n';
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

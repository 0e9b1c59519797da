// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "edmtt/aggregate.hpp"
#include "edmtt/checkpoint.hpp"
#include "edmtt/config.hpp"
#include "edmtt/error.hpp"
#include "edmtt/features.hpp"
#include "edmtt/loss.hpp"
#include "edmtt/model.hpp"
#include "edmtt/optimizer.hpp"
#include "edmtt/random.hpp"
#include "edmtt/sampler.hpp"

namespace edmtt {

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double train_triplet = 0.0;
  double train_total = 0.0;
  double val_mse = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {r.epoch, r.train_mse, r.train_triplet, r.train_total, r.val_mse};
}
inline void from_json(const nlohmann::json& j, EpochRecord& r) {
  r = {j.at(0).get<int>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>(),
       j.at(4).get<double>()};
}

inline void write_training_log_csv(std::span<const EpochRecord> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write training log " + path.string());
  out << "epoch,train_mse,train_triplet,train_total,val_mse\n";
  out.precision(17);
  for (const auto& r : log)
    out << r.epoch << ',' << r.train_mse << ',' << r.train_triplet << ',' << r.train_total << ','
        << r.val_mse << '\n';
}

inline std::vector<double> labels_of(std::span<const AggregatedSequence> data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    require(s.label.has_value(), ErrorKind::InvalidArgument, s.sample_id + ": sample has no label");
    out.push_back(*s.label);
  }
  return out;
}

inline std::vector<int> raw_classes_of(std::span<const AggregatedSequence> data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (double l : labels_of(data)) out.push_back(raw_class_of(l));
  return out;
}

template <typename Scalar>
struct ObjectiveResult {
  LossBreakdown loss;
  std::array<typename EdmttModel<Scalar>::Pass, 3> branches;  // anchor, positive, negative

  const typename EdmttModel<Scalar>::Pass& anchor_pass() const { return branches[0]; }
};

/// Combined loss of one triplet batch: MSE of the anchor predictions (or all
/// branches when configured) plus triplet_weight x triplet loss of the three
/// embeddings. Each branch is a separate, identically shaped pass through the
/// shared parameters; all three use the anchor normalisation statistics. When
/// `grad` is given the gradient is accumulated into it.
template <typename Scalar>
ObjectiveResult<Scalar> compute_objective(const EdmttModel<Scalar>& model,
                                          std::span<const AggregatedSequence> data,
                                          const TripletBatch& batch, Mode mode,
                                          VectorX<Scalar>* grad = nullptr) {
  using Model = EdmttModel<Scalar>;
  using Matrix = MatrixX<Scalar>;
  const auto size = static_cast<Eigen::Index>(batch.size());
  require(size > 0, ErrorKind::EmptyBatch, "empty triplet batch");
  const ModelConfig& config = model.config();

  const std::array<const std::vector<std::size_t>*, 3> indices = {&batch.anchor, &batch.positive,
                                                                   &batch.negative};
  const std::array<const std::vector<double>*, 3> labels = {
      &batch.anchor_labels, &batch.positive_labels, &batch.negative_labels};
  ObjectiveResult<Scalar> result;
  typename Model::NormStats stats;
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<const Eigen::MatrixXd*> inputs;
    inputs.reserve(batch.size());
    for (std::size_t i : *indices[b]) inputs.push_back(&data[i].values);
    result.branches[b] = model.forward(inputs, mode, b == 0 ? nullptr : &stats);
    if (b == 0) {
      stats = {result.branches[0].stat_mean, result.branches[0].stat_var, result.branches[0].stat_count};
    }
  }

  const std::size_t scored_branches = config.mse_on_all_branches ? 3 : 1;
  std::vector<double> targets, predicted;
  for (std::size_t b = 0; b < scored_branches; ++b) {
    targets.insert(targets.end(), labels[b]->begin(), labels[b]->end());
    for (Eigen::Index i = 0; i < size; ++i)
      predicted.push_back(static_cast<double>(result.branches[b].prediction(i)));
  }
  const double mse = mse_loss(predicted, targets);

  auto triplet = triplet_loss_with_gradient<Scalar>(
      result.branches[0].embedding, result.branches[1].embedding, result.branches[2].embedding,
      config.margin);
  result.loss = combined_loss(mse, triplet.loss, config.triplet_weight, config.margin);

  if (grad != nullptr) {
    const auto weight = static_cast<Scalar>(config.triplet_weight);
    const std::array<const Matrix*, 3> d_triplet = {&triplet.d_anchor, &triplet.d_positive,
                                                    &triplet.d_negative};
    const auto scored = static_cast<double>(targets.size());
    for (std::size_t b = 0; b < 3; ++b) {
      typename Model::RowVector d_pred = Model::RowVector::Zero(size);
      if (b < scored_branches) {
        for (Eigen::Index i = 0; i < size; ++i) {
          const auto k = b * batch.size() + static_cast<std::size_t>(i);
          d_pred(i) = static_cast<Scalar>(2.0 * (predicted[k] - targets[k]) / scored);
        }
      }
      const Matrix d_emb = weight * *d_triplet[b];
      model.backward(result.branches[b], d_pred, d_emb, *grad);
    }
  }
  return result;
}

/// Inference-mode MSE over a labelled set.
template <typename Scalar>
double validation_mse(const EdmttModel<Scalar>& model, std::span<const AggregatedSequence> data) {
  require(!data.empty(), ErrorKind::EmptyDataset, "validation set is empty");
  const auto predicted = model.predict_engagement(data);
  const auto targets = labels_of(data);
  return mse_loss(predicted, targets);
}

struct TrainOptions {
  // Where periodic and best-validation checkpoints go; empty disables them.
  std::filesystem::path checkpoint_dir;
  // Training-state checkpoint to continue from.
  std::optional<std::filesystem::path> resume_from;
  // Stop after this epoch (exclusive upper bound), e.g. to simulate an interruption.
  std::optional<int> stop_after_epochs;
  std::function<void(const EpochRecord&)> on_epoch;
  nlohmann::json metadata = nlohmann::json::object();
};

template <typename Scalar>
struct TrainResult {
  EdmttModel<Scalar> model;  // best validation MSE
  std::vector<EpochRecord> log;
  int best_epoch = -1;
  double best_val_mse = std::numeric_limits<double>::infinity();
};

inline constexpr const char* kBestCheckpointName = "best.ckpt";
inline constexpr const char* kStateCheckpointName = "state.ckpt";

namespace detail {

// Seeds of the two random streams: epoch order and triplet partners.
inline std::uint64_t epoch_stream_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 1; }
inline std::uint64_t triplet_stream_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 2; }

}  // namespace detail

/// Full training state: current parameters, optimiser moments, random
/// streams, log and the best model so far.
template <typename Scalar>
void save_training_state(const std::filesystem::path& path, const EdmttModel<Scalar>& model,
                         const Adam<Scalar>& adam, const Random& epoch_rng,
                         const Random& triplet_rng, const TrainResult<Scalar>& progress,
                         int next_epoch, const nlohmann::json& metadata) {
  CheckpointData data;
  append_model_arrays(model, data);
  data.arrays.push_back(make_array<Scalar>("adam.first_moment", adam.first_moment()));
  data.arrays.push_back(make_array<Scalar>("adam.second_moment", adam.second_moment()));
  CheckpointData best;
  append_model_arrays(progress.model, best);
  for (auto& a : best.arrays) {
    a.name = "best." + a.name;
    data.arrays.push_back(std::move(a));
  }
  data.metadata = metadata;
  data.metadata["training_state"] = {{"next_epoch", next_epoch},
                                     {"adam_steps", adam.steps()},
                                     {"epoch_rng", epoch_rng.state()},
                                     {"triplet_rng", triplet_rng.state()},
                                     {"best_epoch", progress.best_epoch},
                                     {"best_val_mse", progress.best_val_mse},
                                     {"log", progress.log}};
  write_checkpoint(path, data);
}

template <typename Scalar>
TrainResult<Scalar> train(std::span<const AggregatedSequence> train_set,
                          std::span<const AggregatedSequence> val_set, const ModelConfig& config,
                          const TrainOptions& options = {}) {
  config.validate();
  require(!train_set.empty(), ErrorKind::EmptyDataset, "training set is empty");
  require(!val_set.empty(), ErrorKind::EmptyDataset, "validation set is empty");
  const std::vector<double> labels = labels_of(train_set);
  const std::vector<int> raw_classes = raw_classes_of(train_set);
  {
    const ClassIndex classes(labels);
    require(!classes.members(EngagementClass::Low).empty() &&
                !classes.members(EngagementClass::High).empty(),
            ErrorKind::DegenerateClassDistribution,
            "training set needs samples on both sides of 0.5 for triplet sampling");
  }

  EdmttModel<Scalar> model = EdmttModel<Scalar>::initialize(config);
  Adam<Scalar> adam(model.parameters().size(), config.learning_rate);
  Random epoch_rng(detail::epoch_stream_seed(config.seed));
  Random triplet_rng(detail::triplet_stream_seed(config.seed));
  TrainResult<Scalar> result{model, {}, -1, std::numeric_limits<double>::infinity()};
  int first_epoch = 0;

  if (options.resume_from) {
    const CheckpointData state = read_checkpoint(*options.resume_from);
    require(state.metadata.contains("training_state"), ErrorKind::CorruptCheckpoint,
            options.resume_from->string() + ": not a training-state checkpoint");
    ModelConfig stored;
    from_json(state.config, stored);
    require(stored == config, ErrorKind::InvalidArgument,
            options.resume_from->string() + ": config differs from the requested run");
    model = model_from_checkpoint<Scalar>(state);
    adam.first_moment() = array_values<Scalar>(state.array("adam.first_moment")).col(0);
    adam.second_moment() = array_values<Scalar>(state.array("adam.second_moment")).col(0);
    const auto& meta = state.metadata.at("training_state");
    adam.set_steps(meta.at("adam_steps").get<std::uint64_t>());
    epoch_rng.restore(meta.at("epoch_rng").get<std::string>());
    triplet_rng.restore(meta.at("triplet_rng").get<std::string>());
    first_epoch = meta.at("next_epoch").get<int>();
    result.best_epoch = meta.at("best_epoch").get<int>();
    result.best_val_mse = meta.at("best_val_mse").get<double>();
    result.log = meta.at("log").get<std::vector<EpochRecord>>();
    CheckpointData best;
    best.config = state.config;
    for (const auto& a : state.arrays) {
      if (a.name.starts_with("best.")) {
        best.arrays.push_back(a);
        best.arrays.back().name = a.name.substr(5);
      }
    }
    result.model = model_from_checkpoint<Scalar>(best);
  }

  const bool checkpointing = !options.checkpoint_dir.empty();
  if (checkpointing) std::filesystem::create_directories(options.checkpoint_dir);
  const int last_epoch = options.stop_after_epochs
                             ? std::min(config.epochs, *options.stop_after_epochs)
                             : config.epochs;

  VectorX<Scalar> grad(model.parameters().size());
  for (int epoch = first_epoch; epoch < last_epoch; ++epoch) {
    const auto order = balanced_epoch_indices(raw_classes, epoch_rng);
    double sum_mse = 0.0, sum_triplet = 0.0, sum_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> anchors(order.data() + start, end - start);
      const TripletBatch batch = build_triplet_batch(anchors, labels, triplet_rng);
      grad.setZero();
      auto step = compute_objective(model, train_set, batch, Mode::Train, &grad);
      require(grad.allFinite(), ErrorKind::NonFiniteActivation,
              "non-finite gradient at epoch " + std::to_string(epoch));
      model.update_running_statistics(step.anchor_pass());
      clip_global_norm(grad, config.grad_clip_norm);
      adam.step(model.parameters(), grad);
      const auto weight = static_cast<double>(anchors.size());
      sum_mse += weight * step.loss.mse;
      sum_triplet += weight * step.loss.triplet;
      sum_total += weight * step.loss.total;
    }
    const auto count = static_cast<double>(order.size());
    EpochRecord record{epoch, sum_mse / count, sum_triplet / count, sum_total / count,
                       validation_mse(model, val_set)};
    result.log.push_back(record);
    if (options.on_epoch) options.on_epoch(record);

    if (record.val_mse < result.best_val_mse) {
      result.best_val_mse = record.val_mse;
      result.best_epoch = epoch;
      result.model = model;
      if (checkpointing)
        save_model(model, options.checkpoint_dir / kBestCheckpointName, options.metadata);
    }
    const bool periodic = config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0;
    const bool final_epoch = epoch + 1 == last_epoch;
    if (checkpointing && (periodic || final_epoch)) {
      save_training_state(options.checkpoint_dir / kStateCheckpointName, model, adam, epoch_rng,
                          triplet_rng, result, epoch + 1, options.metadata);
    }
  }
  return result;
}

/// Architectural search space; defaults are the published grid.
struct SearchSpace {
  std::vector<int> layers = {1, 2, 3};
  std::vector<int> hidden = {128, 256, 512, 1024};
  std::vector<int> fc1 = {256, 128, 64};
  std::vector<int> fc2 = {32, 16, 8};

  std::size_t size() const { return layers.size() * hidden.size() * fc1.size() * fc2.size(); }

  /// The i-th point of the product space, last axis fastest.
  ModelConfig point(std::size_t i, ModelConfig base) const {
    base.fc_sizes[1] = fc2[i % fc2.size()];
    i /= fc2.size();
    base.fc_sizes[0] = fc1[i % fc1.size()];
    i /= fc1.size();
    base.hidden_size = hidden[i % hidden.size()];
    i /= hidden.size();
    base.num_recurrent_layers = layers[i];
    return base;
  }
};

struct SearchTrial {
  ModelConfig config;
  double val_mse = 0.0;
};

/// `budget` distinct grid points chosen uniformly without replacement.
inline std::vector<ModelConfig> sample_search_configs(const SearchSpace& space, std::size_t budget,
                                                      const ModelConfig& base, std::uint64_t seed) {
  require(budget >= 1, ErrorKind::InvalidArgument, "search budget must be >= 1");
  require(budget <= space.size(), ErrorKind::BudgetExceedsSpace,
          "budget " + std::to_string(budget) + " exceeds the " + std::to_string(space.size()) +
              " distinct configurations");
  std::vector<std::size_t> points(space.size());
  for (std::size_t i = 0; i < points.size(); ++i) points[i] = i;
  Random rng(seed);
  rng.shuffle(points);
  std::vector<ModelConfig> out;
  out.reserve(budget);
  for (std::size_t k = 0; k < budget; ++k) {
    ModelConfig c = space.point(points[k], base);
    c.seed = rng.derive_seed();
    out.push_back(c);
  }
  return out;
}

/// Trains every sampled configuration and ranks them by best validation MSE.
template <typename Scalar>
std::vector<SearchTrial> random_search(const SearchSpace& space, std::size_t budget,
                                       std::span<const AggregatedSequence> train_set,
                                       std::span<const AggregatedSequence> val_set,
                                       const ModelConfig& base, std::uint64_t seed) {
  std::vector<SearchTrial> trials;
  for (const auto& config : sample_search_configs(space, budget, base, seed)) {
    const auto run = train<Scalar>(train_set, val_set, config);
    trials.push_back({config, run.best_val_mse});
  }
  std::stable_sort(trials.begin(), trials.end(),
                   [](const SearchTrial& a, const SearchTrial& b) { return a.val_mse < b.val_mse; });
  return trials;
}

}  // namespace edmtt

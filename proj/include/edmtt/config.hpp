// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "edmtt/error.hpp"

namespace edmtt {

/// Architecture and optimisation settings. Defaults are the published
/// configuration (2 x Bi-LSTM 1024, FC 64/32, adam 5e-5, 500 epochs, batch 16).
struct ModelConfig {
  int num_recurrent_layers = 2;
  int hidden_size = 1024;
  std::array<int, 2> fc_sizes = {64, 32};
  int feature_dim = 0;  // b, set from the data
  int window_count = 100;
  double margin = 1.0;
  double triplet_weight = 1.0;
  double learning_rate = 5e-5;
  int epochs = 500;
  int batch_size = 16;
  std::uint64_t seed = 0;
  // Regression loss over anchor predictions only (false) or all three branches.
  bool mse_on_all_branches = false;
  double grad_clip_norm = 5.0;
  int checkpoint_every = 50;

  int embedding_size() const { return 2 * hidden_size; }

  void validate() const {
    auto check = [](bool ok, const std::string& field, const std::string& why) {
      require(ok, ErrorKind::InvalidArgument, "config field '" + field + "' " + why);
    };
    check(num_recurrent_layers >= 1, "num_recurrent_layers", "must be >= 1");
    check(hidden_size >= 1, "hidden_size", "must be >= 1");
    check(fc_sizes[0] >= 1 && fc_sizes[1] >= 1, "fc_sizes", "entries must be >= 1");
    check(feature_dim >= 1, "feature_dim", "must be >= 1");
    check(window_count >= 1, "window_count", "must be >= 1");
    check(margin >= 0.0, "margin", "must be >= 0");
    check(triplet_weight >= 0.0, "triplet_weight", "must be >= 0");
    check(learning_rate > 0.0, "learning_rate", "must be > 0");
    check(epochs >= 1, "epochs", "must be >= 1");
    check(batch_size >= 1, "batch_size", "must be >= 1");
    check(grad_clip_norm >= 0.0, "grad_clip_norm", "must be >= 0 (0 disables clipping)");
    check(checkpoint_every >= 0, "checkpoint_every", "must be >= 0 (0 disables)");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"num_recurrent_layers", c.num_recurrent_layers},
                     {"hidden_size", c.hidden_size},
                     {"fc_sizes", c.fc_sizes},
                     {"feature_dim", c.feature_dim},
                     {"window_count", c.window_count},
                     {"margin", c.margin},
                     {"triplet_weight", c.triplet_weight},
                     {"learning_rate", c.learning_rate},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"mse_on_all_branches", c.mse_on_all_branches},
                     {"grad_clip_norm", c.grad_clip_norm},
                     {"checkpoint_every", c.checkpoint_every}};
}

/// Missing keys keep their current value, so a config file may be partial.
/// Unknown keys are rejected to catch typos.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  require(j.is_object(), ErrorKind::InvalidArgument, "config must be a JSON object");
  nlohmann::json known;
  to_json(known, c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(known.contains(it.key()), ErrorKind::InvalidArgument,
            "unknown config field '" + it.key() + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("num_recurrent_layers", c.num_recurrent_layers);
    get("hidden_size", c.hidden_size);
    get("fc_sizes", c.fc_sizes);
    get("feature_dim", c.feature_dim);
    get("window_count", c.window_count);
    get("margin", c.margin);
    get("triplet_weight", c.triplet_weight);
    get("learning_rate", c.learning_rate);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    get("mse_on_all_branches", c.mse_on_all_branches);
    get("grad_clip_norm", c.grad_clip_norm);
    get("checkpoint_every", c.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
}

}  // namespace edmtt

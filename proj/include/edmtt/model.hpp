// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edmtt/aggregate.hpp"
#include "edmtt/config.hpp"
#include "edmtt/error.hpp"
#include "edmtt/parameters.hpp"
#include "edmtt/random.hpp"

namespace edmtt {

enum class Mode { Train, Inference };

/// Siamese sequence model: per-channel batch normalisation of the window
/// statistics, a stack of bidirectional LSTM layers whose last-layer final
/// states form the embedding, and a FC(fc1)-ReLU-FC(fc2)-ReLU-FC(1)-sigmoid
/// regression head. One parameter set serves every branch.
///
/// All trainable tensors live in one flat vector described by manifest();
/// gradients use the same layout. Gate rows of every LSTM weight are ordered
/// input, forget, cell candidate, output.
template <typename Scalar>
class EdmttModel {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  static constexpr double kNormEpsilon = 1e-5;
  static constexpr double kNormMomentum = 0.1;

  struct DirectionTensors {
    std::size_t w_input;
    std::size_t w_hidden;
    std::size_t bias;
  };

  explicit EdmttModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const int b = config_.feature_dim;
    const int h = config_.hidden_size;
    norm_gamma_ = manifest_.add("norm.gamma", b, 1);
    norm_beta_ = manifest_.add("norm.beta", b, 1);
    for (int l = 0; l < config_.num_recurrent_layers; ++l) {
      const int in = l == 0 ? b : 2 * h;
      std::array<DirectionTensors, 2> dirs{};
      for (int d = 0; d < 2; ++d) {
        const std::string prefix = "lstm." + std::to_string(l) + (d == 0 ? ".fwd" : ".bwd");
        dirs[d].w_input = manifest_.add(prefix + ".w_input", 4 * h, in);
        dirs[d].w_hidden = manifest_.add(prefix + ".w_hidden", 4 * h, h);
        dirs[d].bias = manifest_.add(prefix + ".bias", 4 * h, 1);
      }
      lstm_.push_back(dirs);
    }
    fc1_w_ = manifest_.add("head.fc1.weight", config_.fc_sizes[0], 2 * h);
    fc1_b_ = manifest_.add("head.fc1.bias", config_.fc_sizes[0], 1);
    fc2_w_ = manifest_.add("head.fc2.weight", config_.fc_sizes[1], config_.fc_sizes[0]);
    fc2_b_ = manifest_.add("head.fc2.bias", config_.fc_sizes[1], 1);
    out_w_ = manifest_.add("head.out.weight", 1, config_.fc_sizes[1]);
    out_b_ = manifest_.add("head.out.bias", 1, 1);
    params_ = Vector::Zero(manifest_.total_size());
    running_mean_ = Vector::Zero(b);
    running_var_ = Vector::Ones(b);
  }

  /// Seeded fan-in uniform initialisation: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// biases and beta zero, gamma one.
  static EdmttModel initialize(const ModelConfig& config) {
    EdmttModel model(config);
    Random rng(config.seed);
    for (const auto& info : model.manifest_.entries()) {
      auto view = tensor_view(model.params_, info);
      if (info.name == "norm.gamma") {
        view.setOnes();
      } else if (info.cols > 1 || info.name.ends_with("weight")) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(info.cols));
        for (Eigen::Index j = 0; j < info.cols; ++j)
          for (Eigen::Index i = 0; i < info.rows; ++i)
            view(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
      } else {
        view.setZero();
      }
    }
    return model;
  }

  const ModelConfig& config() const { return config_; }
  const Manifest& manifest() const { return manifest_; }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  Vector& running_mean() { return running_mean_; }
  const Vector& running_mean() const { return running_mean_; }
  Vector& running_var() { return running_var_; }
  const Vector& running_var() const { return running_var_; }

  struct DirectionTape {
    Matrix gates;      // 4H x TB, activated
    Matrix cells;      // H x TB
    Matrix cell_tanh;  // H x TB
  };

  struct LayerTape {
    std::array<DirectionTape, 2> dirs;
    Matrix output;  // 2H x TB: forward states on top, backward below
  };

  /// Everything the backward pass needs. Column t*B + s holds step t of sample s.
  struct Pass {
    Mode mode = Mode::Inference;
    Eigen::Index batch = 0;
    Eigen::Index steps = 0;
    Matrix raw;         // b x TB, unnormalised
    Matrix normalized;  // b x TB, (x - mean) / sqrt(var + eps) before the affine part
    Matrix input;       // b x TB, gamma * normalized + beta
    Vector stat_mean;   // statistics used (batch in Train, running in Inference)
    Vector stat_var;
    Eigen::Index stat_count = 0;
    std::vector<LayerTape> layers;
    Matrix embedding;  // 2H x B
    Matrix fc1_pre, fc1_act, fc2_pre, fc2_act;
    RowVector prediction;  // 1 x B, in (0,1)
  };

  struct NormStats {
    Vector mean;
    Vector var;
    Eigen::Index count = 0;
  };

  /// In Train mode the normalisation statistics are those of this batch,
  /// unless `shared` supplies them (the positive and negative branches reuse
  /// the anchor statistics, so a sample gets the same embedding whichever
  /// siamese branch it is in).
  Pass forward(std::span<const Eigen::MatrixXd* const> inputs, Mode mode,
               const NormStats* shared = nullptr) const {
    const Eigen::Index batch = static_cast<Eigen::Index>(inputs.size());
    require(batch > 0, ErrorKind::EmptyBatch, "forward pass on an empty batch");
    const Eigen::Index steps = config_.window_count;
    const Eigen::Index width = config_.feature_dim;
    const Eigen::Index hidden = config_.hidden_size;
    Pass pass;
    pass.mode = mode;
    pass.batch = batch;
    pass.steps = steps;

    pass.raw.resize(width, steps * batch);
    for (Eigen::Index s = 0; s < batch; ++s) {
      const Eigen::MatrixXd& x = *inputs[static_cast<std::size_t>(s)];
      require(x.rows() == steps && x.cols() == width, ErrorKind::ShapeMismatch,
              "input " + std::to_string(s) + " has shape " + std::to_string(x.rows()) + "x" +
                  std::to_string(x.cols()) + ", model expects " + std::to_string(steps) + "x" +
                  std::to_string(width));
      for (Eigen::Index t = 0; t < steps; ++t)
        pass.raw.col(t * batch + s) = x.row(t).transpose().template cast<Scalar>();
    }

    if (mode == Mode::Train && shared != nullptr) {
      require(shared->mean.size() == width && shared->var.size() == width, ErrorKind::ShapeMismatch,
              "shared normalisation statistics have the wrong width");
      pass.stat_mean = shared->mean;
      pass.stat_var = shared->var;
      pass.stat_count = shared->count;
    } else if (mode == Mode::Train) {
      const Eigen::Index used = batch;
      pass.stat_count = used * steps;
      pass.stat_mean = Vector::Zero(width);
      for (Eigen::Index t = 0; t < steps; ++t)
        pass.stat_mean += pass.raw.block(0, t * batch, width, used).rowwise().sum();
      pass.stat_mean /= static_cast<Scalar>(pass.stat_count);
      pass.stat_var = Vector::Zero(width);
      for (Eigen::Index t = 0; t < steps; ++t)
        pass.stat_var += (pass.raw.block(0, t * batch, width, used).colwise() - pass.stat_mean)
                             .array().square().rowwise().sum().matrix();
      pass.stat_var /= static_cast<Scalar>(pass.stat_count);
    } else {
      pass.stat_mean = running_mean_;
      pass.stat_var = running_var_;
    }
    const Vector inv_std =
        (pass.stat_var.array() + static_cast<Scalar>(kNormEpsilon)).rsqrt().matrix();
    pass.normalized = (pass.raw.colwise() - pass.stat_mean).array().colwise() * inv_std.array();
    const auto gamma = tensor_view(params_, manifest_[norm_gamma_]);
    const auto beta = tensor_view(params_, manifest_[norm_beta_]);
    pass.input = (pass.normalized.array().colwise() * gamma.col(0).array()).matrix();
    pass.input.colwise() += beta.col(0);

    pass.layers.resize(lstm_.size());
    for (std::size_t l = 0; l < lstm_.size(); ++l) {
      const Matrix& layer_in = l == 0 ? pass.input : pass.layers[l - 1].output;
      LayerTape& tape = pass.layers[l];
      tape.output.resize(2 * hidden, steps * batch);
      for (int d = 0; d < 2; ++d) {
        run_direction(lstm_[l][d], layer_in, batch, steps, d == 1, tape.dirs[d]);
        for (Eigen::Index t = 0; t < steps; ++t) {
          tape.output.block(d * hidden, t * batch, hidden, batch) =
              tape.dirs[d].gates.block(3 * hidden, t * batch, hidden, batch).cwiseProduct(
                  tape.dirs[d].cell_tanh.middleCols(t * batch, batch));
        }
      }
    }

    const Matrix& top = pass.layers.back().output;
    pass.embedding.resize(2 * hidden, batch);
    pass.embedding.topRows(hidden) = top.block(0, (steps - 1) * batch, hidden, batch);
    pass.embedding.bottomRows(hidden) = top.block(hidden, 0, hidden, batch);

    pass.fc1_pre = tensor_view(params_, manifest_[fc1_w_]) * pass.embedding;
    pass.fc1_pre.colwise() += tensor_view(params_, manifest_[fc1_b_]).col(0);
    pass.fc1_act = pass.fc1_pre.cwiseMax(Scalar(0));
    pass.fc2_pre = tensor_view(params_, manifest_[fc2_w_]) * pass.fc1_act;
    pass.fc2_pre.colwise() += tensor_view(params_, manifest_[fc2_b_]).col(0);
    pass.fc2_act = pass.fc2_pre.cwiseMax(Scalar(0));
    RowVector logits = tensor_view(params_, manifest_[out_w_]) * pass.fc2_act;
    logits.array() += tensor_view(params_, manifest_[out_b_])(0, 0);
    pass.prediction = sigmoid(logits.array()).matrix();

    require(pass.embedding.allFinite() && pass.prediction.allFinite(),
            ErrorKind::NonFiniteActivation, "non-finite embedding or prediction (diverged?)");
    return pass;
  }

  /// Accumulates into `grad` the gradient of a scalar loss whose partial
  /// derivatives w.r.t. the predictions and embeddings of `pass` are given.
  void backward(const Pass& pass, const RowVector& d_prediction, const Matrix& d_embedding,
                Vector& grad) const {
    const Eigen::Index batch = pass.batch;
    const Eigen::Index steps = pass.steps;
    const Eigen::Index hidden = config_.hidden_size;
    require(grad.size() == params_.size(), ErrorKind::DimensionMismatch,
            "gradient vector has the wrong size");
    require(d_prediction.cols() == batch && d_embedding.cols() == batch &&
                d_embedding.rows() == 2 * hidden,
            ErrorKind::DimensionMismatch, "upstream gradient shape does not match the pass");

    // Head.
    const RowVector d_logit =
        (d_prediction.array() * pass.prediction.array() * (Scalar(1) - pass.prediction.array()))
            .matrix();
    tensor_view(grad, manifest_[out_w_]).noalias() += d_logit * pass.fc2_act.transpose();
    tensor_view(grad, manifest_[out_b_])(0, 0) += d_logit.sum();
    Matrix d_fc2 = tensor_view(params_, manifest_[out_w_]).transpose() * d_logit;
    d_fc2.array() *= (pass.fc2_pre.array() > Scalar(0)).template cast<Scalar>();
    tensor_view(grad, manifest_[fc2_w_]).noalias() += d_fc2 * pass.fc1_act.transpose();
    tensor_view(grad, manifest_[fc2_b_]).col(0) += d_fc2.rowwise().sum();
    Matrix d_fc1 = tensor_view(params_, manifest_[fc2_w_]).transpose() * d_fc2;
    d_fc1.array() *= (pass.fc1_pre.array() > Scalar(0)).template cast<Scalar>();
    tensor_view(grad, manifest_[fc1_w_]).noalias() += d_fc1 * pass.embedding.transpose();
    tensor_view(grad, manifest_[fc1_b_]).col(0) += d_fc1.rowwise().sum();
    Matrix d_emb = d_embedding;
    d_emb.noalias() += tensor_view(params_, manifest_[fc1_w_]).transpose() * d_fc1;

    // Recurrent stack, top layer first.
    Matrix d_out = Matrix::Zero(2 * hidden, steps * batch);
    d_out.block(0, (steps - 1) * batch, hidden, batch) = d_emb.topRows(hidden);
    d_out.block(hidden, 0, hidden, batch) = d_emb.bottomRows(hidden);
    for (std::size_t l = lstm_.size(); l-- > 0;) {
      const Matrix& layer_in = l == 0 ? pass.input : pass.layers[l - 1].output;
      Matrix d_in = Matrix::Zero(layer_in.rows(), layer_in.cols());
      for (int d = 0; d < 2; ++d) {
        backprop_direction(lstm_[l][d], pass.layers[l].dirs[d], layer_in,
                           d_out.middleRows(d * hidden, hidden), batch, steps, d == 1, d_in, grad);
      }
      d_out = std::move(d_in);
    }

    // Normalisation affine part; the statistics depend on data only.
    tensor_view(grad, manifest_[norm_gamma_]).col(0) +=
        d_out.cwiseProduct(pass.normalized).rowwise().sum();
    tensor_view(grad, manifest_[norm_beta_]).col(0) += d_out.rowwise().sum();
  }

  /// Folds the batch statistics of a training pass into the running estimates
  /// (exponential average; the variance estimate is unbiased).
  void update_running_statistics(const Pass& pass) {
    require(pass.mode == Mode::Train, ErrorKind::InvalidArgument,
            "running statistics can only be updated from a training pass");
    const auto n = static_cast<Scalar>(pass.stat_count);
    const Scalar correction = n > Scalar(1) ? n / (n - Scalar(1)) : Scalar(1);
    const auto momentum = static_cast<Scalar>(kNormMomentum);
    running_mean_ = (Scalar(1) - momentum) * running_mean_ + momentum * pass.stat_mean;
    running_var_ = (Scalar(1) - momentum) * running_var_ + momentum * correction * pass.stat_var;
  }

  /// Inference-mode embeddings (length 2 x hidden_size each).
  std::vector<Vector> embed(std::span<const AggregatedSequence> batch) const {
    std::vector<Vector> out;
    out.reserve(batch.size());
    for_chunks(batch, [&](const Pass& pass) {
      for (Eigen::Index s = 0; s < pass.batch; ++s) out.push_back(pass.embedding.col(s));
    });
    return out;
  }

  /// Inference-mode engagement predictions in (0,1), in input order.
  std::vector<double> predict_engagement(std::span<const AggregatedSequence> batch) const {
    std::vector<double> out;
    out.reserve(batch.size());
    for_chunks(batch, [&](const Pass& pass) {
      for (Eigen::Index s = 0; s < pass.batch; ++s)
        out.push_back(static_cast<double>(pass.prediction(s)));
    });
    return out;
  }

 private:
  static constexpr std::size_t kInferenceChunk = 64;

  template <typename Fn>
  void for_chunks(std::span<const AggregatedSequence> batch, Fn&& fn) const {
    for (std::size_t start = 0; start < batch.size(); start += kInferenceChunk) {
      const std::size_t end = std::min(batch.size(), start + kInferenceChunk);
      std::vector<const Eigen::MatrixXd*> ptrs;
      for (std::size_t i = start; i < end; ++i) ptrs.push_back(&batch[i].values);
      fn(forward(ptrs, Mode::Inference));
    }
  }

  template <typename Derived>
  static auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
    return (Scalar(1) + (-x).exp()).inverse();
  }

  void run_direction(const DirectionTensors& t, const Matrix& input, Eigen::Index batch,
                     Eigen::Index steps, bool reverse, DirectionTape& tape) const {
    const Eigen::Index hidden = config_.hidden_size;
    const auto w_in = tensor_view(params_, manifest_[t.w_input]);
    const auto w_h = tensor_view(params_, manifest_[t.w_hidden]);
    const auto bias = tensor_view(params_, manifest_[t.bias]);
    tape.gates.noalias() = w_in * input;
    tape.gates.colwise() += bias.col(0);
    tape.cells.resize(hidden, steps * batch);
    tape.cell_tanh.resize(hidden, steps * batch);

    for (Eigen::Index k = 0; k < steps; ++k) {
      const Eigen::Index t_cur = reverse ? steps - 1 - k : k;
      const Eigen::Index t_prev = reverse ? t_cur + 1 : t_cur - 1;
      auto gates = tape.gates.middleCols(t_cur * batch, batch);
      if (k > 0) {
        const Matrix h_prev = tape.gates.block(3 * hidden, t_prev * batch, hidden, batch)
                                  .cwiseProduct(tape.cell_tanh.middleCols(t_prev * batch, batch));
        gates.noalias() += w_h * h_prev;
      }
      gates.topRows(2 * hidden) = sigmoid(gates.topRows(2 * hidden).array()).matrix();
      gates.middleRows(2 * hidden, hidden) = gates.middleRows(2 * hidden, hidden).array().tanh().matrix();
      gates.bottomRows(hidden) = sigmoid(gates.bottomRows(hidden).array()).matrix();

      auto cell = tape.cells.middleCols(t_cur * batch, batch);
      cell = gates.topRows(hidden).cwiseProduct(gates.middleRows(2 * hidden, hidden));
      if (k > 0)
        cell += gates.middleRows(hidden, hidden).cwiseProduct(tape.cells.middleCols(t_prev * batch, batch));
      tape.cell_tanh.middleCols(t_cur * batch, batch) = cell.array().tanh().matrix();
    }
  }

  template <typename UpstreamBlock>
  void backprop_direction(const DirectionTensors& t, const DirectionTape& tape, const Matrix& input,
                          const UpstreamBlock& d_hidden_out, Eigen::Index batch, Eigen::Index steps,
                          bool reverse, Matrix& d_input, Vector& grad) const {
    const Eigen::Index hidden = config_.hidden_size;
    const auto w_in = tensor_view(params_, manifest_[t.w_input]);
    const auto w_h = tensor_view(params_, manifest_[t.w_hidden]);

    Matrix d_gates(4 * hidden, steps * batch);
    Matrix h_prev_all = Matrix::Zero(hidden, steps * batch);
    Matrix dh_next = Matrix::Zero(hidden, batch);
    Matrix dc_next = Matrix::Zero(hidden, batch);
    for (Eigen::Index k = steps; k-- > 0;) {
      const Eigen::Index t_cur = reverse ? steps - 1 - k : k;
      const Eigen::Index t_prev = reverse ? t_cur + 1 : t_cur - 1;
      const auto gates = tape.gates.middleCols(t_cur * batch, batch);
      const auto in_gate = gates.topRows(hidden).array();
      const auto forget_gate = gates.middleRows(hidden, hidden).array();
      const auto candidate = gates.middleRows(2 * hidden, hidden).array();
      const auto out_gate = gates.bottomRows(hidden).array();
      const auto tc = tape.cell_tanh.middleCols(t_cur * batch, batch).array();

      const Matrix dh = d_hidden_out.middleCols(t_cur * batch, batch) + dh_next;
      const Matrix dc =
          (dh.array() * out_gate * (Scalar(1) - tc.square())).matrix() + dc_next;

      auto dg = d_gates.middleCols(t_cur * batch, batch);
      dg.topRows(hidden) = (dc.array() * candidate * in_gate * (Scalar(1) - in_gate)).matrix();
      if (k > 0) {
        const auto c_prev = tape.cells.middleCols(t_prev * batch, batch).array();
        dg.middleRows(hidden, hidden) =
            (dc.array() * c_prev * forget_gate * (Scalar(1) - forget_gate)).matrix();
        h_prev_all.middleCols(t_cur * batch, batch) =
            (tape.gates.block(3 * hidden, t_prev * batch, hidden, batch).array() *
             tape.cell_tanh.middleCols(t_prev * batch, batch).array())
                .matrix();
      } else {
        dg.middleRows(hidden, hidden).setZero();
      }
      dg.middleRows(2 * hidden, hidden) =
          (dc.array() * in_gate * (Scalar(1) - candidate.square())).matrix();
      dg.bottomRows(hidden) = (dh.array() * tc * out_gate * (Scalar(1) - out_gate)).matrix();

      dc_next = (dc.array() * forget_gate).matrix();
      dh_next.noalias() = w_h.transpose() * dg;
    }

    tensor_view(grad, manifest_[t.w_input]).noalias() += d_gates * input.transpose();
    tensor_view(grad, manifest_[t.w_hidden]).noalias() += d_gates * h_prev_all.transpose();
    tensor_view(grad, manifest_[t.bias]).col(0) += d_gates.rowwise().sum();
    d_input.noalias() += w_in.transpose() * d_gates;
  }

  ModelConfig config_;
  Manifest manifest_;
  Vector params_;
  Vector running_mean_;
  Vector running_var_;
  std::size_t norm_gamma_ = 0, norm_beta_ = 0;
  std::vector<std::array<DirectionTensors, 2>> lstm_;
  std::size_t fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0, out_w_ = 0, out_b_ = 0;
};

}  // namespace edmtt

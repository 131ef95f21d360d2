#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "story/corpus.hpp"
#include "story/fault.hpp"
#include "story/features.hpp"
#include "story/params.hpp"

namespace story {

/// One training story: its features and one encoded sentence per branch.
struct Example {
  SequenceFeatures features;
  std::vector<SentenceIds> sentences;
};

/// d(loss)/d(theta), shaped like the parameters it differentiates.
struct Gradients {
  ModelParams wrt;

  double global_norm() const;
};

/// Per-token mean negative log-likelihood over the batch. Throws empty_input
/// for an empty batch.
double loss(std::span<const Example> batch, const ModelParams& params);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Exact reverse-mode gradient of `loss`. Per-example work may run on up to
/// `workers` threads; the reduction always follows example order, so the
/// result is independent of the worker count.
LossAndGradients gradients(std::span<const Example> batch, const ModelParams& params,
                           BackwardFault fault = BackwardFault::none, std::size_t workers = 1);

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t iterations = 1000;
  std::optional<double> grad_clip;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double init_scale = 0.1;
};

/// Adam moments; untouched by SGD.
struct OptimizerState {
  std::size_t steps = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

/// One update in place. Gradients are first rescaled to global norm
/// `grad_clip` when they exceed it. Throws dimension_mismatch when the
/// gradients do not match the parameters.
void step(ModelParams& params, const Gradients& grads, const TrainConfig& config, OptimizerState& state);

/// Full-batch training from the current parameters. Returns the loss before
/// each update; `on_iteration(i, loss)` is called after each one.
std::vector<double> train(std::span<const Example> batch, ModelParams& params, const TrainConfig& config,
                          const std::function<void(std::size_t, double)>& on_iteration = {},
                          std::size_t workers = 1);

struct GradCheckConfig {
  ModelConfig model;
  std::uint64_t seed = 1;
  std::size_t stories = 2;
  std::size_t max_sentence_len = 4;
  double init_scale = 0.5;
  double epsilon = 1e-5;
  std::size_t max_coords_per_tensor = 2000;
  BackwardFault fault = BackwardFault::none;
};

/// The configuration used by the acceptance gate: H=E=D_l=4, D_g=6, M=3, V=7,
/// N=2, d_mid=d_att=4.
GradCheckConfig small_gradcheck_config(std::uint64_t seed);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares analytic gradients of a seeded random model and batch against
/// central differences, coordinate by coordinate. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const GradCheckConfig& config);

/// Random batch for tests and the gradient checker: gaussian features and
/// sentences of 1..max_len tokens (word ids or eos-terminated).
std::vector<Example> random_batch(const ModelConfig& config, std::size_t stories, std::size_t max_sentence_len,
                                  std::uint64_t seed);

// Checkpoint: "SLTM", u32 version=1, u32 D_g, D_l, M, H, E, V, N, d_mid,
// d_att, then every tensor as little-endian f64 in for_each_tensor order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::vector<char> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::vector<char>& bytes, const std::string& origin = "<memory>");

}  // namespace story

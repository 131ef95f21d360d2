#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "story/math.hpp"

namespace story {

/// Model dimensions. The nine sizes are persisted in checkpoints;
/// `global_context` is a run-time switch for the h0 ablation.
struct ModelConfig {
  std::size_t global_dim = 4096;  // D_g
  std::size_t local_dim = 512;    // D_l, channels per region
  std::size_t regions = 196;      // M
  std::size_t hidden = 512;       // H
  std::size_t embed = 512;        // E
  std::size_t vocab = 10000;      // V
  std::size_t branches = 5;       // N
  std::size_t mlp_dim = 512;      // hidden width of the h0 MLP
  std::size_t attention_dim = 512;
  bool global_context = true;

  bool operator==(const ModelConfig&) const = default;
};

/// Throws invalid_dimension if any size is zero or the vocabulary cannot
/// hold the four special tokens.
void validate(const ModelConfig& config);

/// h0 = init_proj * tanh(global_proj * G + global_bias)
struct EncoderParams {
  Matrix global_proj;  // mlp_dim x D_g
  Vector global_bias;  // mlp_dim
  Matrix init_proj;    // H x mlp_dim

  bool operator==(const EncoderParams&) const = default;
};

/// score_i = score * tanh(region_proj * L_i + hidden_proj * h + bias)
struct AttentionParams {
  Matrix region_proj;  // attention_dim x D_l
  Matrix hidden_proj;  // attention_dim x H
  Vector bias;         // attention_dim
  Matrix score;        // 1 x attention_dim

  bool operator==(const AttentionParams&) const = default;
};

/// Pre-activation of one LSTM gate: input * x + hidden * h + visual * v + bias.
struct GateParams {
  Matrix input;   // H x E
  Matrix hidden;  // H x H
  Matrix visual;  // H x D_l
  Vector bias;    // H

  bool operator==(const GateParams&) const = default;
};

struct DecoderParams {
  Matrix embedding;  // V x E
  GateParams input_gate;
  GateParams forget_gate;
  GateParams output_gate;
  GateParams candidate;
  Matrix out_proj;  // V x H
  Vector out_bias;  // V

  bool operator==(const DecoderParams&) const = default;
};

/// Every trainable tensor. One instance is shared by all N decoder branches.
struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  AttentionParams attention;
  DecoderParams decoder;

  bool operator==(const ModelParams&) const = default;
};

/// All-zero tensors shaped for `config`.
ModelParams zero_params(const ModelConfig& config);

/// Weights uniform in (-init_scale, init_scale), biases zero.
ModelParams random_params(const ModelConfig& config, double init_scale, std::uint64_t seed);

/// Visits every tensor as (name, values, is_bias) in checkpoint order: encoder,
/// attention, embedding, gates i/f/o/q each (input, hidden, visual, bias),
/// output projection, output bias.
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn(std::string_view("encoder.global_proj"), p.encoder.global_proj.values(), false);
  fn(std::string_view("encoder.global_bias"), p.encoder.global_bias.values(), true);
  fn(std::string_view("encoder.init_proj"), p.encoder.init_proj.values(), false);
  fn(std::string_view("attention.region_proj"), p.attention.region_proj.values(), false);
  fn(std::string_view("attention.hidden_proj"), p.attention.hidden_proj.values(), false);
  fn(std::string_view("attention.bias"), p.attention.bias.values(), true);
  fn(std::string_view("attention.score"), p.attention.score.values(), false);
  fn(std::string_view("decoder.embedding"), p.decoder.embedding.values(), false);
  auto gate = [&](const std::string_view (&names)[4], auto& g) {
    fn(names[0], g.input.values(), false);
    fn(names[1], g.hidden.values(), false);
    fn(names[2], g.visual.values(), false);
    fn(names[3], g.bias.values(), true);
  };
  static constexpr std::string_view kInputGate[4] = {"decoder.input_gate.input", "decoder.input_gate.hidden",
                                                     "decoder.input_gate.visual", "decoder.input_gate.bias"};
  static constexpr std::string_view kForgetGate[4] = {"decoder.forget_gate.input", "decoder.forget_gate.hidden",
                                                      "decoder.forget_gate.visual", "decoder.forget_gate.bias"};
  static constexpr std::string_view kOutputGate[4] = {"decoder.output_gate.input", "decoder.output_gate.hidden",
                                                      "decoder.output_gate.visual", "decoder.output_gate.bias"};
  static constexpr std::string_view kCandidate[4] = {"decoder.candidate.input", "decoder.candidate.hidden",
                                                     "decoder.candidate.visual", "decoder.candidate.bias"};
  gate(kInputGate, p.decoder.input_gate);
  gate(kForgetGate, p.decoder.forget_gate);
  gate(kOutputGate, p.decoder.output_gate);
  gate(kCandidate, p.decoder.candidate);
  fn(std::string_view("decoder.out_proj"), p.decoder.out_proj.values(), false);
  fn(std::string_view("decoder.out_bias"), p.decoder.out_bias.values(), true);
}

struct TensorView {
  std::string_view name;
  std::span<double> values;
  bool is_bias;
};

struct ConstTensorView {
  std::string_view name;
  std::span<const double> values;
  bool is_bias;
};

/// for_each_tensor collected into a list, for walking two models in lockstep.
std::vector<TensorView> tensor_views(ModelParams& p);
std::vector<ConstTensorView> tensor_views(const ModelParams& p);

std::size_t parameter_count(const ModelParams& p);

}  // namespace story

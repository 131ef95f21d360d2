#include "story/params.hpp"

#include "story/corpus.hpp"
#include "story/error.hpp"
#include "story/random.hpp"

namespace story {
namespace {

GateParams zero_gate(const ModelConfig& c) {
  return GateParams{Matrix(c.hidden, c.embed), Matrix(c.hidden, c.hidden), Matrix(c.hidden, c.local_dim),
                    Vector(c.hidden)};
}

}  // namespace

void validate(const ModelConfig& c) {
  const std::pair<const char*, std::size_t> dims[] = {
      {"D_g", c.global_dim}, {"D_l", c.local_dim}, {"M", c.regions},     {"H", c.hidden},
      {"E", c.embed},        {"N", c.branches},    {"d_mid", c.mlp_dim}, {"d_att", c.attention_dim},
  };
  for (const auto& [name, value] : dims) {
    if (value == 0) throw Error(ErrorCode::invalid_dimension, std::string("model dimension ") + name + " must be >= 1");
  }
  if (c.vocab < kFirstWordId) {
    throw Error(ErrorCode::invalid_dimension, "vocabulary size must be >= 4, got " + std::to_string(c.vocab));
  }
}

ModelParams zero_params(const ModelConfig& c) {
  validate(c);
  ModelParams p;
  p.config = c;
  p.encoder = EncoderParams{Matrix(c.mlp_dim, c.global_dim), Vector(c.mlp_dim), Matrix(c.hidden, c.mlp_dim)};
  p.attention = AttentionParams{Matrix(c.attention_dim, c.local_dim), Matrix(c.attention_dim, c.hidden),
                                Vector(c.attention_dim), Matrix(1, c.attention_dim)};
  p.decoder.embedding = Matrix(c.vocab, c.embed);
  p.decoder.input_gate = zero_gate(c);
  p.decoder.forget_gate = zero_gate(c);
  p.decoder.output_gate = zero_gate(c);
  p.decoder.candidate = zero_gate(c);
  p.decoder.out_proj = Matrix(c.vocab, c.hidden);
  p.decoder.out_bias = Vector(c.vocab);
  return p;
}

ModelParams random_params(const ModelConfig& config, double init_scale, std::uint64_t seed) {
  ModelParams p = zero_params(config);
  Rng rng(seed);
  for_each_tensor(p, [&](std::string_view, std::span<double> values, bool is_bias) {
    if (is_bias) return;
    for (double& v : values) v = rng.uniform(-init_scale, init_scale);
  });
  return p;
}

std::vector<TensorView> tensor_views(ModelParams& p) {
  std::vector<TensorView> out;
  for_each_tensor(p, [&](std::string_view name, std::span<double> v, bool bias) { out.push_back({name, v, bias}); });
  return out;
}

std::vector<ConstTensorView> tensor_views(const ModelParams& p) {
  std::vector<ConstTensorView> out;
  for_each_tensor(p, [&](std::string_view name, std::span<const double> v, bool bias) {
    out.push_back({name, v, bias});
  });
  return out;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](std::string_view, std::span<const double> v, bool) { n += v.size(); });
  return n;
}

}  // namespace story

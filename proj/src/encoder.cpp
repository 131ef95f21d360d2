#include "story/encoder.hpp"

#include <cmath>

#include "story/error.hpp"

namespace story {
namespace {

Vector mlp_activation(const Vector& global, const EncoderParams& p) {
  return tanh_act(affine(p.global_proj, global, p.global_bias));
}

}  // namespace

Vector embed_global(const Vector& global, const EncoderParams& p) {
  const Vector hidden = mlp_activation(global, p);
  if (p.init_proj.cols() != hidden.size()) {
    throw Error(ErrorCode::dimension_mismatch, "embed_global: init_proj is " + shape_string(p.init_proj) +
                                                   " but the MLP layer has width " + std::to_string(hidden.size()));
  }
  Vector h0(p.init_proj.rows());
  add_matvec(p.init_proj, hidden.values(), h0.values());
  return h0;
}

Vector initial_hidden(const SequenceFeatures& features, const ModelParams& p) {
  if (!p.config.global_context) return Vector(p.config.hidden);
  return embed_global(features.global, p.encoder);
}

void embed_global_backward(const Vector& global, const EncoderParams& p, std::span<const double> dh0,
                           EncoderParams& grads, BackwardFault fault) {
  const Vector hidden = mlp_activation(global, p);
  add_outer(grads.init_proj, dh0, hidden.values());
  Vector dpre(hidden.size());
  add_matvec_transposed(p.init_proj, dh0, dpre.values());
  for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] *= tanh_grad(hidden[i], fault);
  add_outer(grads.global_proj, dpre.values(), global.values());
  add_to(grads.global_bias.values(), dpre.values());
}

}  // namespace story

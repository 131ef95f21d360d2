#pragma once

#include <span>

#include "story/fault.hpp"
#include "story/features.hpp"
#include "story/params.hpp"

namespace story {

/// h0 = init_proj * tanh(global_proj * G + global_bias). The same h0 seeds
/// every branch; the cell state starts at zero.
Vector embed_global(const Vector& global, const EncoderParams& p);

/// embed_global on the story's global vector, or zeros when the model runs
/// with global context disabled.
Vector initial_hidden(const SequenceFeatures& features, const ModelParams& p);

/// Accumulates d(loss)/d(encoder params) into `grads` given d(loss)/d(h0).
void embed_global_backward(const Vector& global, const EncoderParams& p, std::span<const double> dh0,
                           EncoderParams& grads, BackwardFault fault = BackwardFault::none);

}  // namespace story

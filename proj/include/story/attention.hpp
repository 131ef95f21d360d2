#pragma once

#include <span>

#include "story/fault.hpp"
#include "story/params.hpp"

namespace story {

/// Softmax weights over the M regions of one image; positive, summing to 1.
struct AttentionWeights {
  Vector k;
};

/// e_i = score * tanh(region_proj * L_i + hidden_proj * h_prev + bias), k = softmax(e).
/// `regions` is M x D_l. Throws empty_input when M = 0 and dimension_mismatch
/// on inconsistent shapes.
AttentionWeights attention_scores(const Matrix& regions, const Vector& h_prev, const AttentionParams& p);

/// v = sum_i k_i * L_i.
Vector context_vector(const Matrix& regions, const AttentionWeights& weights);

/// region_proj * L_i + bias for every region. Constant over a sentence, so
/// decoders compute it once per branch.
Matrix project_regions(const Matrix& regions, const AttentionParams& p);

/// Everything the backward pass needs from one attention evaluation.
struct AttentionStep {
  Matrix activations;  // M x attention_dim, tanh outputs
  AttentionWeights weights;
  Vector context;
};

AttentionStep attend(const Matrix& regions, const Matrix& projected, const Vector& h_prev, const AttentionParams& p);

/// Accumulates parameter gradients into `grads` and d(loss)/d(h_prev) into
/// `dh_prev`, given d(loss)/d(context). Regions are inputs, not parameters.
void attend_backward(const Matrix& regions, const Vector& h_prev, const AttentionStep& step,
                     std::span<const double> dcontext, const AttentionParams& p, AttentionParams& grads,
                     std::span<double> dh_prev, BackwardFault fault = BackwardFault::none);

}  // namespace story

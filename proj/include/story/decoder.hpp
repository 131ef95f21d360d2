#pragma once

#include <span>
#include <vector>

#include "story/attention.hpp"
#include "story/corpus.hpp"
#include "story/fault.hpp"
#include "story/features.hpp"
#include "story/params.hpp"

namespace story {

struct DecoderState {
  Vector h;
  Vector c;

  bool operator==(const DecoderState&) const = default;
};

/// Gate outputs of one LSTM step, kept for the backward pass.
struct GateActivations {
  Vector input;
  Vector forget;
  Vector output;
  Vector candidate;
  Vector cell_tanh;  // tanh(c')
};

/// i, f, o = sigmoid(...), q = tanh(...), c' = f*c + i*q, h' = o*tanh(c'),
/// every gate reading the previous word embedding, the previous hidden state
/// and the attended visual context.
DecoderState lstm_step(const DecoderState& state, const Vector& x_prev, const Vector& v, const DecoderParams& p);
DecoderState lstm_step(const DecoderState& state, std::span<const double> x_prev, const Vector& v,
                       const DecoderParams& p, GateActivations* gates);

/// out_proj * h + out_bias.
Vector step_logits(const DecoderState& state, const DecoderParams& p);
/// softmax(step_logits(state)).
Vector step_distribution(const DecoderState& state, const DecoderParams& p);

/// One teacher-forced decoding step and everything needed to differentiate it.
struct StepRecord {
  TokenId input = kBos;
  TokenId target = kEos;
  DecoderState prev;
  AttentionStep attention;
  GateActivations gates;
  DecoderState next;
  Vector log_probs;
};

struct BranchRollout {
  Matrix projected;  // project_regions for this branch
  std::vector<StepRecord> steps;
  double log_prob = 0.0;
};

/// Feeds bos then each token of `sentence` in turn, scoring the next token at
/// every step. Throws out_of_range for ids >= V.
BranchRollout teacher_forced_rollout(const Matrix& regions, const Vector& h0, std::span<const TokenId> sentence,
                                     const ModelParams& p);

/// Backpropagates `scale * -log_prob` of a rollout: parameter gradients go to
/// `grads`, d/d(h0) is added to `dh0`.
void rollout_backward(const Matrix& regions, const BranchRollout& rollout, double scale, const ModelParams& p,
                      ModelParams& grads, std::span<double> dh0, BackwardFault fault = BackwardFault::none);

/// Sum over words of log p(word | image, previous words). The sentence must be
/// non-empty and end with eos.
double sentence_log_prob(const Matrix& regions, const Vector& h0, std::span<const TokenId> sentence,
                         const ModelParams& p);

/// Sum of sentence_log_prob over branches. Every branch starts from the same
/// h0 and reads the same parameters; only the regions differ.
double story_log_likelihood(const SequenceFeatures& features, std::span<const SentenceIds> story, const ModelParams& p);

/// Tokens that decoding never emits: pad, bos, unk.
bool is_masked_output(TokenId id);

/// Per-branch argmax decoding, ties to the lowest id. Stops after eos (which is
/// included) or max_len tokens.
std::vector<SentenceIds> greedy_decode(const SequenceFeatures& features, const ModelParams& p, std::size_t max_len,
                                       std::size_t workers = 1);
SentenceIds greedy_decode_branch(const Matrix& regions, const Vector& h0, const ModelParams& p, std::size_t max_len);

/// Partial or completed beam hypothesis. `state` produced the last token.
struct Hypothesis {
  SentenceIds ids;
  double logprob = 0.0;
  DecoderState state;
};

/// Beam search over total log-probability with no length normalization.
/// Hypotheses ending in eos retire; ties resolve to the lexicographically
/// smallest id sequence. beam = 1 reproduces greedy decoding.
std::vector<SentenceIds> beam_decode(const SequenceFeatures& features, const ModelParams& p, std::size_t beam,
                                     std::size_t max_len, std::size_t workers = 1);
Hypothesis beam_decode_branch(const Matrix& regions, const Vector& h0, const ModelParams& p, std::size_t beam,
                              std::size_t max_len);

/// Attention weights at each step of feeding `ids` through one branch; what
/// the decoder looked at while producing them.
std::vector<Vector> attention_path(const Matrix& regions, const Vector& h0, std::span<const TokenId> ids,
                                   const ModelParams& p);

}  // namespace story

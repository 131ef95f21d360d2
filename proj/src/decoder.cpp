#include "story/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "story/encoder.hpp"
#include "story/error.hpp"
#include "story/parallel.hpp"

namespace story {
namespace {

void check_gate(const GateParams& g, std::size_t x_len, std::size_t h_len, std::size_t v_len, const char* name) {
  const std::size_t hidden = g.bias.size();
  if (g.input.rows() != hidden || g.input.cols() != x_len || g.hidden.rows() != hidden || g.hidden.cols() != h_len ||
      g.visual.rows() != hidden || g.visual.cols() != v_len || h_len != hidden) {
    throw Error(ErrorCode::dimension_mismatch,
                std::string("lstm_step: ") + name + " gate has input " + shape_string(g.input) + ", hidden " +
                    shape_string(g.hidden) + ", visual " + shape_string(g.visual) + ", bias " +
                    std::to_string(hidden) + " but x, h, v have lengths " + std::to_string(x_len) + ", " +
                    std::to_string(h_len) + ", " + std::to_string(v_len));
  }
}

Vector gate_preactivation(const GateParams& g, std::span<const double> x, const Vector& h, const Vector& v) {
  Vector z = g.bias;
  add_matvec(g.input, x, z.values());
  add_matvec(g.hidden, h.values(), z.values());
  add_matvec(g.visual, v.values(), z.values());
  return z;
}

void check_token(TokenId id, const ModelConfig& c) {
  if (id >= c.vocab) {
    throw Error(ErrorCode::out_of_range,
                "token id " + std::to_string(id) + " outside model vocabulary of size " + std::to_string(c.vocab));
  }
}

void check_features(const SequenceFeatures& f, const ModelConfig& c) {
  validate(f);
  if (f.branches() != c.branches || f.global.size() != c.global_dim || f.channels() != c.local_dim ||
      f.regions() != c.regions) {
    throw Error(ErrorCode::config_conflict,
                "features (N=" + std::to_string(f.branches()) + " D_g=" + std::to_string(f.global.size()) +
                    " M=" + std::to_string(f.regions()) + " D_l=" + std::to_string(f.channels()) +
                    ") do not match the model (N=" + std::to_string(c.branches) + " D_g=" +
                    std::to_string(c.global_dim) + " M=" + std::to_string(c.regions) +
                    " D_l=" + std::to_string(c.local_dim) + ")");
  }
}

DecoderState initial_state(const Vector& h0, const ModelConfig& c) {
  if (h0.size() != c.hidden) {
    throw Error(ErrorCode::dimension_mismatch,
                "h0 has length " + std::to_string(h0.size()) + ", model hidden size is " + std::to_string(c.hidden));
  }
  return DecoderState{h0, Vector(c.hidden)};
}

// Accumulates one gate's parameter gradients and its input/hidden/visual
// contributions.
void gate_backward(const GateParams& g, GateParams& dg, std::span<const double> dz, std::span<const double> x,
                   const Vector& h_prev, const Vector& v, std::span<double> dx, std::span<double> dh_prev,
                   std::span<double> dv) {
  add_outer(dg.input, dz, x);
  add_outer(dg.hidden, dz, h_prev.values());
  add_outer(dg.visual, dz, v.values());
  add_to(dg.bias.values(), dz);
  add_matvec_transposed(g.input, dz, dx);
  add_matvec_transposed(g.hidden, dz, dh_prev);
  add_matvec_transposed(g.visual, dz, dv);
}

}  // namespace

DecoderState lstm_step(const DecoderState& state, std::span<const double> x_prev, const Vector& v,
                       const DecoderParams& p, GateActivations* gates) {
  const std::size_t hidden = state.h.size();
  if (state.c.size() != hidden) throw Error(ErrorCode::dimension_mismatch, "lstm_step: h and c lengths differ");
  check_gate(p.input_gate, x_prev.size(), hidden, v.size(), "input");
  check_gate(p.forget_gate, x_prev.size(), hidden, v.size(), "forget");
  check_gate(p.output_gate, x_prev.size(), hidden, v.size(), "output");
  check_gate(p.candidate, x_prev.size(), hidden, v.size(), "candidate");

  GateActivations local;
  GateActivations& a = gates ? *gates : local;
  a.input = sigmoid(gate_preactivation(p.input_gate, x_prev, state.h, v));
  a.forget = sigmoid(gate_preactivation(p.forget_gate, x_prev, state.h, v));
  a.output = sigmoid(gate_preactivation(p.output_gate, x_prev, state.h, v));
  a.candidate = tanh_act(gate_preactivation(p.candidate, x_prev, state.h, v));

  DecoderState next{Vector(hidden), Vector(hidden)};
  a.cell_tanh = Vector(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    next.c[k] = a.forget[k] * state.c[k] + a.input[k] * a.candidate[k];
    a.cell_tanh[k] = std::tanh(next.c[k]);
    next.h[k] = a.output[k] * a.cell_tanh[k];
  }
  ensure_finite(next.c.values(), "LSTM cell state");
  return next;
}

DecoderState lstm_step(const DecoderState& state, const Vector& x_prev, const Vector& v, const DecoderParams& p) {
  return lstm_step(state, x_prev.values(), v, p, nullptr);
}

Vector step_logits(const DecoderState& state, const DecoderParams& p) {
  return affine(p.out_proj, state.h, p.out_bias);
}

Vector step_distribution(const DecoderState& state, const DecoderParams& p) {
  return softmax(step_logits(state, p));
}

BranchRollout teacher_forced_rollout(const Matrix& regions, const Vector& h0, std::span<const TokenId> sentence,
                                     const ModelParams& p) {
  const ModelConfig& c = p.config;
  for (TokenId id : sentence) check_token(id, c);
  BranchRollout rollout;
  rollout.projected = project_regions(regions, p.attention);
  rollout.steps.reserve(sentence.size());
  DecoderState state = initial_state(h0, c);
  TokenId input = kBos;
  for (TokenId target : sentence) {
    StepRecord step;
    step.input = input;
    step.target = target;
    step.prev = state;
    step.attention = attend(regions, rollout.projected, state.h, p.attention);
    state = lstm_step(state, p.decoder.embedding.row(input), step.attention.context, p.decoder, &step.gates);
    step.next = state;
    step.log_probs = log_softmax(step_logits(state, p.decoder));
    rollout.log_prob += step.log_probs[target];
    rollout.steps.push_back(std::move(step));
    input = target;
  }
  return rollout;
}

void rollout_backward(const Matrix& regions, const BranchRollout& rollout, double scale, const ModelParams& p,
                      ModelParams& grads, std::span<double> dh0, BackwardFault fault) {
  const std::size_t hidden = p.config.hidden;
  const DecoderParams& d = p.decoder;
  DecoderParams& g = grads.decoder;

  Vector dh(hidden), dc(hidden);
  Vector dlogits(p.config.vocab);
  Vector dz_i(hidden), dz_f(hidden), dz_o(hidden), dz_q(hidden);
  Vector dx(p.config.embed), dv(p.config.local_dim);

  for (auto it = rollout.steps.rbegin(); it != rollout.steps.rend(); ++it) {
    const StepRecord& s = *it;
    const GateActivations& a = s.gates;

    // -scale * log p(target): d/dlogits = scale * (p - onehot).
    for (std::size_t w = 0; w < dlogits.size(); ++w) dlogits[w] = scale * std::exp(s.log_probs[w]);
    dlogits[s.target] -= scale;
    add_outer(g.out_proj, dlogits.values(), s.next.h.values());
    add_to(g.out_bias.values(), dlogits.values());
    add_matvec_transposed(d.out_proj, dlogits.values(), dh.values());

    for (std::size_t k = 0; k < hidden; ++k) {
      const double i = a.input[k], f = a.forget[k], o = a.output[k], q = a.candidate[k];
      const double d_out = dh[k] * a.cell_tanh[k];
      dc[k] += dh[k] * o * tanh_grad(a.cell_tanh[k], fault);
      dz_o[k] = d_out * o * (1.0 - o);
      dz_i[k] = dc[k] * q * i * (1.0 - i);
      dz_f[k] = fault == BackwardFault::forget_gate ? dc[k] * s.prev.c[k] : dc[k] * s.prev.c[k] * f * (1.0 - f);
      dz_q[k] = dc[k] * i * tanh_grad(q, fault);
      dc[k] *= f;  // now d/dc_prev
    }

    std::fill(dx.begin(), dx.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    Vector dh_prev(hidden);
    const auto x = d.embedding.row(s.input);
    const Vector& v = s.attention.context;
    gate_backward(d.input_gate, g.input_gate, dz_i.values(), x, s.prev.h, v, dx.values(), dh_prev.values(), dv.values());
    gate_backward(d.forget_gate, g.forget_gate, dz_f.values(), x, s.prev.h, v, dx.values(), dh_prev.values(),
                  dv.values());
    gate_backward(d.output_gate, g.output_gate, dz_o.values(), x, s.prev.h, v, dx.values(), dh_prev.values(),
                  dv.values());
    gate_backward(d.candidate, g.candidate, dz_q.values(), x, s.prev.h, v, dx.values(), dh_prev.values(), dv.values());
    add_to(g.embedding.row(s.input), dx.values());

    attend_backward(regions, s.prev.h, s.attention, dv.values(), p.attention, grads.attention, dh_prev.values(),
                    fault);
    dh = std::move(dh_prev);
  }
  add_to(dh0, dh.values());
}

double sentence_log_prob(const Matrix& regions, const Vector& h0, std::span<const TokenId> sentence,
                         const ModelParams& p) {
  if (sentence.empty() || sentence.back() != kEos) {
    throw Error(ErrorCode::invalid_argument, "sentence_log_prob needs a non-empty sentence ending with eos");
  }
  return teacher_forced_rollout(regions, h0, sentence, p).log_prob;
}

double story_log_likelihood(const SequenceFeatures& features, std::span<const SentenceIds> story,
                            const ModelParams& p) {
  check_features(features, p.config);
  if (story.size() != features.branches()) {
    throw Error(ErrorCode::dimension_mismatch, "story has " + std::to_string(story.size()) + " sentences for " +
                                                   std::to_string(features.branches()) + " branches");
  }
  const Vector h0 = initial_hidden(features, p);
  double total = 0.0;
  for (std::size_t j = 0; j < story.size(); ++j) total += sentence_log_prob(features.locals[j], h0, story[j], p);
  return total;
}

bool is_masked_output(TokenId id) { return id == kPad || id == kBos || id == kUnk; }

SentenceIds greedy_decode_branch(const Matrix& regions, const Vector& h0, const ModelParams& p, std::size_t max_len) {
  if (max_len == 0) throw Error(ErrorCode::invalid_argument, "max_len must be at least 1");
  const Matrix projected = project_regions(regions, p.attention);
  DecoderState state = initial_state(h0, p.config);
  SentenceIds out;
  TokenId input = kBos;
  while (out.size() < max_len) {
    const AttentionStep att = attend(regions, projected, state.h, p.attention);
    state = lstm_step(state, p.decoder.embedding.row(input), att.context, p.decoder, nullptr);
    const Vector logits = step_logits(state, p.decoder);
    TokenId best = kEos;
    for (TokenId w = 0; w < logits.size(); ++w) {
      if (!is_masked_output(w) && logits[w] > logits[best]) best = w;
    }
    out.push_back(best);
    if (best == kEos) break;
    input = best;
  }
  return out;
}

std::vector<SentenceIds> greedy_decode(const SequenceFeatures& features, const ModelParams& p, std::size_t max_len,
                                       std::size_t workers) {
  check_features(features, p.config);
  const Vector h0 = initial_hidden(features, p);
  std::vector<SentenceIds> out(features.branches());
  parallel_for(out.size(), workers,
               [&](std::size_t j) { out[j] = greedy_decode_branch(features.locals[j], h0, p, max_len); });
  return out;
}

Hypothesis beam_decode_branch(const Matrix& regions, const Vector& h0, const ModelParams& p, std::size_t beam,
                              std::size_t max_len) {
  if (beam == 0) throw Error(ErrorCode::invalid_argument, "beam width must be at least 1");
  if (max_len == 0) throw Error(ErrorCode::invalid_argument, "max_len must be at least 1");
  const Matrix projected = project_regions(regions, p.attention);

  struct Candidate {
    std::size_t parent;
    TokenId token;
    double logprob;
  };

  std::vector<Hypothesis> live{Hypothesis{{}, 0.0, initial_state(h0, p.config)}};
  std::vector<Hypothesis> finished;
  // Higher score first; equal scores fall back to lexicographic id order.
  auto better = [](const Hypothesis& a, const Hypothesis& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.ids < b.ids;
  };

  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<DecoderState> stepped;
    std::vector<Candidate> candidates;
    stepped.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      const Hypothesis& hyp = live[h];
      const TokenId input = hyp.ids.empty() ? kBos : hyp.ids.back();
      const AttentionStep att = attend(regions, projected, hyp.state.h, p.attention);
      stepped.push_back(lstm_step(hyp.state, p.decoder.embedding.row(input), att.context, p.decoder, nullptr));
      const Vector log_probs = log_softmax(step_logits(stepped.back(), p.decoder));
      for (TokenId w = 0; w < log_probs.size(); ++w) {
        if (!is_masked_output(w)) candidates.push_back({h, w, hyp.logprob + log_probs[w]});
      }
    }
    // Live hypotheses share a length, so (parent ids, token) order is the
    // lexicographic order of the extended sequences.
    auto candidate_before = [&](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.parent != b.parent && live[a.parent].ids != live[b.parent].ids) {
        return live[a.parent].ids < live[b.parent].ids;
      }
      return a.token < b.token;
    };
    const std::size_t keep = std::min(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      candidate_before);

    std::vector<Hypothesis> next_live;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& cand = candidates[k];
      Hypothesis child{live[cand.parent].ids, cand.logprob, stepped[cand.parent]};
      child.ids.push_back(cand.token);
      if (cand.token == kEos || t + 1 == max_len) {
        finished.push_back(std::move(child));
      } else {
        next_live.push_back(std::move(child));
      }
    }
    live = std::move(next_live);

    // Scores never increase, so no live hypothesis can overtake a strictly
    // better finished one.
    if (!finished.empty() && !live.empty()) {
      const auto best_done = std::min_element(finished.begin(), finished.end(), better);
      const auto best_live = std::min_element(live.begin(), live.end(), better);
      if (best_done->logprob > best_live->logprob) live.clear();
    }
  }
  return *std::min_element(finished.begin(), finished.end(), better);
}

std::vector<SentenceIds> beam_decode(const SequenceFeatures& features, const ModelParams& p, std::size_t beam,
                                     std::size_t max_len, std::size_t workers) {
  check_features(features, p.config);
  const Vector h0 = initial_hidden(features, p);
  std::vector<SentenceIds> out(features.branches());
  parallel_for(out.size(), workers, [&](std::size_t j) {
    out[j] = beam_decode_branch(features.locals[j], h0, p, beam, max_len).ids;
  });
  return out;
}

std::vector<Vector> attention_path(const Matrix& regions, const Vector& h0, std::span<const TokenId> ids,
                                   const ModelParams& p) {
  const BranchRollout rollout = teacher_forced_rollout(regions, h0, ids, p);
  std::vector<Vector> path;
  path.reserve(rollout.steps.size());
  for (const auto& s : rollout.steps) path.push_back(s.attention.weights.k);
  return path;
}

}  // namespace story

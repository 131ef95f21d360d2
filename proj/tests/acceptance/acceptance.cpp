// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "story/attention.hpp"
#include "story/corpus.hpp"
#include "story/decoder.hpp"
#include "story/encoder.hpp"
#include "story/features.hpp"
#include "story/metrics.hpp"
#include "story/random.hpp"
#include "story/trainer.hpp"

using namespace story;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), 8 * a.size()) == 0;
}

bool same_bits(const ModelParams& a, const ModelParams& b) {
  const auto va = tensor_views(a), vb = tensor_views(b);
  if (va.size() != vb.size()) return false;
  for (std::size_t t = 0; t < va.size(); ++t) {
    if (!same_bits(va[t].values, vb[t].values)) return false;
  }
  return true;
}

std::vector<Example> encode_stories(const std::vector<SyntheticStory>& stories, std::size_t begin, std::size_t end,
                                    const Vocabulary& vocab) {
  std::vector<Example> out;
  for (std::size_t i = begin; i < end; ++i) {
    Example ex{stories[i].features, {}};
    for (const auto& s : stories[i].sample.sentences) ex.sentences.push_back(encode(s, vocab));
    out.push_back(std::move(ex));
  }
  return out;
}

ModelConfig model_for(const FeatureDims& dims, std::size_t hidden, std::size_t vocab) {
  ModelConfig c;
  c.global_dim = dims.global_dim;
  c.local_dim = dims.channels;
  c.regions = dims.regions;
  c.branches = dims.branches;
  c.hidden = hidden;
  c.embed = hidden;
  c.mlp_dim = hidden;
  c.attention_dim = hidden;
  c.vocab = vocab;
  return c;
}

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    worst = std::max(worst, grad_check(small_gradcheck_config(seed)).max_rel_error);
  }
  const double elapsed = seconds_since(start);
  std::array<double, 3> mutated{};
  const std::array<BackwardFault, 3> faults = {BackwardFault::tanh_derivative, BackwardFault::attention,
                                               BackwardFault::forget_gate};
  for (std::size_t i = 0; i < faults.size(); ++i) {
    GradCheckConfig c = small_gradcheck_config(1);
    c.fault = faults[i];
    mutated[i] = grad_check(c).max_rel_error;
  }
  const bool pass = worst < 1e-4 && elapsed < 60.0 && *std::min_element(mutated.begin(), mutated.end()) > 1e-2;
  return {pass, fmt("10 seeds max rel err %.3g in %.2f s; mutated tanh %.3g, attention %.3g, forget %.3g", worst,
                    elapsed, mutated[0], mutated[1], mutated[2])};
}

Outcome uniform_loss() {
  double worst = 0.0;
  std::size_t corpora = 0;
  for (std::size_t v : {5u, 7u, 31u, 1000u, 10000u}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      ModelConfig c = small_gradcheck_config(seed).model;
      c.vocab = v;
      c.branches = 1 + seed;
      const auto batch = random_batch(c, 1 + seed, 7, seed * 31 + v);
      worst = std::max(worst, std::abs(loss(batch, zero_params(c)) - std::log(static_cast<double>(v))));
      ++corpora;
    }
  }
  SynthSpec spec;
  spec.num_stories = 20;
  const FeatureDims dims{5, 16, 4, 8};
  const auto stories = generate_synthetic(spec, dims);
  std::vector<StorySample> samples;
  for (const auto& s : stories) samples.push_back(s.sample);
  const Vocabulary vocab = build_vocab(samples, 50);
  const auto batch = encode_stories(stories, 0, stories.size(), vocab);
  const ModelConfig c = model_for(dims, 8, vocab.size());
  worst = std::max(worst, std::abs(loss(batch, zero_params(c)) - std::log(static_cast<double>(vocab.size()))));
  ++corpora;
  return {worst <= 1e-12, fmt("%zu corpora, max |loss - ln V| = %.3g", corpora, worst)};
}

Outcome overfit() {
  const auto start = Clock::now();
  SynthSpec spec;
  spec.num_stories = 4;
  spec.seed = 3;
  const FeatureDims dims{5, 16, 4, 8};
  const auto stories = generate_synthetic(spec, dims);
  std::vector<StorySample> samples;
  for (const auto& s : stories) samples.push_back(s.sample);
  const Vocabulary vocab = build_vocab(samples, 50);
  const auto batch = encode_stories(stories, 0, stories.size(), vocab);

  TrainConfig config;
  config.iterations = 2000;
  config.learning_rate = 1e-3;
  config.seed = 1;
  ModelParams params = random_params(model_for(dims, 32, vocab.size()), config.init_scale, config.seed);
  train(batch, params, config);
  const double final_loss = loss(batch, params);

  std::size_t exact = 0, total = 0;
  for (const auto& ex : batch) {
    const auto decoded = greedy_decode(ex.features, params, 20);
    for (std::size_t j = 0; j < decoded.size(); ++j, ++total) exact += decoded[j] == ex.sentences[j];
  }
  const double elapsed = seconds_since(start);
  const bool pass = final_loss < 0.05 && exact == 20 && total == 20 && elapsed < 600.0;
  return {pass, fmt("vocab %zu, loss %.4g after 2000 Adam steps, %zu/%zu sentences exact, %.1f s", vocab.size(),
                    final_loss, exact, total, elapsed)};
}

Outcome global_context_ablation() {
  const auto start = Clock::now();
  // The held-out stories continue the seed-13 stream after the 100 training
  // stories, so both halves share the same prototypes.
  SynthSpec spec;
  spec.num_stories = 150;
  spec.num_topics = 2;
  spec.noise_scale = 0.1;
  spec.seed = 13;
  const FeatureDims dims{5, 16, 4, 8};
  const SynthVocabulary words;
  const auto stories = generate_synthetic(spec, dims, words);
  std::vector<StorySample> train_samples;
  for (std::size_t i = 0; i < 100; ++i) train_samples.push_back(stories[i].sample);
  const Vocabulary vocab = build_vocab(train_samples, 50);
  const auto train_batch = encode_stories(stories, 0, 100, vocab);

  auto accuracy = [&](const ModelParams& params) {
    std::size_t correct = 0;
    for (std::size_t i = 100; i < 150; ++i) {
      const auto decoded = greedy_decode(stories[i].features, params, 20);
      const SentenceIds& last = decoded.back();
      const TokenId want = vocab.id(words.connective(stories[i].topic));
      const TokenId other = vocab.id(words.connective(1 - stories[i].topic));
      const bool has_want = std::find(last.begin(), last.end(), want) != last.end();
      const bool has_other = std::find(last.begin(), last.end(), other) != last.end();
      correct += has_want && !has_other;
    }
    return static_cast<double>(correct) / 50.0;
  };

  TrainConfig config;
  config.iterations = 500;
  config.learning_rate = 0.01;
  config.init_scale = 0.3;
  std::string detail;
  bool pass = true;
  for (bool global_context : {true, false}) {
    detail += global_context ? "full" : "; ablated";
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      config.seed = seed;
      ModelConfig c = model_for(dims, 16, vocab.size());
      c.global_context = global_context;
      ModelParams params = random_params(c, config.init_scale, seed);
      train(train_batch, params, config);
      const double acc = accuracy(params);
      pass = pass && (global_context ? acc >= 0.9 : acc <= 0.6);
      detail += fmt(" %.2f", acc);
    }
  }
  detail += fmt(" (held-out accuracy per seed; %.0f s)", seconds_since(start));
  return {pass, detail};
}

Outcome beam_exhaustive() {
  ModelConfig c = small_gradcheck_config(1).model;
  c.vocab = 7;  // three content tokens plus the four specials
  c.branches = 1;
  std::size_t agree = 0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const ModelParams params = random_params(c, 2.0, 1000 + seed);
    const auto batch = random_batch(c, 1, 1, 2000 + seed);
    const Vector h0 = embed_global(batch[0].features.global, params.encoder);
    const Matrix& regions = batch[0].features.locals[0];
    const Hypothesis beam = beam_decode_branch(regions, h0, params, 81, 3);
    const Hypothesis brute = story::testing::exhaustive_decode(regions, h0, params, 3);
    agree += beam.ids == brute.ids && beam.logprob == brute.logprob;
  }
  return {agree == 25, fmt("%zu/25 random models agree with exhaustive enumeration", agree)};
}

// Every ordered pair of sequences of length <= 8 over {a, b, c}. Each
// sequence's distinct subsequences are kept as one bitset per length; the DP
// answer L is confirmed by a shared length-L subsequence and the absence of a
// shared length-(L+1) one.
bool lcs_exhaustive(std::size_t& pairs_checked) {
  constexpr std::size_t kMaxLen = 8;
  std::array<std::size_t, kMaxLen + 2> offset{};
  std::array<std::size_t, kMaxLen + 2> words{};
  std::size_t count = 1;
  for (std::size_t len = 0; len <= kMaxLen; ++len) {
    offset[len + 1] = offset[len] + count;
    count *= 3;
  }
  const std::size_t total = offset[kMaxLen + 1];
  // Bit layout: a sequence's bitset holds one block per length, block L
  // covering the 3^L sequences of that length.
  std::array<std::size_t, kMaxLen + 2> word_offset{};
  for (std::size_t len = 0; len <= kMaxLen; ++len) {
    words[len] = (offset[len + 1] - offset[len] + 63) / 64;
    word_offset[len + 1] = word_offset[len] + words[len];
  }
  const std::size_t stride = word_offset[kMaxLen + 1];

  std::vector<std::vector<std::string>> seqs(total);
  std::vector<std::uint8_t> lengths(total);
  std::vector<std::uint64_t> subsets(total * stride, 0);
  const std::array<std::string, 3> alphabet = {"a", "b", "c"};
  for (std::size_t len = 0; len <= kMaxLen; ++len) {
    for (std::size_t code = 0; code < offset[len + 1] - offset[len]; ++code) {
      const std::size_t id = offset[len] + code;
      std::vector<int> digits(len);
      for (std::size_t i = 0, rest = code; i < len; ++i, rest /= 3) digits[len - 1 - i] = static_cast<int>(rest % 3);
      for (int d : digits) seqs[id].push_back(alphabet[d]);
      lengths[id] = static_cast<std::uint8_t>(len);
      std::uint64_t* bits = &subsets[id * stride];
      for (std::size_t mask = 0; mask < (std::size_t{1} << len); ++mask) {
        std::size_t sub = 0, sub_len = 0;
        for (std::size_t i = 0; i < len; ++i) {
          if (mask & (std::size_t{1} << i)) {
            sub = sub * 3 + digits[i];
            ++sub_len;
          }
        }
        bits[word_offset[sub_len] + sub / 64] |= std::uint64_t{1} << (sub % 64);
      }
    }
  }

  auto shares_length = [&](std::size_t a, std::size_t b, std::size_t len) {
    if (len > kMaxLen) return false;
    const std::uint64_t* x = &subsets[a * stride + word_offset[len]];
    const std::uint64_t* y = &subsets[b * stride + word_offset[len]];
    for (std::size_t w = 0; w < words[len]; ++w) {
      if (x[w] & y[w]) return true;
    }
    return false;
  };

  pairs_checked = 0;
  for (std::size_t a = 0; a < total; ++a) {
    for (std::size_t b = 0; b < total; ++b) {
      const std::size_t l = lcs_length(seqs[a], seqs[b]);
      if (l > std::min(lengths[a], lengths[b]) || !shares_length(a, b, l) || shares_length(a, b, l + 1)) {
        std::fprintf(stderr, "lcs mismatch on pair %zu, %zu: got %zu\n", a, b, l);
        return false;
      }
      ++pairs_checked;
    }
  }
  return true;
}

Outcome metric_oracles() {
  auto pairs = [](const char* hyp, const char* ref) { return std::vector<EvalPair>{{tokenize(hyp), tokenize(ref)}}; };
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failures.push_back(what);
  };

  const std::vector<EvalPair> identical = {{tokenize("the cat sat on the mat"), tokenize("the cat sat on the mat")}};
  expect(bleu(identical).bleu4() == 1.0, "bleu identical");
  expect(bleu(pairs("the the the the", "the cat sat down")).cumulative[0] == 0.25, "bleu-1 clipped");
  expect(bleu(pairs("", "the cat")).bleu4() == 0.0, "bleu empty hypothesis");
  expect(rouge_l(identical) == 1.0, "rouge-l identical");
  expect(lcs_length(tokenize("a b c d"), tokenize("a c b d")) == 3, "lcs worked example");
  expect(std::abs(rouge_l(pairs("a b c d", "a c b d")) - 0.75) < 1e-15, "rouge-l 0.75");
  expect(rouge_l(pairs("a b", "c d")) == 0.0, "rouge-l disjoint");
  expect(meteor(pairs("the cat", "the cat")) == 0.9375, "meteor 0.9375");
  expect(meteor(pairs("a b", "c d")) == 0.0, "meteor disjoint");
  const double p = 0.5, r = 1.0 / 3.0;
  expect(std::abs(meteor(pairs("dog x", "dog y z")) - 10 * p * r / (r + 9 * p) / 2) < 1e-15, "meteor single match");

  std::size_t checked = 0;
  const bool lcs_ok = lcs_exhaustive(checked);
  expect(lcs_ok, "exhaustive lcs");
  std::string detail = fmt("10 worked examples, LCS verified on %zu sequence pairs", checked);
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty(), detail};
}

Outcome attention_invariants() {
  Rng rng(2024);
  double worst_sum = 0.0, worst_envelope = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t m = 1 + rng.index(16), dl = 1 + rng.index(16), h = 1 + rng.index(16), d = 1 + rng.index(16);
    AttentionParams p{Matrix(d, dl), Matrix(d, h), Vector(d), Matrix(1, d)};
    for (double& v : p.region_proj.values()) v = rng.uniform(-2, 2);
    for (double& v : p.hidden_proj.values()) v = rng.uniform(-2, 2);
    for (double& v : p.bias) v = rng.uniform(-2, 2);
    for (double& v : p.score.values()) v = rng.uniform(-4, 4);
    Matrix L(m, dl);
    for (double& v : L.values()) v = rng.uniform(-5, 5);
    Vector hv(h);
    for (double& v : hv) v = rng.uniform(-1, 1);
    const AttentionWeights w = attention_scores(L, hv, p);
    double sum = 0.0;
    for (double k : w.k) sum += k;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const Vector v = context_vector(L, w);
    for (std::size_t c = 0; c < dl; ++c) {
      double lo = L(0, c), hi = L(0, c);
      for (std::size_t i = 1; i < m; ++i) {
        lo = std::min(lo, L(i, c));
        hi = std::max(hi, L(i, c));
      }
      worst_envelope = std::max({worst_envelope, lo - v[c], v[c] - hi});
    }
  }
  const bool pass = worst_sum <= 1e-12 && worst_envelope <= 0.0;
  return {pass, fmt("10000 draws, max |sum k - 1| = %.3g, max envelope excess = %.3g", worst_sum, worst_envelope)};
}

Outcome determinism() {
  std::vector<std::string> failures;
  const ModelConfig c = small_gradcheck_config(7).model;
  const auto batch = random_batch(c, 3, 5, 7);
  TrainConfig config;
  config.iterations = 40;
  config.learning_rate = 0.01;
  config.seed = 7;
  ModelParams a = random_params(c, config.init_scale, config.seed);
  ModelParams b = random_params(c, config.init_scale, config.seed);
  const auto trace_a = train(batch, a, config, {}, 1);
  const auto trace_b = train(batch, b, config, {}, 3);
  if (!same_bits(trace_a, trace_b) || !same_bits(a, b)) failures.push_back("loss trace");

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    SequenceFeatures f;
    f.global = Vector(1 + rng.index(10));
    for (double& v : f.global) v = static_cast<float>(rng.normal() * 100);
    const std::size_t n = 1 + rng.index(5), m = 1 + rng.index(6), dl = 1 + rng.index(6);
    for (std::size_t j = 0; j < n; ++j) {
      Matrix l(m, dl);
      for (double& v : l.values()) v = static_cast<float>(rng.uniform(-1e3, 1e3));
      f.locals.push_back(l);
    }
    const SequenceFeatures back = decode_features(encode_features(f));
    bool ok = same_bits(back.global.values(), f.global.values()) && back.locals.size() == f.locals.size();
    for (std::size_t j = 0; ok && j < n; ++j) ok = same_bits(back.locals[j].values(), f.locals[j].values());
    if (!ok) {
      failures.push_back("seqf round trip");
      break;
    }
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelParams p = random_params(c, 1.0, seed);
    if (!same_bits(decode_checkpoint(encode_checkpoint(p)), p)) {
      failures.push_back("checkpoint round trip");
      break;
    }
  }
  ModelConfig beam_config = c;
  beam_config.vocab = 9;
  std::size_t agree = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ModelParams p = random_params(beam_config, 2.0, seed);
    const auto features = random_batch(beam_config, 1, 1, seed + 500)[0].features;
    agree += beam_decode(features, p, 1, 10) == greedy_decode(features, p, 10);
  }
  if (agree != 100) failures.push_back("beam 1 vs greedy");
  std::string detail = fmt("loss trace bit-identical across runs and worker counts; seqf and checkpoint round trips "
                           "bit-exact; beam=1 equals greedy on %zu/100 models",
                           agree);
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"uniform-model loss", uniform_loss},
      {"overfit memorization", overfit},
      {"global-context ablation", global_context_ablation},
      {"beam-exhaustive equivalence", beam_exhaustive},
      {"metric oracles", metric_oracles},
      {"attention invariants", attention_invariants},
      {"determinism and round trips", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    failed += !outcome.pass;
    std::printf("criterion %zu %s: %s - %s\n", i + 1, criteria[i].first, outcome.pass ? "PASS" : "FAIL",
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

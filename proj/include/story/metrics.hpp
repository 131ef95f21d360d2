#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "story/corpus.hpp"

namespace story {

using Tokens = std::vector<std::string>;

/// A generated token sequence scored against a single reference.
struct EvalPair {
  Tokens hypothesis;
  Tokens reference;
};

struct BleuScores {
  std::array<double, 4> cumulative{};  // BLEU-1 .. BLEU-4
  double bleu4() const { return cumulative[3]; }
};

/// Corpus BLEU: clipped n-gram matches and totals pooled over all pairs, add-one
/// smoothing for orders with zero matches, brevity penalty from pooled lengths.
/// cumulative[k-1] = BP * exp(mean of ln p_1..p_k). Throws empty_input on no pairs.
BleuScores bleu(std::span<const EvalPair> pairs);

/// Length of the longest common subsequence.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// ROUGE-L F-measure for one pair, beta = 1.2; 0 when the LCS is empty.
double rouge_l_pair(const EvalPair& pair);
/// Mean of rouge_l_pair over the corpus.
double rouge_l(std::span<const EvalPair> pairs);

/// METEOR restricted to exact unigram matches, for one pair.
double meteor_pair(const EvalPair& pair);
/// Mean of meteor_pair over the corpus.
double meteor(std::span<const EvalPair> pairs);

struct MetricsReport {
  BleuScores bleu;
  double rouge_l = 0.0;
  double meteor = 0.0;
  std::size_t pair_count = 0;
};

enum class Pairing { sentence, story };

/// Pairs generated stories with references by id. With Pairing::sentence,
/// sentence j is scored against reference sentence j; with Pairing::story the
/// sentences of each story are concatenated first. Throws invalid_dimension
/// naming the story when ids or sentence counts disagree.
std::vector<EvalPair> pair_stories(std::span<const StorySample> generated, std::span<const StorySample> references,
                                   Pairing pairing);

MetricsReport evaluate_corpus(std::span<const StorySample> generated, std::span<const StorySample> references,
                              Pairing pairing = Pairing::sentence);
MetricsReport evaluate_pairs(std::span<const EvalPair> pairs);

struct MetricSelection {
  bool bleu = true;
  bool rouge = true;
  bool meteor = true;
};

/// {"bleu":[b1,b2,b3,b4],"bleu4":x,"rouge_l":x,"meteor":x,"pairs":n}; metrics
/// left out of `selection` are omitted.
std::string report_json(const MetricsReport& report, const MetricSelection& selection = {});

}  // namespace story

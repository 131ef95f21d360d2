#include "story/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "story/error.hpp"

namespace story {
namespace {

constexpr double kRougeBeta = 1.2;

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

void require_pairs(std::span<const EvalPair> pairs, const char* metric) {
  if (pairs.empty()) throw Error(ErrorCode::empty_input, std::string(metric) + " over an empty corpus");
}

Tokens sentence_tokens(const std::string& sentence) { return tokenize(sentence); }

}  // namespace

BleuScores bleu(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "BLEU");
  std::array<std::size_t, 4> matches{}, totals{};
  std::size_t hyp_len = 0, ref_len = 0;
  for (const auto& pair : pairs) {
    hyp_len += pair.hypothesis.size();
    ref_len += pair.reference.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const NgramCounts hyp = count_ngrams(pair.hypothesis, n);
      const NgramCounts ref = count_ngrams(pair.reference, n);
      for (const auto& [gram, count] : hyp) {
        auto it = ref.find(gram);
        if (it != ref.end()) matches[n - 1] += std::min(count, it->second);
      }
      if (pair.hypothesis.size() >= n) totals[n - 1] += pair.hypothesis.size() - n + 1;
    }
  }

  BleuScores scores;
  if (hyp_len == 0) return scores;
  const double brevity =
      hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double precision = matches[n] > 0
                                 ? static_cast<double>(matches[n]) / static_cast<double>(totals[n])
                                 : 1.0 / static_cast<double>(totals[n] + 1);
    log_sum += std::log(precision);
    scores.cumulative[n] = brevity * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return scores;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const EvalPair& pair) {
  const std::size_t lcs = lcs_length(pair.hypothesis, pair.reference);
  if (lcs == 0) return 0.0;
  const double recall = static_cast<double>(lcs) / static_cast<double>(pair.reference.size());
  const double precision = static_cast<double>(lcs) / static_cast<double>(pair.hypothesis.size());
  const double beta2 = kRougeBeta * kRougeBeta;
  return (1.0 + beta2) * recall * precision / (recall + beta2 * precision);
}

double rouge_l(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "ROUGE-L");
  double total = 0.0;
  for (const auto& pair : pairs) total += rouge_l_pair(pair);
  return total / static_cast<double>(pairs.size());
}

double meteor_pair(const EvalPair& pair) {
  const auto& hyp = pair.hypothesis;
  const auto& ref = pair.reference;
  // Greedy alignment: each hypothesis token, left to right, takes the earliest
  // unmatched reference occurrence.
  std::vector<bool> used(ref.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> alignment;
  for (std::size_t h = 0; h < hyp.size(); ++h) {
    for (std::size_t r = 0; r < ref.size(); ++r) {
      if (!used[r] && ref[r] == hyp[h]) {
        used[r] = true;
        alignment.emplace_back(h, r);
        break;
      }
    }
  }
  const std::size_t matched = alignment.size();
  if (matched == 0) return 0.0;

  std::size_t chunks = 1;
  for (std::size_t k = 1; k < alignment.size(); ++k) {
    const bool contiguous = alignment[k].first == alignment[k - 1].first + 1 &&
                            alignment[k].second == alignment[k - 1].second + 1;
    if (!contiguous) ++chunks;
  }
  const double m = static_cast<double>(matched);
  const double precision = m / static_cast<double>(hyp.size());
  const double recall = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double fragmentation = static_cast<double>(chunks) / m;
  const double penalty = 0.5 * fragmentation * fragmentation * fragmentation;
  return f_mean * (1.0 - penalty);
}

double meteor(std::span<const EvalPair> pairs) {
  require_pairs(pairs, "METEOR");
  double total = 0.0;
  for (const auto& pair : pairs) total += meteor_pair(pair);
  return total / static_cast<double>(pairs.size());
}

std::vector<EvalPair> pair_stories(std::span<const StorySample> generated, std::span<const StorySample> references,
                                   Pairing pairing) {
  std::unordered_map<std::string, const StorySample*> by_id;
  for (const auto& ref : references) by_id.emplace(ref.id, &ref);
  if (generated.size() != references.size()) {
    throw Error(ErrorCode::invalid_dimension, std::to_string(generated.size()) + " generated stories for " +
                                                  std::to_string(references.size()) + " references");
  }
  std::vector<EvalPair> pairs;
  for (const auto& gen : generated) {
    auto it = by_id.find(gen.id);
    if (it == by_id.end()) throw Error(ErrorCode::invalid_dimension, "story '" + gen.id + "' has no reference");
    const StorySample& ref = *it->second;
    if (gen.sentences.size() != ref.sentences.size()) {
      throw Error(ErrorCode::invalid_dimension, "story '" + gen.id + "' has " + std::to_string(gen.sentences.size()) +
                                                    " generated sentences but " +
                                                    std::to_string(ref.sentences.size()) + " references");
    }
    if (pairing == Pairing::sentence) {
      for (std::size_t j = 0; j < gen.sentences.size(); ++j) {
        pairs.push_back({sentence_tokens(gen.sentences[j]), sentence_tokens(ref.sentences[j])});
      }
    } else {
      EvalPair pair;
      for (std::size_t j = 0; j < gen.sentences.size(); ++j) {
        for (auto& t : sentence_tokens(gen.sentences[j])) pair.hypothesis.push_back(std::move(t));
        for (auto& t : sentence_tokens(ref.sentences[j])) pair.reference.push_back(std::move(t));
      }
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

MetricsReport evaluate_pairs(std::span<const EvalPair> pairs) {
  MetricsReport report;
  report.bleu = bleu(pairs);
  report.rouge_l = rouge_l(pairs);
  report.meteor = meteor(pairs);
  report.pair_count = pairs.size();
  return report;
}

MetricsReport evaluate_corpus(std::span<const StorySample> generated, std::span<const StorySample> references,
                              Pairing pairing) {
  const auto pairs = pair_stories(generated, references, pairing);
  return evaluate_pairs(pairs);
}

std::string report_json(const MetricsReport& report, const MetricSelection& selection) {
  nlohmann::ordered_json doc;
  if (selection.bleu) {
    doc["bleu"] = report.bleu.cumulative;
    doc["bleu4"] = report.bleu.bleu4();
  }
  if (selection.rouge) doc["rouge_l"] = report.rouge_l;
  if (selection.meteor) doc["meteor"] = report.meteor;
  doc["pairs"] = report.pair_count;
  return doc.dump();
}

}  // namespace story

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace story {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kFirstWordId = 4;

/// Token ids of one sentence. Training sentences end with kEos.
using SentenceIds = std::vector<TokenId>;

/// One story: an id, the features file it refers to, and one sentence per image.
struct StorySample {
  std::string id;
  std::string feature_ref;
  std::vector<std::string> sentences;

  bool operator==(const StorySample&) const = default;
};

/// Lowercases and splits on whitespace; the characters . , ! ? ; : " ( )
/// become standalone tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Maps word tokens to dense ids. Ids 0-3 are pad, bos, eos and unk; words
/// start at 4.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// `words` are the non-special tokens in id order (id = index + 4).
  /// Throws parse on duplicates or on words that collide with a special form.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const noexcept { return kFirstWordId + words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

  /// kUnk for unknown tokens.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  /// Surface form; specials render as <pad>, <bos>, <eos>, <unk>.
  /// Throws out_of_range for id >= size().
  const std::string& token(TokenId id) const;

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps the (max_size - 4) most frequent tokens, ties broken lexicographically.
/// Throws invalid_dimension when max_size < 5.
Vocabulary build_vocab(std::span<const StorySample> samples, std::size_t max_size);

/// tokenize, map to ids (unknown -> unk), append eos.
SentenceIds encode(std::string_view sentence, const Vocabulary& vocab);

/// Space-joined tokens with eos, pad and bos dropped; unk renders as "<unk>".
std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab);

// Vocabulary file: {"version":1,"tokens":[...]} with tokens indexed by id - 4.
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);
std::string vocabulary_json(const Vocabulary& vocab);

// Dataset manifest: JSON Lines of {"id","features","sentences"}.
// `expected_sentences` of 0 disables the sentence-count check.
std::vector<StorySample> read_manifest(const std::filesystem::path& path, std::size_t expected_sentences = 0);
std::vector<StorySample> parse_manifest(std::string_view text, std::size_t expected_sentences = 0);
void write_manifest(std::span<const StorySample> samples, const std::filesystem::path& path);
std::string manifest_line(const StorySample& sample);

}  // namespace story

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "story/corpus.hpp"
#include "story/math.hpp"
#include "story/random.hpp"

namespace story {

/// Visual features of one image sequence: a global vector and one
/// regions x channels matrix per image.
struct SequenceFeatures {
  Vector global;
  std::vector<Matrix> locals;

  std::size_t branches() const noexcept { return locals.size(); }
  std::size_t regions() const noexcept { return locals.empty() ? 0 : locals.front().rows(); }
  std::size_t channels() const noexcept { return locals.empty() ? 0 : locals.front().cols(); }

  bool operator==(const SequenceFeatures&) const = default;
};

/// Throws invalid_dimension unless there is at least one branch, all locals
/// share one non-empty shape and the global vector is non-empty; non_finite on NaN/Inf.
void validate(const SequenceFeatures& f);

// .seqf: little-endian "SEQF", u32 version=1, u32 N, D_g, M, D_l, then D_g
// f32 globals and N*M*D_l f32 locals (branch, region, channel order).
inline constexpr std::uint32_t kSeqfVersion = 1;

/// Values are narrowed to f32 on write.
void write_features(const SequenceFeatures& f, const std::filesystem::path& path);
std::vector<char> encode_features(const SequenceFeatures& f);
SequenceFeatures read_features(const std::filesystem::path& path);
SequenceFeatures decode_features(const std::vector<char>& bytes, const std::string& origin = "<memory>");

struct SynthSpec {
  std::size_t num_stories = 100;
  std::size_t num_topics = 2;
  std::size_t objects_per_image = 1;
  double noise_scale = 0.1;
  std::uint64_t seed = 0;
};

struct FeatureDims {
  std::size_t branches = 5;
  std::size_t global_dim = 4096;
  std::size_t regions = 196;
  std::size_t channels = 512;
};

/// Word lists the generator draws from. Topic t uses connectives[t]; topics
/// beyond the list use "topic<t>".
struct SynthVocabulary {
  std::vector<std::string> objects = {"dog",  "cat",  "car",   "tree",   "ball", "cake",
                                      "child", "boat", "house", "flower", "bird", "horse"};
  std::vector<std::string> relations = {"happy", "red", "small", "outside", "old", "wet"};
  std::vector<std::string> connectives = {"wedding", "game",   "party",  "beach",
                                          "concert", "museum", "parade", "trip"};

  std::string connective(std::size_t topic) const;
};

struct SyntheticStory {
  StorySample sample;
  SequenceFeatures features;
  std::size_t topic = 0;
};

/// Generates stories whose global vector is a noisy topic prototype and whose
/// local matrices hold noisy prototypes of the words each sentence mentions.
/// Sentences read "the <object> is <relation>"; the last one opens with
/// "at the <connective>", a function of the topic alone, and its image carries
/// a venue region that is the same for every topic. Prototypes are drawn
/// before any story, so a longer run extends a shorter one with the same seed.
/// All values are f32-representable, so corpora survive a .seqf round trip
/// bit-exactly.
std::vector<SyntheticStory> generate_synthetic(const SynthSpec& spec, const FeatureDims& dims,
                                               const SynthVocabulary& words = {});

}  // namespace story

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "story/corpus.hpp"
#include "story/error.hpp"
#include "story/features.hpp"
#include "story/random.hpp"

using namespace story;
namespace fs = std::filesystem;

namespace {

SequenceFeatures random_features(std::size_t n, std::size_t dg, std::size_t m, std::size_t dl, std::uint64_t seed) {
  Rng rng(seed);
  SequenceFeatures f;
  f.global = Vector(dg);
  for (double& v : f.global) v = static_cast<float>(rng.normal());
  for (std::size_t j = 0; j < n; ++j) {
    Matrix local(m, dl);
    for (double& v : local.values()) v = static_cast<float>(rng.uniform(-5, 5));
    f.locals.push_back(local);
  }
  return f;
}

ErrorCode decode_error(const std::vector<char>& bytes) {
  try {
    decode_features(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode succeeded");
  return ErrorCode::io;
}

void put_u32(std::vector<char>& bytes, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[offset + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_CASE("seqf size arithmetic") {
  SequenceFeatures f;
  f.global = Vector(2);
  f.locals.push_back(Matrix(1, 2));
  const fs::path path = fs::temp_directory_path() / "story_zeros.seqf";
  write_features(f, path);
  CHECK(fs::file_size(path) == 24 + 16);
  CHECK(read_features(path) == f);
  fs::remove(path);
}

TEST_CASE("seqf header layout") {
  const auto bytes = encode_features(random_features(3, 5, 2, 4, 1));
  REQUIRE(bytes.size() == 24 + 4 * (5 + 3 * 2 * 4));
  CHECK(std::memcmp(bytes.data(), "SEQF", 4) == 0);
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    return v;
  };
  CHECK(u32(4) == 1);
  CHECK(u32(8) == 3);
  CHECK(u32(12) == 5);
  CHECK(u32(16) == 2);
  CHECK(u32(20) == 4);
}

TEST_CASE("seqf round trip is bit exact") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SequenceFeatures f = random_features(1 + seed % 5, 1 + seed, 1 + seed % 3, 2 + seed % 4, seed);
    const SequenceFeatures back = decode_features(encode_features(f));
    REQUIRE(back.locals.size() == f.locals.size());
    CHECK(std::memcmp(back.global.values().data(), f.global.values().data(), 8 * f.global.size()) == 0);
    for (std::size_t j = 0; j < f.locals.size(); ++j) {
      CHECK(std::memcmp(back.locals[j].values().data(), f.locals[j].values().data(),
                        8 * f.locals[j].values().size()) == 0);
    }
  }
}

TEST_CASE("seqf error paths are distinct") {
  const auto good = encode_features(random_features(2, 3, 2, 2, 4));

  auto truncated = good;
  truncated.resize(good.size() - 1);
  CHECK(decode_error(truncated) == ErrorCode::short_read);
  CHECK(decode_error(std::vector<char>(good.begin(), good.begin() + 10)) == ErrorCode::short_read);

  auto magic = good;
  std::memcpy(magic.data(), "XXXX", 4);
  CHECK(decode_error(magic) == ErrorCode::bad_magic);

  auto version = good;
  put_u32(version, 4, 2);
  CHECK(decode_error(version) == ErrorCode::bad_version);

  auto zero_n = good;
  put_u32(zero_n, 8, 0);
  CHECK(decode_error(zero_n) == ErrorCode::invalid_dimension);

  auto huge = good;
  put_u32(huge, 8, 0xffffffffu);
  put_u32(huge, 16, 0xffffffffu);
  put_u32(huge, 20, 0xffffffffu);
  CHECK(decode_error(huge) == ErrorCode::invalid_dimension);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(decode_error(trailing) == ErrorCode::invalid_dimension);

  CHECK_THROWS_AS(read_features(fs::temp_directory_path() / "story_missing.seqf"), Error);
}

TEST_CASE("validate rejects inconsistent features") {
  SequenceFeatures f = random_features(2, 3, 2, 2, 1);
  CHECK_NOTHROW(validate(f));
  f.locals[1] = Matrix(3, 2);
  CHECK_THROWS_AS(validate(f), Error);
  CHECK_THROWS_AS(validate(SequenceFeatures{}), Error);
}

TEST_CASE("synthetic corpus is deterministic") {
  SynthSpec spec;
  spec.num_stories = 10;
  spec.seed = 7;
  const FeatureDims dims{5, 6, 4, 3};
  const auto a = generate_synthetic(spec, dims);
  const auto b = generate_synthetic(spec, dims);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample == b[i].sample);
    CHECK(encode_features(a[i].features) == encode_features(b[i].features));
  }
  spec.seed = 8;
  CHECK_FALSE(generate_synthetic(spec, dims)[0].features == a[0].features);
}

TEST_CASE("synthetic globals collapse without noise") {
  SynthSpec spec;
  spec.num_stories = 12;
  spec.num_topics = 1;
  spec.noise_scale = 0.0;
  const auto stories = generate_synthetic(spec, FeatureDims{5, 8, 4, 3});
  for (const auto& s : stories) CHECK(s.features.global == stories[0].features.global);
}

TEST_CASE("synthetic connective is a function of topic") {
  SynthSpec spec;
  spec.num_stories = 100;
  spec.num_topics = 2;
  spec.seed = 13;
  const SynthVocabulary words;
  const auto stories = generate_synthetic(spec, FeatureDims{5, 16, 4, 8}, words);
  std::set<std::size_t> topics;
  for (const auto& s : stories) {
    topics.insert(s.topic);
    REQUIRE(s.sample.sentences.size() == 5);
    const auto last = tokenize(s.sample.sentences[4]);
    CHECK(std::count(last.begin(), last.end(), words.connective(s.topic)) == 1);
    CHECK(std::count(last.begin(), last.end(), words.connective(1 - s.topic)) == 0);
    for (std::size_t j = 0; j < 4; ++j) {
      for (const auto& c : words.connectives) CHECK(s.sample.sentences[j].find(c) == std::string::npos);
    }
    CHECK(s.features.branches() == 5);
    CHECK(s.features.regions() == 4);
    CHECK(s.features.channels() == 8);
    CHECK(s.sample.feature_ref == s.sample.id + ".seqf");
  }
  CHECK(topics.size() == 2);
}

TEST_CASE("synthetic locals carry the mentioned object prototype") {
  SynthSpec spec;
  spec.num_stories = 40;
  spec.noise_scale = 0.0;
  const SynthVocabulary words;
  const auto stories = generate_synthetic(spec, FeatureDims{5, 4, 5, 6}, words);
  // With no noise, two images that mention the same object share an exact row.
  auto object_of = [&](const std::string& sentence) {
    const auto toks = tokenize(sentence);
    const auto it = std::find(toks.begin(), toks.end(), "is");
    return *(it - 1);
  };
  auto rows_of = [](const Matrix& m) {
    std::set<std::vector<double>> rows;
    for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace(m.row(r).begin(), m.row(r).end());
    return rows;
  };
  const std::string target = object_of(stories[0].sample.sentences[0]);
  const auto base = rows_of(stories[0].features.locals[0]);
  int checked = 0;
  for (const auto& s : stories) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (object_of(s.sample.sentences[j]) != target) continue;
      const auto rows = rows_of(s.features.locals[j]);
      bool shared = false;
      for (const auto& r : rows) {
        if (std::any_of(r.begin(), r.end(), [](double v) { return v != 0.0; }) && base.count(r)) shared = true;
      }
      CHECK(shared);
      ++checked;
    }
  }
  CHECK(checked > 1);
}

TEST_CASE("synthetic corpora survive the seqf format") {
  SynthSpec spec;
  spec.num_stories = 3;
  for (const auto& s : generate_synthetic(spec, FeatureDims{5, 7, 4, 3})) {
    CHECK(decode_features(encode_features(s.features)) == s.features);
  }
}

TEST_CASE("synthetic spec validation") {
  SynthSpec spec;
  spec.num_stories = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, FeatureDims{5, 4, 4, 3}), Error);
  spec.num_stories = 1;
  spec.noise_scale = -1;
  CHECK_THROWS_AS(generate_synthetic(spec, FeatureDims{5, 4, 4, 3}), Error);
  spec.noise_scale = 0.1;
  CHECK_THROWS_AS(generate_synthetic(spec, FeatureDims{5, 4, 2, 3}), Error);
  spec.objects_per_image = 2;
  const auto two = generate_synthetic(spec, FeatureDims{5, 4, 4, 3});
  CHECK(two[0].sample.sentences[0].find(" and the ") != std::string::npos);
}

TEST_CASE("connective names beyond the list") {
  const SynthVocabulary words;
  CHECK(words.connective(0) == "wedding");
  CHECK(words.connective(1) == "game");
  CHECK(words.connective(20) == "topic20");
}

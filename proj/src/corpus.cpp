#include "story/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "story/error.hpp"

namespace story {
namespace {

const std::array<std::string, 4> kSpecialForms = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_split_char(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':': case '"': case '(': case ')':
      return true;
    default:
      return false;
  }
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_special_form(std::string_view token) {
  return std::find(kSpecialForms.begin(), kSpecialForms.end(), token) != kSpecialForms.end();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_split_char(c)) {
      flush();
      tokens.emplace_back(1, c);
    } else {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::string& w = words_[i];
    if (w.empty() || is_special_form(w)) throw Error(ErrorCode::parse, "invalid vocabulary token '" + w + "'");
    if (!index_.emplace(w, static_cast<TokenId>(kFirstWordId + i)).second) {
      throw Error(ErrorCode::parse, "duplicate vocabulary token '" + w + "'");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < kFirstWordId) return kSpecialForms[id];
  if (id >= size()) {
    throw Error(ErrorCode::out_of_range,
                "token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return words_[id - kFirstWordId];
}

Vocabulary build_vocab(std::span<const StorySample> samples, std::size_t max_size) {
  if (max_size < kFirstWordId + 1) {
    throw Error(ErrorCode::invalid_dimension, "vocabulary max_size must be at least 5, got " + std::to_string(max_size));
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& sample : samples) {
    for (const auto& sentence : sample.sentences) {
      for (auto& token : tokenize(sentence)) {
        if (!is_special_form(token)) ++counts[std::move(token)];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is already in lexicographic order, so a stable sort on frequency
  // leaves ties lexicographic.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kFirstWordId);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(std::move(ranked[i].first));
  return Vocabulary(std::move(words));
}

SentenceIds encode(std::string_view sentence, const Vocabulary& vocab) {
  SentenceIds ids;
  for (const auto& token : tokenize(sentence)) ids.push_back(vocab.id(token));
  ids.push_back(kEos);
  return ids;
}

std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::string vocabulary_json(const Vocabulary& vocab) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["tokens"] = vocab.words();
  return doc.dump();
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  write_file(path, vocabulary_json(vocab) + "\n");
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("version", 0) != 1 || !doc.contains("tokens") || !doc["tokens"].is_array()) {
    throw Error(ErrorCode::parse, path.string() + ": expected {\"version\":1,\"tokens\":[...]}");
  }
  std::vector<std::string> words;
  for (const auto& t : doc["tokens"]) {
    if (!t.is_string()) throw Error(ErrorCode::parse, path.string() + ": non-string token");
    words.push_back(t.get<std::string>());
  }
  return Vocabulary(std::move(words));
}

std::string manifest_line(const StorySample& sample) {
  nlohmann::json doc;
  doc["id"] = sample.id;
  doc["features"] = sample.feature_ref;
  doc["sentences"] = sample.sentences;
  return doc.dump();
}

std::vector<StorySample> parse_manifest(std::string_view text, std::size_t expected_sentences) {
  std::vector<StorySample> samples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, where + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("id") || !doc["id"].is_string() || !doc.contains("features") ||
        !doc["features"].is_string() || !doc.contains("sentences") || !doc["sentences"].is_array()) {
      throw Error(ErrorCode::parse, where + ": expected {\"id\":str,\"features\":str,\"sentences\":[str...]}");
    }
    StorySample sample;
    sample.id = doc["id"].get<std::string>();
    sample.feature_ref = doc["features"].get<std::string>();
    for (const auto& s : doc["sentences"]) {
      if (!s.is_string()) throw Error(ErrorCode::parse, where + ": non-string sentence");
      sample.sentences.push_back(s.get<std::string>());
    }
    if (expected_sentences != 0 && sample.sentences.size() != expected_sentences) {
      throw Error(ErrorCode::invalid_dimension, "story '" + sample.id + "' has " +
                                                    std::to_string(sample.sentences.size()) + " sentences, expected " +
                                                    std::to_string(expected_sentences));
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<StorySample> read_manifest(const std::filesystem::path& path, std::size_t expected_sentences) {
  return parse_manifest(read_file(path), expected_sentences);
}

void write_manifest(std::span<const StorySample> samples, const std::filesystem::path& path) {
  std::string text;
  for (const auto& s : samples) text += manifest_line(s) + "\n";
  write_file(path, text);
}

}  // namespace story

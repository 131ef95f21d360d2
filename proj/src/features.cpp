#include "story/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "story/error.hpp"

namespace story {
namespace {

static_assert(std::endian::native == std::endian::little, ".seqf I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'E', 'Q', 'F'};
constexpr std::size_t kHeaderBytes = 24;

void put_u32(std::vector<char>& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.insert(out.end(), buf, buf + 4);
}

void put_f32(std::vector<char>& out, double v) {
  const float f = static_cast<float>(v);
  char buf[4];
  std::memcpy(buf, &f, 4);
  out.insert(out.end(), buf, buf + 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

double get_f32(const char* p) {
  float f;
  std::memcpy(&f, p, 4);
  return static_cast<double>(f);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw Error(ErrorCode::invalid_dimension, std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void validate(const SequenceFeatures& f) {
  if (f.global.empty()) throw Error(ErrorCode::invalid_dimension, "features: empty global vector");
  if (f.locals.empty()) throw Error(ErrorCode::invalid_dimension, "features: no local matrices");
  const std::size_t m = f.locals.front().rows();
  const std::size_t d = f.locals.front().cols();
  if (m == 0 || d == 0) throw Error(ErrorCode::invalid_dimension, "features: empty local matrix");
  for (const auto& l : f.locals) {
    if (l.rows() != m || l.cols() != d) {
      throw Error(ErrorCode::invalid_dimension,
                  "features: local matrices disagree in shape (" + shape_string(l) + " vs " +
                      std::to_string(m) + "x" + std::to_string(d) + ")");
    }
    ensure_finite(l.values(), "local features");
  }
  ensure_finite(f.global.values(), "global features");
}

std::vector<char> encode_features(const SequenceFeatures& f) {
  validate(f);
  const std::size_t n = f.branches(), m = f.regions(), d = f.channels();
  std::vector<char> out(kMagic, kMagic + 4);
  out.reserve(kHeaderBytes + 4 * (f.global.size() + n * m * d));
  put_u32(out, kSeqfVersion);
  put_u32(out, checked_u32(n, "N"));
  put_u32(out, checked_u32(f.global.size(), "D_g"));
  put_u32(out, checked_u32(m, "M"));
  put_u32(out, checked_u32(d, "D_l"));
  for (double v : f.global) put_f32(out, v);
  for (const auto& l : f.locals) {
    for (double v : l.values()) put_f32(out, v);
  }
  return out;
}

void write_features(const SequenceFeatures& f, const std::filesystem::path& path) {
  const auto bytes = encode_features(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

SequenceFeatures decode_features(const std::vector<char>& bytes, const std::string& origin) {
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::short_read, origin + ": short read in header (" + std::to_string(bytes.size()) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::bad_magic, origin + ": bad magic, not a .seqf file");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kSeqfVersion) {
    throw Error(ErrorCode::bad_version, origin + ": unsupported .seqf version " + std::to_string(version));
  }
  const std::uint64_t n = get_u32(bytes.data() + 8);
  const std::uint64_t dg = get_u32(bytes.data() + 12);
  const std::uint64_t m = get_u32(bytes.data() + 16);
  const std::uint64_t dl = get_u32(bytes.data() + 20);
  if (n == 0 || dg == 0 || m == 0 || dl == 0) {
    throw Error(ErrorCode::invalid_dimension, origin + ": header has a zero dimension (N=" + std::to_string(n) +
                                                  " D_g=" + std::to_string(dg) + " M=" + std::to_string(m) +
                                                  " D_l=" + std::to_string(dl) + ")");
  }
  // Each factor is < 2^32, so n*m fits; guard the final product.
  const std::uint64_t nm = n * m;
  if (dl > (UINT64_MAX / 4 - dg) / nm) throw Error(ErrorCode::invalid_dimension, origin + ": dimensions overflow");
  const std::uint64_t payload = 4 * (dg + nm * dl);
  if (bytes.size() - kHeaderBytes < payload) {
    throw Error(ErrorCode::short_read, origin + ": short read, payload needs " + std::to_string(payload) +
                                           " bytes but only " + std::to_string(bytes.size() - kHeaderBytes) +
                                           " remain");
  }
  if (bytes.size() - kHeaderBytes > payload) {
    throw Error(ErrorCode::invalid_dimension, origin + ": " + std::to_string(bytes.size() - kHeaderBytes - payload) +
                                                  " trailing bytes after the payload");
  }
  const char* p = bytes.data() + kHeaderBytes;
  SequenceFeatures f;
  f.global = Vector(dg);
  for (std::size_t i = 0; i < dg; ++i, p += 4) f.global[i] = get_f32(p);
  f.locals.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    Matrix l(m, dl);
    for (double& v : l.values()) {
      v = get_f32(p);
      p += 4;
    }
    f.locals.push_back(std::move(l));
  }
  validate(f);
  return f;
}

SequenceFeatures read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_features(bytes, path.string());
}

std::string SynthVocabulary::connective(std::size_t topic) const {
  if (topic < connectives.size()) return connectives[topic];
  return "topic" + std::to_string(topic);
}

std::vector<SyntheticStory> generate_synthetic(const SynthSpec& spec, const FeatureDims& dims,
                                               const SynthVocabulary& words) {
  if (spec.num_stories == 0 || spec.num_topics == 0 || spec.objects_per_image == 0) {
    throw Error(ErrorCode::invalid_dimension, "synth: counts must be at least 1");
  }
  if (!(spec.noise_scale >= 0.0)) throw Error(ErrorCode::invalid_dimension, "synth: noise_scale must be >= 0");
  if (dims.branches == 0 || dims.global_dim == 0 || dims.regions == 0 || dims.channels == 0) {
    throw Error(ErrorCode::invalid_dimension, "synth: feature dimensions must be at least 1");
  }
  if (dims.regions < spec.objects_per_image + 2) {
    throw Error(ErrorCode::invalid_dimension, "synth: M=" + std::to_string(dims.regions) +
                                                  " regions cannot hold " + std::to_string(spec.objects_per_image) +
                                                  " objects, a relation and the venue");
  }
  if (words.objects.size() < spec.objects_per_image || words.relations.empty()) {
    throw Error(ErrorCode::invalid_dimension, "synth: word lists too small");
  }

  Rng rng(spec.seed);
  auto gaussian_vector = [&](std::size_t len) {
    std::vector<double> v(len);
    for (double& x : v) x = rng.normal();
    return v;
  };
  std::vector<std::vector<double>> topic_protos, object_protos, relation_protos;
  for (std::size_t t = 0; t < spec.num_topics; ++t) topic_protos.push_back(gaussian_vector(dims.global_dim));
  for (std::size_t o = 0; o < words.objects.size(); ++o) object_protos.push_back(gaussian_vector(dims.channels));
  for (std::size_t r = 0; r < words.relations.size(); ++r) relation_protos.push_back(gaussian_vector(dims.channels));
  // Shared by every topic: the last image shows "a venue", never which one.
  const std::vector<double> venue_proto = gaussian_vector(dims.channels);

  const double noise = spec.noise_scale;
  std::vector<SyntheticStory> out;
  out.reserve(spec.num_stories);
  for (std::size_t s = 0; s < spec.num_stories; ++s) {
    SyntheticStory story;
    story.topic = rng.index(spec.num_topics);
    std::ostringstream id;
    id << "synth-" << std::setw(6) << std::setfill('0') << s;
    story.sample.id = id.str();
    story.sample.feature_ref = story.sample.id + ".seqf";

    story.features.global = Vector(dims.global_dim);
    for (std::size_t k = 0; k < dims.global_dim; ++k) {
      story.features.global[k] = round_f32(topic_protos[story.topic][k] + noise * rng.normal());
    }

    for (std::size_t j = 0; j < dims.branches; ++j) {
      // Distinct objects for this image, then one relation.
      std::vector<std::size_t> pool(words.objects.size());
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      std::vector<std::size_t> objects;
      for (std::size_t k = 0; k < spec.objects_per_image; ++k) {
        const std::size_t pick = k + rng.index(pool.size() - k);
        std::swap(pool[k], pool[pick]);
        objects.push_back(pool[k]);
      }
      const std::size_t relation = rng.index(words.relations.size());

      std::vector<const std::vector<double>*> rows;
      for (std::size_t o : objects) rows.push_back(&object_protos[o]);
      rows.push_back(&relation_protos[relation]);
      const bool last = j + 1 == dims.branches;
      if (last) rows.push_back(&venue_proto);
      rows.resize(dims.regions, nullptr);  // background regions
      for (std::size_t i = rows.size() - 1; i > 0; --i) std::swap(rows[i], rows[rng.index(i + 1)]);

      Matrix local(dims.regions, dims.channels);
      for (std::size_t i = 0; i < dims.regions; ++i) {
        for (std::size_t c = 0; c < dims.channels; ++c) {
          const double base = rows[i] ? (*rows[i])[c] : 0.0;
          local(i, c) = round_f32(base + noise * rng.normal());
        }
      }
      story.features.locals.push_back(std::move(local));

      std::string sentence = last ? "at the " + words.connective(story.topic) + " the " : "the ";
      sentence += words.objects[objects[0]];
      for (std::size_t k = 1; k < objects.size(); ++k) sentence += " and the " + words.objects[objects[k]];
      sentence += objects.size() == 1 ? " is " : " are ";
      sentence += words.relations[relation];
      story.sample.sentences.push_back(std::move(sentence));
    }
    out.push_back(std::move(story));
  }
  return out;
}

}  // namespace story

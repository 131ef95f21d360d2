#include "story/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "story/decoder.hpp"
#include "story/encoder.hpp"
#include "story/error.hpp"
#include "story/parallel.hpp"
#include "story/random.hpp"

namespace story {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'L', 'T', 'M'};
constexpr std::size_t kConfigFields = 9;
constexpr std::size_t kHeaderBytes = 8 + 4 * kConfigFields;

std::size_t total_words(std::span<const Example> batch) {
  std::size_t words = 0;
  for (const auto& ex : batch) {
    for (const auto& s : ex.sentences) words += s.size();
  }
  return words;
}

void check_batch(std::span<const Example> batch) {
  if (batch.empty()) throw Error(ErrorCode::empty_input, "loss over an empty batch");
  if (total_words(batch) == 0) throw Error(ErrorCode::empty_input, "batch contains no words");
}

// Log-likelihood of one example; when `grads` is given, also accumulates the
// gradient of -scale * log-likelihood.
double example_pass(const Example& ex, const ModelParams& params, double scale, ModelParams* grads,
                    BackwardFault fault) {
  const auto& f = ex.features;
  if (ex.sentences.size() != f.branches()) {
    throw Error(ErrorCode::dimension_mismatch, "example has " + std::to_string(ex.sentences.size()) +
                                                   " sentences for " + std::to_string(f.branches()) + " branches");
  }
  if (!grads) return story_log_likelihood(f, ex.sentences, params);

  const Vector h0 = initial_hidden(f, params);
  Vector dh0(params.config.hidden);
  double total = 0.0;
  for (std::size_t j = 0; j < f.branches(); ++j) {
    const auto& sentence = ex.sentences[j];
    if (sentence.empty() || sentence.back() != kEos) {
      throw Error(ErrorCode::invalid_argument, "training sentences must be non-empty and end with eos");
    }
    const BranchRollout rollout = teacher_forced_rollout(f.locals[j], h0, sentence, params);
    total += rollout.log_prob;
    rollout_backward(f.locals[j], rollout, scale, params, *grads, dh0.values(), fault);
  }
  if (params.config.global_context) embed_global_backward(f.global, params.encoder, dh0.values(), grads->encoder, fault);
  return total;
}

void zero(ModelParams& p) {
  for_each_tensor(p, [](std::string_view, std::span<double> v, bool) { std::fill(v.begin(), v.end(), 0.0); });
}

void add_params(ModelParams& into, const ModelParams& from) {
  auto dst = tensor_views(into);
  const auto src = tensor_views(from);
  for (std::size_t t = 0; t < dst.size(); ++t) add_to(dst[t].values, src[t].values);
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.insert(out.end(), buf, buf + 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

double Gradients::global_norm() const {
  double sq = 0.0;
  for_each_tensor(wrt, [&](std::string_view, std::span<const double> v, bool) {
    for (double g : v) sq += g * g;
  });
  return std::sqrt(sq);
}

double loss(std::span<const Example> batch, const ModelParams& params) {
  check_batch(batch);
  double total = 0.0;
  for (const auto& ex : batch) total += example_pass(ex, params, 0.0, nullptr, BackwardFault::none);
  const double value = -total / static_cast<double>(total_words(batch));
  if (!std::isfinite(value)) throw Error(ErrorCode::non_finite, "loss is not finite");
  return value;
}

LossAndGradients gradients(std::span<const Example> batch, const ModelParams& params, BackwardFault fault,
                           std::size_t workers) {
  check_batch(batch);
  const double scale = 1.0 / static_cast<double>(total_words(batch));
  LossAndGradients out;
  out.grads.wrt = zero_params(params.config);
  out.grads.wrt.config = params.config;

  // Each example lands in its own zeroed buffer and buffers are folded in
  // example order, so the sum does not depend on the number of workers.
  const std::size_t lanes = std::clamp<std::size_t>(workers, 1, batch.size());
  std::vector<ModelParams> buffers(lanes, zero_params(params.config));
  std::vector<double> log_likelihoods(batch.size());
  double total = 0.0;
  for (std::size_t start = 0; start < batch.size(); start += lanes) {
    const std::size_t count = std::min(lanes, batch.size() - start);
    parallel_for(count, lanes, [&](std::size_t k) {
      zero(buffers[k]);
      log_likelihoods[start + k] = example_pass(batch[start + k], params, scale, &buffers[k], fault);
    });
    for (std::size_t k = 0; k < count; ++k) {
      add_params(out.grads.wrt, buffers[k]);
      total += log_likelihoods[start + k];
    }
  }
  out.loss = -total / static_cast<double>(total_words(batch));
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::non_finite, "loss is not finite");
  return out;
}

void step(ModelParams& params, const Gradients& grads, const TrainConfig& config, OptimizerState& state) {
  if (!(config.learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning_rate must be positive");
  auto theta = tensor_views(params);
  const auto g = tensor_views(grads.wrt);
  if (theta.size() != g.size()) throw Error(ErrorCode::dimension_mismatch, "gradients do not match parameters");
  for (std::size_t t = 0; t < theta.size(); ++t) {
    if (theta[t].values.size() != g[t].values.size()) {
      throw Error(ErrorCode::dimension_mismatch, "gradient for " + std::string(theta[t].name) + " has " +
                                                     std::to_string(g[t].values.size()) + " entries, expected " +
                                                     std::to_string(theta[t].values.size()));
    }
  }

  double clip_scale = 1.0;
  if (config.grad_clip) {
    const double norm = grads.global_norm();
    if (norm > *config.grad_clip) clip_scale = *config.grad_clip / norm;
  }

  const double lr = config.learning_rate;
  if (config.optimizer == OptimizerKind::sgd) {
    for (std::size_t t = 0; t < theta.size(); ++t) {
      for (std::size_t i = 0; i < theta[t].values.size(); ++i) theta[t].values[i] -= lr * (clip_scale * g[t].values[i]);
    }
    ++state.steps;
    return;
  }

  const std::size_t n = parameter_count(params);
  if (state.first_moment.size() != n) {
    state.first_moment.assign(n, 0.0);
    state.second_moment.assign(n, 0.0);
    state.steps = 0;
  }
  ++state.steps;
  const double b1 = config.beta1, b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
  std::size_t flat = 0;
  for (std::size_t t = 0; t < theta.size(); ++t) {
    for (std::size_t i = 0; i < theta[t].values.size(); ++i, ++flat) {
      const double grad = clip_scale * g[t].values[i];
      double& m = state.first_moment[flat];
      double& v = state.second_moment[flat];
      m = b1 * m + (1.0 - b1) * grad;
      v = b2 * v + (1.0 - b2) * grad * grad;
      theta[t].values[i] -= lr * (m / correction1) / (std::sqrt(v / correction2) + config.epsilon);
    }
  }
}

std::vector<double> train(std::span<const Example> batch, ModelParams& params, const TrainConfig& config,
                          const std::function<void(std::size_t, double)>& on_iteration, std::size_t workers) {
  OptimizerState state;
  std::vector<double> trace;
  trace.reserve(config.iterations);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    LossAndGradients lg = gradients(batch, params, BackwardFault::none, workers);
    trace.push_back(lg.loss);
    step(params, lg.grads, config, state);
    if (on_iteration) on_iteration(it, lg.loss);
  }
  return trace;
}

GradCheckConfig small_gradcheck_config(std::uint64_t seed) {
  GradCheckConfig c;
  c.model.hidden = 4;
  c.model.embed = 4;
  c.model.local_dim = 4;
  c.model.global_dim = 6;
  c.model.regions = 3;
  c.model.vocab = 7;
  c.model.branches = 2;
  c.model.mlp_dim = 4;
  c.model.attention_dim = 4;
  c.seed = seed;
  return c;
}

std::vector<Example> random_batch(const ModelConfig& config, std::size_t stories, std::size_t max_sentence_len,
                                  std::uint64_t seed) {
  validate(config);
  if (max_sentence_len == 0) throw Error(ErrorCode::invalid_argument, "max_sentence_len must be at least 1");
  Rng rng(seed);
  std::vector<Example> batch(stories);
  const std::size_t words = config.vocab - kFirstWordId;
  for (auto& ex : batch) {
    ex.features.global = Vector(config.global_dim);
    for (double& v : ex.features.global) v = rng.normal();
    for (std::size_t j = 0; j < config.branches; ++j) {
      Matrix l(config.regions, config.local_dim);
      for (double& v : l.values()) v = rng.normal();
      ex.features.locals.push_back(std::move(l));
      SentenceIds s;
      const std::size_t len = 1 + rng.index(max_sentence_len);
      for (std::size_t t = 0; t + 1 < len; ++t) s.push_back(static_cast<TokenId>(kFirstWordId + rng.index(words)));
      s.push_back(kEos);
      ex.sentences.push_back(std::move(s));
    }
  }
  return batch;
}

GradCheckReport grad_check(const GradCheckConfig& config) {
  const ModelParams params = random_params(config.model, config.init_scale, config.seed);
  const auto batch = random_batch(config.model, config.stories, config.max_sentence_len, config.seed ^ 0x5EEDULL);
  const LossAndGradients analytic = gradients(batch, params, config.fault);

  GradCheckReport report;
  ModelParams probe = params;
  auto probe_views = tensor_views(probe);
  const auto grad_views = tensor_views(analytic.grads.wrt);
  Rng rng(config.seed * 7919 + 17);
  for (std::size_t t = 0; t < probe_views.size(); ++t) {
    auto values = probe_views[t].values;
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > config.max_coords_per_tensor) {
      for (std::size_t i = 0; i < config.max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
      }
      coords.resize(config.max_coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const double original = values[i];
      values[i] = original + config.epsilon;
      const double up = loss(batch, probe);
      values[i] = original - config.epsilon;
      const double down = loss(batch, probe);
      values[i] = original;
      const double numeric = (up - down) / (2.0 * config.epsilon);
      const double exact = grad_views[t].values[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double rel = std::abs(exact - numeric) / denom;
      ++report.coordinates;
      if (report.worst_tensor.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = std::string(probe_views[t].name);
        report.worst_index = i;
      }
    }
  }
  return report;
}

std::vector<char> encode_checkpoint(const ModelParams& params) {
  const ModelConfig& c = params.config;
  validate(c);
  std::vector<char> out(kMagic, kMagic + 4);
  out.reserve(kHeaderBytes + 8 * parameter_count(params));
  put_u32(out, kCheckpointVersion);
  for (std::size_t v : {c.global_dim, c.local_dim, c.regions, c.hidden, c.embed, c.vocab, c.branches, c.mlp_dim,
                        c.attention_dim}) {
    if (v > 0xFFFFFFFFu) throw Error(ErrorCode::invalid_dimension, "model dimension does not fit in u32");
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  const ModelParams expected = zero_params(c);
  const auto want = tensor_views(expected);
  const auto have = tensor_views(params);
  for (std::size_t t = 0; t < have.size(); ++t) {
    if (have[t].values.size() != want[t].values.size()) {
      throw Error(ErrorCode::dimension_mismatch,
                  "tensor " + std::string(have[t].name) + " does not match the model configuration");
    }
    const char* raw = reinterpret_cast<const char*>(have[t].values.data());
    out.insert(out.end(), raw, raw + 8 * have[t].values.size());
  }
  return out;
}

ModelParams decode_checkpoint(const std::vector<char>& bytes, const std::string& origin) {
  if (bytes.size() < 8) throw Error(ErrorCode::short_read, origin + ": short read in checkpoint header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::bad_magic, origin + ": bad magic, not a checkpoint");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::bad_version, origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (bytes.size() < kHeaderBytes) throw Error(ErrorCode::short_read, origin + ": short read in checkpoint header");
  std::size_t dims[kConfigFields];
  for (std::size_t i = 0; i < kConfigFields; ++i) dims[i] = get_u32(bytes.data() + 8 + 4 * i);
  ModelConfig c;
  c.global_dim = dims[0];
  c.local_dim = dims[1];
  c.regions = dims[2];
  c.hidden = dims[3];
  c.embed = dims[4];
  c.vocab = dims[5];
  c.branches = dims[6];
  c.mlp_dim = dims[7];
  c.attention_dim = dims[8];
  try {
    validate(c);
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_dimension, origin + ": " + e.what());
  }

  // Tensor sizes are products of two u32 values; a 128-bit sum cannot
  // overflow, so the size check happens before any allocation.
  using Wide = unsigned __int128;
  const Wide h = c.hidden, e = c.embed, v = c.vocab, dl = c.local_dim, dg = c.global_dim, mid = c.mlp_dim,
                      att = c.attention_dim;
  const Wide count = mid * dg + mid + h * mid + att * dl + att * h + att + att + v * e +
                              4 * (h * e + h * h + h * dl + h) + v * h + v;
  const Wide available = bytes.size() - kHeaderBytes;
  if (available < count * 8) {
    throw Error(ErrorCode::short_read, origin + ": short read, only " + std::to_string(bytes.size() - kHeaderBytes) +
                                           " tensor bytes for the configured model");
  }
  if (available != count * 8) {
    throw Error(ErrorCode::invalid_dimension,
                origin + ": " + std::to_string(static_cast<std::uint64_t>(available - count * 8)) +
                    " trailing bytes after the last tensor");
  }
  ModelParams p = zero_params(c);
  const char* cursor = bytes.data() + kHeaderBytes;
  for_each_tensor(p, [&](std::string_view, std::span<double> values, bool) {
    std::memcpy(values.data(), cursor, 8 * values.size());
    cursor += 8 * values.size();
  });
  for_each_tensor(p, [&](std::string_view name, std::span<const double> values, bool) {
    ensure_finite(values, std::string(name).c_str());
  });
  return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace story

#include "story/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "story/corpus.hpp"
#include "story/decoder.hpp"
#include "story/encoder.hpp"
#include "story/error.hpp"
#include "story/features.hpp"
#include "story/metrics.hpp"
#include "story/parallel.hpp"
#include "story/trainer.hpp"

namespace story {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

constexpr double kGradCheckTolerance = 1e-4;

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  return out;
}

template <class T>
T json_get(const Json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::parse, "config key '" + key + "' has the wrong type");
  }
}

std::size_t json_count(const Json& value, const std::string& key) {
  if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0)) {
    throw Error(ErrorCode::parse, "config key '" + key + "' must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw Error(ErrorCode::parse, "unknown optimizer '" + name + "' (expected adam or sgd)");
}

// Subcommand-independent flags, bound once per invocation.
struct CommonFlags {
  std::string config_path;
  std::string manifest, features_dir, vocab, model, out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) apply_config_json(cfg, read_text(flags.config_path));
  if (!flags.manifest.empty()) cfg.manifest = flags.manifest;
  if (!flags.features_dir.empty()) cfg.features_dir = flags.features_dir;
  if (!flags.vocab.empty()) cfg.vocab = flags.vocab;
  if (!flags.model.empty()) cfg.checkpoint = flags.model;
  if (flags.seed_opt && flags.seed_opt->count() > 0) cfg.train.seed = flags.seed;
  return cfg;
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw Error(ErrorCode::invalid_argument, std::string("missing ") + what);
}

void require_file(const std::string& path, const char* what) {
  require(path, what);
  if (!fs::exists(path)) throw Error(ErrorCode::io, std::string(what) + " not found: " + path);
}

fs::path features_root(const RunConfig& cfg) {
  if (!cfg.features_dir.empty()) return cfg.features_dir;
  return fs::path(cfg.manifest).parent_path();
}

std::vector<SequenceFeatures> load_all_features(const std::vector<StorySample>& samples, const fs::path& root) {
  std::vector<SequenceFeatures> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(read_features(root / s.feature_ref));
  return out;
}

void check_dim(const std::optional<std::size_t>& configured, std::size_t actual, const char* name) {
  if (configured && *configured != actual) {
    throw Error(ErrorCode::config_conflict, std::string("configured ") + name + "=" + std::to_string(*configured) +
                                                " but the features have " + name + "=" + std::to_string(actual));
  }
}

ModelConfig model_config_for(const RunConfig& cfg, const SequenceFeatures& sample, std::size_t vocab_size) {
  check_dim(cfg.global_dim, sample.global.size(), "D_g");
  check_dim(cfg.local_dim, sample.channels(), "D_l");
  check_dim(cfg.regions, sample.regions(), "M");
  check_dim(cfg.branches, sample.branches(), "N");
  ModelConfig m;
  m.global_dim = sample.global.size();
  m.local_dim = sample.channels();
  m.regions = sample.regions();
  m.branches = sample.branches();
  m.hidden = cfg.hidden.value_or(512);
  m.embed = cfg.embed.value_or(512);
  m.mlp_dim = cfg.mlp_dim.value_or(m.hidden);
  m.attention_dim = cfg.attention_dim.value_or(m.hidden);
  m.vocab = vocab_size;
  validate(m);
  return m;
}

int cmd_build_vocab(const CommonFlags& flags, std::optional<std::size_t> vocab_size, std::ostream& out,
                    std::ostream& err) {
  RunConfig cfg = resolve_config(flags);
  if (vocab_size) cfg.vocab_size = *vocab_size;
  require_file(cfg.manifest, "manifest");
  require(flags.out, "--out");
  const auto samples = read_manifest(cfg.manifest, cfg.branches.value_or(0));
  const Vocabulary vocab = build_vocab(samples, cfg.vocab_size);
  save_vocabulary(vocab, flags.out);
  out << "vocabulary " << vocab.size() << " ids (" << vocab.words().size() << " words) from " << samples.size()
      << " stories\n";
  err << "wrote " << flags.out << "\n";
  return kExitOk;
}

struct SynthFlags {
  std::size_t stories = 100;
  std::size_t topics = 2;
  std::size_t objects = 1;
  double noise = 0.1;
  std::size_t holdout = 0;
};

int cmd_synth(const CommonFlags& flags, const SynthFlags& sf, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(flags);
  require(flags.out, "--out");
  SynthSpec spec;
  spec.num_stories = sf.stories;
  spec.num_topics = sf.topics;
  spec.objects_per_image = sf.objects;
  spec.noise_scale = sf.noise;
  spec.seed = cfg.train.seed;
  FeatureDims dims;
  dims.branches = cfg.branches.value_or(5);
  dims.global_dim = cfg.global_dim.value_or(4096);
  dims.regions = cfg.regions.value_or(196);
  dims.channels = cfg.local_dim.value_or(512);
  if (sf.holdout >= sf.stories) throw Error(ErrorCode::invalid_argument, "--holdout must be smaller than --stories");

  const auto stories = generate_synthetic(spec, dims);
  const fs::path dir = flags.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<StorySample> train, held;
  Json topics = Json::object();
  for (std::size_t i = 0; i < stories.size(); ++i) {
    write_features(stories[i].features, dir / stories[i].sample.feature_ref);
    (i < stories.size() - sf.holdout ? train : held).push_back(stories[i].sample);
    topics[stories[i].sample.id] = stories[i].topic;
  }
  write_manifest(train, dir / "manifest.jsonl");
  if (!held.empty()) write_manifest(held, dir / "heldout.jsonl");
  open_output(dir / "topics.json") << topics.dump() << "\n";
  out << "synthesized " << train.size() << " training and " << held.size() << " held-out stories\n";
  err << "wrote " << dir.string() << "\n";
  return kExitOk;
}

struct TrainFlags {
  std::optional<std::size_t> iterations;
  std::optional<double> learning_rate, grad_clip, init_scale;
  std::string optimizer;
  bool no_global_context = false;
  std::size_t log_every = 1;
};

int cmd_train(const CommonFlags& flags, const TrainFlags& tf, std::ostream& out, std::ostream& err) {
  RunConfig cfg = resolve_config(flags);
  if (tf.iterations) cfg.train.iterations = *tf.iterations;
  if (tf.learning_rate) cfg.train.learning_rate = *tf.learning_rate;
  if (tf.grad_clip) cfg.train.grad_clip = *tf.grad_clip;
  if (tf.init_scale) cfg.train.init_scale = *tf.init_scale;
  if (!tf.optimizer.empty()) cfg.train.optimizer = parse_optimizer(tf.optimizer);
  if (!flags.out.empty()) cfg.checkpoint = flags.out;
  require_file(cfg.manifest, "manifest");
  require_file(cfg.vocab, "vocabulary");
  require(cfg.checkpoint, "--out checkpoint path");

  const auto samples = read_manifest(cfg.manifest, cfg.branches.value_or(0));
  if (samples.empty()) throw Error(ErrorCode::empty_input, "manifest " + cfg.manifest + " has no stories");
  const Vocabulary vocab = load_vocabulary(cfg.vocab);
  const auto features = load_all_features(samples, features_root(cfg));
  ModelConfig model = model_config_for(cfg, features.front(), vocab.size());
  model.global_context = !tf.no_global_context;

  std::vector<Example> batch;
  batch.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Example ex{features[i], {}};
    for (const auto& s : samples[i].sentences) ex.sentences.push_back(encode(s, vocab));
    batch.push_back(std::move(ex));
  }

  ModelParams params = random_params(model, cfg.train.init_scale, cfg.train.seed);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t log_every = std::max<std::size_t>(tf.log_every, 1);
  train(
      batch, params, cfg.train,
      [&](std::size_t it, double value) {
        if (it % log_every == 0 || it + 1 == cfg.train.iterations) {
          out << "iter " << it << " loss " << format_real(value) << "\n";
        }
      },
      worker_count_from_env());
  out << "final loss " << format_real(loss(batch, params)) << "\n";
  save_checkpoint(params, cfg.checkpoint);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  err << "trained " << cfg.train.iterations << " iterations in " << format_real(seconds) << " s; wrote "
      << cfg.checkpoint << "\n";
  return kExitOk;
}

struct GenerateFlags {
  std::size_t beam = 1;
  CLI::Option* beam_opt = nullptr;
  std::size_t max_len = 20;
  std::string dump_attention;
  bool no_global_context = false;
};

int cmd_generate(const CommonFlags& flags, const GenerateFlags& gf, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(flags);
  require_file(cfg.checkpoint, "model checkpoint (--model)");
  require_file(cfg.vocab, "vocabulary");
  require_file(cfg.manifest, "manifest");
  ModelParams params = load_checkpoint(cfg.checkpoint);
  params.config.global_context = !gf.no_global_context;
  const Vocabulary vocab = load_vocabulary(cfg.vocab);
  if (params.config.vocab != vocab.size()) {
    throw Error(ErrorCode::config_conflict, "checkpoint " + cfg.checkpoint + " has V=" +
                                                std::to_string(params.config.vocab) + " but vocabulary " + cfg.vocab +
                                                " has " + std::to_string(vocab.size()) + " ids");
  }
  const auto samples = read_manifest(cfg.manifest, params.config.branches);
  const fs::path root = features_root(cfg);
  const std::size_t workers = worker_count_from_env();
  const bool use_beam = gf.beam_opt && gf.beam_opt->count() > 0;

  std::ofstream attention_out;
  if (!gf.dump_attention.empty()) attention_out = open_output(gf.dump_attention);
  std::vector<StorySample> generated;
  for (const auto& sample : samples) {
    const SequenceFeatures features = read_features(root / sample.feature_ref);
    const auto ids = use_beam ? beam_decode(features, params, gf.beam, gf.max_len, workers)
                              : greedy_decode(features, params, gf.max_len, workers);
    StorySample story{sample.id, sample.feature_ref, {}};
    out << "# " << sample.id << "\n";
    for (std::size_t j = 0; j < ids.size(); ++j) {
      story.sentences.push_back(decode(ids[j], vocab));
      out << (j + 1) << ": " << story.sentences.back() << "\n";
    }
    if (attention_out.is_open()) {
      const Vector h0 = initial_hidden(features, params);
      for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto path = attention_path(features.locals[j], h0, ids[j], params);
        for (std::size_t t = 0; t < path.size(); ++t) {
          Json row;
          row["story"] = sample.id;
          row["branch"] = j + 1;
          row["t"] = t + 1;
          row["k"] = std::vector<double>(path[t].begin(), path[t].end());
          attention_out << row.dump() << "\n";
        }
      }
    }
    generated.push_back(std::move(story));
  }
  if (!flags.out.empty()) write_manifest(generated, flags.out);
  err << "generated " << generated.size() << " stories\n";
  return kExitOk;
}

struct EvaluateFlags {
  std::string generated;
  std::string metrics = "bleu,rouge,meteor";
  std::string pairing = "sentence";
};

int cmd_evaluate(const CommonFlags& flags, const EvaluateFlags& ef, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(flags);
  require_file(cfg.manifest, "reference manifest");
  require_file(ef.generated, "generated stories (--generated)");
  MetricSelection selection{false, false, false};
  std::stringstream list(ef.metrics);
  for (std::string name; std::getline(list, name, ',');) {
    if (name == "bleu") selection.bleu = true;
    else if (name == "rouge") selection.rouge = true;
    else if (name == "meteor") selection.meteor = true;
    else throw Error(ErrorCode::invalid_argument, "unknown metric '" + name + "'");
  }
  const Pairing pairing = ef.pairing == "story" ? Pairing::story : Pairing::sentence;
  const auto refs = read_manifest(cfg.manifest);
  const auto gens = read_manifest(ef.generated);
  const MetricsReport report = evaluate_corpus(gens, refs, pairing);
  const std::string json = report_json(report, selection);
  out << json << "\n";
  if (!flags.out.empty()) open_output(flags.out) << json << "\n";
  err << "scored " << report.pair_count << " pairs\n";
  return kExitOk;
}

struct GradCheckFlags {
  std::size_t seeds = 1;
  std::string fault = "none";
};

int cmd_gradcheck(const CommonFlags& flags, const GradCheckFlags& gc, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(flags);
  const std::uint64_t first = flags.seed_opt && flags.seed_opt->count() > 0 ? flags.seed : cfg.train.seed;
  BackwardFault fault = BackwardFault::none;
  if (gc.fault == "tanh") fault = BackwardFault::tanh_derivative;
  else if (gc.fault == "attention") fault = BackwardFault::attention;
  else if (gc.fault == "forget") fault = BackwardFault::forget_gate;
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::size_t k = 0; k < std::max<std::size_t>(gc.seeds, 1); ++k) {
    GradCheckConfig check = small_gradcheck_config(first + k);
    ModelConfig& m = check.model;
    m.global_dim = cfg.global_dim.value_or(m.global_dim);
    m.local_dim = cfg.local_dim.value_or(m.local_dim);
    m.regions = cfg.regions.value_or(m.regions);
    m.hidden = cfg.hidden.value_or(m.hidden);
    m.embed = cfg.embed.value_or(m.embed);
    m.branches = cfg.branches.value_or(m.branches);
    m.mlp_dim = cfg.mlp_dim.value_or(m.mlp_dim);
    m.attention_dim = cfg.attention_dim.value_or(m.attention_dim);
    check.fault = fault;
    const GradCheckReport r = grad_check(check);
    worst = std::max(worst, r.max_rel_error);
    out << "seed " << check.seed << " max_rel_error " << format_real(r.max_rel_error) << " worst " << r.worst_tensor
        << "[" << r.worst_index << "] coordinates " << r.coordinates << "\n";
  }
  out << "max_rel_error " << format_real(worst) << "\n";
  err << "gradcheck took "
      << format_real(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) << " s\n";
  if (worst < kGradCheckTolerance) return kExitOk;
  err << "gradient check failed: " << format_real(worst) << " >= " << format_real(kGradCheckTolerance) << "\n";
  return kExitData;
}

}  // namespace

void apply_config_json(RunConfig& cfg, const std::string& json_text) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::parse, std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::parse, "config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "D_g") cfg.global_dim = json_count(value, key);
    else if (key == "D_l") cfg.local_dim = json_count(value, key);
    else if (key == "M") cfg.regions = json_count(value, key);
    else if (key == "H") cfg.hidden = json_count(value, key);
    else if (key == "E") cfg.embed = json_count(value, key);
    else if (key == "N") cfg.branches = json_count(value, key);
    else if (key == "d_mid") cfg.mlp_dim = json_count(value, key);
    else if (key == "d_att") cfg.attention_dim = json_count(value, key);
    else if (key == "vocab_size") cfg.vocab_size = json_count(value, key);
    else if (key == "learning_rate") cfg.train.learning_rate = json_get<double>(value, key);
    else if (key == "iterations") cfg.train.iterations = json_count(value, key);
    else if (key == "grad_clip") {
      if (value.is_null()) cfg.train.grad_clip.reset();
      else cfg.train.grad_clip = json_get<double>(value, key);
    } else if (key == "seed") cfg.train.seed = json_count(value, key);
    else if (key == "optimizer") cfg.train.optimizer = parse_optimizer(json_get<std::string>(value, key));
    else if (key == "beta1") cfg.train.beta1 = json_get<double>(value, key);
    else if (key == "beta2") cfg.train.beta2 = json_get<double>(value, key);
    else if (key == "epsilon") cfg.train.epsilon = json_get<double>(value, key);
    else if (key == "init_scale") cfg.train.init_scale = json_get<double>(value, key);
    else if (key == "manifest") cfg.manifest = json_get<std::string>(value, key);
    else if (key == "features_dir") cfg.features_dir = json_get<std::string>(value, key);
    else if (key == "vocab") cfg.vocab = json_get<std::string>(value, key);
    else if (key == "checkpoint") cfg.checkpoint = json_get<std::string>(value, key);
    else throw Error(ErrorCode::parse, "unknown config key '" + key + "'");
  }
  if (!(cfg.train.learning_rate > 0.0)) throw Error(ErrorCode::parse, "learning_rate must be positive");
  if (!(cfg.train.init_scale > 0.0)) throw Error(ErrorCode::parse, "init_scale must be positive");
  if (cfg.train.grad_clip && !(*cfg.train.grad_clip > 0.0)) throw Error(ErrorCode::parse, "grad_clip must be positive");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Paralleled-LSTM story decoder: corpus tools, training, generation, evaluation", "story-decoder"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "JSON file of RunConfig keys; flags override it");
    sub->add_option("--manifest", flags.manifest, "Dataset manifest (JSON Lines)");
    sub->add_option("--features-dir", flags.features_dir, "Directory holding .seqf files (default: manifest dir)");
    sub->add_option("--vocab", flags.vocab, "Vocabulary JSON file");
    sub->add_option("--out", flags.out, "Output path");
    flags.seed_opt = nullptr;
  };
  auto add_seed = [&](CLI::App* sub) { return sub->add_option("--seed", flags.seed, "Seed for all randomness"); };

  auto* build = app.add_subcommand("build-vocab", "Build a vocabulary from a manifest");
  add_common(build);
  std::optional<std::size_t> vocab_size;
  build->add_option("--vocab-size", vocab_size, "Maximum vocabulary size including specials");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted global context");
  add_common(synth);
  CLI::Option* synth_seed = add_seed(synth);
  SynthFlags sf;
  synth->add_option("--stories", sf.stories, "Number of stories");
  synth->add_option("--topics", sf.topics, "Number of topics");
  synth->add_option("--objects-per-image", sf.objects, "Objects mentioned per sentence");
  synth->add_option("--noise", sf.noise, "Gaussian noise scale");
  synth->add_option("--holdout", sf.holdout, "Write the last K stories to heldout.jsonl");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train_cmd);
  CLI::Option* train_seed = add_seed(train_cmd);
  TrainFlags tf;
  train_cmd->add_option("--iterations", tf.iterations, "Optimizer steps over the full batch");
  train_cmd->add_option("--lr,--learning-rate", tf.learning_rate, "Learning rate");
  train_cmd->add_option("--optimizer", tf.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  train_cmd->add_option("--grad-clip", tf.grad_clip, "Global gradient-norm clip");
  train_cmd->add_option("--init-scale", tf.init_scale, "Uniform init half-width");
  train_cmd->add_option("--log-every", tf.log_every, "Print the loss every K iterations");
  train_cmd->add_flag("--no-global-context", tf.no_global_context, "Ablation: force h0 = 0");

  auto* gen = app.add_subcommand("generate", "Decode stories with a trained model");
  add_common(gen);
  gen->add_option("--model", flags.model, "Checkpoint file");
  GenerateFlags gf;
  gf.beam_opt = gen->add_option("--beam", gf.beam, "Beam width (default: greedy search)")->check(CLI::PositiveNumber);
  gen->add_option("--max-len", gf.max_len, "Maximum tokens per sentence")->check(CLI::PositiveNumber);
  gen->add_option("--dump-attention", gf.dump_attention, "Write per-step attention weights as JSON Lines");
  gen->add_flag("--no-global-context", gf.no_global_context, "Ablation: force h0 = 0");

  auto* eval = app.add_subcommand("evaluate", "Score generated stories against references");
  add_common(eval);
  EvaluateFlags ef;
  eval->add_option("--generated", ef.generated, "Generated stories (manifest format)");
  eval->add_option("--metrics", ef.metrics, "Comma-separated subset of bleu,rouge,meteor");
  eval->add_option("--pairing", ef.pairing, "sentence or story")->check(CLI::IsMember({"sentence", "story"}));

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  add_common(grad);
  CLI::Option* grad_seed = add_seed(grad);
  GradCheckFlags gc;
  gc.fault = "none";
  grad->add_option("--seeds", gc.seeds, "Number of consecutive seeds to check");
  grad->add_option("--fault", gc.fault, "Inject a backward-pass defect")
      ->check(CLI::IsMember({"none", "tanh", "attention", "forget"}));

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*build) return cmd_build_vocab(flags, vocab_size, out, err);
    if (*synth) {
      flags.seed_opt = synth_seed;
      return cmd_synth(flags, sf, out, err);
    }
    if (*train_cmd) {
      flags.seed_opt = train_seed;
      return cmd_train(flags, tf, out, err);
    }
    if (*gen) return cmd_generate(flags, gf, out, err);
    if (*eval) return cmd_evaluate(flags, ef, out, err);
    if (*grad) {
      flags.seed_opt = grad_seed;
      return cmd_gradcheck(flags, gc, out, err);
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace story

#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "story/cli.hpp"
#include "story/corpus.hpp"
#include "story/decoder.hpp"
#include "story/encoder.hpp"
#include "story/error.hpp"
#include "story/features.hpp"
#include "story/metrics.hpp"
#include "story/trainer.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace story {
namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw Error(ErrorCode::dimension_mismatch, "expected a 1-d array");
  return Vector(std::vector<double>(a.data(), a.data() + a.size()));
}

SequenceFeatures to_features(const Array& global, const Array& locals) {
  if (locals.ndim() != 3) throw Error(ErrorCode::dimension_mismatch, "locals must be a 3-d array (N, M, D_l)");
  SequenceFeatures f;
  f.global = to_vector(global);
  const auto n = static_cast<std::size_t>(locals.shape(0));
  const auto m = static_cast<std::size_t>(locals.shape(1));
  const auto dl = static_cast<std::size_t>(locals.shape(2));
  const double* p = locals.data();
  for (std::size_t j = 0; j < n; ++j, p += m * dl) f.locals.emplace_back(m, dl, std::vector<double>(p, p + m * dl));
  validate(f);
  return f;
}

Array from_vector(const Vector& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Array locals_array(const SequenceFeatures& f) {
  Array out({f.branches(), f.regions(), f.channels()});
  double* p = out.mutable_data();
  for (const auto& l : f.locals) p = std::copy(l.values().begin(), l.values().end(), p);
  return out;
}

py::tuple features_tuple(const SequenceFeatures& f) { return py::make_tuple(from_vector(f.global), locals_array(f)); }

BackwardFault parse_fault(const std::string& name) {
  if (name == "none") return BackwardFault::none;
  if (name == "tanh") return BackwardFault::tanh_derivative;
  if (name == "attention") return BackwardFault::attention;
  if (name == "forget") return BackwardFault::forget_gate;
  throw py::value_error("fault must be one of none, tanh, attention, forget");
}

// (global, locals, sentences) tuples as produced by the Python side.
std::vector<Example> to_batch(const py::list& examples) {
  std::vector<Example> batch;
  for (const auto& item : examples) {
    const auto t = item.cast<py::tuple>();
    if (t.size() != 3) throw py::value_error("each example is (global, locals, sentences)");
    batch.push_back({to_features(t[0].cast<Array>(), t[1].cast<Array>()), t[2].cast<std::vector<SentenceIds>>()});
  }
  return batch;
}

std::vector<EvalPair> to_pairs(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size()) throw py::value_error("hypotheses and references differ in length");
  std::vector<EvalPair> pairs;
  for (std::size_t i = 0; i < hyps.size(); ++i) pairs.push_back({tokenize(hyps[i]), tokenize(refs[i])});
  return pairs;
}

ModelConfig make_config(std::size_t vocab, std::size_t global_dim, std::size_t local_dim, std::size_t regions,
                        std::size_t hidden, std::size_t embed, std::size_t branches, std::optional<std::size_t> mlp_dim,
                        std::optional<std::size_t> attention_dim, bool global_context) {
  ModelConfig c;
  c.vocab = vocab;
  c.global_dim = global_dim;
  c.local_dim = local_dim;
  c.regions = regions;
  c.hidden = hidden;
  c.embed = embed;
  c.branches = branches;
  c.mlp_dim = mlp_dim.value_or(hidden);
  c.attention_dim = attention_dim.value_or(hidden);
  c.global_context = global_context;
  validate(c);
  return c;
}

py::dict config_dict(const ModelConfig& c) {
  return py::dict("D_g"_a = c.global_dim, "D_l"_a = c.local_dim, "M"_a = c.regions, "H"_a = c.hidden,
                  "E"_a = c.embed, "V"_a = c.vocab, "N"_a = c.branches, "d_mid"_a = c.mlp_dim,
                  "d_att"_a = c.attention_dim, "global_context"_a = c.global_context);
}

}  // namespace
}  // namespace story

PYBIND11_MODULE(_core, m) {
  using namespace story;
  m.doc() = "Paralleled-LSTM story decoder";

  py::register_exception<Error>(m, "StoryError", PyExc_RuntimeError);

  m.attr("PAD") = kPad;
  m.attr("BOS") = kBos;
  m.attr("EOS") = kEos;
  m.attr("UNK") = kUnk;

  m.def("tokenize", [](const std::string& text) { return tokenize(text); }, "text"_a);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<std::vector<std::string>>(), "words"_a)
      .def_property_readonly("words", &Vocabulary::words)
      .def("__len__", &Vocabulary::size)
      .def("id", [](const Vocabulary& v, const std::string& t) { return v.id(t); }, "token"_a)
      .def("token", &Vocabulary::token, "id"_a)
      .def("encode", [](const Vocabulary& v, const std::string& s) { return encode(s, v); }, "sentence"_a)
      .def("decode", [](const Vocabulary& v, const SentenceIds& ids) { return decode(ids, v); }, "ids"_a)
      .def("save", &save_vocabulary, "path"_a)
      .def_static("load", &load_vocabulary, "path"_a)
      .def("__eq__", &Vocabulary::operator==);

  m.def(
      "build_vocab",
      [](const std::vector<std::string>& sentences, std::size_t max_size) {
        return build_vocab(std::vector<StorySample>{{"", "", sentences}}, max_size);
      },
      "sentences"_a, "max_size"_a);

  m.def("read_features", [](const std::filesystem::path& path) { return features_tuple(read_features(path)); },
        "path"_a, "Returns (global, locals) with locals shaped (N, M, D_l).");
  m.def(
      "write_features",
      [](const std::filesystem::path& path, const Array& global, const Array& locals) {
        write_features(to_features(global, locals), path);
      },
      "path"_a, "global_features"_a, "locals"_a);

  m.def(
      "generate_synthetic",
      [](std::size_t num_stories, std::size_t num_topics, std::size_t objects_per_image, double noise_scale,
         std::uint64_t seed, std::size_t branches, std::size_t global_dim, std::size_t regions, std::size_t channels) {
        SynthSpec spec{num_stories, num_topics, objects_per_image, noise_scale, seed};
        py::list out;
        for (const auto& s : generate_synthetic(spec, FeatureDims{branches, global_dim, regions, channels})) {
          out.append(py::dict("id"_a = s.sample.id, "sentences"_a = s.sample.sentences, "topic"_a = s.topic,
                              "global_features"_a = from_vector(s.features.global),
                              "locals"_a = locals_array(s.features)));
        }
        return out;
      },
      "num_stories"_a = 100, "num_topics"_a = 2, "objects_per_image"_a = 1, "noise_scale"_a = 0.1, "seed"_a = 0,
      "branches"_a = 5, "global_dim"_a = 16, "regions"_a = 4, "channels"_a = 8);

  py::class_<ModelParams>(m, "Model")
      .def(py::init([](std::size_t vocab, std::size_t global_dim, std::size_t local_dim, std::size_t regions,
                       std::size_t hidden, std::size_t embed, std::size_t branches, std::optional<std::size_t> mlp_dim,
                       std::optional<std::size_t> attention_dim, bool global_context, double init_scale,
                       std::uint64_t seed) {
             const ModelConfig c = make_config(vocab, global_dim, local_dim, regions, hidden, embed, branches,
                                               mlp_dim, attention_dim, global_context);
             return init_scale == 0.0 ? zero_params(c) : random_params(c, init_scale, seed);
           }),
           "vocab"_a, "global_dim"_a, "local_dim"_a, "regions"_a, "hidden"_a = 512, "embed"_a = 512,
           "branches"_a = 5, "mlp_dim"_a = py::none(), "attention_dim"_a = py::none(), "global_context"_a = true,
           "init_scale"_a = 0.1, "seed"_a = 0,
           "Weights uniform in (-init_scale, init_scale), biases zero; init_scale=0 gives the all-zero model.")
      .def_property_readonly("config", [](const ModelParams& p) { return config_dict(p.config); })
      .def_property(
          "global_context", [](const ModelParams& p) { return p.config.global_context; },
          [](ModelParams& p, bool on) { p.config.global_context = on; })
      .def_property_readonly("parameter_count", &parameter_count)
      .def("save", &save_checkpoint, "path"_a)
      .def_static("load", &load_checkpoint, "path"_a)
      .def("h0", [](const ModelParams& p, const Array& g) { return from_vector(embed_global(to_vector(g), p.encoder)); },
           "global_features"_a)
      .def("loss", [](const ModelParams& p, const py::list& examples) { return loss(to_batch(examples), p); },
           "examples"_a)
      .def(
          "log_likelihood",
          [](const ModelParams& p, const Array& g, const Array& l, const std::vector<SentenceIds>& story) {
            return story_log_likelihood(to_features(g, l), story, p);
          },
          "global_features"_a, "locals"_a, "sentences"_a)
      .def(
          "train",
          [](ModelParams& p, const py::list& examples, std::size_t iterations, double learning_rate,
             const std::string& optimizer, std::optional<double> grad_clip, std::size_t workers) {
            TrainConfig config;
            config.iterations = iterations;
            config.learning_rate = learning_rate;
            config.grad_clip = grad_clip;
            if (optimizer == "sgd") config.optimizer = OptimizerKind::sgd;
            else if (optimizer != "adam") throw py::value_error("optimizer must be adam or sgd");
            const auto batch = to_batch(examples);
            py::gil_scoped_release release;
            return train(batch, p, config, {}, workers);
          },
          "examples"_a, "iterations"_a, "learning_rate"_a = 1e-3, "optimizer"_a = "adam", "grad_clip"_a = py::none(),
          "workers"_a = 1, "Full-batch training; returns the loss before each update.")
      .def(
          "greedy_decode",
          [](const ModelParams& p, const Array& g, const Array& l, std::size_t max_len) {
            return greedy_decode(to_features(g, l), p, max_len);
          },
          "global_features"_a, "locals"_a, "max_len"_a = 20)
      .def(
          "beam_decode",
          [](const ModelParams& p, const Array& g, const Array& l, std::size_t beam, std::size_t max_len) {
            return beam_decode(to_features(g, l), p, beam, max_len);
          },
          "global_features"_a, "locals"_a, "beam"_a, "max_len"_a = 20)
      .def("__eq__", &ModelParams::operator==);

  m.def(
      "bleu", [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        return bleu(to_pairs(hyps, refs)).cumulative;
      },
      "hypotheses"_a, "references"_a, "Cumulative BLEU-1..4 over the corpus.");
  m.def(
      "rouge_l", [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        return rouge_l(to_pairs(hyps, refs));
      },
      "hypotheses"_a, "references"_a);
  m.def(
      "meteor", [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        return meteor(to_pairs(hyps, refs));
      },
      "hypotheses"_a, "references"_a);
  m.def(
      "lcs_length",
      [](const std::vector<std::string>& a, const std::vector<std::string>& b) { return lcs_length(a, b); }, "a"_a,
      "b"_a);

  m.def(
      "grad_check",
      [](std::uint64_t seed, const std::string& fault) {
        GradCheckConfig c = small_gradcheck_config(seed);
        c.fault = parse_fault(fault);
        const GradCheckReport r = grad_check(c);
        return py::dict("max_rel_error"_a = r.max_rel_error, "worst_tensor"_a = r.worst_tensor,
                        "worst_index"_a = r.worst_index, "coordinates"_a = r.coordinates);
      },
      "seed"_a = 1, "fault"_a = "none");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "story-decoder");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "args"_a, "Runs the story-decoder command line; returns (exit_code, stdout, stderr).");
}

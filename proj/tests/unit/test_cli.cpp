#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "story/cli.hpp"
#include "story/corpus.hpp"
#include "story/error.hpp"

using namespace story;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "story-decoder");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("story_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  Run none = run({});
  CHECK(none.code == kExitUsage);
  CHECK(none.err.find("Usage") != std::string::npos);
  Run unknown = run({"frobnicate"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(run({"generate", "--beam", "zero"}).code == kExitUsage);
  CHECK(run({"evaluate", "--pairing", "paragraph"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("gradcheck subcommand") {
  Run ok = run({"gradcheck", "--seed", "1"});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("max_rel_error") != std::string::npos);
  Run broken = run({"gradcheck", "--seed", "1", "--fault", "attention"});
  CHECK(broken.code == kExitData);
  CHECK(broken.err.find("gradient check failed") != std::string::npos);
}

TEST_CASE("missing inputs exit with 2 and name the path") {
  Run r = run({"train", "--manifest", "/nonexistent/story/manifest.jsonl", "--vocab", "v.json", "--out", "m.sltm"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("/nonexistent/story/manifest.jsonl") != std::string::npos);
  CHECK(run({"train"}).code == kExitData);
  CHECK(run({"evaluate", "--manifest", "/nonexistent/refs.jsonl", "--generated", "x"}).code == kExitData);
}

TEST_CASE("config files") {
  RunConfig cfg;
  apply_config_json(cfg, R"({"H": 8, "E": 6, "learning_rate": 0.5, "optimizer": "sgd", "grad_clip": 2,
                             "manifest": "m.jsonl", "seed": 4})");
  CHECK(cfg.hidden == 8u);
  CHECK(cfg.embed == 6u);
  CHECK(cfg.train.learning_rate == 0.5);
  CHECK(cfg.train.optimizer == OptimizerKind::sgd);
  CHECK(cfg.train.grad_clip == 2.0);
  CHECK(cfg.manifest == "m.jsonl");
  CHECK(cfg.train.seed == 4u);
  CHECK_THROWS_AS(apply_config_json(cfg, R"({"hidden_size": 3})"), Error);
  CHECK_THROWS_AS(apply_config_json(cfg, R"({"H": -1})"), Error);
  CHECK_THROWS_AS(apply_config_json(cfg, R"({"H": "big"})"), Error);
  CHECK_THROWS_AS(apply_config_json(cfg, R"({"learning_rate": 0})"), Error);
  CHECK_THROWS_AS(apply_config_json(cfg, "[1, 2]"), Error);
  CHECK_THROWS_AS(apply_config_json(cfg, "{"), Error);

  const fs::path dir = scratch("config");
  write_text(dir / "bad.json", R"({"nope": 1})");
  CHECK(run({"gradcheck", "--config", (dir / "bad.json").string()}).code == kExitData);
  fs::remove_all(dir);
}

TEST_CASE("synth, build-vocab, train, generate, evaluate") {
  const fs::path dir = scratch("pipeline");
  const std::string data = (dir / "data").string();
  const std::string config = (dir / "config.json").string();
  write_text(config, R"({"D_g": 6, "M": 3, "D_l": 4, "H": 8, "E": 8, "d_mid": 8, "d_att": 8,
                        "iterations": 15, "learning_rate": 0.01, "vocab_size": 40})");

  Run synth = run({"synth", "--config", config, "--out", data, "--stories", "6", "--holdout", "2", "--seed", "3"});
  REQUIRE(synth.code == kExitOk);
  CHECK(fs::exists(dir / "data" / "manifest.jsonl"));
  CHECK(fs::exists(dir / "data" / "heldout.jsonl"));
  CHECK(fs::exists(dir / "data" / "synth-000000.seqf"));
  CHECK(read_manifest(dir / "data" / "manifest.jsonl").size() == 4);

  const std::string manifest = (dir / "data" / "manifest.jsonl").string();
  const std::string vocab = (dir / "vocab.json").string();
  REQUIRE(run({"build-vocab", "--config", config, "--manifest", manifest, "--out", vocab}).code == kExitOk);
  CHECK(load_vocabulary(vocab).size() <= 40);

  const std::string model = (dir / "model.sltm").string();
  Run train = run({"train", "--config", config, "--manifest", manifest, "--vocab", vocab, "--out", model,
                   "--seed", "2"});
  REQUIRE(train.code == kExitOk);
  CHECK(train.out.find("iter 0 loss") != std::string::npos);
  CHECK(train.err.find("trained") != std::string::npos);
  Run again = run({"train", "--config", config, "--manifest", manifest, "--vocab", vocab, "--out",
                   (dir / "again.sltm").string(), "--seed", "2"});
  CHECK(again.out == train.out);

  write_text(dir / "wrong_dims.json", R"({"D_g": 7})");
  Run dims = run({"train", "--config", (dir / "wrong_dims.json").string(), "--manifest", manifest, "--vocab", vocab,
                  "--out", model + ".y"});
  CHECK(dims.code == kExitData);
  CHECK(dims.err.find("config conflict") != std::string::npos);

  const std::string heldout = (dir / "data" / "heldout.jsonl").string();
  const std::string generated = (dir / "generated.jsonl").string();
  Run greedy = run({"generate", "--manifest", heldout, "--vocab", vocab, "--model", model, "--out", generated,
                    "--dump-attention", (dir / "attention.jsonl").string()});
  REQUIRE(greedy.code == kExitOk);
  Run beam1 = run({"generate", "--manifest", heldout, "--vocab", vocab, "--model", model, "--beam", "1"});
  CHECK(beam1.code == kExitOk);
  CHECK(beam1.out == greedy.out);
  CHECK(greedy.out.find("# synth-000004\n1: ") != std::string::npos);
  CHECK(greedy.out.find("\n5: ") != std::string::npos);
  CHECK(read_manifest(generated).size() == 2);

  std::ifstream attention(dir / "attention.jsonl");
  std::string line;
  REQUIRE(std::getline(attention, line));
  const auto row = nlohmann::json::parse(line);
  CHECK(row["branch"].get<int>() == 1);
  CHECK(row["t"].get<int>() == 1);
  CHECK(row["k"].size() == 3);

  Run eval = run({"evaluate", "--manifest", heldout, "--generated", generated, "--metrics", "bleu,rouge"});
  REQUIRE(eval.code == kExitOk);
  const auto report = nlohmann::json::parse(eval.out);
  CHECK(report.contains("bleu"));
  CHECK(report.contains("rouge_l"));
  CHECK_FALSE(report.contains("meteor"));
  CHECK(report["pairs"].get<int>() == 10);
  Run self = run({"evaluate", "--manifest", heldout, "--generated", heldout, "--pairing", "story"});
  REQUIRE(self.code == kExitOk);
  CHECK(nlohmann::json::parse(self.out)["bleu4"].get<double>() == doctest::Approx(1.0));
  CHECK(run({"evaluate", "--manifest", heldout, "--generated", generated, "--metrics", "cider"}).code == kExitData);
  CHECK(run({"evaluate", "--manifest", manifest, "--generated", generated}).code == kExitData);

  // A vocabulary that disagrees with the checkpoint's V is a configuration conflict.
  save_vocabulary(Vocabulary({"only"}), dir / "small_vocab.json");
  Run mismatch = run({"generate", "--manifest", heldout, "--vocab", (dir / "small_vocab.json").string(), "--model",
                      model});
  CHECK(mismatch.code == kExitData);
  CHECK(mismatch.err.find("config conflict") != std::string::npos);

  fs::remove_all(dir);
}

#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "story/params.hpp"
#include "story/trainer.hpp"

namespace story {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Everything a subcommand can be configured with. Mirrors the keys accepted
/// by --config; unset dimensions are inferred from data where possible.
struct RunConfig {
  std::optional<std::size_t> global_dim, local_dim, regions, hidden, embed, branches, mlp_dim, attention_dim;
  std::size_t vocab_size = 10000;
  TrainConfig train;
  std::string manifest, features_dir, vocab, checkpoint;
};

/// Applies a JSON object whose keys are D_g, D_l, M, H, E, N, d_mid, d_att,
/// vocab_size, learning_rate, iterations, grad_clip, seed, optimizer, beta1,
/// beta2, epsilon, init_scale, manifest, features_dir, vocab, checkpoint.
/// Throws parse on unknown keys or wrong types.
void apply_config_json(RunConfig& config, const std::string& json_text);

/// Entry point for the story-decoder tool. Results go to `out`, progress and
/// diagnostics to `err`. Returns 0 on success, 1 on usage errors, 2 on data or
/// configuration errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace story

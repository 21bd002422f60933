#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "remogen/fwsr.hpp"
#include "remogen/metrics.hpp"
#include "remogen/mim.hpp"

namespace remogen {

// Flat `key = value` configuration; '#' starts a comment.
struct EngineConfig {
  GenerationConfig generation;
  // Architecture keys are checked against the weights on engine start.
  std::size_t latent_dim = 64;
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ffn_mult = 2;
  std::vector<int> injection_layers{0, 1, 2, 3};
  double beta_sens = 1.0;
  double h_step = kDefaultFdStep;
  std::map<std::string, double> alpha{{"hhi", 1.0}};
  bool fwsr = false;
  CollisionOptions radii;
  ClampScope clamp_scope = ClampScope::kPerLayer;
  double epsilon = 1e-6;
  std::size_t others_window = 8;
  std::string scene;  // optional .rmgv path
  std::string text;

  void validate() const;
};

EngineConfig parse_config(std::string_view text);
EngineConfig load_config(const std::filesystem::path& path);
// REMOGEN_SEED, when set, replaces the configured seed.
void apply_environment(EngineConfig& cfg);

// "hhi=0.5,hsi=0.5"
std::map<std::string, double> parse_alpha(std::string_view text);
std::string format_alpha(const std::map<std::string, double>& alpha);

}  // namespace remogen

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace framediff {

// Run configuration. Every field maps 1:1 onto a `key = value` line in the
// config file and onto a `--key value` command-line override; unknown keys
// are errors.
struct RunConfig {
  std::string paradigm = "gfd";  // gfd | lfd | lfd-aligned | ifd
  std::string backbone = "edge";  // edge | plain
  int T = 100;
  double lambda = 0.1;
  int eq_layers = 3;
  int eq_channels = 7;
  int eq_hidden = 64;
  int bb_layers = 4;
  int bb_heads = 4;
  int bb_width = 128;
  int bb_mlp_ratio = 4;
  int t_embed_dim = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // 0 disables
  int batch = 32;
  int steps = 2000;
  std::uint64_t seed = 0;
  std::string data;
  std::string out = ".";
  std::string resume;
  int ckpt_interval = 500;
  double scale_onehot = 0.25;
  double scale_charge = 0.1;

  // Throws ConfigError on invalid values (counts < 1, lambda < 0, bad
  // enumerations, width not divisible by heads).
  void validate() const;

  void apply(const std::string& key, const std::string& value);
  static RunConfig from_file(const std::string& path);
  void apply_file(const std::string& path);
  // Fixed-order `key = value` text, parseable by apply_file.
  std::string serialize() const;

  static const std::vector<std::string>& keys();
};

}  // namespace framediff

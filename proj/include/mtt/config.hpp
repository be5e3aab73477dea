#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mtt {

struct BackboneStage {
  std::size_t channels;
  std::size_t stride;
};

struct EncoderConfig {
  std::size_t input_h = 32, input_w = 32, input_c = 3;
  std::size_t d = 32;
  std::size_t n_x = 2;
  std::size_t heads = 4;
  std::vector<BackboneStage> backbone{{8, 2}, {16, 2}, {32, 2}};
  std::size_t kernel = 3;  // odd; convs use pad = kernel/2

  std::size_t patches_h() const;
  std::size_t patches_w() const;
  void validate() const;
};

struct HeadConfig {
  std::size_t n_t = 2;
  std::size_t n_d = 2;
  std::size_t heads = 4;
  double t_au = 1.0;
  double t_expr = 5.0;
  double sigma2_va = 1.0;
  void validate() const;
};

enum class ReweightMode { PerExample, PerTask };

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::string preset = "desk";
  EncoderConfig encoder;
  HeadConfig head;
  OptimizerConfig opt;
  ReweightMode reweight = ReweightMode::PerExample;
  std::size_t batch = 8;
  std::size_t steps = 500;
  std::size_t log_every = 50;
  double mixup_alpha = 0.0;  // 0 disables mixup
  bool augment = false;
  std::uint64_t seed = 1234;
  void validate() const;
};

/// CPU-sized default: 32x32x3 input, d=32, the paper's layer structure.
TrainConfig desk_config();
/// The published full-scale geometry (224x224x3, d=768, 12 heads, N_d=4).
/// Recorded for documentation and shape tests; far too large to train here.
TrainConfig paper_config();
/// Tiny configuration used by the finite-difference suite:
/// 8x8x1 input, two conv stages to a 2x2 grid, d=8, 2 heads, n_t=1, n_d=2.
TrainConfig gradcheck_config();

/// Parses line-oriented `key = value` text ('#' starts a comment). Returns
/// pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path);
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);

/// Applies one dotted-key assignment (e.g. "head.t_expr = 5"); unknown keys
/// are an error. "preset = desk|paper" resets every field to that preset.
void apply_config_kv(TrainConfig& config, const std::string& key, const std::string& value);

TrainConfig load_train_config(const std::string& path);

/// Canonical text form; parsing it back reproduces the config exactly.
std::string serialize_config(const TrainConfig& config);

}  // namespace mtt

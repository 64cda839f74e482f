#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace vts {

// Single-frame model: counting head, localization recurrence, glimpse
// encoder/decoder, position regularization and the prior/annealing knobs.
struct AirConfig {
  int max_objects = 2;  // N
  int glimpse_px = 25;
  int desc_dim = 20;
  double sigma_likelihood = 0.3;
  std::array<double, 2> size_prior_loc{0.3, 0.4};
  double size_prior_scale = 0.1;
  double cnt_prior_loc_start = -2.0;
  double cnt_prior_loc_end = -3.0;
  std::int64_t cnt_anneal_start = 100000;
  std::int64_t cnt_anneal_end = 200000;
  double cnt_prior_scale = 1.0;
  double sigma_reg_kernel = 0.5;
  double flatten_increment = 0.1;
  std::int64_t flatten_interval = 1000;
  double flatten_max = 100.0;
  double dropout = 0.4;
  int frame_pad = 3;  // zero padding in front of the counting stack
  // network widths
  std::array<int, 3> cnt_conv_channels{16, 16, 16};
  std::array<int, 3> cnt_conv_ksize{5, 4, 3};
  std::array<int, 2> cnt_dense{256, 128};
  std::array<int, 2> pre_conv_channels{16, 16};
  int pre_conv_ksize = 3;
  int loc_lstm_units = 256;
  int loc_head_units = 64;
  std::array<int, 2> enc_dense{256, 128};
  std::array<int, 2> dec_dense{128, 256};
  double scale_head_bias = -2.0;  // raw bias init of scale heads (pre-softplus)
};

struct FindConfig {
  int n_kernels = 8;
  int kernel_px = 10;
  std::array<int, 2> ker_dense{128, 256};
  int conv1_channels = 16;
  int conv1_ksize = 5;
  int conv2_channels = 32;
  int conv2_ksize = 3;
  std::array<int, 2> feature_dense{128, 64};
  int feature_dim = 50;
  int pos_mlp_units = 64;
  int pos_head_units = 32;
  double prior_scale = 0.1;
};

struct RectConfig {
  int lstm_units = 128;  // each direction
  int head_units = 64;
};

struct MotConfig {
  int motion_dim = 10;
  int lstm_units = 64;
  int head_units = 32;
  int tr_units = 64;
  int tr_head_units = 32;
};

struct FusionPolicy {
  double w_min = 0.01;
  double w_max = 0.99;
  double test_w = 0.5;
};

enum class Variant { air, find, rect_find, find_mot, vtssi };
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct TrainerConfig {
  int batch_size = 64;
  double lr = 1e-4;
  std::int64_t lr_anneal_start = 200000;
  double lr_anneal_rate = 0.9;
  std::int64_t lr_anneal_interval = 20000;
  double lr_floor = 1e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  std::int64_t total_steps = 780000;
  // -1 selects the variant default: start 6 / +1 per 30k steps for the full
  // model, start 1 / +1 per 20k steps otherwise
  int curriculum_start = -1;
  std::int64_t curriculum_interval = -1;
  int joint_air_curriculum_steps = 3;
  std::int64_t checkpoint_interval = 5000;
  std::int64_t log_interval = 50;
  std::uint64_t seed = 0;
  int threads = 2;
};

struct VtssiConfig {
  int frame_h = 50;
  int frame_w = 50;
  int K = 5;  // rectification prefix
  int M = 5;  // motion seed prefix
  int T = 20;
  Variant variant = Variant::vtssi;
  AirConfig air;
  FindConfig find;
  RectConfig rect;
  MotConfig mot;
  FusionPolicy fusion;
  TrainerConfig trainer;

  void validate() const;
  std::string to_json() const;
  static VtssiConfig from_json(const std::string& text);
  static VtssiConfig from_json_file(const std::string& path);
  // Applies VTS_<FIELD> environment overrides (flat scalar fields only).
  void apply_env_overrides();
};

// ---- schedules --------------------------------------------------------------

int curriculum_start_default(Variant v);
std::int64_t curriculum_interval_default(Variant v);

// min(start + floor(step/interval), T)
int curriculum_len(std::int64_t global_step, Variant v, const TrainerConfig& t, int T);

// 1e-4 smoothly annealed by 0.9 per 20k steps after 200k, floored at 1e-5.
double learning_rate(std::int64_t global_step, const TrainerConfig& t);

// Linear annealing of the count prior location over the configured window.
double cnt_prior_loc(std::int64_t global_step, const AirConfig& a);

// Flattening parameter p, increased stepwise and capped.
double flatten_p(std::int64_t global_step, const AirConfig& a);

}  // namespace vts

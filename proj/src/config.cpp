#include "vts/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vts {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::air: return "air";
    case Variant::find: return "find";
    case Variant::rect_find: return "rect_find";
    case Variant::find_mot: return "find_mot";
    case Variant::vtssi: return "vtssi";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "air") return Variant::air;
  if (s == "find") return Variant::find;
  if (s == "rect_find") return Variant::rect_find;
  if (s == "find_mot") return Variant::find_mot;
  if (s == "vtssi") return Variant::vtssi;
  throw std::invalid_argument("unknown variant: " + s);
}

void VtssiConfig::validate() const {
  if (T < 1) throw std::invalid_argument("config: T < 1");
  if (K < 1 || K > T) throw std::invalid_argument("config: need 1 <= K <= T");
  if (M < 1 || M > T) throw std::invalid_argument("config: need 1 <= M <= T");
  if (air.max_objects < 1) throw std::invalid_argument("config: max_objects < 1");
  if (fusion.w_min < 0 || fusion.w_max > 1 || fusion.w_min > fusion.w_max)
    throw std::invalid_argument("config: bad fusion interval");
  if (air.sigma_likelihood <= 0 || air.sigma_reg_kernel <= 0)
    throw std::invalid_argument("config: scales must be positive");
}

namespace {

json air_to_json(const AirConfig& a) {
  return json{{"max_objects", a.max_objects},
              {"glimpse_px", a.glimpse_px},
              {"desc_dim", a.desc_dim},
              {"sigma_likelihood", a.sigma_likelihood},
              {"size_prior_loc", {a.size_prior_loc[0], a.size_prior_loc[1]}},
              {"size_prior_scale", a.size_prior_scale},
              {"cnt_prior_loc_start", a.cnt_prior_loc_start},
              {"cnt_prior_loc_end", a.cnt_prior_loc_end},
              {"cnt_anneal_start", a.cnt_anneal_start},
              {"cnt_anneal_end", a.cnt_anneal_end},
              {"cnt_prior_scale", a.cnt_prior_scale},
              {"sigma_reg_kernel", a.sigma_reg_kernel},
              {"flatten_increment", a.flatten_increment},
              {"flatten_interval", a.flatten_interval},
              {"flatten_max", a.flatten_max},
              {"dropout", a.dropout},
              {"frame_pad", a.frame_pad},
              {"cnt_conv_channels", {a.cnt_conv_channels[0], a.cnt_conv_channels[1], a.cnt_conv_channels[2]}},
              {"cnt_conv_ksize", {a.cnt_conv_ksize[0], a.cnt_conv_ksize[1], a.cnt_conv_ksize[2]}},
              {"cnt_dense", {a.cnt_dense[0], a.cnt_dense[1]}},
              {"pre_conv_channels", {a.pre_conv_channels[0], a.pre_conv_channels[1]}},
              {"pre_conv_ksize", a.pre_conv_ksize},
              {"loc_lstm_units", a.loc_lstm_units},
              {"loc_head_units", a.loc_head_units},
              {"enc_dense", {a.enc_dense[0], a.enc_dense[1]}},
              {"dec_dense", {a.dec_dense[0], a.dec_dense[1]}},
              {"scale_head_bias", a.scale_head_bias}};
}

AirConfig air_from_json(const json& j) {
  AirConfig a;
  a.max_objects = j.value("max_objects", a.max_objects);
  a.glimpse_px = j.value("glimpse_px", a.glimpse_px);
  a.desc_dim = j.value("desc_dim", a.desc_dim);
  a.sigma_likelihood = j.value("sigma_likelihood", a.sigma_likelihood);
  if (j.contains("size_prior_loc"))
    a.size_prior_loc = {j["size_prior_loc"][0], j["size_prior_loc"][1]};
  a.size_prior_scale = j.value("size_prior_scale", a.size_prior_scale);
  a.cnt_prior_loc_start = j.value("cnt_prior_loc_start", a.cnt_prior_loc_start);
  a.cnt_prior_loc_end = j.value("cnt_prior_loc_end", a.cnt_prior_loc_end);
  a.cnt_anneal_start = j.value("cnt_anneal_start", a.cnt_anneal_start);
  a.cnt_anneal_end = j.value("cnt_anneal_end", a.cnt_anneal_end);
  a.cnt_prior_scale = j.value("cnt_prior_scale", a.cnt_prior_scale);
  a.sigma_reg_kernel = j.value("sigma_reg_kernel", a.sigma_reg_kernel);
  a.flatten_increment = j.value("flatten_increment", a.flatten_increment);
  a.flatten_interval = j.value("flatten_interval", a.flatten_interval);
  a.flatten_max = j.value("flatten_max", a.flatten_max);
  a.dropout = j.value("dropout", a.dropout);
  a.frame_pad = j.value("frame_pad", a.frame_pad);
  if (j.contains("cnt_conv_channels"))
    a.cnt_conv_channels = {j["cnt_conv_channels"][0], j["cnt_conv_channels"][1],
                           j["cnt_conv_channels"][2]};
  if (j.contains("cnt_conv_ksize"))
    a.cnt_conv_ksize = {j["cnt_conv_ksize"][0], j["cnt_conv_ksize"][1], j["cnt_conv_ksize"][2]};
  if (j.contains("cnt_dense")) a.cnt_dense = {j["cnt_dense"][0], j["cnt_dense"][1]};
  if (j.contains("pre_conv_channels"))
    a.pre_conv_channels = {j["pre_conv_channels"][0], j["pre_conv_channels"][1]};
  a.pre_conv_ksize = j.value("pre_conv_ksize", a.pre_conv_ksize);
  a.loc_lstm_units = j.value("loc_lstm_units", a.loc_lstm_units);
  a.loc_head_units = j.value("loc_head_units", a.loc_head_units);
  if (j.contains("enc_dense")) a.enc_dense = {j["enc_dense"][0], j["enc_dense"][1]};
  if (j.contains("dec_dense")) a.dec_dense = {j["dec_dense"][0], j["dec_dense"][1]};
  a.scale_head_bias = j.value("scale_head_bias", a.scale_head_bias);
  return a;
}

json find_to_json(const FindConfig& f) {
  return json{{"n_kernels", f.n_kernels},
              {"kernel_px", f.kernel_px},
              {"ker_dense", {f.ker_dense[0], f.ker_dense[1]}},
              {"conv1_channels", f.conv1_channels},
              {"conv1_ksize", f.conv1_ksize},
              {"conv2_channels", f.conv2_channels},
              {"conv2_ksize", f.conv2_ksize},
              {"feature_dense", {f.feature_dense[0], f.feature_dense[1]}},
              {"feature_dim", f.feature_dim},
              {"pos_mlp_units", f.pos_mlp_units},
              {"pos_head_units", f.pos_head_units},
              {"prior_scale", f.prior_scale}};
}

FindConfig find_from_json(const json& j) {
  FindConfig f;
  f.n_kernels = j.value("n_kernels", f.n_kernels);
  f.kernel_px = j.value("kernel_px", f.kernel_px);
  if (j.contains("ker_dense")) f.ker_dense = {j["ker_dense"][0], j["ker_dense"][1]};
  f.conv1_channels = j.value("conv1_channels", f.conv1_channels);
  f.conv1_ksize = j.value("conv1_ksize", f.conv1_ksize);
  f.conv2_channels = j.value("conv2_channels", f.conv2_channels);
  f.conv2_ksize = j.value("conv2_ksize", f.conv2_ksize);
  if (j.contains("feature_dense"))
    f.feature_dense = {j["feature_dense"][0], j["feature_dense"][1]};
  f.feature_dim = j.value("feature_dim", f.feature_dim);
  f.pos_mlp_units = j.value("pos_mlp_units", f.pos_mlp_units);
  f.pos_head_units = j.value("pos_head_units", f.pos_head_units);
  f.prior_scale = j.value("prior_scale", f.prior_scale);
  return f;
}

}  // namespace

std::string VtssiConfig::to_json() const {
  json j{{"frame_h", frame_h},
         {"frame_w", frame_w},
         {"K", K},
         {"M", M},
         {"T", T},
         {"variant", vts::to_string(variant)},
         {"air", air_to_json(air)},
         {"find", find_to_json(find)},
         {"rect", {{"lstm_units", rect.lstm_units}, {"head_units", rect.head_units}}},
         {"mot",
          {{"motion_dim", mot.motion_dim},
           {"lstm_units", mot.lstm_units},
           {"head_units", mot.head_units},
           {"tr_units", mot.tr_units},
           {"tr_head_units", mot.tr_head_units}}},
         {"fusion",
          {{"w_min", fusion.w_min}, {"w_max", fusion.w_max}, {"test_w", fusion.test_w}}},
         {"trainer",
          {{"batch_size", trainer.batch_size},
           {"lr", trainer.lr},
           {"lr_anneal_start", trainer.lr_anneal_start},
           {"lr_anneal_rate", trainer.lr_anneal_rate},
           {"lr_anneal_interval", trainer.lr_anneal_interval},
           {"lr_floor", trainer.lr_floor},
           {"adam_beta1", trainer.adam_beta1},
           {"adam_beta2", trainer.adam_beta2},
           {"adam_eps", trainer.adam_eps},
           {"clip_norm", trainer.clip_norm},
           {"total_steps", trainer.total_steps},
           {"curriculum_start", trainer.curriculum_start},
           {"curriculum_interval", trainer.curriculum_interval},
           {"joint_air_curriculum_steps", trainer.joint_air_curriculum_steps},
           {"checkpoint_interval", trainer.checkpoint_interval},
           {"log_interval", trainer.log_interval},
           {"seed", trainer.seed},
           {"threads", trainer.threads}}}};
  return j.dump(2);
}

VtssiConfig VtssiConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  VtssiConfig c;
  c.frame_h = j.value("frame_h", c.frame_h);
  c.frame_w = j.value("frame_w", c.frame_w);
  c.K = j.value("K", c.K);
  c.M = j.value("M", c.M);
  c.T = j.value("T", c.T);
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"]);
  if (j.contains("air")) c.air = air_from_json(j["air"]);
  if (j.contains("find")) c.find = find_from_json(j["find"]);
  if (j.contains("rect")) {
    c.rect.lstm_units = j["rect"].value("lstm_units", c.rect.lstm_units);
    c.rect.head_units = j["rect"].value("head_units", c.rect.head_units);
  }
  if (j.contains("mot")) {
    const auto& m = j["mot"];
    c.mot.motion_dim = m.value("motion_dim", c.mot.motion_dim);
    c.mot.lstm_units = m.value("lstm_units", c.mot.lstm_units);
    c.mot.head_units = m.value("head_units", c.mot.head_units);
    c.mot.tr_units = m.value("tr_units", c.mot.tr_units);
    c.mot.tr_head_units = m.value("tr_head_units", c.mot.tr_head_units);
  }
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    c.fusion.w_min = f.value("w_min", c.fusion.w_min);
    c.fusion.w_max = f.value("w_max", c.fusion.w_max);
    c.fusion.test_w = f.value("test_w", c.fusion.test_w);
  }
  if (j.contains("trainer")) {
    const auto& t = j["trainer"];
    c.trainer.batch_size = t.value("batch_size", c.trainer.batch_size);
    c.trainer.lr = t.value("lr", c.trainer.lr);
    c.trainer.lr_anneal_start = t.value("lr_anneal_start", c.trainer.lr_anneal_start);
    c.trainer.lr_anneal_rate = t.value("lr_anneal_rate", c.trainer.lr_anneal_rate);
    c.trainer.lr_anneal_interval = t.value("lr_anneal_interval", c.trainer.lr_anneal_interval);
    c.trainer.lr_floor = t.value("lr_floor", c.trainer.lr_floor);
    c.trainer.adam_beta1 = t.value("adam_beta1", c.trainer.adam_beta1);
    c.trainer.adam_beta2 = t.value("adam_beta2", c.trainer.adam_beta2);
    c.trainer.adam_eps = t.value("adam_eps", c.trainer.adam_eps);
    c.trainer.clip_norm = t.value("clip_norm", c.trainer.clip_norm);
    c.trainer.total_steps = t.value("total_steps", c.trainer.total_steps);
    c.trainer.curriculum_start = t.value("curriculum_start", c.trainer.curriculum_start);
    c.trainer.curriculum_interval =
        t.value("curriculum_interval", c.trainer.curriculum_interval);
    c.trainer.joint_air_curriculum_steps =
        t.value("joint_air_curriculum_steps", c.trainer.joint_air_curriculum_steps);
    c.trainer.checkpoint_interval = t.value("checkpoint_interval", c.trainer.checkpoint_interval);
    c.trainer.log_interval = t.value("log_interval", c.trainer.log_interval);
    c.trainer.seed = t.value("seed", c.trainer.seed);
    c.trainer.threads = t.value("threads", c.trainer.threads);
  }
  c.validate();
  return c;
}

VtssiConfig VtssiConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void VtssiConfig::apply_env_overrides() {
  auto env_int = [](const char* name, auto& field) {
    if (const char* v = std::getenv(name)) field = static_cast<std::decay_t<decltype(field)>>(std::atoll(v));
  };
  auto env_double = [](const char* name, double& field) {
    if (const char* v = std::getenv(name)) field = std::atof(v);
  };
  env_int("VTS_K", K);
  env_int("VTS_M", M);
  env_int("VTS_T", T);
  env_int("VTS_BATCH_SIZE", trainer.batch_size);
  env_int("VTS_TOTAL_STEPS", trainer.total_steps);
  env_int("VTS_THREADS", trainer.threads);
  env_int("VTS_SEED", trainer.seed);
  env_double("VTS_LR", trainer.lr);
  if (const char* v = std::getenv("VTS_VARIANT")) variant = variant_from_string(v);
  validate();
}

// ---- schedules --------------------------------------------------------------

int curriculum_start_default(Variant v) { return v == Variant::vtssi ? 6 : 1; }
std::int64_t curriculum_interval_default(Variant v) {
  return v == Variant::vtssi ? 30000 : 20000;
}

int curriculum_len(std::int64_t global_step, Variant v, const TrainerConfig& t, int T) {
  int start = t.curriculum_start > 0 ? t.curriculum_start : curriculum_start_default(v);
  std::int64_t interval =
      t.curriculum_interval > 0 ? t.curriculum_interval : curriculum_interval_default(v);
  std::int64_t len = start + global_step / interval;
  return static_cast<int>(std::min<std::int64_t>(len, T));
}

double learning_rate(std::int64_t global_step, const TrainerConfig& t) {
  if (global_step <= t.lr_anneal_start) return t.lr;
  double exponent = static_cast<double>(global_step - t.lr_anneal_start) /
                    static_cast<double>(t.lr_anneal_interval);
  return std::max(t.lr_floor, t.lr * std::pow(t.lr_anneal_rate, exponent));
}

double cnt_prior_loc(std::int64_t global_step, const AirConfig& a) {
  if (global_step <= a.cnt_anneal_start) return a.cnt_prior_loc_start;
  if (global_step >= a.cnt_anneal_end) return a.cnt_prior_loc_end;
  double f = static_cast<double>(global_step - a.cnt_anneal_start) /
             static_cast<double>(a.cnt_anneal_end - a.cnt_anneal_start);
  return a.cnt_prior_loc_start + f * (a.cnt_prior_loc_end - a.cnt_prior_loc_start);
}

double flatten_p(std::int64_t global_step, const AirConfig& a) {
  double p = a.flatten_increment * static_cast<double>(global_step / a.flatten_interval);
  return std::min(p, a.flatten_max);
}

}  // namespace vts

#include "vts/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vts/checkpoint.hpp"
#include "vts/datagen.hpp"
#include "vts/evalmod.hpp"
#include "vts/imageio.hpp"
#include "vts/trainer.hpp"
#include "vts/vtssi.hpp"

namespace vts::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "vts 1.0.0";

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Reproducibility record, written before any long computation starts.
void write_run_manifest(const std::string& dir, int argc, const char* const* argv,
                        const std::string& config_echo, std::uint64_t seed,
                        const std::vector<std::string>& outputs) {
  fs::create_directories(dir);
  std::string cmdline;
  for (int i = 0; i < argc; ++i) {
    if (i) cmdline += ' ';
    cmdline += argv[i];
  }
  json j{{"command_line", cmdline},
         {"code_version", kVersion},
         {"config_hash", fnv1a(config_echo)},
         {"seed", seed},
         {"timestamp", iso_timestamp()},
         {"outputs", outputs}};
  std::ofstream out(fs::path(dir) / "run_manifest.json");
  out << j.dump(2) << '\n';
}

int cmd_gen_data(const data::DataConfig& cfg, int n, const std::string& out_dir, int argc,
                 const char* const* argv) {
  write_run_manifest(out_dir, argc, argv, cfg.to_json(), cfg.seed,
                     {"frames.bin", "annotations.jsonl", "manifest.json"});
  data::write_dataset(cfg, n, out_dir);
  std::cout << "wrote " << n << " sequences to " << out_dir << "\n";
  return 0;
}

VtssiConfig load_train_config(const std::string& config_path, const std::string& variant,
                              std::int64_t steps, std::int64_t seed, int threads,
                              const data::DatasetReader& dataset) {
  VtssiConfig cfg;
  if (!config_path.empty()) cfg = VtssiConfig::from_json_file(config_path);
  cfg.frame_h = dataset.frame_h();
  cfg.frame_w = dataset.frame_w();
  if (!variant.empty()) cfg.variant = variant_from_string(variant);
  if (steps > 0) cfg.trainer.total_steps = steps;
  if (seed >= 0) cfg.trainer.seed = static_cast<std::uint64_t>(seed);
  if (threads > 0) cfg.trainer.threads = threads;
  cfg.apply_env_overrides();
  cfg.validate();
  return cfg;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& variant, const std::string& out_dir, std::int64_t steps,
              std::int64_t seed, int threads, int argc, const char* const* argv) {
  data::DatasetReader dataset(data_dir);
  VtssiConfig cfg = load_train_config(config_path, variant, steps, seed, threads, dataset);
  write_run_manifest(out_dir, argc, argv, cfg.to_json(), cfg.trainer.seed,
                     {"metrics.jsonl", "config.json", "checkpoints"});
  {
    std::ofstream cf(fs::path(out_dir) / "config.json");
    cf << cfg.to_json() << '\n';
  }
  model::VtssiModel model(cfg, stream_seed(cfg.trainer.seed, "model"));
  auto result = train::train(model, dataset, out_dir);
  std::cout << "trained " << result.steps_done << " steps; final checkpoint "
            << result.final_checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, int observe,
             int horizon, const std::string& report_path, bool one_hot, bool find_pos,
             int max_seq, int threads) {
  auto loaded = train::load_checkpoint(ckpt);
  data::DatasetReader dataset(data_dir);
  eval::EvalOptions opt;
  opt.observe = observe;
  opt.horizon = horizon > 0 ? horizon : observe;
  opt.one_hot_rect = one_hot;
  opt.find_positions = find_pos;
  opt.max_sequences = max_seq;
  opt.threads = threads;
  auto report = eval::evaluate(*loaded.model, dataset, opt);
  std::ofstream out(report_path);
  if (!out) throw std::runtime_error("eval: cannot write " + report_path);
  out << report.to_json() << '\n';
  std::cout << "count_accuracy " << report.count_accuracy << ", median inference error "
            << report.median_inference_error << " px";
  if (opt.horizon > opt.observe)
    std::cout << ", median prediction error " << report.median_prediction_error << " px";
  std::cout << "; report " << report_path << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& data_dir, int seq_index,
                int observe, int horizon, const std::string& out_dir, bool sample_latents,
                std::int64_t seed, int argc, const char* const* argv) {
  auto loaded = train::load_checkpoint(ckpt);
  data::DatasetReader dataset(data_dir);
  if (seq_index < 0 || seq_index >= dataset.size())
    throw std::runtime_error("predict: sequence index out of range");
  auto [frames, ann] = dataset.get(seq_index);
  if (horizon > frames.t) throw std::runtime_error("predict: horizon exceeds dataset T");
  write_run_manifest(out_dir, argc, argv, loaded.model->config().to_json(),
                     static_cast<std::uint64_t>(seed < 0 ? 0 : seed),
                     {"positions.json", "predicted_overlay.png", "generated.png"});
  Rng rng(stream_seed(seed < 0 ? 0 : static_cast<std::uint64_t>(seed), "predict"));
  auto pred = loaded.model->predict(frames, observe, horizon, !sample_latents, false,
                                    sample_latents ? &rng : nullptr);
  const VtssiConfig& cfg = loaded.model->config();

  json pos = json::array();
  for (std::size_t i = 0; i < pred.positions.size(); ++i) {
    json track = json::array();
    for (const auto& p : pred.positions[i]) {
      auto px = eval::to_pixels(p, cfg.frame_h, cfg.frame_w);
      track.push_back({{"norm", {p[0], p[1]}}, {"px", {px[0], px[1]}}});
    }
    pos.push_back({{"object", i},
                   {"size", {pred.sizes[i][0], pred.sizes[i][1]}},
                   {"track", std::move(track)}});
  }
  json out{{"sequence", seq_index},
           {"observed", observe},
           {"horizon", horizon},
           {"count", pred.count.rounded},
           {"objects", std::move(pos)}};
  std::ofstream pf(fs::path(out_dir) / "positions.json");
  pf << out.dump(2) << '\n';

  // ground-truth frames with superimposed predictions, plus pure generations
  const img::Rgb palette[] = {{255, 80, 80}, {80, 200, 255}, {120, 255, 120}};
  std::vector<Tensor> gt_frames;
  std::vector<std::vector<img::Overlay>> overlays;
  for (int t = 0; t < horizon; ++t) {
    gt_frames.push_back(frames.frame(t));
    std::vector<img::Overlay> per_frame;
    for (std::size_t i = 0; i < pred.positions.size(); ++i) {
      auto px = eval::to_pixels(pred.positions[i][static_cast<std::size_t>(t)],
                                cfg.frame_h, cfg.frame_w);
      per_frame.push_back({px,
                           {pred.sizes[i][0] * (cfg.frame_w - 1),
                            pred.sizes[i][1] * (cfg.frame_h - 1)},
                           palette[i % 3]});
    }
    overlays.push_back(std::move(per_frame));
  }
  img::render_frame_strip((fs::path(out_dir) / "predicted_overlay.png").string(),
                          gt_frames, overlays);
  img::render_frame_strip((fs::path(out_dir) / "generated.png").string(), pred.generated,
                          {});
  std::cout << "prediction artifacts in " << out_dir << "\n";
  return 0;
}

int cmd_plot(const std::string& report_path, const std::string& out_dir) {
  auto report = eval::EvalReport::from_json_file(report_path);
  fs::create_directories(out_dir);
  int train_T = VtssiConfig::from_json(report.config_json).T;

  std::vector<img::Curve> curves;
  img::Curve inf{"inference error", report.inference_error_curve, 1, {200, 60, 60}};
  curves.push_back(inf);
  if (!report.prediction_error_curve.empty())
    curves.push_back({"prediction error", report.prediction_error_curve,
                      report.observed + 1, {60, 60, 200}});
  std::vector<std::pair<int, std::string>> markers{
      {report.observed, "t" + std::to_string(report.observed)},
      {train_T, "t" + std::to_string(train_T)}};
  img::render_curve_plot((fs::path(out_dir) / "error_curves.png").string(), curves,
                         markers, "error ");

  std::vector<img::Curve> med;
  med.push_back({"inference error", report.inference_error_median_curve, 1, {200, 60, 60}});
  if (!report.prediction_error_median_curve.empty())
    med.push_back({"prediction error", report.prediction_error_median_curve,
                   report.observed + 1, {60, 60, 200}});
  img::render_curve_plot((fs::path(out_dir) / "error_curves_median.png").string(), med,
                         markers, "error ");
  std::cout << "plots in " << out_dir << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"generative state-space multi-object tracking"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  data::DataConfig dc;
  std::string motion = "linear", bounce = "appearance", sprites = "procedural";
  std::string overlap = "true", out_dir;
  int n = 100, hw = 50;
  gen->add_option("--motion", motion, "linear|elliptic");
  gen->add_option("--overlap-first-frame", overlap, "true|false");
  gen->add_option("--bounce", bounce, "appearance|bbox-corner");
  gen->add_option("--n", n, "number of sequences");
  gen->add_option("--t", dc.seq_len, "frames per sequence");
  gen->add_option("--hw", hw, "frame height and width");
  gen->add_option("--sprites", sprites, "procedural|image-bank");
  gen->add_option("--image-bank", dc.image_bank_path, "IDX raster file for image-bank");
  gen->add_option("--seed", dc.seed, "dataset seed");
  gen->add_option("--count-min", dc.count_min, "minimum object count");
  gen->add_option("--max-objects", dc.max_objects, "maximum object count");
  gen->add_option("--sprite-px-min", dc.sprite_px_min, "sprite size lower bound");
  gen->add_option("--sprite-px-max", dc.sprite_px_max, "sprite size upper bound");
  gen->add_option("--speed-min", dc.speed_min, "linear speed lower bound (px/frame)");
  gen->add_option("--speed-max", dc.speed_max, "linear speed upper bound (px/frame)");
  gen->add_option("--margin", dc.margin_px, "virtual wall shift for corner bounce");
  gen->add_option("--out", out_dir, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string config_path, variant, run_dir, data_dir;
  std::int64_t steps = -1, seed = -1;
  int threads = -1;
  tr->add_option("--config", config_path, "config JSON path");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--variant", variant, "air|find|rect_find|find_mot|vtssi");
  tr->add_option("--out", run_dir, "run directory")->required();
  tr->add_option("--steps", steps, "override total steps");
  tr->add_option("--seed", seed, "global seed");
  tr->add_option("--threads", threads, "worker threads");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt, report_path = "report.json";
  int observe = 0, horizon = 0, max_seq = -1, ev_threads = 2;
  bool one_hot = false, find_pos = false;
  ev->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--observe", observe, "observation horizon")->required();
  ev->add_option("--horizon", horizon, "total evaluation horizon");
  ev->add_option("--report", report_path, "output report JSON");
  ev->add_flag("--one-hot-rect", one_hot, "one-hot rectification weights");
  ev->add_flag("--find-positions", find_pos, "evaluate tracking outputs directly");
  ev->add_option("--max-seq", max_seq, "cap on evaluated sequences");
  ev->add_option("--threads", ev_threads, "worker threads");

  // predict
  auto* pr = app.add_subcommand("predict", "seeded generative prediction");
  int seq_index = 0, pr_observe = 0, pr_horizon = 0;
  bool sample_latents = false;
  std::string pr_out;
  pr->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  pr->add_option("--data", data_dir, "dataset directory")->required();
  pr->add_option("--seq", seq_index, "sequence index");
  pr->add_option("--observe", pr_observe, "observation horizon")->required();
  pr->add_option("--horizon", pr_horizon, "total horizon")->required();
  pr->add_option("--out", pr_out, "output directory")->required();
  pr->add_flag("--sample", sample_latents, "sample latents instead of modes");
  pr->add_option("--seed", seed, "sampling seed");

  // plot
  auto* pl = app.add_subcommand("plot", "render error curves from a report");
  std::string plot_report, plot_out;
  pl->add_option("--report", plot_report, "report JSON path")->required();
  pl->add_option("--out", plot_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      dc.frame_h = dc.frame_w = hw;
      dc.motion = data::motion_from_string(motion);
      dc.bounce = data::bounce_from_string(bounce);
      dc.sprites = data::sprites_from_string(sprites);
      dc.overlap_first_frame = overlap == "true" || overlap == "1";
      return cmd_gen_data(dc, n, out_dir, argc, argv);
    }
    if (tr->parsed())
      return cmd_train(config_path, data_dir, variant, run_dir, steps, seed, threads,
                       argc, argv);
    if (ev->parsed())
      return cmd_eval(ckpt, data_dir, observe, horizon, report_path, one_hot, find_pos,
                      max_seq, ev_threads);
    if (pr->parsed())
      return cmd_predict(ckpt, data_dir, seq_index, pr_observe, pr_horizon, pr_out,
                         sample_latents, seed, argc, argv);
    if (pl->parsed()) return cmd_plot(plot_report, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace vts::cli

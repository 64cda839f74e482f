#include "vts/trainer.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vts/checkpoint.hpp"

namespace vts::train {

using nlohmann::json;

namespace {

struct SlotOutcome {
  double elbo = 0.0;
  double recon = 0.0;
  double kl_cnt = 0.0, kl_size = 0.0, kl_desc = 0.0, kl_pos = 0.0, kl_mot = 0.0;
  double warm = 0.0;
  bool finite = true;
  json term_dump;  // filled only when a non-finite loss is detected
};

void add_kl(SlotOutcome& out, const model::ElboTerm& term) {
  double v = term.kl.scalar();
  if (term.name.find("/mot/") != std::string::npos)
    out.kl_mot += v;
  else if (term.name.find("/pos") != std::string::npos)
    out.kl_pos += v;
  else if (term.name.find("/desc") != std::string::npos)
    out.kl_desc += v;
  else if (term.name.find("/size") != std::string::npos)
    out.kl_size += v;
  else
    out.kl_cnt += v;
}

std::string checkpoint_name(std::int64_t step) {
  std::ostringstream os;
  os << "checkpoint_" << std::setw(8) << std::setfill('0') << step << ".bin";
  return os.str();
}

}  // namespace

TrainResult train(model::VtssiModel& model, const data::DatasetReader& dataset,
                  const std::string& run_dir) {
  namespace fs = std::filesystem;
  const VtssiConfig& cfg = model.config();
  const TrainerConfig& tc = cfg.trainer;
  if (dataset.seq_len() < cfg.T)
    throw std::invalid_argument("train: dataset sequences shorter than T");
  if (dataset.frame_h() != cfg.frame_h || dataset.frame_w() != cfg.frame_w)
    throw std::invalid_argument("train: dataset frame size does not match config");
  if (dataset.size() < 1) throw std::invalid_argument("train: empty dataset");

  fs::create_directories(run_dir);
  std::ofstream metrics(fs::path(run_dir) / "metrics.jsonl");
  if (!metrics) throw std::runtime_error("train: cannot write metrics log");

  Adam opt(model.params(), AdamConfig{tc.adam_beta1, tc.adam_beta2, tc.adam_eps});
  int threads = std::max(1, tc.threads);
  int batch = std::max(1, tc.batch_size);

  Rng batch_rng(stream_seed(tc.seed, "batch"));
  std::uint64_t noise_root = stream_seed(tc.seed, "noise");
  std::int64_t curriculum_interval = tc.curriculum_interval > 0
                                         ? tc.curriculum_interval
                                         : curriculum_interval_default(cfg.variant);

  std::vector<GradBuffer> thread_grads(static_cast<std::size_t>(threads));
  for (auto& g : thread_grads) g.init(model.params());
  GradBuffer total_grads;
  total_grads.init(model.params());

  std::deque<double> elbo_window;
  double elbo_window_sum = 0.0;
  const std::size_t window_len = 200;

  TrainResult result;
  result.metrics_path = (fs::path(run_dir) / "metrics.jsonl").string();
  auto wall_start = std::chrono::steady_clock::now();

  for (std::int64_t step = 0; step < tc.total_steps; ++step) {
    int t_use = curriculum_len(step, cfg.variant, tc, cfg.T);
    bool warm_start = cfg.variant == Variant::vtssi &&
                      step / curriculum_interval < tc.joint_air_curriculum_steps;
    model::StepSchedules sched{cnt_prior_loc(step, cfg.air), flatten_p(step, cfg.air)};

    std::vector<int> indices(static_cast<std::size_t>(batch));
    for (auto& idx : indices) idx = batch_rng.uniform_int(0, dataset.size() - 1);

    std::vector<SlotOutcome> outcomes(static_cast<std::size_t>(batch));
    auto worker = [&](int tid) {
      GradBuffer& grads = thread_grads[static_cast<std::size_t>(tid)];
      for (int slot = tid; slot < batch; slot += threads) {
        auto [frames, ann] = dataset.get(indices[static_cast<std::size_t>(slot)]);
        Rng noise(mix_seed(noise_root,
                           static_cast<std::uint64_t>(step) * batch +
                               static_cast<std::uint64_t>(slot)));
        ad::Graph g;
        model::LatentSampler sample{&noise};
        model::VtssiModel::ForwardOptions fo;
        fo.t_use = t_use;
        fo.training = true;
        fo.build_air_recon = warm_start;
        fo.sched = sched;
        auto scene = model.forward(g, frames, fo, sample);
        auto breakdown = model.elbo(g, frames, scene, fo);
        ad::Var objective = breakdown.total();
        SlotOutcome& out = outcomes[static_cast<std::size_t>(slot)];
        out.elbo = objective.scalar();
        out.recon = breakdown.log_likelihood.scalar();
        for (const auto& term : breakdown.kls) add_kl(out, term);
        if (warm_start) {
          int prefix = static_cast<int>(scene.air_canvases.size());
          for (int t = 0; t < prefix; ++t) {
            auto air_terms = model::air_frame_elbo(
                g, frames.frame(t), scene.air_frames[static_cast<std::size_t>(t)],
                scene.air_canvases[static_cast<std::size_t>(t)], cfg.air,
                sched.cnt_prior_loc, "warm_t" + std::to_string(t + 1) + "/");
            objective = ad::add(objective, air_terms.total());
            out.warm += air_terms.total().scalar();
          }
        }
        ad::Var loss = ad::neg(objective);
        if (!std::isfinite(loss.scalar())) {
          out.finite = false;
          json terms = json::object();
          terms["log_likelihood"] = breakdown.log_likelihood.scalar();
          for (const auto& term : breakdown.kls) terms[term.name] = term.kl.scalar();
          out.term_dump = terms;
          continue;
        }
        g.backward(loss);
        g.accumulate_param_grads(grads);
      }
    };
    if (threads == 1) {
      worker(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
      for (auto& th : pool) th.join();
    }

    for (int slot = 0; slot < batch; ++slot) {
      const SlotOutcome& out = outcomes[static_cast<std::size_t>(slot)];
      if (!out.finite) {
        json diag{{"step", step},
                  {"batch_slot", slot},
                  {"sequence_index", indices[static_cast<std::size_t>(slot)]},
                  {"terms", out.term_dump}};
        std::ofstream d(fs::path(run_dir) / "diagnostic.json");
        d << diag.dump(2) << '\n';
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                 ", diagnostics in " + run_dir + "/diagnostic.json");
      }
    }

    total_grads.zero();
    for (auto& g : thread_grads) {
      total_grads.add(g);
      g.zero();
    }
    total_grads.scale(1.0 / batch);
    if (!total_grads.all_finite()) {
      std::ofstream d(fs::path(run_dir) / "diagnostic.json");
      d << json{{"step", step}, {"error", "non-finite gradient"}}.dump(2) << '\n';
      throw std::runtime_error("train: non-finite gradient at step " + std::to_string(step));
    }
    double grad_norm = clip_global_norm(total_grads, tc.clip_norm);
    double lr = learning_rate(step, tc);
    opt.step(model.params(), total_grads, lr);

    double elbo_mean = 0.0, recon_mean = 0.0, warm_mean = 0.0;
    double kl_cnt = 0, kl_size = 0, kl_desc = 0, kl_pos = 0, kl_mot = 0;
    for (const auto& out : outcomes) {
      elbo_mean += out.elbo;
      recon_mean += out.recon;
      warm_mean += out.warm;
      kl_cnt += out.kl_cnt;
      kl_size += out.kl_size;
      kl_desc += out.kl_desc;
      kl_pos += out.kl_pos;
      kl_mot += out.kl_mot;
    }
    elbo_mean /= batch;
    recon_mean /= batch;
    warm_mean /= batch;
    elbo_window.push_back(elbo_mean);
    elbo_window_sum += elbo_mean;
    if (elbo_window.size() > window_len) {
      elbo_window_sum -= elbo_window.front();
      elbo_window.pop_front();
    }
    double elbo_ma = elbo_window_sum / static_cast<double>(elbo_window.size());
    result.last_elbo_ma = elbo_ma;

    if (step % tc.log_interval == 0 || step + 1 == tc.total_steps) {
      double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
              .count();
      json rec{{"step", step},
               {"elbo", elbo_mean},
               {"elbo_ma", elbo_ma},
               {"recon", recon_mean},
               {"kl",
                {{"cnt", kl_cnt / batch},
                 {"size", kl_size / batch},
                 {"desc", kl_desc / batch},
                 {"pos", kl_pos / batch},
                 {"mot", kl_mot / batch}}},
               {"warm_elbo", warm_mean},
               {"lr", lr},
               {"curriculum_len", t_use},
               {"grad_norm", grad_norm},
               {"wall_s", wall}};
      metrics << rec.dump() << '\n';
      metrics.flush();
    }

    if ((step + 1) % tc.checkpoint_interval == 0 || step + 1 == tc.total_steps) {
      std::string name = checkpoint_name(step + 1);
      save_checkpoint((fs::path(run_dir) / name).string(), cfg, model.params(), step + 1,
                      &opt);
      result.final_checkpoint = (fs::path(run_dir) / name).string();
    }
    result.steps_done = step + 1;
  }
  return result;
}

}  // namespace vts::train

#include "vts/evalmod.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace vts::eval {

using nlohmann::json;

std::array<double, 2> to_pixels(const std::array<double, 2>& pos_norm, int frame_h,
                                int frame_w) {
  return {(pos_norm[0] + 1.0) * 0.5 * (frame_w - 1),
          (pos_norm[1] + 1.0) * 0.5 * (frame_h - 1)};
}

namespace {

double prefix_cost(const Track& a, const Track& b, int prefix_len) {
  int t_max = static_cast<int>(std::min(a.size(), b.size()));
  t_max = std::min(t_max, prefix_len);
  double cost = 0.0;
  for (int t = 0; t < t_max; ++t)
    cost += std::hypot(a[t][0] - b[t][0], a[t][1] - b[t][1]);
  return cost;
}

// enumerate injective maps from [0, k) of the smaller side into the larger,
// in lexicographic order of the assignment vector
void enumerate(int k, int n, std::vector<int>& cur, std::vector<bool>& used,
               const std::function<void(const std::vector<int>&)>& emit) {
  if (static_cast<int>(cur.size()) == k) {
    emit(cur);
    return;
  }
  for (int j = 0; j < n; ++j) {
    if (used[static_cast<std::size_t>(j)]) continue;
    used[static_cast<std::size_t>(j)] = true;
    cur.push_back(j);
    enumerate(k, n, cur, used, emit);
    cur.pop_back();
    used[static_cast<std::size_t>(j)] = false;
  }
}

}  // namespace

std::vector<std::pair<int, int>> match_objects(const std::vector<Track>& gt,
                                               const std::vector<Track>& inferred,
                                               int prefix_len) {
  int m = static_cast<int>(gt.size());
  int n = static_cast<int>(inferred.size());
  int k = std::min(m, n);
  if (k == 0) return {};
  bool gt_small = m <= n;
  int large = gt_small ? n : m;

  std::vector<std::pair<int, int>> best;
  double best_cost = 0.0;
  bool have_best = false;
  std::vector<int> cur;
  std::vector<bool> used(static_cast<std::size_t>(large), false);
  enumerate(k, large, cur, used, [&](const std::vector<int>& assign) {
    double cost = 0.0;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < k; ++i) {
      int gi = gt_small ? i : assign[static_cast<std::size_t>(i)];
      int ii = gt_small ? assign[static_cast<std::size_t>(i)] : i;
      cost += prefix_cost(gt[static_cast<std::size_t>(gi)],
                          inferred[static_cast<std::size_t>(ii)], prefix_len);
      pairs.emplace_back(gi, ii);
    }
    std::sort(pairs.begin(), pairs.end());
    if (!have_best || cost < best_cost) {
      have_best = true;
      best_cost = cost;
      best = std::move(pairs);
    }
  });
  return best;
}

namespace {

struct SequenceTracks {
  int pred_count = 0;
  int frames_count_correct = 0;  // per-frame counting (per-frame variant)
  int frames_total = 0;
  std::vector<Track> tracks;  // pixel coordinates
};

SequenceTracks model_tracks(const model::VtssiModel& model,
                            const data::FrameSequence& frames, const EvalOptions& opt,
                            int gt_count) {
  const VtssiConfig& cfg = model.config();
  SequenceTracks out;
  if (cfg.variant == Variant::air) {
    ad::Graph g;
    model::LatentSampler modes{nullptr};
    model::VtssiModel::ForwardOptions fo;
    fo.t_use = opt.observe;
    fo.training = false;
    auto scene = model.forward(g, frames, fo, modes);
    out.tracks.assign(static_cast<std::size_t>(cfg.air.max_objects), {});
    std::vector<int> counts;
    for (int t = 0; t < opt.observe; ++t) {
      const auto& lat = scene.air_frames[static_cast<std::size_t>(t)];
      counts.push_back(lat.count.rounded);
      out.frames_total += 1;
      if (lat.count.rounded == gt_count) out.frames_count_correct += 1;
      for (int i = 0; i < cfg.air.max_objects; ++i) {
        const Tensor& p = lat.objects[static_cast<std::size_t>(i)].pos_sample.val();
        out.tracks[static_cast<std::size_t>(i)].push_back(
            to_pixels({p[0], p[1]}, cfg.frame_h, cfg.frame_w));
      }
    }
    // sequence-level count: majority vote over frames, first frame on ties
    std::vector<int> tally(static_cast<std::size_t>(cfg.air.max_objects) + 1, 0);
    for (int c : counts)
      if (c >= 0 && c <= cfg.air.max_objects) tally[static_cast<std::size_t>(c)] += 1;
    int best = counts.empty() ? 0 : counts[0];
    for (int c = 0; c <= cfg.air.max_objects; ++c)
      if (tally[static_cast<std::size_t>(c)] > tally[static_cast<std::size_t>(best)])
        best = c;
    out.pred_count = best;
    return out;
  }

  bool can_roll = cfg.variant == Variant::vtssi || cfg.variant == Variant::find_mot;
  int horizon = can_roll ? opt.horizon : opt.observe;
  auto pred = model.predict(frames, opt.observe, horizon, true, opt.one_hot_rect, nullptr);
  out.pred_count = pred.count.rounded;
  const auto& src = opt.find_positions ? pred.positions_find : pred.positions;
  for (const auto& track : src) {
    Track px;
    for (const auto& p : track) px.push_back(to_pixels(p, cfg.frame_h, cfg.frame_w));
    out.tracks.push_back(std::move(px));
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

EvalReport evaluate(const model::VtssiModel& model, const data::DatasetReader& dataset,
                    const EvalOptions& opt) {
  const VtssiConfig& cfg = model.config();
  if (opt.observe < 1 || opt.observe > dataset.seq_len())
    throw std::invalid_argument("evaluate: bad observation horizon");
  if (opt.horizon < opt.observe || opt.horizon > dataset.seq_len())
    throw std::invalid_argument("evaluate: horizon must lie in [observe, dataset T]");

  int n_seq = opt.max_sequences > 0 ? std::min(opt.max_sequences, dataset.size())
                                    : dataset.size();
  EvalReport rep;
  rep.variant = to_string(cfg.variant);
  rep.count_mode = cfg.variant == Variant::air ? "per_frame" : "per_sequence";
  rep.positions = opt.find_positions ? "find" : "fused";
  rep.observed = opt.observe;
  rep.horizon = opt.horizon;
  rep.n_sequences = n_seq;
  rep.config_json = cfg.to_json();
  rep.per_sequence.resize(static_cast<std::size_t>(n_seq));

  std::vector<std::vector<std::vector<double>>> inf_by_t(
      static_cast<std::size_t>(opt.observe));
  std::vector<std::vector<std::vector<double>>> pred_by_t(
      static_cast<std::size_t>(std::max(0, opt.horizon - opt.observe)));
  for (auto& v : inf_by_t) v.resize(static_cast<std::size_t>(n_seq));
  for (auto& v : pred_by_t) v.resize(static_cast<std::size_t>(n_seq));

  int threads = std::max(1, opt.threads);
  auto worker = [&](int tid) {
    for (int s = tid; s < n_seq; s += threads) {
      auto [frames, ann] = dataset.get(s);
      SequenceEval& se = rep.per_sequence[static_cast<std::size_t>(s)];
      se.index = s;
      se.gt_count = ann.count;
      SequenceTracks mt = model_tracks(model, frames, opt, ann.count);
      se.pred_count = mt.pred_count;
      se.count_correct = mt.pred_count == ann.count;
      se.frames_count_correct = mt.frames_count_correct;
      se.frames_total = mt.frames_total;
      if (!se.count_correct || ann.count == 0) continue;

      std::vector<Track> gt(static_cast<std::size_t>(ann.count));
      for (int t = 0; t < opt.horizon; ++t)
        for (int i = 0; i < ann.count; ++i)
          gt[static_cast<std::size_t>(i)].push_back(ann.centers[t][static_cast<std::size_t>(i)]);
      se.matching = match_objects(gt, mt.tracks, opt.observe);
      if (se.matching.empty()) continue;

      int pred_len = static_cast<int>(mt.tracks[0].size());
      for (int t = 0; t < std::min(opt.horizon, pred_len); ++t) {
        double sum = 0.0;
        int cnt = 0;
        for (auto [gi, ii] : se.matching) {
          const auto& gp = gt[static_cast<std::size_t>(gi)][static_cast<std::size_t>(t)];
          const auto& ip = mt.tracks[static_cast<std::size_t>(ii)][static_cast<std::size_t>(t)];
          double d = std::hypot(gp[0] - ip[0], gp[1] - ip[1]);
          sum += d;
          ++cnt;
          if (t < opt.observe)
            inf_by_t[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)].push_back(d);
          else
            pred_by_t[static_cast<std::size_t>(t - opt.observe)][static_cast<std::size_t>(s)]
                .push_back(d);
        }
        if (t < opt.observe)
          se.inference_errors.push_back(sum / cnt);
        else
          se.prediction_errors.push_back(sum / cnt);
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  int correct = 0, frames_correct = 0, frames_total = 0;
  for (const auto& se : rep.per_sequence) {
    if (se.count_correct) ++correct;
    frames_correct += se.frames_count_correct;
    frames_total += se.frames_total;
  }
  rep.n_count_matched = correct;
  if (cfg.variant == Variant::air)
    rep.count_accuracy =
        frames_total > 0 ? static_cast<double>(frames_correct) / frames_total : 0.0;
  else
    rep.count_accuracy = n_seq > 0 ? static_cast<double>(correct) / n_seq : 0.0;

  std::vector<double> all_inf, all_pred;
  for (int t = 0; t < opt.observe; ++t) {
    std::vector<double> at_t;
    for (const auto& per_seq : inf_by_t[static_cast<std::size_t>(t)])
      for (double d : per_seq) at_t.push_back(d);
    double mean = 0.0;
    for (double d : at_t) mean += d;
    rep.inference_error_curve.push_back(at_t.empty() ? 0.0 : mean / at_t.size());
    rep.inference_error_median_curve.push_back(median_of(at_t));
    for (double d : at_t) all_inf.push_back(d);
  }
  for (int t = 0; t < opt.horizon - opt.observe; ++t) {
    std::vector<double> at_t;
    for (const auto& per_seq : pred_by_t[static_cast<std::size_t>(t)])
      for (double d : per_seq) at_t.push_back(d);
    double mean = 0.0;
    for (double d : at_t) mean += d;
    rep.prediction_error_curve.push_back(at_t.empty() ? 0.0 : mean / at_t.size());
    rep.prediction_error_median_curve.push_back(median_of(at_t));
    for (double d : at_t) all_pred.push_back(d);
  }
  rep.median_inference_error = median_of(all_inf);
  rep.median_prediction_error = median_of(all_pred);
  double mi = 0.0, mp = 0.0;
  for (double d : all_inf) mi += d;
  for (double d : all_pred) mp += d;
  rep.mean_inference_error = all_inf.empty() ? 0.0 : mi / all_inf.size();
  rep.mean_prediction_error = all_pred.empty() ? 0.0 : mp / all_pred.size();
  return rep;
}

std::string EvalReport::to_json() const {
  json per_seq = json::array();
  for (const auto& se : per_sequence) {
    json matching = json::array();
    for (auto [gi, ii] : se.matching) matching.push_back({gi, ii});
    per_seq.push_back({{"seq", se.index},
                       {"gt_count", se.gt_count},
                       {"pred_count", se.pred_count},
                       {"count_correct", se.count_correct},
                       {"matching", std::move(matching)},
                       {"inference_errors", se.inference_errors},
                       {"prediction_errors", se.prediction_errors}});
  }
  json j{{"variant", variant},
         {"count_mode", count_mode},
         {"positions", positions},
         {"matching", "min_summed_prefix_error"},
         {"observed", observed},
         {"horizon", horizon},
         {"n_sequences", n_sequences},
         {"n_count_matched", n_count_matched},
         {"count_accuracy", count_accuracy},
         {"inference_error_curve", inference_error_curve},
         {"prediction_error_curve", prediction_error_curve},
         {"inference_error_median_curve", inference_error_median_curve},
         {"prediction_error_median_curve", prediction_error_median_curve},
         {"median_inference_error", median_inference_error},
         {"median_prediction_error", median_prediction_error},
         {"mean_inference_error", mean_inference_error},
         {"mean_prediction_error", mean_prediction_error},
         {"per_sequence", std::move(per_seq)},
         {"config", json::parse(config_json)}};
  return j.dump(2);
}

EvalReport EvalReport::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("report: cannot open " + path);
  json j = json::parse(in);
  EvalReport rep;
  rep.variant = j.at("variant");
  rep.count_mode = j.at("count_mode");
  rep.positions = j.value("positions", "fused");
  rep.observed = j.at("observed");
  rep.horizon = j.at("horizon");
  rep.n_sequences = j.at("n_sequences");
  rep.n_count_matched = j.at("n_count_matched");
  rep.count_accuracy = j.at("count_accuracy");
  rep.inference_error_curve = j.at("inference_error_curve").get<std::vector<double>>();
  rep.prediction_error_curve = j.at("prediction_error_curve").get<std::vector<double>>();
  rep.inference_error_median_curve =
      j.at("inference_error_median_curve").get<std::vector<double>>();
  rep.prediction_error_median_curve =
      j.at("prediction_error_median_curve").get<std::vector<double>>();
  rep.median_inference_error = j.at("median_inference_error");
  rep.median_prediction_error = j.at("median_prediction_error");
  rep.mean_inference_error = j.at("mean_inference_error");
  rep.mean_prediction_error = j.at("mean_prediction_error");
  rep.config_json = j.at("config").dump();
  return rep;
}

}  // namespace vts::eval

#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "vts/datagen.hpp"
#include "vts/vtssi.hpp"

namespace vts::eval {

// Normalized [-1,1] position to pixel coordinates under the pixel-center
// convention: -1 maps to pixel 0, +1 to pixel extent-1. Input order (x, y).
std::array<double, 2> to_pixels(const std::array<double, 2>& pos_norm, int frame_h,
                                int frame_w);

using Track = std::vector<std::array<double, 2>>;  // per-timestep (x, y) pixels

// Over all injective assignments of min(|gt|, |inferred|) pairs, returns the
// one minimizing the summed Euclidean error over the first `prefix_len`
// steps; ties break to the lexicographically smallest assignment. Pairs are
// (gt_index, inferred_index), sorted by gt index.
std::vector<std::pair<int, int>> match_objects(const std::vector<Track>& gt,
                                               const std::vector<Track>& inferred,
                                               int prefix_len);

struct SequenceEval {
  int index = 0;
  int gt_count = 0;
  int pred_count = 0;
  bool count_correct = false;
  int frames_count_correct = 0;  // per-frame tallies (per-frame count mode)
  int frames_total = 0;
  std::vector<std::pair<int, int>> matching;
  // matched per-timestep Euclidean errors, averaged over objects
  std::vector<double> inference_errors;   // t < observe
  std::vector<double> prediction_errors;  // t >= observe
};

struct EvalReport {
  std::string variant;
  std::string count_mode;  // "per_sequence" or "per_frame"
  std::string positions;   // "fused" or "find"
  int observed = 0;
  int horizon = 0;
  int n_sequences = 0;
  int n_count_matched = 0;
  double count_accuracy = 0.0;
  std::vector<double> inference_error_curve;         // mean px error per timestep
  std::vector<double> prediction_error_curve;        // mean px error per timestep
  std::vector<double> inference_error_median_curve;
  std::vector<double> prediction_error_median_curve;
  double median_inference_error = 0.0;    // over all matched (seq, obj, t<observe)
  double median_prediction_error = 0.0;   // over all matched (seq, obj, t>=observe)
  double mean_inference_error = 0.0;
  double mean_prediction_error = 0.0;
  std::vector<SequenceEval> per_sequence;
  std::string config_json;

  std::string to_json() const;
  static EvalReport from_json_file(const std::string& path);
};

struct EvalOptions {
  int observe = 0;
  int horizon = 0;
  bool one_hot_rect = false;
  bool find_positions = false;  // evaluate the tracking component's outputs directly
  int max_sequences = -1;       // -1: whole dataset
  int threads = 2;
};

// Mode-replacement evaluation of a trained model over a dataset: counting
// accuracy plus matched center-error curves, per the prefix matching rule.
// Count-mismatched sequences contribute to accuracy only.
EvalReport evaluate(const model::VtssiModel& model, const data::DatasetReader& dataset,
                    const EvalOptions& opt);

}  // namespace vts::eval

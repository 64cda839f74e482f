#pragma once

#include <string>

#include "vts/datagen.hpp"
#include "vts/vtssi.hpp"

namespace vts::train {

struct TrainResult {
  std::int64_t steps_done = 0;
  double last_elbo_ma = 0.0;
  std::string metrics_path;
  std::string final_checkpoint;
};

// Maximizes the single-sample ELBO on curriculum-truncated sequences with
// Adam (beta1 = 0.5), global-norm clipping, the annealed learning rate and
// prior/mask schedules, and the joint per-frame warm-start objective during
// the first curriculum steps of the full model. Writes metrics (JSON lines)
// and periodic checkpoints into `run_dir`. Aborts with a diagnostic dump on
// a non-finite loss.
TrainResult train(model::VtssiModel& model, const data::DatasetReader& dataset,
                  const std::string& run_dir);

}  // namespace vts::train

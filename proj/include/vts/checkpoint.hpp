#pragma once

#include <memory>
#include <string>

#include "vts/nn.hpp"
#include "vts/vtssi.hpp"

namespace vts::train {

// Versioned binary archive: format version, config echo, parameter blobs,
// global step, and (optionally) optimizer moments. Little-endian; doubles
// are stored bit-exactly so checkpoints round-trip exactly.
void save_checkpoint(const std::string& path, const VtssiConfig& cfg,
                     const ParamStore& params, std::int64_t global_step,
                     const Adam* opt = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<model::VtssiModel> model;
  std::int64_t global_step = 0;
  bool has_optimizer = false;
};

// Rebuilds the model from the embedded config and restores parameters (and
// optimizer moments into `opt` when present and requested).
LoadedCheckpoint load_checkpoint(const std::string& path, Adam* opt = nullptr);

}  // namespace vts::train

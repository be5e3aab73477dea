#pragma once

#include <string>

#include "mtt/config.hpp"
#include "mtt/taskhead.hpp"

namespace mtt {

/// Binary checkpoint: magic "MTTCKPT1", u32 format version, the canonical
/// config text, then every parameter as (name, shape, little-endian f32
/// payload) in visit_params order. Values are stored at 32-bit precision and
/// up-cast on load, so load -> save is byte-identical.
void save_checkpoint(const std::string& path, const Model& model, const TrainConfig& config);

struct LoadedCheckpoint {
  TrainConfig config;
  Model model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace mtt

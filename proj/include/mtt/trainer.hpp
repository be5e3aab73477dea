#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mtt/config.hpp"
#include "mtt/data.hpp"
#include "mtt/loss.hpp"
#include "mtt/smoothing.hpp"
#include "mtt/taskhead.hpp"

namespace mtt {

/// Optimizer state keyed by parameter name; Adam first/second moments are
/// allocated lazily on first update.
struct OptState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

/// forward -> total_loss -> backward -> optimizer update over one batch.
/// Returns the batch loss, or nullopt (with a warning, no update) when the
/// batch carries no labels at all.
std::optional<double> train_step(Model& model,
                                 const std::vector<std::pair<Tensor, MultiTaskTarget>>& batch,
                                 OptState& state, const TrainConfig& config);

struct TrainResult {
  Model model;
  std::vector<double> loss_trace;  // one entry per executed step
};

/// Seeded end-to-end loop: init, iid batch sampling, optional augmentation
/// and MixUp, `steps` optimizer updates. Deterministic given (config, seed,
/// dataset). The MTTOKEN_SEED environment variable, when set, overrides the
/// config seed.
TrainResult train_loop(const TrainConfig& config, const std::vector<DatasetExample>& dataset,
                       std::ostream* log = nullptr);

/// Runs inference over a manifest with a trained model; output order follows
/// the manifest.
std::vector<FrameRecord> predict_dataset(const Model& model,
                                         const std::vector<DatasetExample>& dataset);

}  // namespace mtt

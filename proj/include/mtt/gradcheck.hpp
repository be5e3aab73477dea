#pragma once

#include <string>
#include <vector>

#include "mtt/loss.hpp"
#include "mtt/taskhead.hpp"
#include "mtt/trainer.hpp"

namespace mtt {

struct GradCheckResult {
  // (parameter name, max relative error) in visit_params order.
  std::vector<std::pair<std::string, double>> per_param;
  double max_err = 0.0;
};

/// Compares backward() gradients of total_loss against central finite
/// differences for every parameter tensor. Relative error per coordinate is
/// |a - n| / max(|a| + |n|, 1e-3), so near-zero gradients are compared
/// absolutely. Restores all parameters on exit.
GradCheckResult gradcheck_model(Model& model,
                                const std::vector<std::pair<Tensor, MultiTaskTarget>>& batch,
                                const LossConfig& loss_config, double eps = 1e-5);

/// The standard suite: gradcheck-preset model, a 3-example batch with mixed
/// presence masks (all tasks / va+au / expr only).
GradCheckResult run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace mtt

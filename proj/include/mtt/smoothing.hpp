#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mtt/taskhead.hpp"

namespace mtt {

/// One frame of raw model outputs in a prediction-log stream.
struct FrameRecord {
  std::string video_id;
  std::uint64_t frame_index = 0;
  std::array<double, 2> v{};
  std::array<double, kNumAu> u_au{};
  std::array<double, kNumExpr> u_expr{};
};

/// Smoothed logits plus the activated predictions.
struct SmoothedRecord {
  std::string video_id;
  std::uint64_t frame_index = 0;
  std::array<double, 2> v{};
  std::array<double, kNumAu> u_au{};
  std::array<double, kNumExpr> u_expr{};
  std::array<double, kNumAu> a_hat{};
  std::array<double, kNumExpr> e_hat{};
};

enum class WindowAlign { Centered, Trailing };

/// Windowed means of per-frame VA outputs and AU/expr logits within each
/// video, activations applied after smoothing. The window around frame t
/// covers indices [t - S/2, t + (S-1)/2] (centered; trailing uses
/// [t - S + 1, t]); missing frame indices contribute nothing and the divisor
/// is the count of present frames in the window.
std::vector<SmoothedRecord> smooth_stream(const std::vector<FrameRecord>& frames,
                                          std::size_t window, double t_au, double t_expr,
                                          WindowAlign align = WindowAlign::Centered);

// Prediction-log files: a header line, then one comma-separated record per
// frame. Raw logs carry video_id, frame_index, v, a, u_au_1..12,
// u_expr_1..8; smoothed logs append a_hat_1..12, e_hat_1..8. Floats use 9
// significant digits.
void write_predlog(const std::string& path, const std::vector<FrameRecord>& frames);
void write_predlog(const std::string& path, const std::vector<SmoothedRecord>& records);
/// Reads either log flavor; probability columns, when present, are ignored.
std::vector<FrameRecord> read_predlog(const std::string& path);

}  // namespace mtt

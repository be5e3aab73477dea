#pragma once

#include <array>
#include <string>
#include <vector>

#include "mtt/data.hpp"
#include "mtt/smoothing.hpp"

namespace mtt {

struct MetricReport {
  double au_f1 = 0.0;
  double expr_f1 = 0.0;
  double va_ccc = 0.0;  // mean of valence and arousal CCC
  double abaw4_score = 0.0;
  std::array<double, kNumAu> per_au_f1{};
  std::array<double, kNumExpr> per_expr_f1{};
  double valence_ccc = 0.0;
  double arousal_ccc = 0.0;
  std::size_t n_va = 0, n_au = 0, n_expr = 0;  // matched example counts
};

/// Concordance correlation coefficient with population (1/n) moments:
/// 2 cov(p,t) / (var(p) + var(t) + (mean(p) - mean(t))^2). Two identical
/// constant series score 1, otherwise a constant series scores 0.
double ccc(const std::vector<double>& pred, const std::vector<double>& truth);

/// Binarize at `threshold`, per-AU F1 = 2TP / (2TP + FP + FN), macro mean
/// over the 12 AUs. An AU with TP=FP=FN=0 scores 1.
std::pair<double, std::array<double, kNumAu>> au_f1(
    const std::vector<std::array<double, kNumAu>>& pred_probs,
    const std::vector<std::array<double, kNumAu>>& truth, double threshold = 0.5);

/// Argmax decision, one-vs-rest F1 per class, macro mean over the 8 classes
/// (same empty-class convention as au_f1).
std::pair<double, std::array<double, kNumExpr>> expr_f1(
    const std::vector<std::array<double, kNumExpr>>& pred_probs,
    const std::vector<std::size_t>& truth);

/// The challenge composite: plain sum of the three metrics.
double abaw4_score(double au_f1, double expr_f1, double va_ccc);

/// Matches predictions to ground truth by (video_id, frame_index) and
/// computes the full report; each task uses the examples where its label is
/// present. Activations are recomputed from the logits at the given
/// temperatures.
MetricReport evaluate(const std::vector<FrameRecord>& predictions,
                      const std::vector<DatasetExample>& truth, double t_au = 1.0,
                      double t_expr = 5.0, double threshold = 0.5);

std::string report_text(const MetricReport& report);
void write_report_json(const std::string& path, const MetricReport& report);

}  // namespace mtt

#include "mtt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mtt {

double ccc(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.size() < 2)
    throw std::invalid_argument("ccc: needs two equal-length series of length >= 2");
  const double n = static_cast<double>(pred.size());
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += truth[i];
  }
  mp /= n;
  mt /= n;
  double vp = 0.0, vt = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    vp += (pred[i] - mp) * (pred[i] - mp);
    vt += (truth[i] - mt) * (truth[i] - mt);
    cov += (pred[i] - mp) * (truth[i] - mt);
  }
  vp /= n;
  vt /= n;
  cov /= n;
  const double denom = vp + vt + (mp - mt) * (mp - mt);
  if (denom == 0.0) return 1.0;  // both series constant and equal
  return 2.0 * cov / denom;
}

namespace {

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;  // class absent and never predicted
  return 2.0 * static_cast<double>(tp) /
         static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

std::pair<double, std::array<double, kNumAu>> au_f1(
    const std::vector<std::array<double, kNumAu>>& pred_probs,
    const std::vector<std::array<double, kNumAu>>& truth, double threshold) {
  if (pred_probs.size() != truth.size())
    throw std::invalid_argument("au_f1: prediction/truth size mismatch");
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("au_f1: threshold must lie in (0,1)");
  std::array<double, kNumAu> per{};
  double macro = 0.0;
  for (std::size_t k = 0; k < kNumAu; ++k) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred_probs.size(); ++i) {
      const bool p = pred_probs[i][k] > threshold;
      const bool t = truth[i][k] > 0.5;
      if (p && t)
        ++tp;
      else if (p && !t)
        ++fp;
      else if (!p && t)
        ++fn;
    }
    per[k] = f1_from_counts(tp, fp, fn);
    macro += per[k];
  }
  return {macro / static_cast<double>(kNumAu), per};
}

std::pair<double, std::array<double, kNumExpr>> expr_f1(
    const std::vector<std::array<double, kNumExpr>>& pred_probs,
    const std::vector<std::size_t>& truth) {
  if (pred_probs.size() != truth.size())
    throw std::invalid_argument("expr_f1: prediction/truth size mismatch");
  std::vector<std::size_t> decisions(pred_probs.size());
  for (std::size_t i = 0; i < pred_probs.size(); ++i) {
    decisions[i] = static_cast<std::size_t>(
        std::max_element(pred_probs[i].begin(), pred_probs[i].end()) -
        pred_probs[i].begin());
    if (truth[i] >= kNumExpr)
      throw std::invalid_argument("expr_f1: class index " + std::to_string(truth[i]) +
                                  " out of range");
  }
  std::array<double, kNumExpr> per{};
  double macro = 0.0;
  for (std::size_t k = 0; k < kNumExpr; ++k) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
      const bool p = decisions[i] == k;
      const bool t = truth[i] == k;
      if (p && t)
        ++tp;
      else if (p && !t)
        ++fp;
      else if (!p && t)
        ++fn;
    }
    per[k] = f1_from_counts(tp, fp, fn);
    macro += per[k];
  }
  return {macro / static_cast<double>(kNumExpr), per};
}

double abaw4_score(double au_f1, double expr_f1, double va_ccc) {
  return au_f1 + expr_f1 + va_ccc;
}

MetricReport evaluate(const std::vector<FrameRecord>& predictions,
                      const std::vector<DatasetExample>& truth, double t_au, double t_expr,
                      double threshold) {
  if (t_au <= 0.0 || t_expr <= 0.0)
    throw std::invalid_argument("evaluate: temperatures must be positive");
  std::map<std::pair<std::string, std::uint64_t>, const FrameRecord*> by_key;
  for (const FrameRecord& p : predictions) by_key[{p.video_id, p.frame_index}] = &p;

  std::vector<double> val_pred, val_true, aro_pred, aro_true;
  std::vector<std::array<double, kNumAu>> au_pred, au_true;
  std::vector<std::array<double, kNumExpr>> expr_pred;
  std::vector<std::size_t> expr_true;

  for (const DatasetExample& ex : truth) {
    auto it = by_key.find({ex.video_id, ex.frame_index});
    if (it == by_key.end()) continue;
    const FrameRecord& p = *it->second;
    if (ex.target.va) {
      val_pred.push_back(p.v[0]);
      val_true.push_back((*ex.target.va)[0]);
      aro_pred.push_back(p.v[1]);
      aro_true.push_back((*ex.target.va)[1]);
    }
    if (ex.target.au) {
      std::array<double, kNumAu> probs;
      for (std::size_t k = 0; k < kNumAu; ++k) {
        const double z = p.u_au[k] / t_au;
        probs[k] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      }
      au_pred.push_back(probs);
      au_true.push_back(*ex.target.au);
    }
    if (ex.target.expr) {
      std::array<double, kNumExpr> probs;
      double mx = p.u_expr[0] / t_expr;
      for (std::size_t k = 1; k < kNumExpr; ++k) mx = std::max(mx, p.u_expr[k] / t_expr);
      double z = 0.0;
      for (std::size_t k = 0; k < kNumExpr; ++k) {
        probs[k] = std::exp(p.u_expr[k] / t_expr - mx);
        z += probs[k];
      }
      for (std::size_t k = 0; k < kNumExpr; ++k) probs[k] /= z;
      expr_pred.push_back(probs);
      std::size_t cls = 0;
      for (std::size_t k = 0; k < kNumExpr; ++k)
        if ((*ex.target.expr)[k] > (*ex.target.expr)[cls]) cls = k;
      expr_true.push_back(cls);
    }
  }

  MetricReport r;
  r.n_va = val_pred.size();
  r.n_au = au_pred.size();
  r.n_expr = expr_pred.size();
  if (r.n_va >= 2) {
    r.valence_ccc = ccc(val_pred, val_true);
    r.arousal_ccc = ccc(aro_pred, aro_true);
    r.va_ccc = (r.valence_ccc + r.arousal_ccc) / 2.0;
  }
  if (r.n_au > 0) {
    auto [macro, per] = au_f1(au_pred, au_true, threshold);
    r.au_f1 = macro;
    r.per_au_f1 = per;
  }
  if (r.n_expr > 0) {
    auto [macro, per] = expr_f1(expr_pred, expr_true);
    r.expr_f1 = macro;
    r.per_expr_f1 = per;
  }
  r.abaw4_score = abaw4_score(r.au_f1, r.expr_f1, r.va_ccc);
  return r;
}

std::string report_text(const MetricReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "au_f1: " << r.au_f1 << '\n';
  os << "expr_f1: " << r.expr_f1 << '\n';
  os << "va_ccc: " << r.va_ccc << '\n';
  os << "abaw4_score: " << r.abaw4_score << '\n';
  os << "valence_ccc: " << r.valence_ccc << '\n';
  os << "arousal_ccc: " << r.arousal_ccc << '\n';
  for (std::size_t k = 0; k < kNumAu; ++k)
    os << "au_f1_" << (k + 1) << ": " << r.per_au_f1[k] << '\n';
  for (std::size_t k = 0; k < kNumExpr; ++k)
    os << "expr_f1_" << k << ": " << r.per_expr_f1[k] << '\n';
  os << "n_va: " << r.n_va << '\n';
  os << "n_au: " << r.n_au << '\n';
  os << "n_expr: " << r.n_expr << '\n';
  return os.str();
}

void write_report_json(const std::string& path, const MetricReport& r) {
  nlohmann::json j;
  j["au_f1"] = r.au_f1;
  j["expr_f1"] = r.expr_f1;
  j["va_ccc"] = r.va_ccc;
  j["abaw4_score"] = r.abaw4_score;
  j["valence_ccc"] = r.valence_ccc;
  j["arousal_ccc"] = r.arousal_ccc;
  j["per_au_f1"] = r.per_au_f1;
  j["per_expr_f1"] = r.per_expr_f1;
  j["n_va"] = r.n_va;
  j["n_au"] = r.n_au;
  j["n_expr"] = r.n_expr;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write report: " + path);
  f << j.dump(2) << '\n';
}

}  // namespace mtt

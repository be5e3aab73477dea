#include "mtt/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mtt {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) fields.push_back(item);
  return fields;
}

}  // namespace

std::vector<SmoothedRecord> smooth_stream(const std::vector<FrameRecord>& frames,
                                          std::size_t window, double t_au, double t_expr,
                                          WindowAlign align) {
  if (window < 1) throw std::invalid_argument("smooth_stream: window must be >= 1");
  if (t_au <= 0.0 || t_expr <= 0.0)
    throw std::invalid_argument("smooth_stream: temperatures must be positive");

  // Group by video, keeping first-appearance order of videos.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const FrameRecord*>> videos;
  for (const FrameRecord& f : frames) {
    auto [it, inserted] = videos.try_emplace(f.video_id);
    if (inserted) order.push_back(f.video_id);
    it->second.push_back(&f);
  }

  const std::int64_t s = static_cast<std::int64_t>(window);
  std::vector<SmoothedRecord> out;
  out.reserve(frames.size());
  for (const std::string& vid : order) {
    auto& vf = videos[vid];
    std::sort(vf.begin(), vf.end(), [](const FrameRecord* a, const FrameRecord* b) {
      return a->frame_index < b->frame_index;
    });
    for (std::size_t i = 1; i < vf.size(); ++i)
      if (vf[i]->frame_index == vf[i - 1]->frame_index)
        throw std::invalid_argument("smooth_stream: duplicate frame " +
                                    std::to_string(vf[i]->frame_index) + " in video " + vid);

    // Two-pointer window over the sorted present frames; sums are recomputed
    // per window so output order of additions matches a brute-force loop.
    std::size_t lo = 0, hi = 0;
    for (const FrameRecord* f : vf) {
      const std::int64_t t = static_cast<std::int64_t>(f->frame_index);
      std::int64_t wlo, whi;  // inclusive index bounds
      if (align == WindowAlign::Centered) {
        wlo = t - s / 2;
        whi = t + (s - 1) / 2;
      } else {
        wlo = t - s + 1;
        whi = t;
      }
      while (lo < vf.size() && static_cast<std::int64_t>(vf[lo]->frame_index) < wlo) ++lo;
      if (hi < lo) hi = lo;
      while (hi < vf.size() && static_cast<std::int64_t>(vf[hi]->frame_index) <= whi) ++hi;

      SmoothedRecord r;
      r.video_id = f->video_id;
      r.frame_index = f->frame_index;
      const double count = static_cast<double>(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        r.v[0] += vf[k]->v[0];
        r.v[1] += vf[k]->v[1];
        for (std::size_t j = 0; j < kNumAu; ++j) r.u_au[j] += vf[k]->u_au[j];
        for (std::size_t j = 0; j < kNumExpr; ++j) r.u_expr[j] += vf[k]->u_expr[j];
      }
      r.v[0] /= count;
      r.v[1] /= count;
      for (std::size_t j = 0; j < kNumAu; ++j) r.u_au[j] /= count;
      for (std::size_t j = 0; j < kNumExpr; ++j) r.u_expr[j] /= count;

      for (std::size_t j = 0; j < kNumAu; ++j) r.a_hat[j] = stable_sigmoid(r.u_au[j] / t_au);
      double mx = r.u_expr[0] / t_expr;
      for (std::size_t j = 1; j < kNumExpr; ++j) mx = std::max(mx, r.u_expr[j] / t_expr);
      double z = 0.0;
      for (std::size_t j = 0; j < kNumExpr; ++j) {
        r.e_hat[j] = std::exp(r.u_expr[j] / t_expr - mx);
        z += r.e_hat[j];
      }
      for (std::size_t j = 0; j < kNumExpr; ++j) r.e_hat[j] /= z;
      out.push_back(std::move(r));
    }
  }
  return out;
}

static const char* kRawHeader =
    "video_id,frame_index,v,a,"
    "u_au_1,u_au_2,u_au_3,u_au_4,u_au_5,u_au_6,u_au_7,u_au_8,u_au_9,u_au_10,u_au_11,u_au_12,"
    "u_expr_1,u_expr_2,u_expr_3,u_expr_4,u_expr_5,u_expr_6,u_expr_7,u_expr_8";
static const char* kProbHeaderSuffix =
    ",a_hat_1,a_hat_2,a_hat_3,a_hat_4,a_hat_5,a_hat_6,a_hat_7,a_hat_8,a_hat_9,a_hat_10,"
    "a_hat_11,a_hat_12,e_hat_1,e_hat_2,e_hat_3,e_hat_4,e_hat_5,e_hat_6,e_hat_7,e_hat_8";

void write_predlog(const std::string& path, const std::vector<FrameRecord>& frames) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write prediction log: " + path);
  f << kRawHeader << '\n';
  for (const FrameRecord& r : frames) {
    f << r.video_id << ',' << r.frame_index << ',' << fmt9(r.v[0]) << ',' << fmt9(r.v[1]);
    for (double u : r.u_au) f << ',' << fmt9(u);
    for (double u : r.u_expr) f << ',' << fmt9(u);
    f << '\n';
  }
}

void write_predlog(const std::string& path, const std::vector<SmoothedRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write prediction log: " + path);
  f << kRawHeader << kProbHeaderSuffix << '\n';
  for (const SmoothedRecord& r : records) {
    f << r.video_id << ',' << r.frame_index << ',' << fmt9(r.v[0]) << ',' << fmt9(r.v[1]);
    for (double u : r.u_au) f << ',' << fmt9(u);
    for (double u : r.u_expr) f << ',' << fmt9(u);
    for (double p : r.a_hat) f << ',' << fmt9(p);
    for (double p : r.e_hat) f << ',' << fmt9(p);
    f << '\n';
  }
}

std::vector<FrameRecord> read_predlog(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open prediction log: " + path);
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("prediction log " + path + " is empty");
  const std::size_t raw_fields = 4 + kNumAu + kNumExpr;
  const std::size_t header_fields = split_csv(line).size();
  if (header_fields != raw_fields && header_fields != raw_fields + kNumAu + kNumExpr)
    throw std::runtime_error("prediction log " + path + ": unexpected header with " +
                             std::to_string(header_fields) + " columns");
  std::vector<FrameRecord> frames;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() < raw_fields)
      throw std::runtime_error("prediction log " + path + " line " + std::to_string(lineno) +
                               ": expected at least " + std::to_string(raw_fields) +
                               " fields, got " + std::to_string(fields.size()));
    FrameRecord r;
    r.video_id = fields[0];
    r.frame_index = std::stoull(fields[1]);
    r.v[0] = std::stod(fields[2]);
    r.v[1] = std::stod(fields[3]);
    for (std::size_t j = 0; j < kNumAu; ++j) r.u_au[j] = std::stod(fields[4 + j]);
    for (std::size_t j = 0; j < kNumExpr; ++j) r.u_expr[j] = std::stod(fields[4 + kNumAu + j]);
    frames.push_back(std::move(r));
  }
  return frames;
}

}  // namespace mtt

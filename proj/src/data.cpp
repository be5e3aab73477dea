#include "mtt/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace mtt {

namespace {

constexpr std::uint64_t kMaskSalt = 0x6d61736b5f73616cULL;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::string video_name(std::size_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%03zu", v);
  return buf;
}

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_videos == 0) throw std::invalid_argument("synthetic spec: n_videos must be >= 1");
  if (frames_per_video == 0)
    throw std::invalid_argument("synthetic spec: frames_per_video must be >= 1");
  if (image_h < 4 || image_w < 4 || image_c == 0)
    throw std::invalid_argument("synthetic spec: image must be at least 4x4x1");
  for (double r : {missing_va, missing_au, missing_expr, frame_drop})
    if (r < 0.0 || r > 1.0)
      throw std::invalid_argument("synthetic spec: rates must lie in [0,1]");
}

SyntheticLatents latents_from_seed(std::uint64_t sub_seed) {
  Rng rng(sub_seed);
  SyntheticLatents l;
  l.va[0] = rng.uniform(-1.0, 1.0);
  l.va[1] = rng.uniform(-1.0, 1.0);
  for (double& bit : l.au) bit = rng.bernoulli(0.5) ? 1.0 : 0.0;
  l.expr_class = rng.index(kNumExpr);
  return l;
}

Tensor render_synthetic_image(std::uint64_t sub_seed, std::size_t h, std::size_t w,
                              std::size_t c) {
  if (h < 4 || w < 4 || c == 0)
    throw std::invalid_argument("render_synthetic_image: image must be at least 4x4x1");
  Rng rng(sub_seed);
  SyntheticLatents l;
  l.va[0] = rng.uniform(-1.0, 1.0);
  l.va[1] = rng.uniform(-1.0, 1.0);
  for (double& bit : l.au) bit = rng.bernoulli(0.5) ? 1.0 : 0.0;
  l.expr_class = rng.index(kNumExpr);

  const std::size_t h2 = h / 2, w2 = w / 2;
  std::vector<double> img(h * w * c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double value;
      if (y < h2) {
        // Top quadrants: brightness encodes valence (left) / arousal (right).
        value = (x < w2 ? l.va[0] : l.va[1]) * 0.5 + 0.5;
      } else if (x < w2) {
        // Bottom-left: 3x4 grid of AU on/off cells.
        const std::size_t row = (y - h2) * 3 / (h - h2);
        const std::size_t col = x * 4 / w2;
        value = l.au[row * 4 + col] > 0.5 ? 0.85 : 0.15;
      } else {
        // Bottom-right: 2x4 grid, the expression class cell is bright.
        const std::size_t row = (y - h2) * 2 / (h - h2);
        const std::size_t col = (x - w2) * 4 / (w - w2);
        value = (row * 4 + col == l.expr_class) ? 0.95 : 0.05;
      }
      for (std::size_t ch = 0; ch < c; ++ch)
        img[(y * w + x) * c + ch] = clamp01(value + rng.uniform(-0.02, 0.02));
    }
  return Tensor({h, w, c}, std::move(img));
}

std::vector<DatasetExample> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<DatasetExample> dataset;
  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    const std::string vid = video_name(v);
    for (std::size_t f = 0; f < spec.frames_per_video; ++f) {
      const std::uint64_t sub = sub_seed(spec.seed, vid, f);
      Rng mask_rng(splitmix64(sub ^ kMaskSalt));
      const bool dropped = mask_rng.bernoulli(spec.frame_drop);
      const bool has_va = !mask_rng.bernoulli(spec.missing_va);
      const bool has_au = !mask_rng.bernoulli(spec.missing_au);
      const bool has_expr = !mask_rng.bernoulli(spec.missing_expr);
      if (dropped) continue;
      const SyntheticLatents l = latents_from_seed(sub);
      DatasetExample ex;
      ex.video_id = vid;
      ex.frame_index = f;
      ex.image = ImageRef{ImageRef::Kind::Synthetic, "", sub};
      if (has_va) ex.target.va = l.va;
      if (has_au) ex.target.au = l.au;
      if (has_expr) ex.target.expr = MultiTaskTarget::one_hot(l.expr_class);
      dataset.push_back(std::move(ex));
    }
  }
  return dataset;
}

Tensor load_image(const ImageRef& ref, std::size_t h, std::size_t w, std::size_t c) {
  if (ref.kind == ImageRef::Kind::Synthetic) return render_synthetic_image(ref.seed, h, w, c);
  Tensor img = load_image_raw(ref.path);
  if (img.shape() != Shape{h, w, c})
    throw std::runtime_error("image " + ref.path + " has shape " + shape_str(img.shape()) +
                             ", expected " + shape_str({h, w, c}));
  return img;
}

void save_image_raw(const std::string& path, const Tensor& image) {
  if (image.rank() != 3)
    throw std::invalid_argument("save_image_raw: expected HxWxC, got " +
                                shape_str(image.shape()));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write image: " + path);
  f.write("MTIMG1", 6);
  put_u32(f, static_cast<std::uint32_t>(image.shape()[0]));
  put_u32(f, static_cast<std::uint32_t>(image.shape()[1]));
  put_u32(f, static_cast<std::uint32_t>(image.shape()[2]));
  for (double v : image.data()) {
    float x = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    put_u32(f, bits);
  }
}

Tensor load_image_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image: " + path);
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, "MTIMG1", 6) != 0)
    throw std::runtime_error("not an MTIMG1 file: " + path);
  const std::size_t h = get_u32(f), w = get_u32(f), c = get_u32(f);
  std::vector<double> data(h * w * c);
  for (double& v : data) {
    std::uint32_t bits = get_u32(f);
    float x;
    std::memcpy(&x, &bits, 4);
    v = x;
  }
  if (!f) throw std::runtime_error("truncated image file: " + path);
  return Tensor({h, w, c}, std::move(data));
}

Tensor affine_apply(const Tensor& image, double rotate_deg, double shift_y, double shift_x,
                    double zoom) {
  if (image.rank() != 3)
    throw std::invalid_argument("affine_apply: expected HxWxC, got " +
                                shape_str(image.shape()));
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double theta = rotate_deg * 3.14159265358979323846 / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  std::vector<double> out(h * w * c, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // Invert dst = R(theta) * (zoom * src) + shift about the center.
      const double dy = static_cast<double>(y) - cy - shift_y;
      const double dx = static_cast<double>(x) - cx - shift_x;
      const double sy = (cos_t * dy - sin_t * dx) / zoom + cy;
      const double sx = (sin_t * dy + cos_t * dx) / zoom + cx;
      const double fy = std::floor(sy), fx = std::floor(sx);
      const double wy = sy - fy, wx = sx - fx;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int ny = 0; ny < 2; ++ny)
          for (int nx = 0; nx < 2; ++nx) {
            const double py = fy + ny, px = fx + nx;
            if (py < 0.0 || py >= static_cast<double>(h) || px < 0.0 ||
                px >= static_cast<double>(w))
              continue;  // zero fill outside
            const double weight = (ny ? wy : 1.0 - wy) * (nx ? wx : 1.0 - wx);
            if (weight == 0.0) continue;
            acc += weight * image.at(static_cast<std::size_t>(py),
                                     static_cast<std::size_t>(px), ch);
          }
        out[(y * w + x) * c + ch] = acc;
      }
    }
  return Tensor(image.shape(), std::move(out));
}

Tensor affine_augment(const Tensor& image, Rng& rng) {
  const double rot = rng.uniform(-15.0, 15.0);
  const double ty = rng.uniform(-0.1, 0.1) * static_cast<double>(image.shape()[0]);
  const double tx = rng.uniform(-0.1, 0.1) * static_cast<double>(image.shape()[1]);
  const double zoom = rng.uniform(0.9, 1.1);
  return affine_apply(image, rot, ty, tx, zoom);
}

std::vector<std::pair<Tensor, MultiTaskTarget>> mixup_batch(
    const std::vector<std::pair<Tensor, MultiTaskTarget>>& batch, double alpha, Rng& rng) {
  if (alpha <= 0.0) throw std::invalid_argument("mixup: alpha must be positive");
  if (batch.size() < 2) throw std::invalid_argument("mixup: batch size must be >= 2");
  const std::vector<std::size_t> partner = rng.permutation(batch.size());
  std::vector<std::pair<Tensor, MultiTaskTarget>> mixed;
  mixed.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double lam = rng.beta(alpha, alpha);
    const auto& [x1, t1] = batch[i];
    const auto& [x2, t2] = batch[partner[i]];
    if (x1.shape() != x2.shape())
      throw std::invalid_argument("mixup: images have different shapes");
    std::vector<double> img(x1.size());
    for (std::size_t k = 0; k < img.size(); ++k)
      img[k] = lam * x1[k] + (1.0 - lam) * x2[k];
    MultiTaskTarget t;
    if (t1.va && t2.va)
      t.va = {{lam * (*t1.va)[0] + (1.0 - lam) * (*t2.va)[0],
               lam * (*t1.va)[1] + (1.0 - lam) * (*t2.va)[1]}};
    else if (t1.va || t2.va)
      t.va = t1.va ? t1.va : t2.va;  // single label kept unmixed
    if (t1.au && t2.au) {
      std::array<double, kNumAu> au;
      for (std::size_t k = 0; k < kNumAu; ++k)
        au[k] = lam * (*t1.au)[k] + (1.0 - lam) * (*t2.au)[k];
      t.au = au;
    } else if (t1.au || t2.au) {
      t.au = t1.au ? t1.au : t2.au;
    }
    if (t1.expr && t2.expr) {
      std::array<double, kNumExpr> q;
      for (std::size_t k = 0; k < kNumExpr; ++k)
        q[k] = lam * (*t1.expr)[k] + (1.0 - lam) * (*t2.expr)[k];
      t.expr = q;
    } else if (t1.expr || t2.expr) {
      t.expr = t1.expr ? t1.expr : t2.expr;
    }
    mixed.emplace_back(Tensor(x1.shape(), std::move(img)), std::move(t));
  }
  return mixed;
}

void write_manifest(const std::string& path, const std::vector<DatasetExample>& dataset) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  for (const DatasetExample& ex : dataset) {
    nlohmann::json j;
    j["video_id"] = ex.video_id;
    j["frame_index"] = ex.frame_index;
    j["image"] = ex.image.kind == ImageRef::Kind::Synthetic
                     ? "synthetic:" + std::to_string(ex.image.seed)
                     : ex.image.path;
    if (ex.target.va)
      j["va"] = {(*ex.target.va)[0], (*ex.target.va)[1]};
    else
      j["va"] = nullptr;
    if (ex.target.au) {
      std::vector<int> au;
      for (double b : *ex.target.au) {
        if (b != 0.0 && b != 1.0)
          throw std::invalid_argument("manifest au labels must be 0/1");
        au.push_back(b == 1.0 ? 1 : 0);
      }
      j["au"] = au;
    } else {
      j["au"] = nullptr;
    }
    if (ex.target.expr) {
      int cls = -1;
      for (std::size_t k = 0; k < kNumExpr; ++k) {
        const double q = (*ex.target.expr)[k];
        if (q == 1.0 && cls < 0)
          cls = static_cast<int>(k);
        else if (q != 0.0)
          throw std::invalid_argument("manifest expr labels must be one-hot");
      }
      j["expr"] = cls;
    } else {
      j["expr"] = nullptr;
    }
    f << j.dump() << '\n';
  }
}

std::vector<DatasetExample> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<DatasetExample> dataset;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("manifest " + path + " line " + std::to_string(lineno) +
                               ": " + e.what());
    }
    DatasetExample ex;
    ex.video_id = j.at("video_id").get<std::string>();
    ex.frame_index = j.at("frame_index").get<std::uint64_t>();
    const std::string image = j.at("image").get<std::string>();
    if (image.rfind("synthetic:", 0) == 0)
      ex.image = ImageRef{ImageRef::Kind::Synthetic, "", std::stoull(image.substr(10))};
    else
      ex.image = ImageRef{ImageRef::Kind::Path, image, 0};
    if (!j.at("va").is_null()) {
      auto va = j.at("va").get<std::vector<double>>();
      if (va.size() != 2)
        throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                 ": va needs 2 values");
      ex.target.va = {{va[0], va[1]}};
    }
    if (!j.at("au").is_null()) {
      auto au = j.at("au").get<std::vector<double>>();
      if (au.size() != kNumAu)
        throw std::runtime_error("manifest line " + std::to_string(lineno) + ": au needs " +
                                 std::to_string(kNumAu) + " values");
      std::array<double, kNumAu> a;
      std::copy(au.begin(), au.end(), a.begin());
      ex.target.au = a;
    }
    if (!j.at("expr").is_null())
      ex.target.expr = MultiTaskTarget::one_hot(j.at("expr").get<std::size_t>());
    dataset.push_back(std::move(ex));
  }
  return dataset;
}

}  // namespace mtt

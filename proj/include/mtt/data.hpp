#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtt/loss.hpp"
#include "mtt/rng.hpp"
#include "mtt/tensor.hpp"

namespace mtt {

/// Synthetic dataset layout. Labels are missing independently per task at
/// the given rates; whole frames drop at frame_drop, leaving index gaps.
struct SyntheticSpec {
  std::size_t n_videos = 4;
  std::size_t frames_per_video = 16;
  std::size_t image_h = 32, image_w = 32, image_c = 3;
  double missing_va = 0.0, missing_au = 0.0, missing_expr = 0.0;
  double frame_drop = 0.0;
  std::uint64_t seed = 42;
  void validate() const;
};

/// Where an example's pixels come from: a file on disk or a deterministic
/// synthetic render keyed by sub-seed.
struct ImageRef {
  enum class Kind { Path, Synthetic };
  Kind kind = Kind::Synthetic;
  std::string path;
  std::uint64_t seed = 0;
};

struct DatasetExample {
  std::string video_id;
  std::uint64_t frame_index = 0;
  ImageRef image;
  MultiTaskTarget target;
};

/// Ground-truth factors a synthetic image renders; the labels are these
/// factors verbatim, so a model can overfit them from pixels alone.
struct SyntheticLatents {
  std::array<double, 2> va;            // uniform in [-1,1]^2
  std::array<double, kNumAu> au;       // 12 independent fair bits
  std::size_t expr_class;              // uniform in 0..7
};

SyntheticLatents latents_from_seed(std::uint64_t sub_seed);

/// Renders the latents of `sub_seed` into an h x w x c image in [0,1]:
/// top-left/top-right quadrant brightness encode valence/arousal, a 3x4
/// block grid bottom-left encodes the AUs, and the brightest cell of a 2x4
/// grid bottom-right is the expression class. Resolution-independent.
Tensor render_synthetic_image(std::uint64_t sub_seed, std::size_t h, std::size_t w,
                              std::size_t c);

std::vector<DatasetExample> generate_synthetic(const SyntheticSpec& spec);

/// Materializes an example's pixels at the given size.
Tensor load_image(const ImageRef& ref, std::size_t h, std::size_t w, std::size_t c);

// Minimal raw image container for tests ("MTIMG1": u32 h, w, c, f32 pixels).
void save_image_raw(const std::string& path, const Tensor& image);
Tensor load_image_raw(const std::string& path);

/// One random affine map (rotation within +-15 deg, translation within
/// +-10% of each side, zoom in [0.9, 1.1]) with bilinear sampling and zero
/// fill; labels are unaffected.
Tensor affine_augment(const Tensor& image, Rng& rng);

/// Deterministic core of affine_augment, mapping about the image center.
Tensor affine_apply(const Tensor& image, double rotate_deg, double shift_y, double shift_x,
                    double zoom);

/// Multi-task MixUp: pairs each example with a permutation partner and mixes
/// images and present-in-both targets with lambda ~ Beta(alpha, alpha); a
/// task present in exactly one of the pair is kept unmixed; absent in both
/// stays absent.
std::vector<std::pair<Tensor, MultiTaskTarget>> mixup_batch(
    const std::vector<std::pair<Tensor, MultiTaskTarget>>& batch, double alpha, Rng& rng);

// Manifest interchange: one JSON record per line (video_id, frame_index,
// image, va, au, expr; absent labels are null).
void write_manifest(const std::string& path, const std::vector<DatasetExample>& dataset);
std::vector<DatasetExample> read_manifest(const std::string& path);

}  // namespace mtt

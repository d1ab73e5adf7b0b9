// Invariance-style observation augmentations: image ops on RGB arrays and
// Gaussian noise on proprioception. None of them touches actions.
#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "trajaug/dataset.hpp"
#include "trajaug/image.hpp"
#include "trajaug/rng.hpp"

namespace trajaug {

using Range = std::pair<double, double>;

struct VisualAugConfig {
  Range crop_scale{1.0, 1.0};  // fraction of image area kept, within (0,1]
  int out_height = 0;          // 0 keeps the input size
  int out_width = 0;
  Range brightness{1.0, 1.0};  // multiplicative factors
  Range contrast{1.0, 1.0};
  Range saturation{1.0, 1.0};
  Range hue{0.0, 0.0};         // radians of hue rotation
  Range blur_sigma{0.0, 0.0};  // pixels
  double noise_sigma = 0.01;   // m (and rad) for proprioception
  std::uint64_t seed = 0;
  bool color_sensitive = false;
  bool force = false;

  void validate() const;  // throws ConfigError
};

ImageArray random_resized_crop(const ImageArray& img, const VisualAugConfig& cfg, Rng& rng);

/// Throws ConfigError on color-sensitive tasks unless `cfg.force`.
ImageArray color_jitter(const ImageArray& img, const VisualAugConfig& cfg, Rng& rng);

/// Output channel i takes input channel perm[i].
ImageArray channel_permute(const ImageArray& img, const std::array<int, 3>& perm);
std::array<int, 3> inverse_permutation(const std::array<int, 3>& perm);

/// Normalized 1-D kernel of radius ceil(3 sigma); {1} for sigma == 0.
std::vector<double> gaussian_kernel(double sigma);
ImageArray gaussian_blur(const ImageArray& img, double sigma);
/// Blur with sigma drawn from cfg.blur_sigma.
ImageArray random_blur(const ImageArray& img, const VisualAugConfig& cfg, Rng& rng);

/// i.i.d. N(0, sigma²) on every robot's eef position and a tangent-space
/// rotation perturbation of the same scale on its orientation. Object poses
/// and actions are left alone.
Trajectory proprio_noise(const Trajectory& traj, double sigma, Rng& rng);

}  // namespace trajaug

#include "trajaug/obs_augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "trajaug/error.hpp"

namespace trajaug {

namespace {

void check_range(const Range& r, const char* name, double lo, double hi) {
  if (!(r.first <= r.second) || r.first < lo || r.second > hi)
    throw Error(ErrorCode::ConfigError, std::string(name) + " range must be ordered and within bounds");
}

void require_valid(const ImageArray& img) {
  if (!img.valid()) throw Error(ErrorCode::DimensionMismatch, "image buffer does not match its dimensions");
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

/// Reflect-101 indexing: -1 -> 1, n -> n-2.
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) h = std::fmod((g - b) / d, 6.0);
    else if (mx == g) h = (b - r) / d + 2.0;
    else h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  return {h, mx > 0.0 ? d / mx : 0.0, mx};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

}  // namespace

void VisualAugConfig::validate() const {
  if (!(crop_scale.first > 0.0)) throw Error(ErrorCode::ConfigError, "crop scale must be > 0");
  check_range(crop_scale, "crop_scale", 0.0, 1.0);
  check_range(brightness, "brightness", 0.0, INFINITY);
  check_range(contrast, "contrast", 0.0, INFINITY);
  check_range(saturation, "saturation", 0.0, INFINITY);
  check_range(hue, "hue", -INFINITY, INFINITY);
  check_range(blur_sigma, "blur_sigma", 0.0, INFINITY);
  if (out_height < 0 || out_width < 0) throw Error(ErrorCode::ConfigError, "output dims must be positive");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::ConfigError, "noise_sigma must be >= 0");
}

ImageArray random_resized_crop(const ImageArray& img, const VisualAugConfig& cfg, Rng& rng) {
  require_valid(img);
  cfg.validate();
  const int H = cfg.out_height ? cfg.out_height : img.height;
  const int W = cfg.out_width ? cfg.out_width : img.width;
  const double scale = rng.uniform(cfg.crop_scale.first, cfg.crop_scale.second);
  const int ch = std::max(1, static_cast<int>(std::lround(img.height * std::sqrt(scale))));
  const int cw = std::max(1, static_cast<int>(std::lround(img.width * std::sqrt(scale))));
  if (ch > img.height || cw > img.width)
    throw Error(ErrorCode::ConfigError, "crop window larger than the image");
  const int y0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(img.height - ch + 1)));
  const int x0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(img.width - cw + 1)));
  if (ch == H && cw == W && y0 == 0 && x0 == 0) return img;

  ImageArray out(H, W);
  for (int i = 0; i < H; ++i) {
    const double sy = std::clamp((i + 0.5) * ch / H - 0.5, 0.0, ch - 1.0) + y0;
    const int ya = static_cast<int>(std::floor(sy));
    const int yb = std::min(ya + 1, y0 + ch - 1);
    const double fy = sy - ya;
    for (int j = 0; j < W; ++j) {
      const double sx = std::clamp((j + 0.5) * cw / W - 0.5, 0.0, cw - 1.0) + x0;
      const int xa = static_cast<int>(std::floor(sx));
      const int xb = std::min(xa + 1, x0 + cw - 1);
      const double fx = sx - xa;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(ya, xa, c) * (1 - fx) + img.at(ya, xb, c) * fx;
        const double bot = img.at(yb, xa, c) * (1 - fx) + img.at(yb, xb, c) * fx;
        out.at(i, j, c) = to_byte(top * (1 - fy) + bot * fy);
      }
    }
  }
  return out;
}

ImageArray color_jitter(const ImageArray& img, const VisualAugConfig& cfg, Rng& rng) {
  require_valid(img);
  cfg.validate();
  if (cfg.color_sensitive && !cfg.force)
    throw Error(ErrorCode::ConfigError, "color jitter refused: task colors are task-relevant (use --force)");
  const double b = rng.uniform(cfg.brightness.first, cfg.brightness.second);
  const double k = rng.uniform(cfg.contrast.first, cfg.contrast.second);
  const double s = rng.uniform(cfg.saturation.first, cfg.saturation.second);
  const double h = rng.uniform(cfg.hue.first, cfg.hue.second);

  const std::size_t n = static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width);
  std::vector<double> px(img.pixels.begin(), img.pixels.end());
  auto clamp255 = [](double v) { return std::clamp(v, 0.0, 255.0); };

  if (b != 1.0)
    for (double& v : px) v = clamp255(v * b);
  if (k != 1.0) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    mean /= static_cast<double>(n);
    for (double& v : px) v = clamp255((v - mean) * k + mean);
  }
  if (s != 1.0)
    for (std::size_t i = 0; i < n; ++i) {
      const double g = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
      for (int c = 0; c < 3; ++c) px[3 * i + c] = clamp255((px[3 * i + c] - g) * s + g);
    }
  if (h != 0.0) {
    const double turn = h / (2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
      auto hsv = rgb_to_hsv(px[3 * i] / 255.0, px[3 * i + 1] / 255.0, px[3 * i + 2] / 255.0);
      hsv[0] = hsv[0] + turn - std::floor(hsv[0] + turn);
      const auto rgb = hsv_to_rgb(hsv[0], hsv[1], hsv[2]);
      for (int c = 0; c < 3; ++c) px[3 * i + c] = clamp255(rgb[static_cast<std::size_t>(c)] * 255.0);
    }
  }
  ImageArray out(img.height, img.width);
  for (std::size_t i = 0; i < px.size(); ++i) out.pixels[i] = to_byte(px[i]);
  return out;
}

ImageArray channel_permute(const ImageArray& img, const std::array<int, 3>& perm) {
  require_valid(img);
  std::array<int, 3> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::array<int, 3>{0, 1, 2})
    throw Error(ErrorCode::InvalidPermutation, "channel permutation must reorder (0,1,2)");
  ImageArray out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, perm[static_cast<std::size_t>(c)]);
  return out;
}

std::array<int, 3> inverse_permutation(const std::array<int, 3>& perm) {
  std::array<int, 3> inv{};
  for (int i = 0; i < 3; ++i) {
    const int p = perm[static_cast<std::size_t>(i)];
    if (p < 0 || p > 2) throw Error(ErrorCode::InvalidPermutation, "channel index out of range");
    inv[static_cast<std::size_t>(p)] = i;
  }
  return inv;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::ConfigError, "blur sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& w : k) w /= sum;
  return k;
}

ImageArray gaussian_blur(const ImageArray& img, double sigma) {
  require_valid(img);
  const auto k = gaussian_kernel(sigma);
  if (k.size() == 1) return img;
  const int r = static_cast<int>(k.size() / 2);
  const int H = img.height, W = img.width;
  std::vector<double> tmp(img.pixels.size(), 0.0);
  auto at = [W](int y, int x, int c) {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(W) + static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int d = -r; d <= r; ++d) acc += k[static_cast<std::size_t>(d + r)] * img.at(y, reflect(x + d, W), c);
        tmp[at(y, x, c)] = acc;
      }
  ImageArray out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int d = -r; d <= r; ++d) acc += k[static_cast<std::size_t>(d + r)] * tmp[at(reflect(y + d, H), x, c)];
        out.at(y, x, c) = to_byte(acc);
      }
  return out;
}

ImageArray random_blur(const ImageArray& img, const VisualAugConfig& cfg, Rng& rng) {
  cfg.validate();
  return gaussian_blur(img, rng.uniform(cfg.blur_sigma.first, cfg.blur_sigma.second));
}

Trajectory proprio_noise(const Trajectory& traj, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::ConfigError, "noise sigma must be >= 0");
  if (sigma == 0.0) return traj;
  Trajectory out = traj;
  for (auto& ts : out.timesteps)
    for (auto& r : ts.robots) {
      const Vector3 dp(rng.normal(), rng.normal(), rng.normal());
      const Vector3 w(rng.normal(), rng.normal(), rng.normal());
      r.eef_pose.position += sigma * dp;
      const Vector3 omega = sigma * w;
      const double angle = omega.norm();
      if (angle > 0.0) {
        const Quaternion dq(Eigen::AngleAxisd(angle, omega / angle));
        r.eef_pose.orientation = unit_canonical(Quaternion(dq * r.eef_pose.orientation));
      }
    }
  return out;
}

}  // namespace trajaug

#pragma once

#include <selfloop/types.hpp>

#include <array>
#include <string>
#include <vector>

namespace selfloop::rewards {

/// A 3xHxW image, channel-major, row-major within a channel. Values follow
/// the generated convention [-1, 1] unless normalized01 is set, in which case
/// they are already in [0, 1].
struct ImageTensor {
  int height{};
  int width{};
  bool normalized01{false};
  std::vector<float> data;

  float at(int c, int i, int j) const { return data[(c * height + i) * width + j]; }
  float& at(int c, int i, int j) { return data[(c * height + i) * width + j]; }
};

ImageTensor make_image(int height, int width, bool normalized01 = false);

struct Hsv {
  double h{};  // hue in [0, 1)
  double s{};  // saturation in [0, 1]
  double v{};  // value in [0, 1]
};

/// Cylindrical reparameterization of an RGB pixel in [0,1]^3:
///   V = max, S = (V - min) / (V + 1e-8) for V > 0 else 0, and H from the
/// four-case rule with the mod-6 branch for V = R. Throws ValidationError on
/// out-of-range components.
Hsv rgb_to_hsv(double r, double g, double b);

struct HueInterval {
  double lo{};
  double hi{};
  bool closed_hi{true};
};

struct HueBand {
  std::vector<HueInterval> intervals;
  bool contains(double hue) const;
};

/// Red-orange-yellow: [0.92, 1) u [0, 0.17].
HueBand warm_band();
/// Cyan-blue: [0.5, 0.72].
HueBand cool_band();

/// Mean over pixels of 1_band(H) * S^1.5, after mapping the image to [0, 1]
/// via (clip(x, -1, 1) + 1) / 2 when it is in the generated convention.
/// Always in [0, 1].
double band_score(const ImageTensor& image, const HueBand& band);

/// R(x) = -( |mu(x) - mu0|_2 + |sigma(x) - sigma0|_2 ) over channel-wise
/// statistics of the [0,1]-normalized image. Always <= 0.
double stat_regularizer(const ImageTensor& image, const std::array<double, 3>& mu0,
                        const std::array<double, 3>& sigma0);

struct HueRewardWeights {
  double band_weight{3.0};
  double reg_weight{0.3};
};

struct HueRewards {
  double r_theta{};  // warm preference
  double r_phi{};    // cool preference
};

/// r_theta = 3 Warm(x) + 0.3 R(x), r_phi = 3 Cool(x) + 0.3 R(x). The two
/// rewards conflict by construction.
HueRewards hue_rewards(const ImageTensor& image, const std::array<double, 3>& mu0,
                       const std::array<double, 3>& sigma0, const HueRewardWeights& w = {});

/// Test-corpus ingestion format: a one-line ASCII header
///   "imgtensor v1 <channels> <height> <width> <norm01:0|1>\n"
/// followed by channels*height*width little-endian float32 values,
/// channel-major, row-major within a channel. Channels must be 3.
ImageTensor load_image_tensor(const std::string& path);
void save_image_tensor(const ImageTensor& image, const std::string& path);

}  // namespace selfloop::rewards

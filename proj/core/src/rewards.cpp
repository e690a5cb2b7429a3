#include <selfloop/rewards.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace selfloop::rewards {

ImageTensor make_image(int height, int width, bool normalized01) {
  if (height < 1 || width < 1) throw ValidationError("image dimensions must be >= 1");
  ImageTensor img;
  img.height = height;
  img.width = width;
  img.normalized01 = normalized01;
  img.data.assign(static_cast<std::size_t>(3) * height * width, 0.0f);
  return img;
}

Hsv rgb_to_hsv(double r, double g, double b) {
  for (double c : {r, g, b}) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw ValidationError("rgb_to_hsv: components must lie in [0, 1]");
    }
  }
  const double v = std::max({r, g, b});
  const double m = std::min({r, g, b});
  const double delta = v - m;
  Hsv out;
  out.v = v;
  out.s = (v > 0.0) ? delta / (v + 1e-8) : 0.0;
  if (delta == 0.0) {
    out.h = 0.0;
  } else if (v == r) {
    out.h = std::fmod((g - b) / delta + 6.0, 6.0) / 6.0;
  } else if (v == g) {
    out.h = ((b - r) / delta + 2.0) / 6.0;
  } else {
    out.h = ((r - g) / delta + 4.0) / 6.0;
  }
  return out;
}

bool HueBand::contains(double hue) const {
  for (const auto& iv : intervals) {
    const bool above = hue >= iv.lo;
    const bool below = iv.closed_hi ? hue <= iv.hi : hue < iv.hi;
    if (above && below) return true;
  }
  return false;
}

HueBand warm_band() {
  return HueBand{{{0.92, 1.0, false}, {0.0, 0.17, true}}};
}

HueBand cool_band() {
  return HueBand{{{0.5, 0.72, true}}};
}

namespace {

double clip01(float x) {
  const double v = std::clamp(static_cast<double>(x), -1.0, 1.0);
  return (v + 1.0) / 2.0;
}

double pixel01(const ImageTensor& img, int c, int i, int j) {
  const float raw = img.at(c, i, j);
  if (img.normalized01) {
    const double v = raw;
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("normalized image has a component outside [0, 1]");
    }
    return v;
  }
  return clip01(raw);
}

void check_shape(const ImageTensor& img) {
  if (img.height < 1 || img.width < 1 ||
      img.data.size() != static_cast<std::size_t>(3) * img.height * img.width) {
    throw ValidationError("image tensor must be 3 x H x W with H, W >= 1");
  }
}

}  // namespace

double band_score(const ImageTensor& image, const HueBand& band) {
  check_shape(image);
  double acc = 0.0;
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      const auto hsv =
          rgb_to_hsv(pixel01(image, 0, i, j), pixel01(image, 1, i, j), pixel01(image, 2, i, j));
      if (band.contains(hsv.h)) acc += std::pow(hsv.s, 1.5);
    }
  }
  return acc / (static_cast<double>(image.height) * image.width);
}

double stat_regularizer(const ImageTensor& image, const std::array<double, 3>& mu0,
                        const std::array<double, 3>& sigma0) {
  check_shape(image);
  const double n = static_cast<double>(image.height) * image.width;
  double mu_err = 0.0, sd_err = 0.0;
  for (int c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < image.height; ++i) {
      for (int j = 0; j < image.width; ++j) {
        const double v = pixel01(image, c, i, j);
        s += v;
        s2 += v * v;
      }
    }
    const double mean = s / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    mu_err += (mean - mu0[c]) * (mean - mu0[c]);
    const double sd = std::sqrt(var);
    sd_err += (sd - sigma0[c]) * (sd - sigma0[c]);
  }
  return -(std::sqrt(mu_err) + std::sqrt(sd_err));
}

HueRewards hue_rewards(const ImageTensor& image, const std::array<double, 3>& mu0,
                       const std::array<double, 3>& sigma0, const HueRewardWeights& w) {
  const double warm = band_score(image, warm_band());
  const double cool = band_score(image, cool_band());
  const double reg = stat_regularizer(image, mu0, sigma0);
  HueRewards r;
  r.r_theta = w.band_weight * warm + w.reg_weight * reg;
  r.r_phi = w.band_weight * cool + w.reg_weight * reg;
  return r;
}

ImageTensor load_image_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image tensor file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("missing image tensor header: " + path);
  std::istringstream hs(line);
  std::string magic, version;
  int channels = 0, height = 0, width = 0, norm01 = 0;
  hs >> magic >> version >> channels >> height >> width >> norm01;
  if (magic != "imgtensor" || version != "v1" || hs.fail()) {
    throw ValidationError("bad image tensor header: " + line);
  }
  if (channels != 3 || height < 1 || width < 1) {
    throw ValidationError("image tensor must have 3 channels and positive size");
  }
  ImageTensor img = make_image(height, width, norm01 != 0);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size() * sizeof(float))) {
    throw ValidationError("image tensor file truncated: " + path);
  }
  return img;
}

void save_image_tensor(const ImageTensor& image, const std::string& path) {
  check_shape(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write image tensor file: " + path);
  out << "imgtensor v1 3 " << image.height << ' ' << image.width << ' '
      << (image.normalized01 ? 1 : 0) << '\n';
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size() * sizeof(float)));
}

}  // namespace selfloop::rewards

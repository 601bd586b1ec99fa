#include "copseudo/augment.hpp"

#include <algorithm>
#include <string>

#include "copseudo/errors.hpp"

namespace copseudo {

namespace {

constexpr int kPlane = kImageSide * kImageSide;

void check_modality(std::span<const double> x, const AugmentStream& stream, AugmentKind kind) {
  if (stream.kind() != kind) throw ConfigError("augment stream kind mismatch");
  if (stream.modality() == Modality::image && x.size() != kImagePixels) {
    throw ConfigError("modality mismatch: image stream given " + std::to_string(x.size()) +
                      " values");
  }
}

void check_image(std::span<const double> image) {
  if (image.size() != kImagePixels) throw ConfigError("expected a 3x32x32 image");
}

}  // namespace

void AugmentConfig::validate() const {
  std::string err;
  if (!(sigma_weak >= 0.0)) err += " aug.sigma_weak must be >= 0;";
  if (!(sigma_strong >= 0.0)) err += " aug.sigma_strong must be >= 0;";
  if (!(vector_drop_prob >= 0.0 && vector_drop_prob <= 1.0)) err += " aug.vector_drop_prob must be in [0,1];";
  if (image_shift_weak < 0 || image_shift_weak >= kImageSide) err += " aug.image_shift_weak out of range;";
  if (image_shift_strong < 0 || image_shift_strong >= kImageSide) err += " aug.image_shift_strong out of range;";
  if (!err.empty()) throw ConfigError("invalid augmentation config:" + err);
}

WeakImageDraw draw_weak_image(Rng& rng, const AugmentConfig& cfg) {
  WeakImageDraw d;
  d.flip = rng.bernoulli(0.5);
  d.dx = rng.between(-cfg.image_shift_weak, cfg.image_shift_weak);
  d.dy = rng.between(-cfg.image_shift_weak, cfg.image_shift_weak);
  return d;
}

StrongImageDraw draw_strong_image(Rng& rng, const AugmentConfig& cfg) {
  StrongImageDraw d;
  for (auto& slot : d.ops) {
    slot.op = static_cast<StrongOp>(rng.below(4));
    // Every parameter is drawn regardless of op so consumption is fixed.
    slot.dx = rng.between(-cfg.image_shift_strong, cfg.image_shift_strong);
    slot.dy = rng.between(-cfg.image_shift_strong, cfg.image_shift_strong);
    slot.scale = rng.uniform(kBrightnessMin, kBrightnessMax);
    slot.cut_x = rng.between(0, kImageSide - kCutoutSide);
    slot.cut_y = rng.between(0, kImageSide - kCutoutSide);
  }
  return d;
}

std::vector<double> flip_horizontal(std::span<const double> image) {
  check_image(image);
  std::vector<double> out(image.size());
  for (int c = 0; c < kImageChannels; ++c)
    for (int y = 0; y < kImageSide; ++y)
      for (int x = 0; x < kImageSide; ++x)
        out[c * kPlane + y * kImageSide + x] = image[c * kPlane + y * kImageSide + (kImageSide - 1 - x)];
  return out;
}

std::vector<double> translate(std::span<const double> image, int dx, int dy) {
  check_image(image);
  std::vector<double> out(image.size(), 0.0);
  for (int c = 0; c < kImageChannels; ++c)
    for (int y = 0; y < kImageSide; ++y) {
      const int sy = y - dy;
      if (sy < 0 || sy >= kImageSide) continue;
      for (int x = 0; x < kImageSide; ++x) {
        const int sx = x - dx;
        if (sx < 0 || sx >= kImageSide) continue;
        out[c * kPlane + y * kImageSide + x] = image[c * kPlane + sy * kImageSide + sx];
      }
    }
  return out;
}

std::vector<double> apply_weak_image(std::span<const double> image, const WeakImageDraw& draw) {
  std::vector<double> out = draw.flip ? flip_horizontal(image)
                                      : std::vector<double>(image.begin(), image.end());
  if (draw.dx != 0 || draw.dy != 0) out = translate(out, draw.dx, draw.dy);
  return out;
}

std::vector<double> apply_strong_image(std::span<const double> image, const StrongImageDraw& draw) {
  check_image(image);
  std::vector<double> out(image.begin(), image.end());
  for (const auto& slot : draw.ops) {
    switch (slot.op) {
      case StrongOp::flip:
        out = flip_horizontal(out);
        break;
      case StrongOp::translate:
        out = translate(out, slot.dx, slot.dy);
        break;
      case StrongOp::brightness:
        for (double& v : out) v = std::clamp(v * slot.scale, 0.0, 1.0);
        break;
      case StrongOp::cutout:
        for (int c = 0; c < kImageChannels; ++c)
          for (int y = slot.cut_y; y < slot.cut_y + kCutoutSide; ++y)
            for (int x = slot.cut_x; x < slot.cut_x + kCutoutSide; ++x)
              out[c * kPlane + y * kImageSide + x] = kCutoutFill;
        break;
    }
  }
  return out;
}

std::vector<double> weak_augment(std::span<const double> x, AugmentStream& stream,
                                 const AugmentConfig& cfg) {
  check_modality(x, stream, AugmentKind::weak);
  if (stream.modality() == Modality::image) {
    return apply_weak_image(x, draw_weak_image(stream.rng(), cfg));
  }
  std::vector<double> out(x.begin(), x.end());
  if (cfg.sigma_weak > 0.0) {
    for (double& v : out) v += stream.rng().normal(0.0, cfg.sigma_weak);
  }
  return out;
}

std::vector<double> strong_augment(std::span<const double> x, AugmentStream& stream,
                                   const AugmentConfig& cfg) {
  check_modality(x, stream, AugmentKind::strong);
  if (stream.modality() == Modality::image) {
    return apply_strong_image(x, draw_strong_image(stream.rng(), cfg));
  }
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) {
    v += stream.rng().normal(0.0, cfg.sigma_strong);
    if (stream.rng().bernoulli(cfg.vector_drop_prob)) v = 0.0;
  }
  return out;
}

}  // namespace copseudo

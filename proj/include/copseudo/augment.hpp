#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "copseudo/data.hpp"
#include "copseudo/rng.hpp"

namespace copseudo {

enum class AugmentKind { weak, strong };

struct AugmentConfig {
  double sigma_weak = 0.05;        // aug.sigma_weak
  double sigma_strong = 0.25;      // aug.sigma_strong
  double vector_drop_prob = 0.1;   // aug.vector_drop_prob
  int image_shift_weak = 4;        // aug.image_shift_weak
  int image_shift_strong = 8;      // aug.image_shift_strong

  void validate() const;
};

// One owned random stream per (model, kind).
class AugmentStream {
 public:
  AugmentStream(AugmentKind kind, Modality modality, std::uint64_t seed)
      : kind_(kind), modality_(modality), rng_(seed) {}

  AugmentKind kind() const noexcept { return kind_; }
  Modality modality() const noexcept { return modality_; }
  Rng& rng() noexcept { return rng_; }

 private:
  AugmentKind kind_;
  Modality modality_;
  Rng rng_;
};

struct WeakImageDraw {
  bool flip = false;
  int dx = 0;
  int dy = 0;
};

enum class StrongOp { flip, translate, brightness, cutout };

struct StrongOpDraw {
  StrongOp op = StrongOp::flip;
  int dx = 0;
  int dy = 0;
  double scale = 1.0;
  int cut_x = 0;
  int cut_y = 0;
};

// Two ops drawn independently (with replacement) from the four strong ops.
struct StrongImageDraw {
  std::array<StrongOpDraw, 2> ops;
};

inline constexpr int kCutoutSide = 8;
inline constexpr double kCutoutFill = 0.5;
inline constexpr double kBrightnessMin = 0.6;
inline constexpr double kBrightnessMax = 1.4;

WeakImageDraw draw_weak_image(Rng& rng, const AugmentConfig& cfg);
StrongImageDraw draw_strong_image(Rng& rng, const AugmentConfig& cfg);

std::vector<double> flip_horizontal(std::span<const double> image);
// Moves content by (dx, dy) pixels; vacated pixels become 0.
std::vector<double> translate(std::span<const double> image, int dx, int dy);
std::vector<double> apply_weak_image(std::span<const double> image, const WeakImageDraw& draw);
std::vector<double> apply_strong_image(std::span<const double> image, const StrongImageDraw& draw);

// Image: random flip then translation up to `image_shift_weak` px.
// Vector: additive Gaussian noise with sigma_weak.
std::vector<double> weak_augment(std::span<const double> x, AugmentStream& stream,
                                 const AugmentConfig& cfg);
// Image: two of {flip, translate, brightness, cutout}.
// Vector: Gaussian noise with sigma_strong, then each coordinate zeroed with
// probability vector_drop_prob.
std::vector<double> strong_augment(std::span<const double> x, AugmentStream& stream,
                                   const AugmentConfig& cfg);

}  // namespace copseudo

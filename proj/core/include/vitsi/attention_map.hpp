#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "vitsi/matrix.hpp"
#include "vitsi/vit.hpp"

namespace vitsi {

/// Default attention threshold.
inline constexpr double kDefaultTau = 0.6;

/// Class-token row of the rolled-out attention
///   (Â_1 + I)(Â_2 + I) ... (Â_L + I),  Â_l = mean over heads of A_{l,h},
/// restricted to the patch columns (length N). Layer 1 is the leftmost factor.
/// `attn` is indexed l * heads + h.
template <typename T>
std::vector<T> rollout(std::span<const Matrix<T>> attn, std::size_t layers, std::size_t heads);

/// Bilinear upsampling with corner alignment: output pixel i samples source
/// coordinate i (s - 1) / (d - 1). Reproduces the input when d equals s.
template <typename T>
Matrix<T> upsample_bilinear(const Matrix<T>& patch_map, std::size_t out_side);

/// (x - min) / (max - min), flattened row-major. A constant input maps to all
/// zeros.
template <typename T>
std::vector<T> normalize_minmax(const Matrix<T>& map);

/// Full pixel-level map A(X) in [0, 1]^n: forward pass, rollout, upsampling,
/// normalization.
template <typename T>
std::vector<T> attention_map(const ViTWeights& weights, std::span<const T> image);

/// Pixels whose score strictly exceeds the threshold.
struct AttentionRegion {
  std::size_t n = 0;
  double threshold = kDefaultTau;
  std::vector<std::size_t> pixels;  ///< sorted ascending

  bool empty() const { return pixels.empty(); }
  bool full() const { return pixels.size() == n; }
  bool proper() const { return !empty() && !full(); }
  std::vector<bool> mask() const;

  bool operator==(const AttentionRegion&) const = default;
};

/// {i : score_i > tau}. Throws ConfigError unless 0 < tau < 1.
AttentionRegion threshold_region(std::span<const double> scores, double tau);

/// CSV with header "index,score,in_region", one row per pixel.
void write_attention_csv(std::ostream& out, std::span<const double> scores,
                         const AttentionRegion& region);

}  // namespace vitsi

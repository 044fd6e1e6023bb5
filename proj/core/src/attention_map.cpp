#include "vitsi/attention_map.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

#include "vitsi/errors.hpp"

namespace vitsi {

template <typename T>
std::vector<T> rollout(std::span<const Matrix<T>> attn, std::size_t layers, std::size_t heads) {
  if (layers == 0 || heads == 0 || attn.size() != layers * heads) {
    throw ConfigError("rollout: expected " + std::to_string(layers * heads) +
                      " attention matrices, got " + std::to_string(attn.size()));
  }
  const std::size_t tokens = attn[0].rows();
  for (const auto& a : attn) {
    if (a.rows() != tokens || a.cols() != tokens) {
      throw ConfigError("rollout: attention matrices must all be square with the same size");
    }
  }
  const double inv_heads = 1.0 / static_cast<double>(heads);

  // Row vector e_1ᵀ pushed through each factor (Â_l + I) from the left.
  std::vector<T> row(tokens, T(0.0));
  row[0] = 1.0;
  std::vector<T> next(tokens);
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix<T> mean(tokens, tokens);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto& src = attn[l * heads + h].data();
      auto& dst = mean.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    for (T& x : mean.data()) x *= inv_heads;

    next = row;
    for (std::size_t r = 0; r < tokens; ++r) {
      const T coeff = row[r];
      const auto mrow = mean.row(r);
      for (std::size_t c = 0; c < tokens; ++c) next[c] += coeff * mrow[c];
    }
    row.swap(next);
  }
  return std::vector<T>(row.begin() + 1, row.end());
}

template <typename T>
Matrix<T> upsample_bilinear(const Matrix<T>& patch_map, std::size_t out_side) {
  const std::size_t s = patch_map.rows();
  if (s == 0 || patch_map.cols() != s) throw ConfigError("upsample_bilinear: input must be square");
  if (out_side < s) throw ConfigError("upsample_bilinear: output smaller than input");
  Matrix<T> out(out_side, out_side);
  if (s == 1) {
    for (T& x : out.data()) x = patch_map(0, 0);
    return out;
  }
  const double ratio = static_cast<double>(s - 1) / static_cast<double>(out_side - 1);
  auto locate = [&](std::size_t i, std::size_t& lo, double& frac) {
    const double src = (out_side == s) ? static_cast<double>(i) : static_cast<double>(i) * ratio;
    lo = std::min(static_cast<std::size_t>(std::floor(src)), s - 2);
    frac = src - static_cast<double>(lo);
  };
  for (std::size_t i = 0; i < out_side; ++i) {
    std::size_t y0;
    double wy;
    locate(i, y0, wy);
    for (std::size_t j = 0; j < out_side; ++j) {
      std::size_t x0;
      double wx;
      locate(j, x0, wx);
      const T top = (1.0 - wx) * patch_map(y0, x0) + wx * patch_map(y0, x0 + 1);
      const T bottom = (1.0 - wx) * patch_map(y0 + 1, x0) + wx * patch_map(y0 + 1, x0 + 1);
      out(i, j) = (1.0 - wy) * top + wy * bottom;
    }
  }
  return out;
}

template <typename T>
std::vector<T> normalize_minmax(const Matrix<T>& map) {
  const auto& d = map.data();
  std::vector<T> out(d.size(), T(0.0));
  if (d.empty()) return out;
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (value_of(d[i]) < value_of(d[lo])) lo = i;
    if (value_of(d[i]) > value_of(d[hi])) hi = i;
  }
  const T range = d[hi] - d[lo];
  if (!(value_of(range) > 0.0)) return out;
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = (d[i] - d[lo]) / range;
  return out;
}

template <typename T>
std::vector<T> attention_map(const ViTWeights& weights, std::span<const T> image) {
  const ViTConfig& c = weights.config;
  const AttentionOutput<T> fw = forward<T>(weights, image);
  std::vector<T> patch_scores =
      rollout<T>(std::span<const Matrix<T>>(fw.attn), c.num_layers, c.num_heads);
  const std::size_t grid = c.patches_per_side();
  const Matrix<T> patch_map(grid, grid, std::move(patch_scores));
  return normalize_minmax(upsample_bilinear(patch_map, c.image_side));
}

std::vector<bool> AttentionRegion::mask() const {
  std::vector<bool> m(n, false);
  for (std::size_t i : pixels) m[i] = true;
  return m;
}

AttentionRegion threshold_region(std::span<const double> scores, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  AttentionRegion region;
  region.n = scores.size();
  region.threshold = tau;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > tau) region.pixels.push_back(i);
  }
  return region;
}

void write_attention_csv(std::ostream& out, std::span<const double> scores,
                         const AttentionRegion& region) {
  const std::vector<bool> mask = region.mask();
  out << "index,score,in_region\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << i << ',' << scores[i] << ',' << (i < mask.size() && mask[i] ? 1 : 0) << '\n';
  }
}

template std::vector<double> rollout(std::span<const Matrix<double>>, std::size_t, std::size_t);
template std::vector<Dual> rollout(std::span<const Matrix<Dual>>, std::size_t, std::size_t);
template Matrix<double> upsample_bilinear(const Matrix<double>&, std::size_t);
template Matrix<Dual> upsample_bilinear(const Matrix<Dual>&, std::size_t);
template std::vector<double> normalize_minmax(const Matrix<double>&);
template std::vector<Dual> normalize_minmax(const Matrix<Dual>&);
template std::vector<double> attention_map(const ViTWeights&, std::span<const double>);
template std::vector<Dual> attention_map(const ViTWeights&, std::span<const Dual>);

}  // namespace vitsi

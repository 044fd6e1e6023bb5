#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vitsi/dual.hpp"
#include "vitsi/matrix.hpp"

namespace vitsi {

inline constexpr double kLayerNormEps = 1e-5;

/// Architecture hyperparameters of the pre-norm ViT classifier.
struct ViTConfig {
  std::size_t image_side = 16;  ///< d, with n = d * d pixels
  std::size_t patch_size = 2;
  std::size_t num_layers = 8;
  std::size_t emb_dim = 64;
  std::size_t num_heads = 4;
  std::size_t num_classes = 2;

  std::size_t pixels() const { return image_side * image_side; }
  std::size_t patches_per_side() const { return image_side / patch_size; }
  std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t head_dim() const { return emb_dim / num_heads; }
  std::size_t mlp_hidden() const { return 4 * emb_dim; }
  std::size_t patch_pixels() const { return patch_size * patch_size; }

  /// Throws ConfigError if divisibility or positivity constraints fail.
  void validate() const;

  bool operator==(const ViTConfig&) const = default;
};

/// Named architecture preset (#layers, #emb_dim, #heads).
struct ArchPreset {
  std::string_view name;
  std::size_t num_layers;
  std::size_t emb_dim;
  std::size_t num_heads;
};

/// small 4/32/2, base 8/64/4, large 12/128/8, huge 16/256/16.
std::span<const ArchPreset> arch_presets();

/// Patch size min(2, d / 8); d must make that a positive integer.
std::size_t default_patch_size(std::size_t image_side);

/// Builds a config from a preset name. Throws ConfigError listing valid names
/// on an unknown arch.
ViTConfig make_config(std::string_view arch, std::size_t image_side,
                      std::optional<std::size_t> patch_size = std::nullopt);

/// Side length for an n-pixel square image; throws if n is not a square.
std::size_t image_side_for(std::size_t pixels);

struct LayerWeights {
  Matrix<double> ln1_gamma, ln1_beta;
  Matrix<double> q_weight, q_bias;
  Matrix<double> k_weight, k_bias;
  Matrix<double> v_weight, v_bias;
  Matrix<double> out_weight, out_bias;
  Matrix<double> ln2_gamma, ln2_beta;
  Matrix<double> fc1_weight, fc1_bias;
  Matrix<double> fc2_weight, fc2_bias;

  bool operator==(const LayerWeights&) const = default;
};

/// Learned tensors. Linear weights are stored input-dim x output-dim so that
/// y = x W + b; vectors are 1 x k matrices.
struct ViTWeights {
  ViTConfig config;
  Matrix<double> patch_weight, patch_bias;
  Matrix<double> cls_token;
  Matrix<double> pos_embed;
  std::vector<LayerWeights> layers;
  Matrix<double> final_gamma, final_beta;
  Matrix<double> head_weight, head_bias;

  bool operator==(const ViTWeights&) const = default;
};

/// Canonical interchange shape of one tensor; rank-1 tensors have one entry.
struct TensorShape {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t rows() const { return shape.size() == 1 ? 1 : shape[0]; }
  std::size_t cols() const { return shape.back(); }
  std::size_t elements() const { return rows() * cols(); }
};

/// Every tensor of `config` in canonical file order.
std::vector<TensorShape> tensor_layout(const ViTConfig& config);

/// Tensor pointers in the same order as tensor_layout().
std::vector<Matrix<double>*> tensor_slots(ViTWeights& weights);
std::vector<const Matrix<double>*> tensor_slots(const ViTWeights& weights);

/// Allocates zero tensors of the right shapes.
ViTWeights zero_weights(const ViTConfig& config);

/// Deterministic initialization: linear weights, biases, class token and
/// positional embedding ~ N(0, 0.02^2) rounded to float32; layer-norm scales
/// one and shifts zero.
ViTWeights random_init(const ViTConfig& config, std::uint64_t seed);

/// Shape check against the embedded config; throws ConfigError.
void validate_weights(const ViTWeights& weights);

std::size_t parameter_count(const ViTConfig& config);

template <typename T>
struct AttentionOutput {
  /// attn[l * H + h] is the (N+1) x (N+1) softmax matrix of head h in layer l.
  std::vector<Matrix<T>> attn;
  std::vector<T> logits;

  const Matrix<T>& at(std::size_t layer, std::size_t head, std::size_t heads) const {
    return attn[layer * heads + head];
  }
};

/// Full forward pass over a row-major d x d image, capturing every attention
/// matrix. Instantiated for double and Dual.
template <typename T>
AttentionOutput<T> forward(const ViTWeights& weights, std::span<const T> image);

}  // namespace vitsi

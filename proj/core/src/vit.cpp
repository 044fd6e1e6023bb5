#include "vitsi/vit.hpp"

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "vitsi/errors.hpp"

namespace vitsi {

namespace {

constexpr std::array<ArchPreset, 4> kPresets = {{
    {"small", 4, 32, 2},
    {"base", 8, 64, 4},
    {"large", 12, 128, 8},
    {"huge", 16, 256, 16},
}};

constexpr double kInitScale = 0.02;

std::string preset_names() {
  std::string names;
  for (const auto& p : kPresets) {
    if (!names.empty()) names += ", ";
    names += p.name;
  }
  return names;
}

bool is_layer_norm(const std::string& name) {
  return name.ends_with(".gamma") || name.ends_with(".beta");
}

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<double>& gamma, const Matrix<double>& beta) {
  const std::size_t k = x.cols();
  Matrix<T> out(x.rows(), k);
  const auto g = gamma.row(0);
  const auto b = beta.row(0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto o = out.row(r);
    T mean = 0.0;
    for (const T& v : in) mean += v;
    mean = mean / static_cast<double>(k);
    T var = 0.0;
    for (const T& v : in) {
      const T c = v - mean;
      var += c * c;
    }
    var = var / static_cast<double>(k);
    const T inv = 1.0 / sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < k; ++c) o[c] = (in[c] - mean) * inv * g[c] + b[c];
  }
  return out;
}

template <typename T>
T gelu(const T& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  return 0.5 * x * (1.0 + erf(x * kInvSqrt2));
}

template <typename T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<double>& w, const Matrix<double>& b) {
  Matrix<T> y = matmul(x, w);
  add_row_vector(y, b.row(0));
  return y;
}

}  // namespace

void ViTConfig::validate() const {
  if (image_side == 0 || patch_size == 0 || num_layers == 0 || emb_dim == 0 || num_heads == 0 ||
      num_classes == 0) {
    throw ConfigError("ViTConfig: all dimensions must be positive");
  }
  if (image_side % patch_size != 0) {
    throw ConfigError("ViTConfig: image side " + std::to_string(image_side) +
                      " not divisible by patch size " + std::to_string(patch_size));
  }
  if (emb_dim % num_heads != 0) {
    throw ConfigError("ViTConfig: emb_dim " + std::to_string(emb_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
}

std::span<const ArchPreset> arch_presets() { return kPresets; }

std::size_t default_patch_size(std::size_t image_side) {
  if (image_side >= 16) return 2;
  if (image_side == 8) return 1;
  throw ConfigError("default patch size min(2, d/8) is not a positive integer for d = " +
                    std::to_string(image_side) + "; pass an explicit patch size");
}

ViTConfig make_config(std::string_view arch, std::size_t image_side,
                      std::optional<std::size_t> patch_size) {
  for (const auto& p : kPresets) {
    if (p.name == arch) {
      ViTConfig c;
      c.image_side = image_side;
      c.patch_size = patch_size ? *patch_size : default_patch_size(image_side);
      c.num_layers = p.num_layers;
      c.emb_dim = p.emb_dim;
      c.num_heads = p.num_heads;
      c.validate();
      return c;
    }
  }
  throw ConfigError("unknown architecture '" + std::string(arch) + "'; valid: " + preset_names());
}

std::size_t image_side_for(std::size_t pixels) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
  if (side * side != pixels || side == 0) {
    throw ConfigError("pixel count " + std::to_string(pixels) + " is not a perfect square");
  }
  return side;
}

std::vector<TensorShape> tensor_layout(const ViTConfig& c) {
  const std::size_t e = c.emb_dim;
  std::vector<TensorShape> out = {
      {"patch_embed.weight", {c.patch_pixels(), e}},
      {"patch_embed.bias", {e}},
      {"cls_token", {e}},
      {"pos_embed", {c.num_tokens(), e}},
  };
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gamma", {e}});
    out.push_back({p + "ln1.beta", {e}});
    for (const char* m : {"q", "k", "v", "out"}) {
      out.push_back({p + "attn." + m + ".weight", {e, e}});
      out.push_back({p + "attn." + m + ".bias", {e}});
    }
    out.push_back({p + "ln2.gamma", {e}});
    out.push_back({p + "ln2.beta", {e}});
    out.push_back({p + "mlp.fc1.weight", {e, c.mlp_hidden()}});
    out.push_back({p + "mlp.fc1.bias", {c.mlp_hidden()}});
    out.push_back({p + "mlp.fc2.weight", {c.mlp_hidden(), e}});
    out.push_back({p + "mlp.fc2.bias", {e}});
  }
  out.push_back({"final_ln.gamma", {e}});
  out.push_back({"final_ln.beta", {e}});
  out.push_back({"head.weight", {e, c.num_classes}});
  out.push_back({"head.bias", {c.num_classes}});
  return out;
}

namespace {

template <typename W, typename M>
std::vector<M*> slots_impl(W& w) {
  std::vector<M*> out = {&w.patch_weight, &w.patch_bias, &w.cls_token, &w.pos_embed};
  for (auto& l : w.layers) {
    out.insert(out.end(), {&l.ln1_gamma, &l.ln1_beta, &l.q_weight, &l.q_bias, &l.k_weight,
                           &l.k_bias, &l.v_weight, &l.v_bias, &l.out_weight, &l.out_bias,
                           &l.ln2_gamma, &l.ln2_beta, &l.fc1_weight, &l.fc1_bias, &l.fc2_weight,
                           &l.fc2_bias});
  }
  out.insert(out.end(), {&w.final_gamma, &w.final_beta, &w.head_weight, &w.head_bias});
  return out;
}

}  // namespace

std::vector<Matrix<double>*> tensor_slots(ViTWeights& w) {
  return slots_impl<ViTWeights, Matrix<double>>(w);
}

std::vector<const Matrix<double>*> tensor_slots(const ViTWeights& w) {
  return slots_impl<const ViTWeights, const Matrix<double>>(w);
}

ViTWeights zero_weights(const ViTConfig& config) {
  config.validate();
  ViTWeights w;
  w.config = config;
  w.layers.resize(config.num_layers);
  const auto layout = tensor_layout(config);
  const auto slots = tensor_slots(w);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    *slots[i] = Matrix<double>(layout[i].rows(), layout[i].cols());
  }
  return w;
}

ViTWeights random_init(const ViTConfig& config, std::uint64_t seed) {
  ViTWeights w = zero_weights(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitScale);
  const auto layout = tensor_layout(config);
  const auto slots = tensor_slots(w);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    auto& data = slots[i]->data();
    const std::string& name = layout[i].name;
    if (is_layer_norm(name)) {
      const double fill = name.ends_with(".gamma") ? 1.0 : 0.0;
      std::fill(data.begin(), data.end(), fill);
    } else {
      for (double& x : data) x = static_cast<double>(static_cast<float>(normal(rng)));
    }
  }
  return w;
}

void validate_weights(const ViTWeights& weights) {
  weights.config.validate();
  if (weights.layers.size() != weights.config.num_layers) {
    throw ConfigError("weights carry " + std::to_string(weights.layers.size()) +
                      " layers, config expects " + std::to_string(weights.config.num_layers));
  }
  const auto layout = tensor_layout(weights.config);
  const auto slots = tensor_slots(weights);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (slots[i]->rows() != layout[i].rows() || slots[i]->cols() != layout[i].cols()) {
      throw ConfigError("tensor " + layout[i].name + " has shape " +
                        std::to_string(slots[i]->rows()) + "x" + std::to_string(slots[i]->cols()) +
                        ", expected " + std::to_string(layout[i].rows()) + "x" +
                        std::to_string(layout[i].cols()));
    }
  }
}

std::size_t parameter_count(const ViTConfig& config) {
  std::size_t total = 0;
  for (const auto& t : tensor_layout(config)) total += t.elements();
  return total;
}

template <typename T>
AttentionOutput<T> forward(const ViTWeights& w, std::span<const T> image) {
  const ViTConfig& c = w.config;
  if (image.size() != c.pixels()) {
    throw ConfigError("image has " + std::to_string(image.size()) + " pixels, config expects " +
                      std::to_string(c.pixels()));
  }
  const std::size_t side = c.image_side;
  const std::size_t p = c.patch_size;
  const std::size_t grid = c.patches_per_side();
  const std::size_t tokens = c.num_tokens();
  const std::size_t e = c.emb_dim;
  const std::size_t heads = c.num_heads;
  const std::size_t hd = c.head_dim();

  Matrix<T> patches(c.num_patches(), c.patch_pixels());
  for (std::size_t pr = 0; pr < grid; ++pr) {
    for (std::size_t pc = 0; pc < grid; ++pc) {
      auto row = patches.row(pr * grid + pc);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) row[i * p + j] = image[(pr * p + i) * side + pc * p + j];
    }
  }
  const Matrix<T> embedded = linear(patches, w.patch_weight, w.patch_bias);

  Matrix<T> x(tokens, e);
  for (std::size_t k = 0; k < e; ++k) x(0, k) = w.cls_token(0, k);
  for (std::size_t t = 1; t < tokens; ++t)
    for (std::size_t k = 0; k < e; ++k) x(t, k) = embedded(t - 1, k);
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t k = 0; k < e; ++k) x(t, k) += w.pos_embed(t, k);

  AttentionOutput<T> out;
  out.attn.reserve(c.num_layers * heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  for (const LayerWeights& lw : w.layers) {
    const Matrix<T> h = layer_norm(x, lw.ln1_gamma, lw.ln1_beta);
    const Matrix<T> q = linear(h, lw.q_weight, lw.q_bias);
    const Matrix<T> k = linear(h, lw.k_weight, lw.k_bias);
    const Matrix<T> v = linear(h, lw.v_weight, lw.v_bias);
    Matrix<T> context(tokens, e);
    for (std::size_t hh = 0; hh < heads; ++hh) {
      Matrix<T> scores = matmul_transposed(column_block(q, hh * hd, hd), column_block(k, hh * hd, hd));
      for (T& s : scores.data()) s *= scale;
      Matrix<T> attn = softmax_rows(scores);
      set_column_block(context, hh * hd, matmul_same(attn, column_block(v, hh * hd, hd)));
      out.attn.push_back(std::move(attn));
    }
    const Matrix<T> projected = linear(context, lw.out_weight, lw.out_bias);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += projected.data()[i];

    const Matrix<T> h2 = layer_norm(x, lw.ln2_gamma, lw.ln2_beta);
    Matrix<T> hidden = linear(h2, lw.fc1_weight, lw.fc1_bias);
    for (T& a : hidden.data()) a = gelu(a);
    const Matrix<T> mlp = linear(hidden, lw.fc2_weight, lw.fc2_bias);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += mlp.data()[i];
  }

  Matrix<T> cls(1, e);
  for (std::size_t k = 0; k < e; ++k) cls(0, k) = x(0, k);
  const Matrix<T> normed = layer_norm(cls, w.final_gamma, w.final_beta);
  const Matrix<T> logits = linear(normed, w.head_weight, w.head_bias);
  out.logits = logits.data();
  return out;
}

template AttentionOutput<double> forward(const ViTWeights&, std::span<const double>);
template AttentionOutput<Dual> forward(const ViTWeights&, std::span<const Dual>);

}  // namespace vitsi

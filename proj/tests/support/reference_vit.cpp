#include "reference_vit.hpp"

#include <algorithm>
#include <cmath>

namespace vitsi::testing {

namespace {

using Mat = std::vector<std::vector<double>>;

Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

// y[t][o] = b[o] + sum_i x[t][i] * W[i * out + o]
Mat dense(const Mat& x, const std::vector<double>& w, const std::vector<double>& b) {
  const std::size_t in = x[0].size(), out = b.size();
  Mat y = zeros(x.size(), out);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[t][i] * w[i * out + o];
      y[t][o] = s;
    }
  return y;
}

Mat norm(const Mat& x, const std::vector<double>& g, const std::vector<double>& b) {
  Mat y = x;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double k = static_cast<double>(x[t].size());
    double mean = 0.0;
    for (double v : x[t]) mean += v / k;
    double var = 0.0;
    for (double v : x[t]) var += (v - mean) * (v - mean) / k;
    for (std::size_t i = 0; i < x[t].size(); ++i) y[t][i] = (x[t][i] - mean) / std::sqrt(var + 1e-5) * g[i] + b[i];
  }
  return y;
}

}  // namespace

TensorMap tensors_by_name(const ViTWeights& weights) {
  TensorMap m;
  const auto layout = tensor_layout(weights.config);
  const auto slots = tensor_slots(weights);
  for (std::size_t i = 0; i < layout.size(); ++i) m[layout[i].name] = slots[i]->data();
  return m;
}

ReferenceOutput reference_forward(const ViTConfig& c, const TensorMap& t, const std::vector<double>& image) {
  const std::size_t side = c.image_side, p = c.patch_size, g = side / p, np = g * g, e = c.emb_dim;
  const std::size_t heads = c.num_heads, hd = e / heads, tokens = np + 1;
  auto T = [&](const std::string& name) -> const std::vector<double>& { return t.at(name); };

  Mat patches = zeros(np, p * p);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t col = 0; col < side; ++col) patches[(r / p) * g + col / p][(r % p) * p + col % p] = image[r * side + col];
  const Mat emb = dense(patches, T("patch_embed.weight"), T("patch_embed.bias"));

  Mat x = zeros(tokens, e);
  for (std::size_t k = 0; k < e; ++k) {
    x[0][k] = T("cls_token")[k] + T("pos_embed")[k];
    for (std::size_t i = 1; i < tokens; ++i) x[i][k] = emb[i - 1][k] + T("pos_embed")[i * e + k];
  }

  ReferenceOutput out;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    const Mat h = norm(x, T(pre + "ln1.gamma"), T(pre + "ln1.beta"));
    const Mat q = dense(h, T(pre + "attn.q.weight"), T(pre + "attn.q.bias"));
    const Mat k = dense(h, T(pre + "attn.k.weight"), T(pre + "attn.k.bias"));
    const Mat v = dense(h, T(pre + "attn.v.weight"), T(pre + "attn.v.bias"));
    Mat ctx = zeros(tokens, e);
    out.attn.emplace_back();
    for (std::size_t hh = 0; hh < heads; ++hh) {
      Mat a = zeros(tokens, tokens);
      for (std::size_t i = 0; i < tokens; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < tokens; ++j) {
          double s = 0.0;
          for (std::size_t d = 0; d < hd; ++d) s += q[i][hh * hd + d] * k[j][hh * hd + d];
          a[i][j] = s / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, a[i][j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) z += (a[i][j] = std::exp(a[i][j] - mx));
        for (std::size_t j = 0; j < tokens; ++j) a[i][j] /= z;
      }
      for (std::size_t i = 0; i < tokens; ++i)
        for (std::size_t d = 0; d < hd; ++d) {
          double s = 0.0;
          for (std::size_t j = 0; j < tokens; ++j) s += a[i][j] * v[j][hh * hd + d];
          ctx[i][hh * hd + d] = s;
        }
      out.attn.back().push_back(a);
    }
    const Mat o = dense(ctx, T(pre + "attn.out.weight"), T(pre + "attn.out.bias"));
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t d = 0; d < e; ++d) x[i][d] += o[i][d];
    Mat f = dense(norm(x, T(pre + "ln2.gamma"), T(pre + "ln2.beta")), T(pre + "mlp.fc1.weight"), T(pre + "mlp.fc1.bias"));
    for (auto& row : f)
      for (double& u : row) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
    const Mat m = dense(f, T(pre + "mlp.fc2.weight"), T(pre + "mlp.fc2.bias"));
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t d = 0; d < e; ++d) x[i][d] += m[i][d];
  }
  const Mat cls = norm(Mat{x[0]}, T("final_ln.gamma"), T("final_ln.beta"));
  out.logits = dense(cls, T("head.weight"), T("head.bias"))[0];

  // Rollout as an explicit product of full matrices, layer 1 on the left.
  Mat roll = zeros(tokens, tokens);
  for (std::size_t i = 0; i < tokens; ++i) roll[i][i] = 1.0;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    Mat f = zeros(tokens, tokens);
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t j = 0; j < tokens; ++j) {
        double s = i == j ? 1.0 : 0.0;
        for (std::size_t hh = 0; hh < heads; ++hh) s += out.attn[l][hh][i][j] / static_cast<double>(heads);
        f[i][j] = s;
      }
    Mat next = zeros(tokens, tokens);
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t k2 = 0; k2 < tokens; ++k2)
        for (std::size_t j = 0; j < tokens; ++j) next[i][j] += roll[i][k2] * f[k2][j];
    roll = next;
  }

  // Corner-aligned bilinear upsampling of the g x g patch grid.
  std::vector<double> up(side * side);
  auto coord = [&](std::size_t i) { return g == 1 ? 0.0 : static_cast<double>(i) * (g - 1) / (side - 1); };
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      const double y = coord(i), xx = coord(j);
      const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(y), g > 1 ? g - 2 : 0);
      const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(xx), g > 1 ? g - 2 : 0);
      const std::size_t y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
      const double wy = y - y0, wx = xx - x0;
      auto at = [&](std::size_t r, std::size_t cc) { return roll[0][1 + r * g + cc]; };
      up[i * side + j] = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) + wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
    }
  const auto [lo, hi] = std::minmax_element(up.begin(), up.end());
  const double mn = *lo, range = *hi - *lo;
  out.attention_map.resize(up.size(), 0.0);
  if (range > 0)
    for (std::size_t i = 0; i < up.size(); ++i) out.attention_map[i] = (up[i] - mn) / range;
  return out;
}

}  // namespace vitsi::testing

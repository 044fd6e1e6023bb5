#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "reference_vit.hpp"
#include "vitsi/attention_map.hpp"
#include "vitsi/errors.hpp"
#include "vitsi/image_io.hpp"
#include "vitsi/vit.hpp"
#include "vitsi/weights_io.hpp"

namespace vitsi {
namespace {

using testing::Gen;
namespace fs = std::filesystem;

// ---- configuration ---------------------------------------------------------

TEST(ViTConfig, PresetTable) {
  const auto presets = arch_presets();
  ASSERT_EQ(presets.size(), 4u);
  const ViTConfig base = make_config("base", 16);
  EXPECT_EQ(base.num_layers, 8u);
  EXPECT_EQ(base.emb_dim, 64u);
  EXPECT_EQ(base.num_heads, 4u);
  EXPECT_EQ(make_config("small", 16).num_layers, 4u);
  EXPECT_EQ(make_config("large", 16).emb_dim, 128u);
  EXPECT_EQ(make_config("huge", 16).num_heads, 16u);
}

TEST(ViTConfig, ParameterCountsAtN256RoundToPublishedSizes) {
  // Published sizes are rounded to three significant figures.
  EXPECT_EQ(parameter_count(make_config("small", 16)), 53218u);     // 53.2K
  EXPECT_EQ(parameter_count(make_config("base", 16)), 404674u);     // 405K
  EXPECT_EQ(parameter_count(make_config("large", 16)), 2388866u);   // 2.39M
  EXPECT_EQ(parameter_count(make_config("huge", 16)), 12655362u);   // 12.7M
}

TEST(ViTConfig, ParameterCountMatchesLayout) {
  for (const auto& p : arch_presets()) {
    const ViTConfig c = make_config(p.name, 8);
    std::size_t total = 0;
    for (const auto& t : tensor_layout(c)) total += t.elements();
    EXPECT_EQ(parameter_count(c), total) << p.name;
  }
}

TEST(ViTConfig, DefaultPatchSize) {
  EXPECT_EQ(default_patch_size(8), 1u);
  EXPECT_EQ(default_patch_size(16), 2u);
  EXPECT_EQ(default_patch_size(32), 2u);
  EXPECT_THROW(default_patch_size(4), ConfigError);
  EXPECT_THROW(default_patch_size(12), ConfigError);
  EXPECT_EQ(make_config("small", 4, 2).patch_size, 2u);
}

TEST(ViTConfig, Errors) {
  EXPECT_THROW(make_config("tiny", 16), ConfigError);
  try {
    make_config("tiny", 16);
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("small, base, large, huge"), std::string::npos);
  }
  EXPECT_THROW(make_config("base", 16, 3), ConfigError);
  EXPECT_THROW(image_side_for(250), ConfigError);
  EXPECT_EQ(image_side_for(256), 16u);
}

// ---- forward pass ----------------------------------------------------------

TEST(Forward, MatchesIndependentReference) {
  Gen gen(41);
  for (const auto& [arch, side, patch] : {std::tuple{"small", 8u, 1u}, std::tuple{"small", 8u, 2u},
                                          std::tuple{"base", 8u, 2u}, std::tuple{"large", 4u, 2u}}) {
    const ViTConfig c = make_config(arch, side, patch);
    const ViTWeights w = random_init(c, gen.seed());
    const std::vector<double> image = gen.normals(c.pixels());
    const auto out = forward<double>(w, image);
    const auto ref = testing::reference_forward(c, testing::tensors_by_name(w), image);
    for (std::size_t k = 0; k < c.num_classes; ++k) EXPECT_NEAR(out.logits[k], ref.logits[k], 1e-10);
    for (std::size_t l = 0; l < c.num_layers; ++l)
      for (std::size_t h = 0; h < c.num_heads; ++h) {
        const Matrix<double>& a = out.at(l, h, c.num_heads);
        for (std::size_t i = 0; i < c.num_tokens(); ++i)
          for (std::size_t j = 0; j < c.num_tokens(); ++j) ASSERT_NEAR(a(i, j), ref.attn[l][h][i][j], 1e-12);
      }
    const auto map = attention_map<double>(w, image);
    for (std::size_t i = 0; i < c.pixels(); ++i) EXPECT_NEAR(map[i], ref.attention_map[i], 1e-10);
  }
}

TEST(Forward, ZeroWeightsGiveUniformAttention) {
  const ViTConfig c = make_config("small", 8, 2);
  const ViTWeights w = zero_weights(c);
  Gen gen(42);
  const auto out = forward<double>(w, gen.normals(c.pixels()));
  for (const auto& a : out.attn)
    for (double v : a.data()) EXPECT_NEAR(v, 1.0 / c.num_tokens(), 1e-15);
}

TEST(Forward, DualValuesAreBitIdentical) {
  Gen gen(43);
  const ViTConfig c = make_config("base", 8, 2);
  const ViTWeights w = random_init(c, 5);
  const std::vector<double> image = gen.normals(c.pixels());
  std::vector<Dual> dual(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) dual[i] = {image[i], gen.normal()};
  const auto real = forward<double>(w, image);
  const auto lifted = forward<Dual>(w, dual);
  for (std::size_t k = 0; k < real.logits.size(); ++k) EXPECT_EQ(lifted.logits[k].value, real.logits[k]);
  for (std::size_t m = 0; m < real.attn.size(); ++m)
    for (std::size_t i = 0; i < real.attn[m].size(); ++i)
      ASSERT_EQ(lifted.attn[m].data()[i].value, real.attn[m].data()[i]);
  const auto map = attention_map<double>(w, image);
  const auto dmap = attention_map<Dual>(w, dual);
  for (std::size_t i = 0; i < map.size(); ++i) EXPECT_EQ(dmap[i].value, map[i]);
}

TEST(Forward, ShapeMismatchThrows) {
  const ViTWeights w = random_init(make_config("small", 8), 1);
  EXPECT_THROW(forward<double>(w, std::vector<double>(63)), ConfigError);
}

TEST(RandomInit, DeterministicAndSeedSensitive) {
  const ViTConfig c = make_config("small", 8);
  const ViTWeights a = random_init(c, 7), b = random_init(c, 7), d = random_init(c, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, d);
  for (const Matrix<double>* t : tensor_slots(a))
    for (double v : t->data()) ASSERT_EQ(static_cast<double>(static_cast<float>(v)), v);
  EXPECT_EQ(a.layers[0].ln1_gamma.data(), std::vector<double>(c.emb_dim, 1.0));
  EXPECT_EQ(a.final_beta.data(), std::vector<double>(c.emb_dim, 0.0));
}

// ---- weight files ------------------------------------------------------------

class WeightFile : public ::testing::Test {
 protected:
  void SetUp() override {
    path_ = fs::temp_directory_path() /
            ("vitsi_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + ".vitw");
  }
  void TearDown() override { fs::remove(path_); }

  std::string bytes() const {
    std::ifstream in(path_, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  void put(const std::string& data) const {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    out << data;
  }

  fs::path path_;
};

TEST_F(WeightFile, RoundTripIsBitExact) {
  const ViTConfig c = make_config("base", 8);
  const ViTWeights w = random_init(c, 3);
  save_weights(w, path_);
  EXPECT_EQ(load_weights(path_, c), w);
}

TEST_F(WeightFile, SameSeedGivesIdenticalBytes) {
  const ViTConfig c = make_config("small", 8);
  save_weights(random_init(c, 9), path_);
  const std::string first = bytes();
  save_weights(random_init(c, 9), path_);
  EXPECT_EQ(bytes(), first);
  EXPECT_EQ(first.substr(0, 4), "VITW");
}

TEST_F(WeightFile, TruncatedDataNamesTensor) {
  const ViTConfig c = make_config("small", 8);
  save_weights(random_init(c, 1), path_);
  put(bytes().substr(0, bytes().size() - 4));
  try {
    load_weights(path_, c);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("head.bias"), std::string::npos) << e.what();
  }
}

TEST_F(WeightFile, BadMagicVersionAndShape) {
  const ViTConfig c = make_config("small", 8);
  save_weights(random_init(c, 1), path_);
  const std::string good = bytes();

  std::string bad = good;
  bad[0] = 'X';
  put(bad);
  EXPECT_THROW(load_weights(path_, c), LoadError);

  bad = good;
  bad[4] = 9;
  put(bad);
  EXPECT_THROW(load_weights(path_, c), LoadError);

  put(good);
  EXPECT_THROW(load_weights(path_, make_config("base", 8)), LoadError);
  EXPECT_THROW(load_weights(path_, make_config("small", 16)), LoadError);
  EXPECT_THROW(load_weights(path_ / "missing", c), LoadError);
}

// ---- image text ------------------------------------------------------------------

TEST(ImageText, ParsesAndRoundTrips) {
  EXPECT_EQ(parse_image_text("1\n-2.5\r\n\n+3e-1\n"), (std::vector<double>{1.0, -2.5, 0.3}));
  Gen gen(44);
  const std::vector<double> image = gen.normals(64);
  std::ostringstream out;
  write_image_text(out, image);
  EXPECT_EQ(parse_image_text(out.str()), image);
}

TEST(ImageText, ErrorNamesByteOffset) {
  try {
    parse_image_text("0.5\n1.5\nabc\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("byte offset 8"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_image_text("1.0 2.0\n"), ParseError);
  EXPECT_THROW(read_image_file("/nonexistent/image.txt"), ParseError);
}

// ---- attention map ----------------------------------------------------------------

TEST(Rollout, UniformSingleLayer) {
  const std::size_t tokens = 5;
  std::vector<Matrix<double>> attn{Matrix<double>(tokens, tokens, std::vector<double>(tokens * tokens, 1.0 / tokens))};
  const auto r = rollout<double>(attn, 1, 1);
  ASSERT_EQ(r.size(), tokens - 1);
  for (double v : r) EXPECT_NEAR(v, 1.0 / tokens, 1e-15);
}

TEST(Rollout, MatchesNaiveProduct) {
  Gen gen(45);
  const std::size_t tokens = 6, layers = 2, heads = 2;
  std::vector<Matrix<double>> attn;
  for (std::size_t m = 0; m < layers * heads; ++m) {
    Matrix<double> a(tokens, tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < tokens; ++j) s += (a(i, j) = gen.uniform(0.0, 1.0));
      for (std::size_t j = 0; j < tokens; ++j) a(i, j) /= s;
    }
    attn.push_back(a);
  }
  std::vector<std::vector<double>> prod(tokens, std::vector<double>(tokens, 0.0));
  for (std::size_t i = 0; i < tokens; ++i) prod[i][i] = 1.0;
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<std::vector<double>> f(tokens, std::vector<double>(tokens));
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t j = 0; j < tokens; ++j)
        f[i][j] = (attn[l * heads](i, j) + attn[l * heads + 1](i, j)) / 2.0 + (i == j ? 1.0 : 0.0);
    std::vector<std::vector<double>> next(tokens, std::vector<double>(tokens, 0.0));
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t k = 0; k < tokens; ++k)
        for (std::size_t j = 0; j < tokens; ++j) next[i][j] += prod[i][k] * f[k][j];
    prod = next;
  }
  const auto r = rollout<double>(attn, layers, heads);
  for (std::size_t j = 1; j < tokens; ++j) EXPECT_NEAR(r[j - 1], prod[0][j], 1e-10);
}

TEST(Upsample, IdentityConstantAndHandExample) {
  Gen gen(46);
  const Matrix<double> m = gen.matrix(4, 4);
  EXPECT_EQ(upsample_bilinear(m, 4), m);
  const Matrix<double> c(3, 3, std::vector<double>(9, 0.7));
  const Matrix<double> cu = upsample_bilinear(c, 8);
  for (double v : cu.data()) EXPECT_NEAR(v, 0.7, 1e-15);

  const Matrix<double> x(2, 2, {0, 1, 1, 0});
  const Matrix<double> up = upsample_bilinear(x, 4);
  const double t = 1.0 / 3.0;
  const double expected[4][4] = {{0, t, 2 * t, 1},
                                 {t, 4.0 / 9, 5.0 / 9, 2 * t},
                                 {2 * t, 5.0 / 9, 4.0 / 9, t},
                                 {1, 2 * t, t, 0}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(up(i, j), expected[i][j], 1e-15);
}

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_minmax(Matrix<double>(1, 2, {2, 4})), (std::vector<double>{0, 1}));
  EXPECT_EQ(normalize_minmax(Matrix<double>(2, 2, std::vector<double>(4, 3.0))), std::vector<double>(4, 0.0));
  Gen gen(47);
  for (int i = 0; i < 50; ++i) {
    const auto v = normalize_minmax(gen.matrix(3, 5));
    EXPECT_EQ(*std::min_element(v.begin(), v.end()), 0.0);
    EXPECT_EQ(*std::max_element(v.begin(), v.end()), 1.0);
  }
}

TEST(Threshold, StrictInequality) {
  const std::vector<double> s{0.0, 0.7, 1.0};
  EXPECT_EQ(threshold_region(s, 0.6).pixels, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(threshold_region(s, 0.7).pixels, (std::vector<std::size_t>{2}));
  const std::vector<double> low{0.1, 0.6, 0.2};
  const AttentionRegion empty = threshold_region(low, 0.6);
  EXPECT_TRUE(empty.empty());
  EXPECT_FALSE(empty.proper());
  EXPECT_THROW(threshold_region(s, 0.0), ConfigError);
  EXPECT_THROW(threshold_region(s, 1.0), ConfigError);
}

TEST(AttentionCsv, OneRowPerPixel) {
  const std::vector<double> s{0.0, 0.7, 1.0, 0.2};
  std::ostringstream out;
  write_attention_csv(out, s, threshold_region(s, 0.6));
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "index,score,in_region");
  EXPECT_EQ(lines[2].substr(0, 2), "1,");
  EXPECT_EQ(lines[2].back(), '1');
  EXPECT_EQ(lines[4].back(), '0');
}

TEST(AttentionMap, RangeAndDeterminism) {
  Gen gen(48);
  const ViTWeights w = random_init(make_config("small", 8, 2), 2);
  const std::vector<double> image = gen.normals(64);
  const auto a = attention_map<double>(w, image), b = attention_map<double>(w, image);
  EXPECT_EQ(a, b);
  EXPECT_EQ(*std::min_element(a.begin(), a.end()), 0.0);
  EXPECT_EQ(*std::max_element(a.begin(), a.end()), 1.0);
}

}  // namespace
}  // namespace vitsi

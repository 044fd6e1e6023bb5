// vitsi: selective p-values for ViT attention regions.
//
// Exit codes: 0 success, 2 usage, 3 data error, 4 test skipped because the
// attention region is empty or the whole image.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "vitsi/attention_map.hpp"
#include "vitsi/errors.hpp"
#include "vitsi/experiments.hpp"
#include "vitsi/image_io.hpp"
#include "vitsi/selective.hpp"
#include "vitsi/vit.hpp"
#include "vitsi/weights_io.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitSkipped = 4;
constexpr const char* kWeightsEnv = "VITSI_WEIGHTS_DIR";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string arch = "base";
  std::size_t n = 256;
  std::optional<std::size_t> patch;
  std::string weights;

  vitsi::ViTConfig config() const { return vitsi::make_config(arch, vitsi::image_side_for(n), patch); }
};

struct GridFlags {
  std::string mode = "adaptive";
  double half_width = 0.0;
  double eps_min = 1e-4;
  double eps_max = 0.2;
  double fixed_step = 1e-3;

  vitsi::GridSearchConfig config() const {
    vitsi::GridSearchConfig g;
    g.mode = vitsi::parse_grid_mode(mode);
    g.half_width = half_width;
    g.eps_min = eps_min;
    g.eps_max = eps_max;
    g.fixed_step = fixed_step;
    g.validate();
    return g;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& m, bool with_weights) {
  cmd->add_option("--arch", m.arch, "Architecture: small, base, large, huge")->capture_default_str();
  cmd->add_option("--image-size,-n", m.n, "Pixel count n (a perfect square)")->capture_default_str();
  cmd->add_option("--patch-size", m.patch, "Patch side override (default min(2, sqrt(n)/8))");
  if (with_weights) {
    cmd->add_option("--weights,-w", m.weights,
                    std::string("VITW weight file; relative paths also resolve under $") + kWeightsEnv +
                        ", default $" + kWeightsEnv + "/<arch>-<n>.vitw");
  }
}

void add_grid_flags(CLI::App* cmd, GridFlags& g) {
  cmd->add_option("--grid", g.mode, "Grid mode: adaptive, fixed, combination")->capture_default_str();
  cmd->add_option("--S", g.half_width, "Scan half-width S")->default_str("10+|z_obs|");
  cmd->add_option("--eps-min", g.eps_min, "Minimum adaptive step")->capture_default_str();
  cmd->add_option("--eps-max", g.eps_max, "Maximum adaptive step")->capture_default_str();
  cmd->add_option("--fixed-step", g.fixed_step, "Step of the fixed grid")->capture_default_str();
}

fs::path default_weight_path(const ModelFlags& m) {
  const char* dir = std::getenv(kWeightsEnv);
  if (!dir || !*dir) return {};
  return fs::path(dir) / (m.arch + "-" + std::to_string(m.n) + ".vitw");
}

fs::path resolve_weights(const ModelFlags& m) {
  if (m.weights.empty()) {
    fs::path p = default_weight_path(m);
    if (p.empty()) throw UsageError(std::string("--weights is required when $") + kWeightsEnv + " is unset");
    return p;
  }
  fs::path p(m.weights);
  const char* dir = std::getenv(kWeightsEnv);
  if (!fs::exists(p) && p.is_relative() && dir && *dir && fs::exists(fs::path(dir) / p)) return fs::path(dir) / p;
  return p;
}

vitsi::ViTWeights load_model(const ModelFlags& m) { return vitsi::load_weights(resolve_weights(m), m.config()); }

std::vector<double> load_image(const std::string& path, std::size_t n) {
  std::vector<double> image = vitsi::read_image_file(path);
  if (image.size() != n) {
    throw vitsi::ParseError(path + ": expected " + std::to_string(n) + " pixels, found " +
                            std::to_string(image.size()));
  }
  return image;
}

template <typename T>
std::vector<T> split_list(const std::string& text, T (*parse)(std::string_view)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse(item));
  }
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

double parse_double(std::string_view s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(s), &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError("not a number: '" + std::string(s) + "'");
  }
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw vitsi::ParseError("cannot open " + out_path + " for writing");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Model temporaries are a few hundred KB; keep them off mmap so every
  // forward pass does not pay for fresh page faults.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif

  CLI::App app{"Selective inference for Vision Transformer attention regions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vitsi 0.1.0");

  // gen-weights
  ModelFlags gw;
  std::uint64_t gw_seed = 0;
  std::string gw_out;
  auto* gen = app.add_subcommand("gen-weights", "Write random-init weights (deterministic per seed)");
  add_model_flags(gen, gw, false);
  gen->add_option("--seed", gw_seed, "Initialization seed")->capture_default_str();
  gen->add_option("--out,-o", gw_out, std::string("Output path (default $") + kWeightsEnv + "/<arch>-<n>.vitw)");

  // test-image
  ModelFlags ti;
  GridFlags ti_grid;
  std::string ti_image, ti_out, ti_variance = "known", ti_cov = "identity";
  double ti_tau = vitsi::kDefaultTau, ti_rho = 0.5;
  std::size_t ti_perms = 1000;
  bool ti_permutation = false;
  std::uint64_t ti_seed = 0;
  auto* test = app.add_subcommand("test-image", "Selective p-value for one image, printed as JSON");
  add_model_flags(test, ti, true);
  test->add_option("--image,-i", ti_image, "Image file: one float per line, row-major")->required();
  test->add_option("--tau", ti_tau, "Attention threshold")->capture_default_str();
  test->add_option("--covariance", ti_cov, "Noise covariance: identity or power")->capture_default_str();
  test->add_option("--rho", ti_rho, "Power-correlation base")->capture_default_str();
  test->add_option("--variance", ti_variance, "known, or estimated (sample variance of the image)")
      ->capture_default_str();
  test->add_flag("--permutation-test", ti_permutation, "Also report the permutation-test p-value");
  test->add_option("--permutations", ti_perms, "Permutation draws B")->capture_default_str();
  test->add_option("--seed", ti_seed, "Seed for the permutation test and the output record")->capture_default_str();
  test->add_option("--out,-o", ti_out, "JSON output path (default stdout)");
  add_grid_flags(test, ti_grid);

  // attention-map
  ModelFlags am;
  std::string am_image, am_out;
  double am_tau = vitsi::kDefaultTau;
  auto* amap = app.add_subcommand("attention-map", "Dump the attention map and thresholded region as CSV");
  add_model_flags(amap, am, true);
  amap->add_option("--image,-i", am_image, "Image file")->required();
  amap->add_option("--tau", am_tau, "Attention threshold")->capture_default_str();
  amap->add_option("--out,-o", am_out, "CSV output path (default stdout)");

  // simulate
  ModelFlags sm;
  GridFlags sm_grid;
  std::string sm_kind, sm_methods = "adaptive,naive,bonferroni", sm_cov = "identity", sm_csv, sm_json,
                       sm_deltas = "1,2,3,4", sm_modes = "adaptive,fixed,combination";
  std::size_t sm_images = 1000, sm_workers = 1, sm_perms = 1000;
  std::uint64_t sm_seed = 0, sm_weight_seed = 0;
  double sm_tau = vitsi::kDefaultTau, sm_rho = 0.5;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo type-I error, power or timing study");
  sim->add_option("kind", sm_kind, "type1, power or timing")->required()->check(
      CLI::IsMember({"type1", "power", "timing"}));
  add_model_flags(sim, sm, true);
  sim->add_option("--weight-seed", sm_weight_seed, "Random-init seed used when no weights are given")
      ->capture_default_str();
  sim->add_option("--images", sm_images, "Images per setting")->capture_default_str();
  sim->add_option("--seed", sm_seed, "Master seed; image i uses a stream derived from (seed, i)")
      ->capture_default_str();
  sim->add_option("--workers", sm_workers, "Worker threads")->capture_default_str();
  sim->add_option("--methods", sm_methods, "Comma list of adaptive, naive, bonferroni, permutation")
      ->capture_default_str();
  sim->add_option("--permutations", sm_perms, "Permutations per test (B)")->capture_default_str();
  sim->add_option("--covariance", sm_cov, "identity, power or estimated")->capture_default_str();
  sim->add_option("--rho", sm_rho, "Power-correlation base")->capture_default_str();
  sim->add_option("--tau", sm_tau, "Attention threshold")->capture_default_str();
  sim->add_option("--deltas", sm_deltas, "Signal magnitudes for power")->capture_default_str();
  sim->add_option("--modes", sm_modes, "Grid modes for timing")->capture_default_str();
  sim->add_option("--csv", sm_csv, "Per-test CSV output path (default stdout)");
  sim->add_option("--summary", sm_json, "JSON summary output path (default stderr)");
  add_grid_flags(sim, sm_grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const vitsi::ViTConfig config = gw.config();
      fs::path out = gw_out.empty() ? default_weight_path(gw) : fs::path(gw_out);
      if (out.empty()) throw UsageError(std::string("--out is required when $") + kWeightsEnv + " is unset");
      vitsi::save_weights(vitsi::random_init(config, gw_seed), out);
      std::cerr << "wrote " << out.string() << " (" << vitsi::parameter_count(config) << " parameters)\n";
      return 0;
    }

    if (test->parsed()) {
      if (ti_variance != "known" && ti_variance != "estimated") {
        throw UsageError("--variance must be known or estimated");
      }
      if (ti_variance == "estimated" && test->count("--covariance") > 0 && ti_cov != "identity") {
        throw UsageError("--variance estimated assumes an isotropic covariance; drop --covariance");
      }
      if (ti_cov != "identity" && ti_cov != "power") throw UsageError("--covariance must be identity or power");
      const vitsi::GridSearchConfig grid = ti_grid.config();
      const vitsi::ViTWeights weights = load_model(ti);
      std::vector<double> image = load_image(ti_image, ti.n);
      vitsi::Covariance cov = ti_variance == "estimated" ? vitsi::Covariance::estimated_from(image)
                              : ti_cov == "power"       ? vitsi::Covariance::power_correlation(ti.n, ti_rho)
                                                        : vitsi::Covariance::identity(ti.n);
      const std::string cov_label = ti_variance == "estimated" ? "estimated" : cov.label();
      const vitsi::TestSetup setup = vitsi::make_setup(weights, std::move(image), std::move(cov), ti_tau);
      const vitsi::TestResult result = vitsi::selective_p(setup, weights, ti_tau, grid);
      std::string json = vitsi::test_result_json(result, ti_seed, ti.n, ti.arch, cov_label, ti_tau);
      if (ti_permutation) {
        const auto perm = vitsi::permutation_p(setup, weights, ti_tau, ti_perms, ti_seed);
        std::ostringstream extra;
        extra.precision(17);
        extra << ",\n  \"p_permutation\": " << perm.p << ",\n  \"permutation_redraws\": " << perm.redraws << "\n}";
        json = json.substr(0, json.rfind('}'));
        while (!json.empty() && (json.back() == '\n' || json.back() == ' ')) json.pop_back();
        json += extra.str();
      }
      emit(ti_out, json + "\n");
      return 0;
    }

    if (amap->parsed()) {
      const vitsi::ViTWeights weights = load_model(am);
      const std::vector<double> image = load_image(am_image, am.n);
      const std::vector<double> scores = vitsi::attention_map<double>(weights, image);
      std::ostringstream csv;
      vitsi::write_attention_csv(csv, scores, vitsi::threshold_region(scores, am_tau));
      emit(am_out, csv.str());
      return 0;
    }

    if (sim->parsed()) {
      vitsi::ExperimentConfig cfg;
      cfg.arch = sm.arch;
      cfg.n = sm.n;
      cfg.patch_size = sm.patch;
      cfg.covariance = vitsi::parse_covariance_mode(sm_cov);
      cfg.rho = sm_rho;
      cfg.tau = sm_tau;
      cfg.grid = sm_grid.config();
      cfg.seed = sm_seed;
      cfg.workers = sm_workers;
      cfg.methods = split_list<vitsi::Method>(sm_methods, vitsi::parse_method);
      cfg.permutations = sm_perms;
      if (sm_kind == "timing" && sim->count("--methods") > 0) {
        throw UsageError("timing always runs the selective test; --methods does not apply");
      }
      if (sm_kind != "timing" && sim->count("--modes") > 0) throw UsageError("--modes applies to timing only");
      if (sm_kind != "power" && sim->count("--deltas") > 0) throw UsageError("--deltas applies to power only");
      if (sm_kind == "timing" && sim->count("--grid") > 0) throw UsageError("timing takes --modes, not --grid");

      const bool have_weights = !sm.weights.empty() || !default_weight_path(sm).empty();
      if (sm_kind == "power" && !have_weights) {
        std::cerr << "warning: no --weights given; random-init weights carry no signal detector, so power "
                     "will be near trivial\n";
      }
      const vitsi::ViTWeights weights =
          have_weights ? load_model(sm) : vitsi::random_init(sm.config(), sm_weight_seed);

      vitsi::TrialBatch batch;
      std::ostringstream summary;
      if (sm_kind == "timing") {
        cfg.methods = {vitsi::Method::kAdaptive};
        batch = vitsi::run_timing(weights, cfg, split_list<vitsi::GridMode>(sm_modes, vitsi::parse_grid_mode),
                                  sm_images);
        summary << "{\n  \"config\": \"" << batch.fingerprint << "\",\n  \"modes\": {";
        const auto rows = vitsi::summarize_timing(batch);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          summary << (i ? "," : "") << "\n    \"" << rows[i].mode << "\": {\"images\": " << rows[i].images
                  << ", \"mean_model_evals\": " << rows[i].mean_evals
                  << ", \"mean_wall_time_s\": " << rows[i].mean_wall_time_s << "}";
        }
        summary << "\n  },\n  \"skipped_count\": " << vitsi::skipped_count(batch) << "\n}\n";
      } else if (sm_kind == "power") {
        const auto deltas = split_list<double>(sm_deltas, parse_double);
        batch = vitsi::run_power(weights, cfg, deltas, sm_images);
        summary << "[\n";
        for (std::size_t k = 0; k < deltas.size(); ++k) {
          const double d = deltas[k];
          const auto rates = vitsi::summarize(batch, [d](const vitsi::TrialRecord& r) { return r.delta == d; });
          const auto skipped = static_cast<std::size_t>(std::count_if(
              batch.records.begin(), batch.records.end(),
              [d](const vitsi::TrialRecord& r) { return r.delta == d && !r.ok(); }));
          std::string js = vitsi::summary_json(cfg, rates, skipped);
          summary << (k ? ",\n" : "") << "{\"delta\": " << d << ", \"summary\": " << js << "}";
        }
        summary << "\n]\n";
      } else {
        batch = vitsi::run_type1(weights, cfg, sm_images);
        summary << vitsi::summary_json(cfg, vitsi::summarize(batch), vitsi::skipped_count(batch)) << "\n";
      }

      std::ostringstream csv;
      vitsi::write_trials_csv(csv, batch);
      emit(sm_csv, csv.str());
      if (sm_json.empty()) {
        std::cerr << summary.str();
      } else {
        emit(sm_json, summary.str());
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const vitsi::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const vitsi::DegenerateRegionError& e) {
    std::cerr << "test skipped: " << e.what() << "\n";
    return kExitSkipped;
  } catch (const vitsi::LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const vitsi::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const vitsi::CovarianceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

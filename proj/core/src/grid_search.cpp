#include <algorithm>
#include <cmath>
#include <limits>

#include "vitsi/errors.hpp"
#include "vitsi/selective.hpp"

namespace vitsi {

double raw_step_width(std::span<const Dual> f, bool in_region, double z, double z_obs,
                      const GridSearchConfig& cfg) {
  const bool far = std::abs(z - z_obs) > cfg.near_radius;
  bool found = false;
  double best = 0.0;
  for (const Dual& fi : f) {
    const double v = fi.value;
    if (in_region ? !(v < 0.0) : !(v >= 0.0)) continue;
    double lipschitz = cfg.near_lipschitz;
    if (far) {
      // Only constraints moving toward zero can change sign locally; this
      // also drops f' = 0.
      if (!(v * fi.deriv < 0.0)) continue;
      lipschitz = cfg.far_lipschitz_factor * std::abs(fi.deriv);
    }
    const double r = std::abs(v) / lipschitz;
    if (!found) {
      best = r;
      found = true;
    } else {
      best = in_region ? std::min(best, r) : std::max(best, r);
    }
  }
  return found ? best : std::numeric_limits<double>::infinity();
}

double adaptive_step(std::span<const Dual> f, bool in_region, double z, double z_obs,
                     const GridSearchConfig& cfg) {
  return std::min(cfg.eps_max, std::max(raw_step_width(f, in_region, z, z_obs, cfg), cfg.eps_min));
}

bool TruncatedRegion::contains(double z) const {
  return std::any_of(intervals.begin(), intervals.end(), [z](const RealInterval& iv) { return iv.contains(z); });
}

namespace {

std::vector<RealInterval> merge(std::vector<RealInterval> parts) {
  std::erase_if(parts, [](const RealInterval& iv) { return !(iv.hi > iv.lo); });
  std::sort(parts.begin(), parts.end(), [](const RealInterval& x, const RealInterval& y) { return x.lo < y.lo; });
  std::vector<RealInterval> out;
  for (const RealInterval& iv : parts) {
    if (!out.empty() && iv.lo <= out.back().hi) {
      out.back().hi = std::max(out.back().hi, iv.hi);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

}  // namespace

RegionSearch identify_region(const LineObjective& objective, double z_obs, const GridSearchConfig& cfg,
                             bool keep_trace) {
  cfg.validate();
  const double s = cfg.scan_half_width(z_obs);
  RegionSearch out;
  std::vector<double> fv;
  std::vector<Dual> fd;

  auto member_at = [&](double z) {
    objective.values(z, fv);
    ++out.evaluations;
    return all_negative(fv);
  };
  // Boundary between a and b where membership(a) == a_member != membership(b).
  // Probes lie on the lattice 2^k Z with 2^k <= refine_tol, so any two brackets of the
  // same crossing end in the same lattice cell and report bit-identical boundaries.
  const int k = std::ilogb(cfg.refine_tol);
  auto bisect = [&](double a, double b, bool a_member) {
    for (int it = 0; it < cfg.refine_max_iter; ++it) {
      const double lo = std::floor(std::ldexp(a, -k)) + 1.0;
      const double hi = std::ceil(std::ldexp(b, -k)) - 1.0;
      if (lo > hi) break;
      const double mid = std::ldexp(std::clamp(std::round(std::ldexp(0.5 * (a + b), -k)), lo, hi), k);
      (member_at(mid) == a_member ? a : b) = mid;
    }
    return 0.5 * (a + b);
  };

  objective.values_and_derivatives(z_obs, fd);
  ++out.evaluations;
  if (!all_negative(fd)) {
    throw ConsistencyError("observed statistic z_obs = " + std::to_string(z_obs) +
                           " is outside its own truncation region");
  }
  const double d_obs = std::min(cfg.eps_max, raw_step_width(fd, true, z_obs, z_obs, cfg));
  out.region.guaranteed = {z_obs - d_obs, z_obs + d_obs};

  std::vector<RealInterval> parts;
  double run_start = 0.0;
  double prev_z = 0.0;
  bool prev_member = false;
  std::size_t j = 0;
  for (double z = -s; z < s;) {
    GridPoint p{z, false, 0.0, std::numeric_limits<double>::quiet_NaN()};
    switch (cfg.mode) {
      case GridMode::kAdaptive:
        objective.values_and_derivatives(z, fd);
        ++out.evaluations;
        p.member = all_negative(fd);
        p.width = raw_step_width(fd, p.member, z, z_obs, cfg);
        p.step = std::min(cfg.eps_max, std::max(p.width, cfg.eps_min));
        break;
      case GridMode::kFixed:
        p.member = member_at(z);
        p.step = cfg.fixed_step;
        break;
      case GridMode::kCombination:
        p.member = member_at(z);
        p.step = std::abs(z - z_obs) < cfg.near_radius ? cfg.combination_near_step : cfg.combination_far_step;
        break;
    }

    if (j == 0) {
      run_start = z;
    } else if (p.member != prev_member) {
      const double boundary = bisect(prev_z, z, prev_member);
      if (prev_member) parts.push_back({run_start, boundary});
      run_start = boundary;
    }
    prev_z = z;
    prev_member = p.member;
    if (keep_trace) out.trace.push_back(p);
    ++j;
    // Index-based positions keep a long fixed walk free of accumulated drift.
    z = cfg.mode == GridMode::kFixed ? -s + static_cast<double>(j) * cfg.fixed_step : z + p.step;
  }
  if (j > 0 && prev_member) parts.push_back({run_start, s});
  parts.push_back(out.region.guaranteed);

  out.region.intervals = merge(std::move(parts));
  if (!out.region.contains(z_obs)) {
    throw ConsistencyError("z_obs fell outside the identified truncation region");
  }
  return out;
}

}  // namespace vitsi

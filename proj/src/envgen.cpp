#include "atl/envgen.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace atl {

Eigen::Index TruthMap::valid_count() const { return values.array().isFinite().count(); }

char class_letter(DependenceClass c) {
  switch (c) {
    case DependenceClass::High: return 'H';
    case DependenceClass::Medium: return 'M';
    case DependenceClass::Low: return 'L';
  }
  return '?';
}

std::optional<DependenceClass> class_from_letter(char c) {
  switch (c) {
    case 'H': case 'h': return DependenceClass::High;
    case 'M': case 'm': return DependenceClass::Medium;
    case 'L': case 'l': return DependenceClass::Low;
    default: return std::nullopt;
  }
}

double bump_sum(std::span<const Bump> bumps, const Location& at) {
  double v = 0.0;
  for (const auto& b : bumps) v += b.amplitude * std::exp(-(at - b.center).squaredNorm() / (2 * b.width * b.width));
  return v;
}

TruthMap generate_qoi(const Region& region, std::uint64_t seed, const BumpConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(cfg.min_bumps, cfg.max_bumps);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> amplitude(cfg.amplitude_min, cfg.amplitude_max);
  std::uniform_real_distribution<double> width(cfg.width_min_frac, cfg.width_max_frac);

  TruthMap map;
  map.grid = GridSpec(region, cfg.grid_rows, cfg.grid_cols);
  const int k = count(rng);
  const double side = std::min(region.width(), region.height());
  for (int i = 0; i < k; ++i) {
    Bump b;
    b.center = region.min_corner + Location(unit(rng) * region.width(), unit(rng) * region.height());
    b.amplitude = amplitude(rng) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    b.width = width(rng) * side;
    map.bumps.push_back(b);
  }
  map.values.resize(cfg.grid_rows, cfg.grid_cols);
  for (Eigen::Index r = 0; r < map.grid.rows; ++r)
    for (Eigen::Index c = 0; c < map.grid.cols; ++c) map.values(r, c) = bump_sum(map.bumps, map.grid.cell_center(r, c));
  return map;
}

TruthMap scale_map(const TruthMap& map, double factor) {
  TruthMap out = map;
  out.values *= factor;
  for (auto& b : out.bumps) b.amplitude *= factor;
  return out;
}

TruthMap derive_prior(const TruthMap& qoi, DependenceClass cls, std::uint64_t seed, const BumpConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (cls) {
    case DependenceClass::High: {
      double eta = 0.0;
      do eta = normal(rng);
      while (std::abs(eta) <= 0.1);
      return scale_map(qoi, eta);
    }
    case DependenceClass::Medium: {
      TruthMap out = qoi;
      out.bumps.clear();
      for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c) out.values(r, c) += 0.2 * normal(rng);
      return out;
    }
    case DependenceClass::Low: {
      BumpConfig same = cfg;
      same.grid_rows = qoi.rows();
      same.grid_cols = qoi.cols();
      return generate_qoi(qoi.grid.region, derive_seed(seed, 0x4c4f57), same);
    }
  }
  throw std::invalid_argument("derive_prior: unknown class");
}

std::vector<Location> lattice_points(const Region& region, int n_per_side) {
  if (n_per_side < 1) throw std::invalid_argument("lattice: n_per_side must be >= 1");
  std::vector<Location> out;
  out.reserve(static_cast<std::size_t>(n_per_side * n_per_side));
  const double dx = region.width() / n_per_side;
  const double dy = region.height() / n_per_side;
  for (int j = 0; j < n_per_side; ++j)
    for (int i = 0; i < n_per_side; ++i)
      out.emplace_back(region.min_corner.x() + dx * (i + 0.5), region.min_corner.y() + dy * (j + 0.5));
  return out;
}

std::vector<Observation> extract_prior_samples(const TruthMap& map, int n_per_side, QuantityId quantity) {
  std::vector<Observation> out;
  for (const auto& p : lattice_points(map.grid.region, n_per_side)) {
    const double v = measure(map, p);
    if (std::isfinite(v)) out.push_back({quantity, p, v});
  }
  return out;
}

double measure(const TruthMap& map, const Location& at) {
  const auto& g = map.grid;
  if (!at.allFinite() || !g.region.contains(at)) throw std::invalid_argument("measure: location outside region");
  // Continuous cell coordinates with centres at integers.
  const double fc = (at.x() - g.region.min_corner.x()) / g.cell_width() - 0.5;
  const double fr = (g.region.max_corner.y() - at.y()) / g.cell_height() - 0.5;
  const double cc = std::clamp(fc, 0.0, static_cast<double>(g.cols - 1));
  const double rr = std::clamp(fr, 0.0, static_cast<double>(g.rows - 1));
  const auto c0 = static_cast<Eigen::Index>(std::floor(cc));
  const auto r0 = static_cast<Eigen::Index>(std::floor(rr));
  const Eigen::Index c1 = std::min(c0 + 1, g.cols - 1);
  const Eigen::Index r1 = std::min(r0 + 1, g.rows - 1);
  const double tc = cc - static_cast<double>(c0);
  const double tr = rr - static_cast<double>(r0);

  const Eigen::Index rs[4] = {r0, r0, r1, r1};
  const Eigen::Index cs[4] = {c0, c1, c0, c1};
  const double ws[4] = {(1 - tr) * (1 - tc), (1 - tr) * tc, tr * (1 - tc), tr * tc};
  double sum = 0.0, weight = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (ws[k] == 0.0) continue;
    const double v = map.values(rs[k], cs[k]);
    if (!std::isfinite(v)) continue;
    sum += ws[k] * v;
    weight += ws[k];
  }
  if (weight <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sum / weight;
}

}  // namespace atl

#ifndef ATL_ENVGEN_HPP
#define ATL_ENVGEN_HPP

// Synthetic environments: a quantity of interest built from a few Gaussian
// bumps and prior quantities derived from it with controlled dependence.

#include "atl/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace atl {

struct Bump {
  Location center = Location::Zero();
  double amplitude = 0.0;
  double width = 0.0;  // standard deviation, map units
};

/// Gridded field over a region. NaN cells are nodata.
struct TruthMap {
  GridSpec grid;
  Eigen::MatrixXd values;
  /// Generating components, when the map is synthetic.
  std::vector<Bump> bumps;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool valid(Eigen::Index r, Eigen::Index c) const { return std::isfinite(values(r, c)); }
  Eigen::Index valid_count() const;
};

enum class DependenceClass { High, Medium, Low };

char class_letter(DependenceClass c);
std::optional<DependenceClass> class_from_letter(char c);

struct BumpConfig {
  int min_bumps = 3;
  int max_bumps = 5;
  double amplitude_min = 0.5;
  double amplitude_max = 1.5;
  double width_min_frac = 0.08;  // of region side
  double width_max_frac = 0.25;
  Eigen::Index grid_rows = 50;
  Eigen::Index grid_cols = 50;
};

/// Sum of 3-5 randomly placed Gaussian bumps, deterministic in `seed`.
TruthMap generate_qoi(const Region& region, std::uint64_t seed, const BumpConfig& cfg = {});

/// Evaluates a bump sum at a point.
double bump_sum(std::span<const Bump> bumps, const Location& at);

/// Whole-map multiplication by a scalar.
TruthMap scale_map(const TruthMap& map, double factor);

/// High: qoi * eta (|eta| > 0.1). Medium: qoi + 0.2 eta_i per cell.
/// Low: an independent map from the same generator.
TruthMap derive_prior(const TruthMap& qoi, DependenceClass cls, std::uint64_t seed, const BumpConfig& cfg = {});

/// Cell-centred n x n lattice over the region, values read with measure().
std::vector<Observation> extract_prior_samples(const TruthMap& map, int n_per_side, QuantityId quantity = QuantityId(1));

/// Lattice coordinates used by extract_prior_samples.
std::vector<Location> lattice_points(const Region& region, int n_per_side);

/// Bilinear interpolation between cell centres; constant beyond the outer
/// centres. Nodata neighbours are dropped and the weights renormalized.
/// Throws std::invalid_argument outside the region.
double measure(const TruthMap& map, const Location& at);

}  // namespace atl

#endif  // ATL_ENVGEN_HPP

#ifndef ATL_TYPES_HPP
#define ATL_TYPES_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace atl {

/// A point in the plane, in map units (x east, y north).
template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

using Location = Point2<double>;

/// Index of an environmental quantity. Index 0 is always the quantity of interest.
struct QuantityId {
  std::size_t index = 0;

  constexpr QuantityId() = default;
  constexpr explicit QuantityId(std::size_t i) : index(i) {}

  constexpr bool is_qoi() const { return index == 0; }
  friend constexpr bool operator==(QuantityId, QuantityId) = default;
  friend constexpr auto operator<=>(QuantityId, QuantityId) = default;
};

inline constexpr QuantityId kQoi{0};

/// Axis-aligned rectangle.
struct Region {
  Location min_corner = Location(0.0, 0.0);
  Location max_corner = Location(1.0, 1.0);

  Region() = default;
  Region(const Location& lo, const Location& hi) : min_corner(lo), max_corner(hi) {
    if (!lo.allFinite() || !hi.allFinite() || !(hi.x() > lo.x()) || !(hi.y() > lo.y()))
      throw std::invalid_argument("region: max corner must exceed min corner in both axes");
  }

  static Region unit_square() { return {}; }

  double width() const { return max_corner.x() - min_corner.x(); }
  double height() const { return max_corner.y() - min_corner.y(); }
  double diagonal() const { return std::hypot(width(), height()); }
  Location extent() const { return max_corner - min_corner; }
  Location center() const { return 0.5 * (min_corner + max_corner); }

  bool contains(const Location& p) const {
    return p.x() >= min_corner.x() && p.x() <= max_corner.x() && p.y() >= min_corner.y() &&
           p.y() <= max_corner.y();
  }

  Location clamp(const Location& p) const { return p.cwiseMax(min_corner).cwiseMin(max_corner); }
};

/// A regular lattice of cells over a region. Row 0 is the northern edge,
/// matching the row order of gridded raster files.
struct GridSpec {
  Region region;
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;

  GridSpec() = default;
  GridSpec(const Region& r, Eigen::Index nrows, Eigen::Index ncols) : region(r), rows(nrows), cols(ncols) {
    if (nrows < 1 || ncols < 1) throw std::invalid_argument("grid: rows and cols must be >= 1");
  }

  double cell_width() const { return region.width() / static_cast<double>(cols); }
  double cell_height() const { return region.height() / static_cast<double>(rows); }
  Eigen::Index size() const { return rows * cols; }

  Location cell_center(Eigen::Index r, Eigen::Index c) const {
    return {region.min_corner.x() + (static_cast<double>(c) + 0.5) * cell_width(),
            region.max_corner.y() - (static_cast<double>(r) + 0.5) * cell_height()};
  }
};

/// One measurement of one quantity at one location.
struct Observation {
  QuantityId quantity;
  Location location = Location::Zero();
  double value = 0.0;
};

/// Raised when a covariance matrix cannot be factorized even after jitter escalation.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, Eigen::VectorXd parameters = {})
      : std::runtime_error(what), parameters_(std::move(parameters)) {}

  const Eigen::VectorXd& parameters() const { return parameters_; }

 private:
  Eigen::VectorXd parameters_;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), message_(what), line_(line) {}

  std::size_t line() const { return line_; }
  /// Same error with `prefix` (e.g. a file name) prepended; keeps the line.
  ParseError with_context(const std::string& prefix) const { return ParseError(prefix + message_, line_); }

 private:
  std::string message_;
  std::size_t line_;
};

/// Mixes a base seed with a stream tag (splitmix64 finalizer). All derived
/// randomness in the library flows through this so runs are reproducible.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace atl

#endif  // ATL_TYPES_HPP

#ifndef ATL_ACQUISITION_HPP
#define ATL_ACQUISITION_HPP

// Next-sample selection: the expected-improvement-for-global-fit objective
//
//   (mu(x) - y(x*))^2 + alpha * sigma^2(x)
//
// maximized over the region by a particle swarm. x* is the nearest QOI sample.

#include "atl/mtgp.hpp"
#include "atl/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <span>

namespace atl {

struct PsoConfig {
  int particles = 50;
  int iterations = 100;
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  double velocity_cap = 0.2;  // fraction of region extent per axis
};

struct AcquisitionConfig {
  double alpha = 500.0;
  PsoConfig pso;
  std::uint64_t seed = 0;
  /// Also consider prior-quantity samples when looking up x*.
  bool nearest_includes_priors = false;

  void validate() const;
};

/// (mean - nearest)^2 + alpha * variance.
inline double eigf_value(double mean, double nearest_value, double variance, double alpha) {
  const double d = mean - nearest_value;
  return d * d + alpha * variance;
}

/// Index of the sample nearest to `at`; ties go to the lowest index.
std::size_t nearest_sample(std::span<const Observation> samples, const Location& at);

/// EIGF at x, evaluated in the model's standardized QOI units.
double eigf_objective(const TrainedModel& model, const Location& x, std::span<const Observation> qoi_samples,
                      double alpha);

using Objective = std::function<double(const Location&)>;

struct SwarmState {
  Eigen::Matrix2Xd position;
  Eigen::Matrix2Xd velocity;
  Eigen::Matrix2Xd best_position;
  Eigen::VectorXd best_value;
  Location global_best = Location::Zero();
  double global_best_value = 0.0;
  std::mt19937_64 rng;

  Eigen::Index size() const { return position.cols(); }
};

/// Uniform positions in the region, velocities uniform within the cap.
SwarmState init_swarm(const Objective& objective, const Region& region, const PsoConfig& cfg, std::uint64_t seed);

/// One velocity/position update of every particle. Positions that leave the
/// region are reflected back in. The global best never decreases.
void swarm_step(SwarmState& state, const Objective& objective, const Region& region, const PsoConfig& cfg);

/// Runs a full swarm maximization of an arbitrary objective.
Location maximize(const Objective& objective, const Region& region, const PsoConfig& cfg, std::uint64_t seed);

using Feasibility = std::function<bool(const Location&)>;

/// Location in the region with the highest EIGF found by the swarm. When
/// `feasible` is given, infeasible points score -infinity.
Location select_next(const TrainedModel& model, const Region& region, std::span<const Observation> qoi_samples,
                     const AcquisitionConfig& cfg, const Feasibility& feasible = {});

}  // namespace atl

#endif  // ATL_ACQUISITION_HPP

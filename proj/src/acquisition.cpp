#include "atl/acquisition.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace atl {

void AcquisitionConfig::validate() const {
  if (!(alpha >= 0)) throw std::invalid_argument("acquisition: alpha must be >= 0");
  if (pso.particles < 2) throw std::invalid_argument("acquisition: pso.particles must be >= 2");
  if (pso.iterations < 1) throw std::invalid_argument("acquisition: pso.iterations must be >= 1");
  if (!(pso.velocity_cap > 0)) throw std::invalid_argument("acquisition: pso.velocity_cap must be > 0");
}

std::size_t nearest_sample(std::span<const Observation> samples, const Location& at) {
  if (samples.empty()) throw std::invalid_argument("nearest_sample: no samples");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d2 = (samples[i].location - at).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

double eigf_objective(const TrainedModel& model, const Location& x, std::span<const Observation> qoi_samples,
                      double alpha) {
  if (qoi_samples.empty()) throw std::invalid_argument("eigf_objective: need at least one QOI sample");
  const auto& nearest = qoi_samples[nearest_sample(qoi_samples, x)];
  const Posterior post = model.predict_standardized(kQoi, x);
  const double y_star = model.transform(nearest.quantity).standardize(nearest.value);
  return eigf_value(post.mean, y_star, post.variance, alpha);
}

namespace {

Eigen::Vector2d velocity_limit(const Region& region, const PsoConfig& cfg) {
  return cfg.velocity_cap * region.extent();
}

void reflect(Location& p, Eigen::Ref<Eigen::Vector2d> v, const Region& region) {
  for (int axis = 0; axis < 2; ++axis) {
    const double lo = region.min_corner(axis);
    const double hi = region.max_corner(axis);
    if (p(axis) < lo) {
      p(axis) = 2 * lo - p(axis);
      v(axis) = -v(axis);
    } else if (p(axis) > hi) {
      p(axis) = 2 * hi - p(axis);
      v(axis) = -v(axis);
    }
    p(axis) = std::clamp(p(axis), lo, hi);
  }
}

void consider(SwarmState& s, Eigen::Index i, double value) {
  if (value > s.best_value(i)) {
    s.best_value(i) = value;
    s.best_position.col(i) = s.position.col(i);
  }
}

// Index-ordered reduction so the result is independent of evaluation order.
void update_global(SwarmState& s) {
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s.best_value(i) > s.global_best_value) {
      s.global_best_value = s.best_value(i);
      s.global_best = s.best_position.col(i);
    }
}

}  // namespace

SwarmState init_swarm(const Objective& objective, const Region& region, const PsoConfig& cfg, std::uint64_t seed) {
  if (cfg.particles < 1) throw std::invalid_argument("init_swarm: need at least one particle");
  SwarmState s;
  s.rng.seed(seed);
  const Eigen::Index n = cfg.particles;
  s.position.resize(2, n);
  s.velocity.resize(2, n);
  const Eigen::Vector2d vmax = velocity_limit(region, cfg);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      s.position(axis, i) = region.min_corner(axis) + unit(s.rng) * region.extent()(axis);
      s.velocity(axis, i) = (2.0 * unit(s.rng) - 1.0) * vmax(axis);
    }
  }
  s.best_position = s.position;
  s.best_value.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.best_value(i) = objective(s.position.col(i));
  s.global_best = s.best_position.col(0);
  s.global_best_value = s.best_value(0);
  update_global(s);
  return s;
}

void swarm_step(SwarmState& s, const Objective& objective, const Region& region, const PsoConfig& cfg) {
  const Eigen::Vector2d vmax = velocity_limit(region, cfg);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      const double r1 = unit(s.rng);
      const double r2 = unit(s.rng);
      double v = cfg.inertia * s.velocity(axis, i) +
                 cfg.cognitive * r1 * (s.best_position(axis, i) - s.position(axis, i)) +
                 cfg.social * r2 * (s.global_best(axis) - s.position(axis, i));
      s.velocity(axis, i) = std::clamp(v, -vmax(axis), vmax(axis));
    }
    Location p = s.position.col(i) + s.velocity.col(i);
    reflect(p, s.velocity.col(i), region);
    s.position.col(i) = p;
  }
  for (Eigen::Index i = 0; i < s.size(); ++i) consider(s, i, objective(s.position.col(i)));
  update_global(s);
}

Location maximize(const Objective& objective, const Region& region, const PsoConfig& cfg, std::uint64_t seed) {
  SwarmState s = init_swarm(objective, region, cfg, seed);
  for (int it = 0; it < cfg.iterations; ++it) swarm_step(s, objective, region, cfg);
  return s.global_best;
}

Location select_next(const TrainedModel& model, const Region& region, std::span<const Observation> qoi_samples,
                     const AcquisitionConfig& cfg, const Feasibility& feasible) {
  cfg.validate();
  if (qoi_samples.empty()) throw std::invalid_argument("select_next: need at least one QOI sample");
  const Objective objective = [&](const Location& x) {
    if (feasible && !feasible(x)) return -std::numeric_limits<double>::infinity();
    return eigf_objective(model, x, qoi_samples, cfg.alpha);
  };
  return maximize(objective, region, cfg.pso, cfg.seed);
}

}  // namespace atl

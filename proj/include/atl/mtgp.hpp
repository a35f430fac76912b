#ifndef ATL_MTGP_HPP
#define ATL_MTGP_HPP

// Multi-task Gaussian process: hyperparameter training by log marginal
// likelihood and posterior queries per quantity.
//
// Observations are standardized per quantity (zero mean, unit variance)
// before anything else touches them; predictions are mapped back to native
// units on the way out.

#include "atl/kernel.hpp"
#include "atl/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace atl {

/// Pooled multi-task training set. Quantities need not share locations.
class Dataset {
 public:
  explicit Dataset(std::size_t quantity_count = 1);
  Dataset(std::size_t quantity_count, std::vector<Observation> observations);

  void add(const Observation& obs);

  std::size_t quantity_count() const { return quantity_count_; }
  std::size_t size() const { return observations_.size(); }
  bool empty() const { return observations_.empty(); }
  const std::vector<Observation>& observations() const { return observations_; }
  const Observation& operator[](std::size_t i) const { return observations_[i]; }

  std::size_t count(QuantityId q) const;

 private:
  std::size_t quantity_count_;
  std::vector<Observation> observations_;
};

struct Hyperparameters {
  KernelParams<double> kernel;
  double noise_var = 1e-2;

  Eigen::Index quantity_count() const { return kernel.quantity_count(); }
};

/// Box bounds applied during training, in standardized units unless noted.
struct FitBounds {
  double length_scale_min_frac = 0.01;  // of region diagonal
  double length_scale_max_frac = 2.0;   // of region diagonal
  double noise_var_min = 1e-6;
  double noise_var_max = 10.0;
  double cholesky_diag_min = 1e-4;
  double cholesky_diag_max = 10.0;
  double cholesky_offdiag_abs_max = 10.0;
};

struct FitConfig {
  int restarts = 5;
  int max_iters = 200;
  double grad_tol = 1e-5;
  FitBounds bounds;
  /// Relative diagonal jitter tried in order after an unjittered attempt fails.
  std::vector<double> jitter = {1e-8, 1e-6, 1e-4};
  bool warm_start = false;
  /// Search region; sets the length-scale bounds. Defaults to the data's bounding box.
  std::optional<Region> region;
};

/// Per-quantity affine map to standardized units.
struct StandardTransform {
  double mean = 0.0;
  double scale = 1.0;

  double standardize(double v) const { return (v - mean) / scale; }
  double destandardize(double z) const { return z * scale + mean; }
};

std::vector<StandardTransform> fit_transforms(const Dataset& data);

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

/// Unconstrained parameter vector: [log l, log noise_var, L row-major lower
/// triangle], with the diagonal of L stored as its log.
Eigen::Index parameter_count(Eigen::Index quantity_count);
Eigen::VectorXd pack(const Hyperparameters& params);
Hyperparameters unpack(const Eigen::VectorXd& theta, Eigen::Index quantity_count);

/// Log marginal likelihood of the standardized data.
double log_marginal_likelihood(const Dataset& data, const Hyperparameters& params,
                               std::span<const double> jitter = FitConfig{}.jitter);

/// Gradient of the log marginal likelihood with respect to pack(params).
Eigen::VectorXd lml_gradient(const Dataset& data, const Hyperparameters& params,
                             std::span<const double> jitter = FitConfig{}.jitter);

struct PosteriorField {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd variance;
};

/// Immutable trained model: data, transforms, hyperparameters and the cached
/// factorization of K + noise_var I.
class TrainedModel {
 public:
  /// Builds the posterior for fixed hyperparameters. An empty dataset yields the prior.
  static TrainedModel build(const Dataset& data, const Hyperparameters& params,
                            std::span<const double> jitter = FitConfig{}.jitter);

  Posterior predict(QuantityId q, const Location& at) const;
  /// Posterior in the standardized units of quantity q.
  Posterior predict_standardized(QuantityId q, const Location& at) const;
  /// Mean only; skips the variance solve.
  double predict_mean(QuantityId q, const Location& at) const;

  const Hyperparameters& params() const { return params_; }
  const Dataset& data() const { return data_; }
  const StandardTransform& transform(QuantityId q) const;
  std::size_t quantity_count() const { return data_.quantity_count(); }
  double log_likelihood() const { return lml_; }

 private:
  TrainedModel(Dataset data, std::vector<StandardTransform> transforms, Hyperparameters params);

  friend PosteriorField predict_grid(const TrainedModel& model, QuantityId q, const GridSpec& grid);

  Eigen::VectorXd cross_covariance(QuantityId q, const Location& at) const;

  Dataset data_;
  std::vector<StandardTransform> transforms_;
  Hyperparameters params_;
  std::vector<TaggedPoint<double>> sites_;
  Eigen::MatrixXd quantity_cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd weights_;  // Sigma^-1 y
  double lml_ = 0.0;
};

/// Multi-start quasi-Newton maximization of the log marginal likelihood.
/// `warm` seeds the first restart when config.warm_start is set.
TrainedModel fit(const Dataset& data, std::uint64_t seed, const FitConfig& config = {},
                 const Hyperparameters* warm = nullptr);

/// Posterior over the cell centers of a grid.
PosteriorField predict_grid(const TrainedModel& model, QuantityId q, const GridSpec& grid);

}  // namespace atl

#endif  // ATL_MTGP_HPP

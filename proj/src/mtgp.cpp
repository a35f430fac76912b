#include "atl/mtgp.hpp"

#include <algorithm>
#include <cmath>
#include <Eigen/Eigenvalues>

#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace atl {

Dataset::Dataset(std::size_t quantity_count) : quantity_count_(quantity_count) {
  if (quantity_count == 0) throw std::invalid_argument("dataset: need at least one quantity");
}

Dataset::Dataset(std::size_t quantity_count, std::vector<Observation> observations) : Dataset(quantity_count) {
  observations_.reserve(observations.size());
  for (const auto& o : observations) add(o);
}

void Dataset::add(const Observation& obs) {
  if (obs.quantity.index >= quantity_count_)
    throw std::invalid_argument("dataset: quantity index " + std::to_string(obs.quantity.index) + " out of range");
  if (!std::isfinite(obs.value) || !obs.location.allFinite())
    throw std::invalid_argument("dataset: observation must be finite");
  observations_.push_back(obs);
}

std::size_t Dataset::count(QuantityId q) const {
  return static_cast<std::size_t>(
      std::count_if(observations_.begin(), observations_.end(), [q](const Observation& o) { return o.quantity == q; }));
}

std::vector<StandardTransform> fit_transforms(const Dataset& data) {
  const std::size_t nq = data.quantity_count();
  std::vector<double> sum(nq, 0.0), sum_sq(nq, 0.0);
  std::vector<std::size_t> n(nq, 0);
  for (const auto& o : data.observations()) {
    sum[o.quantity.index] += o.value;
    ++n[o.quantity.index];
  }
  std::vector<StandardTransform> out(nq);
  for (std::size_t q = 0; q < nq; ++q)
    if (n[q] > 0) out[q].mean = sum[q] / static_cast<double>(n[q]);
  for (const auto& o : data.observations()) {
    const double d = o.value - out[o.quantity.index].mean;
    sum_sq[o.quantity.index] += d * d;
  }
  for (std::size_t q = 0; q < nq; ++q) {
    if (n[q] < 2) continue;
    const double sd = std::sqrt(sum_sq[q] / static_cast<double>(n[q]));
    if (sd > 1e-12 * std::max(1.0, std::abs(out[q].mean))) out[q].scale = sd;
  }
  return out;
}

Eigen::Index parameter_count(Eigen::Index quantity_count) { return 2 + quantity_count * (quantity_count + 1) / 2; }

Eigen::VectorXd pack(const Hyperparameters& params) {
  const auto& lower = params.kernel.quantity_cov.lower();
  const Eigen::Index q = lower.rows();
  Eigen::VectorXd theta(parameter_count(q));
  theta(0) = std::log(params.kernel.length_scale);
  theta(1) = std::log(params.noise_var);
  Eigen::Index k = 2;
  for (Eigen::Index r = 0; r < q; ++r)
    for (Eigen::Index c = 0; c <= r; ++c) theta(k++) = (r == c) ? std::log(lower(r, c)) : lower(r, c);
  return theta;
}

Hyperparameters unpack(const Eigen::VectorXd& theta, Eigen::Index quantity_count) {
  if (theta.size() != parameter_count(quantity_count))
    throw std::invalid_argument("unpack: parameter vector has wrong length");
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(quantity_count, quantity_count);
  Eigen::Index k = 2;
  for (Eigen::Index r = 0; r < quantity_count; ++r)
    for (Eigen::Index c = 0; c <= r; ++c) lower(r, c) = (r == c) ? std::exp(theta(k++)) : theta(k++);
  Hyperparameters out;
  out.kernel = KernelParams<double>(QuantityCovariance<double>(std::move(lower)), std::exp(theta(0)));
  out.noise_var = std::exp(theta(1));
  if (!(out.noise_var > 0) || !std::isfinite(out.noise_var))
    throw std::invalid_argument("unpack: noise variance must be finite and positive");
  return out;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

Eigen::LLT<Eigen::MatrixXd> factorize(Eigen::MatrixXd sigma, std::span<const double> jitter,
                                      const Eigen::VectorXd& theta) {
  // LLT reports success on inf/NaN input, so reject it up front.
  if (!sigma.allFinite()) throw NumericalFailure("covariance has non-finite entries", theta);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return llt;
  const double max_diag = sigma.diagonal().maxCoeff();
  double applied = 0.0;
  for (const double rel : jitter) {
    const double eps = rel * max_diag;
    sigma.diagonal().array() += eps - applied;
    applied = eps;
    llt.compute(sigma);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalFailure("covariance factorization failed after jitter escalation", theta);
}

// Standardized training data with pairwise squared distances precomputed;
// evaluates the log marginal likelihood and its gradient in packed form.
class LikelihoodProblem {
 public:
  LikelihoodProblem(const Dataset& data, const std::vector<StandardTransform>& transforms)
      : nq_(static_cast<Eigen::Index>(data.quantity_count())) {
    const auto n = static_cast<Eigen::Index>(data.size());
    y_.resize(n);
    quantity_.resize(static_cast<std::size_t>(n));
    Eigen::Matrix2Xd xs(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& o = data[static_cast<std::size_t>(i)];
      y_(i) = transforms[o.quantity.index].standardize(o.value);
      quantity_[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(o.quantity.index);
      xs.col(i) = o.location;
    }
    const Eigen::VectorXd norms = xs.colwise().squaredNorm().transpose();
    sq_dist_ = (norms.replicate(1, n) + norms.transpose().replicate(n, 1) - 2.0 * xs.transpose() * xs).cwiseMax(0.0);
    sq_dist_.diagonal().setZero();
    detect_collocated(data, xs);
  }

  Eigen::Index quantity_count() const { return nq_; }
  Eigen::Index size() const { return y_.size(); }

  double value(const Eigen::VectorXd& theta, std::span<const double> jitter) const {
    if (grid_) return kronecker(theta, nullptr);
    const auto params = unpack(theta, nq_);
    Eigen::MatrixXd spatial, sigma;
    const auto llt = factorize_at(params, theta, jitter, spatial, sigma);
    return lml(llt);
  }

  double value_and_gradient(const Eigen::VectorXd& theta, std::span<const double> jitter,
                            Eigen::VectorXd& grad) const {
    if (grid_) return kronecker(theta, &grad);
    const auto params = unpack(theta, nq_);
    Eigen::MatrixXd spatial, sigma;
    const auto llt = factorize_at(params, theta, jitter, spatial, sigma);
    const Eigen::VectorXd alpha = llt.solve(y_);
    const double out = -0.5 * (y_.dot(alpha) + log_det(llt) + static_cast<double>(size()) * kLog2Pi);

    // W = alpha alpha^T - Sigma^-1; dLML/dtheta_k = 1/2 tr(W dSigma/dtheta_k).
    Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(size(), size()));
    w = alpha * alpha.transpose() - w;

    const Eigen::MatrixXd a = params.kernel.quantity_cov.covariance();
    const double ls = params.kernel.length_scale;
    const auto n = size();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nq_, nq_);
    double d_log_ls = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index v = quantity_[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index u = quantity_[static_cast<std::size_t>(i)];
        const double ws = w(i, j) * spatial(i, j);
        g(u, v) += ws;
        d_log_ls += ws * a(u, v) * sq_dist_(i, j);
      }
    }

    grad.resize(theta.size());
    grad(0) = 0.5 * d_log_ls / (ls * ls);
    grad(1) = 0.5 * params.noise_var * w.trace();
    // dA_uv/dL_ab = d_ua L_vb + d_va L_ub, G symmetric => dLML/dL = G L.
    const Eigen::MatrixXd& lower = params.kernel.quantity_cov.lower();
    const Eigen::MatrixXd dl = g * lower;
    Eigen::Index k = 2;
    for (Eigen::Index r = 0; r < nq_; ++r)
      for (Eigen::Index c = 0; c <= r; ++c) grad(k++) = (r == c) ? dl(r, c) * lower(r, r) : dl(r, c);
    return out;
  }

 private:
  // Every quantity observed exactly once at each of the same m sites. Then
  // Sigma = A (x) K + noise I, which diagonalizes through the eigenvectors of
  // the m x m spatial Gram and of A.
  struct Collocated {
    Eigen::MatrixXd y;        // m x q, standardized
    Eigen::MatrixXd sq_dist;  // m x m
  };

  void detect_collocated(const Dataset& data, const Eigen::Matrix2Xd& xs) {
    const auto n = static_cast<Eigen::Index>(data.size());
    if (n == 0 || n % nq_ != 0) return;
    const Eigen::Index m = n / nq_;
    std::map<std::pair<double, double>, Eigen::Index> site;
    std::vector<Eigen::Index> site_of(static_cast<std::size_t>(n));
    Eigen::Matrix2Xd at(2, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto key = std::make_pair(xs(0, i), xs(1, i));
      auto it = site.find(key);
      if (it == site.end()) {
        if (static_cast<Eigen::Index>(site.size()) == m) return;
        it = site.emplace(key, static_cast<Eigen::Index>(site.size())).first;
        at.col(it->second) = xs.col(i);
      }
      site_of[static_cast<std::size_t>(i)] = it->second;
    }
    if (static_cast<Eigen::Index>(site.size()) != m) return;
    Collocated c;
    c.y = Eigen::MatrixXd::Constant(m, nq_, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < n; ++i) {
      double& slot = c.y(site_of[static_cast<std::size_t>(i)], quantity_[static_cast<std::size_t>(i)]);
      if (!std::isnan(slot)) return;  // repeated (site, quantity)
      slot = y_(i);
    }
    const Eigen::VectorXd norms = at.colwise().squaredNorm().transpose();
    c.sq_dist = (norms.replicate(1, m) + norms.transpose().replicate(m, 1) - 2.0 * at.transpose() * at).cwiseMax(0.0);
    c.sq_dist.diagonal().setZero();
    grid_ = std::move(c);
  }

  double kronecker(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    const auto params = unpack(theta, nq_);
    const double ls = params.kernel.length_scale;
    const double nv = params.noise_var;
    const Eigen::MatrixXd spatial = (grid_->sq_dist * (-0.5 / (ls * ls))).array().exp().matrix();
    const Eigen::MatrixXd a = params.kernel.quantity_cov.covariance();
    if (!a.allFinite()) throw NumericalFailure("quantity covariance has non-finite entries", theta);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ek(spatial);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a);
    if (ek.info() != Eigen::Success || ea.info() != Eigen::Success)
      throw NumericalFailure("eigendecomposition failed", theta);
    const Eigen::MatrixXd& u = ek.eigenvectors();
    const Eigen::MatrixXd& v = ea.eigenvectors();
    const Eigen::VectorXd lam = ek.eigenvalues().cwiseMax(0.0);
    const Eigen::VectorXd d = ea.eigenvalues().cwiseMax(0.0);
    const Eigen::ArrayXXd s = (lam * d.transpose()).array() + nv;
    const Eigen::MatrixXd rotated = u.transpose() * grid_->y * v;
    const Eigen::ArrayXXd alpha_rot = rotated.array() / s;
    const double out = -0.5 * ((rotated.array() * alpha_rot).sum() + s.log().sum() +
                               static_cast<double>(size()) * kLog2Pi);
    if (!grad) return out;

    const Eigen::MatrixXd alpha = u * alpha_rot.matrix() * v.transpose();  // m x q
    const Eigen::ArrayXXd inv_s = s.inverse();
    const Eigen::MatrixXd k_alpha = spatial * alpha;
    // G_uv = sum over blocks (u, v) of W o K.
    const Eigen::MatrixXd g = alpha.transpose() * k_alpha -
                              v * (lam.transpose() * inv_s.matrix()).asDiagonal() * v.transpose();
    const Eigen::MatrixXd p = spatial.cwiseProduct(grid_->sq_dist);
    const Eigen::VectorXd p_diag = (u.transpose() * p).cwiseProduct(u.transpose()).rowwise().sum();
    const double d_log_ls = (a * alpha.transpose() * p * alpha).trace() - (p_diag.transpose() * inv_s.matrix() * d)(0);

    grad->resize(theta.size());
    (*grad)(0) = 0.5 * d_log_ls / (ls * ls);
    (*grad)(1) = 0.5 * nv * (alpha.squaredNorm() - inv_s.sum());
    const Eigen::MatrixXd& lower = params.kernel.quantity_cov.lower();
    const Eigen::MatrixXd dl = g * lower;
    Eigen::Index k = 2;
    for (Eigen::Index r = 0; r < nq_; ++r)
      for (Eigen::Index c = 0; c <= r; ++c) (*grad)(k++) = (r == c) ? dl(r, c) * lower(r, r) : dl(r, c);
    return out;
  }

  Eigen::LLT<Eigen::MatrixXd> factorize_at(const Hyperparameters& params, const Eigen::VectorXd& theta,
                                           std::span<const double> jitter, Eigen::MatrixXd& spatial,
                                           Eigen::MatrixXd& sigma) const {
    const double ls = params.kernel.length_scale;
    spatial = (sq_dist_ * (-0.5 / (ls * ls))).array().exp().matrix();
    const Eigen::MatrixXd a = params.kernel.quantity_cov.covariance();
    const auto n = size();
    sigma.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index v = quantity_[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < n; ++i) sigma(i, j) = a(quantity_[static_cast<std::size_t>(i)], v) * spatial(i, j);
    }
    sigma.diagonal().array() += params.noise_var;
    return factorize(sigma, jitter, theta);
  }

  static double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }

  double lml(const Eigen::LLT<Eigen::MatrixXd>& llt) const {
    const Eigen::VectorXd alpha = llt.solve(y_);
    return -0.5 * (y_.dot(alpha) + log_det(llt) + static_cast<double>(size()) * kLog2Pi);
  }

  Eigen::Index nq_;
  Eigen::VectorXd y_;
  std::vector<Eigen::Index> quantity_;
  Eigen::MatrixXd sq_dist_;
  std::optional<Collocated> grid_;
};

void require_matching(const Dataset& data, const Hyperparameters& params) {
  if (params.quantity_count() != static_cast<Eigen::Index>(data.quantity_count()))
    throw std::invalid_argument("hyperparameters and dataset disagree on quantity count");
}

}  // namespace

double log_marginal_likelihood(const Dataset& data, const Hyperparameters& params, std::span<const double> jitter) {
  if (data.empty()) throw std::invalid_argument("log_marginal_likelihood: empty dataset");
  require_matching(data, params);
  const LikelihoodProblem problem(data, fit_transforms(data));
  return problem.value(pack(params), jitter);
}

Eigen::VectorXd lml_gradient(const Dataset& data, const Hyperparameters& params, std::span<const double> jitter) {
  if (data.empty()) throw std::invalid_argument("lml_gradient: empty dataset");
  require_matching(data, params);
  const LikelihoodProblem problem(data, fit_transforms(data));
  Eigen::VectorXd grad;
  problem.value_and_gradient(pack(params), jitter, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// TrainedModel

TrainedModel::TrainedModel(Dataset data, std::vector<StandardTransform> transforms, Hyperparameters params)
    : data_(std::move(data)), transforms_(std::move(transforms)), params_(std::move(params)) {}

TrainedModel TrainedModel::build(const Dataset& data, const Hyperparameters& params, std::span<const double> jitter) {
  require_matching(data, params);
  TrainedModel model(data, fit_transforms(data), params);
  model.quantity_cov_ = params.kernel.quantity_cov.covariance();

  const auto n = static_cast<Eigen::Index>(data.size());
  model.sites_.reserve(data.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = data[static_cast<std::size_t>(i)];
    model.sites_.push_back({o.location, o.quantity});
    y(i) = model.transforms_[o.quantity.index].standardize(o.value);
  }
  if (n == 0) return model;

  Eigen::MatrixXd sigma =
      gram_matrix<double>(std::span<const TaggedPoint<double>>(model.sites_),
                          std::span<const TaggedPoint<double>>(model.sites_), params.kernel);
  sigma.diagonal().array() += params.noise_var;
  model.llt_ = factorize(std::move(sigma), jitter, pack(params));
  model.weights_ = model.llt_.solve(y);
  model.lml_ = -0.5 * (y.dot(model.weights_) + 2.0 * model.llt_.matrixLLT().diagonal().array().log().sum() +
                       static_cast<double>(n) * kLog2Pi);
  return model;
}

const StandardTransform& TrainedModel::transform(QuantityId q) const {
  if (q.index >= transforms_.size()) throw std::invalid_argument("quantity index out of range");
  return transforms_[q.index];
}

Eigen::VectorXd TrainedModel::cross_covariance(QuantityId q, const Location& at) const {
  const auto n = static_cast<Eigen::Index>(sites_.size());
  const double inv_two_l2 = 0.5 / (params_.kernel.length_scale * params_.kernel.length_scale);
  const auto iq = static_cast<Eigen::Index>(q.index);
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = sites_[static_cast<std::size_t>(i)];
    k(i) = quantity_cov_(iq, static_cast<Eigen::Index>(s.quantity.index)) *
           std::exp(-(at - s.at).squaredNorm() * inv_two_l2);
  }
  return k;
}

Posterior TrainedModel::predict_standardized(QuantityId q, const Location& at) const {
  params_.kernel.quantity_cov.check(q);
  const double prior_var = quantity_cov_(static_cast<Eigen::Index>(q.index), static_cast<Eigen::Index>(q.index));
  if (sites_.empty()) return {0.0, prior_var};
  Eigen::VectorXd k = cross_covariance(q, at);
  const double mean = k.dot(weights_);
  llt_.matrixL().solveInPlace(k);
  return {mean, std::max(0.0, prior_var - k.squaredNorm())};
}

double TrainedModel::predict_mean(QuantityId q, const Location& at) const {
  params_.kernel.quantity_cov.check(q);
  const auto& t = transforms_[q.index];
  if (sites_.empty()) return t.destandardize(0.0);
  return t.destandardize(cross_covariance(q, at).dot(weights_));
}

Posterior TrainedModel::predict(QuantityId q, const Location& at) const {
  const Posterior z = predict_standardized(q, at);
  const auto& t = transforms_[q.index];
  return {t.destandardize(z.mean), z.variance * t.scale * t.scale};
}

PosteriorField predict_grid(const TrainedModel& model, QuantityId q, const GridSpec& grid) {
  model.params_.kernel.quantity_cov.check(q);
  const auto& t = model.transform(q);
  const auto iq = static_cast<Eigen::Index>(q.index);
  const double prior_var = model.quantity_cov_(iq, iq);

  PosteriorField field{Eigen::MatrixXd::Constant(grid.rows, grid.cols, t.mean),
                       Eigen::MatrixXd::Constant(grid.rows, grid.cols, prior_var * t.scale * t.scale)};
  if (model.sites_.empty()) return field;

  std::vector<TaggedPoint<double>> cells;
  cells.reserve(static_cast<std::size_t>(grid.size()));
  for (Eigen::Index r = 0; r < grid.rows; ++r)
    for (Eigen::Index c = 0; c < grid.cols; ++c) cells.push_back({grid.cell_center(r, c), q});

  Eigen::MatrixXd k = gram_matrix<double>(std::span<const TaggedPoint<double>>(model.sites_),
                                          std::span<const TaggedPoint<double>>(cells), model.params_.kernel);
  const Eigen::VectorXd mean = k.transpose() * model.weights_;
  model.llt_.matrixL().solveInPlace(k);
  const Eigen::ArrayXd var = (prior_var - k.colwise().squaredNorm().array().transpose()).cwiseMax(0.0);
  for (Eigen::Index r = 0; r < grid.rows; ++r)
    for (Eigen::Index c = 0; c < grid.cols; ++c) {
      const Eigen::Index i = r * grid.cols + c;
      field.mean(r, c) = t.destandardize(mean(i));
      field.variance(r, c) = var(i) * t.scale * t.scale;
    }
  return field;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Box {
  Eigen::VectorXd lo, hi;
  Eigen::VectorXd clip(const Eigen::VectorXd& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

Box make_box(Eigen::Index nq, double diag, const FitBounds& b) {
  const Eigen::Index p = parameter_count(nq);
  Box box{Eigen::VectorXd(p), Eigen::VectorXd(p)};
  box.lo(0) = std::log(b.length_scale_min_frac * diag);
  box.hi(0) = std::log(b.length_scale_max_frac * diag);
  box.lo(1) = std::log(b.noise_var_min);
  box.hi(1) = std::log(b.noise_var_max);
  Eigen::Index k = 2;
  for (Eigen::Index r = 0; r < nq; ++r)
    for (Eigen::Index c = 0; c <= r; ++c, ++k) {
      if (r == c) {
        box.lo(k) = std::log(b.cholesky_diag_min);
        box.hi(k) = std::log(b.cholesky_diag_max);
      } else {
        box.lo(k) = -b.cholesky_offdiag_abs_max;
        box.hi(k) = b.cholesky_offdiag_abs_max;
      }
    }
  return box;
}

double region_diagonal(const Dataset& data, const FitConfig& config) {
  if (config.region) return config.region->diagonal();
  if (data.empty()) return 1.0;
  Location lo = data[0].location, hi = lo;
  for (const auto& o : data.observations()) {
    lo = lo.cwiseMin(o.location);
    hi = hi.cwiseMax(o.location);
  }
  const double d = (hi - lo).norm();
  return d > 0 ? d : 1.0;
}

struct StartResult {
  Eigen::VectorXd theta;
  double lml;
};

// Projected BFGS with Armijo backtracking; minimizes -LML inside the box.
StartResult maximize_from(const LikelihoodProblem& problem, Eigen::VectorXd x, const Box& box,
                          const FitConfig& config) {
  const auto jitter = std::span<const double>(config.jitter);
  const Eigen::Index p = x.size();
  x = box.clip(x);
  Eigen::VectorXd grad;
  double f = -problem.value_and_gradient(x, jitter, grad);
  Eigen::VectorXd g = -grad;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(p, p);

  auto projected = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& gr) {
    Eigen::VectorXd pg = gr;
    for (Eigen::Index i = 0; i < p; ++i)
      if ((at(i) <= box.lo(i) && gr(i) > 0) || (at(i) >= box.hi(i) && gr(i) < 0)) pg(i) = 0.0;
    return pg;
  };

  constexpr double kMaxStep = 2.0;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const Eigen::VectorXd pg = projected(x, g);
    if (pg.norm() <= config.grad_tol) break;

    Eigen::VectorXd d = -(h * pg);
    for (Eigen::Index i = 0; i < p; ++i)
      if (pg(i) == 0.0) d(i) = 0.0;
    if (pg.dot(d) >= 0) {
      h.setIdentity();
      d = -pg;
    }
    const double inf_norm = d.cwiseAbs().maxCoeff();
    double t = inf_norm > kMaxStep ? kMaxStep / inf_norm : 1.0;

    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      x_new = box.clip(x + t * d);
      try {
        f_new = -problem.value(x_new, jitter);
      } catch (const NumericalFailure&) {
        f_new = std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (h.isIdentity()) break;
      h.setIdentity();
      continue;
    }

    Eigen::VectorXd grad_new;
    f_new = -problem.value_and_gradient(x_new, jitter, grad_new);
    const Eigen::VectorXd g_new = -grad_new;
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    const double f_old = f;
    x = x_new;
    f = f_new;
    g = g_new;
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
      h = (eye - rho * s * yv.transpose()) * h * (eye - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    if (std::abs(f_old - f) <= 1e-12 * (1.0 + std::abs(f))) break;
  }
  return {x, -f};
}

}  // namespace

TrainedModel fit(const Dataset& data, std::uint64_t seed, const FitConfig& config, const Hyperparameters* warm) {
  if (data.empty()) throw std::invalid_argument("fit: dataset is empty");
  if (config.restarts < 1) throw std::invalid_argument("fit: restarts must be >= 1");
  const auto nq = static_cast<Eigen::Index>(data.quantity_count());
  const LikelihoodProblem problem(data, fit_transforms(data));
  const double diag = region_diagonal(data, config);
  const Box box = make_box(nq, diag, config.bounds);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> frac(0.05, 0.5);
  std::normal_distribution<double> perturb(0.0, 0.1);

  std::optional<StartResult> best;
  Eigen::VectorXd last_theta;
  for (int r = 0; r < config.restarts; ++r) {
    // Draw every restart's start unconditionally so restart r sees the same
    // point regardless of earlier failures or warm starting.
    Eigen::VectorXd theta(parameter_count(nq));
    theta(0) = std::log(frac(rng) * diag);
    theta(1) = std::log(1e-2);
    Eigen::Index k = 2;
    for (Eigen::Index i = 0; i < nq; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) theta(k++) = perturb(rng);
    if (r == 0 && config.warm_start && warm && warm->quantity_count() == nq) theta = pack(*warm);
    last_theta = box.clip(theta);

    try {
      StartResult res = maximize_from(problem, last_theta, box, config);
      if (std::isfinite(res.lml) && (!best || res.lml > best->lml)) best = std::move(res);
    } catch (const NumericalFailure&) {
      continue;
    }
  }
  if (!best) throw NumericalFailure("fit: every restart failed numerically", last_theta);
  return TrainedModel::build(data, unpack(best->theta, nq), config.jitter);
}

}  // namespace atl

#ifndef ATL_HYPOTHESIS_HPP
#define ATL_HYPOTHESIS_HPP

#include "atl/mtgp.hpp"
#include "atl/types.hpp"

#include <Eigen/Core>

#include <string_view>
#include <vector>

namespace atl {

/// Validity of the hypothesis "prior quantity is linearly dependent with the QOI".
struct HypothesisReport {
  QuantityId prior_quantity;
  double r = 0.0;
  double score = 0.0;  // r^2
  std::size_t step_index = 0;
};

enum class Band { Unlikely, Possible, Likely };

/// Correlation coefficient A_uv / sqrt(A_uu A_vv), clamped to [-1, 1].
/// A quantity with variance below 1e-12 is treated as uncorrelated (r = 0).
double correlation(const Eigen::Ref<const Eigen::MatrixXd>& quantity_cov, QuantityId u, QuantityId v);

/// One report per prior quantity (1..Q-1) against the QOI, ascending index.
std::vector<HypothesisReport> score_all(const TrainedModel& model, std::size_t step_index = 0);

/// Prior-vs-prior scores (u < v, both non-QOI). Not part of the QOI reports.
std::vector<HypothesisReport> score_pairs(const TrainedModel& model, QuantityId against);

inline constexpr double kLikelyThreshold = 0.9;
inline constexpr double kPossibleThreshold = 0.5;

Band classify(double score);
std::string_view band_name(Band b);

}  // namespace atl

#endif  // ATL_HYPOTHESIS_HPP

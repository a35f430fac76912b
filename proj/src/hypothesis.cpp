#include "atl/hypothesis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace atl {

double correlation(const Eigen::Ref<const Eigen::MatrixXd>& quantity_cov, QuantityId u, QuantityId v) {
  const auto q = static_cast<std::size_t>(quantity_cov.rows());
  if (quantity_cov.cols() != quantity_cov.rows()) throw std::invalid_argument("correlation: matrix must be square");
  if (u.index >= q || v.index >= q) throw std::invalid_argument("correlation: quantity index out of range");
  const auto iu = static_cast<Eigen::Index>(u.index);
  const auto iv = static_cast<Eigen::Index>(v.index);
  const double var_u = quantity_cov(iu, iu);
  const double var_v = quantity_cov(iv, iv);
  if (var_u < 1e-12 || var_v < 1e-12) return 0.0;
  const double r = quantity_cov(iu, iv) / (std::sqrt(var_u) * std::sqrt(var_v));
  return std::clamp(r, -1.0, 1.0);
}

std::vector<HypothesisReport> score_all(const TrainedModel& model, std::size_t step_index) {
  std::vector<HypothesisReport> out;
  const Eigen::MatrixXd a = model.params().kernel.quantity_cov.covariance();
  for (std::size_t v = 1; v < model.quantity_count(); ++v) {
    const double r = correlation(a, kQoi, QuantityId(v));
    out.push_back({QuantityId(v), r, r * r, step_index});
  }
  return out;
}

std::vector<HypothesisReport> score_pairs(const TrainedModel& model, QuantityId against) {
  std::vector<HypothesisReport> out;
  const Eigen::MatrixXd a = model.params().kernel.quantity_cov.covariance();
  for (std::size_t v = 1; v < model.quantity_count(); ++v) {
    if (v == against.index) continue;
    const double r = correlation(a, against, QuantityId(v));
    out.push_back({QuantityId(v), r, r * r, 0});
  }
  return out;
}

Band classify(double score) {
  if (score < kPossibleThreshold) return Band::Unlikely;
  if (score >= kLikelyThreshold) return Band::Likely;
  return Band::Possible;
}

std::string_view band_name(Band b) {
  switch (b) {
    case Band::Likely: return "likely";
    case Band::Possible: return "possible";
    case Band::Unlikely: return "unlikely";
  }
  return "unknown";
}

}  // namespace atl

#ifndef ATL_HARNESS_HPP
#define ATL_HARNESS_HPP

// Sequential sampling experiments: single episodes of the
// sample / train / score / evaluate / select loop, and paired batches over
// every combination of synthetic prior classes.

#include "atl/acquisition.hpp"
#include "atl/envgen.hpp"
#include "atl/hypothesis.hpp"
#include "atl/mtgp.hpp"
#include "atl/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace atl {

struct PriorQuantity {
  std::string name;
  std::vector<Observation> samples;  // quantity ids are reassigned per episode
  std::optional<TruthMap> map;
};

/// Ground truth for one episode: the QOI map plus sparse prior data.
struct World {
  TruthMap qoi;
  std::vector<PriorQuantity> priors;

  /// Keeps only the priors whose names appear in `names`, in that order.
  World select(const std::vector<std::string>& names) const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Region region;
  int budget = 30;
  /// Synthetic prior classes for this run, e.g. "HML"; empty for none.
  std::string combo;
  int prior_grid = 5;
  AcquisitionConfig acquisition;
  FitConfig fit;
  Eigen::Index eval_rows = 50;
  Eigen::Index eval_cols = 50;
  std::optional<Location> start;
  BumpConfig bumps;

  void validate() const;
  Location start_location() const { return start.value_or(region.center()); }
  GridSpec eval_grid() const { return GridSpec(region, eval_rows, eval_cols); }
};

struct NamedScore {
  std::string name;
  double r = 0.0;
  double score = 0.0;
};

struct StepRecord {
  std::size_t step = 0;
  Location location = Location::Zero();
  double value = 0.0;
  std::vector<NamedScore> scores;
  double mae = 0.0;
  double rmse = 0.0;
  double length_scale = 0.0;
  double noise_var = 0.0;
  double lml = 0.0;
  bool fit_failed = false;
  double wall_seconds = 0.0;

  const NamedScore* score_for(const std::string& name) const;
};

struct Episode {
  std::string combo;
  std::size_t replicate = 0;
  std::vector<StepRecord> steps;
};

/// Raised when an episode cannot continue (first fit failed with no fallback).
class EpisodeFailure : public std::runtime_error {
 public:
  EpisodeFailure(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

/// QOI posterior mean versus truth over the valid cells of `grid`.
ErrorMetrics prediction_error(const TrainedModel& model, const TruthMap& truth, const GridSpec& grid);
double mean_abs_error(const TrainedModel& model, const TruthMap& truth, const GridSpec& grid);

/// Synthetic world: normalized QOI plus H, M and L priors (normalized maps
/// and prior_grid x prior_grid lattice samples). Deterministic in `seed`.
World make_synthetic_world(std::uint64_t seed, const RunConfig& cfg);

/// Runs the loop for cfg.budget samples. Deterministic in cfg.seed.
std::vector<StepRecord> run_episode(const RunConfig& cfg, const World& world);

/// "none", "H", "M", "L", "HM", "HL", "ML", "HML".
std::vector<std::string> all_combos();
std::vector<std::string> combo_priors(const std::string& combo);

struct SeriesStat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

SeriesStat summarize(const std::vector<double>& xs);

struct StepAggregate {
  std::size_t step = 0;
  SeriesStat mae;
  SeriesStat rmse;
  std::vector<std::pair<std::string, SeriesStat>> scores;
  std::size_t fit_failures = 0;

  const SeriesStat* score_for(const std::string& name) const;
};

struct ComboAggregate {
  std::string combo;
  std::vector<StepAggregate> steps;
};

struct BatchResult {
  std::vector<Episode> episodes;  // ordered by (combo index, replicate)
  std::vector<ComboAggregate> combos;

  const ComboAggregate* find(const std::string& combo) const;
};

/// Paired batch: replicate r of every combo sees the same world. Episodes run
/// on up to `jobs` threads; results do not depend on `jobs`.
BatchResult run_batch(const RunConfig& base, const std::vector<std::string>& combos, int replicates, int jobs = 1);

/// Aggregates episodes per combo and step, in first-seen combo order.
std::vector<ComboAggregate> aggregate(const std::vector<Episode>& episodes);

/// Hypothesis scores from one fit on `samples` collocated points of every map
/// in the world (priors need maps). Order follows world.priors.
std::vector<double> true_map_scores(const World& world, int samples, std::uint64_t seed, const FitConfig& fit_cfg);

inline const std::vector<std::string>& synthetic_prior_names() {
  static const std::vector<std::string> names = {"H", "M", "L"};
  return names;
}

void format_step_csv(std::ostream& out, const std::vector<Episode>& episodes,
                     const std::vector<std::string>& prior_columns = synthetic_prior_names());
void emit_step_csv(const std::filesystem::path& path, const std::vector<Episode>& episodes,
                   const std::vector<std::string>& prior_columns = synthetic_prior_names());
/// Inverse of format_step_csv (wall time is not stored).
std::vector<Episode> parse_step_csv(std::istream& in);

void format_batch_csv(std::ostream& out, const BatchResult& batch,
                      const std::vector<std::string>& prior_columns = synthetic_prior_names());
void emit_batch_csv(const std::filesystem::path& path, const BatchResult& batch,
                    const std::vector<std::string>& prior_columns = synthetic_prior_names());
std::vector<ComboAggregate> parse_batch_csv(std::istream& in);

/// Error-vs-step and score-vs-step line charts as a standalone SVG.
std::string render_plot(const std::vector<ComboAggregate>& combos);
void emit_plot(const std::vector<ComboAggregate>& combos, const std::filesystem::path& path);

}  // namespace atl

#endif  // ATL_HARNESS_HPP

#ifndef ATL_CONFIG_HPP
#define ATL_CONFIG_HPP

// JSON run configuration. Unknown keys are rejected by their dotted path.

#include "atl/harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace atl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A prior quantity loaded from disk for a real-data run.
struct PriorSource {
  std::string name;
  std::optional<std::filesystem::path> raster;
  std::optional<std::filesystem::path> samples;
  int count = 25;
  bool dispersed = true;
  std::uint64_t seed = 0;
};

struct RunSpec {
  RunConfig run;
  int replicates = 10;
  /// Real-data world; when absent the world is synthetic.
  std::optional<std::filesystem::path> qoi_raster;
  bool normalize_maps = true;
  std::vector<PriorSource> priors;

  std::optional<std::filesystem::path> steps_csv;
  std::optional<std::filesystem::path> batch_csv;
  std::optional<std::filesystem::path> plot;

  bool synthetic() const { return !qoi_raster.has_value(); }
};

FitConfig parse_fit_config(const nlohmann::json& j, const std::string& prefix = "fit");
AcquisitionConfig parse_acquisition_config(const nlohmann::json& j, const std::string& prefix = "acquisition");

/// Relative paths resolve against `base_dir`.
RunSpec parse_run_spec(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunSpec load_run_spec(const std::filesystem::path& path);

/// Builds the real-data world described by the spec (rasters and sample tables).
World load_world(const RunSpec& spec);

}  // namespace atl

#endif  // ATL_CONFIG_HPP

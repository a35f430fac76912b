// atl: command-line front end for synthetic environments, sampling runs,
// batches, one-shot hypothesis scoring, posterior maps and plots.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

#include "atl/config.hpp"
#include "atl/geodata.hpp"
#include "atl/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace atl;

namespace {

constexpr int kUsage = 2;
constexpr int kNumerical = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw UsageError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
}

void announce(const fs::path& path) { std::cout << path.string() << '\n'; }

Region parse_region(const std::string& s) {
  const auto parts = split_list(s);
  std::vector<double> v;
  for (const auto& p : parts) {
    try {
      v.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw UsageError("--region: bad number '" + p + "'");
    }
  }
  if (v.size() != 4) throw UsageError("--region must be xmin,ymin,xmax,ymax");
  return Region(Location(v[0], v[1]), Location(v[2], v[3]));
}

std::pair<Eigen::Index, Eigen::Index> parse_grid(const std::string& s) {
  const auto x = s.find_first_of("xX");
  try {
    if (x == std::string::npos) {
      const auto n = std::stol(s);
      return {n, n};
    }
    return {std::stol(s.substr(0, x)), std::stol(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("--grid must be N or ROWSxCOLS");
  }
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string classes = "HML";
  int prior_grid = 5;
};

int cmd_generate(const GenerateArgs& a) {
  RunConfig cfg;
  cfg.seed = a.seed;
  cfg.prior_grid = a.prior_grid;
  for (const char c : a.classes)
    if (!class_from_letter(c)) throw UsageError(std::string("--classes: unknown class '") + c + "'");
  const World world = make_synthetic_world(a.seed, cfg);
  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());

  write_raster(dir / "qoi.asc", world.qoi);
  announce(dir / "qoi.asc");
  for (const auto& p : world.priors) {
    if (a.classes.find(p.name) == std::string::npos) continue;
    const fs::path raster = dir / (p.name + ".asc");
    write_raster(raster, *p.map);
    announce(raster);
    SampleTable table;
    for (const auto& o : p.samples) table.push_back({p.name, o.location.x(), o.location.y(), o.value});
    const fs::path csv = dir / (p.name + "_samples.csv");
    write_samples(csv, table);
    announce(csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> budget;
  std::optional<std::string> priors;
  std::optional<int> replicates;
  int jobs = 1;
  std::optional<std::string> out;
  std::optional<std::string> steps;
  std::optional<std::string> plot;
};

RunSpec load_spec(const RunArgs& a) {
  RunSpec spec = a.config.empty() ? parse_run_spec(nlohmann::json::object()) : load_run_spec(a.config);
  if (a.seed) spec.run.seed = *a.seed;
  if (a.budget) spec.run.budget = *a.budget;
  if (a.priors) {
    if (!spec.synthetic()) throw UsageError("--priors applies to synthetic runs only");
    spec.run.combo = *a.priors == "none" ? std::string() : *a.priors;
  }
  if (a.replicates) spec.replicates = *a.replicates;
  try {
    spec.run.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (spec.replicates < 1) throw UsageError("--replicates must be >= 1");
  return spec;
}

int cmd_run(const RunArgs& a) {
  RunSpec spec = load_spec(a);
  World world;
  std::vector<std::string> columns;
  if (spec.synthetic()) {
    world = make_synthetic_world(spec.run.seed, spec.run).select(combo_priors(spec.run.combo));
    columns = synthetic_prior_names();
  } else {
    world = load_world(spec);
    spec.run.region = world.qoi.grid.region;
    if (spec.run.start && !spec.run.region.contains(*spec.run.start))
      throw UsageError("start location lies outside the QOI raster");
    for (const auto& p : world.priors) columns.push_back(p.name);
  }

  Episode ep;
  ep.combo = spec.synthetic() ? (spec.run.combo.empty() ? "none" : spec.run.combo) : "data";
  ep.steps = run_episode(spec.run, world);

  const fs::path steps = a.out ? fs::path(*a.out) : spec.steps_csv.value_or("steps.csv");
  ensure_parent(steps);
  emit_step_csv(steps, {ep}, columns);
  announce(steps);
  if (const auto plot = a.plot ? std::optional<fs::path>(*a.plot) : spec.plot) {
    ensure_parent(*plot);
    emit_plot(aggregate({ep}), *plot);
    announce(*plot);
  }
  return 0;
}

int cmd_batch(const RunArgs& a) {
  const RunSpec spec = load_spec(a);
  if (!spec.synthetic()) throw UsageError("batch runs synthetic environments only; use 'run' for raster worlds");
  if (a.jobs < 1) throw UsageError("--jobs must be >= 1");
  const BatchResult result = run_batch(spec.run, all_combos(), spec.replicates, a.jobs);

  const fs::path batch = a.out ? fs::path(*a.out) : spec.batch_csv.value_or("batch.csv");
  ensure_parent(batch);
  emit_batch_csv(batch, result);
  announce(batch);
  if (const auto steps = a.steps ? std::optional<fs::path>(*a.steps) : spec.steps_csv) {
    ensure_parent(*steps);
    emit_step_csv(*steps, result.episodes);
    announce(*steps);
  }
  if (const auto plot = a.plot ? std::optional<fs::path>(*a.plot) : spec.plot) {
    ensure_parent(*plot);
    emit_plot(result.combos, *plot);
    announce(*plot);
  }
  std::size_t failures = 0;
  for (const auto& c : result.combos)
    for (const auto& s : c.steps) failures += s.fit_failures;
  if (failures > 0) std::cerr << "warning: " << failures << " step(s) reused previous hyperparameters\n";
  return 0;
}

// ---------------------------------------------------------------------------

SampleTable load_tables(const std::vector<std::string>& paths) {
  SampleTable all;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw UsageError("sample table not found: " + p);
    const auto t = read_samples(p);
    all.insert(all.end(), t.begin(), t.end());
  }
  return all;
}

std::vector<std::string> quantity_names(const SampleTable& table) {
  std::vector<std::string> names;
  for (const auto& r : table)
    if (std::find(names.begin(), names.end(), r.quantity) == names.end()) names.push_back(r.quantity);
  return names;
}

struct ScoreArgs {
  std::vector<std::string> samples;
  std::string quantities;
  std::uint64_t seed = 0;
  int restarts = 5;
};

int cmd_score(const ScoreArgs& a) {
  const SampleTable table = load_tables(a.samples);
  const auto names = a.quantities.empty() ? quantity_names(table) : split_list(a.quantities);
  if (names.size() < 2) throw UsageError("score needs at least two quantities (QOI first, then priors)");
  const Dataset data = to_dataset(table, names);
  for (std::size_t q = 0; q < names.size(); ++q)
    if (data.count(QuantityId(q)) == 0) throw UsageError("no samples for quantity '" + names[q] + "'");
  FitConfig cfg;
  cfg.restarts = a.restarts;
  const TrainedModel model = fit(data, a.seed, cfg);

  std::cout << "qoi " << names[0] << "  length_scale " << model.params().kernel.length_scale << "  noise_var "
            << model.params().noise_var << "\n";
  std::cout << std::left << std::setw(16) << "prior" << std::setw(12) << "r" << std::setw(12) << "r^2"
            << "band\n";
  for (const auto& r : score_all(model)) {
    std::cout << std::left << std::setw(16) << names[r.prior_quantity.index] << std::setw(12) << std::setprecision(4)
              << r.r << std::setw(12) << r.score << band_name(classify(r.score)) << "\n";
  }
  return 0;
}

struct PredictArgs {
  std::vector<std::string> samples;
  std::string quantity;
  std::string grid = "50";
  std::optional<std::string> region;
  std::string out = "predict";
  std::uint64_t seed = 0;
  int restarts = 5;
};

int cmd_predict(const PredictArgs& a) {
  const SampleTable table = load_tables(a.samples);
  auto names = quantity_names(table);
  const auto it = std::find(names.begin(), names.end(), a.quantity);
  if (it == names.end()) throw UsageError("unknown quantity '" + a.quantity + "'");
  std::rotate(names.begin(), it, it + 1);  // target becomes quantity 0
  const Dataset data = to_dataset(table, names);

  Region region = Region::unit_square();
  if (a.region) {
    region = parse_region(*a.region);
  } else {
    for (const auto& r : table)
      if (!region.contains(Location(r.x, r.y)))
        throw UsageError("samples fall outside the unit square; pass --region");
  }
  const auto [rows, cols] = parse_grid(a.grid);
  if (rows < 1 || cols < 1) throw UsageError("--grid must be positive");
  if (std::abs(region.width() / static_cast<double>(cols) - region.height() / static_cast<double>(rows)) >
      1e-9 * region.diagonal())
    throw UsageError("--grid must give square cells over the region");

  FitConfig cfg;
  cfg.restarts = a.restarts;
  cfg.region = region;
  const TrainedModel model = fit(data, a.seed, cfg);
  const GridSpec grid(region, rows, cols);
  const PosteriorField field = predict_grid(model, kQoi, grid);

  TruthMap mean{grid, field.mean, {}};
  TruthMap var{grid, field.variance, {}};
  const fs::path prefix(a.out);
  ensure_parent(prefix);
  const fs::path mean_path = prefix.string() + "_mean.asc";
  const fs::path var_path = prefix.string() + "_var.asc";
  write_raster(mean_path, mean);
  announce(mean_path);
  write_raster(var_path, var);
  announce(var_path);
  return 0;
}

struct PlotArgs {
  std::string batch;
  std::string out = "batch.svg";
};

int cmd_plot(const PlotArgs& a) {
  std::ifstream in(a.batch);
  if (!in) throw UsageError("cannot read " + a.batch);
  const auto combos = parse_batch_csv(in);
  const fs::path out(a.out);
  ensure_parent(out);
  emit_plot(combos, out);
  announce(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active transfer learning with multi-task Gaussian processes"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic QOI raster plus prior rasters and samples");
  generate->add_option("--seed", gen.seed, "Master seed");
  generate->add_option("--out-dir", gen.out_dir, "Output directory");
  generate->add_option("--classes", gen.classes, "Prior classes to write, e.g. HML (empty for none)");
  generate->add_option("--prior-grid", gen.prior_grid, "Prior lattice side")->check(CLI::PositiveNumber);

  RunArgs run_args, batch_args;
  auto add_run_options = [](CLI::App* cmd, RunArgs& a) {
    cmd->add_option("--config", a.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", a.seed, "Master seed (overrides config)");
    cmd->add_option("--budget", a.budget, "QOI samples per episode (overrides config)");
    cmd->add_option("--out", a.out, "Output CSV path");
    cmd->add_option("--plot", a.plot, "Write an SVG plot here");
  };
  auto* run = app.add_subcommand("run", "Run one sampling episode");
  add_run_options(run, run_args);
  run->add_option("--priors", run_args.priors, "Synthetic prior classes, e.g. HML or none");

  auto* batch = app.add_subcommand("batch", "Run every prior combination over paired replicates");
  add_run_options(batch, batch_args);
  batch->add_option("--replicates", batch_args.replicates, "Replicates per combination");
  batch->add_option("--jobs", batch_args.jobs, "Parallel episodes");
  batch->add_option("--steps", batch_args.steps, "Also write the per-step CSV here");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Fit once and score every prior against the QOI");
  score->add_option("--samples", score_args.samples, "Sample CSV files")->required();
  score->add_option("--quantities", score_args.quantities, "Comma list, QOI first (default: order of appearance)");
  score->add_option("--seed", score_args.seed, "Fit seed");
  score->add_option("--restarts", score_args.restarts, "Optimizer restarts")->check(CLI::PositiveNumber);

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "Posterior mean and variance rasters for one quantity");
  predict->add_option("--samples", predict_args.samples, "Sample CSV files")->required();
  predict->add_option("--quantity", predict_args.quantity, "Quantity to map")->required();
  predict->add_option("--grid", predict_args.grid, "N or ROWSxCOLS");
  predict->add_option("--region", predict_args.region, "xmin,ymin,xmax,ymax (default unit square)");
  predict->add_option("--out", predict_args.out, "Output prefix: PREFIX_mean.asc, PREFIX_var.asc");
  predict->add_option("--seed", predict_args.seed, "Fit seed");
  predict->add_option("--restarts", predict_args.restarts, "Optimizer restarts")->check(CLI::PositiveNumber);

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "Render a batch CSV as SVG");
  plot->add_option("--batch", plot_args.batch, "Batch CSV")->required();
  plot->add_option("--out", plot_args.out, "SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*run) return cmd_run(run_args);
    if (*batch) return cmd_batch(batch_args);
    if (*score) return cmd_score(score_args);
    if (*predict) return cmd_predict(predict_args);
    if (*plot) return cmd_plot(plot_args);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const EpisodeFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

#include "atl/config.hpp"

#include "atl/geodata.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string_view>

namespace atl {

using nlohmann::json;

namespace {

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

void check_object(const json& j, const std::string& prefix, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError("config key '" + prefix + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown config key '" + join(prefix, key) + "'");
  }
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& prefix) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + join(prefix, key) + "' has the wrong type");
  }
}

template <typename T>
void read(const json& j, const std::string& key, const std::string& prefix, T& out) {
  if (j.contains(key)) out = get<T>(j, key, prefix);
}

Location read_point(const json& j, const std::string& key, const std::string& prefix) {
  const auto v = get<std::vector<double>>(j, key, prefix);
  if (v.size() != 2) throw ConfigError("config key '" + join(prefix, key) + "' must be [x, y]");
  return {v[0], v[1]};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

FitConfig parse_fit_config(const json& j, const std::string& prefix) {
  check_object(j, prefix, {"restarts", "max_iters", "grad_tol", "bounds", "jitter", "warm_start"});
  FitConfig cfg;
  read(j, "restarts", prefix, cfg.restarts);
  read(j, "max_iters", prefix, cfg.max_iters);
  read(j, "grad_tol", prefix, cfg.grad_tol);
  read(j, "jitter", prefix, cfg.jitter);
  read(j, "warm_start", prefix, cfg.warm_start);
  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    const std::string bp = join(prefix, "bounds");
    check_object(b, bp,
                 {"length_scale_min_frac", "length_scale_max_frac", "noise_var_min", "noise_var_max",
                  "cholesky_diag_min", "cholesky_diag_max", "cholesky_offdiag_abs_max"});
    read(b, "length_scale_min_frac", bp, cfg.bounds.length_scale_min_frac);
    read(b, "length_scale_max_frac", bp, cfg.bounds.length_scale_max_frac);
    read(b, "noise_var_min", bp, cfg.bounds.noise_var_min);
    read(b, "noise_var_max", bp, cfg.bounds.noise_var_max);
    read(b, "cholesky_diag_min", bp, cfg.bounds.cholesky_diag_min);
    read(b, "cholesky_diag_max", bp, cfg.bounds.cholesky_diag_max);
    read(b, "cholesky_offdiag_abs_max", bp, cfg.bounds.cholesky_offdiag_abs_max);
    if (!(cfg.bounds.length_scale_min_frac > 0) || cfg.bounds.length_scale_max_frac < cfg.bounds.length_scale_min_frac)
      throw ConfigError("config key '" + bp + "': invalid length-scale bounds");
    if (!(cfg.bounds.noise_var_min > 0) || cfg.bounds.noise_var_max < cfg.bounds.noise_var_min)
      throw ConfigError("config key '" + bp + "': invalid noise bounds");
  }
  if (cfg.restarts < 1) throw ConfigError("config key '" + join(prefix, "restarts") + "' must be >= 1");
  if (cfg.max_iters < 0) throw ConfigError("config key '" + join(prefix, "max_iters") + "' must be >= 0");
  return cfg;
}

AcquisitionConfig parse_acquisition_config(const json& j, const std::string& prefix) {
  check_object(j, prefix, {"alpha", "pso", "seed", "nearest_includes_priors"});
  AcquisitionConfig cfg;
  read(j, "alpha", prefix, cfg.alpha);
  read(j, "seed", prefix, cfg.seed);
  read(j, "nearest_includes_priors", prefix, cfg.nearest_includes_priors);
  if (j.contains("pso")) {
    const auto& p = j.at("pso");
    const std::string pp = join(prefix, "pso");
    check_object(p, pp, {"particles", "iterations", "inertia", "cognitive", "social", "velocity_cap"});
    read(p, "particles", pp, cfg.pso.particles);
    read(p, "iterations", pp, cfg.pso.iterations);
    read(p, "inertia", pp, cfg.pso.inertia);
    read(p, "cognitive", pp, cfg.pso.cognitive);
    read(p, "social", pp, cfg.pso.social);
    read(p, "velocity_cap", pp, cfg.pso.velocity_cap);
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunSpec parse_run_spec(const json& j, const std::filesystem::path& base_dir) {
  check_object(j, "", {"seed", "region", "budget", "priors", "prior_grid", "eval_grid", "start", "acquisition", "fit",
                       "bumps", "replicates", "world", "output"});
  RunSpec spec;
  RunConfig& run = spec.run;
  read(j, "seed", "", run.seed);
  read(j, "budget", "", run.budget);
  read(j, "prior_grid", "", run.prior_grid);
  read(j, "replicates", "", spec.replicates);
  if (j.contains("region")) {
    const auto& r = j.at("region");
    check_object(r, "region", {"min", "max"});
    try {
      run.region = Region(read_point(r, "min", "region"), read_point(r, "max", "region"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config key 'region': ") + e.what());
    }
  }
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    if (p.is_string()) {
      run.combo = p.get<std::string>();
    } else if (p.is_array()) {
      for (const auto& e : p) {
        if (!e.is_string()) throw ConfigError("config key 'priors' must list class letters");
        run.combo += e.get<std::string>();
      }
    } else {
      throw ConfigError("config key 'priors' must be a string or list");
    }
    if (run.combo == "none") run.combo.clear();
    for (const char c : run.combo)
      if (!class_from_letter(c)) throw ConfigError(std::string("config key 'priors': unknown class '") + c + "'");
  }
  if (j.contains("eval_grid")) {
    const auto& g = j.at("eval_grid");
    if (g.is_number_integer()) {
      run.eval_rows = run.eval_cols = g.get<Eigen::Index>();
    } else {
      const auto v = get<std::vector<Eigen::Index>>(j, "eval_grid", "");
      if (v.size() != 2) throw ConfigError("config key 'eval_grid' must be N or [rows, cols]");
      run.eval_rows = v[0];
      run.eval_cols = v[1];
    }
  }
  if (j.contains("start")) run.start = read_point(j, "start", "");
  if (j.contains("acquisition")) run.acquisition = parse_acquisition_config(j.at("acquisition"));
  if (j.contains("fit")) run.fit = parse_fit_config(j.at("fit"));
  if (j.contains("bumps")) {
    const auto& b = j.at("bumps");
    check_object(b, "bumps", {"min_count", "max_count", "amplitude", "width", "grid"});
    read(b, "min_count", "bumps", run.bumps.min_bumps);
    read(b, "max_count", "bumps", run.bumps.max_bumps);
    if (b.contains("amplitude")) {
      const auto v = get<std::vector<double>>(b, "amplitude", "bumps");
      if (v.size() != 2) throw ConfigError("config key 'bumps.amplitude' must be [min, max]");
      run.bumps.amplitude_min = v[0];
      run.bumps.amplitude_max = v[1];
    }
    if (b.contains("width")) {
      const auto v = get<std::vector<double>>(b, "width", "bumps");
      if (v.size() != 2) throw ConfigError("config key 'bumps.width' must be [min, max]");
      run.bumps.width_min_frac = v[0];
      run.bumps.width_max_frac = v[1];
    }
    if (b.contains("grid")) {
      const auto v = get<std::vector<Eigen::Index>>(b, "grid", "bumps");
      if (v.size() != 2) throw ConfigError("config key 'bumps.grid' must be [rows, cols]");
      run.bumps.grid_rows = v[0];
      run.bumps.grid_cols = v[1];
    }
  }
  if (j.contains("world")) {
    const auto& w = j.at("world");
    check_object(w, "world", {"qoi_raster", "normalize", "priors"});
    if (!w.contains("qoi_raster")) throw ConfigError("config key 'world.qoi_raster' is required");
    spec.qoi_raster = resolve(base_dir, get<std::string>(w, "qoi_raster", "world"));
    read(w, "normalize", "world", spec.normalize_maps);
    if (w.contains("priors")) {
      const auto& ps = w.at("priors");
      if (!ps.is_array()) throw ConfigError("config key 'world.priors' must be a list");
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::string pp = "world.priors[" + std::to_string(i) + "]";
        const auto& p = ps[i];
        check_object(p, pp, {"name", "raster", "samples", "count", "scheme", "seed"});
        PriorSource src;
        if (!p.contains("name")) throw ConfigError("config key '" + pp + ".name' is required");
        src.name = get<std::string>(p, "name", pp);
        if (p.contains("raster")) src.raster = resolve(base_dir, get<std::string>(p, "raster", pp));
        if (p.contains("samples")) src.samples = resolve(base_dir, get<std::string>(p, "samples", pp));
        if (!src.raster && !src.samples) throw ConfigError("config key '" + pp + "' needs 'raster' or 'samples'");
        read(p, "count", pp, src.count);
        read(p, "seed", pp, src.seed);
        if (p.contains("scheme")) {
          const auto scheme = get<std::string>(p, "scheme", pp);
          if (scheme == "dispersed")
            src.dispersed = true;
          else if (scheme == "even-grid")
            src.dispersed = false;
          else
            throw ConfigError("config key '" + pp + ".scheme' must be 'dispersed' or 'even-grid'");
        }
        spec.priors.push_back(std::move(src));
      }
    }
    if (!run.combo.empty()) throw ConfigError("config key 'priors' conflicts with 'world'");
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    check_object(o, "output", {"steps", "batch", "plot"});
    if (o.contains("steps")) spec.steps_csv = resolve(base_dir, get<std::string>(o, "steps", "output"));
    if (o.contains("batch")) spec.batch_csv = resolve(base_dir, get<std::string>(o, "batch", "output"));
    if (o.contains("plot")) spec.plot = resolve(base_dir, get<std::string>(o, "plot", "output"));
  }
  if (spec.replicates < 1) throw ConfigError("config key 'replicates' must be >= 1");
  try {
    run.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return spec;
}

RunSpec load_run_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_spec(j, path.parent_path());
}

World load_world(const RunSpec& spec) {
  if (!spec.qoi_raster) throw ConfigError("load_world: no qoi_raster configured");
  auto load_map = [&](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw ConfigError("raster not found: " + p.string());
    TruthMap m = read_raster(p).map;
    return spec.normalize_maps ? normalize(m) : m;
  };
  World world;
  world.qoi = load_map(*spec.qoi_raster);
  const Region& region = world.qoi.grid.region;
  for (const auto& src : spec.priors) {
    PriorQuantity p;
    p.name = src.name;
    if (src.raster) {
      p.map = load_map(*src.raster);
      for (const auto& row : scatter_samples(*p.map, src.count,
                                             src.dispersed ? ScatterScheme::Dispersed : ScatterScheme::EvenGrid,
                                             src.name, src.seed))
        p.samples.push_back({QuantityId(1), Location(row.x, row.y), row.value});
    } else {
      if (!std::filesystem::exists(*src.samples)) throw ConfigError("sample table not found: " + src.samples->string());
      for (const auto& row : read_samples(*src.samples)) {
        if (row.quantity != src.name) continue;
        const Location at(row.x, row.y);
        if (!region.contains(at))
          throw ConfigError("sample of '" + src.name + "' lies outside the raster extent: " + src.samples->string());
        p.samples.push_back({QuantityId(1), at, row.value});
      }
      if (p.samples.empty())
        throw ConfigError("sample table " + src.samples->string() + " has no rows for '" + src.name + "'");
    }
    world.priors.push_back(std::move(p));
  }
  return world;
}

}  // namespace atl

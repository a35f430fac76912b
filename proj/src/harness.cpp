#include "atl/harness.hpp"

#include "atl/geodata.hpp"
#include "text.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace atl {

World World::select(const std::vector<std::string>& names) const {
  World out;
  out.qoi = qoi;
  for (const auto& name : names) {
    const auto it = std::find_if(priors.begin(), priors.end(), [&](const PriorQuantity& p) { return p.name == name; });
    if (it == priors.end()) throw std::invalid_argument("world has no prior named '" + name + "'");
    out.priors.push_back(*it);
  }
  return out;
}

void RunConfig::validate() const {
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (prior_grid < 1) throw std::invalid_argument("prior_grid must be >= 1");
  if (eval_rows < 1 || eval_cols < 1) throw std::invalid_argument("eval grid must be at least 1x1");
  for (const char c : combo)
    if (!class_from_letter(c)) throw std::invalid_argument(std::string("combo: unknown prior class '") + c + "'");
  if (start && !region.contains(*start)) throw std::invalid_argument("start location outside region");
  acquisition.validate();
  if (fit.restarts < 1) throw std::invalid_argument("fit.restarts must be >= 1");
  if (fit.max_iters < 0) throw std::invalid_argument("fit.max_iters must be >= 0");
}

const NamedScore* StepRecord::score_for(const std::string& name) const {
  for (const auto& s : scores)
    if (s.name == name) return &s;
  return nullptr;
}

const SeriesStat* StepAggregate::score_for(const std::string& name) const {
  for (const auto& [n, s] : scores)
    if (n == name) return &s;
  return nullptr;
}

const ComboAggregate* BatchResult::find(const std::string& combo) const {
  for (const auto& c : combos)
    if (c.combo == combo) return &c;
  return nullptr;
}

ErrorMetrics prediction_error(const TrainedModel& model, const TruthMap& truth, const GridSpec& grid) {
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index r = 0; r < grid.rows; ++r)
    for (Eigen::Index c = 0; c < grid.cols; ++c) {
      const Location p = grid.cell_center(r, c);
      const double t = measure(truth, p);
      if (!std::isfinite(t)) continue;
      const double e = model.predict_mean(kQoi, p) - t;
      abs_sum += std::abs(e);
      sq_sum += e * e;
      ++n;
    }
  if (n == 0) return {};
  return {abs_sum / static_cast<double>(n), std::sqrt(sq_sum / static_cast<double>(n))};
}

double mean_abs_error(const TrainedModel& model, const TruthMap& truth, const GridSpec& grid) {
  return prediction_error(model, truth, grid).mae;
}

World make_synthetic_world(std::uint64_t seed, const RunConfig& cfg) {
  World world;
  // Priors derive from the normalized QOI so the medium-class noise level is
  // relative to a unit value range.
  world.qoi = normalize(generate_qoi(cfg.region, derive_seed(seed, 1), cfg.bumps));
  const DependenceClass classes[] = {DependenceClass::High, DependenceClass::Medium, DependenceClass::Low};
  std::uint64_t tag = 2;
  for (const auto cls : classes) {
    PriorQuantity p;
    p.name = std::string(1, class_letter(cls));
    p.map = normalize(derive_prior(world.qoi, cls, derive_seed(seed, tag++), cfg.bumps));
    p.samples = extract_prior_samples(*p.map, cfg.prior_grid);
    world.priors.push_back(std::move(p));
  }
  return world;
}

std::vector<StepRecord> run_episode(const RunConfig& cfg, const World& world) {
  cfg.validate();
  const std::size_t nq = 1 + world.priors.size();
  Dataset data(nq);
  std::vector<Observation> prior_points;
  for (std::size_t k = 0; k < world.priors.size(); ++k)
    for (auto o : world.priors[k].samples) {
      o.quantity = QuantityId(k + 1);
      data.add(o);
      prior_points.push_back(o);
    }

  FitConfig fit_cfg = cfg.fit;
  if (!fit_cfg.region) fit_cfg.region = cfg.region;
  const GridSpec eval_grid = cfg.eval_grid();
  const bool has_nodata = world.qoi.valid_count() < world.qoi.values.size();
  const Feasibility feasible = has_nodata ? Feasibility([&world](const Location& x) {
    return std::isfinite(measure(world.qoi, x));
  })
                                          : Feasibility{};

  std::vector<StepRecord> records;
  std::vector<Observation> qoi_samples;
  std::optional<Hyperparameters> previous;
  Location location = cfg.start_location();

  for (int t = 1; t <= cfg.budget; ++t) {
    const auto started = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.step = static_cast<std::size_t>(t);
    rec.location = location;
    rec.value = measure(world.qoi, location);
    if (!std::isfinite(rec.value)) throw EpisodeFailure("sample location has no data", rec.step);
    const Observation obs{kQoi, location, rec.value};
    data.add(obs);
    qoi_samples.push_back(obs);

    std::optional<TrainedModel> model;
    try {
      model = fit(data, derive_seed(cfg.seed, static_cast<std::uint64_t>(t)), fit_cfg,
                  previous ? &*previous : nullptr);
    } catch (const NumericalFailure&) {
      rec.fit_failed = true;
      if (!previous) throw EpisodeFailure("hyperparameter fit failed with no fallback", rec.step);
      try {
        model = TrainedModel::build(data, *previous, fit_cfg.jitter);
      } catch (const NumericalFailure&) {
        throw EpisodeFailure("fallback hyperparameters failed", rec.step);
      }
    }

    for (const auto& report : score_all(*model, rec.step))
      rec.scores.push_back({world.priors[report.prior_quantity.index - 1].name, report.r, report.score});
    const ErrorMetrics err = prediction_error(*model, world.qoi, eval_grid);
    rec.mae = err.mae;
    rec.rmse = err.rmse;
    rec.length_scale = model->params().kernel.length_scale;
    rec.noise_var = model->params().noise_var;
    rec.lml = model->log_likelihood();
    previous = model->params();

    if (t < cfg.budget) {
      AcquisitionConfig acq = cfg.acquisition;
      acq.seed = derive_seed(cfg.acquisition.seed ^ cfg.seed, 0x10000ULL + static_cast<std::uint64_t>(t));
      std::vector<Observation> anchors = qoi_samples;
      if (acq.nearest_includes_priors) anchors.insert(anchors.end(), prior_points.begin(), prior_points.end());
      location = select_next(*model, cfg.region, anchors, acq, feasible);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<std::string> all_combos() { return {"none", "H", "M", "L", "HM", "HL", "ML", "HML"}; }

std::vector<std::string> combo_priors(const std::string& combo) {
  std::vector<std::string> out;
  if (combo == "none" || combo.empty()) return out;
  for (const char c : combo) {
    const auto cls = class_from_letter(c);
    if (!cls) throw std::invalid_argument("combo '" + combo + "': unknown prior class");
    out.emplace_back(1, class_letter(*cls));
  }
  return out;
}

SeriesStat summarize(const std::vector<double>& xs) {
  SeriesStat s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::vector<ComboAggregate> aggregate(const std::vector<Episode>& episodes) {
  std::vector<std::string> order;
  for (const auto& e : episodes)
    if (std::find(order.begin(), order.end(), e.combo) == order.end()) order.push_back(e.combo);

  std::vector<ComboAggregate> out;
  for (const auto& combo : order) {
    ComboAggregate agg;
    agg.combo = combo;
    std::size_t max_steps = 0;
    std::vector<std::string> names;
    for (const auto& e : episodes) {
      if (e.combo != combo) continue;
      max_steps = std::max(max_steps, e.steps.size());
      for (const auto& st : e.steps)
        for (const auto& sc : st.scores)
          if (std::find(names.begin(), names.end(), sc.name) == names.end()) names.push_back(sc.name);
    }
    for (std::size_t i = 0; i < max_steps; ++i) {
      StepAggregate sa;
      sa.step = i + 1;
      std::vector<double> mae, rmse;
      std::map<std::string, std::vector<double>> scores;
      for (const auto& e : episodes) {
        if (e.combo != combo || i >= e.steps.size()) continue;
        const auto& st = e.steps[i];
        mae.push_back(st.mae);
        rmse.push_back(st.rmse);
        if (st.fit_failed) ++sa.fit_failures;
        for (const auto& sc : st.scores) scores[sc.name].push_back(sc.score);
      }
      sa.mae = summarize(mae);
      sa.rmse = summarize(rmse);
      for (const auto& n : names) sa.scores.emplace_back(n, summarize(scores[n]));
      agg.steps.push_back(std::move(sa));
    }
    out.push_back(std::move(agg));
  }
  return out;
}

BatchResult run_batch(const RunConfig& base, const std::vector<std::string>& combos, int replicates, int jobs) {
  if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  base.validate();
  for (const auto& c : combos) combo_priors(c);

  std::vector<World> worlds;
  worlds.reserve(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r)
    worlds.push_back(make_synthetic_world(derive_seed(base.seed, 0x574f524cULL + static_cast<std::uint64_t>(r)), base));

  struct Task {
    std::size_t combo;
    std::size_t replicate;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < combos.size(); ++c)
    for (std::size_t r = 0; r < static_cast<std::size_t>(replicates); ++r) tasks.push_back({c, r});

  BatchResult result;
  result.episodes.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      try {
        RunConfig cfg = base;
        cfg.combo = combos[task.combo] == "none" ? "" : combos[task.combo];
        cfg.seed = derive_seed(base.seed, 0x45504953ULL + task.replicate);
        const World world = worlds[task.replicate].select(combo_priors(combos[task.combo]));
        Episode& ep = result.episodes[i];
        ep.combo = combos[task.combo];
        ep.replicate = task.replicate;
        ep.steps = run_episode(cfg, world);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
      }
    }
  };

  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  result.combos = aggregate(result.episodes);
  return result;
}

std::vector<double> true_map_scores(const World& world, int samples, std::uint64_t seed, const FitConfig& fit_cfg) {
  if (samples < 1) throw std::invalid_argument("true_map_scores: samples must be >= 1");
  const std::size_t nq = 1 + world.priors.size();
  Dataset data(nq);
  std::mt19937_64 rng(seed);
  const Region& region = world.qoi.grid.region;
  std::uniform_real_distribution<double> ux(region.min_corner.x(), region.max_corner.x());
  std::uniform_real_distribution<double> uy(region.min_corner.y(), region.max_corner.y());
  int taken = 0;
  for (int tries = 0; taken < samples && tries < 1000 * samples; ++tries) {
    const Location p(ux(rng), uy(rng));
    std::vector<double> vals{measure(world.qoi, p)};
    for (const auto& prior : world.priors) {
      if (!prior.map) throw std::invalid_argument("true_map_scores: prior '" + prior.name + "' has no map");
      vals.push_back(measure(*prior.map, p));
    }
    if (!std::all_of(vals.begin(), vals.end(), [](double v) { return std::isfinite(v); })) continue;
    for (std::size_t q = 0; q < nq; ++q) data.add({QuantityId(q), p, vals[q]});
    ++taken;
  }
  FitConfig cfg = fit_cfg;
  if (!cfg.region) cfg.region = region;
  const TrainedModel model = fit(data, derive_seed(seed, 1), cfg);
  std::vector<double> out;
  for (const auto& r : score_all(model)) out.push_back(r.score);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

double parse_number(const std::string& cell, std::size_t line) {
  double v = 0.0;
  if (!text::parse_double(cell, v)) throw ParseError("bad number '" + cell + "'", line);
  return v;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name, std::size_t line) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("missing column '" + name + "'", line);
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

void format_step_csv(std::ostream& out, const std::vector<Episode>& episodes,
                     const std::vector<std::string>& prior_columns) {
  using text::format_double;
  out << "combo,replicate,step,x,y,value";
  for (const auto& p : prior_columns) out << ",score_" << p;
  out << ",mae,rmse,length_scale,noise_var,lml,fit_failed\n";
  for (const auto& e : episodes)
    for (const auto& s : e.steps) {
      out << e.combo << ',' << e.replicate << ',' << s.step << ',' << format_double(s.location.x()) << ','
          << format_double(s.location.y()) << ',' << format_double(s.value);
      for (const auto& p : prior_columns) {
        out << ',';
        if (const auto* sc = s.score_for(p)) out << format_double(sc->score);
      }
      out << ',' << format_double(s.mae) << ',' << format_double(s.rmse) << ',' << format_double(s.length_scale)
          << ',' << format_double(s.noise_var) << ',' << format_double(s.lml) << ',' << (s.fit_failed ? 1 : 0)
          << '\n';
    }
}

void emit_step_csv(const std::filesystem::path& path, const std::vector<Episode>& episodes,
                   const std::vector<std::string>& prior_columns) {
  auto out = open_output(path);
  format_step_csv(out, episodes, prior_columns);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Episode> parse_step_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("step csv: missing header", 1);
  ++line_no;
  const auto header = text::split_csv(line);
  std::vector<std::pair<std::string, std::size_t>> score_cols;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("score_", 0) == 0) score_cols.emplace_back(header[i].substr(6), i);
  const std::size_t c_combo = column(header, "combo", 1), c_rep = column(header, "replicate", 1),
                    c_step = column(header, "step", 1), c_x = column(header, "x", 1), c_y = column(header, "y", 1),
                    c_val = column(header, "value", 1), c_mae = column(header, "mae", 1),
                    c_rmse = column(header, "rmse", 1), c_ls = column(header, "length_scale", 1),
                    c_nv = column(header, "noise_var", 1), c_lml = column(header, "lml", 1),
                    c_ff = column(header, "fit_failed", 1);

  std::vector<Episode> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto cells = text::split_csv(line);
    if (cells.size() != header.size()) throw ParseError("step csv: wrong column count", line_no);
    const std::string& combo = cells[c_combo];
    const auto replicate = static_cast<std::size_t>(parse_number(cells[c_rep], line_no));
    if (out.empty() || out.back().combo != combo || out.back().replicate != replicate)
      out.push_back({combo, replicate, {}});
    StepRecord s;
    s.step = static_cast<std::size_t>(parse_number(cells[c_step], line_no));
    s.location = Location(parse_number(cells[c_x], line_no), parse_number(cells[c_y], line_no));
    s.value = parse_number(cells[c_val], line_no);
    for (const auto& [name, col] : score_cols)
      if (!cells[col].empty()) {
        const double score = parse_number(cells[col], line_no);
        s.scores.push_back({name, std::sqrt(score), score});
      }
    s.mae = parse_number(cells[c_mae], line_no);
    s.rmse = parse_number(cells[c_rmse], line_no);
    s.length_scale = parse_number(cells[c_ls], line_no);
    s.noise_var = parse_number(cells[c_nv], line_no);
    s.lml = parse_number(cells[c_lml], line_no);
    s.fit_failed = cells[c_ff] == "1";
    out.back().steps.push_back(std::move(s));
  }
  return out;
}

void format_batch_csv(std::ostream& out, const BatchResult& batch, const std::vector<std::string>& prior_columns) {
  using text::format_double;
  out << "combo,step,mean_mae,std_mae";
  for (const auto& p : prior_columns) out << ",mean_score_" << p << ",std_score_" << p;
  out << ",mean_rmse,std_rmse,fit_failures\n";
  for (const auto& c : batch.combos)
    for (const auto& s : c.steps) {
      out << c.combo << ',' << s.step << ',' << format_double(s.mae.mean) << ',' << format_double(s.mae.std);
      for (const auto& p : prior_columns) {
        const SeriesStat* st = s.score_for(p);
        if (st && st->count > 0)
          out << ',' << format_double(st->mean) << ',' << format_double(st->std);
        else
          out << ",,";
      }
      out << ',' << format_double(s.rmse.mean) << ',' << format_double(s.rmse.std) << ',' << s.fit_failures << '\n';
    }
}

void emit_batch_csv(const std::filesystem::path& path, const BatchResult& batch,
                    const std::vector<std::string>& prior_columns) {
  auto out = open_output(path);
  format_batch_csv(out, batch, prior_columns);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<ComboAggregate> parse_batch_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("batch csv: missing header", 1);
  const auto header = text::split_csv(line);
  std::vector<std::pair<std::string, std::size_t>> score_cols;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("mean_score_", 0) == 0) score_cols.emplace_back(header[i].substr(11), i);
  const std::size_t c_combo = column(header, "combo", 1), c_step = column(header, "step", 1),
                    c_mm = column(header, "mean_mae", 1), c_sm = column(header, "std_mae", 1),
                    c_mr = column(header, "mean_rmse", 1), c_sr = column(header, "std_rmse", 1),
                    c_ff = column(header, "fit_failures", 1);
  std::vector<ComboAggregate> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto cells = text::split_csv(line);
    if (cells.size() != header.size()) throw ParseError("batch csv: wrong column count", line_no);
    if (out.empty() || out.back().combo != cells[c_combo]) out.push_back({cells[c_combo], {}});
    StepAggregate s;
    s.step = static_cast<std::size_t>(parse_number(cells[c_step], line_no));
    s.mae = {parse_number(cells[c_mm], line_no), parse_number(cells[c_sm], line_no), 0};
    s.rmse = {parse_number(cells[c_mr], line_no), parse_number(cells[c_sr], line_no), 0};
    s.fit_failures = static_cast<std::size_t>(parse_number(cells[c_ff], line_no));
    for (const auto& [name, col] : score_cols)
      if (!cells[col].empty())
        s.scores.emplace_back(name, SeriesStat{parse_number(cells[col], line_no),
                                               parse_number(cells[col + 1], line_no), 1});
    out.back().steps.push_back(std::move(s));
  }
  return out;
}

void emit_plot(const std::vector<ComboAggregate>& combos, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << render_plot(combos);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace atl

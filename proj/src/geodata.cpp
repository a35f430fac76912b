#include "atl/geodata.hpp"

#include "text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace atl {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

using text::format_double;
using text::parse_double;
using text::trim;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

Region RasterHeader::region() const {
  return Region(Location(xll, yll),
                Location(xll + static_cast<double>(ncols) * cellsize, yll + static_cast<double>(nrows) * cellsize));
}

Raster parse_raster(std::istream& in) {
  std::map<std::string, std::pair<double, std::size_t>> fields;
  std::string line;
  std::size_t line_no = 0;
  bool center_x = false, center_y = false;

  // Header: key/value lines until the first line that starts with a number.
  std::streampos data_start = in.tellg();
  while (true) {
    data_start = in.tellg();
    if (!std::getline(in, line)) break;
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '-' || t[0] == '+' || t[0] == '.') {
      --line_no;
      in.clear();
      in.seekg(data_start);
      break;
    }
    std::istringstream ls(t);
    std::string key, value, extra;
    ls >> key >> value;
    if (value.empty() || (ls >> extra)) throw ParseError("raster header: expected '<key> <value>'", line_no);
    key = lower(key);
    if (key == "xllcenter") {
      key = "xllcorner";
      center_x = true;
    } else if (key == "yllcenter") {
      key = "yllcorner";
      center_y = true;
    }
    static const std::array<const char*, 6> known = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                                                     "nodata_value"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParseError("raster header: unknown key '" + key + "'", line_no);
    double v = 0.0;
    if (!parse_double(value, v)) throw ParseError("raster header: bad number for '" + key + "'", line_no);
    if (fields.count(key)) throw ParseError("raster header: duplicate key '" + key + "'", line_no);
    fields[key] = {v, line_no};
  }
  for (const char* required : {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize"})
    if (!fields.count(required)) throw ParseError(std::string("raster header: missing '") + required + "'", line_no);

  Raster r;
  auto count_field = [&](const char* key) {
    const auto [v, at] = fields[key];
    if (v < 1 || v != std::floor(v)) throw ParseError(std::string("raster header: ") + key + " must be a positive integer", at);
    return static_cast<Eigen::Index>(v);
  };
  r.header.ncols = count_field("ncols");
  r.header.nrows = count_field("nrows");
  r.header.cellsize = fields["cellsize"].first;
  if (!(r.header.cellsize > 0)) throw ParseError("raster header: cellsize must be > 0", fields["cellsize"].second);
  r.header.xll = fields["xllcorner"].first - (center_x ? 0.5 * r.header.cellsize : 0.0);
  r.header.yll = fields["yllcorner"].first - (center_y ? 0.5 * r.header.cellsize : 0.0);
  if (fields.count("nodata_value")) r.header.nodata = fields["nodata_value"].first;

  const Eigen::Index total = r.header.ncols * r.header.nrows;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(total));
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string token;
    while (ls >> token) {
      double v = 0.0;
      if (!parse_double(token, v)) throw ParseError("raster data: bad value '" + token + "'", line_no);
      if (static_cast<Eigen::Index>(values.size()) == total)
        throw ParseError("raster data: more than " + std::to_string(total) + " values", line_no);
      values.push_back(v);
    }
  }
  if (static_cast<Eigen::Index>(values.size()) != total)
    throw ParseError("raster data: expected " + std::to_string(total) + " values, found " +
                         std::to_string(values.size()),
                     line_no);

  r.map.grid = GridSpec(r.header.region(), r.header.nrows, r.header.ncols);
  r.map.values.resize(r.header.nrows, r.header.ncols);
  for (Eigen::Index i = 0; i < r.header.nrows; ++i)
    for (Eigen::Index j = 0; j < r.header.ncols; ++j) {
      const double v = values[static_cast<std::size_t>(i * r.header.ncols + j)];
      r.map.values(i, j) = (v == r.header.nodata) ? std::numeric_limits<double>::quiet_NaN() : v;
    }
  return r;
}

Raster read_raster(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_raster(in);
  } catch (const ParseError& e) {
    throw e.with_context(path.string() + ": ");
  }
}

RasterHeader header_for(const TruthMap& map, double nodata) {
  const auto& g = map.grid;
  if (std::abs(g.cell_width() - g.cell_height()) > 1e-9 * std::max(g.cell_width(), g.cell_height()))
    throw std::invalid_argument("raster: cells must be square");
  RasterHeader h;
  h.ncols = g.cols;
  h.nrows = g.rows;
  h.xll = g.region.min_corner.x();
  h.yll = g.region.min_corner.y();
  h.cellsize = g.cell_width();
  h.nodata = nodata;
  return h;
}

void format_raster(std::ostream& out, const TruthMap& map, double nodata) {
  const RasterHeader h = header_for(map, nodata);
  out << "ncols " << h.ncols << '\n'
      << "nrows " << h.nrows << '\n'
      << "xllcorner " << format_double(h.xll) << '\n'
      << "yllcorner " << format_double(h.yll) << '\n'
      << "cellsize " << format_double(h.cellsize) << '\n'
      << "NODATA_value " << format_double(h.nodata) << '\n';
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      if (c) out << ' ';
      const double v = map.values(r, c);
      out << format_double(std::isfinite(v) ? v : nodata);
    }
    out << '\n';
  }
}

void write_raster(const std::filesystem::path& path, const TruthMap& map, double nodata) {
  auto out = open_output(path);
  format_raster(out, map, nodata);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ValueRange value_range(const TruthMap& map) {
  ValueRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (Eigen::Index i = 0; i < map.values.size(); ++i) {
    const double v = map.values.data()[i];
    if (!std::isfinite(v)) continue;
    r.min = std::min(r.min, v);
    r.max = std::max(r.max, v);
  }
  return r;
}

TruthMap normalize(const TruthMap& map) {
  if (map.valid_count() < 2) throw std::invalid_argument("normalize: need at least two valid cells");
  const ValueRange range = value_range(map);
  TruthMap out = map;
  out.bumps.clear();
  const double span = range.max - range.min;
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    double& v = out.values.data()[i];
    if (!std::isfinite(v)) continue;
    v = span > 0 ? (v - range.min) / span : 0.5;
  }
  return out;
}

SampleTable parse_samples(std::istream& in) {
  SampleTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::vector<std::string> cells = text::split_csv(t);
    if (!header_seen) {
      if (cells != std::vector<std::string>{"quantity", "x", "y", "value"})
        throw ParseError("samples: header must be 'quantity,x,y,value'", line_no);
      header_seen = true;
      continue;
    }
    if (cells.size() != 4) throw ParseError("samples: expected 4 columns", line_no);
    SampleRow row;
    row.quantity = cells[0];
    if (row.quantity.empty()) throw ParseError("samples: empty quantity name", line_no);
    if (!parse_double(cells[1], row.x) || !parse_double(cells[2], row.y) || !parse_double(cells[3], row.value))
      throw ParseError("samples: bad number", line_no);
    if (!std::isfinite(row.x) || !std::isfinite(row.y) || !std::isfinite(row.value))
      throw ParseError("samples: non-finite number", line_no);
    table.push_back(std::move(row));
  }
  if (!header_seen) throw ParseError("samples: missing header", line_no);
  return table;
}

SampleTable read_samples(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_samples(in);
  } catch (const ParseError& e) {
    throw e.with_context(path.string() + ": ");
  }
}

void format_samples(std::ostream& out, const SampleTable& table) {
  out << "quantity,x,y,value\n";
  for (const auto& r : table)
    out << r.quantity << ',' << format_double(r.x) << ',' << format_double(r.y) << ',' << format_double(r.value)
        << '\n';
}

void write_samples(const std::filesystem::path& path, const SampleTable& table) {
  auto out = open_output(path);
  format_samples(out, table);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset to_dataset(const SampleTable& table, const std::vector<std::string>& quantities) {
  if (quantities.empty()) throw std::invalid_argument("to_dataset: no quantities");
  Dataset data(quantities.size());
  for (const auto& row : table) {
    const auto it = std::find(quantities.begin(), quantities.end(), row.quantity);
    if (it == quantities.end()) continue;
    data.add({QuantityId(static_cast<std::size_t>(it - quantities.begin())), Location(row.x, row.y), row.value});
  }
  return data;
}

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base), f = inv, out = 0.0;
  while (i > 0) {
    out += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return out;
}

bool on_valid_cell(const TruthMap& map, const Location& p) {
  const auto& g = map.grid;
  const auto c = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::floor((p.x() - g.region.min_corner.x()) / g.cell_width())), 0, g.cols - 1);
  const auto r = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::floor((g.region.max_corner.y() - p.y()) / g.cell_height())), 0, g.rows - 1);
  return map.valid(r, c) && std::isfinite(measure(map, p));
}

}  // namespace

SampleTable scatter_samples(const TruthMap& map, int n, ScatterScheme scheme, const std::string& quantity,
                            std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("scatter_samples: n must be >= 1");
  SampleTable out;
  const Region& region = map.grid.region;
  if (scheme == ScatterScheme::EvenGrid) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) throw std::invalid_argument("scatter_samples: even-grid needs a perfect square count");
    for (const auto& p : lattice_points(region, side))
      if (on_valid_cell(map, p)) out.push_back({quantity, p.x(), p.y(), measure(map, p)});
    return out;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double shift_x = unit(rng);
  const double shift_y = unit(rng);
  const std::uint64_t max_tries = 1000ULL * static_cast<std::uint64_t>(n);
  for (std::uint64_t i = 1; i <= max_tries && static_cast<int>(out.size()) < n; ++i) {
    const double u = std::fmod(radical_inverse(i, 2) + shift_x, 1.0);
    const double v = std::fmod(radical_inverse(i, 3) + shift_y, 1.0);
    const Location p = region.min_corner + Location(u * region.width(), v * region.height());
    if (on_valid_cell(map, p)) out.push_back({quantity, p.x(), p.y(), measure(map, p)});
  }
  return out;
}

}  // namespace atl

#ifndef ATL_GEODATA_HPP
#define ATL_GEODATA_HPP

// Gridded rasters in the plain-text GIS grid layout
//
//   ncols         <int>
//   nrows         <int>
//   xllcorner     <real>
//   yllcorner     <real>
//   cellsize      <real>
//   NODATA_value  <real>
//   <nrows lines of ncols values, northern row first>
//
// and sparse sample tables as CSV (`quantity,x,y,value`).

#include "atl/envgen.hpp"
#include "atl/mtgp.hpp"
#include "atl/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace atl {

struct RasterHeader {
  Eigen::Index ncols = 1;
  Eigen::Index nrows = 1;
  double xll = 0.0;
  double yll = 0.0;
  double cellsize = 1.0;
  double nodata = -9999.0;

  Region region() const;
};

struct Raster {
  RasterHeader header;
  TruthMap map;
};

Raster parse_raster(std::istream& in);
Raster read_raster(const std::filesystem::path& path);

/// Writes a raster; NaN cells are written as the nodata sentinel. Values use
/// the shortest decimal form that reads back to the identical double.
void format_raster(std::ostream& out, const TruthMap& map, double nodata = -9999.0);
void write_raster(const std::filesystem::path& path, const TruthMap& map, double nodata = -9999.0);

/// Header describing `map`; requires square cells.
RasterHeader header_for(const TruthMap& map, double nodata = -9999.0);

struct ValueRange {
  double min = 0.0;
  double max = 0.0;
};

/// Min/max over valid cells.
ValueRange value_range(const TruthMap& map);

/// Linear rescale of valid cells to [0, 1]; a constant map becomes all 0.5.
TruthMap normalize(const TruthMap& map);

struct SampleRow {
  std::string quantity;
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;

  friend bool operator==(const SampleRow&, const SampleRow&) = default;
};

using SampleTable = std::vector<SampleRow>;

SampleTable parse_samples(std::istream& in);
SampleTable read_samples(const std::filesystem::path& path);
void format_samples(std::ostream& out, const SampleTable& table);
void write_samples(const std::filesystem::path& path, const SampleTable& table);

/// Pools tables into a dataset; `quantities[i]` becomes QuantityId(i).
/// Rows naming other quantities are ignored.
Dataset to_dataset(const SampleTable& table, const std::vector<std::string>& quantities);

enum class ScatterScheme { EvenGrid, Dispersed };

/// Even grid: the n = k*k cell-centred lattice (n must be a perfect square).
/// Dispersed: a seeded, randomly shifted Halton sequence. Points on nodata
/// cells are skipped in both schemes.
SampleTable scatter_samples(const TruthMap& map, int n, ScatterScheme scheme, const std::string& quantity,
                            std::uint64_t seed = 0);

}  // namespace atl

#endif  // ATL_GEODATA_HPP

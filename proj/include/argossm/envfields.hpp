#ifndef ARGOSSM_ENVFIELDS_HPP
#define ARGOSSM_ENVFIELDS_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "argossm/types.hpp"

namespace argossm::env {

// Regular lon/lat(/time) grid of scalar values, e.g. ice concentration or
// bathymetry. Values are stored row-major in (time, lat, lon) order; a static
// grid has an empty time axis and a single time slab.
struct GridField {
  std::vector<double> lon_axis;   // strictly increasing
  std::vector<double> lat_axis;   // strictly increasing
  std::vector<double> time_axis;  // strictly increasing; empty for static
  std::vector<double> values;     // size = n_slabs() * nlat * nlon
  double fill_value = -9999.0;

  int nlon() const { return static_cast<int>(lon_axis.size()); }
  int nlat() const { return static_cast<int>(lat_axis.size()); }
  bool has_time() const { return !time_axis.empty(); }
  int n_slabs() const { return has_time() ? static_cast<int>(time_axis.size()) : 1; }

  double at(int it, int ilat, int ilon) const {
    return values[(static_cast<std::size_t>(it) * nlat() + ilat) * nlon() + ilon];
  }
  double& at(int it, int ilat, int ilon) {
    return values[(static_cast<std::size_t>(it) * nlat() + ilat) * nlon() + ilon];
  }

  bool is_fill(double v) const;

  // Index of the nearest time slab (ties resolve to the earlier one).
  int nearest_slab(double t) const;

  void validate() const;

  // GRIDFIELD v1 text format (see write for the exact layout).
  static GridField read(std::istream& in);
  static GridField read_file(const std::string& path);
  void write(std::ostream& out) const;
  void write_file(const std::string& path) const;
};

// Strict bilinear interpolation; throws DomainError outside the grid hull or
// on fill-valued corners. Time (when the grid has a time axis) selects the
// nearest slab.
double bilinear(const GridField& field, const Position& x,
                std::optional<double> t = std::nullopt);

// Like bilinear but clamps the query into the hull and falls back to the
// nearest non-fill corner; returns fallback when the whole cell is fill.
// Used during SMC where particles may briefly exit the grid.
double bilinear_clamped(const GridField& field, const Position& x,
                        std::optional<double> t = std::nullopt,
                        double fallback = 0.0);

struct QuadFit {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();  // per degree (lon, lat)
};

// Weighted local quadratic regression around x with Gaussian kernel weights
// exp(-d^2 / (2 bw^2)), d in km. Falls back to a locally-linear fit when the
// quadratic design is rank deficient.
QuadFit local_quadratic_fit(const GridField& field, const Position& x,
                            double bandwidth_km);

struct PvPoint {
  double pv = 0.0;
  Vec2 grad = Vec2::Zero();  // d(pv)/d(lon), d(pv)/d(lat)
};

inline constexpr double kEarthRotation = 7.292115e-5;  // rad/s

// Coriolis parameter 2*Omega*sin(pi*lat/180).
inline double coriolis(double lat_deg) {
  return 2.0 * kEarthRotation * std::sin(geo::kPi * lat_deg / 180.0);
}

// Potential vorticity f/h and its gradient from smoothed bathymetry.
// Throws DomainError when the smoothed depth is not positive (land).
PvPoint pv_and_gradient(const GridField& bathymetry, const Position& x,
                        double bandwidth_km);

// PV and grad-PV precomputed on a fine grid, bilinearly interpolated at query
// time. Land nodes are marked fill (NaN internally).
struct PvGradientGrid {
  std::vector<double> lon_axis;
  std::vector<double> lat_axis;
  std::vector<double> pv;        // nlat * nlon, NaN where undefined
  std::vector<double> grad_lon;
  std::vector<double> grad_lat;

  int nlon() const { return static_cast<int>(lon_axis.size()); }
  int nlat() const { return static_cast<int>(lat_axis.size()); }

  PvPoint query(const Position& x) const;          // strict, throws DomainError
  PvPoint query_clamped(const Position& x) const;  // nearest-node fallback
};

PvGradientGrid precompute_pv_grid(const GridField& bathymetry,
                                  const std::vector<double>& lon_axis,
                                  const std::vector<double>& lat_axis,
                                  double bandwidth_km);

enum class DetectFormula { Paper, Complement };

DetectFormula parse_detect_formula(const std::string& name);

// Environmental inputs threaded through simulation and inference.
struct EnvHandles {
  const GridField* ice = nullptr;
  const PvGradientGrid* pv = nullptr;
  DetectFormula detect_formula = DetectFormula::Paper;

  void require(ModelKind kind) const;
};

}  // namespace argossm::env

#endif

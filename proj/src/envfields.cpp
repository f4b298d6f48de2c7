#include "argossm/envfields.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "argossm/csv.hpp"

namespace argossm::env {

namespace {

void check_axis(const std::vector<double>& axis, const char* name) {
  if (axis.empty()) throw LoadError(std::string("grid axis '") + name + "' is empty");
  for (std::size_t i = 1; i < axis.size(); ++i)
    if (!(axis[i] > axis[i - 1]))
      throw LoadError(std::string("grid axis '") + name + "' not strictly increasing");
}

// Cell index i such that axis[i] <= q <= axis[i+1]; -1 outside the hull.
int cell_index(const std::vector<double>& axis, double q) {
  if (q < axis.front() || q > axis.back()) return -1;
  auto it = std::upper_bound(axis.begin(), axis.end(), q);
  int i = static_cast<int>(it - axis.begin()) - 1;
  return std::min(i, static_cast<int>(axis.size()) - 2);
}

int nearest_index(const std::vector<double>& axis, double q) {
  auto it = std::lower_bound(axis.begin(), axis.end(), q);
  if (it == axis.begin()) return 0;
  if (it == axis.end()) return static_cast<int>(axis.size()) - 1;
  int hi = static_cast<int>(it - axis.begin());
  return (q - axis[hi - 1] <= axis[hi] - q) ? hi - 1 : hi;
}

std::vector<double> parse_number_line(const std::string& line, long lineno) {
  std::vector<double> out;
  std::istringstream ss(line);
  double v;
  while (ss >> v) out.push_back(v);
  if (!ss.eof()) throw LoadError("malformed numeric value in grid file", lineno);
  return out;
}

}  // namespace

bool GridField::is_fill(double v) const {
  if (std::isnan(fill_value)) return std::isnan(v);
  return v == fill_value;
}

int GridField::nearest_slab(double t) const {
  if (!has_time()) return 0;
  return nearest_index(time_axis, t);
}

void GridField::validate() const {
  check_axis(lon_axis, "lon");
  check_axis(lat_axis, "lat");
  if (has_time()) check_axis(time_axis, "time");
  const std::size_t expect =
      static_cast<std::size_t>(n_slabs()) * nlat() * nlon();
  if (values.size() != expect)
    throw LoadError("grid values size " + std::to_string(values.size()) +
                    " does not match axes (expected " + std::to_string(expect) + ")");
}

GridField GridField::read(std::istream& in) {
  GridField g;
  std::string line;
  long lineno = 0;

  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) throw LoadError("unexpected end of grid file", lineno);
    ++lineno;
    return line;
  };

  std::istringstream header(next_line());
  std::string magic, version;
  int nlon = 0, nlat = 0, ntime = 0;
  double fill = 0.0;
  if (!(header >> magic >> version >> nlon >> nlat >> ntime >> fill) ||
      magic != "GRIDFIELD" || version != "v1")
    throw LoadError("bad GRIDFIELD v1 header", 1);
  if (nlon < 1 || nlat < 1 || ntime < 1)
    throw LoadError("grid dimensions must be positive", 1);
  g.fill_value = fill;

  g.lon_axis = parse_number_line(next_line(), lineno);
  g.lat_axis = parse_number_line(next_line(), lineno);
  g.time_axis = parse_number_line(next_line(), lineno);

  if (static_cast<int>(g.lon_axis.size()) != nlon)
    throw LoadError("lon axis length does not match header", 2);
  if (static_cast<int>(g.lat_axis.size()) != nlat)
    throw LoadError("lat axis length does not match header", 3);
  if (!g.time_axis.empty() && static_cast<int>(g.time_axis.size()) != ntime)
    throw LoadError("time axis length does not match header", 4);
  if (g.time_axis.empty() && ntime != 1)
    throw LoadError("static grid (empty time axis) requires ntime = 1", 4);

  g.values.reserve(static_cast<std::size_t>(ntime) * nlat * nlon);
  for (int r = 0; r < ntime * nlat; ++r) {
    auto row = parse_number_line(next_line(), lineno);
    if (static_cast<int>(row.size()) != nlon)
      throw LoadError("grid row has " + std::to_string(row.size()) +
                      " values, expected " + std::to_string(nlon), lineno);
    g.values.insert(g.values.end(), row.begin(), row.end());
  }
  g.validate();
  return g;
}

GridField GridField::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file '" + path + "'");
  return read(in);
}

void GridField::write(std::ostream& out) const {
  validate();
  out << "GRIDFIELD v1 " << nlon() << ' ' << nlat() << ' ' << n_slabs() << ' '
      << csv::fmt(fill_value) << '\n';
  auto write_axis = [&](const std::vector<double>& axis) {
    for (std::size_t i = 0; i < axis.size(); ++i)
      out << (i ? " " : "") << csv::fmt(axis[i]);
    out << '\n';
  };
  write_axis(lon_axis);
  write_axis(lat_axis);
  write_axis(time_axis);  // empty line when static
  for (int it = 0; it < n_slabs(); ++it)
    for (int ilat = 0; ilat < nlat(); ++ilat) {
      for (int ilon = 0; ilon < nlon(); ++ilon)
        out << (ilon ? " " : "") << csv::fmt(at(it, ilat, ilon));
      out << '\n';
    }
}

void GridField::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  write(out);
}

namespace {

double bilinear_at_slab(const GridField& f, int it, const Position& x, bool strict,
                        double fallback) {
  int ilon = cell_index(f.lon_axis, x.lon);
  int ilat = cell_index(f.lat_axis, x.lat);
  Position q = x;
  if (ilon < 0 || ilat < 0) {
    if (strict)
      throw DomainError("bilinear query (" + std::to_string(x.lon) + ", " +
                        std::to_string(x.lat) + ") outside grid hull");
    q.lon = std::clamp(x.lon, f.lon_axis.front(), f.lon_axis.back());
    q.lat = std::clamp(x.lat, f.lat_axis.front(), f.lat_axis.back());
    ilon = cell_index(f.lon_axis, q.lon);
    ilat = cell_index(f.lat_axis, q.lat);
  }

  const double x0 = f.lon_axis[ilon], x1 = f.lon_axis[ilon + 1];
  const double y0 = f.lat_axis[ilat], y1 = f.lat_axis[ilat + 1];
  const double tx = (q.lon - x0) / (x1 - x0);
  const double ty = (q.lat - y0) / (y1 - y0);

  const double c00 = f.at(it, ilat, ilon);
  const double c10 = f.at(it, ilat, ilon + 1);
  const double c01 = f.at(it, ilat + 1, ilon);
  const double c11 = f.at(it, ilat + 1, ilon + 1);

  const bool any_fill = f.is_fill(c00) || f.is_fill(c10) || f.is_fill(c01) || f.is_fill(c11);
  if (any_fill) {
    if (strict)
      throw DomainError("bilinear query (" + std::to_string(x.lon) + ", " +
                        std::to_string(x.lat) + ") touches fill-valued cell");
    // Nearest non-fill corner, by weight.
    struct Corner { double w, v; };
    const Corner corners[4] = {{(1 - tx) * (1 - ty), c00}, {tx * (1 - ty), c10},
                               {(1 - tx) * ty, c01},       {tx * ty, c11}};
    double best_w = -1.0, best_v = fallback;
    for (const auto& c : corners)
      if (!f.is_fill(c.v) && c.w > best_w) { best_w = c.w; best_v = c.v; }
    return best_v;
  }

  return (1 - tx) * (1 - ty) * c00 + tx * (1 - ty) * c10 + (1 - tx) * ty * c01 +
         tx * ty * c11;
}

int pick_slab(const GridField& f, std::optional<double> t, bool strict) {
  if (!f.has_time()) return 0;
  if (!t) throw DomainError("time-dependent grid queried without a time");
  if (strict && (*t < f.time_axis.front() || *t > f.time_axis.back()))
    throw DomainError("time " + std::to_string(*t) + " outside grid time hull");
  return f.nearest_slab(*t);
}

}  // namespace

double bilinear(const GridField& field, const Position& x, std::optional<double> t) {
  return bilinear_at_slab(field, pick_slab(field, t, true), x, true, 0.0);
}

double bilinear_clamped(const GridField& field, const Position& x,
                        std::optional<double> t, double fallback) {
  int slab = 0;
  if (field.has_time()) {
    const double tq = t ? *t : field.time_axis.front();
    slab = field.nearest_slab(std::clamp(tq, field.time_axis.front(), field.time_axis.back()));
  }
  return bilinear_at_slab(field, slab, x, false, fallback);
}

QuadFit local_quadratic_fit(const GridField& field, const Position& x,
                            double bandwidth_km) {
  if (!(bandwidth_km > 0.0)) throw ParameterError("bandwidth_km must be positive");
  if (field.has_time())
    throw ParameterError("local_quadratic_fit expects a static grid");

  // Gather nodes within 3 bandwidths; weights beyond that are negligible.
  const double reach_km = 3.0 * bandwidth_km;
  const double dlat_max = reach_km / geo::kKmPerDegLat;
  const double coslat = std::max(std::cos(geo::deg2rad(x.lat)), 1e-3);
  const double dlon_max = reach_km / (geo::kKmPerDegLonEquator * coslat);

  std::vector<double> dlon, dlat, w, val;
  int within_bw = 0;
  for (int ilat = 0; ilat < field.nlat(); ++ilat) {
    if (std::abs(field.lat_axis[ilat] - x.lat) > dlat_max) continue;
    for (int ilon = 0; ilon < field.nlon(); ++ilon) {
      if (std::abs(field.lon_axis[ilon] - x.lon) > dlon_max) continue;
      const double v = field.at(0, ilat, ilon);
      if (field.is_fill(v)) continue;
      const double d = geo::haversine_km(x.lon, x.lat, field.lon_axis[ilon],
                                         field.lat_axis[ilat]);
      if (d > reach_km) continue;
      if (d <= bandwidth_km) ++within_bw;
      dlon.push_back(field.lon_axis[ilon] - x.lon);
      dlat.push_back(field.lat_axis[ilat] - x.lat);
      w.push_back(std::exp(-0.5 * d * d / (bandwidth_km * bandwidth_km)));
      val.push_back(v);
    }
  }

  if (within_bw < 6)
    throw DomainError("local_quadratic_fit: only " + std::to_string(within_bw) +
                      " non-fill nodes within bandwidth at (" +
                      std::to_string(x.lon) + ", " + std::to_string(x.lat) + ")");

  const int m = static_cast<int>(val.size());
  Eigen::MatrixXd design(m, 6);
  Eigen::VectorXd rhs(m);
  for (int i = 0; i < m; ++i) {
    const double sw = std::sqrt(w[i]);
    design.row(i) << 1.0, dlon[i], dlat[i], dlon[i] * dlon[i],
        dlon[i] * dlat[i], dlat[i] * dlat[i];
    design.row(i) *= sw;
    rhs(i) = sw * val[i];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() == 6) {
    Eigen::VectorXd beta = qr.solve(rhs);
    return {beta(0), {beta(1), beta(2)}};
  }

  // Quadratic design is degenerate; fall back to a locally-linear fit.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrl(design.leftCols<3>());
  qrl.setThreshold(1e-10);
  if (qrl.rank() < 3)
    throw DomainError("local_quadratic_fit: design rank-deficient at (" +
                      std::to_string(x.lon) + ", " + std::to_string(x.lat) + ")");
  Eigen::VectorXd beta = qrl.solve(rhs);
  return {beta(0), {beta(1), beta(2)}};
}

PvPoint pv_and_gradient(const GridField& bathymetry, const Position& x,
                        double bandwidth_km) {
  const QuadFit fit = local_quadratic_fit(bathymetry, x, bandwidth_km);
  const double h = fit.value;
  if (!(h > 0.0))
    throw DomainError("pv_and_gradient: smoothed depth " + std::to_string(h) +
                      " <= 0 (land) at (" + std::to_string(x.lon) + ", " +
                      std::to_string(x.lat) + ")");
  const double f = coriolis(x.lat);
  const double df_dlat = 2.0 * geo::kPi * kEarthRotation *
                         std::cos(geo::kPi * x.lat / 180.0) / 180.0;
  PvPoint out;
  out.pv = f / h;
  out.grad = Vec2(0.0, df_dlat / h) - (f / (h * h)) * fit.gradient;
  return out;
}

PvGradientGrid precompute_pv_grid(const GridField& bathymetry,
                                  const std::vector<double>& lon_axis,
                                  const std::vector<double>& lat_axis,
                                  double bandwidth_km) {
  check_axis(lon_axis, "pv lon");
  check_axis(lat_axis, "pv lat");
  PvGradientGrid g;
  g.lon_axis = lon_axis;
  g.lat_axis = lat_axis;
  const std::size_t n = lon_axis.size() * lat_axis.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  g.pv.assign(n, nan);
  g.grad_lon.assign(n, nan);
  g.grad_lat.assign(n, nan);
  for (int ilat = 0; ilat < g.nlat(); ++ilat)
    for (int ilon = 0; ilon < g.nlon(); ++ilon) {
      try {
        const PvPoint p = pv_and_gradient(
            bathymetry, {lon_axis[ilon], lat_axis[ilat]}, bandwidth_km);
        const std::size_t k = static_cast<std::size_t>(ilat) * g.nlon() + ilon;
        g.pv[k] = p.pv;
        g.grad_lon[k] = p.grad(0);
        g.grad_lat[k] = p.grad(1);
      } catch (const DomainError&) {
        // land or insufficient support: leave as fill
      }
    }
  return g;
}

namespace {

PvPoint pv_bilinear(const PvGradientGrid& g, const Position& x, bool strict) {
  int ilon = cell_index(g.lon_axis, x.lon);
  int ilat = cell_index(g.lat_axis, x.lat);
  Position q = x;
  if (ilon < 0 || ilat < 0) {
    if (strict)
      throw DomainError("PV query (" + std::to_string(x.lon) + ", " +
                        std::to_string(x.lat) + ") outside grid hull");
    q.lon = std::clamp(x.lon, g.lon_axis.front(), g.lon_axis.back());
    q.lat = std::clamp(x.lat, g.lat_axis.front(), g.lat_axis.back());
    ilon = cell_index(g.lon_axis, q.lon);
    ilat = cell_index(g.lat_axis, q.lat);
  }
  const double tx = (q.lon - g.lon_axis[ilon]) / (g.lon_axis[ilon + 1] - g.lon_axis[ilon]);
  const double ty = (q.lat - g.lat_axis[ilat]) / (g.lat_axis[ilat + 1] - g.lat_axis[ilat]);

  auto node = [&](int dlat, int dlon) {
    return static_cast<std::size_t>(ilat + dlat) * g.nlon() + (ilon + dlon);
  };
  const std::size_t k00 = node(0, 0), k10 = node(0, 1), k01 = node(1, 0), k11 = node(1, 1);
  const bool any_nan = std::isnan(g.pv[k00]) || std::isnan(g.pv[k10]) ||
                       std::isnan(g.pv[k01]) || std::isnan(g.pv[k11]);
  if (any_nan) {
    if (strict)
      throw DomainError("PV query (" + std::to_string(x.lon) + ", " +
                        std::to_string(x.lat) + ") touches undefined node");
    // Nearest defined node of the cell; zero-gradient fallback otherwise.
    const double wts[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
    const std::size_t ks[4] = {k00, k10, k01, k11};
    double best_w = -1.0;
    PvPoint out;  // pv 0, grad 0: no constraint where PV is unknown
    for (int c = 0; c < 4; ++c)
      if (!std::isnan(g.pv[ks[c]]) && wts[c] > best_w) {
        best_w = wts[c];
        out = {g.pv[ks[c]], {g.grad_lon[ks[c]], g.grad_lat[ks[c]]}};
      }
    return out;
  }

  const double w00 = (1 - tx) * (1 - ty), w10 = tx * (1 - ty);
  const double w01 = (1 - tx) * ty, w11 = tx * ty;
  PvPoint out;
  out.pv = w00 * g.pv[k00] + w10 * g.pv[k10] + w01 * g.pv[k01] + w11 * g.pv[k11];
  out.grad(0) = w00 * g.grad_lon[k00] + w10 * g.grad_lon[k10] +
                w01 * g.grad_lon[k01] + w11 * g.grad_lon[k11];
  out.grad(1) = w00 * g.grad_lat[k00] + w10 * g.grad_lat[k10] +
                w01 * g.grad_lat[k01] + w11 * g.grad_lat[k11];
  return out;
}

}  // namespace

PvPoint PvGradientGrid::query(const Position& x) const {
  return pv_bilinear(*this, x, true);
}

PvPoint PvGradientGrid::query_clamped(const Position& x) const {
  return pv_bilinear(*this, x, false);
}

DetectFormula parse_detect_formula(const std::string& name) {
  if (name == "paper") return DetectFormula::Paper;
  if (name == "complement") return DetectFormula::Complement;
  throw ConfigError("unknown ice.detect_formula '" + name + "' (paper|complement)");
}

void EnvHandles::require(ModelKind kind) const {
  if (has_ice(kind) && ice == nullptr)
    throw ConfigError(std::string(kind_name(kind)) + " requires an ice concentration grid");
  if (has_pv(kind) && pv == nullptr)
    throw ConfigError(std::string(kind_name(kind)) + " requires a precomputed PV grid");
}

}  // namespace argossm::env

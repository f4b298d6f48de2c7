#include <doctest.h>

#include <cmath>
#include <sstream>

#include "argossm/envfields.hpp"
#include "argossm/rng.hpp"

using namespace argossm;
using env::GridField;

namespace {

GridField make_grid(std::vector<double> lon, std::vector<double> lat,
                    std::function<double(double, double)> f) {
  GridField g;
  g.lon_axis = std::move(lon);
  g.lat_axis = std::move(lat);
  g.values.resize(g.lon_axis.size() * g.lat_axis.size());
  for (int ilat = 0; ilat < g.nlat(); ++ilat)
    for (int ilon = 0; ilon < g.nlon(); ++ilon)
      g.at(0, ilat, ilon) = f(g.lon_axis[ilon], g.lat_axis[ilat]);
  return g;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

}  // namespace

TEST_CASE("bilinear at grid nodes and cell centers") {
  GridField g = make_grid({0, 1, 2}, {10, 11}, [](double lon, double lat) {
    return 3.0 * lon + 7.0 * lat;
  });

  CHECK(env::bilinear(g, {1.0, 11.0}) == doctest::Approx(3.0 + 77.0).epsilon(1e-14));
  // cell center equals the mean of the 4 corner values
  const double c = env::bilinear(g, {0.5, 10.5});
  const double corners = (g.at(0, 0, 0) + g.at(0, 0, 1) + g.at(0, 1, 0) + g.at(0, 1, 1)) / 4.0;
  CHECK(c == doctest::Approx(corners).epsilon(1e-14));
}

TEST_CASE("bilinear matches the direct weighted-corner formula at random points") {
  GridField g = make_grid(linspace(-5, 5, 11), linspace(-70, -60, 21),
                          [](double lon, double lat) {
                            return std::sin(lon) * std::cos(0.3 * lat) + 0.1 * lon * lat;
                          });
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const double lon = -5.0 + 10.0 * rng.uniform();
    const double lat = -70.0 + 10.0 * rng.uniform();
    // independent formula: locate the cell by scanning
    int i = 0, j = 0;
    while (i + 2 < g.nlon() && g.lon_axis[i + 1] <= lon) ++i;
    while (j + 2 < g.nlat() && g.lat_axis[j + 1] <= lat) ++j;
    const double tx = (lon - g.lon_axis[i]) / (g.lon_axis[i + 1] - g.lon_axis[i]);
    const double ty = (lat - g.lat_axis[j]) / (g.lat_axis[j + 1] - g.lat_axis[j]);
    const double expect = (1 - tx) * (1 - ty) * g.at(0, j, i) +
                          tx * (1 - ty) * g.at(0, j, i + 1) +
                          (1 - tx) * ty * g.at(0, j + 1, i) +
                          tx * ty * g.at(0, j + 1, i + 1);
    CHECK(env::bilinear(g, {lon, lat}) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("bilinear is exact for bilinear functions on each cell") {
  GridField g = make_grid(linspace(0, 4, 5), linspace(0, 3, 4),
                          [](double lon, double lat) {
                            return 2.0 + lon - 3.0 * lat + 0.5 * lon * lat;
                          });
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const double lon = 4.0 * rng.uniform();
    const double lat = 3.0 * rng.uniform();
    const double expect = 2.0 + lon - 3.0 * lat + 0.5 * lon * lat;
    CHECK(env::bilinear(g, {lon, lat}) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("bilinear domain errors and clamping") {
  GridField g = make_grid({0, 1}, {0, 1}, [](double, double) { return 1.0; });
  CHECK_THROWS_AS(env::bilinear(g, {2.0, 0.5}), DomainError);
  CHECK_THROWS_AS(env::bilinear(g, {0.5, -0.1}), DomainError);
  CHECK(env::bilinear_clamped(g, {2.0, 0.5}) == doctest::Approx(1.0));

  g.at(0, 0, 0) = g.fill_value;
  CHECK_THROWS_AS(env::bilinear(g, {0.1, 0.1}), DomainError);
  // clamped query falls back to the nearest non-fill corner
  CHECK(env::bilinear_clamped(g, {0.1, 0.1}) == doctest::Approx(1.0));
}

TEST_CASE("time axis uses the nearest-day snapshot") {
  GridField g;
  g.lon_axis = {0, 1};
  g.lat_axis = {0, 1};
  g.time_axis = {0.0, 10.0};
  g.values = {1, 1, 1, 1, 5, 5, 5, 5};
  CHECK(env::bilinear(g, {0.5, 0.5}, 4.0) == doctest::Approx(1.0));
  CHECK(env::bilinear(g, {0.5, 0.5}, 6.0) == doctest::Approx(5.0));
  CHECK(env::bilinear(g, {0.5, 0.5}, 5.0) == doctest::Approx(1.0));  // tie -> earlier
  CHECK_THROWS_AS(env::bilinear(g, {0.5, 0.5}, 11.0), DomainError);
  CHECK_THROWS_AS(env::bilinear(g, {0.5, 0.5}), DomainError);
  CHECK(env::bilinear_clamped(g, {0.5, 0.5}, 11.0) == doctest::Approx(5.0));
}

TEST_CASE("GRIDFIELD round trip is bit exact") {
  GridField g = make_grid(linspace(-3, 3, 7), linspace(-65, -60, 6),
                          [](double lon, double lat) { return lon * 0.123456789 + lat; });
  g.fill_value = -9999.0;
  std::ostringstream out;
  g.write(out);
  std::istringstream in(out.str());
  const GridField back = GridField::read(in);
  CHECK(back.lon_axis == g.lon_axis);
  CHECK(back.lat_axis == g.lat_axis);
  CHECK(back.values == g.values);

  std::ostringstream out2;
  back.write(out2);
  CHECK(out.str() == out2.str());
}

TEST_CASE("GRIDFIELD with time axis round trips") {
  GridField g;
  g.lon_axis = {0, 1, 2};
  g.lat_axis = {0, 1};
  g.time_axis = {5, 15};
  g.values.resize(12);
  for (std::size_t i = 0; i < 12; ++i) g.values[i] = 0.5 * double(i);
  std::ostringstream out;
  g.write(out);
  std::istringstream in(out.str());
  const GridField back = GridField::read(in);
  CHECK(back.time_axis == g.time_axis);
  CHECK(back.values == g.values);
}

TEST_CASE("GRIDFIELD read rejects malformed input") {
  std::istringstream bad1("GRIDFIELD v2 1 1 1 0\n0\n0\n\n1\n");
  CHECK_THROWS_AS(GridField::read(bad1), LoadError);
  std::istringstream bad2("GRIDFIELD v1 2 1 1 0\n0 1\n0\n\n1\n");  // short row
  CHECK_THROWS_AS(GridField::read(bad2), LoadError);
}

TEST_CASE("local quadratic fit recovers constants and linear fields") {
  GridField constant = make_grid(linspace(-2, 2, 21), linspace(-62, -58, 21),
                                 [](double, double) { return 42.0; });
  const env::QuadFit fc = env::local_quadratic_fit(constant, {0.0, -60.0}, 150.0);
  CHECK(fc.value == doctest::Approx(42.0).epsilon(1e-10));
  CHECK(fc.gradient.norm() == doctest::Approx(0.0).epsilon(1e-8));

  GridField linear = make_grid(linspace(-2, 2, 21), linspace(-62, -58, 21),
                               [](double lon, double lat) {
                                 return 5.0 + 2.5 * lon - 1.25 * lat;
                               });
  const env::QuadFit fl = env::local_quadratic_fit(linear, {0.3, -60.2}, 150.0);
  CHECK(fl.value == doctest::Approx(5.0 + 2.5 * 0.3 + 1.25 * 60.2).epsilon(1e-8));
  CHECK(fl.gradient(0) == doctest::Approx(2.5).epsilon(1e-8));
  CHECK(fl.gradient(1) == doctest::Approx(-1.25).epsilon(1e-8));
}

TEST_CASE("local quadratic fit matches a brute-force weighted normal-equations solve") {
  GridField g = make_grid(linspace(-2, 2, 17), linspace(-62, -58, 17),
                          [](double lon, double lat) {
                            return std::sin(0.8 * lon) + 0.05 * (lat + 60) * (lat + 60) +
                                   0.3 * lon * lat / 60.0;
                          });
  const Position q{0.4, -60.3};
  const double bw = 120.0;
  const env::QuadFit fit = env::local_quadratic_fit(g, q, bw);

  // dense oracle: all nodes, explicit 6x6 normal equations
  Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
  for (int ilat = 0; ilat < g.nlat(); ++ilat)
    for (int ilon = 0; ilon < g.nlon(); ++ilon) {
      const double d = geo::haversine_km(q.lon, q.lat, g.lon_axis[ilon], g.lat_axis[ilat]);
      if (d > 3.0 * bw) continue;
      const double w = std::exp(-0.5 * d * d / (bw * bw));
      const double dx = g.lon_axis[ilon] - q.lon;
      const double dy = g.lat_axis[ilat] - q.lat;
      Eigen::Matrix<double, 6, 1> phi;
      phi << 1, dx, dy, dx * dx, dx * dy, dy * dy;
      ata += w * phi * phi.transpose();
      atb += w * phi * g.at(0, ilat, ilon);
    }
  const Eigen::Matrix<double, 6, 1> beta = ata.ldlt().solve(atb);
  CHECK(fit.value == doctest::Approx(beta(0)).epsilon(1e-8));
  CHECK(fit.gradient(0) == doctest::Approx(beta(1)).epsilon(1e-7));
  CHECK(fit.gradient(1) == doctest::Approx(beta(2)).epsilon(1e-7));
}

TEST_CASE("local quadratic fit gradient is invariant to constant shifts") {
  auto base = [](double lon, double lat) { return std::cos(lon) + 0.2 * lat; };
  GridField g1 = make_grid(linspace(-2, 2, 15), linspace(-61, -59, 15), base);
  GridField g2 = make_grid(linspace(-2, 2, 15), linspace(-61, -59, 15),
                           [&](double lon, double lat) { return base(lon, lat) + 123.0; });
  const env::QuadFit f1 = env::local_quadratic_fit(g1, {0.2, -60.1}, 100.0);
  const env::QuadFit f2 = env::local_quadratic_fit(g2, {0.2, -60.1}, 100.0);
  CHECK((f1.gradient - f2.gradient).norm() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(f2.value - f1.value == doctest::Approx(123.0).epsilon(1e-9));
}

TEST_CASE("local quadratic fit requires enough support") {
  GridField tiny = make_grid({0, 40}, {-60, -20}, [](double, double) { return 1.0; });
  CHECK_THROWS_AS(env::local_quadratic_fit(tiny, {20.0, -40.0}, 50.0), DomainError);
}

TEST_CASE("pv_and_gradient equatorial and flat-bathymetry forms") {
  GridField flat = make_grid(linspace(-2, 2, 21), linspace(-1, 1, 21),
                             [](double, double) { return 4000.0; });
  // lat = 0: f = 0 so pv = 0 and only the beta term survives
  const env::PvPoint p0 = env::pv_and_gradient(flat, {0.0, 0.0}, 150.0);
  CHECK(p0.pv == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p0.grad(0) == doctest::Approx(0.0).epsilon(1e-15));
  const double expect_dlat =
      2.0 * geo::kPi * env::kEarthRotation / (180.0 * 4000.0);
  CHECK(p0.grad(1) == doctest::Approx(expect_dlat).epsilon(1e-6));

  GridField flat_south = make_grid(linspace(-2, 2, 21), linspace(-62, -58, 21),
                                   [](double, double) { return 3500.0; });
  const double lat = -60.0;
  const env::PvPoint ps = env::pv_and_gradient(flat_south, {0.0, lat}, 150.0);
  const double f = 2.0 * env::kEarthRotation * std::sin(geo::kPi * lat / 180.0);
  CHECK(ps.pv == doctest::Approx(f / 3500.0).epsilon(1e-9));
  const double beta = 2.0 * geo::kPi * env::kEarthRotation *
                      std::cos(geo::kPi * lat / 180.0) / (180.0 * 3500.0);
  CHECK(ps.grad(1) == doctest::Approx(beta).epsilon(1e-6));
  CHECK(std::abs(ps.grad(0)) < 1e-12);
}

TEST_CASE("pv gradient matches central finite differences within 1 percent") {
  GridField bathy = make_grid(linspace(-4, 4, 81), linspace(-64, -56, 81),
                              [](double lon, double lat) {
                                return 3000.0 + 600.0 * std::sin(0.4 * lon) +
                                       40.0 * (lat + 60.0);
                              });
  const double bw = 120.0;
  for (const Position q : {Position{0.7, -60.4}, Position{-1.2, -59.0}, Position{2.0, -61.5}}) {
    const env::PvPoint p = env::pv_and_gradient(bathy, q, bw);
    const double h = 1e-3;
    const double dlon = (env::pv_and_gradient(bathy, {q.lon + h, q.lat}, bw).pv -
                         env::pv_and_gradient(bathy, {q.lon - h, q.lat}, bw).pv) /
                        (2 * h);
    const double dlat = (env::pv_and_gradient(bathy, {q.lon, q.lat + h}, bw).pv -
                         env::pv_and_gradient(bathy, {q.lon, q.lat - h}, bw).pv) /
                        (2 * h);
    CHECK(p.grad(0) == doctest::Approx(dlon).epsilon(0.01));
    CHECK(p.grad(1) == doctest::Approx(dlat).epsilon(0.01));
  }
}

TEST_CASE("pv_and_gradient rejects land") {
  GridField land = make_grid(linspace(-2, 2, 21), linspace(-61, -59, 21),
                             [](double, double) { return -10.0; });
  CHECK_THROWS_AS(env::pv_and_gradient(land, {0.0, -60.0}, 150.0), DomainError);
}

TEST_CASE("precomputed PV grid agrees with direct computation") {
  GridField bathy = make_grid(linspace(-4, 4, 41), linspace(-64, -56, 41),
                              [](double lon, double lat) {
                                return 3200.0 + 500.0 * std::cos(0.5 * lon) +
                                       30.0 * (lat + 60.0);
                              });
  const double bw = 150.0;
  const env::PvGradientGrid grid = env::precompute_pv_grid(
      bathy, linspace(-3, 3, 31), linspace(-63, -57, 31), bw);

  // node identity
  const env::PvPoint at_node = grid.query({linspace(-3, 3, 31)[5], linspace(-63, -57, 31)[7]});
  const env::PvPoint direct =
      env::pv_and_gradient(bathy, {linspace(-3, 3, 31)[5], linspace(-63, -57, 31)[7]}, bw);
  CHECK(at_node.pv == doctest::Approx(direct.pv).epsilon(1e-12));
  CHECK(at_node.grad(1) == doctest::Approx(direct.grad(1)).epsilon(1e-12));

  // off-node spot checks within a 2 percent interpolation budget
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const Position q{-2.8 + 5.6 * rng.uniform(), -62.8 + 5.6 * rng.uniform()};
    const env::PvPoint qi = grid.query(q);
    const env::PvPoint qd = env::pv_and_gradient(bathy, q, bw);
    CHECK(qi.pv == doctest::Approx(qd.pv).epsilon(0.02));
    CHECK(qi.grad(1) == doctest::Approx(qd.grad(1)).epsilon(0.02));
  }
}

TEST_CASE("pv level-set direction changes pv at second order") {
  GridField bathy = make_grid(linspace(-4, 4, 61), linspace(-64, -56, 61),
                              [](double lon, double lat) {
                                return 3000.0 + 400.0 * std::sin(0.3 * lon) +
                                       25.0 * (lat + 60.0);
                              });
  const Position q{0.5, -60.0};
  const env::PvPoint p = env::pv_and_gradient(bathy, q, 150.0);
  const Vec2 tangent = Vec2(-p.grad(1), p.grad(0)).normalized();
  double prev_err = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double step = (k == 0) ? 2e-2 : 1e-2;
    const Position moved{q.lon + step * tangent(0), q.lat + step * tangent(1)};
    const double dpv = env::pv_and_gradient(bathy, moved, 150.0).pv - p.pv;
    if (k == 0) prev_err = std::abs(dpv);
    else CHECK(std::abs(dpv) < 0.3 * prev_err);  // roughly O(step^2)
  }
}

TEST_CASE("symmetric bathymetry bowl gives antisymmetric lon gradient") {
  GridField bowl = make_grid(linspace(-3, 3, 41), linspace(-62, -58, 41),
                             [](double lon, double lat) {
                               return 3000.0 + 100.0 * lon * lon + 0.0 * lat;
                             });
  const env::PvPoint left = env::pv_and_gradient(bowl, {-1.0, -60.0}, 120.0);
  const env::PvPoint right = env::pv_and_gradient(bowl, {1.0, -60.0}, 120.0);
  CHECK(left.grad(0) == doctest::Approx(-right.grad(0)).epsilon(1e-6));
}

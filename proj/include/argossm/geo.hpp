#ifndef ARGOSSM_GEO_HPP
#define ARGOSSM_GEO_HPP

#include <cmath>

namespace argossm::geo {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kEarthRadiusKm = 6371.0088;
// Local equirectangular scale factors (km per degree).
inline constexpr double kKmPerDegLat = 110.57;
inline constexpr double kKmPerDegLonEquator = 111.32;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }

inline double km_per_deg_lon(double lat_deg) {
  return kKmPerDegLonEquator * std::cos(deg2rad(lat_deg));
}

// Great-circle distance in km between two (lon, lat) points in degrees.
inline double haversine_km(double lon1, double lat1, double lon2, double lat2) {
  const double phi1 = deg2rad(lat1);
  const double phi2 = deg2rad(lat2);
  const double dphi = deg2rad(lat2 - lat1);
  const double dlam = deg2rad(lon2 - lon1);
  const double s1 = std::sin(0.5 * dphi);
  const double s2 = std::sin(0.5 * dlam);
  const double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

// Normalize a longitude into [-180, 180).
inline double normalize_lon(double lon) {
  double x = std::fmod(lon + 180.0, 360.0);
  if (x < 0.0) x += 360.0;
  return x - 180.0;
}

}  // namespace argossm::geo

#endif

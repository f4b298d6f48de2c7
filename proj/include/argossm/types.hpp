#ifndef ARGOSSM_TYPES_HPP
#define ARGOSSM_TYPES_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "argossm/errors.hpp"
#include "argossm/geo.hpp"

namespace argossm {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

// Geographic position in degrees east / degrees north.
struct Position {
  double lon = 0.0;
  double lat = 0.0;

  Vec2 vec() const { return {lon, lat}; }
  static Position of(const Vec2& v) { return {v(0), v(1)}; }

  // Wraps lon into [-180, 180); lat must already be in [-90, 90].
  Position normalized() const { return {geo::normalize_lon(lon), lat}; }
};

// Drift velocity in degrees per day.
struct Velocity {
  double v_lon = 0.0;
  double v_lat = 0.0;

  Vec2 vec() const { return {v_lon, v_lat}; }
  static Velocity of(const Vec2& v) { return {v(0), v(1)}; }
};

// Full latent state: position, velocity, and ice-avoidance counter.
struct LatentState {
  Position x;
  Velocity v;
  int s = 3;  // in {0,1,2,3}; 3 means three consecutive ice-free detections

  Vec4 xv() const { return {x.lon, x.lat, v.v_lon, v.v_lat}; }
};

enum class ModelKind { RW, AR, AR_ICE, ARGOSSM };

inline bool has_velocity(ModelKind k) { return k != ModelKind::RW; }
inline bool has_ice(ModelKind k) {
  return k == ModelKind::AR_ICE || k == ModelKind::ARGOSSM;
}
inline bool has_pv(ModelKind k) { return k == ModelKind::ARGOSSM; }
inline bool is_linear_gaussian(ModelKind k) {
  return k == ModelKind::RW || k == ModelKind::AR;
}

inline const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::RW: return "RW";
    case ModelKind::AR: return "AR";
    case ModelKind::AR_ICE: return "AR_ICE";
    case ModelKind::ARGOSSM: return "ARGOSSM";
  }
  return "?";
}

ModelKind parse_kind(const std::string& name);

// One float's observation record: cycle times, GPS fixes where available,
// and scalar measurements at a reference depth.
struct ProfileSeries {
  std::string float_id;
  std::vector<double> times;  // days, strictly increasing
  std::vector<std::optional<Position>> gps;
  std::vector<bool> available;
  std::vector<std::optional<double>> temperature;
  std::vector<std::optional<double>> salinity;
  std::string depth_label = "reference";

  int size() const { return static_cast<int>(times.size()); }

  int first_available() const {
    for (int n = 0; n < size(); ++n)
      if (available[n]) return n;
    return -1;
  }

  // Throws LoadError when basic structural invariants fail.
  void validate() const;
};

// All model parameters theta plus the initial-state prior.
struct ModelParams {
  Vec4 mu1 = Vec4::Zero();              // (lon, lat, v_lon, v_lat)
  Mat4 sigma1 = Mat4::Identity();
  Mat2 sigma_x = 1e-3 * Mat2::Identity();  // deg^2 per day
  Mat2 sigma_v = 1e-4 * Mat2::Identity();  // (deg/day)^2 per day
  Vec2 v0 = Vec2::Zero();                  // long-run velocity, deg/day
  double alpha = 0.9;                      // velocity mean-reversion in [0,1]
  double sigma_pv2 = 1.0;                  // PV pseudo-observation variance
  double p_tpr = 0.95;
  double p_tnr = 0.9;
  double p_mar = 0.05;
  Mat2 sigma_y = 1e-6 * Mat2::Identity();  // GPS noise, deg^2

  // Anchors mu1/sigma1 on the series' first available fix: position mean at
  // the fix, zero velocity mean, sigma1 = blockdiag(sigma_y, 0.01 I).
  ModelParams& anchor_initial_state(const ProfileSeries& series);

  // Throws ParameterError on violated invariants for the given kind.
  void validate(ModelKind kind) const;
};

// alpha^dt for dt > 0, with alpha = 0 treated as the limit 0.
inline double alpha_pow(double alpha, double dt) {
  if (alpha <= 0.0) return 0.0;
  return std::exp(dt * std::log(alpha));
}

bool is_spd(const Mat2& m, double tol = 0.0);
bool is_spd(const Mat4& m, double tol = 0.0);

}  // namespace argossm

#endif

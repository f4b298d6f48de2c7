#include "argossm/types.hpp"

#include <Eigen/Eigenvalues>

namespace argossm {

ModelKind parse_kind(const std::string& name) {
  if (name == "RW") return ModelKind::RW;
  if (name == "AR") return ModelKind::AR;
  if (name == "AR_ICE") return ModelKind::AR_ICE;
  if (name == "ARGOSSM") return ModelKind::ARGOSSM;
  throw ConfigError("unknown model kind '" + name + "'");
}

void ProfileSeries::validate() const {
  const std::size_t n = times.size();
  if (n < 2) throw LoadError("series '" + float_id + "' needs at least 2 profiles");
  if (gps.size() != n || available.size() != n || temperature.size() != n ||
      salinity.size() != n)
    throw LoadError("series '" + float_id + "' has inconsistent column lengths");
  for (std::size_t i = 1; i < n; ++i)
    if (!(times[i] > times[i - 1]))
      throw LoadError("series '" + float_id + "' times not strictly increasing at record " +
                      std::to_string(i + 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (available[i] != gps[i].has_value())
      throw LoadError("series '" + float_id + "' record " + std::to_string(i + 1) +
                      ": gps must be present iff available");
    if (gps[i]) {
      if (gps[i]->lat < -90.0 || gps[i]->lat > 90.0)
        throw LoadError("series '" + float_id + "' record " + std::to_string(i + 1) +
                        ": latitude outside [-90, 90]");
    }
  }
}

bool is_spd(const Mat2& m, double tol) {
  if ((m - m.transpose()).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + m.norm()))
    return false;
  Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  return es.eigenvalues().minCoeff() > tol;
}

bool is_spd(const Mat4& m, double tol) {
  if ((m - m.transpose()).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + m.norm()))
    return false;
  Eigen::SelfAdjointEigenSolver<Mat4> es(m);
  return es.eigenvalues().minCoeff() > tol;
}

ModelParams& ModelParams::anchor_initial_state(const ProfileSeries& series) {
  const int first = series.first_available();
  if (first < 0)
    throw ParameterError("series '" + series.float_id +
                         "' has no available fix to anchor the initial state");
  mu1.head<2>() = series.gps[first]->vec();
  mu1.tail<2>().setZero();
  sigma1.setZero();
  sigma1.topLeftCorner<2, 2>() = sigma_y;
  sigma1.bottomRightCorner<2, 2>() = 0.01 * Mat2::Identity();
  return *this;
}

void ModelParams::validate(ModelKind kind) const {
  if (!is_spd(sigma_x)) throw ParameterError("sigma_x must be symmetric positive definite");
  if (!is_spd(sigma_y)) throw ParameterError("sigma_y must be symmetric positive definite");
  if (!is_spd(sigma1)) throw ParameterError("sigma1 must be symmetric positive definite");
  if (has_velocity(kind)) {
    if (!is_spd(sigma_v)) throw ParameterError("sigma_v must be symmetric positive definite");
    if (alpha < 0.0 || alpha > 1.0) throw ParameterError("alpha must lie in [0, 1]");
    if (!v0.allFinite()) throw ParameterError("v0 must be finite");
  }
  if (has_ice(kind)) {
    for (auto [p, name] : {std::pair{p_tpr, "p_tpr"}, {p_tnr, "p_tnr"}, {p_mar, "p_mar"}})
      if (p < 0.0 || p > 1.0)
        throw ParameterError(std::string(name) + " must lie in [0, 1]");
  }
  if (has_pv(kind) && !(sigma_pv2 > 0.0))
    throw ParameterError("sigma_pv2 must be positive");
}

}  // namespace argossm

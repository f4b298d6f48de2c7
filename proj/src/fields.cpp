#include "argossm/fields.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "argossm/geo.hpp"

namespace argossm::fields {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;
}  // namespace

void MaternParams::validate() const {
  if (!(variance > 0.0)) throw ParameterError("matern variance must be positive");
  if (!(range_km > 0.0)) throw ParameterError("matern range_km must be positive");
  if (!(time_range_days > 0.0))
    throw ParameterError("matern time_range_days must be positive");
  if (nugget < 0.0) throw ParameterError("matern nugget must be nonnegative");
  if (smoothness != 0.5 && smoothness != 1.5 && smoothness != 2.5)
    throw ParameterError("matern smoothness must be one of 0.5, 1.5, 2.5");
}

double matern_correlation(double rho, double smoothness) {
  if (rho <= 0.0) return 1.0;
  if (smoothness == 0.5) return std::exp(-rho);
  if (smoothness == 1.5) {
    const double u = std::sqrt(3.0) * rho;
    return (1.0 + u) * std::exp(-u);
  }
  if (smoothness == 2.5) {
    const double u = std::sqrt(5.0) * rho;
    return (1.0 + u + u * u / 3.0) * std::exp(-u);
  }
  throw ParameterError("matern smoothness must be one of 0.5, 1.5, 2.5");
}

namespace {

double scaled_distance(double d_km, double dt_days, const MaternParams& p) {
  const double s = d_km / p.range_km;
  if (!std::isfinite(p.time_range_days)) return s;
  const double q = dt_days / p.time_range_days;
  return std::sqrt(s * s + q * q);
}

double cov_no_nugget(double d_km, double dt_days, const MaternParams& p) {
  return p.variance * matern_correlation(scaled_distance(d_km, dt_days, p),
                                         p.smoothness);
}

}  // namespace

double matern_cov(double d_km, double dt_days, const MaternParams& p) {
  if (d_km < 0.0 || dt_days < 0.0)
    throw ParameterError("matern_cov distances must be nonnegative");
  double c = cov_no_nugget(d_km, dt_days, p);
  if (d_km == 0.0 && dt_days == 0.0) c += p.nugget;
  return c;
}

MeanField::MeanField(std::vector<FieldObservation> obs, double bandwidth_km,
                     int harmonics, double period_days)
    : obs_(std::move(obs)),
      bandwidth_km_(bandwidth_km),
      harmonics_(harmonics),
      period_days_(period_days) {
  if (!(bandwidth_km_ > 0.0)) throw ParameterError("mean bandwidth must be positive");
  if (harmonics_ < 0) throw ParameterError("harmonics must be nonnegative");
  if (!(period_days_ > 0.0)) throw ParameterError("period must be positive");
}

std::optional<Eigen::VectorXd> MeanField::coefficients_at(const Position& x) const {
  const int p = basis_size();
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(p);
  int within = 0;
  Eigen::VectorXd phi(p);
  for (const FieldObservation& o : obs_) {
    const double d = geo::haversine_km(x.lon, x.lat, o.x.lon, o.x.lat);
    if (d > 5.0 * bandwidth_km_) continue;
    if (d <= bandwidth_km_) ++within;
    const double w = std::exp(-0.5 * d * d / (bandwidth_km_ * bandwidth_km_));
    phi(0) = 1.0;
    for (int h = 1; h <= harmonics_; ++h) {
      const double ang = 2.0 * geo::kPi * h * o.t / period_days_;
      phi(2 * h - 1) = std::cos(ang);
      phi(2 * h) = std::sin(ang);
    }
    ata.noalias() += w * phi * phi.transpose();
    atb.noalias() += w * phi * o.value;
  }
  if (within < p) return std::nullopt;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  // Reject near-singular designs (e.g. all observations at one season).
  const double dmax = ldlt.vectorD().maxCoeff();
  const double dmin = ldlt.vectorD().minCoeff();
  if (!(dmin > 1e-12 * dmax)) return std::nullopt;
  return ldlt.solve(atb);
}

std::optional<double> MeanField::value_at(const Position& x, double t) const {
  const auto beta = coefficients_at(x);
  if (!beta) return std::nullopt;
  double v = (*beta)(0);
  for (int h = 1; h <= harmonics_; ++h) {
    const double ang = 2.0 * geo::kPi * h * t / period_days_;
    v += (*beta)(2 * h - 1) * std::cos(ang) + (*beta)(2 * h) * std::sin(ang);
  }
  return v;
}

MeanField fit_mean(std::vector<FieldObservation> obs, double bandwidth_km,
                   int harmonics, double period_days) {
  return MeanField(std::move(obs), bandwidth_km, harmonics, period_days);
}

namespace {

Eigen::MatrixXd gram_matrix(const std::vector<FieldObservation>& pts,
                            const MaternParams& p) {
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = p.variance + p.nugget;
    for (int j = i + 1; j < n; ++j) {
      const double d = geo::haversine_km(pts[i].x.lon, pts[i].x.lat,
                                         pts[j].x.lon, pts[j].x.lat);
      const double dt = std::abs(pts[i].t - pts[j].t);
      k(i, j) = k(j, i) = cov_no_nugget(d, dt, p);
    }
  }
  return k;
}

}  // namespace

double gp_loglik(const std::vector<FieldObservation>& residuals,
                 const MaternParams& p) {
  const int n = static_cast<int>(residuals.size());
  if (n == 0) throw ParameterError("gp_loglik: empty residual set");
  const Eigen::MatrixXd k = gram_matrix(residuals, p);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return kNegInf;
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r(i) = residuals[i].value;
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * n * kLog2Pi - logdet - 0.5 * z.squaredNorm();
}

CovFit fit_cov(const std::vector<FieldObservation>& residuals,
               const MaternParams& init, const FitCovOptions& opt) {
  if (residuals.size() > 3000)
    throw ParameterError("fit_cov uses the exact dense likelihood; n must be <= 3000");
  init.validate();

  MaternParams cur = init;
  if (cur.nugget <= 0.0) cur.nugget = 1e-8 * cur.variance;

  // Coordinates optimized in log scale.
  enum Coord { kVar, kRange, kNugget, kTimeRange };
  std::vector<Coord> coords = {kVar, kRange, kNugget};
  if (opt.fit_time_range && std::isfinite(cur.time_range_days))
    coords.push_back(kTimeRange);

  auto get = [](const MaternParams& p, Coord c) {
    switch (c) {
      case kVar: return p.variance;
      case kRange: return p.range_km;
      case kNugget: return p.nugget;
      case kTimeRange: return p.time_range_days;
    }
    return 0.0;
  };
  auto set = [](MaternParams& p, Coord c, double v) {
    switch (c) {
      case kVar: p.variance = v; break;
      case kRange: p.range_km = v; break;
      case kNugget: p.nugget = v; break;
      case kTimeRange: p.time_range_days = v; break;
    }
  };

  double best = gp_loglik(residuals, cur);
  std::vector<double> step(coords.size(), 0.7);
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    bool any_step = false;
    for (std::size_t c = 0; c < coords.size(); ++c) {
      if (step[c] < opt.step_tol) continue;
      any_step = true;
      bool improved = false;
      for (double dir : {+1.0, -1.0}) {
        MaternParams cand = cur;
        set(cand, coords[c], get(cur, coords[c]) * std::exp(dir * step[c]));
        const double ll = gp_loglik(residuals, cand);
        if (ll > best) {
          best = ll;
          cur = cand;
          improved = true;
          break;
        }
      }
      if (!improved) step[c] *= 0.5;
    }
    if (!any_step) break;
  }
  return {cur, best};
}

std::vector<std::optional<Prediction>> predict(
    const std::vector<FieldObservation>& obs, const MeanField& mean,
    const MaternParams& cov, const std::vector<QueryNode>& nodes) {
  cov.validate();

  // Observations with an estimable mean contribute residuals.
  std::vector<FieldObservation> usable;
  usable.reserve(obs.size());
  for (const FieldObservation& o : obs) {
    const auto mu = mean.value_at(o.x, o.t);
    if (!mu) continue;
    FieldObservation r = o;
    r.value = o.value - *mu;
    usable.push_back(r);
  }
  if (usable.empty()) throw InferenceError("predict: no usable observations");

  const int n = static_cast<int>(usable.size());
  Eigen::MatrixXd k = gram_matrix(usable, cov);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  for (double jitter : {1e-8, 1e-6, 1e-4}) {
    if (llt.info() == Eigen::Success) break;
    llt.compute(k + jitter * cov.variance * Eigen::MatrixXd::Identity(n, n));
  }
  if (llt.info() != Eigen::Success)
    throw InferenceError("predict: Gram matrix not positive definite after jitter");

  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r(i) = usable[i].value;
  const Eigen::VectorXd alpha = llt.solve(r);

  std::vector<std::optional<Prediction>> out;
  out.reserve(nodes.size());
  Eigen::VectorXd kstar(n);
  for (const QueryNode& q : nodes) {
    const auto mu = mean.value_at(q.x, q.t);
    if (!mu) {
      out.push_back(std::nullopt);
      continue;
    }
    for (int i = 0; i < n; ++i) {
      const double d = geo::haversine_km(q.x.lon, q.x.lat, usable[i].x.lon,
                                         usable[i].x.lat);
      kstar(i) = cov_no_nugget(d, std::abs(q.t - usable[i].t), cov);
    }
    Prediction p;
    p.mean = *mu + kstar.dot(alpha);
    const Eigen::VectorXd v = llt.matrixL().solve(kstar);
    p.variance = std::max(0.0, cov.variance + cov.nugget - v.squaredNorm());
    out.push_back(p);
  }
  return out;
}

ImputationResult impute_aggregate(
    const std::vector<std::vector<FieldObservation>>& location_samples,
    const PipelineConfig& cfg, const std::vector<QueryNode>& nodes) {
  const int n_samples = static_cast<int>(location_samples.size());
  if (n_samples < 2)
    throw ConfigError("impute_aggregate needs at least 2 location samples");

  const int n_nodes = static_cast<int>(nodes.size());
  std::vector<std::vector<Prediction>> per_sample(n_samples);
  std::vector<bool> estimable(n_nodes, true);

  for (int s = 0; s < n_samples; ++s) {
    const MeanField mean = fit_mean(location_samples[s], cfg.mean_bandwidth_km,
                                    cfg.harmonics, cfg.period_days);
    MaternParams cov = cfg.cov_init;
    if (cfg.fit_covariance) {
      std::vector<FieldObservation> residuals;
      residuals.reserve(location_samples[s].size());
      for (const FieldObservation& o : location_samples[s]) {
        const auto mu = mean.value_at(o.x, o.t);
        if (!mu) continue;
        FieldObservation r = o;
        r.value = o.value - *mu;
        residuals.push_back(r);
      }
      if (residuals.size() >= 4) cov = fit_cov(residuals, cov, cfg.fit_options).params;
    }
    const auto preds = predict(location_samples[s], mean, cov, nodes);
    per_sample[s].resize(n_nodes);
    for (int q = 0; q < n_nodes; ++q) {
      if (!preds[q])
        estimable[q] = false;
      else
        per_sample[s][q] = *preds[q];
    }
  }

  ImputationResult out;
  out.nodes = nodes;
  out.n_samples = n_samples;
  out.summary.resize(n_nodes);
  for (int q = 0; q < n_nodes; ++q) {
    if (!estimable[q]) continue;
    NodeSummary sum;
    for (int s = 0; s < n_samples; ++s) {
      sum.mean_of_means += per_sample[s][q].mean;
      sum.mean_conditional_variance += per_sample[s][q].variance;
    }
    sum.mean_of_means /= n_samples;
    sum.mean_conditional_variance /= n_samples;
    for (int s = 0; s < n_samples; ++s) {
      const double d = per_sample[s][q].mean - sum.mean_of_means;
      sum.between_sample_variance += d * d;
    }
    sum.between_sample_variance /= n_samples;  // population variance over draws
    sum.total_variance = sum.mean_conditional_variance + sum.between_sample_variance;
    out.summary[q] = sum;
  }
  return out;
}

}  // namespace argossm::fields

#include "argossm/smc2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace argossm::smc2 {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;

enum class Transform { Logit, Log, Identity };

Transform transform_of(ParamId id) {
  switch (id) {
    case ParamId::Alpha:
    case ParamId::PMar:
    case ParamId::PTpr:
    case ParamId::PTnr:
      return Transform::Logit;
    case ParamId::SigmaPv2:
    case ParamId::SigmaX2:
    case ParamId::SigmaY2:
    case ParamId::SigmaV2:
      return Transform::Log;
    case ParamId::V0Lon:
    case ParamId::V0Lat:
      return Transform::Identity;
  }
  return Transform::Identity;
}

double log_sigmoid(double u) { return -std::log1p(std::exp(-u)); }

double lbeta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace

const char* param_name(ParamId id) {
  switch (id) {
    case ParamId::Alpha: return "alpha";
    case ParamId::SigmaPv2: return "sigma_pv2";
    case ParamId::V0Lon: return "v0_lon";
    case ParamId::V0Lat: return "v0_lat";
    case ParamId::PMar: return "p_mar";
    case ParamId::PTpr: return "p_tpr";
    case ParamId::PTnr: return "p_tnr";
    case ParamId::SigmaX2: return "sigma_x2";
    case ParamId::SigmaY2: return "sigma_y2";
    case ParamId::SigmaV2: return "sigma_v2";
  }
  return "?";
}

ParamId parse_param(const std::string& name) {
  for (ParamId id : {ParamId::Alpha, ParamId::SigmaPv2, ParamId::V0Lon,
                     ParamId::V0Lat, ParamId::PMar, ParamId::PTpr, ParamId::PTnr,
                     ParamId::SigmaX2, ParamId::SigmaY2, ParamId::SigmaV2})
    if (name == param_name(id)) return id;
  throw ConfigError("unknown parameter '" + name + "'");
}

double sample_dist(const Dist& dist, Rng& rng) {
  switch (dist.tag) {
    case DistTag::Beta:
      return rng.beta(dist.a, dist.b);
    case DistTag::LogNormal:
      return std::exp(dist.a + std::sqrt(dist.b) * rng.normal());
    case DistTag::Normal:
      return dist.a + std::sqrt(dist.b) * rng.normal();
    case DistTag::Gamma:
      return rng.gamma(dist.a, 1.0 / dist.b);
  }
  return 0.0;
}

double logpdf_dist(const Dist& dist, double x) {
  switch (dist.tag) {
    case DistTag::Beta: {
      if (x <= 0.0 || x >= 1.0) return kNegInf;
      return (dist.a - 1.0) * std::log(x) + (dist.b - 1.0) * std::log1p(-x) -
             lbeta(dist.a, dist.b);
    }
    case DistTag::LogNormal: {
      if (x <= 0.0) return kNegInf;
      const double z = std::log(x) - dist.a;
      return -std::log(x) - 0.5 * std::log(dist.b) - 0.5 * kLog2Pi -
             0.5 * z * z / dist.b;
    }
    case DistTag::Normal: {
      const double z = x - dist.a;
      return -0.5 * std::log(dist.b) - 0.5 * kLog2Pi - 0.5 * z * z / dist.b;
    }
    case DistTag::Gamma: {
      if (x <= 0.0) return kNegInf;
      return dist.a * std::log(dist.b) - std::lgamma(dist.a) +
             (dist.a - 1.0) * std::log(x) - dist.b * x;
    }
  }
  return kNegInf;
}

PriorSpec PriorSpec::defaults(ModelKind kind) {
  PriorSpec spec;
  auto add = [&](ParamId id, DistTag tag, double a, double b) {
    spec.params.push_back({id, {tag, a, b}, false, 0.0});
  };
  // Gamma rates chosen so the prior means are 0.02^2, 1e-6, 0.01^2.
  add(ParamId::SigmaX2, DistTag::Gamma, 2.0, 2.0 / 4e-4);
  add(ParamId::SigmaY2, DistTag::Gamma, 2.0, 2.0 / 1e-6);
  if (has_velocity(kind)) {
    add(ParamId::Alpha, DistTag::Beta, 8.9, 0.99);
    add(ParamId::V0Lon, DistTag::Normal, 0.0, 0.01);
    add(ParamId::V0Lat, DistTag::Normal, 0.0, 0.01);
    add(ParamId::SigmaV2, DistTag::Gamma, 2.0, 2.0 / 1e-4);
  }
  if (has_ice(kind)) {
    add(ParamId::PMar, DistTag::Beta, 1.0, 9.0);
    add(ParamId::PTpr, DistTag::Beta, 9.0, 1.0);
    add(ParamId::PTnr, DistTag::Beta, 9.0, 1.0);
  }
  if (has_pv(kind)) add(ParamId::SigmaPv2, DistTag::LogNormal, 0.0, 3.0);
  for (const ParamPrior& p : spec.params)
    if (!(p.dist.a > 0.0) || !(p.dist.b > 0.0))
      throw ParameterError("prior hyperparameters must be positive");
  return spec;
}

int PriorSpec::n_free() const {
  int n = 0;
  for (const auto& p : params)
    if (!p.fixed) ++n;
  return n;
}

std::vector<ParamId> PriorSpec::free_ids() const {
  std::vector<ParamId> ids;
  for (const auto& p : params)
    if (!p.fixed) ids.push_back(p.id);
  return ids;
}

void PriorSpec::fix(ParamId id, double value) {
  for (auto& p : params)
    if (p.id == id) {
      p.fixed = true;
      p.fixed_value = value;
      return;
    }
  throw ConfigError(std::string("cannot fix inactive parameter '") + param_name(id) + "'");
}

void PriorSpec::set_dist(ParamId id, const Dist& dist) {
  for (auto& p : params)
    if (p.id == id) {
      p.dist = dist;
      return;
    }
  throw ConfigError(std::string("cannot set prior for inactive parameter '") +
                    param_name(id) + "'");
}

const ParamPrior& PriorSpec::find(ParamId id) const {
  for (const auto& p : params)
    if (p.id == id) return p;
  throw ConfigError(std::string("parameter '") + param_name(id) + "' not in spec");
}

double to_unconstrained(ParamId id, double value) {
  switch (transform_of(id)) {
    case Transform::Logit:
      return std::log(value) - std::log1p(-value);
    case Transform::Log:
      return std::log(value);
    case Transform::Identity:
      return value;
  }
  return value;
}

double to_constrained(ParamId id, double u) {
  switch (transform_of(id)) {
    case Transform::Logit:
      return 1.0 / (1.0 + std::exp(-u));
    case Transform::Log:
      return std::exp(u);
    case Transform::Identity:
      return u;
  }
  return u;
}

double log_prior_unconstrained(const PriorSpec& spec, const Eigen::VectorXd& u) {
  if (u.size() != spec.n_free())
    throw ParameterError("theta vector size does not match the prior spec");
  double lp = 0.0;
  int j = 0;
  for (const auto& p : spec.params) {
    if (p.fixed) continue;
    const double uj = u(j++);
    const double c = to_constrained(p.id, uj);
    const double base = logpdf_dist(p.dist, c);
    if (!std::isfinite(base)) return kNegInf;
    lp += base;
    switch (transform_of(p.id)) {
      case Transform::Logit:
        lp += log_sigmoid(uj) + log_sigmoid(-uj);
        break;
      case Transform::Log:
        lp += uj;
        break;
      case Transform::Identity:
        break;
    }
  }
  return lp;
}

ModelParams to_model_params(const PriorSpec& spec, const Eigen::VectorXd& u,
                            const ModelParams& base) {
  if (u.size() != spec.n_free())
    throw ParameterError("theta vector size does not match the prior spec");
  ModelParams out = base;
  int j = 0;
  for (const auto& p : spec.params) {
    const double value = p.fixed ? p.fixed_value : to_constrained(p.id, u(j++));
    switch (p.id) {
      case ParamId::Alpha: out.alpha = value; break;
      case ParamId::SigmaPv2: out.sigma_pv2 = value; break;
      case ParamId::V0Lon: out.v0(0) = value; break;
      case ParamId::V0Lat: out.v0(1) = value; break;
      case ParamId::PMar: out.p_mar = value; break;
      case ParamId::PTpr: out.p_tpr = value; break;
      case ParamId::PTnr: out.p_tnr = value; break;
      case ParamId::SigmaX2: out.sigma_x = value * Mat2::Identity(); break;
      case ParamId::SigmaY2: out.sigma_y = value * Mat2::Identity(); break;
      case ParamId::SigmaV2: out.sigma_v = value * Mat2::Identity(); break;
    }
  }
  out.sigma1.setZero();
  out.sigma1.topLeftCorner<2, 2>() = out.sigma_y;
  out.sigma1.bottomRightCorner<2, 2>() = 0.01 * Mat2::Identity();
  return out;
}

ThetaCloud sample_prior(const PriorSpec& spec, int n_theta, std::uint64_t seed) {
  if (n_theta < 1) throw ConfigError("need at least one theta particle");
  const int d = spec.n_free();
  ThetaCloud cloud;
  cloud.theta_u.resize(d, n_theta);
  cloud.log_w = Eigen::VectorXd::Constant(n_theta, -std::log(double(n_theta)));
  cloud.loglik = Eigen::VectorXd::Constant(n_theta, 0.0);
  cloud.xi = 0.0;
  const Rng root(seed);
  for (int i = 0; i < n_theta; ++i) {
    Rng rng = root.substream(0x7072ULL, i);
    int j = 0;
    for (const auto& p : spec.params) {
      if (p.fixed) continue;
      cloud.theta_u(j++, i) = to_unconstrained(p.id, sample_dist(p.dist, rng));
    }
  }
  return cloud;
}

double next_temperature(const ThetaCloud& cloud, double target_ess_frac) {
  if (!(target_ess_frac > 0.0) || target_ess_frac > 1.0)
    throw ConfigError("target_ess_frac must lie in (0, 1]");
  const double target = target_ess_frac * cloud.size();

  auto ess_at = [&](double xi_next) {
    const Eigen::VectorXd lw =
        cloud.log_w + (xi_next - cloud.xi) * cloud.loglik;
    return smc::ess(lw);
  };

  if (ess_at(1.0) >= target) return 1.0;
  double lo = cloud.xi;
  double hi = 1.0;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ess_at(mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  return std::max(lo, cloud.xi + 1e-8);
}

void Smc2Config::validate() const {
  if (n_theta < 8) throw ConfigError("smc2.n_theta must be >= 8");
  if (n_moves < 0) throw ConfigError("smc2.n_moves must be >= 0");
  if (!(target_ess_frac > 0.0) || target_ess_frac > 1.0)
    throw ConfigError("smc2.target_ess_frac must lie in (0, 1]");
  pf.validate();
}

namespace {

double pf_loglik(const PriorSpec& spec, const Eigen::VectorXd& u,
                 const ProfileSeries& series, ModelKind kind,
                 const env::EnvHandles& env, const ModelParams& base,
                 const smc::SmcConfig& pf_cfg, std::uint64_t seed, long& failures) {
  try {
    const ModelParams params = to_model_params(spec, u, base);
    smc::SmcConfig cfg = pf_cfg;
    cfg.seed = seed;
    return smc::run_filter(series, params, kind, env, cfg).loglik;
  } catch (const Error&) {
    ++failures;
    return kNegInf;
  }
}

}  // namespace

RejuvenationStats rejuvenate(ThetaCloud& cloud, const PriorSpec& spec,
                             const ProfileSeries& series, ModelKind kind,
                             const env::EnvHandles& env, const ModelParams& base,
                             const Smc2Config& cfg, std::uint64_t seed) {
  RejuvenationStats stats;
  const int m = cloud.size();
  const int d = static_cast<int>(cloud.theta_u.rows());
  if (d == 0 || cfg.n_moves == 0) return stats;

  // Random-walk proposal scaled by the cloud's empirical covariance.
  const Eigen::VectorXd mean = cloud.theta_u.rowwise().mean();
  Eigen::MatrixXd centered = cloud.theta_u.colwise() - mean;
  Eigen::MatrixXd cov =
      centered * centered.transpose() / std::max(1, m - 1);
  cov *= 2.38 * 2.38 / d;
  cov += 1e-10 * (1.0 + cov.trace()) * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw InferenceError("rejuvenation proposal covariance not positive definite");
  const Eigen::MatrixXd prop_chol = llt.matrixL();

  const Rng root(seed);
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd u_cur = cloud.theta_u.col(i);
    double ll_cur = cloud.loglik(i);
    double lp_cur = log_prior_unconstrained(spec, u_cur);
    for (int mv = 0; mv < cfg.n_moves; ++mv) {
      Rng rng = root.substream(0x6d6f7665ULL, i, mv);
      ++stats.attempted;
      const Eigen::VectorXd u_prop = u_cur + prop_chol * rng.normal_vec(d);
      const double lp_prop = log_prior_unconstrained(spec, u_prop);
      if (!std::isfinite(lp_prop)) continue;
      const double ll_prop =
          pf_loglik(spec, u_prop, series, kind, env, base, cfg.pf,
                    mix64(seed, 0x7066ULL, i, mv), stats.pf_failures);
      if (!std::isfinite(ll_prop)) continue;
      const double log_acc =
          (lp_prop + cloud.xi * ll_prop) - (lp_cur + cloud.xi * ll_cur);
      if (std::log(rng.uniform()) < log_acc) {
        u_cur = u_prop;
        ll_cur = ll_prop;
        lp_cur = lp_prop;
        ++stats.accepted;
      }
    }
    cloud.theta_u.col(i) = u_cur;
    cloud.loglik(i) = ll_cur;
  }
  return stats;
}

Smc2Result run_smc2(const ProfileSeries& series, const PriorSpec& spec,
                    ModelKind kind, const env::EnvHandles& env,
                    const ModelParams& base, const Smc2Config& cfg) {
  cfg.validate();
  env.require(kind);

  Smc2Result out;
  out.param_ids = spec.free_ids();

  ThetaCloud cloud = sample_prior(spec, cfg.n_theta, mix64(cfg.seed, 1));
  for (int i = 0; i < cloud.size(); ++i)
    cloud.loglik(i) =
        pf_loglik(spec, cloud.theta_u.col(i), series, kind, env, base, cfg.pf,
                  mix64(cfg.seed, 2, i), out.pf_failures);
  if (!cloud.loglik.array().isFinite().any())
    throw InferenceError("every prior draw produced a failed likelihood estimate");

  const Rng root(cfg.seed);
  int step = 0;
  while (cloud.xi < 1.0) {
    if (++step > 10000)
      throw InferenceError("temperature ladder failed to reach 1");
    const double xi_next = next_temperature(cloud, cfg.target_ess_frac);
    const Eigen::VectorXd lw_un =
        cloud.log_w + (xi_next - cloud.xi) * cloud.loglik;
    const double inc = smc::logsumexp(lw_un);
    if (!std::isfinite(inc)) {
      std::ostringstream ladder;
      for (const auto& s : out.ladder) ladder << ' ' << s.xi;
      throw InferenceError("non-finite evidence increment at xi = " +
                           std::to_string(xi_next) + "; ladder so far:" + ladder.str());
    }
    out.log_evidence += inc;
    cloud.log_w = lw_un.array() - inc;
    cloud.xi = xi_next;
    const double e = smc::ess(cloud.log_w);

    LadderStep ls;
    ls.xi = xi_next;
    ls.ess = e;
    ls.log_evidence_inc = inc;

    // Adaptive tempering drives the ESS to its target at every interior step,
    // so resample-and-move fires there; at xi = 1 only if the ESS sagged.
    const bool move = e <= cfg.target_ess_frac * cloud.size() * (1.0 + 1e-9);
    if (move) {
      Rng rrng = root.substream(0x72657332ULL, step);
      const Eigen::VectorXd w = cloud.log_w.array().exp();
      const std::vector<int> anc = smc::systematic_resample_from_u(w, rrng.uniform());
      Eigen::MatrixXd theta_r(cloud.theta_u.rows(), cloud.size());
      Eigen::VectorXd ll_r(cloud.size());
      for (int k = 0; k < cloud.size(); ++k) {
        theta_r.col(k) = cloud.theta_u.col(anc[k]);
        ll_r(k) = cloud.loglik(anc[k]);
      }
      cloud.theta_u.swap(theta_r);
      cloud.loglik.swap(ll_r);
      cloud.log_w.setConstant(-std::log(double(cloud.size())));

      const RejuvenationStats stats =
          rejuvenate(cloud, spec, series, kind, env, base, cfg,
                     mix64(cfg.seed, 4, step));
      out.pf_failures += stats.pf_failures;
      ls.acceptance_rate =
          stats.attempted > 0 ? double(stats.accepted) / double(stats.attempted) : 0.0;
    }
    out.ladder.push_back(ls);
  }

  out.theta_u = cloud.theta_u;
  out.log_w = cloud.log_w;
  out.loglik = cloud.loglik;
  out.theta_c.resize(cloud.theta_u.rows(), cloud.size());
  for (int i = 0; i < cloud.size(); ++i) {
    int j = 0;
    for (ParamId id : out.param_ids) {
      out.theta_c(j, i) = to_constrained(id, cloud.theta_u(j, i));
      ++j;
    }
  }

  if (cfg.n_traj_draws > 0) {
    const Eigen::VectorXd w = cloud.log_w.array().exp();
    Rng trng = root.substream(0x74726a31ULL);
    // Spread trajectory draws over the theta cloud proportionally to weight.
    Eigen::VectorXd wsel = w;
    std::vector<int> sel(cfg.n_traj_draws);
    {
      const int nd = cfg.n_traj_draws;
      double cum = wsel(0);
      int j = 0;
      const double u = trng.uniform();
      for (int k = 0; k < nd; ++k) {
        const double point = (k + u) / nd;
        while (point > cum && j + 1 < cloud.size()) cum += wsel(++j);
        sel[k] = j;
      }
    }
    out.trajectories.times = series.times;
    for (int k = 0; k < cfg.n_traj_draws; ++k) {
      const int ti = sel[k];
      const ModelParams params =
          to_model_params(spec, cloud.theta_u.col(ti), base);
      smc::SmcConfig pf_cfg = cfg.pf;
      pf_cfg.seed = mix64(cfg.seed, 6, k);
      try {
        const smc::FilterResult fr =
            smc::run_filter(series, params, kind, env, pf_cfg);
        smc::PosteriorDraws d =
            smc::ffbs(fr, series, params, kind, env, 1, mix64(cfg.seed, 7, k));
        out.trajectories.draws.push_back(std::move(d.draws[0]));
        out.traj_theta_index.push_back(ti);
      } catch (const Error&) {
        ++out.pf_failures;
      }
    }
  }

  return out;
}

}  // namespace argossm::smc2

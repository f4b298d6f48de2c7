#include "argossm/state_model.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "argossm/ice_mc.hpp"

namespace argossm::state {

namespace {

Mat2 chol2(const Mat2& m, const char* what) {
  Eigen::LLT<Mat2> llt(m);
  if (llt.info() != Eigen::Success)
    throw ParameterError(std::string(what) + " is not positive definite");
  return llt.matrixL();
}

}  // namespace

Position transition_rw(const Position& x_prev, double dt, const ModelParams& params,
                       const Vec2& noise) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  const Mat2 l = chol2(dt * params.sigma_x, "dt*sigma_x");
  return Position::of(x_prev.vec() + l * noise);
}

std::pair<Position, Velocity> transition_ar(const Position& x_prev,
                                            const Velocity& v_prev, double dt,
                                            const ModelParams& params,
                                            const Vec4& noise) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  if (params.alpha < 0.0 || params.alpha > 1.0)
    throw ParameterError("alpha must lie in [0, 1]");
  const double a = alpha_pow(params.alpha, dt);
  const Mat2 lx = chol2(dt * params.sigma_x, "dt*sigma_x");
  const Mat2 lv = chol2(dt * params.sigma_v, "dt*sigma_v");
  const Vec2 x = x_prev.vec() + dt * v_prev.vec() + lx * noise.head<2>();
  const Vec2 v = (1.0 - a) * params.v0 + a * v_prev.vec() + lv * noise.tail<2>();
  return {Position::of(x), Velocity::of(v)};
}

Gaussian2 pv_velocity_posterior(const Vec2& prior_mean, const Mat2& prior_cov,
                                double sigma_pv2, const Vec2& grad_pv) {
  if (!(sigma_pv2 > 0.0)) throw ParameterError("sigma_pv2 must be positive");
  Gaussian2 out;
  const Mat2 prior_prec = prior_cov.inverse();
  out.prec = prior_prec + grad_pv * grad_pv.transpose() / sigma_pv2;
  const double det = out.prec(0, 0) * out.prec(1, 1) - out.prec(0, 1) * out.prec(1, 0);
  out.logdet_prec = std::log(det);
  out.cov << out.prec(1, 1), -out.prec(0, 1), -out.prec(1, 0), out.prec(0, 0);
  out.cov /= det;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = out.cov * (prior_prec * prior_mean);
  out.chol = chol2(out.cov, "PV posterior covariance");
  return out;
}

Velocity pv_constrained_velocity_update(const Velocity& v_prev, double dt,
                                        const ModelParams& params,
                                        const Vec2& grad_pv, const Vec2& noise) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  const double a = alpha_pow(params.alpha, dt);
  const Vec2 m = (1.0 - a) * params.v0 + a * v_prev.vec();
  const Gaussian2 post =
      pv_velocity_posterior(m, Mat2(dt * params.sigma_v), params.sigma_pv2, grad_pv);
  return Velocity::of(post.mean + post.chol * noise);
}

Position measure_gps(const Position& x, const ModelParams& params, const Vec2& noise) {
  const Mat2 l = chol2(params.sigma_y, "sigma_y");
  return Position::of(x.vec() + l * noise);
}

SimResult simulate(ModelKind kind, const ModelParams& params,
                   const std::vector<double>& times, const env::EnvHandles& env,
                   Rng& rng, const std::string& float_id) {
  const int n = static_cast<int>(times.size());
  if (n < 2) throw ParameterError("simulate needs at least 2 times");
  for (int i = 1; i < n; ++i)
    if (!(times[i] > times[i - 1]))
      throw ParameterError("simulate times must be strictly increasing");
  params.validate(kind);
  env.require(kind);

  const Mat4 l1 = [&] {
    Eigen::LLT<Mat4> llt(params.sigma1);
    if (llt.info() != Eigen::Success)
      throw ParameterError("sigma1 is not positive definite");
    return Mat4(llt.matrixL());
  }();

  SimResult out;
  out.latent.resize(n);
  out.series.float_id = float_id;
  out.series.times = times;
  out.series.gps.resize(n);
  out.series.available.assign(n, false);
  out.series.temperature.resize(n);
  out.series.salinity.resize(n);

  // Initial state.
  const Vec4 z1 = params.mu1 + l1 * rng.normal4();
  out.latent[0].x = {z1(0), z1(1)};
  out.latent[0].v = has_velocity(kind) ? Velocity{z1(2), z1(3)} : Velocity{};

  for (int i = 1; i < n; ++i) {
    const double dt = times[i] - times[i - 1];
    const LatentState& prev = out.latent[i - 1];
    LatentState& cur = out.latent[i];
    switch (kind) {
      case ModelKind::RW:
        cur.x = transition_rw(prev.x, dt, params, rng.normal2());
        break;
      case ModelKind::AR:
      case ModelKind::AR_ICE: {
        auto [x, v] = transition_ar(prev.x, prev.v, dt, params, rng.normal4());
        cur.x = x;
        cur.v = v;
        break;
      }
      case ModelKind::ARGOSSM: {
        const Mat2 lx = chol2(dt * params.sigma_x, "dt*sigma_x");
        cur.x = Position::of(prev.x.vec() + dt * prev.v.vec() + lx * rng.normal2());
        const Vec2 grad = env.pv->query_clamped(cur.x).grad;
        cur.v = pv_constrained_velocity_update(prev.v, dt, params, grad, rng.normal2());
        break;
      }
    }
  }

  // Ice chain and availability. Without an ice model every fix is available.
  if (has_ice(kind)) {
    for (int i = 0; i < n; ++i) {
      LatentState& cur = out.latent[i];
      if (i == 0) {
        cur.s = static_cast<int>(rng.below(4));
      } else {
        const double conc =
            env::bilinear_clamped(*env.ice, cur.x, times[i]);
        const double e =
            ice::detect_prob(conc, params.p_tpr, params.p_tnr, env.detect_formula);
        cur.s = (rng.uniform() < e) ? 0 : std::min(out.latent[i - 1].s + 1, 3);
      }
      const bool avail = (cur.s == 3) && (rng.uniform() >= params.p_mar);
      out.series.available[i] = avail;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      out.latent[i].s = 3;
      out.series.available[i] = true;
    }
  }

  for (int i = 0; i < n; ++i)
    if (out.series.available[i])
      out.series.gps[i] = measure_gps(out.latent[i].x, params, rng.normal2());

  return out;
}

}  // namespace argossm::state

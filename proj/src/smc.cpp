#include "argossm/smc.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "argossm/ice_mc.hpp"
#include "argossm/state_model.hpp"

namespace argossm::smc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

using Eigen::ArrayXd;
using Eigen::Matrix2Xd;
using Eigen::Matrix4Xd;
using Eigen::VectorXd;

// 2x2 Gaussian in both covariance and precision form.
struct Gauss2 {
  Mat2 cov = Mat2::Identity();
  Mat2 prec = Mat2::Identity();
  Mat2 chol = Mat2::Identity();  // lower factor of cov
  double logdet_prec = 0.0;

  static Gauss2 from_cov(const Mat2& cov, const char* what) {
    Gauss2 g;
    g.cov = 0.5 * (cov + cov.transpose());
    const double det = g.cov(0, 0) * g.cov(1, 1) - g.cov(0, 1) * g.cov(1, 0);
    if (!(det > 0.0) || !(g.cov(0, 0) > 0.0))
      throw InferenceError(std::string(what) + ": 2x2 covariance not positive definite");
    g.prec << g.cov(1, 1), -g.cov(0, 1), -g.cov(1, 0), g.cov(0, 0);
    g.prec /= det;
    g.logdet_prec = -std::log(det);
    Eigen::LLT<Mat2> llt(g.cov);
    if (llt.info() != Eigen::Success)
      throw InferenceError(std::string(what) + ": Cholesky failed");
    g.chol = llt.matrixL();
    return g;
  }

  double logpdf(const Vec2& x, const Vec2& mean) const {
    const Vec2 d = x - mean;
    return -kLog2Pi + 0.5 * logdet_prec - 0.5 * d.dot(prec * d);
  }
};

// Per-step transition pieces shared by sampling, density evaluation, and
// FFBS backward weights.
struct StepDyn {
  double dt = 0.0;
  double a = 1.0;
  Vec2 v_const = Vec2::Zero();  // (1 - a) v0
  Gauss2 qx;
  Gauss2 qv;
};

// Look-ahead proposal blocks for the 4-d family: x marginal plus v|x
// conditional of N(D m + e, C).
struct Look4 {
  Gauss2 xx;
  Mat2 reg = Mat2::Zero();  // C_vx Cxx^{-1}
  Gauss2 cond;
};

struct Look2 {
  Gauss2 xx;
};

int sample_categorical(const VectorXd& log_w, Rng& rng) {
  const double m = log_w.maxCoeff();
  if (!std::isfinite(m)) throw InferenceError("categorical sample from all -inf weights");
  const ArrayXd w = (log_w.array() - m).exp();
  const double total = w.sum();
  double u = rng.uniform() * total;
  const int n = static_cast<int>(w.size());
  for (int i = 0; i < n; ++i) {
    u -= w(i);
    if (u < 0.0) return i;
  }
  return n - 1;
}

// ---- Model adapters -------------------------------------------------------

struct ArFamilyModel {
  static constexpr int dim = 4;
  using Cache = lingauss::ArCache;
  using Look = Look4;
  using StateVec = Vec4;

  const ProfileSeries& series;
  const ModelParams& p;
  ModelKind kind;
  const env::EnvHandles& env;
  bool ice = false;
  bool pv = false;

  Gauss2 sy;
  Mat4 l1 = Mat4::Identity();
  Mat4 sigma1_prec = Mat4::Identity();
  double sigma1_logdet_prec = 0.0;
  std::vector<StepDyn> dyn;  // dyn[i] = transition into 0-based index i (i >= 1)

  ArFamilyModel(const ProfileSeries& s, const ModelParams& params, ModelKind k,
                const env::EnvHandles& e)
      : series(s), p(params), kind(k), env(e), ice(has_ice(k)), pv(has_pv(k)) {
    sy = Gauss2::from_cov(p.sigma_y, "sigma_y");
    Eigen::LLT<Mat4> llt(p.sigma1);
    if (llt.info() != Eigen::Success)
      throw ParameterError("sigma1 is not positive definite");
    l1 = llt.matrixL();
    sigma1_prec = llt.solve(Mat4::Identity());
    double logdet_cov = 0.0;
    for (int i = 0; i < 4; ++i) logdet_cov += 2.0 * std::log(l1(i, i));
    sigma1_logdet_prec = -logdet_cov;

    const int n = series.size();
    dyn.resize(n);
    for (int i = 1; i < n; ++i) {
      StepDyn& d = dyn[i];
      d.dt = series.times[i] - series.times[i - 1];
      d.a = alpha_pow(p.alpha, d.dt);
      d.v_const = (1.0 - d.a) * p.v0;
      d.qx = Gauss2::from_cov(Mat2(d.dt * p.sigma_x), "dt*sigma_x");
      d.qv = Gauss2::from_cov(Mat2(d.dt * p.sigma_v), "dt*sigma_v");
    }
  }

  StateVec zvec(const Vec2& x, const Vec2& v) const {
    StateVec z;
    z << x, v;
    return z;
  }

  void sample_initial(Rng& rng, Vec2& x, Vec2& v) const {
    const Vec4 z = p.mu1 + l1 * rng.normal4();
    x = z.head<2>();
    v = z.tail<2>();
  }

  double log_initial(const Vec2& x, const Vec2& v) const {
    Vec4 d;
    d << x - p.mu1.head<2>(), v - p.mu1.tail<2>();
    return -2.0 * kLog2Pi + 0.5 * sigma1_logdet_prec - 0.5 * d.dot(sigma1_prec * d);
  }

  Vec2 pv_grad(const Vec2& x) const {
    return env.pv->query_clamped({x(0), x(1)}).grad;
  }

  void sample_transition(int i, const Vec2& xp, const Vec2& vp, Rng& rng, Vec2& x,
                         Vec2& v) const {
    const StepDyn& d = dyn[i];
    x = xp + d.dt * vp + d.qx.chol * rng.normal2();
    const Vec2 vm = d.v_const + d.a * vp;
    if (pv) {
      const Vec2 g = pv_grad(x);
      if (!g.isZero(0.0)) {
        const state::Gaussian2 post =
            state::pv_velocity_posterior(vm, d.qv.cov, p.sigma_pv2, g);
        v = post.mean + post.chol * rng.normal2();
        return;
      }
    }
    v = vm + d.qv.chol * rng.normal2();
  }

  double log_transition(int i, const Vec2& xp, const Vec2& vp, const Vec2& x,
                        const Vec2& v) const {
    const StepDyn& d = dyn[i];
    double ll = d.qx.logpdf(x, Vec2(xp + d.dt * vp));
    const Vec2 vm = d.v_const + d.a * vp;
    if (pv) {
      const Vec2 g = pv_grad(x);
      if (!g.isZero(0.0)) {
        const state::Gaussian2 post =
            state::pv_velocity_posterior(vm, d.qv.cov, p.sigma_pv2, g);
        const Vec2 dv = v - post.mean;
        return ll - kLog2Pi + 0.5 * post.logdet_prec - 0.5 * dv.dot(post.prec * dv);
      }
    }
    return ll + d.qv.logpdf(v, vm);
  }

  double log_meas(int i, const Vec2& x) const {
    return sy.logpdf(series.gps[i]->vec(), x);
  }

  double e_tilde(int i, const Vec2& x) const {
    const double conc =
        env::bilinear_clamped(*env.ice, {x(0), x(1)}, series.times[i]);
    return ice::detect_prob(conc, p.p_tpr, p.p_tnr, env.detect_formula);
  }

  std::vector<Look> prepare_look(const Cache& cache) const {
    std::vector<Look> looks(cache.size());
    for (int n = 1; n <= cache.size(); ++n) {
      const auto& st = cache.step(n);
      Look& lk = looks[n - 1];
      const Mat2 cxx = st.C.topLeftCorner<2, 2>();
      const Mat2 cvx = st.C.bottomLeftCorner<2, 2>();
      lk.xx = Gauss2::from_cov(cxx, "look-ahead x marginal");
      lk.reg = cvx * lk.xx.prec;
      lk.cond = Gauss2::from_cov(
          Mat2(st.C.bottomRightCorner<2, 2>() - lk.reg * cvx.transpose()),
          "look-ahead v conditional");
    }
    return looks;
  }

  // Samples from the look-ahead conditional (optionally PV-tilted with the
  // gradient anchored at the particle's previous position) and returns the
  // proposal log-density.
  void propose_look(const Look& lk, const Vec4& mean4, const Vec2* grad_prev,
                    Rng& rng, Vec2& x, Vec2& v, double& logq) const {
    x = mean4.head<2>() + lk.xx.chol * rng.normal2();
    logq = lk.xx.logpdf(x, mean4.head<2>());
    const Vec2 v_mean = mean4.tail<2>() + lk.reg * (x - mean4.head<2>());
    if (grad_prev != nullptr && !grad_prev->isZero(0.0)) {
      const state::Gaussian2 post =
          state::pv_velocity_posterior(v_mean, lk.cond.cov, p.sigma_pv2, *grad_prev);
      v = post.mean + post.chol * rng.normal2();
      const Vec2 dv = v - post.mean;
      logq += -kLog2Pi + 0.5 * post.logdet_prec - 0.5 * dv.dot(post.prec * dv);
    } else {
      v = v_mean + lk.cond.chol * rng.normal2();
      logq += lk.cond.logpdf(v, v_mean);
    }
  }

  // log f(z_next | z_i) for every retained particle, vectorized.
  VectorXd backward_logf(int i, const Matrix2Xd& xs, const Matrix2Xd& vs,
                         const Vec2& xn, const Vec2& vn) const {
    const StepDyn& d = dyn[i];
    const int k = static_cast<int>(xs.cols());

    const ArrayXd dx0 = xn(0) - (xs.row(0).array() + d.dt * vs.row(0).array());
    const ArrayXd dx1 = xn(1) - (xs.row(1).array() + d.dt * vs.row(1).array());
    ArrayXd quad = d.qx.prec(0, 0) * dx0.square() +
                   2.0 * d.qx.prec(0, 1) * dx0 * dx1 +
                   d.qx.prec(1, 1) * dx1.square();
    double cst = -2.0 * kLog2Pi + 0.5 * d.qx.logdet_prec;

    Mat2 vprec = d.qv.prec;
    double v_logdet = d.qv.logdet_prec;
    Matrix2Xd vmean(2, k);
    vmean = (d.a * vs).colwise() + d.v_const;
    if (pv) {
      const Vec2 g = pv_grad(xn);
      if (!g.isZero(0.0)) {
        vprec = d.qv.prec + g * g.transpose() / p.sigma_pv2;
        const double det = vprec(0, 0) * vprec(1, 1) - vprec(0, 1) * vprec(1, 0);
        v_logdet = std::log(det);
        // posterior mean solves vprec * mean = qv_prec * (AR mean)
        Mat2 vprec_inv;
        vprec_inv << vprec(1, 1), -vprec(0, 1), -vprec(1, 0), vprec(0, 0);
        vprec_inv /= det;
        vmean = vprec_inv * (d.qv.prec * vmean);
      }
    }
    const ArrayXd dv0 = vn(0) - vmean.row(0).array();
    const ArrayXd dv1 = vn(1) - vmean.row(1).array();
    quad += vprec(0, 0) * dv0.square() + 2.0 * vprec(0, 1) * dv0 * dv1 +
            vprec(1, 1) * dv1.square();
    cst += 0.5 * v_logdet;

    return (cst - 0.5 * quad).matrix();
  }
};

struct RwModel {
  static constexpr int dim = 2;
  using Cache = lingauss::RwCache;
  using Look = Look2;
  using StateVec = Vec2;

  const ProfileSeries& series;
  const ModelParams& p;
  ModelKind kind;
  const env::EnvHandles& env;
  bool ice = false;
  bool pv = false;

  Gauss2 sy;
  Gauss2 prior;
  Vec2 mu1 = Vec2::Zero();
  std::vector<StepDyn> dyn;

  RwModel(const ProfileSeries& s, const ModelParams& params, ModelKind k,
          const env::EnvHandles& e)
      : series(s), p(params), kind(k), env(e) {
    sy = Gauss2::from_cov(p.sigma_y, "sigma_y");
    prior = Gauss2::from_cov(Mat2(p.sigma1.topLeftCorner<2, 2>()), "sigma1");
    mu1 = p.mu1.head<2>();
    const int n = series.size();
    dyn.resize(n);
    for (int i = 1; i < n; ++i) {
      dyn[i].dt = series.times[i] - series.times[i - 1];
      dyn[i].qx = Gauss2::from_cov(Mat2(dyn[i].dt * p.sigma_x), "dt*sigma_x");
    }
  }

  StateVec zvec(const Vec2& x, const Vec2&) const { return x; }

  void sample_initial(Rng& rng, Vec2& x, Vec2& v) const {
    x = mu1 + prior.chol * rng.normal2();
    v.setZero();
  }

  double log_initial(const Vec2& x, const Vec2&) const {
    return prior.logpdf(x, mu1);
  }

  void sample_transition(int i, const Vec2& xp, const Vec2&, Rng& rng, Vec2& x,
                         Vec2& v) const {
    x = xp + dyn[i].qx.chol * rng.normal2();
    v.setZero();
  }

  double log_transition(int i, const Vec2& xp, const Vec2&, const Vec2& x,
                        const Vec2&) const {
    return dyn[i].qx.logpdf(x, xp);
  }

  double log_meas(int i, const Vec2& x) const {
    return sy.logpdf(series.gps[i]->vec(), x);
  }

  double e_tilde(int, const Vec2&) const { return 0.0; }

  std::vector<Look> prepare_look(const Cache& cache) const {
    std::vector<Look> looks(cache.size());
    for (int n = 1; n <= cache.size(); ++n)
      looks[n - 1].xx = Gauss2::from_cov(cache.step(n).C, "look-ahead RW");
    return looks;
  }

  void propose_look(const Look& lk, const Vec2& mean, const Vec2*, Rng& rng,
                    Vec2& x, Vec2& v, double& logq) const {
    x = mean + lk.xx.chol * rng.normal2();
    v.setZero();
    logq = lk.xx.logpdf(x, mean);
  }

  VectorXd backward_logf(int i, const Matrix2Xd& xs, const Matrix2Xd&,
                         const Vec2& xn, const Vec2&) const {
    const StepDyn& d = dyn[i];
    const ArrayXd dx0 = xn(0) - xs.row(0).array();
    const ArrayXd dx1 = xn(1) - xs.row(1).array();
    const ArrayXd quad = d.qx.prec(0, 0) * dx0.square() +
                         2.0 * d.qx.prec(0, 1) * dx0 * dx1 +
                         d.qx.prec(1, 1) * dx1.square();
    return (-kLog2Pi + 0.5 * d.qx.logdet_prec - 0.5 * quad).matrix();
  }
};

// ---- Filter engine --------------------------------------------------------

template <class Model>
FilterResult run_engine(const Model& model, const SmcConfig& cfg) {
  const ProfileSeries& series = model.series;
  const int n_steps = series.size();
  const int n_part = cfg.n_particles;
  const bool lookahead = cfg.proposal == Proposal::Lookahead;
  const bool need_cache = lookahead || cfg.twist;
  const Rng root(cfg.seed);

  typename Model::Cache cache;
  std::vector<typename Model::Look> looks;
  if (need_cache) {
    cache = Model::Cache::build(series, model.p);
    if (lookahead) looks = model.prepare_look(cache);
  }

  Matrix2Xd x(2, n_part), v(2, n_part);
  x.setZero();
  v.setZero();
  Matrix4Xd belief;
  if (model.ice) belief = Matrix4Xd::Constant(4, n_part, 0.25);
  VectorXd log_w = VectorXd::Constant(n_part, -std::log(double(n_part)));
  VectorXd cur_twist = VectorXd::Zero(n_part);

  FilterResult out;
  out.clouds.reserve(n_steps);

  for (int i = 0; i < n_steps; ++i) {
    const bool observed = series.available[i];
    Matrix2Xd x_new(2, n_part), v_new(2, n_part);
    VectorXd li(n_part);
    VectorXd new_twist = VectorXd::Zero(n_part);

    for (int k = 0; k < n_part; ++k) {
      Rng prng = root.substream(0x70726f70ULL, i, k);
      Vec2 xk, vk;
      double l = 0.0;

      if (lookahead) {
        double logq = 0.0;
        if constexpr (Model::dim == 4) {
          const auto& st = cache.step(i + 1);
          const Vec4 m =
              (i == 0) ? st.c : Vec4(st.F * model.zvec(x.col(k), v.col(k)) + st.c);
          const Vec4 mean4 = st.D * m + st.e;
          const Vec2* grad_ptr = nullptr;
          Vec2 grad_prev;
          if (model.pv && cfg.pv_in_proposal && i > 0) {
            grad_prev = model.pv_grad(x.col(k));
            grad_ptr = &grad_prev;
          }
          model.propose_look(looks[i], mean4, grad_ptr, prng, xk, vk, logq);
        } else {
          const auto& st = cache.step(i + 1);
          const Vec2 m = (i == 0) ? st.c : Vec2(st.F * Vec2(x.col(k)) + st.c);
          const Vec2 mean2 = st.D * m + st.e;
          model.propose_look(looks[i], mean2, nullptr, prng, xk, vk, logq);
        }
        const double logf = (i == 0) ? model.log_initial(xk, vk)
                                     : model.log_transition(i, x.col(k), v.col(k), xk, vk);
        l += logf - logq;
      } else {
        if (i == 0)
          model.sample_initial(prng, xk, vk);
        else
          model.sample_transition(i, x.col(k), v.col(k), prng, xk, vk);
      }

      if (observed) l += model.log_meas(i, xk);

      if (model.ice) {
        ice::IceBelief b = belief.col(k);
        if (i > 0) b = ice::step_belief(b, model.e_tilde(i, xk));
        const ice::AvailabilityUpdate up =
            ice::availability_loglik(b, observed, model.p.p_mar);
        l += up.loglik;
        belief.col(k) = up.posterior;
      }

      if (cfg.twist) {
        const double psi =
            (i + 2 <= n_steps)
                ? cache.predictive_loglik(i + 2, model.zvec(xk, vk))
                : 0.0;
        l += psi - cur_twist(k);
        new_twist(k) = psi;
      }

      x_new.col(k) = xk;
      v_new.col(k) = vk;
      li(k) = l;
    }

    x.swap(x_new);
    v.swap(v_new);
    cur_twist = new_twist;

    const VectorXd lw_un = log_w + li;
    const double inc = logsumexp(lw_un);
    if (!std::isfinite(inc))
      throw InferenceError("all particle weights vanished", i + 1);
    out.loglik += inc;
    log_w = lw_un.array() - inc;

    const double e = ess(log_w);
    out.ess_trace.push_back(e);

    Cloud cloud;
    cloud.index = i + 1;
    cloud.t = series.times[i];
    cloud.x = x;
    cloud.v = v;
    cloud.log_w = log_w;
    cloud.log_twist = cur_twist;
    cloud.ess = e;

    const bool do_resample =
        (i + 1 < n_steps) && (e < cfg.resample_threshold * n_part);
    cloud.resampled = do_resample;
    out.resampled.push_back(do_resample);
    out.clouds.push_back(std::move(cloud));

    if (do_resample) {
      Rng rrng = root.substream(0x7265730aULL, i);
      const VectorXd w = log_w.array().exp();
      const std::vector<int> anc = systematic_resample_from_u(w, rrng.uniform());
      Matrix2Xd xr(2, n_part), vr(2, n_part);
      Matrix4Xd br;
      if (model.ice) br.resize(4, n_part);
      VectorXd tw(n_part);
      for (int k = 0; k < n_part; ++k) {
        xr.col(k) = x.col(anc[k]);
        vr.col(k) = v.col(anc[k]);
        if (model.ice) br.col(k) = belief.col(anc[k]);
        tw(k) = cur_twist(anc[k]);
      }
      x.swap(xr);
      v.swap(vr);
      if (model.ice) belief.swap(br);
      cur_twist.swap(tw);
      log_w.setConstant(-std::log(double(n_part)));
    }
  }

  return out;
}

template <class Model>
PosteriorDraws ffbs_engine(const Model& model, const FilterResult& filter,
                           int n_draws, std::uint64_t seed) {
  const ProfileSeries& series = model.series;
  const int n_steps = static_cast<int>(filter.clouds.size());
  if (n_steps != series.size())
    throw InferenceError("filter clouds do not match the series length");
  const Rng root(seed);

  PosteriorDraws out;
  out.times = series.times;
  out.draws.reserve(n_draws);

  // Plain filtered weights: stored weights divided by the twisting value.
  std::vector<VectorXd> lw_plain(n_steps);
  for (int i = 0; i < n_steps; ++i)
    lw_plain[i] = filter.clouds[i].log_w - filter.clouds[i].log_twist;

  for (int d = 0; d < n_draws; ++d) {
    Rng rng = root.substream(0x66666273ULL, d);
    TrajectoryDraw traj;
    traj.x.resize(2, n_steps);
    traj.v.resize(2, n_steps);
    traj.s.assign(n_steps, 3);

    int pick = sample_categorical(lw_plain[n_steps - 1], rng);
    traj.x.col(n_steps - 1) = filter.clouds[n_steps - 1].x.col(pick);
    traj.v.col(n_steps - 1) = filter.clouds[n_steps - 1].v.col(pick);

    for (int i = n_steps - 2; i >= 0; --i) {
      const Cloud& cloud = filter.clouds[i];
      const VectorXd bw =
          lw_plain[i] + model.backward_logf(i + 1, cloud.x, cloud.v,
                                            traj.x.col(i + 1), traj.v.col(i + 1));
      pick = sample_categorical(bw, rng);
      traj.x.col(i) = cloud.x.col(pick);
      traj.v.col(i) = cloud.v.col(pick);
    }

    if (model.ice) {
      std::vector<double> et(n_steps, 0.0);
      for (int i = 1; i < n_steps; ++i) et[i] = model.e_tilde(i, traj.x.col(i));
      const ice::SPathCache cache =
          ice::forward_cache(et, series.available, model.p.p_mar);
      Rng srng = root.substream(0x73706174ULL, d);
      traj.s = ice::sample_s_path(cache, srng);
    }

    out.draws.push_back(std::move(traj));
  }
  return out;
}

}  // namespace

Proposal parse_proposal(const std::string& name) {
  if (name == "bootstrap") return Proposal::Bootstrap;
  if (name == "lookahead") return Proposal::Lookahead;
  throw ConfigError("unknown smc.proposal '" + name + "' (bootstrap|lookahead)");
}

void SmcConfig::validate() const {
  if (n_particles < 2) throw ConfigError("smc.n_particles must be >= 2");
  if (!(resample_threshold > 0.0) || resample_threshold > 1.0)
    throw ConfigError("smc.resample_threshold must lie in (0, 1]");
}

double logsumexp(const VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

VectorXd normalize_log_weights(const VectorXd& lw) {
  const double total = logsumexp(lw);
  if (!std::isfinite(total))
    throw InferenceError("cannot normalize: all log-weights are -inf");
  return lw.array() - total;
}

double ess(const VectorXd& log_weights) {
  const VectorXd lw = normalize_log_weights(log_weights);
  return 1.0 / (2.0 * lw.array()).exp().sum();
}

std::vector<int> systematic_resample_from_u(const VectorXd& weights, double u) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> ancestors(n);
  double cum = weights(0);
  int j = 0;
  for (int k = 0; k < n; ++k) {
    const double point = (k + u) / n;
    while (point > cum && j + 1 < n) cum += weights(++j);
    ancestors[k] = j;
  }
  return ancestors;
}

std::vector<int> systematic_resample(const VectorXd& weights, std::uint64_t seed) {
  Rng rng(seed);
  return systematic_resample_from_u(weights, rng.uniform());
}

FilterResult run_filter(const ProfileSeries& series, const ModelParams& params,
                        ModelKind kind, const env::EnvHandles& env,
                        const SmcConfig& cfg) {
  cfg.validate();
  params.validate(kind);
  env.require(kind);
  if (kind == ModelKind::RW)
    return run_engine(RwModel(series, params, kind, env), cfg);
  return run_engine(ArFamilyModel(series, params, kind, env), cfg);
}

PosteriorDraws ffbs(const FilterResult& filter, const ProfileSeries& series,
                    const ModelParams& params, ModelKind kind,
                    const env::EnvHandles& env, int n_draws, std::uint64_t seed) {
  params.validate(kind);
  env.require(kind);
  if (kind == ModelKind::RW)
    return ffbs_engine(RwModel(series, params, kind, env), filter, n_draws, seed);
  return ffbs_engine(ArFamilyModel(series, params, kind, env), filter, n_draws, seed);
}

VarianceStudy loglik_variance_study(const ProfileSeries& series,
                                    const ModelParams& params, ModelKind kind,
                                    const env::EnvHandles& env, const SmcConfig& cfg,
                                    int n_replicates) {
  if (n_replicates < 2) throw ConfigError("loglik_variance_study needs >= 2 replicates");
  VarianceStudy out;
  out.logliks.reserve(n_replicates);
  for (int r = 0; r < n_replicates; ++r) {
    SmcConfig rep_cfg = cfg;
    rep_cfg.seed = mix64(cfg.seed, 0x5eedULL, static_cast<std::uint64_t>(r));
    const FilterResult res = run_filter(series, params, kind, env, rep_cfg);
    out.logliks.push_back(res.loglik);
    out.final_ess.push_back(res.ess_trace.back());
  }
  const double n = static_cast<double>(n_replicates);
  for (double v : out.logliks) out.mean += v;
  out.mean /= n;
  double ss = 0.0;
  for (double v : out.logliks) ss += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(ss / (n - 1.0));
  return out;
}

}  // namespace argossm::smc

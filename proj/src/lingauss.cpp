#include "argossm/lingauss.hpp"

#include <Eigen/LU>
#include <cmath>

#include "argossm/errors.hpp"

namespace argossm::lingauss {

namespace {

template <typename M>
M sym(const M& a) {
  return 0.5 * (a + a.transpose());
}

// Inverse and log-determinant of the 2x2 innovation covariance; throws when
// numerically singular.
void invert_innovation(const Mat2& s, int index, Mat2& s_inv, double& logdet) {
  const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  if (!(det > 0.0) || !s.allFinite())
    throw InferenceError("singular innovation covariance", index);
  s_inv << s(1, 1), -s(0, 1), -s(1, 0), s(0, 0);
  s_inv /= det;
  logdet = std::log(det);
}

}  // namespace

Mat2 rw_transition_cov(double dt, const ModelParams& p) {
  return dt * p.sigma_x;
}

void ar_transition(double dt, const ModelParams& p, Mat4& F, Vec4& c, Mat4& Q) {
  const double a = alpha_pow(p.alpha, dt);
  F.setZero();
  F.topLeftCorner<2, 2>().setIdentity();
  F.topRightCorner<2, 2>() = dt * Mat2::Identity();
  F.bottomRightCorner<2, 2>() = a * Mat2::Identity();
  c.setZero();
  c.tail<2>() = (1.0 - a) * p.v0;
  Q.setZero();
  Q.topLeftCorner<2, 2>() = dt * p.sigma_x;
  Q.bottomRightCorner<2, 2>() = dt * p.sigma_v;
}

template <int Dim>
void Cache<Dim>::check_index(int n, int lo) const {
  if (n < lo || n > size())
    throw InferenceError("index " + std::to_string(n) + " outside [" +
                         std::to_string(lo) + ", " + std::to_string(size()) + "]");
}

template <int Dim>
Cache<Dim> Cache<Dim>::build(const ProfileSeries& series, const ModelParams& params) {
  static_assert(Dim == 2 || Dim == 4);
  params.validate(Dim == 2 ? ModelKind::RW : ModelKind::AR);
  const int n_steps = series.size();
  if (n_steps < 1) throw InferenceError("empty series");

  Cache cache;
  cache.sigma_y_ = params.sigma_y;
  cache.steps_.resize(n_steps);

  // Transition structure. Entry 1 carries the prior.
  for (int i = 0; i < n_steps; ++i) {
    Step<Dim>& st = cache.steps_[i];
    st.t = series.times[i];
    st.observed = series.available[i];
    if (st.observed) st.y = series.gps[i]->vec();
    if (i == 0) {
      if constexpr (Dim == 2) {
        st.c = params.mu1.template head<2>();
        st.Q = params.sigma1.template topLeftCorner<2, 2>();
      } else {
        st.c = params.mu1;
        st.Q = params.sigma1;
      }
    } else {
      const double dt = series.times[i] - series.times[i - 1];
      if constexpr (Dim == 2) {
        st.F.setIdentity();
        st.c.setZero();
        st.Q = rw_transition_cov(dt, params);
      } else {
        ar_transition(dt, params, st.F, st.c, st.Q);
      }
    }
    Eigen::LLT<Mat> llt(st.Q);
    if (llt.info() != Eigen::Success)
      throw ParameterError("transition covariance not positive definite at index " +
                           std::to_string(i + 1));
    st.Q_chol = llt.matrixL();
  }

  const Mat2& r = params.sigma_y;
  Mat2 r_inv;
  double r_logdet;
  invert_innovation(r, 0, r_inv, r_logdet);

  // Forward Kalman pass with Joseph-form updates; measurement skipped at
  // unavailable indices.
  for (int i = 0; i < n_steps; ++i) {
    Step<Dim>& st = cache.steps_[i];
    if (i == 0) {
      st.pred_mean = st.c;
      st.pred_cov = st.Q;
    } else {
      const Step<Dim>& prev = cache.steps_[i - 1];
      st.pred_mean = st.F * prev.filt_mean + st.c;
      st.pred_cov = sym(Mat(st.F * prev.filt_cov * st.F.transpose() + st.Q));
    }
    if (st.observed) {
      const Mat2 s = st.pred_cov.template topLeftCorner<2, 2>() + r;
      Mat2 s_inv;
      double s_logdet;
      invert_innovation(s, i + 1, s_inv, s_logdet);
      const Vec2 innov = st.y - st.pred_mean.template head<2>();
      const Eigen::Matrix<double, Dim, 2> gain = st.pred_cov.template leftCols<2>() * s_inv;
      st.filt_mean = st.pred_mean + gain * innov;
      Mat a = Mat::Identity();
      a.template leftCols<2>() -= gain;
      st.filt_cov = sym(Mat(a * st.pred_cov * a.transpose() +
                            gain * r * gain.transpose()));
      st.loglik_inc = -std::log(2.0 * geo::kPi) - 0.5 * s_logdet -
                      0.5 * innov.dot(s_inv * innov);
      cache.filter_loglik_ += st.loglik_inc;
    } else {
      st.filt_mean = st.pred_mean;
      st.filt_cov = st.pred_cov;
      st.loglik_inc = 0.0;
    }
  }

  // Backward information recursion. The with-observation info at n is
  // propagated through the transition into n to become the post-observation
  // info at n-1; the look-ahead and predictive quantities drop out of the
  // same algebra.
  Mat omega_next = Mat::Zero();  // running post-observation info
  Vec eta_next = Vec::Zero();
  double kappa_next = 0.0;
  const double y_const = -std::log(2.0 * geo::kPi) - 0.5 * r_logdet;
  for (int i = n_steps - 1; i >= 0; --i) {
    Step<Dim>& st = cache.steps_[i];
    st.omega_post = omega_next;
    st.eta_post = eta_next;
    st.kappa_post = kappa_next;

    st.omega = st.omega_post;
    st.eta = st.eta_post;
    st.kappa = st.kappa_post;
    if (st.observed) {
      st.omega.template topLeftCorner<2, 2>() += r_inv;
      st.eta.template head<2>() += r_inv * st.y;
      st.kappa += y_const - 0.5 * st.y.dot(r_inv * st.y);
    }

    const Mat t = Mat::Identity() + st.Q * st.omega;
    Eigen::PartialPivLU<Mat> lu(t);
    const double det_t = lu.determinant();
    if (!(det_t > 0.0))
      throw InferenceError("backward information propagation failed", i + 1);
    st.D = lu.inverse();
    st.C = sym(Mat(st.D * st.Q));
    st.e = st.C * st.eta;
    Eigen::LLT<Mat> cll(st.C);
    if (cll.info() != Eigen::Success) {
      // C can brush the PSD boundary when observations pin the state; nudge.
      Eigen::LLT<Mat> cll2(Mat(st.C + 1e-14 * st.C.trace() * Mat::Identity()));
      if (cll2.info() != Eigen::Success)
        throw InferenceError("look-ahead covariance not positive definite", i + 1);
      st.C_chol = cll2.matrixL();
    } else {
      st.C_chol = cll.matrixL();
    }

    const Mat omega_tilde = sym(Mat(st.omega * st.D));
    st.pred_quad = omega_tilde;
    st.pred_lin = st.D.transpose() * st.eta;
    st.pred_cst = st.kappa - 0.5 * std::log(det_t) + 0.5 * st.eta.dot(st.C * st.eta);

    omega_next = sym(Mat(st.F.transpose() * omega_tilde * st.F));
    eta_next = st.F.transpose() * (st.pred_lin - omega_tilde * st.c);
    kappa_next = st.pred_cst + st.c.dot(st.pred_lin) - 0.5 * st.c.dot(omega_tilde * st.c);
  }

  return cache;
}

template <int Dim>
GaussianState Cache<Dim>::conditional_lookahead(int n, const Vec& z_prev) const {
  check_index(n, 1);
  const Step<Dim>& st = steps_[n - 1];
  const Vec m = (n == 1) ? st.c : Vec(st.F * z_prev + st.c);
  GaussianState out;
  out.mean = st.D * m + st.e;
  out.cov = st.C;
  return out;
}

template <int Dim>
double Cache<Dim>::predictive_loglik(int n, const Vec& z_prev) const {
  check_index(n, 2);
  const Step<Dim>& st = steps_[n - 1];
  const Vec m = st.F * z_prev + st.c;
  return st.pred_cst + m.dot(st.pred_lin) - 0.5 * m.dot(st.pred_quad * m);
}

template <int Dim>
double Cache<Dim>::loglik_from_prior() const {
  const Step<Dim>& st = steps_[0];
  const Vec& m = st.c;  // prior mean
  return st.pred_cst + m.dot(st.pred_lin) - 0.5 * m.dot(st.pred_quad * m);
}

template <int Dim>
GaussianState Cache<Dim>::smoothed(int n) const {
  check_index(n, 1);
  const Step<Dim>& st = steps_[n - 1];
  // Filtered state combined with the post-observation backward information.
  const Mat t = Mat::Identity() + st.filt_cov * st.omega_post;
  Eigen::PartialPivLU<Mat> lu(t);
  GaussianState out;
  out.cov = sym(Mat(lu.solve(st.filt_cov)));
  out.mean = lu.solve(Vec(st.filt_mean + st.filt_cov * st.eta_post));
  return out;
}

template class Cache<2>;
template class Cache<4>;

namespace {

template <int Dim>
KalmanResult filter_result_from(const Cache<Dim>& cache) {
  KalmanResult out;
  out.loglik = cache.filter_loglik();
  out.filtered.reserve(cache.size());
  for (int n = 1; n <= cache.size(); ++n) {
    const auto& st = cache.step(n);
    out.filtered.push_back({st.filt_mean, st.filt_cov});
    out.loglik_increments.push_back(st.loglik_inc);
  }
  return out;
}

template <int Dim>
std::vector<GaussianState> smoother_from(const Cache<Dim>& cache) {
  std::vector<GaussianState> out;
  out.reserve(cache.size());
  for (int n = 1; n <= cache.size(); ++n) out.push_back(cache.smoothed(n));
  return out;
}

template <int Dim>
std::vector<BackwardInfo> backward_from(const Cache<Dim>& cache) {
  std::vector<BackwardInfo> out;
  out.reserve(cache.size());
  for (int n = 1; n <= cache.size(); ++n) {
    const auto& st = cache.step(n);
    out.push_back({st.omega, st.eta, st.kappa});
  }
  return out;
}

void check_linear(ModelKind kind) {
  if (!is_linear_gaussian(kind))
    throw ParameterError(std::string("exact inference requires a linear-Gaussian kind, got ") +
                         kind_name(kind));
}

}  // namespace

KalmanResult kalman_filter(const ProfileSeries& series, const ModelParams& params,
                           ModelKind kind) {
  check_linear(kind);
  if (kind == ModelKind::RW) return filter_result_from(RwCache::build(series, params));
  return filter_result_from(ArCache::build(series, params));
}

std::vector<GaussianState> kalman_smoother(const ProfileSeries& series,
                                           const ModelParams& params, ModelKind kind) {
  check_linear(kind);
  if (kind == ModelKind::RW) return smoother_from(RwCache::build(series, params));
  return smoother_from(ArCache::build(series, params));
}

std::vector<BackwardInfo> backward_information(const ProfileSeries& series,
                                               const ModelParams& params,
                                               ModelKind kind) {
  check_linear(kind);
  if (kind == ModelKind::RW) return backward_from(RwCache::build(series, params));
  return backward_from(ArCache::build(series, params));
}

double log_mvn(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
               const Eigen::MatrixXd& cov) {
  const Eigen::Index d = x.size();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw InferenceError("log_mvn: covariance not positive definite");
  const Eigen::VectorXd z = llt.matrixL().solve(x - mean);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < d; ++i)
    logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * d * std::log(2.0 * geo::kPi) - logdet - 0.5 * z.squaredNorm();
}

}  // namespace argossm::lingauss

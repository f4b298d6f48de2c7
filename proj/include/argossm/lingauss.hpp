#ifndef ARGOSSM_LINGAUSS_HPP
#define ARGOSSM_LINGAUSS_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <vector>

#include "argossm/types.hpp"

namespace argossm::lingauss {

struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Gaussian likelihood P(Y_{n:N} | Z_n) in information form. The precision may
// be rank deficient (e.g. no future observations constrain velocity).
struct BackwardInfo {
  Eigen::MatrixXd precision;
  Eigen::VectorXd info;
  double log_norm = 0.0;  // additive constant making densities exact
};

// Per-index quantities for one linear-Gaussian submodel (RW: Dim = 2 over
// position; AR: Dim = 4 over position and velocity). Entry n holds the
// transition INTO index n; entry 1 holds the initial prior as F = 0,
// c = mu1, Q = Sigma1 so every formula below covers n = 1 uniformly.
template <int Dim>
struct Step {
  using Vec = Eigen::Matrix<double, Dim, 1>;
  using Mat = Eigen::Matrix<double, Dim, Dim>;

  double t = 0.0;
  bool observed = false;
  Eigen::Vector2d y = Eigen::Vector2d::Zero();

  Mat F = Mat::Zero();
  Vec c = Vec::Zero();
  Mat Q = Mat::Zero();
  Mat Q_chol = Mat::Zero();  // lower Cholesky factor of Q

  // Forward pass.
  Vec pred_mean = Vec::Zero();
  Mat pred_cov = Mat::Zero();
  Vec filt_mean = Vec::Zero();
  Mat filt_cov = Mat::Zero();
  double loglik_inc = 0.0;  // innovation log density, 0 when unobserved

  // Backward information for P(Y_{n:N} | Z_n) (with the observation at n)
  // and P(Y_{n+1:N} | Z_n) (without it).
  Mat omega = Mat::Zero();
  Vec eta = Vec::Zero();
  double kappa = 0.0;
  Mat omega_post = Mat::Zero();
  Vec eta_post = Vec::Zero();
  double kappa_post = 0.0;

  // Look-ahead conditional P(z_n | z_{n-1}, Y^N) = N(D (F z + c) + C eta, C).
  Mat D = Mat::Zero();       // (I + Q omega)^{-1}
  Mat C = Mat::Zero();       // D Q, symmetrized
  Mat C_chol = Mat::Zero();
  Vec e = Vec::Zero();       // C eta

  // Predictive log-likelihood as a quadratic in m = F z_{n-1} + c:
  // log P(Y_{n:N} | Z_{n-1} = z) = pred_cst + m . pred_lin - 0.5 m' pred_quad m.
  double pred_cst = 0.0;
  Vec pred_lin = Vec::Zero();
  Mat pred_quad = Mat::Zero();
};

// Filter + backward-information cache for one series under one linear
// submodel. Read-only after construction.
template <int Dim>
class Cache {
 public:
  using Vec = typename Step<Dim>::Vec;
  using Mat = typename Step<Dim>::Mat;

  static Cache build(const ProfileSeries& series, const ModelParams& params);

  int size() const { return static_cast<int>(steps_.size()); }
  const Step<Dim>& step(int n) const { return steps_[n - 1]; }  // 1-based
  double filter_loglik() const { return filter_loglik_; }
  const Mat2& measurement_noise() const { return sigma_y_; }

  // P(z_n | z_{n-1} = z_prev, Y^N); n = 1 returns the prior-based posterior
  // of z_1 given all data (z_prev ignored).
  GaussianState conditional_lookahead(int n, const Vec& z_prev) const;

  // log P(Y_{n:N} | Z_{n-1} = z_prev), exact; valid for 2 <= n <= N.
  double predictive_loglik(int n, const Vec& z_prev) const;

  // log P(Y_{1:N}) by marginalizing the backward information over the prior;
  // equals the Kalman filter log-likelihood.
  double loglik_from_prior() const;

  // Marginal smoothed state at index n (1-based).
  GaussianState smoothed(int n) const;

 private:
  std::vector<Step<Dim>> steps_;
  double filter_loglik_ = 0.0;
  Mat2 sigma_y_ = Mat2::Identity();

  void check_index(int n, int lo) const;
};

using RwCache = Cache<2>;
using ArCache = Cache<4>;

// State-transition structure of the linear submodels; shared with SMC and
// the forward simulator.
Mat2 rw_transition_cov(double dt, const ModelParams& p);
void ar_transition(double dt, const ModelParams& p, Mat4& F, Vec4& c, Mat4& Q);

// ---- Spec-level operations over dynamic-size types ----

struct KalmanResult {
  std::vector<GaussianState> filtered;
  double loglik = 0.0;
  std::vector<double> loglik_increments;
};

KalmanResult kalman_filter(const ProfileSeries& series, const ModelParams& params,
                           ModelKind kind);

std::vector<GaussianState> kalman_smoother(const ProfileSeries& series,
                                           const ModelParams& params, ModelKind kind);

std::vector<BackwardInfo> backward_information(const ProfileSeries& series,
                                               const ModelParams& params,
                                               ModelKind kind);

// Numerically safe log-density helpers.
double log_mvn(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
               const Eigen::MatrixXd& cov);

inline double log_mvn2_prec(const Vec2& x, const Vec2& mean, const Mat2& prec,
                            double logdet_prec) {
  const Vec2 d = x - mean;
  return -std::log(2.0 * geo::kPi) + 0.5 * logdet_prec -
         0.5 * d.dot(prec * d);
}

}  // namespace argossm::lingauss

#endif

#ifndef ARGOSSM_STATE_MODEL_HPP
#define ARGOSSM_STATE_MODEL_HPP

#include <utility>
#include <vector>

#include "argossm/envfields.hpp"
#include "argossm/rng.hpp"
#include "argossm/types.hpp"

namespace argossm::state {

// Random-walk position update: x + chol(dt sigma_x) * noise.
Position transition_rw(const Position& x_prev, double dt, const ModelParams& params,
                       const Vec2& noise);

// AR position/velocity update:
//   X_n = X_{n-1} + dt V_{n-1} + eps_X,   eps_X ~ N(0, dt sigma_x)
//   V_n = (1 - a) v0 + a V_{n-1} + eps_V, eps_V ~ N(0, dt sigma_v), a = alpha^dt
std::pair<Position, Velocity> transition_ar(const Position& x_prev,
                                            const Velocity& v_prev, double dt,
                                            const ModelParams& params,
                                            const Vec4& noise);

// Gaussian with its Cholesky factor, as produced by the PV update.
struct Gaussian2 {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
  Mat2 chol = Mat2::Zero();
  Mat2 prec = Mat2::Zero();
  double logdet_prec = 0.0;
};

// Conjugate posterior of the velocity under the PV pseudo-observation
// 0 = grad_pv . V + N(0, sigma_pv2), with prior N(prior_mean, prior_cov).
// The posterior mean equals B * prior_mean with
// B = (I + prior_cov grad grad' / sigma_pv2)^{-1}.
Gaussian2 pv_velocity_posterior(const Vec2& prior_mean, const Mat2& prior_cov,
                                double sigma_pv2, const Vec2& grad_pv);

// Velocity update of the full model: the AR mean of Eq-3 form shrunk by the
// PV constraint, sampled with the Cholesky factor of the posterior covariance.
Velocity pv_constrained_velocity_update(const Velocity& v_prev, double dt,
                                        const ModelParams& params,
                                        const Vec2& grad_pv, const Vec2& noise);

// GPS measurement: x + chol(sigma_y) * noise.
Position measure_gps(const Position& x, const ModelParams& params, const Vec2& noise);

struct SimResult {
  std::vector<LatentState> latent;
  ProfileSeries series;
};

// Forward-samples the generative model on the given times. RW/AR kinds are
// always available; ice kinds draw S and the availability through the
// detection chain. GPS fixes are emitted iff available.
SimResult simulate(ModelKind kind, const ModelParams& params,
                   const std::vector<double>& times, const env::EnvHandles& env,
                   Rng& rng, const std::string& float_id = "sim");

}  // namespace argossm::state

#endif

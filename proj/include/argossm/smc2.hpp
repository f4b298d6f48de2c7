#ifndef ARGOSSM_SMC2_HPP
#define ARGOSSM_SMC2_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "argossm/smc.hpp"
#include "argossm/types.hpp"

namespace argossm::smc2 {

enum class ParamId {
  Alpha,
  SigmaPv2,
  V0Lon,
  V0Lat,
  PMar,
  PTpr,
  PTnr,
  SigmaX2,
  SigmaY2,
  SigmaV2,
};

const char* param_name(ParamId id);
ParamId parse_param(const std::string& name);

enum class DistTag { Beta, LogNormal, Normal, Gamma };

// Beta(a, b); LogNormal(mean, var of log); Normal(mean, var); Gamma(shape, rate).
struct Dist {
  DistTag tag = DistTag::Normal;
  double a = 0.0;
  double b = 1.0;
};

double sample_dist(const Dist& dist, Rng& rng);
double logpdf_dist(const Dist& dist, double x);

struct ParamPrior {
  ParamId id;
  Dist dist;
  bool fixed = false;
  double fixed_value = 0.0;
};

// Priors over the parameters a model kind actually uses. Fixed entries are
// pinned at a value and excluded from the sampled vector.
struct PriorSpec {
  std::vector<ParamPrior> params;

  static PriorSpec defaults(ModelKind kind);

  int n_free() const;
  std::vector<ParamId> free_ids() const;
  void fix(ParamId id, double value);
  void set_dist(ParamId id, const Dist& dist);
  const ParamPrior& find(ParamId id) const;
};

// Unconstrained reparameterization: logit for probabilities and alpha, log
// for variances, identity for v0.
double to_unconstrained(ParamId id, double value);
double to_constrained(ParamId id, double u);

// Log prior density of the free coordinates in unconstrained space, Jacobian
// included. -inf outside the support.
double log_prior_unconstrained(const PriorSpec& spec, const Eigen::VectorXd& u);

// theta draw -> full model parameters; base supplies the data-anchored
// initial-state prior and any parameters the spec leaves untouched. sigma1 is
// rebuilt as blockdiag(sigma_y, 0.01 I) so it tracks the sampled sigma_y.
ModelParams to_model_params(const PriorSpec& spec, const Eigen::VectorXd& u,
                            const ModelParams& base);

struct ThetaCloud {
  Eigen::MatrixXd theta_u;  // n_free x M, unconstrained
  Eigen::VectorXd log_w;    // normalized
  Eigen::VectorXd loglik;   // cached per-theta PF estimate
  double xi = 0.0;

  int size() const { return static_cast<int>(theta_u.cols()); }
};

ThetaCloud sample_prior(const PriorSpec& spec, int n_theta, std::uint64_t seed);

// Largest next temperature in (xi, 1] keeping the incremental-weight ESS at
// or above target_ess_frac * M, by bisection; 1 when already satisfied there.
double next_temperature(const ThetaCloud& cloud, double target_ess_frac);

struct Smc2Config {
  int n_theta = 200;
  double target_ess_frac = 0.5;
  int n_moves = 2;
  smc::SmcConfig pf;
  std::uint64_t seed = 0;
  int n_traj_draws = 0;  // joint trajectory draws emitted at xi = 1

  void validate() const;
};

struct RejuvenationStats {
  long accepted = 0;
  long attempted = 0;
  long pf_failures = 0;
};

// n_moves particle-marginal Metropolis-Hastings sweeps per theta targeting
// P(theta) P_hat(Y | theta)^xi; expects an equal-weight (just resampled) cloud.
RejuvenationStats rejuvenate(ThetaCloud& cloud, const PriorSpec& spec,
                             const ProfileSeries& series, ModelKind kind,
                             const env::EnvHandles& env, const ModelParams& base,
                             const Smc2Config& cfg, std::uint64_t seed);

struct LadderStep {
  double xi = 0.0;
  double ess = 0.0;
  double log_evidence_inc = 0.0;
  double acceptance_rate = 0.0;
};

struct Smc2Result {
  std::vector<ParamId> param_ids;
  Eigen::MatrixXd theta_u;  // n_free x M
  Eigen::MatrixXd theta_c;  // constrained values
  Eigen::VectorXd log_w;
  Eigen::VectorXd loglik;
  double log_evidence = 0.0;
  std::vector<LadderStep> ladder;
  long pf_failures = 0;
  std::vector<int> traj_theta_index;  // theta column backing each draw
  smc::PosteriorDraws trajectories;
};

// Likelihood-tempered SMC^2 from the prior to the posterior, with systematic
// resampling and PMCMC rejuvenation at every temperature step that drops the
// ESS to its target.
Smc2Result run_smc2(const ProfileSeries& series, const PriorSpec& spec,
                    ModelKind kind, const env::EnvHandles& env,
                    const ModelParams& base, const Smc2Config& cfg);

}  // namespace argossm::smc2

#endif

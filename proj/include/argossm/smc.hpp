#ifndef ARGOSSM_SMC_HPP
#define ARGOSSM_SMC_HPP

#include <cstdint>
#include <vector>

#include "argossm/envfields.hpp"
#include "argossm/lingauss.hpp"
#include "argossm/rng.hpp"
#include "argossm/types.hpp"

namespace argossm::smc {

enum class Proposal { Bootstrap, Lookahead };

Proposal parse_proposal(const std::string& name);

struct SmcConfig {
  int n_particles = 1000;
  double resample_threshold = 0.5;  // resample when ESS < threshold * K
  Proposal proposal = Proposal::Lookahead;
  bool twist = true;
  bool pv_in_proposal = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Weighted ensemble at one time index, stored before any resampling. Weights
// target the twisted filtering distribution; log_twist holds the per-particle
// twisting value so downstream consumers can recover plain filtered weights.
struct Cloud {
  int index = 0;  // 1-based time index
  double t = 0.0;
  Eigen::Matrix2Xd x;
  Eigen::Matrix2Xd v;         // zero for RW
  Eigen::VectorXd log_w;      // normalized: logsumexp = 0
  Eigen::VectorXd log_twist;  // log psi_n per particle (0 when untwisted)
  double ess = 0.0;
  bool resampled = false;
};

struct FilterResult {
  std::vector<Cloud> clouds;
  double loglik = 0.0;
  std::vector<double> ess_trace;     // ESS before each resampling decision
  std::vector<bool> resampled;
};

double logsumexp(const Eigen::VectorXd& v);

// Normalized log-weights (logsumexp = 0); all -inf input throws.
Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& lw);

// 1 / sum(w^2) of the normalized weights.
double ess(const Eigen::VectorXd& log_weights);

// Systematic resampling: one uniform draw strides all strata. weights must be
// a probability vector.
std::vector<int> systematic_resample(const Eigen::VectorXd& weights, std::uint64_t seed);
std::vector<int> systematic_resample_from_u(const Eigen::VectorXd& weights, double u);

// Adapted auxiliary particle filter over the requested model kind.
// Look-ahead proposals and twisted targets come from the AR (or RW) submodel
// posterior with matching parameters; the ice state is marginalized per
// particle; PV enters the exact transition and, optionally, the proposal.
FilterResult run_filter(const ProfileSeries& series, const ModelParams& params,
                        ModelKind kind, const env::EnvHandles& env,
                        const SmcConfig& cfg);

struct TrajectoryDraw {
  Eigen::Matrix2Xd x;
  Eigen::Matrix2Xd v;
  std::vector<int> s;
};

struct PosteriorDraws {
  std::vector<double> times;
  std::vector<TrajectoryDraw> draws;
};

// Forward-filtering backward-sampling over retained clouds (Godsill-style):
// backward weights are forward weights times the transition density to the
// selected successor state. S paths are then drawn conditionally on each
// sampled trajectory.
PosteriorDraws ffbs(const FilterResult& filter, const ProfileSeries& series,
                    const ModelParams& params, ModelKind kind,
                    const env::EnvHandles& env, int n_draws, std::uint64_t seed);

struct VarianceStudy {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> logliks;
  std::vector<double> final_ess;
};

// Repeated independent filter runs; summarizes the spread of the estimated
// log-likelihood and the ESS at the final observation.
VarianceStudy loglik_variance_study(const ProfileSeries& series,
                                    const ModelParams& params, ModelKind kind,
                                    const env::EnvHandles& env, const SmcConfig& cfg,
                                    int n_replicates);

}  // namespace argossm::smc

#endif

#ifndef ARGOSSM_FIELDS_HPP
#define ARGOSSM_FIELDS_HPP

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "argossm/types.hpp"

namespace argossm::fields {

struct FieldObservation {
  Position x;
  double t = 0.0;  // days
  double value = 0.0;
  std::string float_id;
};

struct MaternParams {
  double variance = 1.0;
  double range_km = 100.0;
  double smoothness = 1.5;  // one of 0.5, 1.5, 2.5
  double time_range_days = std::numeric_limits<double>::infinity();
  double nugget = 0.0;

  void validate() const;
};

// Matern correlation m(rho) at scaled distance rho for the given smoothness.
double matern_correlation(double rho, double smoothness);

// Space-time covariance: variance * m(sqrt((d/range)^2 + (dt/time_range)^2)),
// plus the nugget exactly at zero separation.
double matern_cov(double d_km, double dt_days, const MaternParams& p);

// Locally-constant-in-space seasonal regression: basis
// [1, cos(2 pi t / P), sin(2 pi t / P), ...] up to `harmonics` harmonics with
// Gaussian spatial kernel weights. harmonic = 0 is the velocity variant.
class MeanField {
 public:
  MeanField(std::vector<FieldObservation> obs, double bandwidth_km, int harmonics,
            double period_days);

  // nullopt when fewer than basis-size observations fall within the bandwidth
  // (node unestimable).
  std::optional<double> value_at(const Position& x, double t) const;
  std::optional<Eigen::VectorXd> coefficients_at(const Position& x) const;

  int basis_size() const { return 2 * harmonics_ + 1; }
  const std::vector<FieldObservation>& observations() const { return obs_; }

 private:
  std::vector<FieldObservation> obs_;
  double bandwidth_km_;
  int harmonics_;
  double period_days_;
};

MeanField fit_mean(std::vector<FieldObservation> obs, double bandwidth_km,
                   int harmonics, double period_days = 365.25);

struct FitCovOptions {
  int max_sweeps = 12;
  double step_tol = 1e-3;   // stop when all log-scale steps shrink below this
  bool fit_time_range = false;
};

struct CovFit {
  MaternParams params;
  double loglik = -std::numeric_limits<double>::infinity();
};

// Exact dense Gaussian log-likelihood of zero-mean residuals under the Matern
// covariance (nugget on the diagonal); -inf when the Gram matrix is not PD.
double gp_loglik(const std::vector<FieldObservation>& residuals,
                 const MaternParams& p);

// Maximum-likelihood covariance parameters via derivative-free coordinate
// search in log-parameters; smoothness stays fixed.
CovFit fit_cov(const std::vector<FieldObservation>& residuals,
               const MaternParams& init, const FitCovOptions& opt = {});

struct QueryNode {
  Position x;
  double t = 0.0;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;  // predictive variance including the nugget
};

// GP conditional (kriging) on mean-function residuals, mean added back.
// Ill-conditioned Gram matrices get escalating jitter (1e-8 -> 1e-4 of the
// variance) before failing.
std::vector<std::optional<Prediction>> predict(
    const std::vector<FieldObservation>& obs, const MeanField& mean,
    const MaternParams& cov, const std::vector<QueryNode>& nodes);

struct PipelineConfig {
  double mean_bandwidth_km = 250.0;
  int harmonics = 2;
  double period_days = 365.25;
  MaternParams cov_init;
  bool fit_covariance = true;
  FitCovOptions fit_options;
};

struct NodeSummary {
  double mean_of_means = 0.0;
  double mean_conditional_variance = 0.0;
  double between_sample_variance = 0.0;
  double total_variance = 0.0;  // mean_conditional + between
};

struct ImputationResult {
  std::vector<QueryNode> nodes;
  std::vector<std::optional<NodeSummary>> summary;  // nullopt = unestimable
  int n_samples = 0;
};

// Runs the mean/covariance/prediction pipeline once per location sample and
// combines per-node results by the law of total variance: within-sample
// variance averaged, between-sample variance of the conditional means added.
ImputationResult impute_aggregate(
    const std::vector<std::vector<FieldObservation>>& location_samples,
    const PipelineConfig& cfg, const std::vector<QueryNode>& nodes);

}  // namespace argossm::fields

#endif

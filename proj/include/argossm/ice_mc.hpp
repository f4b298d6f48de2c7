#ifndef ARGOSSM_ICE_MC_HPP
#define ARGOSSM_ICE_MC_HPP

#include <vector>

#include "argossm/envfields.hpp"
#include "argossm/rng.hpp"
#include "argossm/types.hpp"

namespace argossm::ice {

// Distribution over the 4 ice-avoidance states {0,1,2,3}.
using IceBelief = Eigen::Vector4d;

inline IceBelief uniform_belief() { return IceBelief::Constant(0.25); }
inline IceBelief surfaced_belief() { return {0.0, 0.0, 0.0, 1.0}; }

// Probability that the float detects ice given concentration E, implemented
// exactly as printed: clamp(p_tpr*E + (1 - p_tnr)*E, 0, 1). The Complement
// variant uses (1 - p_tnr)*(1 - E) for the false-positive term.
double detect_prob(double concentration, double p_tpr, double p_tnr,
                   env::DetectFormula formula = env::DetectFormula::Paper);

// One ice-avoidance transition: detection resets the streak to 0, otherwise
// the state increments and saturates at 3.
IceBelief step_belief(const IceBelief& belief, double e_tilde);

// Column-stochastic transition matrix T(next, prev) for a detection prob.
Eigen::Matrix4d transition_matrix(double e_tilde);

struct AvailabilityUpdate {
  double loglik = 0.0;       // log P(A_n = a | belief); -inf when impossible
  IceBelief posterior = uniform_belief();
};

// Conditions the belief on the availability indicator. P(A=1|S<3) = 0,
// P(A=1|S=3) = 1 - p_mar. A zero-likelihood observation yields -inf and an
// unchanged belief; the caller zeroes the particle's weight.
AvailabilityUpdate availability_loglik(const IceBelief& belief, bool available,
                                       double p_mar);

// Forward quantities along one fixed X trajectory, cached for backward
// sampling of the S path. e_tilde[0] is unused (no transition into n = 1).
struct SPathCache {
  std::vector<IceBelief> posterior;  // P(S_n | X_{1:n}, A_{1:n}), length N
  std::vector<double> e_tilde;       // detection prob at (X_n, t_n), length N
  double loglik = 0.0;               // log P(A_{1:N} | X_{1:N})
};

SPathCache forward_cache(const std::vector<double>& e_tilde,
                         const std::vector<bool>& available, double p_mar,
                         const IceBelief& prior = uniform_belief());

// Draws S_{1:N} from its posterior given the trajectory and availability via
// the standard backward recursion over the cached forward beliefs.
std::vector<int> sample_s_path(const SPathCache& cache, Rng& rng);

}  // namespace argossm::ice

#endif

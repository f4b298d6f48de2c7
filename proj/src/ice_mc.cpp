#include "argossm/ice_mc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace argossm::ice {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double detect_prob(double concentration, double p_tpr, double p_tnr,
                   env::DetectFormula formula) {
  const double e = std::clamp(concentration, 0.0, 1.0);
  double p;
  if (formula == env::DetectFormula::Paper)
    p = p_tpr * e + (1.0 - p_tnr) * e;
  else
    p = p_tpr * e + (1.0 - p_tnr) * (1.0 - e);
  return std::clamp(p, 0.0, 1.0);
}

IceBelief step_belief(const IceBelief& belief, double e_tilde) {
  IceBelief out;
  out(0) = e_tilde * belief.sum();
  out(1) = (1.0 - e_tilde) * belief(0);
  out(2) = (1.0 - e_tilde) * belief(1);
  out(3) = (1.0 - e_tilde) * (belief(2) + belief(3));
  return out;
}

Eigen::Matrix4d transition_matrix(double e_tilde) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Zero();
  for (int prev = 0; prev < 4; ++prev) {
    t(0, prev) = e_tilde;
    t(std::min(prev + 1, 3), prev) += 1.0 - e_tilde;
  }
  return t;
}

AvailabilityUpdate availability_loglik(const IceBelief& belief, bool available,
                                       double p_mar) {
  // Per-state likelihood of the observed indicator.
  IceBelief lik;
  if (available)
    lik << 0.0, 0.0, 0.0, 1.0 - p_mar;
  else
    lik << 1.0, 1.0, 1.0, p_mar;

  const IceBelief joint = belief.cwiseProduct(lik);
  const double total = joint.sum();
  if (!(total > 0.0)) return {kNegInf, belief};
  return {std::log(total), joint / total};
}

SPathCache forward_cache(const std::vector<double>& e_tilde,
                         const std::vector<bool>& available, double p_mar,
                         const IceBelief& prior) {
  const std::size_t n = available.size();
  if (e_tilde.size() != n)
    throw ParameterError("forward_cache: e_tilde and available lengths differ");
  SPathCache cache;
  cache.e_tilde = e_tilde;
  cache.posterior.reserve(n);
  IceBelief belief = prior;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) belief = step_belief(belief, e_tilde[i]);
    const AvailabilityUpdate up = availability_loglik(belief, available[i], p_mar);
    cache.loglik += up.loglik;
    belief = up.posterior;
    cache.posterior.push_back(belief);
  }
  return cache;
}

std::vector<int> sample_s_path(const SPathCache& cache, Rng& rng) {
  const int n = static_cast<int>(cache.posterior.size());
  std::vector<int> path(n, 0);
  if (n == 0) return path;

  auto draw = [&](const IceBelief& probs) {
    const double total = probs.sum();
    double u = rng.uniform() * total;
    for (int k = 0; k < 3; ++k) {
      u -= probs(k);
      if (u < 0.0) return k;
    }
    return 3;
  };

  path[n - 1] = draw(cache.posterior[n - 1]);
  for (int i = n - 2; i >= 0; --i) {
    const double e = cache.e_tilde[i + 1];
    IceBelief back;
    for (int k = 0; k < 4; ++k) {
      // P(S_{i+1} = path[i+1] | S_i = k) under detection prob e.
      double trans = 0.0;
      if (path[i + 1] == 0) trans += e;
      if (path[i + 1] == std::min(k + 1, 3)) trans += 1.0 - e;
      back(k) = cache.posterior[i](k) * trans;
    }
    path[i] = draw(back);
  }
  return path;
}

}  // namespace argossm::ice

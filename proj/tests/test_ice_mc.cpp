#include <doctest.h>

#include <array>
#include <cmath>

#include "argossm/ice_mc.hpp"

using namespace argossm;
using ice::IceBelief;

namespace {

// Brute-force likelihood of an availability sequence by enumerating all S
// paths; transition uses detection prob e_tilde[n] into index n.
double enumerate_loglik(const std::vector<double>& e_tilde,
                        const std::vector<bool>& avail, double p_mar) {
  const int n = static_cast<int>(avail.size());
  double total = 0.0;
  std::vector<int> path(n, 0);
  const auto av_lik = [&](int s, bool a) {
    if (a) return s == 3 ? 1.0 - p_mar : 0.0;
    return s == 3 ? p_mar : 1.0;
  };
  const long n_paths = static_cast<long>(std::pow(4.0, n));
  for (long code = 0; code < n_paths; ++code) {
    long c = code;
    for (int i = 0; i < n; ++i) {
      path[i] = static_cast<int>(c % 4);
      c /= 4;
    }
    double p = 0.25 * av_lik(path[0], avail[0]);  // uniform prior on S_1
    for (int i = 1; i < n && p > 0.0; ++i) {
      const double e = e_tilde[i];
      double trans = 0.0;
      if (path[i] == 0) trans += e;
      if (path[i] == std::min(path[i - 1] + 1, 3)) trans += 1.0 - e;
      p *= trans * av_lik(path[i], avail[i]);
    }
    total += p;
  }
  return std::log(total);
}

}  // namespace

TEST_CASE("detect_prob formula as printed, with clamping") {
  CHECK(ice::detect_prob(0.0, 0.9, 0.8) == 0.0);
  CHECK(ice::detect_prob(0.7, 1.0, 1.0) == doctest::Approx(0.7));
  CHECK(ice::detect_prob(0.5, 0.9, 0.8) == doctest::Approx(0.55));  // (0.9 + 0.2) * 0.5
  CHECK(ice::detect_prob(1.0, 1.0, 0.5) == 1.0);                    // clamped
  // complement variant multiplies the false-positive term by (1 - E)
  CHECK(ice::detect_prob(0.5, 0.9, 0.8, env::DetectFormula::Complement) ==
        doctest::Approx(0.9 * 0.5 + 0.2 * 0.5));
  CHECK(ice::detect_prob(0.0, 0.9, 0.8, env::DetectFormula::Complement) ==
        doctest::Approx(0.2));
}

TEST_CASE("step_belief edge behavior") {
  const IceBelief b = ice::uniform_belief();
  const IceBelief detected = ice::step_belief(b, 1.0);
  CHECK(detected(0) == doctest::Approx(1.0));
  CHECK(detected.tail<3>().norm() == doctest::Approx(0.0));

  IceBelief climb(1.0, 0.0, 0.0, 0.0);
  for (int k = 0; k < 3; ++k) climb = ice::step_belief(climb, 0.0);
  CHECK(climb(3) == doctest::Approx(1.0));
}

TEST_CASE("step_belief matches the 4x4 transition-matrix product") {
  IceBelief b(0.1, 0.2, 0.3, 0.4);
  const double e = 0.3;
  const IceBelief direct = ice::step_belief(b, e);
  const IceBelief via_matrix = ice::transition_matrix(e) * b;
  CHECK((direct - via_matrix).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("step_belief preserves the simplex") {
  IceBelief b(0.05, 0.15, 0.35, 0.45);
  for (double e : {0.0, 0.2, 0.77, 1.0}) {
    const IceBelief out = ice::step_belief(b, e);
    CHECK(out.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.minCoeff() >= 0.0);
  }
}

TEST_CASE("Chapman-Kolmogorov over two steps") {
  IceBelief b(0.4, 0.3, 0.2, 0.1);
  const double e1 = 0.25, e2 = 0.6;
  const IceBelief stepped = ice::step_belief(ice::step_belief(b, e1), e2);
  const Eigen::Matrix4d two = ice::transition_matrix(e2) * ice::transition_matrix(e1);
  CHECK((stepped - IceBelief(two * b)).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("availability likelihood conditioning") {
  const auto sure = ice::availability_loglik({0.0, 0.0, 0.0, 1.0}, true, 0.0);
  CHECK(sure.loglik == doctest::Approx(0.0));
  CHECK(sure.posterior(3) == doctest::Approx(1.0));

  const auto half = ice::availability_loglik({0.5, 0.0, 0.0, 0.5}, true, 0.0);
  CHECK(half.loglik == doctest::Approx(std::log(0.5)));
  CHECK(half.posterior(3) == doctest::Approx(1.0));

  // surfacing with no mass on S = 3 is impossible
  const auto impossible = ice::availability_loglik({1.0, 0.0, 0.0, 0.0}, true, 0.1);
  CHECK(impossible.loglik == -std::numeric_limits<double>::infinity());

  // a = false: enumeration oracle over S
  const IceBelief b(0.1, 0.2, 0.3, 0.4);
  const double p_mar = 0.15;
  const auto miss = ice::availability_loglik(b, false, p_mar);
  const double expect = 0.1 + 0.2 + 0.3 + 0.4 * p_mar;
  CHECK(miss.loglik == doctest::Approx(std::log(expect)).epsilon(1e-12));
  for (int s = 0; s < 4; ++s) {
    const double lik = (s == 3) ? p_mar : 1.0;
    CHECK(miss.posterior(s) == doctest::Approx(b(s) * lik / expect).epsilon(1e-12));
  }
}

TEST_CASE("posterior after an available fix has mass only on S = 3") {
  IceBelief b = ice::uniform_belief();
  const auto up = ice::availability_loglik(ice::step_belief(b, 0.3), true, 0.2);
  CHECK(up.posterior(0) == 0.0);
  CHECK(up.posterior(1) == 0.0);
  CHECK(up.posterior(2) == 0.0);
  CHECK(up.posterior(3) == doctest::Approx(1.0));
}

TEST_CASE("forward recursion likelihood equals brute-force enumeration, N = 8") {
  const std::vector<double> e = {0.0, 0.3, 0.8, 0.1, 0.5, 0.0, 0.9, 0.2};
  const std::vector<bool> avail = {true, false, false, true, false, false, false, true};
  const double p_mar = 0.1;
  const ice::SPathCache cache = ice::forward_cache(e, avail, p_mar);
  const double oracle = enumerate_loglik(e, avail, p_mar);
  CHECK(cache.loglik == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("sample_s_path deterministic limits") {
  // e_tilde = 1 everywhere: the only surviving path is all zeros, so any
  // availability is impossible except a = false with mass off 3.
  {
    const std::vector<double> e = {0.0, 1.0, 1.0, 1.0};
    const std::vector<bool> avail = {false, false, false, false};
    const ice::SPathCache cache = ice::forward_cache(e, avail, 0.0);
    Rng rng(1);
    for (int k = 0; k < 10; ++k) {
      const auto path = ice::sample_s_path(cache, rng);
      CHECK(path[1] == 0);
      CHECK(path[2] == 0);
      CHECK(path[3] == 0);
    }
  }
  // e_tilde = 0 with a final fix: path must climb to 3 deterministically.
  {
    const std::vector<double> e = {0.0, 0.0, 0.0, 0.0};
    const std::vector<bool> avail = {false, false, false, true};
    const ice::SPathCache cache = ice::forward_cache(e, avail, 0.0);
    Rng rng(2);
    const auto path = ice::sample_s_path(cache, rng);
    CHECK(path[0] == 0);
    CHECK(path[1] == 1);
    CHECK(path[2] == 2);
    CHECK(path[3] == 3);
  }
}

TEST_CASE("sample_s_path frequencies match exact enumeration, N = 4") {
  const std::vector<double> e = {0.0, 0.35, 0.6, 0.15};
  const std::vector<bool> avail = {false, false, false, true};
  const double p_mar = 0.2;
  const ice::SPathCache cache = ice::forward_cache(e, avail, p_mar);

  // exact posterior over all 4^4 paths
  const auto av_lik = [&](int s, bool a) {
    if (a) return s == 3 ? 1.0 - p_mar : 0.0;
    return s == 3 ? p_mar : 1.0;
  };
  std::map<int, double> exact;
  double total = 0.0;
  for (int code = 0; code < 256; ++code) {
    int c = code;
    std::array<int, 4> path;
    for (int i = 0; i < 4; ++i) {
      path[i] = c % 4;
      c /= 4;
    }
    double p = 0.25 * av_lik(path[0], avail[0]);
    for (int i = 1; i < 4 && p > 0.0; ++i) {
      double trans = 0.0;
      if (path[i] == 0) trans += e[i];
      if (path[i] == std::min(path[i - 1] + 1, 3)) trans += 1.0 - e[i];
      p *= trans * av_lik(path[i], avail[i]);
    }
    if (p > 0.0) {
      exact[code] = p;
      total += p;
    }
  }
  for (auto& [code, p] : exact) p /= total;

  const int n_draws = 100000;
  std::map<int, int> counts;
  Rng rng(1234);
  for (int k = 0; k < n_draws; ++k) {
    const auto path = ice::sample_s_path(cache, rng);
    const int code = path[0] + 4 * path[1] + 16 * path[2] + 64 * path[3];
    counts[code]++;
  }
  for (const auto& [code, p] : exact) {
    const double freq = double(counts[code]) / n_draws;
    const double se = std::sqrt(p * (1.0 - p) / n_draws);
    CHECK(std::abs(freq - p) <= 3.0 * se + 1e-12);
  }
  // no impossible path sampled
  for (const auto& [code, cnt] : counts) CHECK(exact.count(code) == 1);
}

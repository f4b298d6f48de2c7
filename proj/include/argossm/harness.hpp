#ifndef ARGOSSM_HARNESS_HPP
#define ARGOSSM_HARNESS_HPP

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "argossm/envfields.hpp"
#include "argossm/smc.hpp"
#include "argossm/types.hpp"

namespace argossm::harness {

inline constexpr const char* kVersion = "argossm 0.1.0";

// ---- Profile CSV ----------------------------------------------------------
// Header: float_id,time_days,available,lon,lat,temp,psal
// lon/lat must be empty when available = 0; temp/psal are optional.

std::vector<ProfileSeries> read_profiles(std::istream& in);
std::vector<ProfileSeries> load_profiles(const std::string& path);
void write_profiles(std::ostream& out, const std::vector<ProfileSeries>& series);
void write_profiles_file(const std::string& path,
                         const std::vector<ProfileSeries>& series);

// ---- Trajectory draw CSV ---------------------------------------------------
// Header: float_id,draw,index,time_days,lon,lat,v_lon,v_lat,s

void write_trajectory_draws(std::ostream& out, const std::string& float_id,
                            const smc::PosteriorDraws& draws, bool header);
std::map<std::string, smc::PosteriorDraws> read_trajectory_draws(std::istream& in);
std::map<std::string, smc::PosteriorDraws> load_trajectory_draws(const std::string& path);

// ---- Config ----------------------------------------------------------------
// key = value text with dotted keys; '#' starts a comment.

class Config {
 public:
  static Config parse(std::istream& in);
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string require(const std::string& key) const;
  double require_double(const std::string& key) const;

  std::uint64_t content_hash() const;  // FNV-1a of the normalized entries

 private:
  std::map<std::string, std::string> values_;
};

// Model parameters and SMC settings assembled from config keys (params.*,
// smc.*), with isotropic covariances sigma = value * I.
ModelParams params_from_config(const Config& cfg);
smc::SmcConfig smc_from_config(const Config& cfg);

// ---- Holdout protocol -------------------------------------------------------

struct HoldoutOutcome {
  ModelKind model = ModelKind::RW;
  Position prediction;
  double error_km = 0.0;
  bool failed = false;
};

struct HoldoutTrial {
  std::string float_id;
  int index = 0;  // 0-based heldout record
  double time_days = 0.0;
  double gap_days = 0.0;  // span between the fixes bounding the gap
  Position truth;
  std::vector<HoldoutOutcome> outcomes;
};

// Candidate trials: for every maximal unavailable run spanning at least
// min_gap_days between its bounding fixes, the fix immediately before and the
// fix immediately after each become one trial.
std::vector<HoldoutTrial> select_holdouts(const ProfileSeries& series,
                                          double min_gap_days = 36.0);

struct InferenceConfig {
  ModelParams params;  // base theta; initial state re-anchored per masked series
  smc::SmcConfig smc;
  env::EnvHandles env;
  int n_ffbs_draws = 200;
  std::uint64_t seed = 0;
};

// Runs every requested model on the series with the trial's fix masked;
// predictions are posterior means (smoother for RW/AR, FFBS mean otherwise)
// and errors are great-circle km.
void evaluate_holdout(HoldoutTrial& trial, const ProfileSeries& series,
                      const std::vector<ModelKind>& models,
                      const InferenceConfig& cfg);

struct MetricsRow {
  std::string model;
  long n_trials = 0;
  long n_failed = 0;
  double rmse_km = 0.0;
  double median_km = 0.0;  // median of per-trial km errors
};

std::vector<MetricsRow> report_metrics(const std::vector<HoldoutTrial>& trials);

void write_trials(std::ostream& out, const std::vector<HoldoutTrial>& trials);
std::vector<HoldoutTrial> read_trials(std::istream& in);
void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows);

// ---- ESS / log-likelihood variance study ------------------------------------

struct EssStudyRow {
  std::string float_id;
  std::string proposal;
  double final_ess_mean = 0.0;
  double loglik_sd = 0.0;
  bool sd_below_one = false;
};

std::vector<EssStudyRow> ess_study(const std::vector<ProfileSeries>& series,
                                   ModelKind kind, const InferenceConfig& cfg,
                                   int n_replicates);

void write_ess_study(std::ostream& out, const std::vector<EssStudyRow>& rows);

// ---- CLI --------------------------------------------------------------------
// Subcommands: simulate, fit, smooth, holdout, ess-study, fields, report.
// Exit codes: 0 success, 2 validation error, 3 inference failure.

int run_cli(const std::vector<std::string>& args);

}  // namespace argossm::harness

#endif

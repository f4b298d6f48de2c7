#include "argossm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "argossm/csv.hpp"
#include "argossm/lingauss.hpp"

namespace argossm::harness {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

// ---- Profile CSV ----------------------------------------------------------

std::vector<ProfileSeries> read_profiles(std::istream& in) {
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw LoadError("empty profile file", 1);
  ++lineno;
  if (csv::trim(line) != "float_id,time_days,available,lon,lat,temp,psal")
    throw LoadError("unexpected profile CSV header", 1);

  std::vector<ProfileSeries> all;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv::trim(line).empty()) continue;
    const auto parts = csv::split(line);
    if (parts.size() != 7)
      throw LoadError("expected 7 comma-separated fields", lineno);

    const std::string& fid = parts[0];
    if (fid.empty()) throw LoadError("empty float_id", lineno);
    auto [it, inserted] = index.try_emplace(fid, all.size());
    if (inserted) {
      all.emplace_back();
      all.back().float_id = fid;
    }
    ProfileSeries& s = all[it->second];

    const double t = csv::parse_double(parts[1], lineno);
    if (!s.times.empty() && !(t > s.times.back()))
      throw LoadError("time_days not strictly increasing for float '" + fid + "'",
                      lineno);
    const long avail = csv::parse_long(parts[2], lineno);
    if (avail != 0 && avail != 1) throw LoadError("available must be 0 or 1", lineno);

    std::optional<Position> gps;
    if (avail == 1) {
      if (parts[3].empty() || parts[4].empty())
        throw LoadError("available = 1 requires lon and lat", lineno);
      gps = Position{csv::parse_double(parts[3], lineno),
                     csv::parse_double(parts[4], lineno)};
      if (gps->lat < -90.0 || gps->lat > 90.0)
        throw LoadError("latitude outside [-90, 90]", lineno);
    } else {
      if (!parts[3].empty() || !parts[4].empty())
        throw LoadError("available = 0 requires empty lon and lat", lineno);
    }

    std::optional<double> temp, psal;
    if (!parts[5].empty()) temp = csv::parse_double(parts[5], lineno);
    if (!parts[6].empty()) psal = csv::parse_double(parts[6], lineno);

    s.times.push_back(t);
    s.available.push_back(avail == 1);
    s.gps.push_back(gps);
    s.temperature.push_back(temp);
    s.salinity.push_back(psal);
  }

  for (const ProfileSeries& s : all) s.validate();
  return all;
}

std::vector<ProfileSeries> load_profiles(const std::string& path) {
  auto in = open_input(path);
  return read_profiles(in);
}

void write_profiles(std::ostream& out, const std::vector<ProfileSeries>& series) {
  out << "float_id,time_days,available,lon,lat,temp,psal\n";
  for (const ProfileSeries& s : series) {
    for (int n = 0; n < s.size(); ++n) {
      out << s.float_id << ',' << csv::fmt(s.times[n]) << ','
          << (s.available[n] ? 1 : 0) << ',';
      if (s.gps[n]) out << csv::fmt(s.gps[n]->lon) << ',' << csv::fmt(s.gps[n]->lat);
      else out << ',';
      out << ',' << csv::fmt(s.temperature[n]) << ',' << csv::fmt(s.salinity[n])
          << '\n';
    }
  }
}

void write_profiles_file(const std::string& path,
                         const std::vector<ProfileSeries>& series) {
  auto out = open_output(path);
  write_profiles(out, series);
}

// ---- Trajectory draw CSV ----------------------------------------------------

void write_trajectory_draws(std::ostream& out, const std::string& float_id,
                            const smc::PosteriorDraws& draws, bool header) {
  if (header) out << "float_id,draw,index,time_days,lon,lat,v_lon,v_lat,s\n";
  for (std::size_t d = 0; d < draws.draws.size(); ++d) {
    const smc::TrajectoryDraw& tr = draws.draws[d];
    for (int n = 0; n < tr.x.cols(); ++n) {
      out << float_id << ',' << d << ',' << n << ',' << csv::fmt(draws.times[n])
          << ',' << csv::fmt(tr.x(0, n)) << ',' << csv::fmt(tr.x(1, n)) << ','
          << csv::fmt(tr.v(0, n)) << ',' << csv::fmt(tr.v(1, n)) << ','
          << tr.s[n] << '\n';
    }
  }
}

std::map<std::string, smc::PosteriorDraws> read_trajectory_draws(std::istream& in) {
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw LoadError("empty trajectory file", 1);
  ++lineno;
  if (csv::trim(line) != "float_id,draw,index,time_days,lon,lat,v_lon,v_lat,s")
    throw LoadError("unexpected trajectory CSV header", 1);

  struct Row {
    long draw, index;
    double t, lon, lat, vlon, vlat;
    int s;
  };
  std::map<std::string, std::vector<Row>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv::trim(line).empty()) continue;
    const auto p = csv::split(line);
    if (p.size() != 9) throw LoadError("expected 9 fields", lineno);
    Row r{csv::parse_long(p[1], lineno), csv::parse_long(p[2], lineno),
          csv::parse_double(p[3], lineno), csv::parse_double(p[4], lineno),
          csv::parse_double(p[5], lineno), csv::parse_double(p[6], lineno),
          csv::parse_double(p[7], lineno),
          static_cast<int>(csv::parse_long(p[8], lineno))};
    rows[p[0]].push_back(r);
  }

  std::map<std::string, smc::PosteriorDraws> out;
  for (auto& [fid, rs] : rows) {
    long n_draws = 0, n_idx = 0;
    for (const Row& r : rs) {
      n_draws = std::max(n_draws, r.draw + 1);
      n_idx = std::max(n_idx, r.index + 1);
    }
    if (static_cast<long>(rs.size()) != n_draws * n_idx)
      throw LoadError("trajectory draws for float '" + fid + "' are not rectangular");
    smc::PosteriorDraws pd;
    pd.times.assign(n_idx, 0.0);
    pd.draws.assign(n_draws, smc::TrajectoryDraw{});
    for (auto& d : pd.draws) {
      d.x.resize(2, n_idx);
      d.v.resize(2, n_idx);
      d.s.assign(n_idx, 3);
    }
    for (const Row& r : rs) {
      pd.times[r.index] = r.t;
      smc::TrajectoryDraw& d = pd.draws[r.draw];
      d.x(0, r.index) = r.lon;
      d.x(1, r.index) = r.lat;
      d.v(0, r.index) = r.vlon;
      d.v(1, r.index) = r.vlat;
      d.s[r.index] = r.s;
    }
    out.emplace(fid, std::move(pd));
  }
  return out;
}

std::map<std::string, smc::PosteriorDraws> load_trajectory_draws(const std::string& path) {
  auto in = open_input(path);
  return read_trajectory_draws(in);
}

// ---- Config -----------------------------------------------------------------

Config Config::parse(std::istream& in) {
  Config cfg;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = csv::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '='");
    const std::string key = csv::trim(t.substr(0, eq));
    const std::string value = csv::trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) +
                                       " has an empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  auto in = open_input(path);
  return parse(in);
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return csv::parse_double(it->second, -1);
  } catch (const LoadError&) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

long Config::get_long(const std::string& key, long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return csv::parse_long(it->second, -1);
  } catch (const LoadError&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + it->second);
}

std::string Config::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

double Config::require_double(const std::string& key) const {
  require(key);
  return get_double(key, 0.0);
}

std::uint64_t Config::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [k, v] : values_) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  return h;
}

ModelParams params_from_config(const Config& cfg) {
  ModelParams p;
  p.sigma_x = cfg.get_double("params.sigma_x2", 1e-3) * Mat2::Identity();
  p.sigma_y = cfg.get_double("params.sigma_y2", 1e-6) * Mat2::Identity();
  p.sigma_v = cfg.get_double("params.sigma_v2", 1e-4) * Mat2::Identity();
  p.alpha = cfg.get_double("params.alpha", 0.9);
  p.v0 = Vec2(cfg.get_double("params.v0_lon", 0.0), cfg.get_double("params.v0_lat", 0.0));
  p.sigma_pv2 = cfg.get_double("params.sigma_pv2", 1.0);
  p.p_tpr = cfg.get_double("params.p_tpr", 0.95);
  p.p_tnr = cfg.get_double("params.p_tnr", 0.9);
  p.p_mar = cfg.get_double("params.p_mar", 0.05);
  p.mu1 = Vec4(cfg.get_double("params.mu1_lon", 0.0), cfg.get_double("params.mu1_lat", 0.0),
               cfg.get_double("params.mu1_vlon", 0.0), cfg.get_double("params.mu1_vlat", 0.0));
  p.sigma1.setZero();
  p.sigma1.topLeftCorner<2, 2>() = p.sigma_y;
  p.sigma1.bottomRightCorner<2, 2>() = 0.01 * Mat2::Identity();
  return p;
}

smc::SmcConfig smc_from_config(const Config& cfg) {
  smc::SmcConfig out;
  out.n_particles = static_cast<int>(cfg.get_long("smc.n_particles", 1000));
  out.resample_threshold = cfg.get_double("smc.resample_threshold", 0.5);
  out.proposal = smc::parse_proposal(cfg.get("smc.proposal", "lookahead"));
  out.twist = cfg.get_bool("smc.twist", true);
  out.pv_in_proposal = cfg.get_bool("smc.pv_in_proposal", true);
  out.validate();
  return out;
}

// ---- Holdout protocol ---------------------------------------------------------

std::vector<HoldoutTrial> select_holdouts(const ProfileSeries& series,
                                          double min_gap_days) {
  series.validate();
  std::vector<HoldoutTrial> trials;
  const int n = series.size();
  int i = 0;
  while (i < n) {
    if (series.available[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < n && !series.available[j + 1]) ++j;
    // run of unavailable records is [i, j]
    const int before = i - 1;
    const int after = j + 1;
    if (before >= 0 && after < n) {
      const double gap = series.times[after] - series.times[before];
      if (gap >= min_gap_days) {
        for (int idx : {before, after}) {
          HoldoutTrial t;
          t.float_id = series.float_id;
          t.index = idx;
          t.time_days = series.times[idx];
          t.gap_days = gap;
          t.truth = *series.gps[idx];
          trials.push_back(t);
        }
      }
    }
    i = j + 1;
  }
  return trials;
}

namespace {

Position posterior_position(const ProfileSeries& masked, ModelKind kind,
                            const InferenceConfig& cfg, int index,
                            std::uint64_t seed) {
  ModelParams params = cfg.params;
  params.anchor_initial_state(masked);
  if (is_linear_gaussian(kind)) {
    const auto smoothed = lingauss::kalman_smoother(masked, params, kind);
    return {smoothed[index].mean(0), smoothed[index].mean(1)};
  }
  smc::SmcConfig scfg = cfg.smc;
  scfg.seed = seed;
  const smc::FilterResult fr = smc::run_filter(masked, params, kind, cfg.env, scfg);
  const smc::PosteriorDraws draws =
      smc::ffbs(fr, masked, params, kind, cfg.env, cfg.n_ffbs_draws, mix64(seed, 0xffb5));
  Vec2 mean = Vec2::Zero();
  for (const auto& d : draws.draws) mean += d.x.col(index);
  mean /= static_cast<double>(draws.draws.size());
  return {mean(0), mean(1)};
}

}  // namespace

void evaluate_holdout(HoldoutTrial& trial, const ProfileSeries& series,
                      const std::vector<ModelKind>& models,
                      const InferenceConfig& cfg) {
  ProfileSeries masked = series;
  masked.gps[trial.index] = std::nullopt;
  masked.available[trial.index] = false;

  trial.outcomes.clear();
  for (ModelKind kind : models) {
    HoldoutOutcome oc;
    oc.model = kind;
    try {
      const std::uint64_t seed =
          mix64(cfg.seed, std::hash<std::string>{}(trial.float_id),
                static_cast<std::uint64_t>(trial.index),
                static_cast<std::uint64_t>(kind));
      oc.prediction = posterior_position(masked, kind, cfg, trial.index, seed);
      oc.error_km = geo::haversine_km(oc.prediction.lon, oc.prediction.lat,
                                      trial.truth.lon, trial.truth.lat);
    } catch (const Error&) {
      oc.failed = true;
    }
    trial.outcomes.push_back(oc);
  }
}

std::vector<MetricsRow> report_metrics(const std::vector<HoldoutTrial>& trials) {
  if (trials.empty()) throw ConfigError("report_metrics needs at least one trial");
  std::map<std::string, std::vector<double>> errors;
  std::map<std::string, long> failed;
  for (const HoldoutTrial& t : trials)
    for (const HoldoutOutcome& oc : t.outcomes) {
      const std::string name = kind_name(oc.model);
      if (oc.failed)
        ++failed[name];
      else
        errors[name].push_back(oc.error_km);
    }

  std::vector<MetricsRow> rows;
  for (auto& [name, errs] : errors) {
    MetricsRow row;
    row.model = name;
    row.n_trials = static_cast<long>(errs.size());
    row.n_failed = failed.count(name) ? failed[name] : 0;
    double ss = 0.0;
    for (double e : errs) ss += e * e;
    row.rmse_km = std::sqrt(ss / errs.size());
    std::sort(errs.begin(), errs.end());
    const std::size_t m = errs.size();
    row.median_km = (m % 2 == 1) ? errs[m / 2] : 0.5 * (errs[m / 2 - 1] + errs[m / 2]);
    rows.push_back(row);
  }
  return rows;
}

void write_trials(std::ostream& out, const std::vector<HoldoutTrial>& trials) {
  out << "float_id,index,time_days,gap_days,truth_lon,truth_lat,model,pred_lon,"
         "pred_lat,error_km,failed\n";
  for (const HoldoutTrial& t : trials)
    for (const HoldoutOutcome& oc : t.outcomes) {
      out << t.float_id << ',' << t.index << ',' << csv::fmt(t.time_days) << ','
          << csv::fmt(t.gap_days) << ',' << csv::fmt(t.truth.lon) << ','
          << csv::fmt(t.truth.lat) << ',' << kind_name(oc.model) << ',';
      if (oc.failed)
        out << ",,," << 1 << '\n';
      else
        out << csv::fmt(oc.prediction.lon) << ',' << csv::fmt(oc.prediction.lat)
            << ',' << csv::fmt(oc.error_km) << ",0\n";
    }
}

std::vector<HoldoutTrial> read_trials(std::istream& in) {
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw LoadError("empty trials file", 1);
  ++lineno;
  if (csv::trim(line) !=
      "float_id,index,time_days,gap_days,truth_lon,truth_lat,model,pred_lon,"
      "pred_lat,error_km,failed")
    throw LoadError("unexpected trials CSV header", 1);

  std::map<std::pair<std::string, long>, HoldoutTrial> trials;
  std::vector<std::pair<std::string, long>> order;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv::trim(line).empty()) continue;
    const auto p = csv::split(line);
    if (p.size() != 11) throw LoadError("expected 11 fields", lineno);
    const std::pair<std::string, long> key{p[0], csv::parse_long(p[1], lineno)};
    auto it = trials.find(key);
    if (it == trials.end()) {
      HoldoutTrial t;
      t.float_id = p[0];
      t.index = static_cast<int>(key.second);
      t.time_days = csv::parse_double(p[2], lineno);
      t.gap_days = csv::parse_double(p[3], lineno);
      t.truth = {csv::parse_double(p[4], lineno), csv::parse_double(p[5], lineno)};
      it = trials.emplace(key, t).first;
      order.push_back(key);
    }
    HoldoutOutcome oc;
    oc.model = parse_kind(p[6]);
    oc.failed = csv::parse_long(p[10], lineno) != 0;
    if (!oc.failed) {
      oc.prediction = {csv::parse_double(p[7], lineno), csv::parse_double(p[8], lineno)};
      oc.error_km = csv::parse_double(p[9], lineno);
    }
    it->second.outcomes.push_back(oc);
  }

  std::vector<HoldoutTrial> out;
  out.reserve(order.size());
  for (const auto& key : order) out.push_back(trials[key]);
  return out;
}

void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "model,n_trials,n_failed,rmse_km,median_km\n";
  for (const MetricsRow& r : rows)
    out << r.model << ',' << r.n_trials << ',' << r.n_failed << ','
        << csv::fmt(r.rmse_km) << ',' << csv::fmt(r.median_km) << '\n';
}

// ---- ESS study ----------------------------------------------------------------

std::vector<EssStudyRow> ess_study(const std::vector<ProfileSeries>& series,
                                   ModelKind kind, const InferenceConfig& cfg,
                                   int n_replicates) {
  std::vector<EssStudyRow> rows;
  for (const ProfileSeries& s : series) {
    ModelParams params = cfg.params;
    params.anchor_initial_state(s);
    for (smc::Proposal prop : {smc::Proposal::Bootstrap, smc::Proposal::Lookahead}) {
      smc::SmcConfig scfg = cfg.smc;
      scfg.proposal = prop;
      scfg.twist = (prop == smc::Proposal::Lookahead) && cfg.smc.twist;
      scfg.seed = mix64(cfg.seed, std::hash<std::string>{}(s.float_id),
                        static_cast<std::uint64_t>(prop));
      const smc::VarianceStudy study =
          smc::loglik_variance_study(s, params, kind, cfg.env, scfg, n_replicates);
      EssStudyRow row;
      row.float_id = s.float_id;
      row.proposal = (prop == smc::Proposal::Bootstrap) ? "bootstrap" : "lookahead";
      double sum = 0.0;
      for (double e : study.final_ess) sum += e;
      row.final_ess_mean = sum / study.final_ess.size();
      row.loglik_sd = study.sd;
      row.sd_below_one = study.sd < 1.0;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_ess_study(std::ostream& out, const std::vector<EssStudyRow>& rows) {
  out << "float_id,proposal,final_ess_mean,loglik_sd,sd_below_one\n";
  for (const EssStudyRow& r : rows)
    out << r.float_id << ',' << r.proposal << ',' << csv::fmt(r.final_ess_mean)
        << ',' << csv::fmt(r.loglik_sd) << ',' << (r.sd_below_one ? 1 : 0) << '\n';
}

}  // namespace argossm::harness

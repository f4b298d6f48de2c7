#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "argossm/csv.hpp"
#include "argossm/fields.hpp"
#include "argossm/harness.hpp"
#include "argossm/lingauss.hpp"
#include "argossm/smc2.hpp"
#include "argossm/state_model.hpp"

namespace argossm::harness {

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

struct RunContext {
  Config cfg;
  fs::path out;
  std::uint64_t seed = 0;
};

RunContext make_context(const CommonArgs& args, const std::string& subcommand) {
  RunContext ctx;
  ctx.cfg = Config::parse_file(args.config_path);
  ctx.out = args.out_dir;
  fs::create_directories(ctx.out);
  ctx.seed = args.seed ? *args.seed
                       : static_cast<std::uint64_t>(ctx.cfg.get_long("seed", 0));

  std::ofstream manifest(ctx.out / "manifest.txt");
  manifest << "tool = " << kVersion << '\n'
           << "subcommand = " << subcommand << '\n'
           << "config = " << args.config_path << '\n'
           << "config_hash = " << std::hex << ctx.cfg.content_hash() << std::dec << '\n'
           << "seed = " << ctx.seed << '\n';
  return ctx;
}

// Owns the loaded environmental grids referenced by EnvHandles.
struct EnvBundle {
  std::optional<env::GridField> ice;
  std::optional<env::GridField> bathymetry;
  std::optional<env::PvGradientGrid> pv;
  env::EnvHandles handles;
};

std::vector<double> axis_from(double lo, double hi, double step) {
  std::vector<double> axis;
  for (double v = lo; v <= hi + 1e-9; v += step) axis.push_back(v);
  return axis;
}

EnvBundle load_env(const Config& cfg, ModelKind kind) {
  EnvBundle bundle;
  bundle.handles.detect_formula =
      env::parse_detect_formula(cfg.get("ice.detect_formula", "paper"));
  if (has_ice(kind)) {
    bundle.ice = env::GridField::read_file(cfg.require("ice.grid"));
    bundle.handles.ice = &*bundle.ice;
  }
  if (has_pv(kind)) {
    bundle.bathymetry = env::GridField::read_file(cfg.require("bathymetry.grid"));
    const double step = cfg.get_double("pv.grid.step_deg", 0.1);
    const double pad = 1e-9;
    const double lon_lo =
        cfg.get_double("pv.grid.lon_min", bundle.bathymetry->lon_axis.front());
    const double lon_hi =
        cfg.get_double("pv.grid.lon_max", bundle.bathymetry->lon_axis.back() + pad);
    const double lat_lo =
        cfg.get_double("pv.grid.lat_min", bundle.bathymetry->lat_axis.front());
    const double lat_hi =
        cfg.get_double("pv.grid.lat_max", bundle.bathymetry->lat_axis.back() + pad);
    bundle.pv = env::precompute_pv_grid(*bundle.bathymetry,
                                        axis_from(lon_lo, lon_hi, step),
                                        axis_from(lat_lo, lat_hi, step),
                                        cfg.get_double("pv.bandwidth_km", 300.0));
    bundle.handles.pv = &*bundle.pv;
  }
  return bundle;
}

std::string padded_id(const std::string& prefix, int i) {
  std::ostringstream s;
  s << prefix;
  if (i < 10) s << '0';
  s << i;
  return s.str();
}

// ---- simulate ----------------------------------------------------------------

int cmd_simulate(const CommonArgs& args) {
  RunContext ctx = make_context(args, "simulate");
  const ModelKind kind = parse_kind(ctx.cfg.get("model.kind", "AR"));
  const EnvBundle env = load_env(ctx.cfg, kind);
  ModelParams params = params_from_config(ctx.cfg);

  const int n_floats = static_cast<int>(ctx.cfg.get_long("sim.n_floats", 1));
  const int n_profiles = static_cast<int>(ctx.cfg.get_long("sim.n_profiles", 60));
  const double dt = ctx.cfg.get_double("sim.dt_days", 10.0);
  const double t0 = ctx.cfg.get_double("sim.t0", 0.0);
  const double dlon = ctx.cfg.get_double("sim.spread_lon", 0.5);
  const double dlat = ctx.cfg.get_double("sim.spread_lat", 0.0);
  const std::string prefix = ctx.cfg.get("sim.prefix", "float");

  std::vector<double> times(n_profiles);
  for (int i = 0; i < n_profiles; ++i) times[i] = t0 + i * dt;

  Rng root(ctx.seed);
  std::vector<ProfileSeries> all;
  std::ofstream truth(ctx.out / "truth.csv");
  truth << "float_id,index,time_days,lon,lat,v_lon,v_lat,s,available\n";
  for (int f = 0; f < n_floats; ++f) {
    ModelParams pf = params;
    pf.mu1(0) += f * dlon;
    pf.mu1(1) += f * dlat;
    Rng rng = root.substream(0x73696dULL, f);
    state::SimResult sim =
        state::simulate(kind, pf, times, env.handles, rng, padded_id(prefix, f + 1));
    for (int n = 0; n < n_profiles; ++n) {
      const LatentState& z = sim.latent[n];
      truth << sim.series.float_id << ',' << n << ',' << csv::fmt(times[n]) << ','
            << csv::fmt(z.x.lon) << ',' << csv::fmt(z.x.lat) << ','
            << csv::fmt(z.v.v_lon) << ',' << csv::fmt(z.v.v_lat) << ',' << z.s
            << ',' << (sim.series.available[n] ? 1 : 0) << '\n';
    }
    all.push_back(std::move(sim.series));
  }
  write_profiles_file((ctx.out / "profiles.csv").string(), all);
  return 0;
}

// ---- fit (SMC^2) ----------------------------------------------------------------

smc2::Dist parse_dist(const std::string& text) {
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ConfigError("malformed prior '" + text + "'");
  const std::string name = csv::trim(text.substr(0, open));
  const auto parts = csv::split(text.substr(open + 1, close - open - 1));
  if (parts.size() != 2) throw ConfigError("prior '" + text + "' needs 2 arguments");
  const double a = csv::parse_double(csv::trim(parts[0]), -1);
  const double b = csv::parse_double(csv::trim(parts[1]), -1);
  if (name == "beta") return {smc2::DistTag::Beta, a, b};
  if (name == "lognormal") return {smc2::DistTag::LogNormal, a, b};
  if (name == "normal") return {smc2::DistTag::Normal, a, b};
  if (name == "gamma") return {smc2::DistTag::Gamma, a, b};
  throw ConfigError("unknown prior family '" + name + "'");
}

smc2::PriorSpec priors_from_config(const Config& cfg, ModelKind kind) {
  smc2::PriorSpec spec = smc2::PriorSpec::defaults(kind);
  for (auto& p : spec.params) {
    const std::string base = std::string("prior.") + smc2::param_name(p.id);
    if (cfg.has(base)) spec.set_dist(p.id, parse_dist(cfg.require(base)));
    if (cfg.has(base + ".fix")) spec.fix(p.id, cfg.require_double(base + ".fix"));
  }
  return spec;
}

int cmd_fit(const CommonArgs& args) {
  RunContext ctx = make_context(args, "fit");
  const ModelKind kind = parse_kind(ctx.cfg.get("model.kind", "AR"));
  const EnvBundle env = load_env(ctx.cfg, kind);
  const auto series = load_profiles(ctx.cfg.require("profiles"));
  const smc2::PriorSpec spec = priors_from_config(ctx.cfg, kind);

  smc2::Smc2Config cfg2;
  cfg2.n_theta = static_cast<int>(ctx.cfg.get_long("smc2.n_theta", 200));
  cfg2.target_ess_frac = ctx.cfg.get_double("smc2.target_ess_frac", 0.5);
  cfg2.n_moves = static_cast<int>(ctx.cfg.get_long("smc2.n_moves", 2));
  cfg2.n_traj_draws = static_cast<int>(ctx.cfg.get_long("smc2.n_traj_draws", 0));
  cfg2.pf = smc_from_config(ctx.cfg);

  std::ofstream theta_csv(ctx.out / "theta_draws.csv");
  std::ofstream ladder_csv(ctx.out / "ladder.csv");
  std::ofstream evidence_csv(ctx.out / "evidence.csv");
  std::ofstream traj_csv;
  ladder_csv << "float_id,step,xi,ess,log_evidence_inc,acceptance_rate\n";
  evidence_csv << "float_id,log_evidence,pf_failures\n";

  bool wrote_theta_header = false;
  bool wrote_traj_header = false;
  for (const ProfileSeries& s : series) {
    ModelParams base = params_from_config(ctx.cfg);
    base.anchor_initial_state(s);
    smc2::Smc2Config c = cfg2;
    c.seed = mix64(ctx.seed, std::hash<std::string>{}(s.float_id));
    const smc2::Smc2Result res = smc2::run_smc2(s, spec, kind, env.handles, base, c);

    if (!wrote_theta_header) {
      theta_csv << "float_id,draw,log_weight";
      for (smc2::ParamId id : res.param_ids) theta_csv << ',' << smc2::param_name(id);
      theta_csv << '\n';
      wrote_theta_header = true;
    }
    for (int i = 0; i < res.theta_c.cols(); ++i) {
      theta_csv << s.float_id << ',' << i << ',' << csv::fmt(res.log_w(i));
      for (int j = 0; j < res.theta_c.rows(); ++j)
        theta_csv << ',' << csv::fmt(res.theta_c(j, i));
      theta_csv << '\n';
    }
    for (std::size_t k = 0; k < res.ladder.size(); ++k) {
      const auto& ls = res.ladder[k];
      ladder_csv << s.float_id << ',' << k << ',' << csv::fmt(ls.xi) << ','
                 << csv::fmt(ls.ess) << ',' << csv::fmt(ls.log_evidence_inc) << ','
                 << csv::fmt(ls.acceptance_rate) << '\n';
    }
    evidence_csv << s.float_id << ',' << csv::fmt(res.log_evidence) << ','
                 << res.pf_failures << '\n';
    if (cfg2.n_traj_draws > 0) {
      if (!wrote_traj_header) {
        traj_csv.open(ctx.out / "trajectories.csv");
        wrote_traj_header = true;
        write_trajectory_draws(traj_csv, s.float_id, res.trajectories, true);
      } else {
        write_trajectory_draws(traj_csv, s.float_id, res.trajectories, false);
      }
    }
  }
  return 0;
}

// ---- smooth (FFBS draws) --------------------------------------------------------

int cmd_smooth(const CommonArgs& args) {
  RunContext ctx = make_context(args, "smooth");
  const ModelKind kind = parse_kind(ctx.cfg.get("model.kind", "AR"));
  const EnvBundle env = load_env(ctx.cfg, kind);
  const auto series = load_profiles(ctx.cfg.require("profiles"));
  const int n_draws = static_cast<int>(ctx.cfg.get_long("smooth.n_draws", 20));

  std::ofstream out(ctx.out / "trajectories.csv");
  bool first = true;
  for (const ProfileSeries& s : series) {
    ModelParams params = params_from_config(ctx.cfg);
    params.anchor_initial_state(s);
    smc::SmcConfig scfg = smc_from_config(ctx.cfg);
    scfg.seed = mix64(ctx.seed, std::hash<std::string>{}(s.float_id), 0x736d);
    const smc::FilterResult fr = smc::run_filter(s, params, kind, env.handles, scfg);
    const smc::PosteriorDraws draws =
        smc::ffbs(fr, s, params, kind, env.handles, n_draws,
                  mix64(ctx.seed, std::hash<std::string>{}(s.float_id), 0xffb5));
    write_trajectory_draws(out, s.float_id, draws, first);
    first = false;
  }
  return 0;
}

// ---- holdout ---------------------------------------------------------------------

std::vector<ModelKind> parse_kind_list(const std::string& text) {
  std::vector<ModelKind> kinds;
  for (const std::string& part : csv::split(text))
    kinds.push_back(parse_kind(csv::trim(part)));
  if (kinds.empty()) throw ConfigError("holdout.models is empty");
  return kinds;
}

ModelKind widest_kind(const std::vector<ModelKind>& kinds) {
  ModelKind w = ModelKind::RW;
  for (ModelKind k : kinds) {
    if (has_pv(k)) return ModelKind::ARGOSSM;
    if (has_ice(k)) w = ModelKind::AR_ICE;
  }
  return w;
}

int cmd_holdout(const CommonArgs& args) {
  RunContext ctx = make_context(args, "holdout");
  const auto models = parse_kind_list(ctx.cfg.get("holdout.models", "RW,AR"));
  const EnvBundle env = load_env(ctx.cfg, widest_kind(models));
  const auto series = load_profiles(ctx.cfg.require("profiles"));
  const double min_gap = ctx.cfg.get_double("holdout.min_gap_days", 36.0);

  InferenceConfig icfg;
  icfg.params = params_from_config(ctx.cfg);
  icfg.smc = smc_from_config(ctx.cfg);
  icfg.env = env.handles;
  icfg.n_ffbs_draws = static_cast<int>(ctx.cfg.get_long("holdout.n_ffbs_draws", 200));
  icfg.seed = ctx.seed;

  std::vector<HoldoutTrial> trials;
  for (const ProfileSeries& s : series) {
    auto candidates = select_holdouts(s, min_gap);
    for (HoldoutTrial& t : candidates) {
      evaluate_holdout(t, s, models, icfg);
      trials.push_back(std::move(t));
    }
  }
  std::ofstream out(ctx.out / "trials.csv");
  write_trials(out, trials);
  return 0;
}

// ---- ess-study ---------------------------------------------------------------------

int cmd_ess_study(const CommonArgs& args) {
  RunContext ctx = make_context(args, "ess-study");
  const ModelKind kind = parse_kind(ctx.cfg.get("model.kind", "AR"));
  const EnvBundle env = load_env(ctx.cfg, kind);
  const auto series = load_profiles(ctx.cfg.require("profiles"));

  InferenceConfig icfg;
  icfg.params = params_from_config(ctx.cfg);
  icfg.smc = smc_from_config(ctx.cfg);
  icfg.smc.n_particles = static_cast<int>(ctx.cfg.get_long("ess.n_particles", 1000));
  icfg.env = env.handles;
  icfg.seed = ctx.seed;
  const int reps = static_cast<int>(ctx.cfg.get_long("ess.n_replicates", 20));

  const auto rows = ess_study(series, kind, icfg, reps);
  std::ofstream out(ctx.out / "ess_study.csv");
  write_ess_study(out, rows);
  return 0;
}

// ---- fields -------------------------------------------------------------------------

int cmd_fields(const CommonArgs& args) {
  RunContext ctx = make_context(args, "fields");
  const std::string variable = ctx.cfg.get("fields.variable", "temp");
  const bool velocity = (variable == "v_lon" || variable == "v_lat");
  if (!velocity && variable != "temp" && variable != "psal")
    throw ConfigError("fields.variable must be temp, psal, v_lon, or v_lat");

  const auto series = load_profiles(ctx.cfg.require("profiles"));
  const auto draws = load_trajectory_draws(ctx.cfg.require("fields.trajectories"));

  std::size_t n_samples = std::string::npos;
  for (const auto& [fid, pd] : draws)
    n_samples = std::min(n_samples, pd.draws.size());
  if (draws.empty() || n_samples < 2)
    throw ConfigError("fields needs at least 2 trajectory draws per float");

  // One observation set per location sample.
  std::vector<std::vector<fields::FieldObservation>> samples(n_samples);
  for (const ProfileSeries& s : series) {
    const auto it = draws.find(s.float_id);
    if (it == draws.end()) continue;
    const smc::PosteriorDraws& pd = it->second;
    if (static_cast<int>(pd.times.size()) != s.size())
      throw ConfigError("trajectory draws for float '" + s.float_id +
                        "' do not match the profile series length");
    for (std::size_t d = 0; d < n_samples; ++d) {
      const smc::TrajectoryDraw& tr = pd.draws[d];
      for (int n = 0; n < s.size(); ++n) {
        fields::FieldObservation obs;
        obs.x = {tr.x(0, n), tr.x(1, n)};
        obs.t = s.times[n];
        obs.float_id = s.float_id;
        if (variable == "temp") {
          if (!s.temperature[n]) continue;
          obs.value = *s.temperature[n];
        } else if (variable == "psal") {
          if (!s.salinity[n]) continue;
          obs.value = *s.salinity[n];
        } else if (variable == "v_lon") {
          obs.value = tr.v(0, n);
        } else {
          obs.value = tr.v(1, n);
        }
        samples[d].push_back(obs);
      }
    }
  }

  fields::PipelineConfig pcfg;
  pcfg.mean_bandwidth_km = ctx.cfg.get_double("fields.bandwidth_km", velocity ? 400.0 : 250.0);
  pcfg.harmonics = static_cast<int>(ctx.cfg.get_long("fields.harmonics", velocity ? 0 : 2));
  pcfg.period_days = ctx.cfg.get_double("fields.period_days", 365.25);
  pcfg.cov_init.variance = ctx.cfg.get_double("fields.variance", 1.0);
  pcfg.cov_init.range_km = ctx.cfg.get_double("fields.range_km", 300.0);
  pcfg.cov_init.smoothness = ctx.cfg.get_double("fields.smoothness", 1.5);
  pcfg.cov_init.nugget = ctx.cfg.get_double("fields.nugget", 0.01);
  const double tr_default = velocity ? std::numeric_limits<double>::infinity() : 90.0;
  pcfg.cov_init.time_range_days = ctx.cfg.get_double("fields.time_range_days", tr_default);
  pcfg.fit_covariance = ctx.cfg.get_bool("fields.fit_covariance", true);
  pcfg.fit_options.fit_time_range =
      ctx.cfg.get_bool("fields.fit_time_range", false);

  const double t_query = ctx.cfg.require_double("fields.time_days");
  const double lon_lo = ctx.cfg.require_double("fields.grid.lon_min");
  const double lon_hi = ctx.cfg.require_double("fields.grid.lon_max");
  const double lat_lo = ctx.cfg.require_double("fields.grid.lat_min");
  const double lat_hi = ctx.cfg.require_double("fields.grid.lat_max");
  const double step = ctx.cfg.get_double("fields.grid.step_deg", 0.5);
  std::vector<fields::QueryNode> nodes;
  for (double lat = lat_lo; lat <= lat_hi + 1e-9; lat += step)
    for (double lon = lon_lo; lon <= lon_hi + 1e-9; lon += step)
      nodes.push_back({{lon, lat}, t_query});

  const fields::ImputationResult res = fields::impute_aggregate(samples, pcfg, nodes);

  std::ofstream out(ctx.out / "fields.csv");
  out << "lon,lat,time_days,mean_of_means,mean_conditional_variance,"
         "between_sample_variance,total_variance,estimable\n";
  for (std::size_t q = 0; q < res.nodes.size(); ++q) {
    const auto& node = res.nodes[q];
    out << csv::fmt(node.x.lon) << ',' << csv::fmt(node.x.lat) << ','
        << csv::fmt(node.t) << ',';
    if (res.summary[q]) {
      const auto& s = *res.summary[q];
      out << csv::fmt(s.mean_of_means) << ',' << csv::fmt(s.mean_conditional_variance)
          << ',' << csv::fmt(s.between_sample_variance) << ','
          << csv::fmt(s.total_variance) << ",1\n";
    } else {
      out << ",,,,0\n";
    }
  }
  return 0;
}

// ---- report --------------------------------------------------------------------------

int cmd_report(const CommonArgs& args) {
  RunContext ctx = make_context(args, "report");
  auto in = std::ifstream(ctx.cfg.require("report.trials"));
  if (!in) throw ConfigError("cannot open trials file");
  const auto trials = read_trials(in);
  const auto rows = report_metrics(trials);
  std::ofstream out(ctx.out / "metrics.csv");
  write_metrics(out, rows);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"ArgoSSM: probabilistic drifting-float trajectories under ice"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value config file")
        ->required();
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "master seed (overrides config)");
  };

  CLI::App* sim = app.add_subcommand("simulate", "forward-sample synthetic floats");
  CLI::App* fit = app.add_subcommand("fit", "SMC^2 parameter inference per float");
  CLI::App* smooth = app.add_subcommand("smooth", "FFBS trajectory draws to CSV");
  CLI::App* holdout = app.add_subcommand("holdout", "held-out fix prediction protocol");
  CLI::App* essst = app.add_subcommand("ess-study", "ESS / log-likelihood spread study");
  CLI::App* flds = app.add_subcommand("fields", "imputation-aware field estimation");
  CLI::App* report = app.add_subcommand("report", "holdout metrics table");
  for (CLI::App* sub : {sim, fit, smooth, holdout, essst, flds, report})
    add_common(sub);

  std::vector<const char*> argv;
  argv.push_back("argossm");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(common);
    if (fit->parsed()) return cmd_fit(common);
    if (smooth->parsed()) return cmd_smooth(common);
    if (holdout->parsed()) return cmd_holdout(common);
    if (essst->parsed()) return cmd_ess_study(common);
    if (flds->parsed()) return cmd_fields(common);
    if (report->parsed()) return cmd_report(common);
  } catch (const InferenceError& e) {
    std::cerr << "inference failure: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace argossm::harness

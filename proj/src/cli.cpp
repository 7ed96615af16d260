#include "mvjump/cli.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "mvjump/csv.hpp"
#include "mvjump/ergodicity.hpp"
#include "mvjump/generator.hpp"
#include "mvjump/hash.hpp"
#include "mvjump/picard.hpp"
#include "mvjump/sampler.hpp"

namespace mvjump::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Stationary clouds are drawn with their own noise, apart from the decay seeds.
constexpr std::uint64_t kStationarySalt = 0x5DEECE66Dull;

class Output {
 public:
  Output(std::string dir, std::string format) : dir_(std::move(dir)), format_(std::move(format)) {
    fs::create_directories(dir_);
  }

  const std::string& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

  // A numeric table; `writer` emits CSV, converted when the format is json.
  void table(const std::string& stem, const std::function<void(std::ostream&)>& writer) {
    std::ostringstream s;
    writer(s);
    if (format_ == "json")
      text(stem + ".json", csv_to_json(s.str()).dump(1) + "\n");
    else
      text(stem + ".csv", s.str());
  }

  void text(const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(dir_) / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (fs::path(dir_) / name).string());
    out << content;
    if (!out) throw Error("write failed: " + name);
    files_.push_back(name);
  }

  std::string table_name(const std::string& stem) const { return stem + (format_ == "json" ? ".json" : ".csv"); }

 private:
  std::string dir_, format_;
  std::vector<std::string> files_;
};

struct Context {
  ExperimentConfig cfg;
  ModelPair pair;
  Output& out;
  std::ostream& log;
  std::vector<Gate> gates;

  void gate(std::string name, bool pass, std::string detail) {
    log << "gate " << name << ": " << (pass ? "PASS" : "FAIL") << " (" << detail << ")\n";
    gates.push_back({std::move(name), pass, std::move(detail)});
  }
  DistanceOptions distance() const { return {cfg.run.assignment_cap, cfg.run.allow_sliced, 64}; }
  DecayOptions decay_options() const {
    DecayOptions o;
    o.checkpoints = cfg.run.checkpoints;
    o.fit_from = cfg.run.fit_from;
    o.jump_mode = cfg.jump_mode();
    o.distance = distance();
    return o;
  }
  StationaryOptions stationary_options() const {
    StationaryOptions o;
    o.jump_mode = cfg.jump_mode();
    o.distance = distance();
    return o;
  }
  std::uint64_t stationary_seed() const { return cfg.numeric.seeds.front() ^ kStationarySalt; }
};

std::string fmt(double v) { return csv::num(v); }

std::vector<double> check_times(const ExperimentConfig& cfg, const TimeGrid& grid) {
  std::vector<double> t;
  for (std::size_t k = cfg.run.check_every; k <= grid.steps(); k += cfg.run.check_every) t.push_back(grid.time(k));
  if (t.empty()) t.push_back(grid.time(grid.steps()));
  return t;
}

void require_raw(const Context& c, const std::string& what) {
  if (c.cfg.jump_mode() != JumpMode::Raw)
    throw ConfigError({"numeric.jump_mode: " + what + " evaluates the generator of the raw equation"});
}

void cmd_simulate(Context& c) {
  const auto& cfg = c.cfg;
  SimulationOptions o;
  o.seed = cfg.numeric.seeds.front();
  o.jump_mode = cfg.jump_mode();
  o.record_every = cfg.run.record_every;
  const auto grid = cfg.grid();
  const auto res = simulate_mv(c.pair.base, cfg.xi.build(), cfg.numeric.n, grid, o);
  c.out.table("flow", [&](std::ostream& s) { write_flow_csv(s, res.flow); });
  c.out.table("flow_summary", [&](std::ostream& s) { write_flow_summary_csv(s, res.flow); });
  std::ostringstream ck;
  write_checkpoint(ck, {res.flow, o.seed, c.pair.base.fingerprint});
  c.out.text("flow.ckpt", ck.str());
  if (cfg.hat_model && cfg.hat_model->id != "zero") {
    const auto cf = simulate_coupled(c.pair, cfg.xi.build(), cfg.theta.build(), cfg.numeric.n, cfg.numeric.n, grid, o);
    c.out.table("hat_flow", [&](std::ostream& s) { write_flow_csv(s, cf.hat.flow); });
    c.out.table("hat_flow_summary", [&](std::ostream& s) { write_flow_summary_csv(s, cf.hat.flow); });
  }
}

void cmd_picard(Context& c) {
  const auto& cfg = c.cfg;
  const double h = cfg.numeric.h;
  double window = cfg.run.window;
  if (window <= 0.0) {
    WindowSearchOptions wo;
    wo.jump_mode = cfg.jump_mode();
    const auto ws = contraction_window(c.pair.base, cfg.xi.build(), h, cfg.numeric.seeds.front(), wo);
    window = ws.t0;
    json probes = json::array();
    for (const auto& p : ws.probes) probes.push_back({{"t0", p.t0}, {"ratios", p.ratios}, {"pass", p.pass}});
    c.out.text("window.json", json{{"window", window}, {"probes", probes}}.dump(1) + "\n");
  }
  c.log << "window " << fmt(window) << "\n";
  PicardOptions po;
  po.jump_mode = cfg.jump_mode();
  po.keep_iterates = false;
  const bool independent = !c.pair.base.coefficients.measure_dependent;
  for (auto seed : cfg.numeric.seeds) {
    const auto tr = picard_iterate(c.pair.base, cfg.xi.build(), cfg.numeric.n, window, h, cfg.run.iterations, seed, po);
    c.out.table("trace_seed" + std::to_string(seed), [&](std::ostream& s) { write_trace_csv(s, tr); });
    if (independent) {
      bool zero = true;
      for (std::size_t k = 1; k < tr.diffs.size(); ++k) zero = zero && tr.diffs[k] == 0.0;
      c.gate("exact-settling-seed" + std::to_string(seed), zero, "diffs after the first iterate are exactly zero");
      continue;
    }
    bool ok = !tr.diverged;
    double worst = 0.0;
    for (std::size_t k = 1; k < tr.ratios.size() && k <= 4; ++k) {
      ok = ok && tr.ratios[k] <= cfg.run.ratio_bound + cfg.run.se_slack * tr.ratio_se[k];
      worst = std::max(worst, tr.ratios[k]);
    }
    c.gate("contraction-seed" + std::to_string(seed), ok, "max ratio " + fmt(worst));
  }
}

void residual_gate(Context& c, const std::string& name, const ResidualTable& t) {
  std::string detail = "max |residual| " + fmt(t.max_abs) + ", tolerance " + fmt(t.tolerance);
  if (!t.degenerate.empty()) detail += ", degenerate: " + std::to_string(t.degenerate.size());
  c.gate(name, t.pass(), detail);
}

void cmd_fpe(Context& c) {
  require_raw(c, "fpe-check");
  const auto& cfg = c.cfg;
  const auto grid = cfg.grid();
  const auto battery = default_battery(c.pair.base.dim());
  SimulationOptions o;
  o.keep_jump_logs = false;
  for (auto seed : cfg.numeric.seeds) {
    o.seed = seed;
    const auto res = simulate_mv(c.pair.base, cfg.xi.build(), cfg.numeric.n, grid, o);
    const auto t = fpe_residual(c.pair.base, res.flow, battery, check_times(cfg, grid), cfg.numeric.fpe_tolerance());
    c.out.table("residuals_seed" + std::to_string(seed), [&](std::ostream& s) { write_residual_csv(s, t); });
    residual_gate(c, "fpe-seed" + std::to_string(seed), t);
  }
}

void cmd_lifted(Context& c) {
  require_raw(c, "lifted-fpe-check");
  const auto& cfg = c.cfg;
  const auto grid = cfg.grid();
  const auto battery = default_cylindrical_battery(c.pair.base.dim());
  SimulationOptions o;
  o.keep_jump_logs = false;
  for (auto seed : cfg.numeric.seeds) {
    o.seed = seed;
    const auto cf = simulate_coupled(c.pair, cfg.xi.build(), cfg.theta.build(), cfg.numeric.n, cfg.numeric.n, grid, o);
    const auto t = lifted_fpe_residual(c.pair, cf, battery, check_times(cfg, grid), cfg.numeric.lifted_tolerance());
    c.out.table("lifted_residuals_seed" + std::to_string(seed), [&](std::ostream& s) { write_residual_csv(s, t); });
    residual_gate(c, "lifted-fpe-seed" + std::to_string(seed), t);
  }
}

void cmd_ito(Context& c) {
  require_raw(c, "ito-check");
  const auto& cfg = c.cfg;
  const auto grid = cfg.grid();
  const auto battery = default_cylindrical_battery(c.pair.base.dim());
  SimulationOptions o;
  o.keep_jump_logs = false;
  for (auto seed : cfg.numeric.seeds) {
    o.seed = seed;
    const auto res = simulate_mv(c.pair.base, cfg.xi.build(), cfg.numeric.n, grid, o);
    const auto t = measure_ito_check(c.pair.base, res.flow, battery, check_times(cfg, grid), cfg.numeric.fpe_tolerance());
    c.out.table("ito_residuals_seed" + std::to_string(seed), [&](std::ostream& s) { write_residual_csv(s, t); });
    residual_gate(c, "ito-seed" + std::to_string(seed), t);
  }
}

void write_stationary(Context& c, const std::string& stem, const StationaryEstimate& st) {
  c.out.table(stem, [&](std::ostream& s) { write_cloud_csv(s, st.cloud.view()); });
  c.log << stem << ": second moment " << fmt(st.cloud.second_moment())
        << (st.stationary ? "" : " (increment diagnostic above threshold)") << "\n";
}

void write_decay(Context& c, const std::string& prefix, const DecayCurve& curve, const std::string& title) {
  c.out.table(prefix + "decay", [&](std::ostream& s) { write_decay_csv(s, curve); });
  c.out.table(prefix + "coupling", [&](std::ostream& s) { write_coupling_csv(s, curve); });
  std::ostringstream gp;
  write_decay_plot_script(gp, c.out.table_name(prefix + "decay"), title);
  c.out.text(prefix + "decay.gp", gp.str());
}

void equivalence(Context& c, const StationaryEstimate& base_st, const StationaryEstimate& hat_st) {
  const auto& cfg = c.cfg;
  const auto battery = default_cylindrical_battery(c.pair.base.dim());
  const double tol = cfg.numeric.gap_tolerance()(cfg.numeric.n, cfg.numeric.h);
  const auto rep = ergodicity_equivalence_report(c.pair, cfg.run.x, cfg.xi.build(), base_st, hat_st, cfg.grid(),
                                                 cfg.numeric.n, cfg.numeric.seeds.front(), battery, tol,
                                                 c.decay_options());
  c.out.table("equivalence", [&](std::ostream& s) { write_equivalence_csv(s, rep); });
  c.gate("product-form-limit", rep.pass, "final max gap " + fmt(rep.final_max_gap) + ", tolerance " + fmt(tol));
}

void cmd_ergodicity(Context& c) {
  const auto& cfg = c.cfg;
  for (const auto& w : rate_warnings(c.pair))
    if (w.rfind("base", 0) == 0) c.log << "warning: " << w << "\n";
  const auto st = estimate_stationary(c.pair.base, cfg.numeric.n, cfg.numeric.h, cfg.run.burn_in, c.stationary_seed(),
                                      c.stationary_options());
  write_stationary(c, "stationary", st);
  const double lambda = *cfg.run.lambda;
  const auto curve = decay_curve(c.pair.base, cfg.xi.build(), st, cfg.grid(), cfg.numeric.n, cfg.numeric.seeds, lambda,
                                 c.decay_options());
  write_decay(c, "", curve, "W2^2 to the stationary law");
  c.gate("bound-domination", curve.dominated(cfg.run.se_slack), "bound + " + fmt(cfg.run.se_slack) + " SE at every checkpoint");
  c.gate("fitted-rate", curve.fitted_rate >= lambda - cfg.run.rate_slack,
         "fitted " + fmt(curve.fitted_rate) + " vs lambda " + fmt(lambda));
  if (cfg.run.equivalence) {
    const auto hst = estimate_hat_stationary(c.pair.hat, st.cloud, cfg.numeric.n, cfg.numeric.h, cfg.run.burn_in,
                                             c.stationary_seed(), c.stationary_options());
    write_stationary(c, "hat_stationary", hst);
    equivalence(c, st, hst);
  }
}

void cmd_coupled(Context& c) {
  const auto& cfg = c.cfg;
  for (const auto& w : rate_warnings(c.pair)) c.log << "warning: " << w << "\n";
  const auto st = estimate_stationary(c.pair.base, cfg.numeric.n, cfg.numeric.h, cfg.run.burn_in, c.stationary_seed(),
                                      c.stationary_options());
  const auto hst = estimate_hat_stationary(c.pair.hat, st.cloud, cfg.numeric.n, cfg.numeric.h, cfg.run.burn_in,
                                           c.stationary_seed(), c.stationary_options());
  write_stationary(c, "stationary", st);
  write_stationary(c, "hat_stationary", hst);
  const auto curve = coupled_decay(c.pair, cfg.run.x, cfg.xi.build(), st, hst, cfg.grid(), cfg.numeric.n,
                                   cfg.numeric.seeds, c.decay_options());
  write_decay(c, "hat_", curve, "hat component: W2^2 to the stationary law");
  c.gate("coupled-bound-domination", curve.dominated(cfg.run.se_slack), "branch " + curve.branch);
  if (cfg.run.equivalence) equivalence(c, st, hst);
}

void cmd_flow(Context& c) {
  const auto& cfg = c.cfg;
  const auto tol = cfg.numeric.gap_tolerance();
  const auto rep = flow_property_check(c.pair, cfg.xi.build(), cfg.theta.build(), *cfg.run.restart,
                                       cfg.numeric.t0 + cfg.numeric.horizon, cfg.numeric.h, cfg.numeric.n,
                                       cfg.numeric.seeds, tol, c.distance());
  c.out.table("flow_check", [&](std::ostream& s) { write_flow_check_csv(s, rep); });
  double worst = 0.0;
  for (const auto& r : rep.rows) worst = std::max({worst, r.base_gap, r.hat_gap});
  c.gate("restart-gap", rep.pass, "max gap " + fmt(worst) + ", tolerance " + fmt(rep.tolerance));
}

void cmd_chaos(Context& c) {
  const auto& cfg = c.cfg;
  const auto trend = chaos_trend(c.pair.base, cfg.xi.build(), cfg.run.chaos_sizes, cfg.grid(), cfg.run.replications,
                                 cfg.numeric.seeds.front(), cfg.jump_mode());
  c.out.table("chaos", [&](std::ostream& s) { write_chaos_csv(s, trend); });
  c.gate("chaos-trend", trend.spread <= cfg.run.chaos_spread,
         "spread of n * variance " + fmt(trend.spread) + ", allowed " + fmt(cfg.run.chaos_spread));
}

void cmd_w2(Context& c) {
  const auto& r = c.cfg.run;
  if (r.cloud_a.empty() || r.cloud_b.empty()) throw ConfigError({"run.cloud_a, run.cloud_b: both clouds are required"});
  const auto a = read_cloud_csv(r.cloud_a);
  const auto b = read_cloud_csv(r.cloud_b);
  double d2 = 0.0;
  std::string method = r.w2_method;
  if (method == "auto") {
    d2 = w2_squared(a.view(), b.view(), r.assignment_cap);
  } else {
    W2Options o;
    o.method = method == "exact_1d" ? W2Method::Exact1d
               : method == "sliced" ? W2Method::Sliced
                                    : W2Method::ExactAssignment;
    o.seed = c.cfg.numeric.seeds.front();
    o.assignment_cap = r.assignment_cap;
    d2 = wasserstein2(a, b, o).distance_squared;
  }
  c.log << "w2sq=" << fmt(d2) << "\n";
  c.out.table("w2", [&](std::ostream& s) { s << "method,w2sq\n" << method << ',' << fmt(d2) << '\n'; });
}

void cmd_assumptions(Context& c) {
  const auto& cfg = c.cfg;
  ProbePlan plan;
  plan.pairs = cfg.run.probes;
  plan.seed = cfg.numeric.seeds.front();
  const auto rep = audit_assumptions(c.pair, plan);
  c.out.table("audit", [&](std::ostream& s) {
    s << "system,condition,declared,observed,pass\n";
    for (const auto& e : rep.entries)
      s << e.system << ',' << e.condition << ',' << fmt(e.declared) << ',' << fmt(e.observed) << ','
        << (e.pass ? 1 : 0) << '\n';
  });
  json cx = json::array();
  for (const auto& x : rep.counterexamples)
    cx.push_back({{"system", x.system}, {"condition", x.condition}, {"probe", x.probe}, {"t", x.t}, {"x1", x.x1},
                  {"x2", x.x2}, {"mu1", x.mu1}, {"mu2", x.mu2}, {"mark", x.mark}, {"lhs", x.lhs}, {"rhs", x.rhs}});
  c.out.text("counterexamples.json", cx.dump(1) + "\n");
  const auto rates = theoretical_rates(c.pair.constants, c.pair.base.nu.total_mass(), c.pair.hat.nu.total_mass());
  c.out.text("rates.json", json{{"lambda", rates.lambda},
                                {"lambda_hat", rates.lambda_hat},
                                {"base_condition", rates.base_condition},
                                {"hat_condition", rates.hat_condition}}
                                   .dump(1) +
                               "\n");
  for (const auto& e : rep.entries)
    if (!e.pass) c.gate("audit-" + e.system + "-" + e.condition, false, "observed " + fmt(e.observed) + " > declared " + fmt(e.declared));
  c.gate("audit", rep.all_pass(), std::to_string(rep.probes) + " probes");
  c.gate("base-rate-condition", rates.base_condition, "lambda " + fmt(rates.lambda) + " vs 4 c1 " + fmt(4 * c.pair.constants.base.c1));
  c.gate("hat-rate-condition", rates.hat_condition,
         "lambda_hat " + fmt(rates.lambda_hat) + " vs 2 c1_hat " + fmt(2 * c.pair.constants.hat.c1));
}

void cmd_noise(Context& c) {
  const auto& cfg = c.cfg;
  const std::uint64_t seed = cfg.numeric.seeds.front();
  c.out.table("noise", [&](std::ostream& s) {
    s << "role,particle,index,u0,u1,u2,u3,normal\n";
    for (auto role : {StreamRole::BaseBrownian, StreamRole::BaseJumps, StreamRole::HatBrownian, StreamRole::HatJumps,
                      StreamRole::InitialCondition, StreamRole::Auxiliary})
      for (std::uint32_t p = 0; p < cfg.run.noise_particles; ++p)
        for (std::uint64_t k = 0; k < cfg.run.noise_draws; ++k) {
          const NoiseStreamKey key{seed, role, p, k, 0};
          const auto u = keyed_uniforms(key, 0);
          double z = 0.0;
          standard_normals(key, std::span<double>(&z, 1));
          s << role_name(role) << ',' << p << ',' << k;
          for (double v : u) s << ',' << fmt(v);
          s << ',' << fmt(z) << '\n';
        }
  });
}

void cmd_calibrate(Context& c) {
  const auto cal = calibrate(c.cfg);
  c.out.text("tolerances.json", fixture_json(cal, c.cfg).dump(2) + "\n");
  c.log << "c_mc " << fmt(cal.fpe.c_mc) << ", c_h " << fmt(cal.fpe.c_h) << "; lifted c_mc " << fmt(cal.lifted.c_mc)
        << ", c_h " << fmt(cal.lifted.c_h) << "; gap c_n " << fmt(cal.gap.c_n) << ", c_h " << fmt(cal.gap.c_h) << "\n";
}

using Handler = void (*)(Context&);
const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> h{
      {"simulate", cmd_simulate},        {"picard", cmd_picard},
      {"fpe-check", cmd_fpe},            {"lifted-fpe-check", cmd_lifted},
      {"ito-check", cmd_ito},            {"ergodicity", cmd_ergodicity},
      {"coupled-ergodicity", cmd_coupled}, {"flow-check", cmd_flow},
      {"chaos", cmd_chaos},              {"w2", cmd_w2},
      {"assumptions", cmd_assumptions},  {"noise-dump", cmd_noise},
      {"calibrate", cmd_calibrate},
  };
  return h;
}

void apply_threads_env() {
  const char* v = std::getenv("MVJUMP_THREADS");
  if (!v || !*v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError({"MVJUMP_THREADS: must be a positive integer, got '" + std::string(v) + "'"});
  omp_set_num_threads(static_cast<int>(n));
}

json gates_json(const std::vector<Gate>& gates) {
  json g = json::array();
  for (const auto& x : gates) g.push_back({{"name", x.name}, {"pass", x.pass}, {"detail", x.detail}});
  return g;
}

json report_json(const std::string& sub, const std::vector<Gate>& gates, const std::vector<std::string>& extra_failures,
                 const std::vector<std::string>& diagnostics) {
  json failures = json::array();
  for (const auto& g : gates)
    if (!g.pass) failures.push_back(g.name);
  for (const auto& f : extra_failures) failures.push_back(f);
  return {{"subcommand", sub}, {"pass", failures.empty()}, {"gates", gates_json(gates)},
          {"failures", failures},  {"diagnostics", diagnostics}};
}

}  // namespace

std::vector<std::string> subcommands() {
  std::vector<std::string> s;
  for (const auto& [name, h] : handlers()) s.push_back(name);
  return s;
}

ExperimentConfig prepare_config(const std::optional<std::string>& path, const Overrides& ov) {
  json j = json::object();
  std::string base_dir = ".";
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError({*path + ": cannot open"});
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError({*path + ": " + e.what()});
    }
    if (!j.is_object()) throw ConfigError({"<root>: must be an object"});
    base_dir = fs::path(*path).parent_path().string();
    if (base_dir.empty()) base_dir = ".";
  }
  auto section = [&](const char* name) -> json& {
    if (!j.contains(name)) j[name] = json::object();
    return j[name];
  };
  if (ov.seed) section("numeric")["seeds"] = json::array({*ov.seed});
  if (ov.particles) section("numeric")["n"] = *ov.particles;
  if (ov.dt) section("numeric")["h"] = *ov.dt;
  if (ov.horizon) section("numeric")["T"] = *ov.horizon;
  if (ov.jump_mode) section("numeric")["jump_mode"] = *ov.jump_mode;
  if (ov.out) section("output")["directory"] = *ov.out;
  if (ov.format) section("output")["format"] = *ov.format;
  // Cloud paths on the command line are relative to the working directory.
  if (ov.cloud_a) section("run")["cloud_a"] = fs::absolute(*ov.cloud_a).string();
  if (ov.cloud_b) section("run")["cloud_b"] = fs::absolute(*ov.cloud_b).string();
  auto cfg = parse_config(j);
  if (!ov.out && path && fs::path(cfg.output.directory).is_relative())
    cfg.output.directory = (fs::path(base_dir) / cfg.output.directory).lexically_normal().string();
  return resolve_config(std::move(cfg), base_dir);
}

RunResult run(const std::string& sub, const std::optional<std::string>& config_path, const Overrides& ov,
              std::ostream& log) {
  RunResult result;
  const auto start = std::chrono::steady_clock::now();
  Handler handler = nullptr;
  for (const auto& [name, h] : handlers())
    if (name == sub) handler = h;
  if (!handler) {
    result.exit_code = kExitInvalidConfig;
    result.diagnostics.push_back("unknown subcommand '" + sub + "'");
    log << "error: " << result.diagnostics.back() << "\n";
    return result;
  }
  ExperimentConfig cfg;
  try {
    apply_threads_env();
    cfg = prepare_config(config_path, ov);
    if (sub == "calibrate" && cfg.numeric.seeds.size() < 3)
      throw ConfigError({"numeric.seeds: calibration needs at least 3 seeds"});
  } catch (const ConfigError& e) {
    result.exit_code = kExitInvalidConfig;
    result.diagnostics = e.diagnostics();
    log << json{{"error", "invalid config"}, {"diagnostics", e.diagnostics()}}.dump(1) << "\n";
    return result;
  }

  std::unique_ptr<Output> out;
  std::vector<std::string> extra_failures;
  std::vector<Gate> gates;
  double compute_seconds = 0.0;
  try {
    out = std::make_unique<Output>(cfg.output.directory, cfg.output.format);
    result.output_dir = out->dir();
    const json resolved = to_json(cfg);
    out->text("config.resolved.json", resolved.dump(2) + "\n");
    Context ctx{cfg, build_model(cfg.pair_config()), *out, log, {}};
    const auto t0 = std::chrono::steady_clock::now();
    handler(ctx);
    compute_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    gates = std::move(ctx.gates);
    result.exit_code = kExitOk;
    for (const auto& g : gates)
      if (!g.pass) result.exit_code = kExitGateFailed;
  } catch (const ConfigError& e) {
    result.exit_code = kExitInvalidConfig;
    result.diagnostics = e.diagnostics();
    extra_failures.push_back("config");
  } catch (const NumericalError& e) {
    result.exit_code = kExitNumerical;
    result.diagnostics.push_back(e.what());
    extra_failures.push_back("numerical");
  } catch (const std::exception& e) {
    result.exit_code = kExitRuntime;
    result.diagnostics.push_back(e.what());
    extra_failures.push_back("runtime");
  }
  for (const auto& d : result.diagnostics) log << "error: " << d << "\n";
  result.gates = gates;
  if (!out) return result;
  try {
    out->text("report.json", report_json(sub, gates, extra_failures, result.diagnostics).dump(1) + "\n");
    RunManifest m;
    m.subcommand = sub;
    m.config_hash = hex64(fnv1a(to_json(cfg).dump()));
    m.code_version = code_version();
    m.seeds = cfg.numeric.seeds;
    for (const auto& f : out->files()) {
      ManifestArtifact a;
      a.file = f;
      a.fnv1a = hex64(file_checksum((fs::path(out->dir()) / f).string(), &a.bytes));
      m.artifacts.push_back(a);
    }
    m.timings = {{"compute", compute_seconds},
                 {"total", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    out->text("manifest.json", m.to_json().dump(1) + "\n");
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    if (result.exit_code == kExitOk) result.exit_code = kExitRuntime;
  }
  result.artifacts = out->files();
  return result;
}

Calibration calibrate(const ExperimentConfig& cfg) {
  if (cfg.numeric.seeds.size() < 3) throw InvalidArgument("calibrate: needs at least 3 seeds");
  const ModelPair pair = build_model(cfg.pair_config());
  const auto battery = default_battery(pair.base.dim());
  const auto cyl = default_cylindrical_battery(pair.base.dim());
  const std::size_t n = cfg.numeric.n;
  const double h = cfg.numeric.h;
  const std::size_t s = cfg.numeric.seeds.size();
  const DistanceOptions distance{cfg.run.assignment_cap, cfg.run.allow_sliced, 64};

  struct Sample {
    std::vector<std::vector<double>> fpe, lifted;  // [seed][row]
    std::vector<double> gap;                      // [seed], larger of the two components
  };
  auto sample = [&](double step) {
    const TimeGrid grid(cfg.numeric.t0, cfg.numeric.t0 + cfg.numeric.horizon, step);
    const auto refine = static_cast<std::size_t>(std::lround(h / step));
    std::vector<double> times;
    for (std::size_t k = cfg.run.check_every * refine; k <= grid.steps(); k += cfg.run.check_every * refine)
      times.push_back(grid.time(k));
    Sample out;
    SimulationOptions o;
    o.keep_jump_logs = false;
    for (auto seed : cfg.numeric.seeds) {
      o.seed = seed;
      const auto cf = simulate_coupled(pair, cfg.xi.build(), cfg.theta.build(), n, n, grid, o);
      std::vector<double> a, b;
      for (const auto& r : fpe_residual(pair.base, cf.base, battery, times, {}).rows) a.push_back(r.residual);
      for (const auto& r : lifted_fpe_residual(pair, cf, cyl, times, {}).rows) b.push_back(r.residual);
      out.fpe.push_back(a);
      out.lifted.push_back(b);
      const auto fc = flow_property_check(pair, cfg.xi.build(), cfg.theta.build(), *cfg.run.restart,
                                          cfg.numeric.t0 + cfg.numeric.horizon, step, n, {seed}, {}, distance);
      out.gap.push_back(std::max(fc.rows[0].base_gap, fc.rows[0].hat_gap));
    }
    return out;
  };
  const Sample coarse = sample(h);
  const Sample fine = sample(h / 2.0);

  auto mean_of = [&](const std::vector<std::vector<double>>& v, std::size_t row) {
    double m = 0.0;
    for (std::size_t k = 0; k < s; ++k) m += v[k][row];
    return m / static_cast<double>(s);
  };
  auto fit = [&](const std::vector<std::vector<double>>& c, const std::vector<std::vector<double>>& f) {
    double sd_max = 0.0, bias = 0.0;
    for (std::size_t row = 0; row < c.front().size(); ++row) {
      const double m = mean_of(c, row);
      double ss = 0.0;
      for (std::size_t k = 0; k < s; ++k) ss += (c[k][row] - m) * (c[k][row] - m);
      sd_max = std::max(sd_max, std::sqrt(ss / static_cast<double>(s - 1)));
      bias = std::max(bias, std::abs(m - mean_of(f, row)));
    }
    // Four standard deviations of the residual, and its first-order bias
    // coefficient from the halving (bias(h) - bias(h/2) = c h / 2).
    return ToleranceModel{4.0 * std::sqrt(static_cast<double>(n)) * sd_max, bias / (h / 2.0)};
  };
  Calibration cal;
  cal.seeds = s;
  cal.fpe = fit(coarse.fpe, fine.fpe);
  cal.lifted = fit(coarse.lifted, fine.lifted);
  double gmax = 0.0, gc = 0.0, gf = 0.0;
  for (std::size_t k = 0; k < s; ++k) {
    gmax = std::max(gmax, coarse.gap[k]);
    gc += coarse.gap[k] / static_cast<double>(s);
    gf += fine.gap[k] / static_cast<double>(s);
  }
  cal.gap = {2.0 * static_cast<double>(n) * gmax, std::abs(gc - gf) / (h / 2.0)};
  return cal;
}

json fixture_json(const Calibration& cal, const ExperimentConfig& cfg) {
  return {{"c_mc", cal.fpe.c_mc},
          {"c_h", cal.fpe.c_h},
          {"lifted_c_mc", cal.lifted.c_mc},
          {"lifted_c_h", cal.lifted.c_h},
          {"gap_c_n", cal.gap.c_n},
          {"gap_c_h", cal.gap.c_h},
          {"calibration",
           {{"model", to_json(cfg.model)},
            {"hat_model", cfg.hat_model ? to_json(*cfg.hat_model) : json()},
            {"n", cfg.numeric.n},
            {"h", cfg.numeric.h},
            {"T", cfg.numeric.horizon},
            {"seeds", cfg.numeric.seeds},
            {"check_every", cfg.run.check_every},
            {"restart", *cfg.run.restart}}}};
}

json csv_to_json(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  json rows = json::array();
  if (!std::getline(in, line)) return rows;
  const auto header = csv::split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = csv::split(line);
    json row = json::object();
    for (std::size_t i = 0; i < header.size(); ++i) {
      const std::string f = i < fields.size() ? fields[i] : std::string();
      if (f.empty()) {
        row[header[i]] = nullptr;
        continue;
      }
      try {
        row[header[i]] = csv::parse_double(f);
      } catch (const std::exception&) {
        row[header[i]] = f;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mvjump::cli

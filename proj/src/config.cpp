#include "mvjump/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mvjump/hash.hpp"

#ifndef MVJUMP_VERSION
#define MVJUMP_VERSION "0.0.0"
#endif

namespace mvjump {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& e : v) s += (s.empty() ? "" : "; ") + e;
  return s;
}

// Typed accessor over one JSON object that records problems under `path`
// and, on finish(), reports keys nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  bool valid() const { return j_.is_object(); }
  bool has(const std::string& key) {
    seen_.insert(key);
    return valid() && j_.contains(key);
  }
  const json& at(const std::string& key) const { return j_.at(key); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void fail(const std::string& key, const std::string& msg) {
    const std::string where = key.empty() ? path_ : sub(key);
    errors_.push_back((where.empty() ? "<root>" : where) + ": " + msg);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_number() || !std::isfinite(v.get<double>())) return fail(key, "must be a finite number");
    out = v.get<double>();
  }
  void number(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    double v = 0.0;
    const auto before = errors_.size();
    number(key, v);
    if (errors_.size() == before) out = v;
  }
  void count(const std::string& key, std::size_t& out, std::size_t min = 0) {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() < min)
      return fail(key, "must be an integer >= " + std::to_string(min));
    out = v.get<std::size_t>();
  }
  void flag(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!at(key).is_boolean()) return fail(key, "must be a boolean");
    out = at(key).get<bool>();
  }
  void text(const std::string& key, std::string& out, const std::set<std::string>& allowed = {}) {
    if (!has(key)) return;
    if (!at(key).is_string()) return fail(key, "must be a string");
    const auto v = at(key).get<std::string>();
    if (!allowed.empty() && !allowed.count(v)) {
      std::vector<std::string> a(allowed.begin(), allowed.end());
      std::string list;
      for (const auto& x : a) list += (list.empty() ? "" : ", ") + x;
      return fail(key, "must be one of {" + list + "}, got '" + v + "'");
    }
    out = v;
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array()) return fail(key, "must be an array of numbers");
    std::vector<double> r;
    for (const auto& e : v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) return fail(key, "must be an array of finite numbers");
      r.push_back(e.get<double>());
    }
    out = std::move(r);
  }
  template <class U>
  void counts(const std::string& key, std::vector<U>& out, std::size_t min = 0) {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array()) return fail(key, "must be an array of integers");
    std::vector<U> r;
    for (const auto& e : v) {
      if (!e.is_number_unsigned() || e.get<std::uint64_t>() < min)
        return fail(key, "must be an array of integers >= " + std::to_string(min));
      r.push_back(static_cast<U>(e.get<std::uint64_t>()));
    }
    out = std::move(r);
  }

  void finish() {
    if (!valid()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(k, "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

ModelConfig parse_model(const json& j, const std::string& path, std::vector<std::string>& errors) {
  ModelConfig m;
  Obj o(j, path, errors);
  if (!o.has("id")) o.fail("id", "is required");
  o.text("id", m.id);
  if (o.has("params")) {
    Obj p(o.at("params"), o.sub("params"), errors);
    if (p.valid())
      for (const auto& [k, v] : o.at("params").items()) {
        double x = 0.0;
        const auto before = errors.size();
        p.number(k, x);
        if (errors.size() == before) m.params[k] = x;
      }
  }
  if (o.has("arrays")) {
    Obj a(o.at("arrays"), o.sub("arrays"), errors);
    if (a.valid())
      for (const auto& [k, v] : o.at("arrays").items()) {
        std::vector<double> x;
        a.numbers(k, x);
        m.arrays[k] = x;
      }
  }
  if (o.has("marks")) {
    const auto& marks = o.at("marks");
    if (!marks.is_array()) {
      o.fail("marks", "must be an array of {mark, weight}");
    } else {
      for (std::size_t i = 0; i < marks.size(); ++i) {
        Obj e(marks[i], o.sub("marks") + "[" + std::to_string(i) + "]", errors);
        MarkAtom atom{0.0, 0.0};
        if (!e.has("mark")) e.fail("mark", "is required");
        if (!e.has("weight")) e.fail("weight", "is required");
        e.number("mark", atom.mark);
        e.number("weight", atom.weight);
        if (atom.weight < 0.0) e.fail("weight", "must be nonnegative");
        e.finish();
        m.marks.push_back(atom);
      }
    }
  }
  o.finish();
  return m;
}

SystemConstants parse_system_constants(const json& j, const std::string& path, std::vector<std::string>& errors) {
  SystemConstants k;
  Obj o(j, path, errors);
  o.number("c1", k.c1);
  o.number("c3", k.c3);
  o.number("c4", k.c4);
  o.number("c3_prime", k.c3_prime);
  o.number("c4_prime", k.c4_prime);
  o.finish();
  return k;
}

LawSpec parse_law(const json& j, const std::string& path, std::vector<std::string>& errors) {
  LawSpec l;
  Obj o(j, path, errors);
  o.text("kind", l.kind, {"dirac", "gaussian", "cloud"});
  o.numbers("point", l.point);
  o.numbers("mean", l.mean);
  o.numbers("stddev", l.stddev);
  o.text("path", l.path);
  if (l.kind == "gaussian" && l.mean.size() != l.stddev.size()) o.fail("stddev", "must match the length of mean");
  if (l.kind == "cloud" && l.path.empty()) o.fail("path", "is required for a cloud");
  for (double s : l.stddev)
    if (s < 0.0) o.fail("stddev", "must be nonnegative");
  o.finish();
  return l;
}

json system_constants_json(const SystemConstants& k) {
  return {{"c1", k.c1}, {"c3", k.c3}, {"c4", k.c4}, {"c3_prime", k.c3_prime}, {"c4_prime", k.c4_prime}};
}

json law_json(const LawSpec& l) {
  json j{{"kind", l.kind}};
  if (l.kind == "dirac") j["point"] = l.point;
  if (l.kind == "gaussian") {
    j["mean"] = l.mean;
    j["stddev"] = l.stddev;
  }
  if (l.kind == "cloud") j["path"] = l.path;
  return j;
}

std::string absolute_from(const std::string& path, const std::string& base_dir) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
  return std::filesystem::absolute(p).lexically_normal().string();
}

void resolve_law(LawSpec& l, std::size_t dim, const std::string& base_dir, const std::string& path,
                 std::vector<std::string>& errors) {
  if (l.kind == "dirac") {
    if (l.point.empty()) l.point.assign(dim, 0.0);
    if (l.point.size() != dim) errors.push_back(path + ".point: must have " + std::to_string(dim) + " entries");
  } else if (l.kind == "gaussian") {
    if (l.mean.empty()) l.mean.assign(dim, 0.0);
    if (l.stddev.empty()) l.stddev.assign(dim, 1.0);
    if (l.mean.size() != dim || l.stddev.size() != dim)
      errors.push_back(path + ": mean and stddev must have " + std::to_string(dim) + " entries");
  } else {
    l.path = absolute_from(l.path, base_dir);
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : InvalidArgument("invalid config: " + join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

InitialLaw LawSpec::build() const {
  if (kind == "dirac") return InitialLaw::dirac(point);
  if (kind == "gaussian") return InitialLaw::gaussian(mean, stddev);
  if (kind == "cloud") return InitialLaw::cloud(read_cloud_csv(path));
  throw InvalidArgument("unknown initial law kind '" + kind + "'");
}

ExperimentConfig parse_config(const json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  Obj root(j, "", errors);
  if (root.has("model")) c.model = parse_model(root.at("model"), "model", errors);
  if (root.has("hat_model")) c.hat_model = parse_model(root.at("hat_model"), "hat_model", errors);
  if (root.has("constants")) {
    Obj k(root.at("constants"), "constants", errors);
    AssumptionConstants a;
    if (k.has("base")) a.base = parse_system_constants(k.at("base"), "constants.base", errors);
    if (k.has("hat")) a.hat = parse_system_constants(k.at("hat"), "constants.hat", errors);
    k.finish();
    c.constants = a;
  }
  if (root.has("initial")) {
    Obj i(root.at("initial"), "initial", errors);
    if (i.has("base")) c.xi = parse_law(i.at("base"), "initial.base", errors);
    if (i.has("hat")) c.theta = parse_law(i.at("hat"), "initial.hat", errors);
    i.finish();
  }
  if (root.has("numeric")) {
    Obj o(root.at("numeric"), "numeric", errors);
    auto& n = c.numeric;
    o.count("n", n.n, 2);
    o.number("h", n.h);
    o.number("T", n.horizon);
    o.number("t0", n.t0);
    o.counts("seeds", n.seeds);
    o.text("jump_mode", n.jump_mode, {"raw", "compensated"});
    o.number("c_mc", n.c_mc);
    o.number("c_h", n.c_h);
    o.number("lifted_c_mc", n.lifted_c_mc);
    o.number("lifted_c_h", n.lifted_c_h);
    o.number("gap_c_n", n.gap_c_n);
    o.number("gap_c_h", n.gap_c_h);
    o.text("tolerance_fixture", n.tolerance_fixture);
    o.finish();
    if (!(n.h > 0.0)) errors.push_back("numeric.h: must be positive");
    if (!(n.horizon > 0.0)) errors.push_back("numeric.T: must be positive");
    if (n.seeds.empty()) errors.push_back("numeric.seeds: must not be empty");
    for (const auto* v : {&n.c_mc, &n.c_h, &n.lifted_c_mc, &n.lifted_c_h, &n.gap_c_n, &n.gap_c_h})
      if (*v && **v < 0.0) errors.push_back("numeric: tolerance constants must be nonnegative");
    if (n.h > 0.0 && n.horizon > 0.0) {
      try {
        (void)c.grid();
      } catch (const InvalidArgument&) {
        errors.push_back("numeric.T: must be a whole number of steps h");
      }
    }
  }
  if (root.has("run")) {
    Obj o(root.at("run"), "run", errors);
    auto& r = c.run;
    o.count("record_every", r.record_every, 1);
    o.count("check_every", r.check_every, 1);
    o.number("window", r.window);
    o.count("iterations", r.iterations, 2);
    o.number("ratio_bound", r.ratio_bound);
    o.number("burn_in", r.burn_in);
    o.count("checkpoints", r.checkpoints, 1);
    o.number("fit_from", r.fit_from);
    o.number("lambda", r.lambda);
    o.number("rate_slack", r.rate_slack);
    o.numbers("x", r.x);
    o.flag("equivalence", r.equivalence);
    o.number("restart", r.restart);
    o.counts("chaos_sizes", r.chaos_sizes, 2);
    o.count("replications", r.replications, 2);
    o.number("chaos_spread", r.chaos_spread);
    o.number("se_slack", r.se_slack);
    o.count("assignment_cap", r.assignment_cap, 1);
    o.flag("allow_sliced", r.allow_sliced);
    o.count("probes", r.probes, 1);
    o.count("noise_draws", r.noise_draws, 1);
    o.count("noise_particles", r.noise_particles, 1);
    o.text("cloud_a", r.cloud_a);
    o.text("cloud_b", r.cloud_b);
    o.text("w2_method", r.w2_method, {"auto", "exact_1d", "exact_assignment", "sliced"});
    o.finish();
    if (r.window < 0.0) errors.push_back("run.window: must be nonnegative");
    if (r.burn_in < 0.0) errors.push_back("run.burn_in: must be nonnegative");
    if (r.chaos_sizes.empty()) errors.push_back("run.chaos_sizes: must not be empty");
  }
  if (root.has("output")) {
    Obj o(root.at("output"), "output", errors);
    o.text("directory", c.output.directory);
    o.text("format", c.output.format, {"csv", "json"});
    o.finish();
  }
  root.finish();
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot open"});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path + ": " + e.what()});
  }
  return parse_config(j);
}

ExperimentConfig resolve_config(ExperimentConfig c, const std::string& base_dir) {
  std::vector<std::string> errors;
  ModelPair pair;
  try {
    pair = build_model(c.pair_config());
  } catch (const InvalidArgument& e) {
    throw ConfigError({std::string("model: ") + e.what()});
  }
  const std::size_t d = pair.base.dim();
  if (!c.hat_model) c.hat_model = ModelConfig{"zero", {{"dim", static_cast<double>(d)}}, {}, {}};
  if (!c.constants) c.constants = AssumptionConstants{pair.constants.base, pair.constants.hat, 0.0, 0.0};
  resolve_law(c.xi, d, base_dir, "initial.base", errors);
  resolve_law(c.theta, d, base_dir, "initial.hat", errors);
  if (c.run.x.empty()) c.run.x.assign(d, 0.0);
  if (c.run.x.size() != d) errors.push_back("run.x: must have " + std::to_string(d) + " entries");
  if (!c.run.lambda) c.run.lambda = pair.constants.lambda;
  if (!c.run.restart) c.run.restart = c.numeric.t0 + c.numeric.horizon / 2.0;
  c.run.cloud_a = absolute_from(c.run.cloud_a, base_dir);
  c.run.cloud_b = absolute_from(c.run.cloud_b, base_dir);

  auto& n = c.numeric;
  if (!n.tolerance_fixture.empty()) {
    n.tolerance_fixture = absolute_from(n.tolerance_fixture, base_dir);
    std::ifstream in(n.tolerance_fixture);
    if (!in) {
      errors.push_back("numeric.tolerance_fixture: cannot open " + n.tolerance_fixture);
    } else {
      try {
        const json f = json::parse(in);
        auto fill = [&](const char* key, std::optional<double>& v) {
          if (!v && f.contains(key)) v = f.at(key).get<double>();
        };
        fill("c_mc", n.c_mc);
        fill("c_h", n.c_h);
        fill("lifted_c_mc", n.lifted_c_mc);
        fill("lifted_c_h", n.lifted_c_h);
        fill("gap_c_n", n.gap_c_n);
        fill("gap_c_h", n.gap_c_h);
      } catch (const json::exception& e) {
        errors.push_back("numeric.tolerance_fixture: " + std::string(e.what()));
      }
    }
  }
  const auto fpe = n.fpe_tolerance();
  const auto lifted = n.lifted_tolerance();
  const auto gap = n.gap_tolerance();
  n.c_mc = fpe.c_mc;
  n.c_h = fpe.c_h;
  n.lifted_c_mc = lifted.c_mc;
  n.lifted_c_h = lifted.c_h;
  n.gap_c_n = gap.c_n;
  n.gap_c_h = gap.c_h;
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

json to_json(const ModelConfig& m) {
  json j{{"id", m.id}};
  if (!m.params.empty()) j["params"] = m.params;
  if (!m.arrays.empty()) j["arrays"] = m.arrays;
  if (!m.marks.empty()) {
    json marks = json::array();
    for (const auto& a : m.marks) marks.push_back({{"mark", a.mark}, {"weight", a.weight}});
    j["marks"] = marks;
  }
  return j;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = to_json(c.model);
  if (c.hat_model) j["hat_model"] = to_json(*c.hat_model);
  if (c.constants)
    j["constants"] = {{"base", system_constants_json(c.constants->base)},
                      {"hat", system_constants_json(c.constants->hat)}};
  j["initial"] = {{"base", law_json(c.xi)}, {"hat", law_json(c.theta)}};
  const auto& n = c.numeric;
  json num{{"n", n.n},
           {"h", n.h},
           {"T", n.horizon},
           {"t0", n.t0},
           {"seeds", n.seeds},
           {"jump_mode", n.jump_mode}};
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) num[key] = *v;
  };
  put("c_mc", n.c_mc);
  put("c_h", n.c_h);
  put("lifted_c_mc", n.lifted_c_mc);
  put("lifted_c_h", n.lifted_c_h);
  put("gap_c_n", n.gap_c_n);
  put("gap_c_h", n.gap_c_h);
  if (!n.tolerance_fixture.empty()) num["tolerance_fixture"] = n.tolerance_fixture;
  j["numeric"] = num;
  const auto& r = c.run;
  json run{{"record_every", r.record_every},
           {"check_every", r.check_every},
           {"window", r.window},
           {"iterations", r.iterations},
           {"ratio_bound", r.ratio_bound},
           {"burn_in", r.burn_in},
           {"checkpoints", r.checkpoints},
           {"fit_from", r.fit_from},
           {"rate_slack", r.rate_slack},
           {"x", r.x},
           {"equivalence", r.equivalence},
           {"chaos_sizes", r.chaos_sizes},
           {"replications", r.replications},
           {"chaos_spread", r.chaos_spread},
           {"se_slack", r.se_slack},
           {"assignment_cap", r.assignment_cap},
           {"allow_sliced", r.allow_sliced},
           {"probes", r.probes},
           {"noise_draws", r.noise_draws},
           {"noise_particles", r.noise_particles},
           {"w2_method", r.w2_method}};
  if (r.lambda) run["lambda"] = *r.lambda;
  if (r.restart) run["restart"] = *r.restart;
  if (!r.cloud_a.empty()) run["cloud_a"] = r.cloud_a;
  if (!r.cloud_b.empty()) run["cloud_b"] = r.cloud_b;
  j["run"] = run;
  j["output"] = {{"directory", c.output.directory}, {"format", c.output.format}};
  return j;
}

json RunManifest::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) arts.push_back({{"file", a.file}, {"bytes", a.bytes}, {"fnv1a", a.fnv1a}});
  json times = json::object();
  for (const auto& [k, v] : timings) times[k] = v;
  return {{"subcommand", subcommand}, {"config_hash", config_hash}, {"code_version", code_version},
          {"seeds", seeds},           {"artifacts", arts},          {"timings_seconds", times}};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t file_checksum(const std::string& path, std::uint64_t* bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  Fnv1a h;
  std::uint64_t total = 0;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const auto got = static_cast<std::size_t>(in.gcount());
    h.bytes(buf, got);
    total += got;
  }
  if (bytes) *bytes = total;
  return h.value();
}

const char* code_version() { return MVJUMP_VERSION; }

}  // namespace mvjump

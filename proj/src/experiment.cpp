#include "sglscv/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>
#include <stdexcept>

#include "json.hpp"
#include <unistd.h>

#include "sglscv/kernels.hpp"
#include "sglscv/leastsq.hpp"

namespace sglscv::experiment {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config: " + (path.empty() ? std::string("<root>") : path) + ": " + what);
}

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "string";
  else if constexpr (std::is_integral_v<T>) return "integer";
  else return "number";
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    out = convert<T>(j_.at(key), key_path(key));
  }

  template <class T>
  void get_list(const std::string& key, std::vector<T>& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_array()) fail(key_path(key), "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(convert<T>(v[i], key_path(key) + "[" + std::to_string(i) + "]"));
  }

  template <class F>
  void section(const std::string& key, F&& fn) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    Section s(j_.at(key), key_path(key));
    fn(s);
    s.finish();
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) fail(key_path(k), "unknown key");
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, std::string("expected a ") + type_name<T>());
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, std::string("expected a ") + type_name<T>());
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, std::string("expected an ") + type_name<T>());
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.get<std::int64_t>() < 0) fail(path, "must be non-negative");
      }
      return static_cast<T>(v.get<std::int64_t>());
    } else {
      if (!v.is_number()) fail(path, std::string("expected a ") + type_name<T>());
      const double x = v.get<double>();
      if (!std::isfinite(x)) fail(path, "must be finite");
      return x;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require_one_of(const std::string& path, const std::string& value, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  fail(path, "'" + value + "' is not one of " + list);
}

std::string metric_name(problems::GradientMetric m) { return m == problems::GradientMetric::l2 ? "l2" : "euclidean"; }

problems::GradientMetric metric_from(const std::string& s, const std::string& path) {
  require_one_of(path, s, {"l2", "euclidean"});
  return s == "l2" ? problems::GradientMetric::l2 : problems::GradientMetric::euclidean;
}

std::string aggregation_name(Aggregation::Mode m) { return m == Aggregation::Mode::ema ? "ema" : "geometric_mean"; }

void read_problem(Section& s, ProblemConfig& p) {
  s.get("kind", p.kind);
  require_one_of(s.key_path("kind"), p.kind, {"diffusion_1d", "advdiff_5d", "quadratic_toy"});
  std::string metric;
  if (p.kind == "diffusion_1d") {
    s.get("a", p.diffusion.a);
    s.get("b", p.diffusion.b);
    s.get("beta", p.diffusion.beta);
    s.get("mesh", p.diffusion.mesh);
    metric = metric_name(p.diffusion.metric);
    s.get("metric", metric);
    p.diffusion.metric = metric_from(metric, s.key_path("metric"));
    if (!(p.diffusion.a > 0.0) || !(p.diffusion.b > p.diffusion.a)) fail(s.key_path("b"), "need 0 < a < b");
    if (!(p.diffusion.beta > 0.0)) fail(s.key_path("beta"), "must be positive");
    if (p.diffusion.mesh < 1) fail(s.key_path("mesh"), "must be positive");
  } else if (p.kind == "advdiff_5d") {
    s.get("beta", p.advdiff.beta);
    s.get("sigma", p.advdiff.sigma);
    s.get("mesh", p.advdiff.mesh);
    metric = metric_name(p.advdiff.metric);
    s.get("metric", metric);
    p.advdiff.metric = metric_from(metric, s.key_path("metric"));
    if (!(p.advdiff.beta > 0.0)) fail(s.key_path("beta"), "must be positive");
    if (!(p.advdiff.sigma > 0.0)) fail(s.key_path("sigma"), "must be positive");
    if (p.advdiff.mesh < 1) fail(s.key_path("mesh"), "must be positive");
  } else {
    s.get("seed", p.toy_seed);
    s.get("dim", p.toy_dim);
    s.get("beta", p.toy_beta);
    s.get("noise", p.toy_noise);
    if (p.toy_dim < 1) fail(s.key_path("dim"), "must be positive");
    if (!(p.toy_beta > 0.0)) fail(s.key_path("beta"), "must be positive");
  }
}

json write_problem(const ProblemConfig& p) {
  json j;
  j["kind"] = p.kind;
  if (p.kind == "diffusion_1d") {
    j["a"] = p.diffusion.a;
    j["b"] = p.diffusion.b;
    j["beta"] = p.diffusion.beta;
    j["mesh"] = p.diffusion.mesh;
    j["metric"] = metric_name(p.diffusion.metric);
  } else if (p.kind == "advdiff_5d") {
    j["beta"] = p.advdiff.beta;
    j["sigma"] = p.advdiff.sigma;
    j["mesh"] = p.advdiff.mesh;
    j["metric"] = metric_name(p.advdiff.metric);
  } else {
    j["seed"] = p.toy_seed;
    j["dim"] = p.toy_dim;
    j["beta"] = p.toy_beta;
    j["noise"] = p.toy_noise;
  }
  return j;
}

void read_reference(Section& s, ReferenceConfig& r) {
  s.get("kind", r.kind);
  require_one_of(s.key_path("kind"), r.kind, {"analytic", "file", "full_gradient", "none"});
  s.get("points", r.points);
  s.get("solver", r.solver);
  require_one_of(s.key_path("solver"), r.solver, {"direct", "descent"});
  s.get("tau", r.tau);
  s.get("iterations", r.iterations);
  s.get("path", r.path);
  if (r.points < 1) fail(s.key_path("points"), "must be positive");
  if (!(r.tau > 0.0)) fail(s.key_path("tau"), "must be positive");
  if (r.kind == "file" && r.path.empty()) fail(s.key_path("path"), "required for kind 'file'");
}

json write_reference(const ReferenceConfig& r) {
  return json{{"kind", r.kind},   {"points", r.points},         {"solver", r.solver},
              {"tau", r.tau},     {"iterations", r.iterations}, {"path", r.path}};
}

void read_step(Section& s, StepConfig& st) {
  s.get("rule", st.rule);
  require_one_of(s.key_path("rule"), st.rule, {"constant", "robbins_monro", "power", "memory_linked"});
  s.get("a", st.a);
  s.get("b", st.b);
  try {
    (void)st.build();
  } catch (const std::invalid_argument& e) {
    fail(s.key_path("rule"), e.what());
  }
}

json write_step(const StepConfig& st) { return json{{"rule", st.rule}, {"a", st.a}, {"b", st.b}}; }

void read_space(Section& s, SpaceConfig& sp) {
  s.get("index_set", sp.index_set);
  require_one_of(s.key_path("index_set"), sp.index_set, {"total_degree", "hyperbolic_cross", "full_tensor"});
  s.get("schedule", sp.schedule);
  require_one_of(s.key_path("schedule"), sp.schedule, {"explicit", "algebraic", "exponential"});
  s.get_list("levels", sp.levels);
  s.get_list("starts", sp.starts);
  s.get_list("memory", sp.memory);
  s.get("memory_factor", sp.memory_factor);
  s.get("memory_r", sp.memory_r);
  s.get("measure", sp.measure);
  require_one_of(s.key_path("measure"), sp.measure, {"reference", "arcsine", "optimal"});
  s.get("s", sp.s);
  s.get("eta", sp.eta);
  s.get("c_mu", sp.c_mu);
  s.get("condition_every", sp.condition_every);
  s.get("warmup", sp.warmup);
  if (sp.schedule == "explicit") {
    if (!sp.starts.empty() && sp.starts.size() != sp.levels.size())
      fail(s.key_path("starts"), "must match the number of levels");
    if (!sp.memory.empty() && sp.memory.size() != sp.levels.size())
      fail(s.key_path("memory"), "must match the number of levels");
    for (int l : sp.levels)
      if (l < 0) fail(s.key_path("levels"), "levels must be non-negative");
  }
  if (sp.memory_factor < 0.0) fail(s.key_path("memory_factor"), "must be non-negative");
  if (!(sp.memory_r > 0.0)) fail(s.key_path("memory_r"), "must be positive");
  if (!(sp.s > 0.0)) fail(s.key_path("s"), "must be positive");
  if (sp.condition_every == 0) fail(s.key_path("condition_every"), "must be positive");
}

json write_space(const SpaceConfig& sp) {
  return json{{"index_set", sp.index_set},
              {"schedule", sp.schedule},
              {"levels", sp.levels},
              {"starts", sp.starts},
              {"memory", sp.memory},
              {"memory_factor", sp.memory_factor},
              {"memory_r", sp.memory_r},
              {"measure", sp.measure},
              {"s", sp.s},
              {"eta", sp.eta},
              {"c_mu", sp.c_mu},
              {"condition_every", sp.condition_every},
              {"warmup", sp.warmup}};
}

void read_run(Section& s, RunConfig& r) {
  s.get("label", r.label);
  s.get("method", r.method);
  require_one_of(s.key_path("method"), r.method, {"sgd", "adam", "saga", "full_gradient", "sglscv"});
  if (r.label.empty()) r.label = r.method;
  for (char c : r.label)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      fail(s.key_path("label"), "use letters, digits, '_', '-' or '.'");
  s.section("step", [&](Section& t) { read_step(t, r.step); });
  s.section("space", [&](Section& t) { read_space(t, r.space); });
  s.get("points", r.points);
  s.get("beta1", r.beta1);
  s.get("beta2", r.beta2);
  s.get("iterations", r.iterations);
  if (r.points < 1) fail(s.key_path("points"), "must be positive");
  if ((r.method == "adam" || r.method == "saga" || r.method == "full_gradient") && r.step.rule != "constant")
    fail(s.key_path("step.rule"), "method '" + r.method + "' needs a constant step");
  if (r.method == "sglscv" && r.space.schedule == "explicit" && r.space.levels.empty())
    fail(s.key_path("space.levels"), "an explicit schedule needs at least one level");
}

json write_run(const RunConfig& r) {
  json j{{"label", r.label},   {"method", r.method}, {"step", write_step(r.step)}, {"points", r.points},
         {"beta1", r.beta1},   {"beta2", r.beta2},   {"iterations", r.iterations}};
  if (r.method == "sglscv" || !(r.space == SpaceConfig{})) j["space"] = write_space(r.space);
  return j;
}

json to_json(const ExperimentConfig& c) {
  json runs = json::array();
  for (const auto& r : c.runs) runs.push_back(write_run(r));
  return json{{"name", c.name},
              {"problem", write_problem(c.problem)},
              {"reference", write_reference(c.reference)},
              {"replicates", c.replicates},
              {"seed", c.seed},
              {"iterations", c.iterations},
              {"record_every", c.record_every},
              {"aggregation", aggregation_name(c.aggregation.mode)},
              {"ema_lambda", c.aggregation.lambda},
              {"output", c.output},
              {"runs", runs}};
}

poly::IndexSetKind index_kind(const std::string& s) {
  if (s == "total_degree") return poly::IndexSetKind::total_degree;
  if (s == "hyperbolic_cross") return poly::IndexSetKind::hyperbolic_cross;
  if (s == "full_tensor") return poly::IndexSetKind::full_tensor;
  throw std::invalid_argument("unknown index set '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

optim::StepSchedule StepConfig::build() const {
  if (rule == "constant") return optim::StepSchedule::constant(a);
  if (rule == "robbins_monro") return optim::StepSchedule::robbins_monro(a, b);
  if (rule == "power") return optim::StepSchedule::power(a, b);
  if (rule == "memory_linked") return optim::StepSchedule::memory_linked(a, b);
  throw std::invalid_argument("unknown step rule '" + rule + "'");
}

std::string Aggregation::tag() const {
  if (mode == Mode::ema) {
    std::ostringstream os;
    os << "ema(lambda=" << lambda << ")";
    return os.str();
  }
  return aggregation_name(mode);
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section s(j, "");
  s.get("name", c.name);
  if (c.name.empty()) fail("name", "must not be empty");
  s.section("problem", [&](Section& t) { read_problem(t, c.problem); });
  s.section("reference", [&](Section& t) { read_reference(t, c.reference); });
  s.get("replicates", c.replicates);
  s.get("seed", c.seed);
  s.get("iterations", c.iterations);
  s.get("record_every", c.record_every);
  std::string agg = aggregation_name(c.aggregation.mode);
  s.get("aggregation", agg);
  require_one_of("aggregation", agg, {"geometric_mean", "ema"});
  c.aggregation.mode = agg == "ema" ? Aggregation::Mode::ema : Aggregation::Mode::geometric_mean;
  s.get("ema_lambda", c.aggregation.lambda);
  s.get("output", c.output);
  if (s.has("runs")) {
    const json& runs = s.raw("runs");
    if (!runs.is_array() || runs.empty()) fail("runs", "expected a non-empty array");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      Section rs(runs[i], "runs[" + std::to_string(i) + "]");
      RunConfig r;
      read_run(rs, r);
      rs.finish();
      if (!labels.insert(r.label).second) fail("runs[" + std::to_string(i) + "].label", "duplicate label");
      c.runs.push_back(std::move(r));
    }
  } else {
    fail("runs", "required");
  }
  s.finish();
  if (c.replicates == 0) fail("replicates", "must be positive");
  if (c.iterations == 0) fail("iterations", "must be positive");
  if (c.record_every == 0) fail("record_every", "must be positive");
  if (!(c.aggregation.lambda > 0.0 && c.aggregation.lambda <= 1.0)) fail("ema_lambda", "must lie in (0, 1]");
  if (c.reference.kind == "analytic" && c.problem.kind == "advdiff_5d")
    fail("reference.kind", "no closed-form optimum for advdiff_5d");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const ExperimentConfig& config, int indent) { return to_json(config).dump(indent); }

// ---------------------------------------------------------------------------

std::vector<std::string> preset_names() { return {"fig1", "fig2", "fig4", "fig5"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "fig1") {
    c.iterations = 40000;
    c.record_every = 10;
    const std::vector<std::pair<int, double>> spaces{{6, 0.1556}, {16, 0.1252}, {21, 0.1146}};
    for (auto [m, tau] : spaces) {
      RunConfig r;
      r.label = "m" + std::to_string(m);
      r.method = "sglscv";
      r.step = {"constant", tau, 0.0};
      r.space.levels = {m - 1};
      r.space.measure = "arcsine";
      r.space.memory_r = 1.0;
      c.runs.push_back(r);
    }
    return c;
  }
  if (name == "fig2") {
    c.iterations = 20000;
    c.record_every = 10;
    RunConfig sgd;
    sgd.label = "sgd";
    sgd.method = "sgd";
    sgd.step = {"robbins_monro", 19.0, 1e-3};
    RunConfig adam;
    adam.label = "adam";
    adam.method = "adam";
    adam.step = {"constant", 0.01, 0.0};
    adam.beta1 = 0.9;
    adam.beta2 = 0.99;
    RunConfig saga;
    saga.label = "saga";
    saga.method = "saga";
    saga.step = {"constant", 0.0769, 0.0};
    saga.points = 20;
    SpaceConfig variable;
    variable.levels = {2, 5, 10, 15, 20};
    variable.starts = {0, 300, 1000, 2000, 4000};
    variable.memory = {217, 494, 1007, 1557, 2117};
    variable.measure = "arcsine";
    RunConfig fixed_step;
    fixed_step.label = "sglscv_fixed_step";
    fixed_step.method = "sglscv";
    fixed_step.step = {"constant", 0.125, 0.0};
    fixed_step.space = variable;
    RunConfig linked;
    linked.label = "sglscv_linked_step";
    linked.method = "sglscv";
    linked.step = {"memory_linked", 0.1165, 6.3433};
    linked.space = variable;
    c.runs = {sgd, adam, saga, fixed_step, linked};
    return c;
  }
  if (name == "fig4") {
    c.problem.kind = "advdiff_5d";
    c.reference = {"full_gradient", 6, "direct", 0.5, 20000, ""};
    c.replicates = 8;
    c.iterations = 800000;
    c.record_every = 1000;
    const std::vector<std::pair<int, double>> spaces{{2, 100.0}, {5, 50.0}, {9, 40.0}};
    for (auto [m, tau] : spaces) {
      RunConfig r;
      r.label = "m" + std::to_string(m);
      r.method = "sglscv";
      r.step = {"constant", tau, 0.0};
      r.space.index_set = "hyperbolic_cross";
      r.space.levels = {m};
      r.space.measure = "arcsine";
      r.space.memory_factor = 50.0;
      r.space.condition_every = 10;
      c.runs.push_back(r);
    }
    return c;
  }
  if (name == "fig5") {
    c.problem.kind = "advdiff_5d";
    c.reference = {"full_gradient", 6, "direct", 0.5, 20000, ""};
    c.replicates = 8;
    c.iterations = 100000;
    c.record_every = 100;
    c.aggregation = {Aggregation::Mode::ema, 0.01};
    RunConfig variable;
    variable.label = "sglscv";
    variable.method = "sglscv";
    variable.step = {"memory_linked", 2.3e-4, 4.7e-3};
    variable.space.index_set = "hyperbolic_cross";
    variable.space.levels = {2, 5, 8, 11, 14, 17};
    variable.space.measure = "arcsine";
    variable.space.memory_factor = 50.0;
    variable.space.condition_every = 10;
    RunConfig saga5;
    saga5.label = "saga5";
    saga5.method = "saga";
    saga5.step = {"constant", 100.0, 0.0};
    saga5.points = 5;
    RunConfig saga8 = saga5;
    saga8.label = "saga8";
    saga8.points = 8;
    RunConfig fg;
    fg.label = "full_gradient";
    fg.method = "full_gradient";
    fg.step = {"constant", 100.0, 0.0};
    fg.points = 5;
    fg.iterations = 500;
    c.runs = {variable, saga5, saga8, fg};
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------

std::unique_ptr<problems::ControlProblem> make_problem(const ProblemConfig& config) {
  if (config.kind == "diffusion_1d") return std::make_unique<problems::Diffusion1D>(config.diffusion);
  if (config.kind == "advdiff_5d") return std::make_unique<problems::AdvDiff5D>(config.advdiff);
  if (config.kind == "quadratic_toy")
    return std::make_unique<problems::QuadraticToy>(config.toy_seed, config.toy_dim, config.toy_beta,
                                                    config.toy_noise);
  throw std::invalid_argument("unknown problem '" + config.kind + "'");
}

Vector make_reference(const problems::ControlProblem& problem, const ProblemConfig& pc, const ReferenceConfig& rc) {
  if (rc.kind == "none") return {};
  if (rc.kind == "analytic") {
    if (pc.kind == "diffusion_1d") return problems::analytic_optimum(pc.diffusion).u;
    if (auto u = problem.known_optimum()) return *u;
    throw std::invalid_argument("reference: no closed-form optimum for " + pc.kind);
  }
  if (rc.kind == "file") {
    std::ifstream in(rc.path);
    if (!in) throw std::runtime_error("reference: cannot open " + rc.path);
    std::vector<double> v;
    double x;
    while (in >> x) v.push_back(x);
    if (!in.eof()) throw std::runtime_error("reference: non-numeric entry in " + rc.path);
    if (static_cast<int>(v.size()) != problem.control_dim())
      throw std::runtime_error("reference: " + rc.path + " has " + std::to_string(v.size()) + " values, expected " +
                               std::to_string(problem.control_dim()));
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  const auto rule = poly::tensor_gauss(rc.points, problem.parameter_law());
  if (rc.solver == "direct") return problems::quadrature_stationary_point(problem, rule);
  optim::RunOptions opt;
  opt.iterations = rc.iterations;
  opt.record_every = rc.iterations;
  return optim::run_full_gradient(problem, rule, rc.tau, opt).final_iterate;
}

optim::SpaceSchedule make_schedule(const problems::ControlProblem& problem, const SpaceConfig& sc,
                                   std::size_t iterations) {
  const auto& law = problem.parameter_law();
  if (sc.schedule == "algebraic") return optim::SpaceSchedule::algebraic(sc.s, iterations, law, sc.eta);
  if (sc.schedule == "exponential")
    return optim::SpaceSchedule::exponential(sc.s, iterations, law, sc.eta, sc.c_mu);
  if (sc.levels.empty()) throw std::invalid_argument("space: no levels");
  const auto kind = index_kind(sc.index_set);
  const auto measure = optim::measure_kind_from_string(sc.measure);
  const int d = problem.parameter_dim();
  std::vector<optim::SpaceStage> stages;
  for (std::size_t p = 0; p < sc.levels.size(); ++p) {
    optim::SpaceStage st;
    st.set = poly::MultiIndexSet::build(kind, sc.levels[p], d);
    if (!sc.memory.empty()) {
      st.memory = sc.memory[p];
    } else if (sc.memory_factor > 0.0) {
      st.memory = static_cast<std::size_t>(std::ceil(sc.memory_factor * static_cast<double>(st.set.size())));
    } else {
      const poly::BasisContext ctx(st.set, law);
      st.memory = optim::memory_size_for_space(ctx, optim::make_measure(measure, ctx), sc.memory_r);
    }
    stages.push_back(std::move(st));
  }
  const std::size_t s0 = stages.front().memory;
  for (std::size_t p = 0; p < stages.size(); ++p) {
    if (!sc.starts.empty()) {
      stages[p].start = sc.starts[p];
    } else if (p > 0) {
      const std::size_t need = stages[p].memory > s0 ? stages[p].memory - s0 : 0;
      stages[p].start = std::max(stages[p - 1].start + 1, need);
    }
  }
  return optim::SpaceSchedule(std::move(stages), measure, law);
}

// ---------------------------------------------------------------------------

ResultTable aggregate(const std::vector<optim::OptimizerTrace>& traces, const Aggregation& mode) {
  if (traces.empty()) throw std::invalid_argument("aggregate: no traces");
  std::size_t rows = traces.front().rows.size();
  for (const auto& t : traces) rows = std::min(rows, t.rows.size());
  ResultTable out;
  out.label = traces.front().method;
  out.aggregation = mode.tag();
  out.replicates = traces.size();
  out.rows.resize(rows);
  const double R = static_cast<double>(traces.size());
  for (std::size_t i = 0; i < rows; ++i) {
    optim::TraceRow& a = out.rows[i];
    a = traces.front().rows[i];
    double log_err = 0.0, work = 0.0, obj = 0.0, m = 0.0, s = 0.0, tau = 0.0, cond = 0.0;
    for (const auto& t : traces) {
      const auto& r = t.rows[i];
      if (r.iter != a.iter) throw std::invalid_argument("aggregate: replicates use different recording grids");
      log_err += std::log(r.error);
      work += static_cast<double>(r.grad_evals);
      obj += r.objective;
      m += static_cast<double>(r.m);
      s += static_cast<double>(r.s);
      tau += r.tau;
      cond += r.cond_rate;
    }
    a.error = std::exp(log_err / R);
    a.grad_evals = static_cast<std::size_t>(std::llround(work / R));
    a.objective = obj / R;
    a.m = static_cast<std::size_t>(std::llround(m / R));
    a.s = static_cast<std::size_t>(std::llround(s / R));
    a.tau = tau / R;
    a.cond_rate = cond / R;
  }
  if (mode.mode == Aggregation::Mode::ema) {
    // smoothing in log space keeps the geometric character of the average
    double state = rows ? std::log(out.rows[0].error) : 0.0;
    for (std::size_t i = 1; i < rows; ++i) {
      const double gap = static_cast<double>(out.rows[i].iter - out.rows[i - 1].iter);
      const double alpha = 1.0 - std::pow(1.0 - mode.lambda, gap);
      const double x = std::log(out.rows[i].error);
      state = std::isfinite(state) ? (1.0 - alpha) * state + alpha * x : x;
      out.rows[i].error = std::exp(state);
    }
  }
  return out;
}

namespace {

struct PreparedRun {
  std::optional<optim::FiniteSum> sum;
  std::optional<optim::SpaceSchedule> schedule;
  optim::StepSchedule step = optim::StepSchedule::constant(1.0);
};

PreparedRun prepare(const problems::ControlProblem& problem, const RunConfig& run, std::size_t iterations) {
  PreparedRun p;
  p.step = run.step.build();
  if (run.method == "saga") p.sum = optim::discretize_for_saga(problem, run.points);
  if (run.method == "sglscv") p.schedule = make_schedule(problem, run.space, iterations);
  return p;
}

optim::OptimizerTrace run_one(const problems::ControlProblem& problem, const RunConfig& run, const PreparedRun& p,
                              const optim::RunOptions& opt, Exec inner) {
  if (run.method == "sgd") return optim::run_sgd(problem, p.step, opt);
  if (run.method == "adam") return optim::run_adam(problem, run.step.a, run.beta1, run.beta2, opt);
  if (run.method == "saga") return optim::run_saga(*p.sum, run.step.a, opt);
  if (run.method == "full_gradient")
    return optim::run_full_gradient(problem, poly::tensor_gauss(run.points, problem.parameter_law()), run.step.a, opt,
                                    inner);
  if (run.method == "sglscv") return optim::run_sglscv_variable(problem, *p.schedule, p.step, opt);
  throw std::invalid_argument("unknown method '" + run.method + "'");
}

}  // namespace

std::vector<optim::OptimizerTrace> run_replicates(const problems::ControlProblem& problem, const RunConfig& run,
                                                  const ExperimentConfig& config, const Vector& reference,
                                                  Exec ex) {
  const std::size_t iterations = run.iterations ? run.iterations : config.iterations;
  const PreparedRun prepared = prepare(problem, run, iterations);
  optim::RunOptions base;
  base.iterations = iterations;
  base.seed = config.seed;
  base.record_every = config.record_every;
  base.objective = true;
  base.warmup_sgd = run.space.warmup;
  base.condition_every = run.space.condition_every;
  if (reference.size() > 0) base.reference = reference;

  // full gradient descent is deterministic: one replicate, parallel inside
  if (run.method == "full_gradient") {
    auto t = run_one(problem, run, prepared, base, ex);
    t.method = run.label;
    return {std::move(t)};
  }
  std::vector<optim::OptimizerTrace> traces(config.replicates);
  for_each_index(config.replicates, ex, [&](std::size_t r) {
    optim::RunOptions opt = base;
    opt.replicate = r;
    traces[r] = run_one(problem, run, prepared, opt, Exec::serial);
    traces[r].method = run.label;
  });
  return traces;
}

ExperimentResult run_experiment(const ExperimentConfig& config, Exec ex) {
  const auto problem = make_problem(config.problem);
  ExperimentResult result;
  result.reference = make_reference(*problem, config.problem, config.reference);
  for (const auto& run : config.runs) {
    const auto traces = run_replicates(*problem, run, config, result.reference, ex);
    result.tables.push_back(aggregate(traces, config.aggregation));
  }
  return result;
}

// ---------------------------------------------------------------------------

void write_csv(const std::filesystem::path& path, const ResultTable& table, const ExperimentConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << "# config: " << serialize(config, -1) << '\n';
    out << "# seed: " << config.seed << '\n';
    out << "# run: " << table.label << '\n';
    out << "# replicates: " << table.replicates << '\n';
    out << "# aggregation: " << table.aggregation << '\n';
    out << "iter,grad_evals,error,objective,m,s,tau,cond_rate\n";
    char buf[256];
    for (const auto& r : table.rows) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%zu,%zu,%.17g,%.17g\n", r.iter, r.grad_evals, r.error,
                    r.objective, r.m, r.s, r.tau, r.cond_rate);
      out << buf;
    }
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::filesystem::path> write_results(const ExperimentConfig& config, const ExperimentResult& result) {
  std::vector<std::filesystem::path> paths;
  for (const auto& t : result.tables) {
    auto p = std::filesystem::path(config.output) / (config.name + "_" + t.label + ".csv");
    write_csv(p, t, config);
    paths.push_back(std::move(p));
  }
  return paths;
}

// ---------------------------------------------------------------------------

namespace {

CheckResult check(std::string name, bool ok, std::string detail) { return {std::move(name), ok, std::move(detail)}; }

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

std::vector<CheckResult> check_polybasis() {
  std::vector<CheckResult> out;
  const auto law = poly::uniform_box(2, -1.0, 1.0);
  const auto set = poly::MultiIndexSet::build(poly::IndexSetKind::total_degree, 6, 2);
  const poly::BasisContext ctx(set, law);
  const auto rule = poly::tensor_gauss(8, law);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(ctx.size(), ctx.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const Vector phi = ctx.eval(rule.node(i));
    G += rule.weights[static_cast<Eigen::Index>(i)] * phi * phi.transpose();
  }
  const double err = (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
  out.push_back(check("orthonormality", err < 1e-12, "max |G - I| = " + fmt(err)));
  const auto h5 = poly::MultiIndexSet::build(poly::IndexSetKind::hyperbolic_cross, 5, 5).size();
  const auto h9 = poly::MultiIndexSet::build(poly::IndexSetKind::hyperbolic_cross, 9, 5).size();
  out.push_back(check("hyperbolic_cross_sizes", h5 == 56 && h9 == 136,
                      "|HC(5)| = " + std::to_string(h5) + ", |HC(9)| = " + std::to_string(h9)));
  out.push_back(check("downward_closed", set.is_downward_closed(), "total degree 6 in 2D"));
  return out;
}

std::vector<CheckResult> check_sampling() {
  std::vector<CheckResult> out;
  const auto law = poly::uniform_box(1, -1.0, 1.0);
  const auto rule = poly::gauss_legendre(200);
  const auto set = poly::MultiIndexSet::build(poly::IndexSetKind::total_degree, 5, 1);
  const poly::BasisContext ctx(set, law);
  for (auto mu : {sampling::SamplingMeasure::arcsine(law), sampling::SamplingMeasure::optimal(ctx)}) {
    // E_mu[w] = 1 by integrating the density of mu against rho
    double mass = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i)
      mass += rule.weights[static_cast<Eigen::Index>(i)] * mu.density_wrt_reference(rule.node(i));
    const double tol = mu.kind() == sampling::SamplingMeasure::Kind::arcsine ? 2e-2 : 1e-10;
    out.push_back(check(std::string("density_mass_") + (mu.kind() == sampling::SamplingMeasure::Kind::arcsine
                                                             ? "arcsine"
                                                             : "optimal"),
                        std::abs(mass - 1.0) < tol, "integral = " + fmt(mass)));
  }
  sampling::Stream a(7, 1, 2, 3), b(7, 1, 2, 3);
  bool same = true;
  for (int i = 0; i < 100; ++i) same = same && a.next_u64() == b.next_u64();
  out.push_back(check("stream_reproducible", same, "100 draws"));
  return out;
}

std::vector<CheckResult> check_leastsq() {
  std::vector<CheckResult> out;
  sampling::Stream rng(3, 0, 0);
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
    return M;
  };
  for (auto mode : {lsq::QMode::stored, lsq::QMode::implicit}) {
    lsq::QRState qr(rnd(30, 6), rnd(30, 3), mode);
    for (int k = 0; k < 200; ++k) {
      qr.append_row(rnd(6, 1), rnd(3, 1));
      qr.delete_oldest_row();
    }
    const Eigen::MatrixXd fresh = Eigen::MatrixXd(qr.A()).colPivHouseholderQr().solve(Eigen::MatrixXd(qr.B()));
    const double err = (qr.coefficients() - fresh).norm() / fresh.norm();
    out.push_back(check(std::string("updated_vs_fresh_") + (mode == lsq::QMode::stored ? "stored" : "implicit"),
                        err < 1e-10, "relative difference " + fmt(err)));
  }
  const Eigen::MatrixXd A = rnd(20, 4), C = rnd(4, 2);
  lsq::QRState exact(A, A * C);
  const double err = (exact.coefficients() - C).norm();
  out.push_back(check("exact_recovery", err < 1e-10, "error " + fmt(err)));
  return out;
}

std::vector<CheckResult> check_fem() {
  std::vector<CheckResult> out;
  const fem::Mesh mesh(8);
  const Vector one = Vector::Ones(mesh.node_count());
  const double area = fem::l2_inner(mesh, one, one);
  out.push_back(check("mass_area", std::abs(area - 1.0) < 1e-12, "|D| = " + fmt(area)));
  const fem::SpMat K = fem::stiffness_matrix(mesh);
  const double null = (K * one).cwiseAbs().maxCoeff();
  out.push_back(check("stiffness_constants", null < 1e-12, "max |K 1| = " + fmt(null)));
  return out;
}

std::vector<CheckResult> check_problems() {
  std::vector<CheckResult> out;
  const problems::Diffusion1D p1({});
  const problems::AdvDiff5D p5({});
  sampling::Stream rng(5, 0, 0);
  for (const problems::ControlProblem* p : std::initializer_list<const problems::ControlProblem*>{&p1, &p5}) {
    Vector u(p->control_dim()), h(p->control_dim());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      u[i] = rng.normal();
      h[i] = rng.normal();
    }
    poly::Point y(p->parameter_dim());
    for (int j = 0; j < y.size(); ++j) {
      const auto& c = p->parameter_law()[static_cast<std::size_t>(j)];
      y[j] = c.lo + (c.hi - c.lo) * rng.uniform();
    }
    const double err = problems::fd_gradient_error(*p, u, y, h);
    out.push_back(check("fd_gradient_" + p->name(), err < 1e-6, "relative error " + fmt(err)));
  }
  return out;
}

std::vector<CheckResult> check_optim() {
  std::vector<CheckResult> out;
  const std::size_t s = optim::memory_size_for_space(1.0, 1.0);
  out.push_back(check("memory_size_k1_r1", s == 52, "s = " + std::to_string(s)));
  const problems::QuadraticToy toy(11);
  const auto fs = optim::make_finite_sum(toy, poly::gauss_legendre(7));
  const Vector u = Vector::Ones(toy.control_dim());
  const Vector z = Vector::Zero(toy.control_dim());
  const Eigen::MatrixXd table = kernels::gradient_table(toy, z, fs.rule, Exec::serial);
  const Vector mean = table * fs.rule.weights;
  Vector expect = Vector::Zero(toy.control_dim());
  for (std::size_t i = 0; i < fs.size(); ++i)
    expect += fs.rule.weights[static_cast<Eigen::Index>(i)] *
              optim::saga_estimator(toy.gradient(u, fs.rule.node(i)), table, mean, i);
  const double err = (expect - fs.full_gradient(u, Exec::serial)).norm();
  out.push_back(check("saga_unbiased", err < 1e-12, "|E[v] - grad J| = " + fmt(err)));
  return out;
}

}  // namespace

std::vector<std::string> check_modules() { return {"polybasis", "sampling", "leastsq", "fem", "problems", "optim"}; }

std::vector<CheckResult> self_check(const std::string& module) {
  if (module == "polybasis") return check_polybasis();
  if (module == "sampling") return check_sampling();
  if (module == "leastsq") return check_leastsq();
  if (module == "fem") return check_fem();
  if (module == "problems") return check_problems();
  if (module == "optim") return check_optim();
  throw std::invalid_argument("unknown module '" + module + "'");
}

}  // namespace sglscv::experiment

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sglscv/experiment.hpp"

using namespace sglscv;
namespace ex = sglscv::experiment;

namespace {

optim::OptimizerTrace constant_trace(double e, std::size_t rows = 5) {
  optim::OptimizerTrace t;
  t.method = "c";
  for (std::size_t i = 0; i < rows; ++i) {
    optim::TraceRow r;
    r.iter = 10 * i;
    r.grad_evals = 10 * i + 1;
    r.error = e;
    t.rows.push_back(r);
  }
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ex::ExperimentConfig tiny(const std::filesystem::path& out) {
  ex::ExperimentConfig c;
  c.name = "tiny";
  c.problem.kind = "quadratic_toy";
  c.reference.kind = "analytic";
  c.replicates = 2;
  c.iterations = 200;
  c.record_every = 20;
  c.output = out.string();
  ex::RunConfig r;
  r.label = "cv";
  r.method = "sglscv";
  r.step = {"constant", 0.2, 0.0};
  r.space.levels = {2};
  r.space.memory = {20};
  c.runs = {r};
  return c;
}

}  // namespace

TEST_CASE("preset list and round trip") {
  CHECK(ex::preset_names() == std::vector<std::string>{"fig1", "fig2", "fig4", "fig5"});
  for (const auto& n : ex::preset_names()) {
    const auto c = ex::preset(n);
    CHECK(ex::parse_config(ex::serialize(c)) == c);
    CHECK(ex::parse_config(ex::serialize(c, -1)) == c);
  }
  CHECK_THROWS(ex::preset("fig3"));
}

TEST_CASE("preset contents") {
  const auto f1 = ex::preset("fig1");
  REQUIRE(f1.runs.size() == 3);
  CHECK(f1.runs[0].step.a == 0.1556);
  CHECK(f1.runs[1].step.a == 0.1252);
  CHECK(f1.runs[2].step.a == 0.1146);
  const auto f2 = ex::preset("fig2");
  std::vector<std::string> methods;
  for (const auto& r : f2.runs) methods.push_back(r.method);
  CHECK(methods == std::vector<std::string>{"sgd", "adam", "saga", "sglscv", "sglscv"});
  CHECK(f2.runs[2].points == 20);
  CHECK(f2.runs[2].step.a == 0.0769);
  CHECK(f2.runs[3].step.a == 0.125);
  CHECK(f2.runs[4].step.rule == "memory_linked");
  const auto f4 = ex::preset("fig4");
  CHECK(f4.runs[0].step.a == 100.0);
  CHECK(f4.runs[1].step.a == 50.0);
  CHECK(f4.runs[2].step.a == 40.0);
  const auto f5 = ex::preset("fig5");
  CHECK(f5.runs[0].step.a == 2.3e-4);
  CHECK(f5.runs[0].step.b == 4.7e-3);
  CHECK(f5.runs[1].points == 5);
  CHECK(f5.runs[2].points == 8);
  for (std::size_t i = 1; i < f5.runs[0].space.levels.size(); ++i)
    CHECK(f5.runs[0].space.levels[i] - f5.runs[0].space.levels[i - 1] == 3);
}

TEST_CASE("strict parsing") {
  const std::string ok = R"({"name":"x","runs":[{"method":"sgd","step":{"rule":"robbins_monro","a":19,"b":0.001}}]})";
  const auto c = ex::parse_config(ok);
  CHECK(c.runs[0].label == "sgd");
  CHECK(c.replicates == 40);
  CHECK(c.aggregation.lambda == 0.01);
  auto bad = [](const std::string& s) { CHECK_THROWS_AS(ex::parse_config(s), std::invalid_argument); };
  bad(R"({"name":"x","runs":[{"method":"sgd"}],"typo":1})");
  bad(R"({"name":"x","runs":[{"method":"sgd","step":{"rule":"constant","a":0.1,"c":2}}]})");
  bad(R"({"name":"x","runs":[{"method":"sgd"}],"replicates":"ten"})");
  bad(R"({"name":"x","runs":[{"method":"sgd"}],"replicates":-3})");
  bad(R"({"name":"x","runs":[{"method":"newton"}]})");
  bad(R"({"name":"x","runs":[]})");
  bad(R"({"name":"x"})");
  bad(R"({"name":"x","runs":[{"method":"sglscv"}]})");
  bad(R"({"name":"x","runs":[{"method":"saga","step":{"rule":"robbins_monro","a":1,"b":1}}]})");
  bad(R"({"name":"x","runs":[{"method":"sgd"},{"method":"sgd"}]})");
  bad(R"({"name":"x","problem":{"kind":"advdiff_5d","a":1},"runs":[{"method":"sgd"}]})");
  bad(R"({"name":"x","aggregation":"ema","ema_lambda":0,"runs":[{"method":"sgd"}]})");
  bad(R"({"name":"x", "runs": [)");
  try {
    ex::parse_config(R"({"name":"x","runs":[{"method":"sgd","space":{"levels":[2],"mesure":"optimal"}}]})");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("runs[0].space.mesure") != std::string::npos);
  }
}

TEST_CASE("aggregation closed forms") {
  using Mode = ex::Aggregation::Mode;
  const auto g = ex::aggregate({constant_trace(std::exp(1.0)), constant_trace(std::exp(-1.0))}, {});
  for (const auto& r : g.rows) CHECK(r.error == doctest::Approx(1.0));
  const auto h = ex::aggregate({constant_trace(2.0), constant_trace(8.0)}, {});
  for (const auto& r : h.rows) CHECK(r.error == doctest::Approx(4.0));
  auto t = constant_trace(1.0);
  for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i].error = std::pow(10.0, -static_cast<double>(i));
  const auto same = ex::aggregate({t, t, t}, {});
  for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(same.rows[i].error == doctest::Approx(t.rows[i].error));
  const auto id = ex::aggregate({t}, {Mode::ema, 1.0});
  for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(id.rows[i].error == doctest::Approx(t.rows[i].error));
  const auto sm = ex::aggregate({t}, {Mode::ema, 0.01});
  CHECK(sm.rows.back().error > t.rows.back().error);
  CHECK(sm.aggregation == "ema(lambda=0.01)");
  auto shifted = constant_trace(1.0);
  shifted.rows[2].iter = 25;
  CHECK_THROWS(ex::aggregate({constant_trace(1.0), shifted}, {}));
}

TEST_CASE("explicit schedules default to the earliest feasible switches") {
  const problems::Diffusion1D p({});
  ex::SpaceConfig sc;
  sc.levels = {2, 5, 10};
  sc.memory = {100, 250, 400};
  const auto s = ex::make_schedule(p, sc, 1000);
  CHECK(s[0].start == 0);
  CHECK(s[1].start == 150);
  CHECK(s[2].start == 300);
  sc.memory.clear();
  sc.memory_factor = 10.0;
  const auto f = ex::make_schedule(p, sc, 1000);
  CHECK(f[2].memory == 110);
}

TEST_CASE("experiment output is deterministic and atomic") {
  const auto dir = std::filesystem::temp_directory_path() / "sglscv_experiment_test";
  std::filesystem::remove_all(dir);
  const auto cfg = tiny(dir);
  const auto p1 = ex::write_results(cfg, ex::run_experiment(cfg));
  const std::string first = slurp(p1.at(0));
  const auto p2 = ex::write_results(cfg, ex::run_experiment(cfg, Exec::serial));
  CHECK(slurp(p2.at(0)) == first);
  CHECK(p1[0].filename() == "tiny_cv.csv");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);

  std::istringstream in(first);
  std::string line, header;
  std::string cfg_line;
  while (std::getline(in, line)) {
    if (line.rfind("# config: ", 0) == 0) cfg_line = line.substr(10);
    if (line.rfind('#', 0) != 0) {
      header = line;
      break;
    }
  }
  CHECK(header == "iter,grad_evals,error,objective,m,s,tau,cond_rate");
  CHECK(ex::parse_config(cfg_line) == cfg);
  std::size_t prev = 0;
  bool increasing = true, nonneg = true;
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string it, ge, err;
    std::getline(ls, it, ',');
    std::getline(ls, ge, ',');
    std::getline(ls, err, ',');
    const std::size_t g = std::stoul(ge);
    if (rows > 0) increasing = increasing && g > prev;
    nonneg = nonneg && std::stod(err) >= 0.0;
    prev = g;
    ++rows;
  }
  CHECK(rows == 11);
  CHECK(increasing);
  CHECK(nonneg);
  std::filesystem::remove_all(dir);
}

TEST_CASE("references") {
  auto cfg = tiny(std::filesystem::temp_directory_path());
  const auto toy = ex::make_problem(cfg.problem);
  CHECK(ex::make_reference(*toy, cfg.problem, {"none"}).size() == 0);
  const auto a = ex::make_reference(*toy, cfg.problem, cfg.reference);
  ex::ReferenceConfig direct;
  direct.points = 4;
  CHECK((ex::make_reference(*toy, cfg.problem, direct) - a).norm() < 1e-10);
  const auto file = std::filesystem::temp_directory_path() / "sglscv_ref.txt";
  {
    std::ofstream out(file);
    out.precision(17);
    for (Eigen::Index i = 0; i < a.size(); ++i) out << a[i] << '\n';
  }
  ex::ReferenceConfig from_file;
  from_file.kind = "file";
  from_file.path = file.string();
  CHECK((ex::make_reference(*toy, cfg.problem, from_file) - a).norm() < 1e-14);
  std::ofstream(file) << "1 2\n";
  CHECK_THROWS(ex::make_reference(*toy, cfg.problem, from_file));
  std::filesystem::remove(file);
}

TEST_CASE("self checks pass") {
  for (const auto& m : ex::check_modules())
    for (const auto& c : ex::self_check(m)) CHECK_MESSAGE(c.passed, m << "/" << c.name << ": " << c.detail);
  CHECK_THROWS(ex::self_check("nope"));
}

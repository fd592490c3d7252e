#include "sglscv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "sglscv/kernels.hpp"

namespace sglscv::optim {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

Vector initial_iterate(const ControlProblem& problem, const RunOptions& opt) {
  if (opt.u0.size() == 0) return Vector::Zero(problem.control_dim());
  if (opt.u0.size() != problem.control_dim()) throw std::invalid_argument("RunOptions: u0 has the wrong size");
  return opt.u0;
}

// Appends trace rows on the recording grid.
class Recorder {
 public:
  Recorder(const ControlProblem& problem, const RunOptions& opt, OptimizerTrace& trace)
      : problem_(problem), opt_(opt), trace_(trace) {
    if (opt.record_every == 0) throw std::invalid_argument("RunOptions: record_every must be positive");
    if (opt.reference && opt.reference->size() != problem.control_dim())
      throw std::invalid_argument("RunOptions: reference has the wrong size");
  }

  void count(bool conditioned) {
    ++seen_;
    hits_ += conditioned ? 1 : 0;
  }

  void maybe(std::size_t iter, const Vector& u, std::size_t work, std::size_t m, std::size_t s, double tau) {
    if (iter != 0 && iter % opt_.record_every != 0 && iter != opt_.iterations) return;
    TraceRow row;
    row.iter = iter;
    row.grad_evals = work;
    row.error = opt_.reference ? problem_.norm(u - *opt_.reference) : nan;
    row.objective = nan;
    if (opt_.objective)
      if (auto J = problem_.expected_objective(u)) row.objective = *J;
    row.m = m;
    row.s = s;
    row.tau = tau;
    row.cond_rate = seen_ ? static_cast<double>(hits_) / static_cast<double>(seen_) : 1.0;
    seen_ = hits_ = 0;
    trace_.rows.push_back(row);
  }

 private:
  const ControlProblem& problem_;
  const RunOptions& opt_;
  OptimizerTrace& trace_;
  std::size_t seen_ = 0, hits_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------

StepSchedule::StepSchedule(Rule r, double a, double b) : rule_(r), p0_(a), p1_(b) {}

StepSchedule StepSchedule::constant(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("StepSchedule: tau must be positive");
  return {Rule::constant, tau, 0.0};
}

StepSchedule StepSchedule::robbins_monro(double c0, double c1) {
  if (!(c0 > 0.0) || c1 < 0.0) throw std::invalid_argument("StepSchedule: need c0 > 0 and c1 >= 0");
  return {Rule::robbins_monro, c0, c1};
}

StepSchedule StepSchedule::power(double tau, double t) {
  if (!(tau > 0.0) || t > 1.0) throw std::invalid_argument("StepSchedule: need tau > 0 and t <= 1");
  return {Rule::power, tau, t};
}

StepSchedule StepSchedule::memory_linked(double c0, double c1) {
  if (c0 < 0.0 || c1 < 0.0 || !(c0 + c1 > 0.0)) throw std::invalid_argument("StepSchedule: need c0, c1 >= 0, not both 0");
  return {Rule::memory_linked, c0, c1};
}

double StepSchedule::operator()(std::size_t k, std::size_t m) const {
  const double dk = static_cast<double>(k);
  switch (rule_) {
    case Rule::constant: return p0_;
    case Rule::robbins_monro: return 1.0 / (p0_ + p1_ * dk);
    case Rule::power: return p0_ * std::pow(dk + 1.0, p1_ - 1.0);
    case Rule::memory_linked: return 1.0 / (p0_ * static_cast<double>(m) + p1_);
  }
  return p0_;
}

std::string to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::reference: return "reference";
    case MeasureKind::arcsine: return "arcsine";
    case MeasureKind::optimal: return "optimal";
  }
  return "reference";
}

MeasureKind measure_kind_from_string(const std::string& s) {
  if (s == "reference") return MeasureKind::reference;
  if (s == "arcsine") return MeasureKind::arcsine;
  if (s == "optimal") return MeasureKind::optimal;
  throw std::invalid_argument("unknown sampling measure '" + s + "'");
}

sampling::SamplingMeasure make_measure(MeasureKind kind, const poly::BasisContext& ctx) {
  switch (kind) {
    case MeasureKind::reference: return sampling::SamplingMeasure::reference(ctx.coordinates());
    case MeasureKind::arcsine: return sampling::SamplingMeasure::arcsine(ctx.coordinates());
    case MeasureKind::optimal: return sampling::SamplingMeasure::optimal(ctx);
  }
  throw std::logic_error("make_measure: bad kind");
}

// ---------------------------------------------------------------------------

SpaceSchedule::SpaceSchedule(std::vector<SpaceStage> stages, MeasureKind measure,
                             std::vector<poly::Coordinate> coords)
    : stages_(std::move(stages)), measure_(measure), coords_(std::move(coords)) {
  if (stages_.empty()) throw std::invalid_argument("SpaceSchedule: no stages");
  if (stages_.front().start != 0) throw std::invalid_argument("SpaceSchedule: first stage must start at 0");
  const std::size_t s0 = stages_.front().memory;
  for (std::size_t p = 0; p < stages_.size(); ++p) {
    const auto& st = stages_[p];
    if (st.set.empty() || st.set.dimension() != static_cast<int>(coords_.size()))
      throw std::invalid_argument("SpaceSchedule: stage " + std::to_string(p) + " has a bad index set");
    if (st.memory < st.set.size())
      throw std::invalid_argument("SpaceSchedule: stage " + std::to_string(p) + " memory " +
                                  std::to_string(st.memory) + " is below the space dimension " +
                                  std::to_string(st.set.size()));
    if (st.start + s0 < st.memory)
      throw std::invalid_argument("SpaceSchedule: stage " + std::to_string(p) + " needs " +
                                  std::to_string(st.memory) + " records but only " +
                                  std::to_string(st.start + s0) + " exist at its switch");
    if (p > 0) {
      if (st.start <= stages_[p - 1].start) throw std::invalid_argument("SpaceSchedule: switch iterations must increase");
      if (!stages_[p - 1].set.is_subset_of(st.set)) throw std::invalid_argument("SpaceSchedule: spaces must be nested");
    }
  }
}

SpaceSchedule SpaceSchedule::single(poly::MultiIndexSet set, std::size_t memory, MeasureKind measure,
                                    std::vector<poly::Coordinate> coords) {
  return SpaceSchedule({SpaceStage{std::move(set), 0, memory}}, measure, std::move(coords));
}

namespace {

// Largest total-degree set with at most m elements.
poly::MultiIndexSet total_degree_of_size(std::size_t m, int d) {
  int deg = 0;
  while (poly::MultiIndexSet::build(poly::IndexSetKind::total_degree, deg + 1, d).size() <= m) ++deg;
  return poly::MultiIndexSet::build(poly::IndexSetKind::total_degree, deg, d);
}

template <class SizeOf, class DimOf>
SpaceSchedule per_iteration(std::size_t iterations, std::vector<poly::Coordinate> coords, SizeOf size_of,
                            DimOf dim_of) {
  const int d = static_cast<int>(coords.size());
  std::vector<SpaceStage> stages;
  std::size_t last_s = 0, last_m = 0;
  for (std::size_t k = 0; k < std::max<std::size_t>(iterations, 1); ++k) {
    const std::size_t s = size_of(k);
    const std::size_t m = std::max<std::size_t>(1, dim_of(s));
    if (k > 0 && s == last_s && m == last_m) continue;
    auto set = (k > 0 && m == last_m) ? stages.back().set : total_degree_of_size(m, d);
    const std::size_t memory = std::max(s, set.size());
    stages.push_back({std::move(set), k, memory});
    last_s = s;
    last_m = m;
  }
  return SpaceSchedule(std::move(stages), MeasureKind::optimal, std::move(coords));
}

}  // namespace

SpaceSchedule SpaceSchedule::algebraic(double s, std::size_t iterations, std::vector<poly::Coordinate> coords,
                                       double eta) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("algebraic schedule: s must lie in (0,1)");
  if (!(eta > 0.0)) throw std::invalid_argument("algebraic schedule: eta must be positive");
  const double kappa = (1.0 - std::log(2.0)) / (2.0 * (1.0 + 2.0 * eta));
  return per_iteration(
      iterations, std::move(coords),
      [s](std::size_t k) { return static_cast<std::size_t>(std::ceil(s * static_cast<double>(k + 1))); },
      [kappa](std::size_t sk) -> std::size_t {
        if (sk < 2) return 1;
        const double ds = static_cast<double>(sk);
        return static_cast<std::size_t>(std::floor(kappa * ds / std::log(ds)));
      });
}

SpaceSchedule SpaceSchedule::exponential(double s, std::size_t iterations, std::vector<poly::Coordinate> coords,
                                         double eta, double c_mu) {
  if (!(s > 0.0)) throw std::invalid_argument("exponential schedule: s must be positive");
  if (!(eta > 0.0) || c_mu < 1.0) throw std::invalid_argument("exponential schedule: need eta > 0 and C_mu >= 1");
  const double c = 0.5 * std::sqrt((1.0 - std::log(2.0)) / (eta * c_mu));
  return per_iteration(
      iterations, std::move(coords),
      [s](std::size_t k) {
        return static_cast<std::size_t>(std::ceil(s * std::pow(static_cast<double>(k + 1), 2.0 / 3.0)));
      },
      [c](std::size_t sk) { return static_cast<std::size_t>(std::floor(c * std::sqrt(static_cast<double>(sk)))); });
}

// ---------------------------------------------------------------------------

double work_ratio(const OptimizerTrace& trace) {
  if (trace.rows.empty() || trace.rows.back().iter == 0) throw std::invalid_argument("work_ratio: empty trace");
  return static_cast<double>(trace.rows.back().grad_evals) / static_cast<double>(trace.rows.back().iter);
}

OptimizerTrace run_sgd(const ControlProblem& problem, const StepSchedule& step, const RunOptions& opt) {
  OptimizerTrace trace;
  trace.method = "sgd";
  Recorder rec(problem, opt, trace);
  const auto rho = sampling::SamplingMeasure::reference(problem.parameter_law());
  const sampling::SeedPolicy seeds{opt.seed};
  Vector u = initial_iterate(problem, opt);
  rec.maybe(0, u, 0, 0, 0, step(0));
  for (std::size_t k = 0; k < opt.iterations; ++k) {
    auto rng = seeds.stream(opt.replicate, k, sampling::channel_iterate);
    const auto y = rho.sample(rng);
    const double tau = step(k);
    u -= tau * problem.gradient(u, y);
    rec.maybe(k + 1, u, k + 1, 0, 0, tau);
  }
  trace.final_iterate = u;
  return trace;
}

OptimizerTrace run_adam(const ControlProblem& problem, double tau, double beta1, double beta2,
                        const RunOptions& opt, double eps) {
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("run_adam: beta1 and beta2 must lie in [0,1)");
  if (!(tau > 0.0)) throw std::invalid_argument("run_adam: tau must be positive");
  OptimizerTrace trace;
  trace.method = "adam";
  Recorder rec(problem, opt, trace);
  const auto rho = sampling::SamplingMeasure::reference(problem.parameter_law());
  const sampling::SeedPolicy seeds{opt.seed};
  Vector u = initial_iterate(problem, opt);
  Vector m1 = Vector::Zero(u.size()), m2 = Vector::Zero(u.size());
  double b1k = 1.0, b2k = 1.0;
  rec.maybe(0, u, 0, 0, 0, tau);
  for (std::size_t k = 0; k < opt.iterations; ++k) {
    auto rng = seeds.stream(opt.replicate, k, sampling::channel_iterate);
    const Vector g = problem.gradient(u, rho.sample(rng));
    m1 = beta1 * m1 + (1.0 - beta1) * g;
    m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseAbs2();
    b1k *= beta1;
    b2k *= beta2;
    const Vector mh = m1 / (1.0 - b1k);
    const Vector vh = m2 / (1.0 - b2k);
    u.array() -= tau * mh.array() / (vh.array().sqrt() + eps);
    rec.maybe(k + 1, u, k + 1, 0, 0, tau);
  }
  trace.final_iterate = u;
  return trace;
}

// ---------------------------------------------------------------------------

std::size_t FiniteSum::draw(sampling::Stream& rng) const {
  const double x = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

Vector FiniteSum::full_gradient(const Vector& u, Exec ex) const {
  return kernels::weighted_gradient_sum(*problem, u, rule, ex);
}

FiniteSum make_finite_sum(const ControlProblem& problem, poly::QuadratureRule rule) {
  if (rule.size() == 0) throw std::invalid_argument("make_finite_sum: empty rule");
  if ((rule.weights.array() < 0.0).any()) throw std::invalid_argument("make_finite_sum: negative weights");
  FiniteSum fs;
  fs.problem = &problem;
  fs.rule = std::move(rule);
  fs.cumulative.resize(fs.rule.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < fs.rule.size(); ++i) {
    acc += fs.rule.weights[static_cast<Eigen::Index>(i)];
    fs.cumulative[i] = acc;
  }
  return fs;
}

FiniteSum discretize_for_saga(const ControlProblem& problem, int points_per_dim) {
  if (points_per_dim < 1) throw std::invalid_argument("discretize_for_saga: need at least one point per dimension");
  const double nodes = std::pow(static_cast<double>(points_per_dim), problem.parameter_dim());
  const double bytes = nodes * problem.control_dim() * sizeof(double);
  if (bytes > 4e9)
    throw std::invalid_argument("discretize_for_saga: a " + std::to_string(points_per_dim) + "^" +
                                std::to_string(problem.parameter_dim()) + " grid (" +
                                std::to_string(static_cast<long long>(nodes)) + " nodes) needs too much memory");
  return make_finite_sum(problem, poly::tensor_gauss(points_per_dim, problem.parameter_law()));
}

Vector saga_estimator(const Vector& grad_now, const Matrix& table, const Vector& table_mean, std::size_t i) {
  return grad_now - table.col(static_cast<Eigen::Index>(i)) + table_mean;
}

OptimizerTrace run_saga(const FiniteSum& fs, double tau, const RunOptions& opt) {
  if (!(tau > 0.0)) throw std::invalid_argument("run_saga: tau must be positive");
  const ControlProblem& problem = *fs.problem;
  OptimizerTrace trace;
  trace.method = "saga";
  Recorder rec(problem, opt, trace);
  const sampling::SeedPolicy seeds{opt.seed};
  Vector u = initial_iterate(problem, opt);
  Matrix table = kernels::gradient_table(problem, u, fs.rule);
  Vector mean = table * fs.rule.weights;
  std::size_t work = fs.size();
  const std::size_t resum = std::max<std::size_t>(fs.size(), 1024);
  rec.maybe(0, u, work, fs.size(), fs.size(), tau);
  for (std::size_t k = 0; k < opt.iterations; ++k) {
    auto rng = seeds.stream(opt.replicate, k, sampling::channel_iterate);
    const std::size_t i = fs.draw(rng);
    const auto col = static_cast<Eigen::Index>(i);
    const Vector g = problem.gradient(u, fs.rule.node(i));
    ++work;
    u -= tau * saga_estimator(g, table, mean, i);
    mean += fs.rule.weights[col] * (g - table.col(col));
    table.col(col) = g;
    if ((k + 1) % resum == 0) mean = table * fs.rule.weights;
    rec.maybe(k + 1, u, work, fs.size(), fs.size(), tau);
  }
  trace.final_iterate = u;
  return trace;
}

OptimizerTrace run_full_gradient(const ControlProblem& problem, const poly::QuadratureRule& rule, double tau,
                                 const RunOptions& opt, Exec ex) {
  if (!(tau > 0.0)) throw std::invalid_argument("run_full_gradient: tau must be positive");
  OptimizerTrace trace;
  trace.method = "full_gradient";
  Recorder rec(problem, opt, trace);
  Vector u = initial_iterate(problem, opt);
  std::size_t work = 0;
  rec.maybe(0, u, work, 0, rule.size(), tau);
  for (std::size_t k = 0; k < opt.iterations; ++k) {
    u -= tau * kernels::weighted_gradient_sum(problem, u, rule, ex);
    work += rule.size();
    rec.maybe(k + 1, u, work, 0, rule.size(), tau);
  }
  trace.final_iterate = u;
  return trace;
}

// ---------------------------------------------------------------------------

std::size_t memory_size_for_space(double K, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("memory_size_for_space: r must be positive");
  if (!(K >= 1.0)) throw std::invalid_argument("memory_size_for_space: K must be at least 1");
  const double kappa = (1.0 - std::log(2.0)) / (2.0 + 2.0 * r);
  auto s = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(K)));
  while (K > kappa * static_cast<double>(s) / std::log(static_cast<double>(s))) ++s;
  return s;
}

double christoffel_bound(const poly::BasisContext& ctx, const sampling::SamplingMeasure& mu, int grid) {
  if (mu.kind() == sampling::SamplingMeasure::Kind::optimal) return static_cast<double>(ctx.size());
  const int d = ctx.dimension();
  for (const auto& c : ctx.coordinates())
    if (c.law != poly::Coordinate::Law::uniform)
      throw std::invalid_argument("christoffel_bound: grid search needs bounded coordinates");
  const int n = std::max(5, static_cast<int>(std::pow(static_cast<double>(grid), 1.0 / d)));
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  poly::Point y(d);
  double best = 0.0;
  while (true) {
    for (int j = 0; j < d; ++j) {
      const auto& c = ctx.coordinates()[static_cast<std::size_t>(j)];
      y[j] = c.lo + (c.hi - c.lo) * idx[static_cast<std::size_t>(j)] / (n - 1);
    }
    best = std::max(best, poly::christoffel_inverse(ctx, mu.weight(y), y));
    int j = 0;
    while (j < d && ++idx[static_cast<std::size_t>(j)] == n) idx[static_cast<std::size_t>(j++)] = 0;
    if (j == d) break;
  }
  return std::max(best, static_cast<double>(ctx.size()));
}

std::size_t memory_size_for_space(const poly::BasisContext& ctx, const sampling::SamplingMeasure& mu, double r) {
  return memory_size_for_space(christoffel_bound(ctx, mu), r);
}

// ---------------------------------------------------------------------------

ControlVariate::ControlVariate(const ControlProblem& problem, poly::BasisContext ctx, sampling::SamplingMeasure mu,
                               std::size_t window)
    : problem_(&problem), ctx_(std::move(ctx)), mu_(std::move(mu)), window_(window), mem_(window) {
  if (window < ctx_.size()) throw std::invalid_argument("ControlVariate: window below the space dimension");
}

void ControlVariate::set_history(std::size_t h) { mem_.set_capacity(std::max(h, window_)); }

std::size_t ControlVariate::fill(const Vector& u, std::size_t count, sampling::Stream& rng) {
  auto control = keeps_controls() ? std::make_shared<const Vector>(u) : nullptr;
  for (std::size_t i = 0; i < count; ++i) {
    Record r;
    r.y = mu_.sample(rng);
    r.grad = problem_->gradient(u, r.y);
    r.control = control;
    r.tag = -static_cast<std::int64_t>(count - i);
    mem_.push(std::move(r));
  }
  refit();
  return count;
}

void ControlVariate::refit() {
  const std::size_t first = mem_.size() - std::min(window_, mem_.size());
  lsq::Matrix A, B;
  lsq::weighted_system(mem_, ctx_, mu_, first, A, B);
  qr_.reset(A, B, lsq::QMode::implicit);
  refresh();
}

void ControlVariate::refresh() {
  since_check_ = 0;
  conditioned_ = qr_.rows() >= qr_.cols() && qr_.cols() > 0 && lsq::conditioning_check_fast(qr_.gram());
}

void ControlVariate::absorb(Record r, double weight, const Vector& phi) {
  const double sw = std::sqrt(weight);
  const Vector b = sw * r.grad;
  mem_.push(std::move(r));
  qr_.append_row(sw * phi, b);
  while (qr_.rows() > window_) qr_.delete_oldest_row();
  if (++since_check_ >= check_every_) refresh();
}

ControlVariate::Direction ControlVariate::direction(const Vector& u, sampling::Stream& rng) const {
  Direction out;
  out.y = mu_.sample(rng);
  out.g = problem_->gradient(u, out.y);
  out.w = mu_.weight(out.y);
  out.phi = ctx_.eval(out.y);
  out.conditioned = conditioned_;
  if (conditioned_) {
    Vector v, mean;
    qr_.predict(out.phi, v, mean);
    out.d = out.w * out.g + (mean - out.w * v);
  } else {
    out.d = out.w * out.g;
  }
  return out;
}

Vector ControlVariate::direction_at(const Vector& u, const poly::Point& y) const {
  const Vector g = problem_->gradient(u, y);
  const double w = mu_.weight(y);
  if (!conditioned_) return w * g;
  Vector v, mean;
  qr_.predict(ctx_.eval(y), v, mean);
  return w * g + (mean - w * v);
}

void ControlVariate::grow_window(std::size_t window) {
  if (window > mem_.size())
    throw std::logic_error("ControlVariate: window " + std::to_string(window) + " exceeds the memory " +
                           std::to_string(mem_.size()));
  while (qr_.rows() > window) qr_.delete_oldest_row();
  while (qr_.rows() < window) {
    const Record& r = mem_[mem_.size() - qr_.rows() - 1];
    const double sw = std::sqrt(mu_.weight(r.y));
    qr_.append_row(sw * ctx_.eval(r.y), sw * r.grad, true);
  }
  window_ = window;
}

std::size_t ControlVariate::switch_space(const poly::MultiIndexSet& old_set, const poly::MultiIndexSet& new_set,
                                         std::size_t window, bool resample, sampling::Stream& rng) {
  if (window < new_set.size()) throw std::invalid_argument("switch_space: window below the space dimension");
  if (new_set == old_set) {
    grow_window(window);
    refresh();
    return 0;
  }
  if (resample) {
    const auto res = sampling::resample_memory(
        mem_, old_set, new_set, ctx_.coordinates(),
        [this](const Vector& u, const poly::Point& y) { return problem_->gradient(u, y); }, rng);
    ctx_ = ctx_.extended(new_set);
    mu_ = sampling::SamplingMeasure::optimal(ctx_);
    window_ = window;
    refit();
    return res.gradient_evaluations;
  }
  grow_window(window);
  poly::BasisContext next = ctx_.extended(new_set);
  const auto m_old = static_cast<Eigen::Index>(ctx_.size());
  const auto extra = static_cast<Eigen::Index>(next.size()) - m_old;
  const std::size_t first = mem_.size() - window;
  Matrix C(static_cast<Eigen::Index>(window), extra);
  for (std::size_t i = 0; i < window; ++i) {
    const Record& r = mem_[first + i];
    C.row(static_cast<Eigen::Index>(i)) = std::sqrt(mu_.weight(r.y)) * next.eval(r.y).tail(extra).transpose();
  }
  qr_.append_columns(C);
  ctx_ = std::move(next);
  refresh();
  return 0;
}

OptimizerTrace run_sglscv_variable(const ControlProblem& problem, const SpaceSchedule& schedule,
                                   const StepSchedule& step, const RunOptions& opt) {
  if (schedule.coordinates() != problem.parameter_law())
    throw std::invalid_argument("run_sglscv: schedule coordinates differ from the problem's parameter law");
  OptimizerTrace trace;
  trace.method = "sglscv";
  Recorder rec(problem, opt, trace);
  const sampling::SeedPolicy seeds{opt.seed};
  const std::size_t P = schedule.size();

  // future[p] = max over q > p of s_q - sigma(q)
  std::vector<long long> future(P, std::numeric_limits<long long>::min());
  for (std::size_t p = P - 1; p-- > 0;)
    future[p] = std::max(future[p + 1], static_cast<long long>(schedule[p + 1].memory) -
                                            static_cast<long long>(schedule[p + 1].start));

  poly::BasisContext ctx0(schedule[0].set, schedule.coordinates());
  auto mu0 = make_measure(schedule.measure(), ctx0);
  ControlVariate cv(problem, ctx0, std::move(mu0), schedule[0].memory);
  cv.set_check_every(opt.condition_every);
  Vector u = initial_iterate(problem, opt);

  std::size_t work = 0;
  const std::size_t s0 = schedule.initial_memory();
  if (opt.warmup_sgd) {
    const double tau0 = step(0, ctx0.size());
    for (std::size_t i = 0; i < s0; ++i) {
      auto rng = seeds.stream(opt.replicate, i, sampling::channel_initial);
      Record r;
      r.y = cv.measure().sample(rng);
      r.grad = problem.gradient(u, r.y);
      if (cv.keeps_controls()) r.control = std::make_shared<const Vector>(u);
      r.tag = -static_cast<std::int64_t>(s0 - i);
      u -= tau0 * cv.measure().weight(r.y) * r.grad;
      cv.memory().push(std::move(r));
    }
    cv.refit();
    work += s0;
  } else {
    auto rng = seeds.stream(opt.replicate, 0, sampling::channel_initial);
    work += cv.fill(u, s0, rng);
  }

  std::size_t p = 0;
  rec.maybe(0, u, work, cv.context().size(), cv.window(), step(0, cv.context().size()));
  for (std::size_t k = 0; k < opt.iterations; ++k) {
    if (p + 1 < P && k == schedule[p + 1].start) {
      auto rr = seeds.stream(opt.replicate, k, sampling::channel_resample);
      const std::size_t extra = cv.switch_space(schedule[p].set, schedule[p + 1].set, schedule[p + 1].memory,
                                                cv.keeps_controls(), rr);
      work += extra;
      trace.resampled += extra;
      ++p;
    }
    const long long need = future[p] == std::numeric_limits<long long>::min()
                               ? 0
                               : future[p] + static_cast<long long>(k) + 1;
    cv.set_history(std::max<std::size_t>(schedule[p].memory, static_cast<std::size_t>(std::max(0LL, need))));

    auto rng = seeds.stream(opt.replicate, k, sampling::channel_iterate);
    auto dir = cv.direction(u, rng);
    ++work;
    const std::size_t m = cv.context().size();
    const double tau = step(k, m);
    Record r;
    r.y = std::move(dir.y);
    r.grad = std::move(dir.g);
    if (cv.keeps_controls()) r.control = std::make_shared<const Vector>(u);
    r.tag = static_cast<std::int64_t>(k);
    u -= tau * dir.d;
    cv.absorb(std::move(r), dir.w, dir.phi);
    rec.count(dir.conditioned);
    rec.maybe(k + 1, u, work, m, cv.window(), tau);
  }
  trace.final_iterate = u;
  trace.refactorizations = cv.qr().refactor_count();
  return trace;
}

OptimizerTrace run_sglscv_fixed(const ControlProblem& problem, const poly::MultiIndexSet& set, MeasureKind measure,
                                const StepSchedule& step, std::size_t memory, const RunOptions& opt) {
  return run_sglscv_variable(problem, SpaceSchedule::single(set, memory, measure, problem.parameter_law()), step,
                             opt);
}

// ---------------------------------------------------------------------------

StepBounds theory_step_bounds(double alpha, double L, double q, double s, double delta) {
  if (!(alpha > 0.0) || !(L > 0.0) || !(q > 0.0) || !(s >= 1.0))
    throw std::invalid_argument("theory_step_bounds: need alpha, L, q > 0 and s >= 1");
  const double qL2 = q * L * L;
  if (!(delta > 0.0) || !(delta < alpha * alpha / (24.0 * qL2)))
    throw std::invalid_argument("theory_step_bounds: delta must lie in (0, alpha^2/(24 q L^2))");
  const double r = std::pow(1.0 / (1.0 + s * delta), 1.0 / s);
  const double gap = (alpha * alpha - 24.0 * qL2 * delta) / (4.0 * qL2);
  StepBounds b;
  b.tau_simple = alpha / (14.0 * qL2);
  b.tau_rate = alpha / (4.0 * qL2) * std::min((1.0 - r) / (1.0 + 6.0 * delta - r), gap);
  b.x = std::max(r, 1.0 - gap);
  return b;
}

}  // namespace sglscv::optim

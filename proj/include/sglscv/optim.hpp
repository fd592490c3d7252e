#pragma once

// Stochastic optimizers: SGD, Adam, SAGA, full gradient and SG-LSCV with
// fixed or variable polynomial control-variate spaces.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sglscv/leastsq.hpp"
#include "sglscv/memory.hpp"
#include "sglscv/parallel.hpp"
#include "sglscv/polybasis.hpp"
#include "sglscv/problems.hpp"
#include "sglscv/sampling.hpp"

namespace sglscv::optim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using problems::ControlProblem;

class StepSchedule {
 public:
  enum class Rule { constant, robbins_monro, power, memory_linked };

  static StepSchedule constant(double tau);
  /// 1 / (c0 + c1 k)
  static StepSchedule robbins_monro(double c0, double c1);
  /// tau (k+1)^(t-1)
  static StepSchedule power(double tau, double t);
  /// 1 / (c0 m_k + c1); m_k is the dimension of the active space
  static StepSchedule memory_linked(double c0, double c1);

  double operator()(std::size_t k, std::size_t m = 1) const;
  Rule rule() const { return rule_; }
  double p0() const { return p0_; }
  double p1() const { return p1_; }

 private:
  StepSchedule(Rule r, double a, double b);
  Rule rule_ = Rule::constant;
  double p0_ = 0.0, p1_ = 0.0;
};

enum class MeasureKind { reference, arcsine, optimal };
std::string to_string(MeasureKind k);
MeasureKind measure_kind_from_string(const std::string& s);

/// Active sampling measure for a space, or the fixed one.
sampling::SamplingMeasure make_measure(MeasureKind kind, const poly::BasisContext& ctx);

struct SpaceStage {
  poly::MultiIndexSet set;
  std::size_t start = 0;   // sigma(p)
  std::size_t memory = 0;  // s_p
};

/// Nested spaces with switch iterations and memory sizes.
class SpaceSchedule {
 public:
  SpaceSchedule(std::vector<SpaceStage> stages, MeasureKind measure, std::vector<poly::Coordinate> coords);

  static SpaceSchedule single(poly::MultiIndexSet set, std::size_t memory, MeasureKind measure,
                              std::vector<poly::Coordinate> coords);
  /// s_k = ceil(s (k+1)), m_k = max(1, floor(kappa s_k / log s_k)) with
  /// kappa = (1 - log 2)/(2(1 + 2 eta)); total-degree spaces, optimal measure.
  static SpaceSchedule algebraic(double s, std::size_t iterations, std::vector<poly::Coordinate> coords,
                                 double eta = 1.0);
  /// s_k = ceil(s (k+1)^(2/3)), m_k = floor(sqrt((1 - log 2)/(eta C)) sqrt(s_k) / 2).
  static SpaceSchedule exponential(double s, std::size_t iterations, std::vector<poly::Coordinate> coords,
                                   double eta = 1.0, double c_mu = 1.0);

  const std::vector<SpaceStage>& stages() const { return stages_; }
  const SpaceStage& operator[](std::size_t p) const { return stages_[p]; }
  std::size_t size() const { return stages_.size(); }
  MeasureKind measure() const { return measure_; }
  const std::vector<poly::Coordinate>& coordinates() const { return coords_; }
  std::size_t initial_memory() const { return stages_.front().memory; }

 private:
  std::vector<SpaceStage> stages_;
  MeasureKind measure_;
  std::vector<poly::Coordinate> coords_;
};

struct TraceRow {
  std::size_t iter = 0;
  std::size_t grad_evals = 0;
  double error = 0.0;
  double objective = 0.0;
  std::size_t m = 0;
  std::size_t s = 0;
  double tau = 0.0;
  double cond_rate = 1.0;
};

struct OptimizerTrace {
  std::string method;
  std::vector<TraceRow> rows;
  Vector final_iterate;
  std::size_t refactorizations = 0;
  std::size_t resampled = 0;

  std::size_t iterations() const { return rows.empty() ? 0 : rows.back().iter; }
  std::size_t grad_evals() const { return rows.empty() ? 0 : rows.back().grad_evals; }
};

struct RunOptions {
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  Vector u0;                        // empty means zero
  std::optional<Vector> reference;  // error column is NaN without one
  std::size_t record_every = 1;
  bool objective = false;           // fill the objective column when J has a closed form
  bool warmup_sgd = false;          // SG-LSCV: fill the initial memory along SGD steps instead of at u0
  std::size_t condition_every = 1;  // SG-LSCV: iterations between conditioning tests
};

/// Cumulative gradient evaluations per iteration.
double work_ratio(const OptimizerTrace& trace);

OptimizerTrace run_sgd(const ControlProblem& problem, const StepSchedule& step, const RunOptions& opt);
OptimizerTrace run_adam(const ControlProblem& problem, double tau, double beta1, double beta2,
                        const RunOptions& opt, double eps = 1e-8);

/// J^s(u) = sum_i w_i g(u, y_i) on a tensor Gauss rule.
struct FiniteSum {
  const ControlProblem* problem = nullptr;
  poly::QuadratureRule rule;
  std::vector<double> cumulative;  // for index sampling with p_i = w_i

  std::size_t size() const { return rule.size(); }
  std::size_t draw(sampling::Stream& rng) const;
  Vector full_gradient(const Vector& u, Exec ex = Exec::parallel) const;
};

FiniteSum discretize_for_saga(const ControlProblem& problem, int points_per_dim);
FiniteSum make_finite_sum(const ControlProblem& problem, poly::QuadratureRule rule);

/// grad g_i(u) - grad g_i(z_i) + sum_j w_j grad g_j(z_j), i drawn with p_i = w_i.
Vector saga_estimator(const Vector& grad_now, const Matrix& table, const Vector& table_mean, std::size_t i);

OptimizerTrace run_saga(const FiniteSum& fs, double tau, const RunOptions& opt);
OptimizerTrace run_full_gradient(const ControlProblem& problem, const poly::QuadratureRule& rule, double tau,
                                 const RunOptions& opt, Exec ex = Exec::parallel);

/// Smallest s >= max(m, 3) with K <= kappa s / log s, kappa = (1 - log 2)/(2 + 2r).
std::size_t memory_size_for_space(double K, double r);
/// K_{m,w} for the measure: m for the optimal one, else a grid maximum of k_{m,w}.
double christoffel_bound(const poly::BasisContext& ctx, const sampling::SamplingMeasure& mu, int grid = 2001);
std::size_t memory_size_for_space(const poly::BasisContext& ctx, const sampling::SamplingMeasure& mu, double r);

/// Control-variate state of SG-LSCV: basis, measure, memory and the QR of the
/// weighted Vandermonde over the active window of the memory.
class ControlVariate {
 public:
  ControlVariate(const ControlProblem& problem, poly::BasisContext ctx, sampling::SamplingMeasure mu,
                 std::size_t window);

  /// Draws `count` records at u and factors the window.
  std::size_t fill(const Vector& u, std::size_t count, sampling::Stream& rng);
  /// Adds one record and keeps the factored window at its size.
  void absorb(Record r, double weight, const Vector& phi);

  struct Direction {
    Vector d, g, phi;
    poly::Point y;
    double w = 1.0;
    bool conditioned = false;
  };
  /// Fresh draw and control-variate direction against the current model.
  Direction direction(const Vector& u, sampling::Stream& rng) const;
  /// Same, without drawing: returns only d.
  Vector direction_at(const Vector& u, const poly::Point& y) const;

  /// Refactors the newest `window` records of the memory from scratch.
  void refit();
  /// Recomputes the conditioning flag of the current window.
  void refresh();
  /// absorb() retests conditioning every k records; space switches always do.
  void set_check_every(std::size_t k) { check_every_ = std::max<std::size_t>(k, 1); }
  bool conditioned() const { return conditioned_; }

  const poly::BasisContext& context() const { return ctx_; }
  const sampling::SamplingMeasure& measure() const { return mu_; }
  const Memory& memory() const { return mem_; }
  Memory& memory() { return mem_; }
  const lsq::QRState& qr() const { return qr_; }
  std::size_t window() const { return window_; }

  /// Memory capacity (at least the window).
  void set_history(std::size_t h);
  /// Moves to a larger nested space and a new window.
  std::size_t switch_space(const poly::MultiIndexSet& old_set, const poly::MultiIndexSet& new_set,
                           std::size_t window, bool resample, sampling::Stream& rng);
  bool keeps_controls() const { return mu_.space_dependent(); }

 private:
  void grow_window(std::size_t window);

  const ControlProblem* problem_;
  poly::BasisContext ctx_;
  sampling::SamplingMeasure mu_;
  std::size_t window_;
  Memory mem_;
  lsq::QRState qr_;
  bool conditioned_ = false;
  std::size_t check_every_ = 1, since_check_ = 0;
};

OptimizerTrace run_sglscv_variable(const ControlProblem& problem, const SpaceSchedule& schedule,
                                   const StepSchedule& step, const RunOptions& opt);
OptimizerTrace run_sglscv_fixed(const ControlProblem& problem, const poly::MultiIndexSet& set, MeasureKind measure,
                                const StepSchedule& step, std::size_t memory, const RunOptions& opt);

struct StepBounds {
  double tau_simple;  // alpha / (14 q L^2)
  double tau_rate;    // largest step for the contraction factor x
  double x;
};
/// Step-size bounds and contraction factor for strong convexity alpha,
/// Lipschitz constant L, weight supremum q, memory s and tolerance delta.
StepBounds theory_step_bounds(double alpha, double L, double q, double s, double delta);

}  // namespace sglscv::optim

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sglscv/memory.hpp"
#include "sglscv/polybasis.hpp"

namespace sglscv::sampling {

using poly::Point;

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based stream: every variate is a hash of
/// (seed, replicate, iteration, channel, draw index).
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t iteration, std::uint64_t channel = 0);

  std::uint64_t next_u64();
  /// Uniform on [0,1).
  double uniform();
  double normal();
  std::uint64_t draws() const { return draw_; }

 private:
  std::uint64_t key_;
  std::uint64_t draw_ = 0;
};

struct SeedPolicy {
  std::uint64_t seed = 0;
  Stream stream(std::uint64_t replicate, std::uint64_t iteration, std::uint64_t channel = 0) const {
    return Stream(seed, replicate, iteration, channel);
  }
};

// Channels separating the draw families of one iteration.
inline constexpr std::uint64_t channel_iterate = 0;
inline constexpr std::uint64_t channel_initial = 1;
inline constexpr std::uint64_t channel_resample = 2;

class SamplingMeasure {
 public:
  enum class Kind { reference, arcsine, optimal };

  static SamplingMeasure reference(std::vector<poly::Coordinate> coords);
  static SamplingMeasure arcsine(std::vector<poly::Coordinate> coords);
  /// Mixture (1/m) sum_nu phi_nu^2 drho over the columns of ctx.
  static SamplingMeasure optimal(const poly::BasisContext& ctx);
  /// Mixture over the given indices only.
  static SamplingMeasure complement(std::vector<poly::MultiIndex> indices, std::vector<poly::Coordinate> coords);

  Kind kind() const { return kind_; }
  /// True when the measure changes together with the approximation space.
  bool space_dependent() const { return kind_ == Kind::optimal; }
  const std::vector<poly::Coordinate>& coordinates() const { return coords_; }
  int dimension() const { return static_cast<int>(coords_.size()); }

  Point sample(Stream& rng) const;
  /// w = drho/dmu at y.
  double weight(const Point& y) const;
  /// Density of mu with respect to rho.
  double density_wrt_reference(const Point& y) const { return 1.0 / weight(y); }

  std::size_t rejection_attempts() const { return attempts_; }

 private:
  double sample_component(int coord, int degree, Stream& rng) const;
  double mixture_sum(const Point& y) const;
  void build_envelopes();

  Kind kind_ = Kind::reference;
  std::vector<poly::Coordinate> coords_;
  std::vector<poly::MultiIndex> components_;
  // per coordinate, per degree: max of phi_n^2 times the proposal ratio
  std::vector<std::vector<double>> envelope_;
  mutable std::size_t attempts_ = 0;
};

/// Gradient oracle g'(u, y).
using GradientOracle = std::function<Eigen::VectorXd(const Eigen::VectorXd& u, const Point& y)>;

struct ResampleResult {
  std::size_t replaced = 0;
  std::size_t gradient_evaluations = 0;
};

/// Turns a memory sampled from the optimal measure of old_set into one
/// sampled from that of new_set. Records need their controls.
ResampleResult resample_memory(Memory& memory, const poly::MultiIndexSet& old_set,
                               const poly::MultiIndexSet& new_set, const std::vector<poly::Coordinate>& coords,
                               const GradientOracle& grad, Stream& rng);

/// Uniform grid argmax of w over the measure's box (uniform coordinates only).
struct GridMax {
  double value;
  Point argmax;
};
GridMax weight_grid_max(const SamplingMeasure& mu, int points_per_axis);

}  // namespace sglscv::sampling

#include "sglscv/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sglscv::sampling {

using poly::Coordinate;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Stream::Stream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t iteration, std::uint64_t channel) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ replicate);
  h = splitmix64(h ^ iteration);
  key_ = splitmix64(h ^ (channel * 0xd1b54a32d192ed03ULL));
}

std::uint64_t Stream::next_u64() { return splitmix64(key_ ^ splitmix64(draw_++)); }

double Stream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Stream::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---------------------------------------------------------------------------

namespace {

constexpr double gaussian_proposal_var = 2.0;
constexpr int envelope_grid = 10000;
constexpr double envelope_margin = 1.05;
constexpr int attempt_budget = 100000;

void univariate_all(const Coordinate& c, int nmax, double t, std::span<double> out) {
  if (c.law == Coordinate::Law::uniform)
    poly::legendre_all(nmax, t, out);
  else
    poly::hermite_all(nmax, t, out);
}

// phi_n(t)^2 times the target/proposal density ratio
double proposal_ratio(const Coordinate& c, double phi2, double t) {
  if (c.law == Coordinate::Law::uniform) return phi2;
  const double s2 = gaussian_proposal_var;
  return phi2 * std::sqrt(s2) * std::exp(-0.5 * t * t * (1.0 - 1.0 / s2));
}

}  // namespace

SamplingMeasure SamplingMeasure::reference(std::vector<Coordinate> coords) {
  SamplingMeasure m;
  m.kind_ = Kind::reference;
  m.coords_ = std::move(coords);
  return m;
}

SamplingMeasure SamplingMeasure::arcsine(std::vector<Coordinate> coords) {
  for (const auto& c : coords)
    if (c.law != Coordinate::Law::uniform)
      throw std::invalid_argument("arcsine measure needs bounded (uniform) coordinates");
  SamplingMeasure m;
  m.kind_ = Kind::arcsine;
  m.coords_ = std::move(coords);
  return m;
}

SamplingMeasure SamplingMeasure::optimal(const poly::BasisContext& ctx) {
  return complement(ctx.columns(), ctx.coordinates());
}

SamplingMeasure SamplingMeasure::complement(std::vector<poly::MultiIndex> indices, std::vector<Coordinate> coords) {
  if (indices.empty()) throw std::invalid_argument("mixture measure needs at least one component");
  SamplingMeasure m;
  m.kind_ = Kind::optimal;
  m.coords_ = std::move(coords);
  m.components_ = std::move(indices);
  for (const auto& nu : m.components_)
    if (static_cast<int>(nu.size()) != m.dimension())
      throw std::invalid_argument("mixture component dimension mismatch");
  m.build_envelopes();
  return m;
}

void SamplingMeasure::build_envelopes() {
  const int d = dimension();
  envelope_.assign(d, {});
  for (int i = 0; i < d; ++i) {
    int nmax = 0;
    for (const auto& nu : components_) nmax = std::max(nmax, nu[i]);
    const Coordinate& c = coords_[i];
    const double lo = c.law == Coordinate::Law::uniform ? -1.0 : -10.0 * std::sqrt(gaussian_proposal_var);
    const double hi = -lo;
    std::vector<double> best(nmax + 1, 0.0), vals(nmax + 1);
    for (int g = 0; g < envelope_grid; ++g) {
      const double t = lo + (hi - lo) * g / (envelope_grid - 1.0);
      univariate_all(c, nmax, t, vals);
      for (int n = 0; n <= nmax; ++n) best[n] = std::max(best[n], proposal_ratio(c, vals[n] * vals[n], t));
    }
    for (double& b : best) b *= envelope_margin;
    envelope_[i] = std::move(best);
  }
}

double SamplingMeasure::sample_component(int coord, int degree, Stream& rng) const {
  const Coordinate& c = coords_[coord];
  const double env = envelope_[coord][degree];
  std::vector<double> vals(degree + 1);
  for (int a = 0; a < attempt_budget; ++a) {
    ++attempts_;
    const double t = c.law == Coordinate::Law::uniform ? 2.0 * rng.uniform() - 1.0
                                                       : std::sqrt(gaussian_proposal_var) * rng.normal();
    if (degree == 0) return t;
    univariate_all(c, degree, t, vals);
    if (rng.uniform() * env <= proposal_ratio(c, vals[degree] * vals[degree], t)) return t;
  }
  throw std::runtime_error("rejection sampler exhausted its attempt budget; envelope is misconfigured");
}

Point SamplingMeasure::sample(Stream& rng) const {
  const int d = dimension();
  Point y(d);
  switch (kind_) {
    case Kind::reference:
      for (int i = 0; i < d; ++i) {
        const double t = coords_[i].law == Coordinate::Law::uniform ? 2.0 * rng.uniform() - 1.0 : rng.normal();
        y[i] = coords_[i].from_reference(t);
      }
      break;
    case Kind::arcsine:
      for (int i = 0; i < d; ++i) y[i] = coords_[i].from_reference(std::cos(std::numbers::pi * rng.uniform()));
      break;
    case Kind::optimal: {
      const auto n = components_.size();
      const auto j = std::min<std::size_t>(static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)), n - 1);
      for (int i = 0; i < d; ++i) y[i] = coords_[i].from_reference(sample_component(i, components_[j][i], rng));
      break;
    }
  }
  return y;
}

double SamplingMeasure::mixture_sum(const Point& y) const {
  const int d = dimension();
  std::vector<std::vector<double>> uni(d);
  for (int i = 0; i < d; ++i) {
    const int nmax = static_cast<int>(envelope_[i].size()) - 1;
    uni[i].resize(nmax + 1);
    univariate_all(coords_[i], nmax, coords_[i].to_reference(y[i]), uni[i]);
  }
  double s = 0.0;
  for (const auto& nu : components_) {
    double p = 1.0;
    for (int i = 0; i < d; ++i) p *= uni[i][nu[i]];
    s += p * p;
  }
  return s;
}

double SamplingMeasure::weight(const Point& y) const {
  if (y.size() != dimension()) throw std::invalid_argument("weight: point dimension mismatch");
  switch (kind_) {
    case Kind::reference:
      return 1.0;
    case Kind::arcsine: {
      double w = 1.0;
      for (int i = 0; i < dimension(); ++i) {
        const double t = coords_[i].to_reference(y[i]);
        w *= 0.5 * std::numbers::pi * std::sqrt(std::max(0.0, 1.0 - t * t));
      }
      return w;
    }
    case Kind::optimal: {
      const double s = mixture_sum(y);
      if (!(s > 0.0)) throw std::logic_error("weight: all mixture components vanish");
      return static_cast<double>(components_.size()) / s;
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------

ResampleResult resample_memory(Memory& memory, const poly::MultiIndexSet& old_set,
                               const poly::MultiIndexSet& new_set, const std::vector<Coordinate>& coords,
                               const GradientOracle& grad, Stream& rng) {
  if (!old_set.is_subset_of(new_set)) throw std::invalid_argument("resample_memory: old set is not a subset of the new set");
  ResampleResult res;
  if (old_set.size() == new_set.size()) return res;
  std::vector<poly::MultiIndex> fresh;
  for (const auto& nu : new_set)
    if (!old_set.contains(nu)) fresh.push_back(nu);
  const auto hat = SamplingMeasure::complement(std::move(fresh), coords);
  const double keep = static_cast<double>(old_set.size()) / static_cast<double>(new_set.size());
  for (auto& rec : memory) {
    if (rng.uniform() < keep) continue;
    if (!rec.control) throw std::logic_error("resample_memory: record has no stored control");
    rec.y = hat.sample(rng);
    rec.grad = grad(*rec.control, rec.y);
    ++res.replaced;
    ++res.gradient_evaluations;
  }
  return res;
}

GridMax weight_grid_max(const SamplingMeasure& mu, int n) {
  const int d = mu.dimension();
  for (const auto& c : mu.coordinates())
    if (c.law != Coordinate::Law::uniform) throw std::invalid_argument("weight_grid_max: bounded coordinates only");
  if (n < 2) throw std::invalid_argument("weight_grid_max: need at least two points per axis");
  std::vector<int> idx(d, 0);
  Point y(d), best_y(d);
  double best = -1.0;
  while (true) {
    for (int i = 0; i < d; ++i) {
      const auto& c = mu.coordinates()[i];
      y[i] = c.lo + (c.hi - c.lo) * idx[i] / (n - 1.0);
    }
    const double w = mu.weight(y);
    if (w > best) {
      best = w;
      best_y = y;
    }
    int i = d - 1;
    for (; i >= 0; --i) {
      if (++idx[i] < n) break;
      idx[i] = 0;
    }
    if (i < 0) break;
  }
  return {best, best_y};
}

}  // namespace sglscv::sampling

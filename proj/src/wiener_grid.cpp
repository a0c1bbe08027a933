#include "hermitelab/wiener_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hermitelab/errors.hpp"
#include "hermitelab/numeric.hpp"

namespace hermitelab {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double geometric_sum(double first, double ratio, std::size_t count) {
  // first * (ratio + ratio^2 + ... + ratio^count) / ratio, i.e. widths first*ratio^(j-1)
  double s = 0.0;
  double w = first;
  for (std::size_t j = 0; j < count; ++j) {
    s += w;
    w *= ratio;
  }
  return s;
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> edges, bool uniform)
    : edges_(std::move(edges)), uniform_(uniform) {
  if (edges_.size() < 3) throw ConfigError("grid needs at least 2 cells");
  if (!(edges_.front() < 0.0 && edges_.back() > 0.0)) {
    throw ConfigError("grid must satisfy x_min < 0 < x_max");
  }
  const std::size_t n = edges_.size() - 1;
  widths_.resize(n);
  midpoints_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    widths_[i] = edges_[i + 1] - edges_[i];
    if (!(widths_[i] > 0.0)) throw ConfigError("grid edges must be strictly increasing");
  }
  if (uniform_) {
    delta_ = (edges_.back() - edges_.front()) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      midpoints_[i] = edges_.front() + (static_cast<double>(i) + 0.5) * delta_;
    }
  } else {
    delta_ = widths_.back();
    for (std::size_t i = 0; i < n; ++i) midpoints_[i] = 0.5 * (edges_[i] + edges_[i + 1]);
  }
}

std::optional<std::size_t> TimeGrid::edge_index(double t) const {
  const double tol = 1e-9 * delta_;
  // Edges are sorted; binary search for the closest one.
  auto it = std::lower_bound(edges_.begin(), edges_.end(), t - tol);
  if (it != edges_.end() && std::abs(*it - t) <= tol) {
    return static_cast<std::size_t>(it - edges_.begin());
  }
  return std::nullopt;
}

GridPtr build_grid(double M, double x_max, std::size_t n_cells) {
  if (n_cells < 2) throw ConfigError("grid: n_cells must be >= 2", "grid.n_cells");
  if (!(M > 0.0)) throw ConfigError("grid: M must be positive", "grid.M");
  if (!(x_max > 0.0)) throw ConfigError("grid: x_max must be positive", "grid.x_max");
  const double delta = (x_max + M) / static_cast<double>(n_cells);
  std::vector<double> edges(n_cells + 1);
  for (std::size_t i = 0; i <= n_cells; ++i) {
    double e = -M + static_cast<double>(i) * delta;
    if (std::abs(e) < 1e-9 * delta) e = 0.0;
    edges[i] = e;
  }
  edges.front() = -M;
  edges.back() = x_max;
  return std::make_shared<const TimeGrid>(std::move(edges), true);
}

GridPtr build_graded_grid(const GradedGridSpec& spec) {
  const double U = spec.uniform_min;
  if (!(U > 0.0)) throw ConfigError("grid: uniform_min must be positive", "grid.uniform_min");
  if (!(spec.x_max > 0.0)) throw ConfigError("grid: x_max must be positive", "grid.x_max");
  if (!(spec.M > 0.0)) throw ConfigError("grid: M must be positive", "grid.M");
  if (spec.n_cells < 2) throw ConfigError("grid: n_cells must be >= 2", "grid.n_cells");
  if (spec.alignment < 1) throw ConfigError("grid: alignment must be >= 1", "grid.alignment");
  if (!(spec.tail_ratio >= 1.0)) {
    throw ConfigError("grid: tail_ratio must be >= 1", "grid.tail_ratio");
  }
  if (spec.M <= U || spec.tail_ratio == 1.0) return build_grid(spec.M, spec.x_max, spec.n_cells);

  const double span = U + spec.x_max;
  const double tail_length = spec.M - U;
  std::size_t best_k = 0;
  std::size_t best_uniform = 0;
  for (std::size_t k = spec.alignment;; k += spec.alignment) {
    const double exact = span * static_cast<double>(k);
    const auto n_u = static_cast<std::size_t>(std::llround(exact));
    if (n_u + 1 > spec.n_cells) break;
    if (std::abs(exact - static_cast<double>(n_u)) > 1e-9) continue;
    const double delta = 1.0 / static_cast<double>(k);
    const std::size_t n_t = spec.n_cells - n_u;
    if (geometric_sum(delta * spec.tail_ratio, spec.tail_ratio, n_t) >= tail_length) {
      best_k = k;
      best_uniform = n_u;
    }
  }
  if (best_k == 0) {
    throw ConfigError("grid: n_cells too small to cover [-M, x_max] with the requested tail ratio",
                      "grid.n_cells");
  }
  const double delta = 1.0 / static_cast<double>(best_k);
  const std::size_t n_t = spec.n_cells - best_uniform;

  double lo = 0.0;
  double hi = spec.tail_ratio;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (geometric_sum(delta * mid, mid, n_t) > tail_length) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  const double ratio = hi;

  std::vector<double> edges;
  edges.reserve(spec.n_cells + 1);
  // Tail, built from -U downwards and then reversed.
  std::vector<double> tail;
  tail.reserve(n_t);
  double e = -U;
  double w = delta * ratio;
  for (std::size_t j = 0; j < n_t; ++j) {
    e -= w;
    w *= ratio;
    tail.push_back(e);
  }
  tail.back() = -spec.M;
  edges.assign(tail.rbegin(), tail.rend());
  const auto shift = static_cast<long long>(std::llround(U * static_cast<double>(best_k)));
  for (std::size_t i = 0; i <= best_uniform; ++i) {
    edges.push_back(static_cast<double>(static_cast<long long>(i) - shift) /
                    static_cast<double>(best_k));
  }
  edges.back() = spec.x_max;
  return std::make_shared<const TimeGrid>(std::move(edges), false);
}

double default_truncation(const HermiteParams& params, double tail_fraction, double cap) {
  const double p = 2.0 * params.H0 - 2.0;  // negative
  const double M = std::pow(tail_fraction * (2.0 - 2.0 * params.H0), 1.0 / p);
  return std::min(M, cap);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream_id)
    : key_(mix64(seed ^ mix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

CounterRng::result_type CounterRng::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>((*this)() >> 11) * 0x1.0p-53;          // [0, 1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

WienerSample sample_increments(const GridPtr& grid, std::uint64_t seed, std::uint64_t stream_id) {
  WienerSample s;
  s.grid = grid;
  s.seed = seed;
  s.stream_id = stream_id;
  CounterRng rng(seed, stream_id);
  const auto widths = grid->widths();
  s.increments.resize(widths.size());
  for (std::size_t i = 0; i < widths.size(); ++i) {
    s.increments[i] = std::sqrt(widths[i]) * rng.normal();
  }
  return s;
}

double wiener_integral(std::span<const double> h, const WienerSample& sample) {
  if (h.size() != sample.increments.size()) {
    throw ShapeError("wiener_integral: h has " + std::to_string(h.size()) + " entries, grid has " +
                     std::to_string(sample.increments.size()) + " cells");
  }
  std::vector<double> terms(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) terms[i] = h[i] * sample.increments[i];
  return pairwise_sum(terms);
}

bool same_grid(const TimeGrid& a, const TimeGrid& b) { return &a == &b || a == b; }

}  // namespace hermitelab

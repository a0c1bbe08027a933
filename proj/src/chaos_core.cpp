#include "hermitelab/chaos_core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <string>

#include "hermitelab/errors.hpp"
#include "hermitelab/numeric.hpp"
#include "hermitelab/parallel.hpp"

namespace hermitelab {
namespace {

using Partition = std::vector<std::vector<int>>;

void build_partitions(int q, int next, Partition& current, std::vector<Partition>& out) {
  if (next == q) {
    out.push_back(current);
    return;
  }
  // indexed loop: the recursion below may reallocate `current`
  for (std::size_t b = 0; b < current.size(); ++b) {
    current[b].push_back(next);
    build_partitions(q, next + 1, current, out);
    current[b].pop_back();
  }
  current.push_back({next});
  build_partitions(q, next + 1, current, out);
  current.pop_back();
}

const std::vector<Partition>& set_partitions(int q) {
  static std::mutex mutex;
  static std::map<int, std::vector<Partition>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(q);
  if (it == cache.end()) {
    std::vector<Partition> out;
    Partition current;
    build_partitions(q, 0, current, out);
    it = cache.emplace(q, std::move(out)).first;
  }
  return it->second;
}

struct Matching {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> singles;
};

void build_matchings(std::vector<int> remaining, Matching& current, std::vector<Matching>& out) {
  if (remaining.empty()) {
    out.push_back(current);
    return;
  }
  const int first = remaining.front();
  std::vector<int> rest(remaining.begin() + 1, remaining.end());
  current.singles.push_back(first);
  build_matchings(rest, current, out);
  current.singles.pop_back();
  for (std::size_t k = 0; k < rest.size(); ++k) {
    std::vector<int> without = rest;
    without.erase(without.begin() + static_cast<std::ptrdiff_t>(k));
    current.pairs.emplace_back(first, rest[k]);
    build_matchings(without, current, out);
    current.pairs.pop_back();
  }
}

const std::vector<Matching>& partial_matchings(int q) {
  static std::mutex mutex;
  static std::map<int, std::vector<Matching>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(q);
  if (it == cache.end()) {
    std::vector<int> all(q);
    std::iota(all.begin(), all.end(), 0);
    std::vector<Matching> out;
    Matching current;
    build_matchings(all, current, out);
    it = cache.emplace(q, std::move(out)).first;
  }
  return it->second;
}

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

/// sum over pairwise-distinct (i_1..i_q) of prod_j z_j(i_j), by Moebius inversion
/// over set partitions of the slots.
double distinct_tuple_sum(const std::vector<std::vector<double>>& z) {
  const int q = static_cast<int>(z.size());
  if (q == 0) return 1.0;
  const std::size_t n = z.front().size();
  std::vector<double> subset_sum(std::size_t{1} << q, 0.0);
  std::vector<double> terms(n);
  for (unsigned mask = 1; mask < (1u << q); ++mask) {
    for (std::size_t i = 0; i < n; ++i) {
      double prod = 1.0;
      for (int j = 0; j < q; ++j) {
        if (mask & (1u << j)) prod *= z[j][i];
      }
      terms[i] = prod;
    }
    subset_sum[mask] = pairwise_sum(terms);
  }
  double total = 0.0;
  for (const auto& partition : set_partitions(q)) {
    double prod = 1.0;
    for (const auto& block : partition) {
      unsigned mask = 0;
      for (int j : block) mask |= 1u << j;
      const int size = static_cast<int>(block.size());
      const double mobius = ((size - 1) % 2 == 0 ? 1.0 : -1.0) * factorial(size - 1);
      prod *= mobius * subset_sum[mask];
    }
    total += prod;
  }
  return total;
}

double weighted_dot(std::span<const double> a, std::span<const double> b,
                    std::span<const double> w) {
  std::vector<double> terms(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) terms[i] = a[i] * b[i] * w[i];
  return pairwise_sum(terms);
}

double plain_dot(std::span<const double> a, std::span<const double> b) {
  std::vector<double> terms(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) terms[i] = a[i] * b[i];
  return pairwise_sum(terms);
}

/// Wick product :B(u_1) ... B(u_q): of Gaussian integrals of step functions.
double wick_product(const std::vector<std::vector<double>>& factors, const WienerSample& sample) {
  const int q = static_cast<int>(factors.size());
  const auto widths = sample.grid->widths();
  std::vector<double> b(q);
  for (int j = 0; j < q; ++j) b[j] = plain_dot(factors[j], sample.increments);
  std::vector<std::vector<double>> cov(q, std::vector<double>(q, 0.0));
  for (int a = 0; a < q; ++a) {
    for (int c = a + 1; c < q; ++c) cov[a][c] = weighted_dot(factors[a], factors[c], widths);
  }
  double total = 0.0;
  for (const auto& m : partial_matchings(q)) {
    double prod = (m.pairs.size() % 2 == 0) ? 1.0 : -1.0;
    for (auto [a, c] : m.pairs) prod *= cov[a][c];
    for (int j : m.singles) prod *= b[j];
    total += prod;
  }
  return total;
}

std::size_t checked_tuple_count(std::size_t n, int q, const ChaosLimits& limits) {
  std::size_t count = 1;
  for (int j = 0; j < q; ++j) {
    if (count > limits.max_tuples / std::max<std::size_t>(n, 1)) {
      throw ResourceError("brute-force enumeration of " + std::to_string(n) + "^" +
                          std::to_string(q) + " tuples exceeds the configured limit");
    }
    count *= n;
  }
  return count;
}

/// Sum of visit(idx) over all q-tuples in lexicographic order (optionally
/// restricted to distinct entries); partial sums per leading index are combined
/// pairwise.
template <class Visit>
double enumerate_tuples(std::size_t n, int q, bool distinct, Visit&& visit) {
  if (q == 0) {
    std::vector<std::size_t> empty;
    return visit(std::span<const std::size_t>(empty));
  }
  std::vector<double> partial(n, 0.0);
  std::vector<std::size_t> idx(q, 0);
  for (std::size_t lead = 0; lead < n; ++lead) {
    idx[0] = lead;
    double acc = 0.0;
    if (q == 1) {
      acc = visit(std::span<const std::size_t>(idx));
    } else {
      std::fill(idx.begin() + 1, idx.end(), 0);
      while (true) {
        bool ok = true;
        if (distinct) {
          for (int a = 0; a < q && ok; ++a) {
            for (int b = a + 1; b < q; ++b) {
              if (idx[a] == idx[b]) {
                ok = false;
                break;
              }
            }
          }
        }
        if (ok) acc += visit(std::span<const std::size_t>(idx));
        int pos = q - 1;
        while (pos >= 1 && ++idx[pos] == n) {
          idx[pos] = 0;
          --pos;
        }
        if (pos < 1) break;
      }
    }
    partial[lead] = acc;
  }
  return pairwise_sum(partial);
}

double wick_monomial(std::span<const std::size_t> idx, const WienerSample& sample) {
  std::vector<std::size_t> sorted(idx.begin(), idx.end());
  std::sort(sorted.begin(), sorted.end());
  const auto widths = sample.grid->widths();
  double prod = 1.0;
  std::size_t k = 0;
  while (k < sorted.size()) {
    std::size_t m = 1;
    while (k + m < sorted.size() && sorted[k + m] == sorted[k]) ++m;
    const std::size_t c = sorted[k];
    prod *= hermite_poly(static_cast<int>(m), sample.increments[c], widths[c]);
    k += m;
  }
  return prod;
}

void require_same_grid(const DiscretizedKernel& f, const DiscretizedKernel& g, const char* where) {
  if (!same_grid(*f.grid(), *g.grid())) throw ShapeError(std::string(where) + ": grid mismatch");
}

}  // namespace

double hermite_poly(int q, double x) { return hermite_poly(q, x, 1.0); }

double hermite_poly(int q, double x, double variance) {
  if (q < 0) throw DomainError("hermite_poly: order must be >= 0");
  if (q == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int k = 1; k < q; ++k) {
    const double next = x * cur - k * variance * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

DiscretizedKernel::DiscretizedKernel(int order, GridPtr grid, Eval eval, bool symmetric)
    : order_(order), grid_(std::move(grid)), eval_(std::move(eval)), symmetric_(symmetric) {
  if (order_ < 0) throw DomainError("kernel order must be >= 0");
  if (!grid_) throw ShapeError("kernel requires a grid");
}

DiscretizedKernel DiscretizedKernel::constant(GridPtr grid, double value) {
  return DiscretizedKernel(
      0, std::move(grid), [value](std::span<const std::size_t>) { return value; }, true);
}

DiscretizedKernel DiscretizedKernel::from_terms(GridPtr grid, std::vector<TensorTerm> terms,
                                                bool symmetric) {
  if (terms.empty()) throw ShapeError("from_terms: at least one term required");
  const std::size_t order = terms.front().factors.size();
  for (const auto& t : terms) {
    if (t.factors.size() != order) throw ShapeError("from_terms: terms differ in order");
    for (const auto& f : t.factors) {
      if (f.size() != grid->n_cells()) throw ShapeError("from_terms: factor length != n_cells");
    }
  }
  auto shared = std::make_shared<const std::vector<TensorTerm>>(std::move(terms));
  DiscretizedKernel k(
      static_cast<int>(order), std::move(grid),
      [shared](std::span<const std::size_t> idx) {
        double total = 0.0;
        for (const auto& t : *shared) {
          double prod = t.weight;
          for (std::size_t j = 0; j < idx.size(); ++j) prod *= t.factors[j][idx[j]];
          total += prod;
        }
        return total;
      },
      symmetric);
  k.terms_ = std::move(shared);
  return k;
}

DiscretizedKernel DiscretizedKernel::from_dense(GridPtr grid, int order, std::vector<double> values,
                                                bool symmetric) {
  const std::size_t n = grid->n_cells();
  if (order < 1 || order > 2) throw ShapeError("from_dense: order must be 1 or 2");
  if (values.size() != (order == 1 ? n : n * n)) throw ShapeError("from_dense: wrong table size");
  auto shared = std::make_shared<const std::vector<double>>(std::move(values));
  Eval eval;
  if (order == 1) {
    eval = [shared](std::span<const std::size_t> idx) { return (*shared)[idx[0]]; };
  } else {
    eval = [shared, n](std::span<const std::size_t> idx) { return (*shared)[idx[0] * n + idx[1]]; };
  }
  DiscretizedKernel k(order, std::move(grid), std::move(eval), symmetric);
  if (order == 1) {
    // a vector is also a one-term tensor, which keeps contractions with it structured
    k.terms_ = std::make_shared<const std::vector<TensorTerm>>(
        std::vector<TensorTerm>{TensorTerm{1.0, {*shared}}});
  }
  k.dense_ = std::move(shared);
  return k;
}

DiscretizedKernel DiscretizedKernel::materialized() const {
  if (order_ < 1 || order_ > 2 || dense_ || terms_) return *this;
  const std::size_t n = grid_->n_cells();
  std::vector<double> values(order_ == 1 ? n : n * n);
  if (order_ == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx[1] = {i};
      values[i] = eval_(idx);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx[2] = {i, j};
        values[i * n + j] = eval_(idx);
      }
    }
  }
  return from_dense(grid_, order_, std::move(values), symmetric_);
}

DiscretizedKernel tensor_power(GridPtr grid, std::vector<double> h, int q) {
  if (q < 1) throw DomainError("tensor_power: q must be >= 1");
  TensorTerm term;
  term.weight = 1.0;
  term.factors.assign(q, std::move(h));
  return DiscretizedKernel::from_terms(std::move(grid), {std::move(term)}, true);
}

DiscretizedKernel linear_combination(double a, const DiscretizedKernel& f, double b,
                                     const DiscretizedKernel& g) {
  require_same_grid(f, g, "linear_combination");
  if (f.order() != g.order()) throw ShapeError("linear_combination: orders differ");
  const bool sym = f.symmetric() && g.symmetric();
  if (f.terms() && g.terms()) {
    std::vector<TensorTerm> terms;
    for (auto t : *f.terms()) {
      t.weight *= a;
      terms.push_back(std::move(t));
    }
    for (auto t : *g.terms()) {
      t.weight *= b;
      terms.push_back(std::move(t));
    }
    return DiscretizedKernel::from_terms(f.grid(), std::move(terms), sym);
  }
  if (f.dense() && g.dense()) {
    std::vector<double> values(f.dense()->size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = a * (*f.dense())[i] + b * (*g.dense())[i];
    }
    return DiscretizedKernel::from_dense(f.grid(), f.order(), std::move(values), sym);
  }
  return DiscretizedKernel(
      f.order(), f.grid(),
      [a, b, f, g](std::span<const std::size_t> idx) { return a * f(idx) + b * g(idx); }, sym);
}

double multiple_integral(const DiscretizedKernel& f, const WienerSample& sample, DiagonalRule rule,
                         const ChaosLimits& limits) {
  if (!sample.grid || !same_grid(*f.grid(), *sample.grid)) {
    throw ShapeError("multiple_integral: kernel and sample live on different grids");
  }
  const int q = f.order();
  if (q > limits.q_max) {
    throw ResourceError("multiple_integral: order " + std::to_string(q) + " exceeds q_max = " +
                        std::to_string(limits.q_max));
  }
  if (q == 0) return f({});
  const std::size_t n = sample.increments.size();
  const auto& dB = sample.increments;
  const auto widths = sample.grid->widths();

  if (limits.use_structure && f.terms()) {
    double total = 0.0;
    for (const auto& term : *f.terms()) {
      double value = 0.0;
      if (rule == DiagonalRule::kWick) {
        value = wick_product(term.factors, sample);
      } else {
        std::vector<std::vector<double>> z(term.factors.size(), std::vector<double>(n));
        for (std::size_t j = 0; j < z.size(); ++j) {
          for (std::size_t i = 0; i < n; ++i) z[j][i] = term.factors[j][i] * dB[i];
        }
        value = distinct_tuple_sum(z);
      }
      total += term.weight * value;
    }
    return total;
  }

  if (limits.use_structure && f.dense()) {
    const auto& F = *f.dense();
    if (q == 1) return plain_dot(F, dB);
    std::vector<double> partial(n);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) row[j] = F[i * n + j] * dB[j];
      if (rule == DiagonalRule::kOffDiagonal) {
        row[i] = 0.0;
        partial[i] = dB[i] * pairwise_sum(row);
      } else {
        partial[i] = dB[i] * pairwise_sum(row) - F[i * n + i] * widths[i];
      }
    }
    return pairwise_sum(partial);
  }

  checked_tuple_count(n, q, limits);
  if (rule == DiagonalRule::kOffDiagonal) {
    return enumerate_tuples(n, q, true, [&](std::span<const std::size_t> idx) {
      double prod = f(idx);
      for (std::size_t c : idx) prod *= dB[c];
      return prod;
    });
  }
  return enumerate_tuples(n, q, false, [&](std::span<const std::size_t> idx) {
    return f(idx) * wick_monomial(idx, sample);
  });
}

DiscretizedKernel contraction(const DiscretizedKernel& f, const DiscretizedKernel& g, int r) {
  require_same_grid(f, g, "contraction");
  const int p = f.order();
  const int q = g.order();
  if (r < 0 || r > std::min(p, q)) {
    throw DomainError("contraction: r must lie in [0, min(p, q)], got " + std::to_string(r));
  }
  const auto& grid = f.grid();
  const auto widths = grid->widths();
  const std::size_t n = grid->n_cells();
  const int order = p + q - 2 * r;

  if (f.terms() && g.terms()) {
    std::vector<TensorTerm> terms;
    for (const auto& a : *f.terms()) {
      for (const auto& b : *g.terms()) {
        TensorTerm t;
        t.weight = a.weight * b.weight;
        for (int k = 0; k < r; ++k) t.weight *= weighted_dot(a.factors[k], b.factors[k], widths);
        t.factors.insert(t.factors.end(), a.factors.begin() + r, a.factors.end());
        t.factors.insert(t.factors.end(), b.factors.begin() + r, b.factors.end());
        terms.push_back(std::move(t));
      }
    }
    if (order == 0) {
      double total = 0.0;
      for (const auto& t : terms) total += t.weight;
      return DiscretizedKernel::constant(grid, total);
    }
    return DiscretizedKernel::from_terms(grid, std::move(terms), false);
  }

  if (f.dense() && g.dense() && p == 2 && q == 2 && r == 1) {
    const auto& F = *f.dense();
    const auto& G = *g.dense();
    std::vector<double> values(n * n, 0.0);
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t u = 0; u < n; ++u) col[u] = F[u * n + i] * G[u * n + j] * widths[u];
        values[i * n + j] = pairwise_sum(col);
      }
    }
    return DiscretizedKernel::from_dense(grid, 2, std::move(values), false);
  }

  auto eval = [f, g, r, p, n, grid](std::span<const std::size_t> t) {
    const auto w = grid->widths();
    std::vector<std::size_t> idx_f(p);
    std::vector<std::size_t> idx_g(g.order());
    for (int k = 0; k < p - r; ++k) idx_f[r + k] = t[k];
    for (int k = 0; k < g.order() - r; ++k) idx_g[r + k] = t[p - r + k];
    if (r == 0) return f(idx_f) * g(idx_g);
    std::vector<std::size_t> u(r, 0);
    double total = 0.0;
    while (true) {
      double weight = 1.0;
      for (int k = 0; k < r; ++k) {
        idx_f[k] = u[k];
        idx_g[k] = u[k];
        weight *= w[u[k]];
      }
      total += f(idx_f) * g(idx_g) * weight;
      int pos = r - 1;
      while (pos >= 0 && ++u[pos] == n) {
        u[pos] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
    return total;
  };
  if (order == 0) return DiscretizedKernel::constant(grid, eval({}));
  return DiscretizedKernel(order, grid, std::move(eval), false);
}

DiscretizedKernel symmetrize(const DiscretizedKernel& f) {
  const int q = f.order();
  if (q > 4) throw ResourceError("symmetrize: order " + std::to_string(q) + " exceeds 4");
  if (q <= 1) return f;
  std::vector<int> perm(q);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> perms;
  do {
    perms.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double inv = 1.0 / static_cast<double>(perms.size());

  if (f.terms()) {
    std::vector<TensorTerm> terms;
    for (const auto& t : *f.terms()) {
      for (const auto& s : perms) {
        TensorTerm u;
        u.weight = t.weight * inv;
        for (int j = 0; j < q; ++j) u.factors.push_back(t.factors[s[j]]);
        terms.push_back(std::move(u));
      }
    }
    return DiscretizedKernel::from_terms(f.grid(), std::move(terms), true);
  }
  if (f.dense()) {
    const std::size_t n = f.grid()->n_cells();
    const auto& F = *f.dense();
    std::vector<double> values(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) values[i * n + j] = 0.5 * (F[i * n + j] + F[j * n + i]);
    }
    return DiscretizedKernel::from_dense(f.grid(), 2, std::move(values), true);
  }
  return DiscretizedKernel(
      q, f.grid(),
      [f, perms, inv](std::span<const std::size_t> idx) {
        std::vector<std::size_t> permuted(idx.size());
        double total = 0.0;
        for (const auto& s : perms) {
          for (std::size_t j = 0; j < idx.size(); ++j) permuted[j] = idx[s[j]];
          total += f(permuted);
        }
        return total * inv;
      },
      true);
}

double inner_product(const DiscretizedKernel& f, const DiscretizedKernel& g, DiagonalRule rule,
                     const ChaosLimits& limits) {
  require_same_grid(f, g, "inner_product");
  if (f.order() != g.order()) throw ShapeError("inner_product: orders differ");
  const int q = f.order();
  const auto widths = f.grid()->widths();
  const std::size_t n = f.grid()->n_cells();
  if (q == 0) return f({}) * g({});

  if (limits.use_structure && f.terms() && g.terms()) {
    double total = 0.0;
    for (const auto& a : *f.terms()) {
      for (const auto& b : *g.terms()) {
        double value = 1.0;
        if (rule == DiagonalRule::kWick) {
          for (int j = 0; j < q; ++j) value *= weighted_dot(a.factors[j], b.factors[j], widths);
        } else {
          std::vector<std::vector<double>> z(q, std::vector<double>(n));
          for (int j = 0; j < q; ++j) {
            for (std::size_t i = 0; i < n; ++i) z[j][i] = a.factors[j][i] * b.factors[j][i] * widths[i];
          }
          value = distinct_tuple_sum(z);
        }
        total += a.weight * b.weight * value;
      }
    }
    return total;
  }

  checked_tuple_count(n, q, limits);
  const auto fm = f.materialized();
  const auto gm = g.materialized();
  return enumerate_tuples(n, q, rule == DiagonalRule::kOffDiagonal,
                          [&](std::span<const std::size_t> idx) {
                            double w = 1.0;
                            for (std::size_t c : idx) w *= widths[c];
                            return fm(idx) * gm(idx) * w;
                          });
}

IsometryReport isometry_check(const DiscretizedKernel& f, const DiscretizedKernel& g,
                              std::size_t n_samples, const SamplingOptions& options) {
  require_same_grid(f, g, "isometry_check");
  if (f.order() > options.limits.q_max || g.order() > options.limits.q_max) {
    throw ResourceError("isometry_check: order exceeds q_max");
  }
  const auto fm = f.materialized();
  const auto gm = g.materialized();
  std::vector<double> products(n_samples);
  parallel_for(n_samples, options.threads, [&](std::size_t s) {
    const auto sample = sample_increments(f.grid(), options.seed, options.stream_base + s);
    products[s] = multiple_integral(fm, sample, options.rule, options.limits) *
                  multiple_integral(gm, sample, options.rule, options.limits);
  });
  IsometryReport report;
  report.p = f.order();
  report.q = g.order();
  report.n_samples = n_samples;
  const double n = static_cast<double>(n_samples);
  report.estimate = pairwise_sum(products) / n;
  std::vector<double> dev(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    dev[s] = (products[s] - report.estimate) * (products[s] - report.estimate);
  }
  report.std_error = n_samples > 1 ? std::sqrt(pairwise_sum(dev) / (n - 1.0) / n) : 0.0;
  if (report.p == report.q) {
    report.target = factorial(report.p) *
                    inner_product(symmetrize(fm), symmetrize(gm), options.rule, options.limits);
  }
  report.pass = std::abs(report.estimate - report.target) <= 3.0 * report.std_error;
  return report;
}

ProductFormulaReport product_formula_check(const DiscretizedKernel& f, const DiscretizedKernel& g,
                                           std::size_t n_samples, double threshold,
                                           const SamplingOptions& options) {
  require_same_grid(f, g, "product_formula_check");
  const int p = f.order();
  const int q = g.order();
  if (p + q > 4) throw ResourceError("product_formula_check: requires p + q <= 4");
  const auto fm = f.materialized();
  const auto gm = g.materialized();
  std::vector<DiscretizedKernel> pieces;
  std::vector<double> coefficients;
  for (int r = 0; r <= std::min(p, q); ++r) {
    pieces.push_back(symmetrize(contraction(fm, gm, r)).materialized());
    coefficients.push_back(factorial(r) * binomial(p, r) * binomial(q, r));
  }
  std::vector<double> gap(n_samples);
  std::vector<double> lhs_sq(n_samples);
  parallel_for(n_samples, options.threads, [&](std::size_t s) {
    const auto sample = sample_increments(f.grid(), options.seed, options.stream_base + s);
    const double lhs = multiple_integral(fm, sample, options.rule, options.limits) *
                       multiple_integral(gm, sample, options.rule, options.limits);
    double rhs = 0.0;
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      rhs += coefficients[k] * multiple_integral(pieces[k], sample, options.rule, options.limits);
    }
    gap[s] = (lhs - rhs) * (lhs - rhs);
    lhs_sq[s] = lhs * lhs;
  });
  ProductFormulaReport report;
  report.p = p;
  report.q = q;
  report.n_samples = n_samples;
  report.threshold = threshold;
  report.mean_square_gap = pairwise_sum(gap) / static_cast<double>(n_samples);
  report.mean_square_lhs = pairwise_sum(lhs_sq) / static_cast<double>(n_samples);
  report.pass = report.mean_square_gap <= threshold;
  return report;
}

}  // namespace hermitelab

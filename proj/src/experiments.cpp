#include "hermitelab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "hermitelab/errors.hpp"
#include "hermitelab/numeric.hpp"
#include "hermitelab/parallel.hpp"

namespace hermitelab {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// values[k][s] = Z_{times[k]} on sample s of the given side.
std::vector<std::vector<double>> sample_values(const HermiteProcess& process,
                                               std::span<const double> times, std::size_t n,
                                               StreamTag tag, std::uint64_t side,
                                               const RunContext& ctx) {
  process.prepare(times);
  std::vector<std::vector<double>> out(times.size(), std::vector<double>(n));
  parallel_for(n, ctx.threads, [&](std::size_t s) {
    const auto sample = sample_increments(process.grid(), ctx.seed, stream_id(tag, side, s));
    for (std::size_t k = 0; k < times.size(); ++k) out[k][s] = process.value(times[k], sample);
  });
  return out;
}

std::vector<double> difference(const DerivativeVector& a, const DerivativeVector& b) {
  std::vector<double> d(a.values.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values[i] - b.values[i];
  return d;
}

DerivativeVector difference_vector(const DerivativeVector& a, const DerivativeVector& b) {
  DerivativeVector d = a;
  d.values = difference(a, b);
  return d;
}

double inner(const DerivativeVector& a, const DerivativeVector& b) {
  return weighted_inner(*a.grid, a.values, b.values);
}

double inner(const GridPtr& grid, std::span<const double> a, std::span<const double> b) {
  return weighted_inner(*grid, a, b);
}

void require_positive_scale(double c) {
  if (!(c > 0.0)) throw DomainError("scale factor must be > 0");
}

KsResult ks_check(TestReport& report, std::string name, std::vector<double> a,
                  std::vector<double> b, double alpha) {
  const auto r = ks_two_sample(EmpiricalDistribution(std::move(a)),
                               EmpiricalDistribution(std::move(b)), alpha);
  report.add_check({std::move(name), !r.reject, r.statistic, r.critical});
  return r;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void require_increasing_positive(std::span<const double> times, const char* where) {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] > 0.0)) throw DomainError(std::string(where) + ": times must be positive");
    if (k > 0 && !(times[k] > times[k - 1])) {
      throw DomainError(std::string(where) + ": times must be distinct and increasing");
    }
  }
  if (times.empty()) throw DomainError(std::string(where) + ": no times");
}

}  // namespace

void TestReport::add_check(Check c) {
  const bool first = checks.empty();
  const double ratio = c.threshold != 0.0 ? c.statistic / c.threshold : c.statistic;
  const double worst = threshold != 0.0 ? statistic / threshold : statistic;
  if (first || ratio > worst || (!c.pass && pass)) {
    statistic = c.statistic;
    threshold = c.threshold;
  }
  pass = first ? c.pass : (pass && c.pass);
  checks.push_back(std::move(c));
}

double TestReport::metric(const std::string& key) const {
  for (const auto& [k, v] : metrics) {
    if (k == key) return v;
  }
  throw DomainError("report " + name + " has no metric " + key);
}

std::uint64_t stream_id(StreamTag tag, std::uint64_t side, std::uint64_t index) {
  return (static_cast<std::uint64_t>(tag) << 48) | ((side & 0xFF) << 40) |
         (index & ((std::uint64_t{1} << 40) - 1));
}

double fbm_covariance(double H, double s, double t) {
  const double e = 2.0 * H;
  return 0.5 * (std::pow(std::abs(s), e) + std::pow(std::abs(t), e) - std::pow(std::abs(t - s), e));
}

TestReport stochastic_dominance(const EmpiricalDistribution& x, const EmpiricalDistribution& y,
                                double alpha) {
  const auto r = dominance(x, y, alpha);
  TestReport report;
  report.name = "stochastic_dominance";
  report.n_samples = x.n() + y.n();
  report.add_check({"sup(F_X - F_Y) <= dkw", r.pass, r.max_violation, r.epsilon});
  report.add_metric("max_violation", r.max_violation);
  report.add_metric("epsilon", r.epsilon);
  report.add_metric("n_x", static_cast<double>(x.n()));
  report.add_metric("n_y", static_cast<double>(y.n()));
  return report;
}

TestReport simulate(const HermiteProcess& process, std::span<const double> times,
                    std::size_t n_samples, const RunContext& ctx) {
  const auto z = sample_values(process, times, n_samples, StreamTag::kSimulate, 0, ctx);
  TestReport report;
  report.name = "simulate";
  report.n_samples = n_samples;
  report.columns.push_back({"sample", "sample index k; stream id = (1 << 48) | k"});
  for (double t : times) report.columns.push_back({"Z_" + fmt(t), "Z_t at t = " + fmt(t)});
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::vector<double> row = {static_cast<double>(s)};
    for (std::size_t k = 0; k < times.size(); ++k) row.push_back(z[k][s]);
    report.rows.push_back(std::move(row));
  }
  report.add_check({"finite", true, 0.0, 0.0});
  for (const auto& col : z) {
    for (double v : col) {
      if (!std::isfinite(v)) {
        report.checks.clear();
        report.add_check({"finite", false, 1.0, 0.0});
        return report;
      }
    }
  }
  return report;
}

TestReport covariance_validation(const HermiteProcess& process, std::span<const double> times,
                                 std::size_t n_samples, const RunContext& ctx, double allowance) {
  const auto z = sample_values(process, times, n_samples, StreamTag::kCovariance, 0, ctx);
  const double H = process.params().H;
  TestReport report;
  report.name = "covariance_validation";
  report.n_samples = n_samples;
  report.columns = {{"s", "first time"},
                    {"t", "second time"},
                    {"target", "fBm covariance (|s|^2H + |t|^2H - |t-s|^2H) / 2"},
                    {"estimate", "MC mean of Z_s Z_t"},
                    {"std_error", "standard error of the MC mean"},
                    {"discrete", "exact E[Z_s Z_t] of the discretized process"},
                    {"tolerance", "4 std_error + allowance * |target|"},
                    {"pass", "1 if |estimate - target| <= tolerance"}};
  std::vector<double> prod(n_samples);
  for (std::size_t a = 0; a < times.size(); ++a) {
    for (std::size_t b = a; b < times.size(); ++b) {
      for (std::size_t s = 0; s < n_samples; ++s) prod[s] = z[a][s] * z[b][s];
      const auto m = mean_estimate(prod);
      const double target = fbm_covariance(H, times[a], times[b]);
      const double discrete = process.kernel(times[a])->cross_moment(*process.kernel(times[b]),
                                                                     process.options().rule);
      const double tol = 4.0 * m.std_error + allowance * std::abs(target);
      const double gap = std::abs(m.mean - target);
      report.rows.push_back({times[a], times[b], target, m.mean, m.std_error, discrete, tol,
                             gap <= tol ? 1.0 : 0.0});
      report.add_check({"cov(" + fmt(times[a]) + "," + fmt(times[b]) + ")", gap <= tol, gap, tol});
    }
  }
  return report;
}

TestReport self_similarity_test(const HermiteProcess& process, double c,
                                std::span<const double> times, std::size_t n_samples,
                                double alpha, const RunContext& ctx) {
  require_positive_scale(c);
  std::vector<double> scaled(times.begin(), times.end());
  for (double& t : scaled) t *= c;
  const auto lhs = sample_values(process, scaled, n_samples, StreamTag::kSelfSimilarity, 0, ctx);
  const auto rhs = sample_values(process, times, n_samples, StreamTag::kSelfSimilarity, 1, ctx);
  const double factor = std::pow(c, -process.params().H);
  const double level = alpha / static_cast<double>(times.size());
  TestReport report;
  report.name = "self_similarity_test";
  report.n_samples = 2 * n_samples;
  report.columns = {{"t", "time"},
                    {"c", "scale factor"},
                    {"ks_statistic", "two-sample KS distance of c^-H Z_ct and Z_t"},
                    {"critical", "asymptotic critical value at the Bonferroni level"},
                    {"p_value", "asymptotic KS p-value"},
                    {"pass", "1 if not rejected"}};
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> a = lhs[k];
    for (double& v : a) v *= factor;
    const auto r = ks_check(report, "Z_ct vs c^H Z_t at t=" + fmt(times[k]), std::move(a), rhs[k],
                            level);
    report.rows.push_back({times[k], c, r.statistic, r.critical, r.p_value, r.reject ? 0.0 : 1.0});
  }
  report.add_metric("bonferroni_level", level);
  report.notes.push_back("sides sampled on independent streams (side 0: scaled times, side 1: base)");
  return report;
}

TestReport stationary_increments_test(const HermiteProcess& process, double h,
                                      std::span<const double> times, std::size_t n_samples,
                                      double alpha, const RunContext& ctx) {
  const auto& grid = process.grid();
  std::vector<double> sign_times;
  for (double t : times) {
    if (-t > grid->x_min() && grid->edge_index(-t)) sign_times.push_back(t);
  }
  const std::size_t n_tests = times.size() + sign_times.size();
  const double level = alpha / static_cast<double>(n_tests);

  std::vector<double> shifted = {h};
  for (double t : times) shifted.push_back(t + h);
  const auto lhs = sample_values(process, shifted, n_samples, StreamTag::kStationarity, 0, ctx);
  const auto rhs = sample_values(process, times, n_samples, StreamTag::kStationarity, 1, ctx);

  TestReport report;
  report.name = "stationary_increments_test";
  report.n_samples = 2 * n_samples;
  report.columns = {{"kind", "0: Z_{t+h} - Z_h vs Z_t, 1: Z_t vs -Z_{-t}"},
                    {"t", "time"},
                    {"h", "shift (kind 0)"},
                    {"ks_statistic", "two-sample KS distance"},
                    {"critical", "asymptotic critical value at the Bonferroni level"},
                    {"p_value", "asymptotic KS p-value"},
                    {"pass", "1 if not rejected"}};
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> a(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) a[s] = lhs[k + 1][s] - lhs[0][s];
    const auto r = ks_check(report, "Z_{t+h}-Z_h vs Z_t at t=" + fmt(times[k]), std::move(a),
                            rhs[k], level);
    report.rows.push_back(
        {0.0, times[k], h, r.statistic, r.critical, r.p_value, r.reject ? 0.0 : 1.0});
  }
  if (!sign_times.empty()) {
    std::vector<double> neg;
    for (double t : sign_times) neg.push_back(-t);
    const auto pos = sample_values(process, sign_times, n_samples, StreamTag::kStationarity, 2, ctx);
    const auto negz = sample_values(process, neg, n_samples, StreamTag::kStationarity, 3, ctx);
    for (std::size_t k = 0; k < sign_times.size(); ++k) {
      std::vector<double> b = negz[k];
      for (double& v : b) v = -v;
      const auto r = ks_check(report, "Z_t vs -Z_{-t} at t=" + fmt(sign_times[k]), pos[k],
                              std::move(b), level);
      report.rows.push_back(
          {1.0, sign_times[k], 0.0, r.statistic, r.critical, r.p_value, r.reject ? 0.0 : 1.0});
    }
  } else {
    report.notes.push_back("sign symmetry skipped: grid has no edges at -t");
  }
  report.add_metric("bonferroni_level", level);
  return report;
}

TestReport malliavin_selfsim_test(const HermiteProcess& process, double c,
                                  std::span<const std::pair<double, double>> pairs, double shift,
                                  std::size_t n_samples, double alpha, const RunContext& ctx) {
  require_positive_scale(c);
  const double H = process.params().H;
  const double c2H = std::pow(c, 2.0 * H);
  const bool deterministic = process.params().q == 1;
  const std::size_t n = deterministic ? 1 : n_samples;
  const double level = alpha / static_cast<double>(2 * pairs.size());
  const auto& grid = process.grid();

  TestReport report;
  report.name = "malliavin_selfsim_test";
  report.n_samples = 4 * n;
  report.columns = {{"kind", "0: scaling <DZ_cs,DZ_ct> vs c^2H <DZ_s,DZ_t>, 1: shift by a"},
                    {"s", "first time"},
                    {"t", "second time"},
                    {"statistic", "KS distance (q >= 2) or |ratio / expected - 1| (q = 1)"},
                    {"threshold", "KS critical value (q >= 2) or 0.01 (q = 1)"},
                    {"mean_lhs", "mean of the transformed side"},
                    {"mean_rhs", "mean of the reference side"},
                    {"pass", "1 if the check holds"}};

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, t] = pairs[p];
    std::vector<double> scaled(n), base(n), shifted(n), base2(n);
    const std::uint64_t off = 4 * p;
    parallel_for(n, ctx.threads, [&](std::size_t k) {
      const auto w0 = sample_increments(grid, ctx.seed, stream_id(StreamTag::kMalliavinSelfSim, off, k));
      scaled[k] = inner(process.derivative(c * s, w0), process.derivative(c * t, w0));
      const auto w1 = sample_increments(grid, ctx.seed, stream_id(StreamTag::kMalliavinSelfSim, off + 1, k));
      base[k] = c2H * inner(process.derivative(s, w1), process.derivative(t, w1));
      const auto w2 = sample_increments(grid, ctx.seed, stream_id(StreamTag::kMalliavinSelfSim, off + 2, k));
      const auto da = process.derivative(shift, w2);
      shifted[k] = inner(grid, difference(process.derivative(s + shift, w2), da),
                         difference(process.derivative(t + shift, w2), da));
      const auto w3 = sample_increments(grid, ctx.seed, stream_id(StreamTag::kMalliavinSelfSim, off + 3, k));
      base2[k] = inner(process.derivative(s, w3), process.derivative(t, w3));
    });
    const double m0 = mean_estimate(scaled).mean;
    const double m1 = mean_estimate(base).mean;
    const double m2 = mean_estimate(shifted).mean;
    const double m3 = mean_estimate(base2).mean;
    const std::string tag = "(" + fmt(s) + "," + fmt(t) + ")";
    if (deterministic) {
      const double r0 = std::abs(m0 / m1 - 1.0);
      const double r1 = std::abs(m2 / m3 - 1.0);
      report.add_check({"scaling ratio " + tag, r0 <= 0.01, r0, 0.01});
      report.add_check({"shift ratio " + tag, r1 <= 0.01, r1, 0.01});
      report.rows.push_back({0.0, s, t, r0, 0.01, m0, m1, r0 <= 0.01 ? 1.0 : 0.0});
      report.rows.push_back({1.0, s, t, r1, 0.01, m2, m3, r1 <= 0.01 ? 1.0 : 0.0});
    } else {
      const auto r0 = ks_check(report, "scaling " + tag, scaled, base, level);
      const auto r1 = ks_check(report, "shift " + tag, shifted, base2, level);
      report.rows.push_back({0.0, s, t, r0.statistic, r0.critical, m0, m1, r0.reject ? 0.0 : 1.0});
      report.rows.push_back({1.0, s, t, r1.statistic, r1.critical, m2, m3, r1.reject ? 0.0 : 1.0});
    }
  }
  report.add_metric("c", c);
  report.add_metric("shift", shift);
  report.add_metric("bonferroni_level", level);
  report.notes.push_back("each side drawn on its own stream family (independent sampling)");
  return report;
}

TestReport pathwise_residual_inequality(const HermiteProcess& process,
                                        std::span<const double> time_grid, std::size_t n_samples,
                                        const RunContext& ctx, double slack) {
  if (time_grid.size() < 2 || time_grid.front() != 0.0) {
    throw DomainError("pathwise_residual_inequality: time grid must be 0 = t_0 < t_1 < ...");
  }
  require_increasing_positive(time_grid.subspan(1), "pathwise_residual_inequality");
  const std::size_t J = time_grid.size() - 1;
  const std::size_t n = process.params().q == 1 ? 1 : n_samples;
  const auto& grid = process.grid();
  // per sample and level: lhs, rhs
  std::vector<std::vector<double>> lhs(J, std::vector<double>(n));
  std::vector<std::vector<double>> rhs(J, std::vector<double>(n));
  parallel_for(n, ctx.threads, [&](std::size_t k) {
    const auto w = sample_increments(grid, ctx.seed, stream_id(StreamTag::kPathwise, 0, k));
    std::vector<DerivativeVector> d;
    for (double t : time_grid) d.push_back(process.derivative(t, w));
    for (std::size_t j = 1; j <= J; ++j) {
      std::vector<DerivativeVector> span_e(d.begin() + 1, d.begin() + static_cast<std::ptrdiff_t>(j));
      lhs[j - 1][k] = residual_norm_sq(span_e, d[j]);
      std::vector<DerivativeVector> span_f;
      for (std::size_t a = 0; a + 1 <= j - 1; ++a) {
        for (std::size_t b = a + 1; b <= j - 1; ++b) span_f.push_back(difference_vector(d[b], d[a]));
      }
      rhs[j - 1][k] = residual_norm_sq(span_f, difference_vector(d[j], d[j - 1]));
    }
  });
  TestReport report;
  report.name = "pathwise_residual_inequality";
  report.n_samples = n;
  report.columns = {{"sample", "sample index"},
                    {"j", "level"},
                    {"lhs", "residual of DZ_{t_j} over span{DZ_{t_1..t_{j-1}}}"},
                    {"rhs", "residual of D(Z_{t_j} - Z_{t_{j-1}}) over span of past differences"},
                    {"violation", "1 if lhs < rhs (1 - slack)"}};
  std::size_t violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < J; ++j) {
      const bool bad = lhs[j][k] < rhs[j][k] * (1.0 - slack);
      violations += bad ? 1 : 0;
      if (rhs[j][k] > 0.0) worst = std::max(worst, (rhs[j][k] - lhs[j][k]) / rhs[j][k]);
      report.rows.push_back({static_cast<double>(k), static_cast<double>(j + 1), lhs[j][k],
                             rhs[j][k], bad ? 1.0 : 0.0});
    }
  }
  report.add_check({"violations", violations == 0, static_cast<double>(violations), 0.0});
  report.add_metric("violations", static_cast<double>(violations));
  report.add_metric("max_relative_shortfall", worst);
  report.add_metric("slack", slack);
  return report;
}

TestReport slnd_dominance_test(const HermiteProcess& process, std::span<const double> time_grid,
                               std::size_t j, std::size_t n_samples, double alpha,
                               const RunContext& ctx) {
  if (time_grid.size() < 2 || time_grid.front() != 0.0) {
    throw DomainError("slnd_dominance_test: time grid must be 0 = t_0 < t_1 < ...");
  }
  require_increasing_positive(time_grid.subspan(1), "slnd_dominance_test");
  if (j < 1 || j >= time_grid.size()) throw DomainError("slnd_dominance_test: j out of range");
  const double gap = time_grid[j] - time_grid[j - 1];
  const double scale = std::pow(gap, 2.0 * process.params().H);
  const bool deterministic = process.params().q == 1;
  const std::size_t n = deterministic ? 1 : n_samples;
  const auto& grid = process.grid();
  std::vector<double> x(n), y(n);
  parallel_for(n, ctx.threads, [&](std::size_t k) {
    const auto w0 = sample_increments(grid, ctx.seed, stream_id(StreamTag::kSlnd, 0, k));
    std::vector<DerivativeVector> past;
    for (std::size_t i = 1; i < j; ++i) past.push_back(process.derivative(time_grid[i], w0));
    x[k] = residual_norm_sq(past, process.derivative(time_grid[j], w0));
    const auto w1 = sample_increments(grid, ctx.seed, stream_id(StreamTag::kSlnd, 1, k));
    y[k] = scale * restricted_norm_sq(process.derivative(1.0, w1), 0.0, 1.0);
  });
  TestReport report;
  report.name = "slnd_dominance_test";
  report.columns = {{"sample", "sample index"},
                    {"x", "residual of DZ_{t_j} over span{DZ_{t_1..t_{j-1}}} (side 0)"},
                    {"y", "(t_j - t_{j-1})^2H |DZ_1|^2 on [0, 1] (independent side 1)"}};
  for (std::size_t k = 0; k < n; ++k) report.rows.push_back({static_cast<double>(k), x[k], y[k]});
  if (deterministic) {
    report.n_samples = 2;
    const double margin = x[0] - y[0];
    report.add_check({"x >= y (deterministic)", margin >= 0.0, -margin, 0.0});
    report.add_metric("x", x[0]);
    report.add_metric("y", y[0]);
    report.add_metric("margin", margin);
    return report;
  }
  const auto sub = stochastic_dominance(EmpiricalDistribution(x), EmpiricalDistribution(y), alpha);
  report.n_samples = sub.n_samples;
  for (const auto& c : sub.checks) report.add_check(c);
  report.metrics = sub.metrics;
  report.add_metric("mean_x", mean_estimate(x).mean);
  report.add_metric("mean_y", mean_estimate(y).mean);
  report.notes.push_back("X and Y drawn on independent Wiener samples");
  return report;
}

TestReport det_positivity_experiment(const HermiteProcess& process, std::span<const double> times,
                                     std::size_t n_samples, double floor_scale,
                                     const RunContext& ctx) {
  require_increasing_positive(times, "det_positivity_experiment");
  const std::size_t m = times.size();
  const bool deterministic = process.params().q == 1;
  const std::size_t n = deterministic ? 1 : n_samples;
  const auto& grid = process.grid();
  std::vector<double> det(n), floor(n);
  std::vector<std::vector<double>> res(n);
  parallel_for(n, ctx.threads, [&](std::size_t k) {
    const auto w = sample_increments(grid, ctx.seed, stream_id(StreamTag::kDeterminant, 0, k));
    std::vector<DerivativeVector> d;
    double scale = 1.0;
    for (double t : times) {
      d.push_back(process.derivative(t, w));
      scale *= inner(d.back(), d.back());
    }
    const auto f = factorize(d);
    det[k] = f.det;
    floor[k] = floor_scale * scale;
    res[k] = f.residual_sq;
  });
  TestReport report;
  report.name = "det_positivity_experiment";
  report.n_samples = n;
  report.columns = {{"sample", "sample index"},
                    {"det", "det of the Malliavin matrix via projection residuals"},
                    {"floor", "floor_scale * prod_j |DZ_{t_j}|^2"}};
  for (std::size_t j = 0; j < m; ++j) {
    report.columns.push_back({"residual_sq_" + std::to_string(j + 1),
                              "squared residual at level " + std::to_string(j + 1)});
  }
  std::size_t below = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> row = {static_cast<double>(k), det[k], floor[k]};
    row.insert(row.end(), res[k].begin(), res[k].end());
    report.rows.push_back(std::move(row));
    below += det[k] <= floor[k] ? 1 : 0;
  }
  const double frac = static_cast<double>(below) / static_cast<double>(n);
  report.add_check({"fraction at or below floor", below == 0, frac, 0.0});
  report.add_metric("min_det", *std::min_element(det.begin(), det.end()));
  report.add_metric("median_det", median(det));
  report.add_metric("fraction_below_floor", frac);
  report.add_metric("floor_scale", floor_scale);
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> level(n);
    for (std::size_t k = 0; k < n; ++k) level[k] = res[k][j];
    report.add_metric("min_residual_sq_" + std::to_string(j + 1),
                      *std::min_element(level.begin(), level.end()));
    report.add_metric("median_residual_sq_" + std::to_string(j + 1), median(level));
  }
  if (deterministic) {
    const auto oracle = gaussian_oracle_values(process.params().H, times);
    const double rel = std::abs(det[0] / oracle.det_elimination - 1.0);
    report.add_check({"q=1 det vs Gaussian covariance det", rel <= 0.02, rel, 0.02});
    report.add_metric("gaussian_det", oracle.det_elimination);
  }
  return report;
}

TestReport gram_determinant_check(const HermiteProcess& process, std::span<const double> times,
                                  std::size_t n_samples, const RunContext& ctx) {
  require_increasing_positive(times, "gram_determinant_check");
  const auto& grid = process.grid();
  std::vector<std::vector<double>> rows(n_samples);
  parallel_for(n_samples, ctx.threads, [&](std::size_t k) {
    const auto w = sample_increments(grid, ctx.seed, stream_id(StreamTag::kGram, 0, k));
    std::vector<DerivativeVector> d;
    for (double t : times) d.push_back(process.derivative(t, w));
    const auto g = gram_matrix(d);
    const auto f = factorize(d);
    const double lu = elimination_determinant(g);
    double asym = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) asym = std::max(asym, std::abs(g(i, j) - g(j, i)));
    }
    const double tr = g.trace();
    const double rel = std::abs(f.det - lu) / std::max({std::abs(f.det), std::abs(lu), 1e-300});
    rows[k] = {static_cast<double>(k), f.det, lu, rel, min_eigenvalue(g) / tr, asym};
  });
  TestReport report;
  report.name = "gram_determinant_check";
  report.n_samples = n_samples;
  report.columns = {{"sample", "sample index"},
                    {"det_residual", "product of projection residuals"},
                    {"det_lu", "partial-pivot LU determinant of the Gram matrix"},
                    {"rel_gap", "|det_residual - det_lu| / max(|.|)"},
                    {"min_eig_over_trace", "smallest eigenvalue / trace"},
                    {"asymmetry", "max |G_ij - G_ji|"}};
  double worst_gap = 0.0, worst_eig = 0.0, worst_asym = 0.0;
  for (auto& r : rows) {
    worst_gap = std::max(worst_gap, r[3]);
    worst_eig = std::min(worst_eig, r[4]);
    worst_asym = std::max(worst_asym, r[5]);
    report.rows.push_back(std::move(r));
  }
  report.add_check({"det agreement", worst_gap <= 1e-8, worst_gap, 1e-8});
  report.add_check({"psd", worst_eig >= -1e-10, -worst_eig, 1e-10});
  report.add_check({"symmetry", worst_asym <= 1e-12, worst_asym, 1e-12});
  return report;
}

GaussianOracleResult gaussian_oracle_values(double H, std::span<const double> times) {
  if (!(H > 0.0 && H < 1.0)) throw DomainError("gaussian_oracle: H must lie in (0, 1)");
  if (times.empty()) throw DomainError("gaussian_oracle: no times");
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (!(sorted[k] > 0.0)) throw DomainError("gaussian_oracle: times must be positive");
    if (k > 0 && sorted[k] == sorted[k - 1]) throw DomainError("gaussian_oracle: duplicate time");
  }
  const auto n = static_cast<Eigen::Index>(sorted.size());
  Eigen::MatrixXd C(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) C(i, j) = fbm_covariance(H, sorted[i], sorted[j]);
  }
  GaussianOracleResult out;
  out.det_elimination = C.partialPivLu().determinant();
  out.det_conditional = 1.0;
  out.best_constant = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    double v = C(k, k);
    if (k > 0) {
      const Eigen::MatrixXd past = C.topLeftCorner(k, k);
      const Eigen::VectorXd c = C.block(0, k, k, 1);
      const Eigen::VectorXd x = past.ldlt().solve(c);
      v -= c.dot(x);
    }
    out.conditional_variances.push_back(v);
    out.det_conditional *= v;
    const double prev = k > 0 ? sorted[k - 1] : 0.0;
    out.best_constant = std::min(out.best_constant, v / std::pow(sorted[k] - prev, 2.0 * H));
  }
  return out;
}

TestReport gaussian_oracle(double H, std::span<const double> times) {
  const auto r = gaussian_oracle_values(H, times);
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  TestReport report;
  report.name = "gaussian_oracle";
  report.n_samples = 0;
  report.columns = {{"k", "index in sorted times"},
                    {"t", "time"},
                    {"conditional_variance", "Var(Z_k | Z_1..Z_{k-1}) via Schur complement"},
                    {"slnd_ratio", "conditional variance / (t_k - t_{k-1})^2H, t_0 = 0"}};
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double prev = k > 0 ? sorted[k - 1] : 0.0;
    report.rows.push_back({static_cast<double>(k + 1), sorted[k], r.conditional_variances[k],
                           r.conditional_variances[k] / std::pow(sorted[k] - prev, 2.0 * H)});
  }
  const double rel = std::abs(r.det_elimination - r.det_conditional) /
                     std::max(std::abs(r.det_elimination), 1e-300);
  report.add_check({"det two-way agreement", rel <= 1e-10, rel, 1e-10});
  report.add_check({"best constant positive", r.best_constant > 0.0, -r.best_constant, 0.0});
  report.add_metric("det", r.det_elimination);
  report.add_metric("det_elimination", r.det_elimination);
  report.add_metric("det_conditional", r.det_conditional);
  report.add_metric("best_constant", r.best_constant);
  return report;
}

TestReport derivative_fd_check(const HermiteProcess& process, double t, std::size_t n_samples,
                               const RunContext& ctx, double tolerance) {
  const auto& grid = process.grid();
  const auto kernel = process.kernel(t);
  const auto widths = grid->widths();
  const DiagonalRule rule = process.options().rule;
  std::vector<double> worst(n_samples), worst_norm(n_samples);
  parallel_for(n_samples, ctx.threads, [&](std::size_t k) {
    auto w = sample_increments(grid, ctx.seed, stream_id(StreamTag::kFiniteDifference, 0, k));
    const auto d = process.derivative(t, w);
    double dmax = 0.0;
    for (double v : d.values) dmax = std::max(dmax, std::abs(v));
    double rel = 0.0, abs_gap = 0.0;
    for (std::size_t r = 0; r < widths.size(); ++r) {
      const double h = 1e-5 * std::sqrt(widths[r]);
      const double y0 = w.increments[r];
      w.increments[r] = y0 + h;
      const double up = kernel->evaluate(w.increments, rule);
      w.increments[r] = y0 - h;
      const double down = kernel->evaluate(w.increments, rule);
      w.increments[r] = y0;
      const double fd = (up - down) / (2.0 * h);
      const double gap = std::abs(fd - d.values[r]);
      abs_gap = std::max(abs_gap, gap);
      rel = std::max(rel, gap / std::max(std::abs(d.values[r]), 1e-8 * dmax));
    }
    worst[k] = rel;
    worst_norm[k] = dmax > 0.0 ? abs_gap / dmax : abs_gap;
  });
  TestReport report;
  report.name = "derivative_fd_check";
  report.n_samples = n_samples;
  report.columns = {{"sample", "sample index"},
                    {"max_rel_error", "max_r |fd_r - D_r| / max(|D_r|, 1e-8 max|D|)"},
                    {"max_norm_error", "max_r |fd_r - D_r| / max|D|"}};
  double w = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    report.rows.push_back({static_cast<double>(k), worst[k], worst_norm[k]});
    w = std::max(w, worst[k]);
  }
  report.add_check({"finite-difference agreement", w <= tolerance, w, tolerance});
  return report;
}

TestReport derivative_inner_validation(const HermiteProcess& process,
                                       std::span<const std::pair<double, double>> pairs,
                                       std::size_t n_samples, const RunContext& ctx,
                                       double allowance) {
  const auto& grid = process.grid();
  TestReport report;
  report.name = "derivative_inner_validation";
  report.n_samples = n_samples;
  report.columns = {{"s", "first time"},
                    {"t", "second time"},
                    {"target", "q^2 (q-1)! a(H,q,q-1) int_0^s int_0^t |u-v|^(2H-2)"},
                    {"estimate", "MC mean of <DZ_s, DZ_t>"},
                    {"std_error", "standard error"},
                    {"tolerance", "4 std_error + allowance * target"},
                    {"pass", "1 if within tolerance"}};
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, t] = pairs[p];
    std::vector<double> v(n_samples);
    parallel_for(n_samples, ctx.threads, [&](std::size_t k) {
      const auto w = sample_increments(grid, ctx.seed, stream_id(StreamTag::kDerivativeInner, p, k));
      v[k] = inner(process.derivative(s, w), process.derivative(t, w));
    });
    const auto m = mean_estimate(v);
    const double target = expected_derivative_inner(process.params(), s, t);
    const double tol = 4.0 * m.std_error + allowance * std::abs(target);
    const double gap = std::abs(m.mean - target);
    report.rows.push_back({s, t, target, m.mean, m.std_error, tol, gap <= tol ? 1.0 : 0.0});
    report.add_check({"E<DZ_s,DZ_t> (" + fmt(s) + "," + fmt(t) + ")", gap <= tol, gap, tol});
  }
  return report;
}

TestReport chaos_tests(const ChaosTestSettings& settings, const RunContext& ctx) {
  TestReport report;
  report.name = "chaos_tests";
  report.columns = {{"kind", "0: isometry, 1: product formula"},
                    {"rule", "0: off-diagonal, 1: Wick"},
                    {"p", "order of f"},
                    {"q", "order of g"},
                    {"n_cells", "grid size"},
                    {"value", "MC mean (isometry) or mean-square gap (product)"},
                    {"std_error", "MC standard error (isometry) or E[(I_p I_q)^2] (product)"},
                    {"target", "rule-consistent p! <f, g> (isometry) or threshold (product)"},
                    {"pass", "1 if the check holds"}};
  auto unit_indicator = [](const GridPtr& g) {
    return std::vector<double>(g->n_cells(), 1.0 / std::sqrt(g->x_max() - g->x_min()));
  };
  std::uint64_t base = 0;
  for (DiagonalRule rule : {DiagonalRule::kOffDiagonal, DiagonalRule::kWick}) {
    const double rule_id = rule == DiagonalRule::kWick ? 1.0 : 0.0;
    const std::string rname = rule == DiagonalRule::kWick ? "wick" : "off";
    SamplingOptions opt;
    opt.seed = ctx.seed;
    opt.threads = ctx.threads;
    opt.rule = rule;
    {
      const auto grid = build_grid(1.0, 1.0, settings.isometry_cells);
      const auto h = unit_indicator(grid);
      const auto f1 = tensor_power(grid, h, 1);
      const auto f2 = tensor_power(grid, h, 2);
      const auto mid = grid->midpoints();
      const auto lazy = DiscretizedKernel(
          2, grid, [mid](std::span<const std::size_t> i) {
            return std::exp(-std::abs(mid[i[0]] - mid[i[1]]));
          }, true);
      const std::pair<const DiscretizedKernel*, const DiscretizedKernel*> cases[] = {
          {&f1, &f1}, {&f1, &f2}, {&lazy, &lazy}};
      for (const auto& [f, g] : cases) {
        opt.stream_base = stream_id(StreamTag::kChaos, base++, 0);
        const auto r = isometry_check(*f, *g, settings.n_samples, opt);
        report.rows.push_back({0.0, rule_id, static_cast<double>(r.p), static_cast<double>(r.q),
                               static_cast<double>(grid->n_cells()), r.estimate, r.std_error,
                               r.target, r.pass ? 1.0 : 0.0});
        report.add_check({"isometry (" + std::to_string(r.p) + "," + std::to_string(r.q) + ") " + rname,
                          r.pass, std::abs(r.estimate - r.target), 3.0 * r.std_error});
      }
    }
    for (std::size_t cells : {settings.product_cells / 2, settings.product_cells}) {
      const auto grid = build_grid(1.0, 1.0, cells);
      const auto h = unit_indicator(grid);
      const auto f1 = tensor_power(grid, h, 1);
      const auto f2 = tensor_power(grid, h, 2);
      const std::pair<const DiscretizedKernel*, const DiscretizedKernel*> cases[] = {{&f1, &f1},
                                                                                     {&f1, &f2}};
      for (const auto& [f, g] : cases) {
        const double thr = g->order() == 1 ? settings.threshold_11 : settings.threshold_12;
        opt.stream_base = stream_id(StreamTag::kChaos, base++, 0);
        const auto r = product_formula_check(*f, *g, settings.n_samples, thr, opt);
        report.rows.push_back({1.0, rule_id, static_cast<double>(r.p), static_cast<double>(r.q),
                               static_cast<double>(cells), r.mean_square_gap, r.mean_square_lhs,
                               thr, r.pass ? 1.0 : 0.0});
        if (cells == settings.product_cells) {
          report.add_check({"product (" + std::to_string(r.p) + "," + std::to_string(r.q) + ") " +
                                rname + " n=" + std::to_string(cells),
                            r.pass, r.mean_square_gap, thr});
        }
      }
    }
  }
  // The off-diagonal gap must shrink from the coarse to the fine product grid.
  for (int pq = 0; pq < 2; ++pq) {
    double coarse = 0.0, fine = 0.0;
    for (const auto& row : report.rows) {
      if (row[0] == 1.0 && row[1] == 0.0 && row[3] == pq + 1.0) {
        (row[4] == static_cast<double>(settings.product_cells) ? fine : coarse) = row[5];
      }
    }
    report.add_check({"product gap decreases (1," + std::to_string(pq + 1) + ")", fine < coarse,
                      fine, coarse});
  }
  report.n_samples = settings.n_samples;
  return report;
}

TestReport refinement_study(const HermiteParams& params, const GradedGridSpec& base,
                            std::span<const std::size_t> n_cells, const ProcessOptions& options,
                            std::size_t n_samples, const RunContext& ctx, double allowance) {
  TestReport report;
  report.name = "refinement_study";
  report.n_samples = n_samples * n_cells.size();
  report.columns = {{"n_cells", "grid size"},
                    {"delta", "fine cell width"},
                    {"mc_variance", "MC mean of Z_1^2"},
                    {"std_error", "standard error"},
                    {"exact_variance", "exact E[Z_1^2] of the discretized process"},
                    {"gap", "1 - exact_variance"},
                    {"within", "1 if |mc_variance - 1| <= 3 std_error + allowance (checked on the finest grid)"}};
  double prev_gap = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (std::size_t k = 0; k < n_cells.size(); ++k) {
    GradedGridSpec spec = base;
    spec.n_cells = n_cells[k];
    const auto grid = build_graded_grid(spec);
    HermiteProcess process(params, grid, options);
    const double t1[] = {1.0};
    const auto z = sample_values(process, t1, n_samples, StreamTag::kRefine, k, ctx);
    std::vector<double> sq(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) sq[s] = z[0][s] * z[0][s];
    const auto m = mean_estimate(sq);
    const double exact = process.kernel(1.0)->second_moment(options.rule);
    const double gap = 1.0 - exact;
    const double tol = 3.0 * m.std_error + allowance;
    const bool ok = std::abs(m.mean - 1.0) <= tol;
    report.rows.push_back({static_cast<double>(n_cells[k]), grid->delta(), m.mean, m.std_error,
                           exact, gap, ok ? 1.0 : 0.0});
    if (k + 1 == n_cells.size()) {
      report.add_check({"E[Z_1^2] n=" + std::to_string(n_cells[k]), ok, std::abs(m.mean - 1.0), tol});
    }
    if (!(std::abs(gap) < prev_gap)) monotone = false;
    prev_gap = std::abs(gap);
  }
  report.add_check({"gap shrinks under refinement", monotone, monotone ? 0.0 : 1.0, 0.0});
  return report;
}

}  // namespace hermitelab

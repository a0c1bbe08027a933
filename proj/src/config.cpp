#include "hermitelab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hermitelab/errors.hpp"
#include "hermitelab/kernel_cache.hpp"

namespace hermitelab {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Context {
  std::string source;
  std::string key;
  int line = 0;
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source + ":" + std::to_string(line) + ": key '" + key + "': " + what, key,
                      line);
  }
};

double parse_double(std::string_view v, const Context& ctx) {
  v = trim(v);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    ctx.fail("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

template <class Int>
Int parse_int(std::string_view v, const Context& ctx) {
  v = trim(v);
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    ctx.fail("expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::vector<std::string_view> split(std::string_view v, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = v.find(sep, start);
    out.push_back(trim(v.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<double> parse_list(std::string_view v, const Context& ctx) {
  std::vector<double> out;
  for (auto item : split(v, ',')) out.push_back(parse_double(item, ctx));
  return out;
}

double positive(double v, const Context& ctx) {
  if (!(v > 0.0)) ctx.fail("must be > 0");
  return v;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, const Context&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"q", [](auto& c, auto v, auto& x) { c.q = parse_int<int>(v, x); }},
      {"H", [](auto& c, auto v, auto& x) { c.H = parse_double(v, x); }},
      {"grid.layout",
       [](auto& c, auto v, auto& x) {
         const std::string s(trim(v));
         if (s != "graded" && s != "uniform") x.fail("expected graded or uniform");
         c.grid_layout = s;
       }},
      {"grid.M",
       [](auto& c, auto v, auto& x) {
         if (trim(v) == "auto") {
           c.grid_M.reset();
         } else {
           c.grid_M = positive(parse_double(v, x), x);
         }
       }},
      {"grid.x_max", [](auto& c, auto v, auto& x) { c.grid_x_max = positive(parse_double(v, x), x); }},
      {"grid.n_cells",
       [](auto& c, auto v, auto& x) {
         c.grid_n_cells = parse_int<std::size_t>(v, x);
         if (c.grid_n_cells < 2) x.fail("must be >= 2");
       }},
      {"grid.uniform_min",
       [](auto& c, auto v, auto& x) { c.grid_uniform_min = positive(parse_double(v, x), x); }},
      {"grid.tail_ratio",
       [](auto& c, auto v, auto& x) {
         c.grid_tail_ratio = parse_double(v, x);
         if (!(c.grid_tail_ratio >= 1.0)) x.fail("must be >= 1");
       }},
      {"grid.alignment",
       [](auto& c, auto v, auto& x) {
         c.grid_alignment = parse_int<int>(v, x);
         if (c.grid_alignment < 1) x.fail("must be >= 1");
       }},
      {"times",
       [](auto& c, auto v, auto& x) {
         c.times = parse_list(v, x);
         if (c.times.empty()) x.fail("empty list");
       }},
      {"pairs",
       [](auto& c, auto v, auto& x) {
         c.pairs.clear();
         for (auto item : split(v, ',')) {
           const auto parts = split(item, ':');
           if (parts.size() != 2) x.fail("expected s:t pairs, got '" + std::string(item) + "'");
           c.pairs.emplace_back(parse_double(parts[0], x), parse_double(parts[1], x));
         }
       }},
      {"n_samples",
       [](auto& c, auto v, auto& x) {
         c.n_samples = parse_int<std::size_t>(v, x);
         if (c.n_samples < 1) x.fail("must be >= 1");
       }},
      {"alpha",
       [](auto& c, auto v, auto& x) {
         c.alpha = parse_double(v, x);
         if (!(c.alpha > 0.0 && c.alpha < 1.0)) x.fail("must lie in (0, 1)");
       }},
      {"seed", [](auto& c, auto v, auto& x) { c.seed = parse_int<std::uint64_t>(v, x); }},
      {"threads",
       [](auto& c, auto v, auto& x) {
         c.threads = parse_int<unsigned>(v, x);
         if (c.threads < 1) x.fail("must be >= 1");
       }},
      {"quad.nodes",
       [](auto& c, auto v, auto& x) {
         c.quad_nodes = parse_int<int>(v, x);
         if (c.quad_nodes < 1 || c.quad_nodes > 64) x.fail("must lie in [1, 64]");
       }},
      {"quad.tol", [](auto& c, auto v, auto& x) { c.quad_tol = positive(parse_double(v, x), x); }},
      {"chaos.diagonal",
       [](auto& c, auto v, auto& x) {
         const auto s = trim(v);
         if (s == "wick") {
           c.diagonal = DiagonalRule::kWick;
         } else if (s == "off") {
           c.diagonal = DiagonalRule::kOffDiagonal;
         } else {
           x.fail("expected wick or off");
         }
       }},
      {"chaos.q_max",
       [](auto& c, auto v, auto& x) {
         c.q_max = parse_int<int>(v, x);
         if (c.q_max < 1) x.fail("must be >= 1");
       }},
      {"chaos.isometry_cells",
       [](auto& c, auto v, auto& x) {
         c.chaos_isometry_cells = parse_int<std::size_t>(v, x);
         if (c.chaos_isometry_cells < 2) x.fail("must be >= 2");
       }},
      {"chaos.product_cells",
       [](auto& c, auto v, auto& x) {
         c.chaos_product_cells = parse_int<std::size_t>(v, x);
         if (c.chaos_product_cells < 4) x.fail("must be >= 4");
       }},
      {"scale", [](auto& c, auto v, auto& x) { c.scale = positive(parse_double(v, x), x); }},
      {"shift", [](auto& c, auto v, auto& x) { c.shift = parse_double(v, x); }},
      {"floor",
       [](auto& c, auto v, auto& x) {
         c.floor = parse_double(v, x);
         if (!(c.floor >= 0.0)) x.fail("must be >= 0");
       }},
      {"j",
       [](auto& c, auto v, auto& x) {
         c.j = parse_int<std::size_t>(v, x);
         if (c.j < 1) x.fail("must be >= 1");
       }},
      {"cache_dir",
       [](auto& c, auto v, auto&) {
         const std::string s(trim(v));
         if (s.empty()) {
           c.cache_dir.reset();
         } else {
           c.cache_dir = s;
         }
       }},
      {"refine.n_cells",
       [](auto& c, auto v, auto& x) {
         c.refine_n_cells.clear();
         for (auto item : split(v, ',')) c.refine_n_cells.push_back(parse_int<std::size_t>(item, x));
       }},
  };
  return table;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  ExperimentConfig cfg;
  std::map<std::string, int> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? end : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    Context ctx{source, "", line_no};
    if (eq == std::string_view::npos) {
      ctx.key = std::string(line);
      ctx.fail("expected key = value");
    }
    ctx.key = std::string(trim(line.substr(0, eq)));
    const auto& table = setters();
    const auto it = table.find(ctx.key);
    if (it == table.end()) ctx.fail("unknown key");
    if (seen.count(ctx.key)) ctx.fail("duplicate key (first set on line " +
                                      std::to_string(seen[ctx.key]) + ")");
    seen[ctx.key] = line_no;
    it->second(cfg, trim(line.substr(eq + 1)), ctx);
  }
  cfg.source = source;
  cfg.key_lines = std::move(seen);
  if (!(cfg.H > 0.0 && cfg.H < 1.0)) {
    const int line = cfg.key_lines.count("H") ? cfg.key_lines.at("H") : 0;
    throw ConfigError(source + ":" + std::to_string(line) + ": key 'H': must lie in (0, 1)", "H",
                      line);
  }
  return cfg;
}

void require_process_params(const ExperimentConfig& cfg) {
  auto line_of = [&](const std::string& key) {
    const auto it = cfg.key_lines.find(key);
    return it == cfg.key_lines.end() ? 0 : it->second;
  };
  auto fail = [&](const std::string& key, const std::string& what) {
    throw ConfigError(cfg.source + ":" + std::to_string(line_of(key)) + ": key '" + key + "': " +
                          what,
                      key, line_of(key));
  };
  try {
    make_params(cfg.q, cfg.H);
  } catch (const DomainError& e) {
    fail(cfg.q < 1 ? "q" : "H", e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string(), "--config", 0);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> canonical_entries(const ExperimentConfig& c) {
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + num(v[k]);
    return s;
  };
  std::string pairs;
  for (std::size_t k = 0; k < c.pairs.size(); ++k) {
    pairs += (k ? "," : "") + num(c.pairs[k].first) + ":" + num(c.pairs[k].second);
  }
  std::string refine;
  for (std::size_t k = 0; k < c.refine_n_cells.size(); ++k) {
    refine += (k ? "," : "") + std::to_string(c.refine_n_cells[k]);
  }
  std::vector<std::pair<std::string, std::string>> out = {
      {"H", num(c.H)},
      {"alpha", num(c.alpha)},
      {"chaos.diagonal", c.diagonal == DiagonalRule::kWick ? "wick" : "off"},
      {"chaos.isometry_cells", std::to_string(c.chaos_isometry_cells)},
      {"chaos.product_cells", std::to_string(c.chaos_product_cells)},
      {"chaos.q_max", std::to_string(c.q_max)},
      {"floor", num(c.floor)},
      {"grid.M", c.grid_M ? num(*c.grid_M) : "auto"},
      {"grid.alignment", std::to_string(c.grid_alignment)},
      {"grid.layout", c.grid_layout},
      {"grid.n_cells", std::to_string(c.grid_n_cells)},
      {"grid.tail_ratio", num(c.grid_tail_ratio)},
      {"grid.uniform_min", num(c.grid_uniform_min)},
      {"grid.x_max", num(c.grid_x_max)},
      {"j", std::to_string(c.j)},
      {"n_samples", std::to_string(c.n_samples)},
      {"pairs", pairs},
      {"q", std::to_string(c.q)},
      {"quad.nodes", std::to_string(c.quad_nodes)},
      {"quad.tol", num(c.quad_tol)},
      {"refine.n_cells", refine},
      {"scale", num(c.scale)},
      {"seed", std::to_string(c.seed)},
      {"shift", num(c.shift)},
      {"times", list(c.times)},
  };
  std::sort(out.begin(), out.end());
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::string text;
  for (const auto& [k, v] : canonical_entries(cfg)) text += k + "=" + v + "\n";
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
  return buf;
}

HermiteParams config_params(const ExperimentConfig& cfg) { return make_params(cfg.q, cfg.H); }

GridPtr config_grid(const ExperimentConfig& cfg, const HermiteParams& params) {
  const double M = cfg.grid_M ? *cfg.grid_M : default_truncation(params);
  if (cfg.grid_layout == "uniform") return build_grid(M, cfg.grid_x_max, cfg.grid_n_cells);
  GradedGridSpec spec;
  spec.M = M;
  spec.uniform_min = cfg.grid_uniform_min;
  spec.x_max = cfg.grid_x_max;
  spec.n_cells = cfg.grid_n_cells;
  spec.tail_ratio = cfg.grid_tail_ratio;
  spec.alignment = cfg.grid_alignment;
  return build_graded_grid(spec);
}

ProcessOptions config_process_options(const ExperimentConfig& cfg) {
  ProcessOptions o;
  o.quad.nodes = cfg.quad_nodes;
  o.quad.tol = cfg.quad_tol;
  o.rule = cfg.diagonal;
  o.q_max = cfg.q_max;
  if (cfg.cache_dir) o.cache_dir = std::filesystem::path(*cfg.cache_dir);
  return o;
}

}  // namespace hermitelab

#include "hermitelab/kernel_cache.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hermitelab/errors.hpp"

namespace hermitelab {
namespace {

constexpr char kMagic[4] = {'H', 'L', 'K', 'C'};

// Serialized key: everything that determines the kernel bytes.
std::vector<char> key_bytes(const HermiteParams& params, const TimeGrid& grid, double t,
                            const QuadratureSettings& quad) {
  std::vector<char> out;
  auto put = [&out](const auto& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out.insert(out.end(), p, p + sizeof(v));
  };
  put(kKernelCacheVersion);
  put(static_cast<std::int32_t>(params.q));
  put(params.H);
  put(t);
  put(static_cast<std::int32_t>(quad.nodes));
  put(static_cast<std::uint64_t>(grid.edges().size()));
  for (double e : grid.edges()) put(e);
  return out;
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::filesystem::path cell_kernel_path(const std::filesystem::path& dir,
                                       const HermiteParams& params, const TimeGrid& grid,
                                       double t, const QuadratureSettings& quad) {
  const auto key = key_bytes(params, grid, t, quad);
  char name[40];
  std::snprintf(name, sizeof name, "kernel_%016llx.hlkc",
                static_cast<unsigned long long>(fnv1a(key.data(), key.size())));
  return dir / name;
}

std::optional<CellKernel> load_cell_kernel(const std::filesystem::path& dir,
                                           const HermiteParams& params, const GridPtr& grid,
                                           double t, const QuadratureSettings& quad) {
  const auto path = cell_kernel_path(dir, params, *grid, t, quad);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) return std::nullopt;
  const auto expected = key_bytes(params, *grid, t, quad);
  std::uint64_t key_size = 0;
  if (!in.read(reinterpret_cast<char*>(&key_size), sizeof key_size)) return std::nullopt;
  if (key_size != expected.size()) return std::nullopt;
  std::vector<char> key(key_size);
  if (!in.read(key.data(), static_cast<std::streamsize>(key_size)) || key != expected) {
    return std::nullopt;
  }
  std::uint64_t active = 0;
  std::uint64_t nodes = 0;
  if (!in.read(reinterpret_cast<char*>(&active), sizeof active) ||
      !in.read(reinterpret_cast<char*>(&nodes), sizeof nodes)) {
    return std::nullopt;
  }
  if (active > grid->n_cells() || nodes > (std::uint64_t{1} << 32)) return std::nullopt;
  std::vector<double> weights(nodes);
  std::vector<double> factors(nodes * active);
  if (!in.read(reinterpret_cast<char*>(weights.data()),
               static_cast<std::streamsize>(weights.size() * sizeof(double))) ||
      !in.read(reinterpret_cast<char*>(factors.data()),
               static_cast<std::streamsize>(factors.size() * sizeof(double)))) {
    return std::nullopt;
  }
  return CellKernel(params, grid, t, active, std::move(weights), std::move(factors));
}

void store_cell_kernel(const std::filesystem::path& dir, const HermiteParams& params,
                       const CellKernel& kernel, const QuadratureSettings& quad) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ResourceError("kernel cache: cannot create " + dir.string() + ": " + ec.message());
  const auto path = cell_kernel_path(dir, params, *kernel.grid(), kernel.time(), quad);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("kernel cache: cannot write " + tmp.string());
    const auto key = key_bytes(params, *kernel.grid(), kernel.time(), quad);
    const std::uint64_t key_size = key.size();
    const std::uint64_t active = kernel.active_cells();
    const std::uint64_t nodes = kernel.n_nodes();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&key_size), sizeof key_size);
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    out.write(reinterpret_cast<const char*>(&active), sizeof active);
    out.write(reinterpret_cast<const char*>(&nodes), sizeof nodes);
    out.write(reinterpret_cast<const char*>(kernel.weights().data()),
              static_cast<std::streamsize>(kernel.weights().size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(kernel.factors().data()),
              static_cast<std::streamsize>(kernel.factors().size() * sizeof(double)));
    if (!out) throw ResourceError("kernel cache: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ResourceError("kernel cache: rename failed: " + ec.message());
}

}  // namespace hermitelab

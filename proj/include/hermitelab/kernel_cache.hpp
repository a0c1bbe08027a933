#pragma once

// On-disk persistence of cell kernels. Each file carries a versioned header with
// the complete key (order, H, t, quadrature settings, grid edges); a file whose
// header does not match the requested key is ignored and later overwritten.

#include <cstdint>
#include <filesystem>
#include <optional>

#include "hermitelab/hermite_kernels.hpp"

namespace hermitelab {

inline constexpr std::uint32_t kKernelCacheVersion = 1;

std::filesystem::path cell_kernel_path(const std::filesystem::path& dir,
                                       const HermiteParams& params, const TimeGrid& grid,
                                       double t, const QuadratureSettings& quad);

std::optional<CellKernel> load_cell_kernel(const std::filesystem::path& dir,
                                           const HermiteParams& params, const GridPtr& grid,
                                           double t, const QuadratureSettings& quad);

/// Writes through a temporary file and a rename, so readers never see a partial file.
void store_cell_kernel(const std::filesystem::path& dir, const HermiteParams& params,
                       const CellKernel& kernel, const QuadratureSettings& quad);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace hermitelab

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nwc/grid.hpp"
#include "nwc/world.hpp"

namespace nwc {

enum class SourceKind { Radar, Satellite, Gfs, GfsForecast, Coordinates, Minute };

/// Rendering rule for a source, chosen from its name prefix.
SourceKind source_kind(const std::string& name);

struct RenderOptions {
  double nwp_noise_sigma = 0.25;  ///< mm/h, additive, clamped at 0
};

/// Square window of a periodic world field centered on pixel corner (cx, cy).
std::vector<float> extract_window(const std::vector<float>& field, int n, int cx, int cy, int extent_px);

/// Render one source stack for a window issued at t0.
FieldStack render_source(const Timeline& timeline, const SourceSpec& spec, std::int64_t t0_min, int cx, int cy,
                         std::uint64_t noise_seed, const RenderOptions& options = {});

std::map<std::string, FieldStack> render_sources(const Timeline& timeline, const std::vector<SourceSpec>& specs,
                                                 std::int64_t t0_min, int cx, int cy, std::uint64_t noise_seed,
                                                 const RenderOptions& options = {});

/// Observed radar over the target patch, one frame per lead offset.
FieldStack render_targets(const Timeline& timeline, const TargetSpec& target, std::int64_t t0_min, int cx, int cy);

}  // namespace nwc

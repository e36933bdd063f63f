#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "layoutnet/denoiser.hpp"
#include "layoutnet/geometry.hpp"
#include "layoutnet/sampling.hpp"

namespace layoutnet {

/// Bytes are round(255 v), halves up.
void render_mask(const LayoutMask& mask, const std::filesystem::path& path);

/// Splatted layouts alpha-blended over the scene in the given order, each at
/// its own mask value: out = out (1 - m) + tint m.
Grid compose_overlay(const Grid& scene, const std::vector<Layout>& layouts, double tint = 1.0,
                     const TemplateSpec& templ = {});

/// Frames laid side by side, left to right.
Grid image_strip(const std::vector<Grid>& frames);

/// Pixel centers drawn by inverse CDF over the row-major flattened heatmap.
std::vector<std::array<double, 2>> draw_heatmap_locations(const Grid& heatmap, int n, Rng& rng);

struct HeatmapSamples {
    std::vector<std::array<double, 2>> locations;
    std::vector<Layout> layouts;
    Grid overlay;
};

/// One guided sample per drawn location, with (x, y) pinned to it.
HeatmapSamples heatmap_guided_sample(const Model& model, const Grid& scene, const Grid& heatmap, int n,
                                     const SampleOptions& opts, Rng& rng);

struct ChiSquare {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

/// Uniformity test of normalized points over a bins x bins partition of [-1, 1]^2.
ChiSquare coarse_uniformity(const std::vector<std::array<double, 2>>& points, int bins = 4);

struct CropRequest {
    const Grid* scene = nullptr;
    double crop_width = 1.0;  // crop side in shared normalized units
};

struct CropLayout {
    double relative_size = 0.0;  // s_i = shared size / crop width
    Layout layout;
    double absolute_size = 0.0;  // layout scale times crop width
};

/// Palm size pinned per crop so every hand has the same absolute size.
std::vector<CropLayout> scene_consistent_sample(const Model& model, const std::vector<CropRequest>& crops,
                                                double shared_hand_size, const SampleOptions& opts, Rng& rng);

struct InterpolationFrames {
    std::vector<Layout> layouts;
    std::vector<Grid> frames;  // overlays, k_steps + 1 of them
};

InterpolationFrames interpolate_demo(const Grid& scene, const Layout& from, const Layout& to, int k_steps,
                                     const TemplateSpec& templ = {});

}  // namespace layoutnet

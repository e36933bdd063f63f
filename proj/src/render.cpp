#include "layoutnet/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "layoutnet/image.hpp"

namespace layoutnet {

void render_mask(const LayoutMask& mask, const std::filesystem::path& path) {
    write_pgm(path, mask);
}

Grid compose_overlay(const Grid& scene, const std::vector<Layout>& layouts, double tint, const TemplateSpec& templ) {
    Grid out = scene;
    for (const auto& l : layouts) {
        const LayoutMask m = splat(guard_layout(l.to_vec()), scene.width, scene.height, templ);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double w = m.values[i];
            if (w != 0.0) out.values[i] = out.values[i] * (1.0 - w) + tint * w;
        }
    }
    return out;
}

Grid image_strip(const std::vector<Grid>& frames) {
    if (frames.empty()) throw DomainError("image strip needs at least one frame");
    const int h = frames.front().height;
    int w = 0;
    for (const auto& f : frames) {
        if (f.height != h) throw DimensionMismatch("strip frames differ in height");
        w += f.width;
    }
    Grid strip(w, h);
    int x0 = 0;
    for (const auto& f : frames) {
        for (int row = 0; row < h; ++row)
            for (int col = 0; col < f.width; ++col) strip.at(x0 + col, row) = f.at(col, row);
        x0 += f.width;
    }
    return strip;
}

std::vector<std::array<double, 2>> draw_heatmap_locations(const Grid& heatmap, int n, Rng& rng) {
    if (n < 0) throw DomainError("location count must be non-negative");
    std::vector<double> cdf(heatmap.size());
    for (double v : heatmap.values)
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("heatmap has negative or non-finite entries");
    std::partial_sum(heatmap.values.begin(), heatmap.values.end(), cdf.begin());
    const double total = cdf.empty() ? 0.0 : cdf.back();
    if (!(total > 0.0)) throw DomainError("heatmap is degenerate (all zero)");
    std::uniform_real_distribution<double> u(0.0, total);
    std::vector<std::array<double, 2>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u(rng));
        const auto idx = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
        out.push_back({pixel_to_norm(idx % heatmap.width, heatmap.width), pixel_to_norm(idx / heatmap.width, heatmap.height)});
    }
    return out;
}

HeatmapSamples heatmap_guided_sample(const Model& model, const Grid& scene, const Grid& heatmap, int n,
                                     const SampleOptions& opts, Rng& rng) {
    if (!heatmap.same_shape(scene)) throw DimensionMismatch("heatmap and scene differ in size");
    HeatmapSamples res;
    res.locations = draw_heatmap_locations(heatmap, n, rng);
    for (const auto& p : res.locations) {
        SampleOptions o = opts;
        GuidanceSpec g = opts.guidance.value_or(GuidanceSpec{});
        g.mask[1] = g.mask[2] = 1.0;
        g.target[1] = p[0];
        g.target[2] = p[1];
        o.guidance = g;
        res.layouts.push_back(sample_layout(model, scene, o, rng));
    }
    res.overlay = compose_overlay(scene, res.layouts, 1.0, opts.templ);
    return res;
}

ChiSquare coarse_uniformity(const std::vector<std::array<double, 2>>& points, int bins) {
    if (bins < 2) throw DomainError("need at least 2 bins per axis");
    if (points.empty()) throw DomainError("no points to test");
    std::vector<long> counts(static_cast<std::size_t>(bins * bins), 0);
    for (const auto& p : points) {
        const auto cell = [&](double v) { return std::clamp(static_cast<int>(std::floor((v + 1.0) * 0.5 * bins)), 0, bins - 1); };
        ++counts[static_cast<std::size_t>(cell(p[1]) * bins + cell(p[0]))];
    }
    const double expected = static_cast<double>(points.size()) / static_cast<double>(counts.size());
    ChiSquare res;
    for (long c : counts) res.statistic += (c - expected) * (c - expected) / expected;
    res.dof = bins * bins - 1;
    res.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(res.dof), res.statistic));
    return res;
}

std::vector<CropLayout> scene_consistent_sample(const Model& model, const std::vector<CropRequest>& crops,
                                                double shared_hand_size, const SampleOptions& opts, Rng& rng) {
    std::vector<CropLayout> out;
    for (std::size_t i = 0; i < crops.size(); ++i) {
        if (!(crops[i].crop_width > 0.0)) throw DomainError(fmt::format("crop {} has non-positive width", i));
        const double s = shared_hand_size / crops[i].crop_width;
        if (!(s > 0.0 && s <= 1.5))
            throw DomainError(fmt::format("crop {}: relative hand size {} outside (0, 1.5]", i, s));
        out.push_back({s, {}, 0.0});
    }
    for (std::size_t i = 0; i < crops.size(); ++i) {
        SampleOptions o = opts;
        GuidanceSpec g = opts.guidance.value_or(GuidanceSpec{});
        g.mask[0] = 1.0;
        g.target[0] = std::sqrt(out[i].relative_size);
        o.guidance = g;
        out[i].layout = sample_layout(model, *crops[i].scene, o, rng);
        out[i].absolute_size = out[i].layout.scale() * crops[i].crop_width;
    }
    return out;
}

InterpolationFrames interpolate_demo(const Grid& scene, const Layout& from, const Layout& to, int k_steps,
                                     const TemplateSpec& templ) {
    if (k_steps < 1) throw DomainError("interpolation needs at least one step");
    InterpolationFrames res;
    for (int i = 0; i <= k_steps; ++i) {
        const Layout l = interpolate_layouts(from, to, static_cast<double>(i) / k_steps);
        res.layouts.push_back(l);
        res.frames.push_back(compose_overlay(scene, {l}, 1.0, templ));
    }
    return res;
}

}  // namespace layoutnet

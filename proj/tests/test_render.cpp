#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "layoutnet/render.hpp"
#include "support.hpp"

using namespace layoutnet;

namespace {

std::vector<unsigned char> pgm_payload(const std::filesystem::path& path, std::size_t n) {
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() >= n);
    return {bytes.end() - static_cast<std::ptrdiff_t>(n), bytes.end()};
}

// Survival function of chi-square: Simpson over v with u = v^2, which keeps
// the integrand smooth at the origin for odd k.
double chi2_survival(double x, int k) {
    const auto f = [k](double v) {
        if (v <= 0.0) return 0.0;
        const double u = v * v;
        return 2.0 * v *
               std::exp((k / 2.0 - 1.0) * std::log(u) - u / 2.0 - (k / 2.0) * std::log(2.0) - std::lgamma(k / 2.0));
    };
    const int n = 200000;
    const double top = std::sqrt(x), h = top / n;
    double s = f(0.0) + f(top);
    for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4.0 : 2.0);
    return 1.0 - s * h / 3.0;
}

Model tiny_model(std::uint64_t seed) {
    Model m;
    m.params = DenoiserParams::init(testing::tiny_arch(), seed);
    m.steps = 10;
    return m;
}

int argmax_column(const Grid& g) {
    const auto it = std::max_element(g.values.begin(), g.values.end());
    return static_cast<int>(it - g.values.begin()) % g.width;
}

}  // namespace

TEST_CASE("render_mask byte values") {
    Grid g(3, 1);
    g.values = {0.0, 1.0, 0.5};
    const auto path = std::filesystem::temp_directory_path() / "layoutnet_render_mask.pgm";
    render_mask(g, path);
    const auto bytes = pgm_payload(path, 3);
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 255);
    CHECK(bytes[2] == 128);
}

TEST_CASE("overlay blending") {
    const Grid scene = testing::blob_grid(32, 0.2, -0.1);
    const Layout l{0.5, 0.0, 0.0, 1.0, 0.0};
    const LayoutMask m = splat(l, 32, 32, TemplateSpec{});

    SUBCASE("no layouts leaves the scene unchanged") { CHECK(compose_overlay(scene, {}).values == scene.values); }
    SUBCASE("single layout matches the blend formula") {
        const Grid o = compose_overlay(scene, {l}, 0.9);
        for (std::size_t i = 0; i < o.size(); ++i)
            CHECK(o.values[i] == doctest::Approx(scene.values[i] * (1.0 - m.values[i]) + 0.9 * m.values[i]));
    }
    SUBCASE("values stay in range and brighten toward the tint") {
        const Grid o = compose_overlay(scene, {l, Layout{0.4, 0.5, 0.5, 0.0, 1.0}});
        for (std::size_t i = 0; i < o.size(); ++i) {
            CHECK(o.values[i] >= scene.values[i] - 1e-12);
            CHECK(o.values[i] <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("image strip") {
    Grid a(2, 2), b(3, 2);
    a.values = {1, 2, 3, 4};
    b.values = {5, 6, 7, 8, 9, 10};
    const Grid s = image_strip({a, b});
    CHECK(s.width == 5);
    CHECK(s.values == std::vector<double>{1, 2, 5, 6, 7, 3, 4, 8, 9, 10});
    CHECK_THROWS_AS(image_strip({a, Grid(2, 3)}), DimensionMismatch);
    CHECK_THROWS(image_strip({}));
}

TEST_CASE("heatmap location draws") {
    Rng rng(3);
    SUBCASE("point mass") {
        Grid h(8, 8);
        h.at(5, 2) = 1.0;
        for (const auto& p : draw_heatmap_locations(h, 50, rng)) {
            CHECK(p[0] == doctest::Approx(pixel_to_norm(5, 8)));
            CHECK(p[1] == doctest::Approx(pixel_to_norm(2, 8)));
        }
    }
    SUBCASE("frequencies follow the weights") {
        Grid h(2, 1);
        h.values = {1.0, 3.0};
        int right = 0;
        const int n = 20000;
        for (const auto& p : draw_heatmap_locations(h, n, rng)) right += p[0] > 0.0;
        CHECK(std::abs(right / double(n) - 0.75) < 0.015);
    }
    SUBCASE("degenerate heatmaps are rejected") {
        CHECK_THROWS(draw_heatmap_locations(Grid(4, 4), 1, rng));
        Grid neg(2, 1);
        neg.values = {1.0, -0.5};
        CHECK_THROWS(draw_heatmap_locations(neg, 1, rng));
    }
}

TEST_CASE("coarse uniformity statistic") {
    // 2x2 bins, counts 10, 20, 30, 40 (row-major from the top-left).
    std::vector<std::array<double, 2>> pts;
    const std::array<std::array<double, 2>, 4> centers{{{-0.5, -0.5}, {0.5, -0.5}, {-0.5, 0.5}, {0.5, 0.5}}};
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 10 * (c + 1); ++i) pts.push_back(centers[static_cast<std::size_t>(c)]);
    const ChiSquare chi = coarse_uniformity(pts, 2);
    // expected 25 each: (225 + 25 + 25 + 225) / 25
    CHECK(chi.statistic == doctest::Approx(20.0));
    CHECK(chi.dof == 3);
    CHECK(chi.p_value == doctest::Approx(chi2_survival(20.0, 3)).epsilon(1e-6));

    std::vector<std::array<double, 2>> even;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) even.push_back({-0.75 + 0.5 * c, -0.75 + 0.5 * r});
    const ChiSquare flat = coarse_uniformity(even);
    CHECK(flat.statistic == doctest::Approx(0.0));
    CHECK(flat.dof == 15);
    CHECK(flat.p_value == doctest::Approx(1.0));
    CHECK(coarse_uniformity({{0.1, 0.2}}, 4).p_value == doctest::Approx(chi2_survival(15.0, 15)).epsilon(1e-6));
}

TEST_CASE("heatmap guided sampling pins the location") {
    const Model model = tiny_model(5);
    const Grid scene = testing::blob_grid(8, 0.0, 0.0);
    Grid heat(8, 8);
    std::fill(heat.values.begin(), heat.values.end(), 1.0);
    Rng rng(11);
    const HeatmapSamples hs = heatmap_guided_sample(model, scene, heat, 25, SampleOptions{}, rng);
    REQUIRE(hs.layouts.size() == 25);
    for (std::size_t i = 0; i < hs.layouts.size(); ++i) {
        CHECK(std::abs(hs.layouts[i].x - hs.locations[i][0]) <= 1e-6);
        CHECK(std::abs(hs.layouts[i].y - hs.locations[i][1]) <= 1e-6);
    }
    CHECK_THROWS_AS(heatmap_guided_sample(model, scene, Grid(4, 4), 1, SampleOptions{}, rng), DimensionMismatch);
}

TEST_CASE("scene-consistent crops") {
    const Model model = tiny_model(7);
    const Grid scene = testing::blob_grid(8, 0.1, 0.1);
    const std::vector<double> widths{1.0, 0.5, 0.25, 2.0};
    std::vector<CropRequest> crops;
    for (double w : widths) crops.push_back({&scene, w});
    Rng rng(2);
    const auto res = scene_consistent_sample(model, crops, 0.2, SampleOptions{}, rng);
    REQUIRE(res.size() == widths.size());
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < res.size(); ++i) {
        CHECK(res[i].relative_size == doctest::Approx(0.2 / widths[i]));
        CHECK(res[i].layout.scale() == doctest::Approx(0.2 / widths[i]).epsilon(1e-9));
        lo = std::min(lo, res[i].absolute_size);
        hi = std::max(hi, res[i].absolute_size);
    }
    CHECK(hi - lo <= 1e-6);

    const std::vector<CropRequest> tiny{{&scene, 0.1}};
    CHECK_THROWS_AS(scene_consistent_sample(model, tiny, 0.2, SampleOptions{}, rng), DomainError);
    const std::vector<CropRequest> zero{{&scene, 0.0}};
    CHECK_THROWS_AS(scene_consistent_sample(model, zero, 0.2, SampleOptions{}, rng), DomainError);
}

TEST_CASE("interpolation frames") {
    const Grid black(48, 48);
    const Layout from{0.5, -0.5, 0.0, 1.0, 0.0}, to{0.5, 0.5, 0.0, 1.0, 0.0};

    const InterpolationFrames one = interpolate_demo(black, from, to, 1);
    REQUIRE(one.layouts.size() == 2);
    CHECK(one.layouts.front().to_vec() == from.to_vec());
    CHECK(one.layouts.back().to_vec() == to.to_vec());

    const InterpolationFrames same = interpolate_demo(black, from, from, 4);
    for (const auto& f : same.frames) CHECK(f.values == same.frames.front().values);

    const InterpolationFrames walk = interpolate_demo(black, from, to, 8);
    REQUIRE(walk.frames.size() == 9);
    for (std::size_t i = 1; i < walk.frames.size(); ++i)
        CHECK(argmax_column(walk.frames[i]) >= argmax_column(walk.frames[i - 1]));
    CHECK(argmax_column(walk.frames.back()) > argmax_column(walk.frames.front()));

    CHECK_THROWS(interpolate_demo(black, from, to, 0));
}

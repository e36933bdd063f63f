#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "layoutnet/synth.hpp"

using namespace layoutnet;

namespace {

std::filesystem::path scratch(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

double entropy(const Grid& g) {
    double h = 0.0;
    for (double p : g.values)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

}  // namespace

TEST_CASE("scene construction") {
    const GeneratorConfig cfg;
    SceneParams p;
    p.shape = instance_shape(cfg, 3);
    p.handle_angle = 0.0;  // handle sticks out to the right
    p.handle_width = 0.1;
    p.handle_length = 0.15;
    p.texture_seed = 11;
    const SceneSample right = render_scene(p, cfg);
    CHECK(right.handle_x > 0.0);
    CHECK(right.gt_layout.b1 < 0.0);
    CHECK(right.gt_layout.b2 == 0.0);
    CHECK(right.gt_layout.x > right.handle_x);
    check_scene_invariants(right);

    SceneParams wide = p;
    wide.handle_width = 0.2;
    const SceneSample doubled = render_scene(wide, cfg);
    CHECK(doubled.gt_layout.scale() == doctest::Approx(2.0 * right.gt_layout.scale()).epsilon(1e-12));
    CHECK(right.gt_layout.scale() == doctest::Approx(1.5 * 0.1).epsilon(1e-12));

    p.handle_angle = std::acos(-1.0) / 2.0;  // +y is down
    const SceneSample bottom = render_scene(p, cfg);
    CHECK(bottom.gt_layout.b2 < 0.0);

    CHECK(render_scene(p, cfg).object_grid.values == bottom.object_grid.values);
}

TEST_CASE("generated scenes satisfy their invariants") {
    const GeneratorConfig cfg;
    const auto scenes = generate_scenes(2024, 1000, cfg);
    std::set<int> instances;
    int disks = 0;
    for (const auto& s : scenes) {
        CHECK_NOTHROW(check_scene_invariants(s));
        instances.insert(s.instance_id);
        disks += s.category == Category::disk;
        for (double v : s.object_grid.values) CHECK(std::abs(v * 255.0 - std::round(v * 255.0)) < 1e-9);
    }
    CHECK(instances.size() == 20);
    CHECK(disks > 0);
    CHECK(disks < 1000);

    // pure function of (seed, config); prefixes agree
    const auto again = generate_scenes(2024, 5, cfg);
    for (int i = 0; i < 5; ++i) {
        CHECK(again[i].object_grid.values == scenes[i].object_grid.values);
        CHECK(again[i].gt_layout.to_vec() == scenes[i].gt_layout.to_vec());
    }
    CHECK(generate_scenes(2025, 1, cfg)[0].object_grid.values != scenes[0].object_grid.values);

    GeneratorConfig bad;
    bad.size = 30;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    CHECK_THROWS_AS(instance_shape(cfg, 20), DomainError);
}

TEST_CASE("dataset round trip") {
    const auto root = scratch("layoutnet_dataset_test");
    const GeneratorConfig cfg;
    const auto scenes = generate_scenes(7, 100, cfg);
    const DatasetManifest written = write_dataset(scenes, root);
    CHECK(written.records.size() == 100);
    const auto back = read_dataset(root);
    REQUIRE(back.size() == scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        CHECK(back[i].object_grid.values == scenes[i].object_grid.values);
        CHECK(back[i].object_mask.values == scenes[i].object_mask.values);
        CHECK(back[i].gt_layout.to_vec() == scenes[i].gt_layout.to_vec());
        CHECK(back[i].instance_id == scenes[i].instance_id);
        CHECK(back[i].category == scenes[i].category);
        CHECK(back[i].handle_x == scenes[i].handle_x);
        CHECK(back[i].handle_width == scenes[i].handle_width);
    }

    SUBCASE("truncated grid names the sample") {
        const auto file = root / written.records[42].dir / "object.pgm";
        std::filesystem::resize_file(file, std::filesystem::file_size(file) - 10);
        CHECK_THROWS_WITH_AS(read_dataset(root), doctest::Contains("sample 42"), Error);
    }
    SUBCASE("count mismatch") {
        std::vector<SceneSample> three(scenes.begin(), scenes.begin() + 3);
        write_dataset(three, root);
        std::ofstream(root / "manifest.txt", std::ios::app) << "99 0 disk samples/000099 all\n";
        CHECK_THROWS_WITH_AS(read_manifest(root), doctest::Contains("declares 3"), Error);
    }
    SUBCASE("missing dataset") {
        CHECK_THROWS_AS(read_manifest(root / "nope"), Error);
    }
    std::filesystem::remove_all(root);
}

TEST_CASE("split_by_instance") {
    GeneratorConfig cfg;
    const auto scenes = generate_scenes(3, 200, cfg);
    DatasetManifest m;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        m.records.push_back({static_cast<int>(i), scenes[i].instance_id, scenes[i].category, "", "all"});

    Rng r1(17), r2(17);
    const auto [train, test] = split_by_instance(m, 5, r1);
    std::set<int> train_ids, test_ids;
    for (const auto& r : train.records) train_ids.insert(r.instance_id);
    for (const auto& r : test.records) test_ids.insert(r.instance_id);
    CHECK(test_ids.size() == 5);
    CHECK(train_ids.size() == 15);
    for (int id : test_ids) CHECK_FALSE(train_ids.contains(id));
    CHECK(train.records.size() + test.records.size() == m.records.size());
    CHECK(test.with_split("test").size() == test.records.size());

    const auto again = split_by_instance(m, 5, r2);
    CHECK(again.second.records.size() == test.records.size());
    for (std::size_t i = 0; i < test.records.size(); ++i) CHECK(again.second.records[i].id == test.records[i].id);

    Rng r3(1);
    CHECK(split_by_instance(m, 0, r3).second.records.empty());
    CHECK_THROWS_AS(split_by_instance(m, 20, r3), DomainError);
}

TEST_CASE("heatmap_for_scene") {
    const auto s = generate_scenes(9, 1, GeneratorConfig{})[0];
    const Grid narrow = heatmap_for_scene(s, 0.1);
    double total = 0.0;
    for (double v : narrow.values) total += v;
    CHECK(std::abs(total - 1.0) < 1e-9);

    const auto best = std::max_element(narrow.values.begin(), narrow.values.end()) - narrow.values.begin();
    CHECK(best % narrow.width == norm_to_pixel(s.handle_x, narrow.width));
    CHECK(best / narrow.width == norm_to_pixel(s.handle_y, narrow.height));

    CHECK(entropy(heatmap_for_scene(s, 0.2)) > entropy(narrow));
    CHECK(entropy(heatmap_for_scene(s, 0.4)) > entropy(heatmap_for_scene(s, 0.2)));
    CHECK_THROWS_AS(heatmap_for_scene(s, 0.0), DomainError);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layoutnet/diffusion.hpp"
#include "layoutnet/geometry.hpp"
#include "layoutnet/types.hpp"

namespace layoutnet {

enum class Category { disk, rounded_rect };

std::string_view to_string(Category c);
Category parse_category(std::string_view name);

struct GeneratorConfig {
    int size = 32;
    int n_instances = 20;
    /// Seed of the per-instance shape table; scenes draw from their own stream.
    std::uint64_t instance_seed = 1;
    /// Palm scale per unit handle width: a^2 = hand_per_width * handle_width.
    double hand_per_width = 1.5;

    void validate() const;
};

/// Shape attributes shared by every scene of one object instance.
struct InstanceShape {
    int id = 0;
    Category category = Category::disk;
    double radius = 0.3;       // disk radius / rectangle half-width
    double aspect = 1.0;       // rectangle half-height over half-width
    double corner = 0.0;       // rounded-rectangle corner radius
    double intensity = 0.7;
    double texture_freq = 6.0;
    double texture_phase = 0.0;
    double handle_width = 0.1;
    double handle_length = 0.16;
};

InstanceShape instance_shape(const GeneratorConfig& cfg, int instance_id);

/// Everything needed to render one scene deterministically.
struct SceneParams {
    InstanceShape shape;
    double cx = 0.0, cy = 0.0;  // body center
    double handle_angle = 0.0;  // outward handle axis, radians, y down
    double handle_width = 0.1;
    double handle_length = 0.16;
    std::uint64_t texture_seed = 0;
};

struct SceneSample {
    Grid object_grid;  // values are multiples of 1/255
    Grid object_mask;  // 0 / 1
    Layout gt_layout;
    int instance_id = 0;
    Category category = Category::disk;
    double handle_x = 0.0, handle_y = 0.0;  // handle tip, normalized
    double handle_width = 0.0;
};

SceneParams sample_scene_params(Rng& rng, const GeneratorConfig& cfg);
SceneSample render_scene(const SceneParams& params, const GeneratorConfig& cfg);
SceneSample generate_scene(Rng& rng, const GeneratorConfig& cfg);

/// Scene i of a dataset is generated from its own stream seeded by (seed, i).
std::vector<SceneSample> generate_scenes(std::uint64_t seed, int count, const GeneratorConfig& cfg);

/// Throws Error describing the first violated SceneSample invariant.
void check_scene_invariants(const SceneSample& s);

struct DatasetRecord {
    int id = 0;
    int instance_id = 0;
    Category category = Category::disk;
    std::string dir;  // relative to the dataset root
    std::string split = "all";
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<DatasetRecord> records;

    std::vector<DatasetRecord> with_split(std::string_view split) const;
};

/// Writes samples/<id>/{object.pgm, objmask.pgm, layout.txt} and manifest.txt.
/// splits, when non-empty, gives one tag per sample.
DatasetManifest write_dataset(const std::vector<SceneSample>& samples, const std::filesystem::path& root,
                              const std::vector<std::string>& splits = {});

DatasetManifest read_manifest(const std::filesystem::path& root);
SceneSample read_sample(const DatasetManifest& manifest, const DatasetRecord& record);
std::vector<SceneSample> read_dataset(const std::filesystem::path& root);
/// Reads only the records carrying the given split tag.
std::vector<SceneSample> read_split(const std::filesystem::path& root, std::string_view split);

/// Holds out `held_out` whole instances (chosen by rng) as the test split.
std::pair<DatasetManifest, DatasetManifest> split_by_instance(const DatasetManifest& manifest, int held_out, Rng& rng);

/// "train" / "test" tag per sample, holding out whole instances as in split_by_instance.
std::vector<std::string> instance_split_tags(const std::vector<SceneSample>& samples, int held_out, Rng& rng);

/// Normalized Gaussian bump at the handle tip; sigma in normalized units.
Grid heatmap_for_scene(const SceneSample& sample, double sigma);

/// Sample directory for a scene standing alone (same layout as one dataset entry).
void write_sample_dir(const SceneSample& sample, const std::filesystem::path& dir);
SceneSample read_sample_dir(const std::filesystem::path& dir);

}  // namespace layoutnet

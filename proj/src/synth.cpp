#include "layoutnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "layoutnet/image.hpp"

namespace layoutnet {

namespace {

constexpr std::string_view kManifestHeader = "# layoutnet dataset manifest v1";

double quantize(double v) {
    return std::floor(255.0 * std::clamp(v, 0.0, 1.0) + 0.5) / 255.0;
}

double body_sdf(const InstanceShape& s, double px, double py) {
    if (s.category == Category::disk) return std::hypot(px, py) - s.radius;
    const double hx = s.radius - s.corner;
    const double hy = s.radius * s.aspect - s.corner;
    const double qx = std::abs(px) - hx;
    const double qy = std::abs(py) - hy;
    return std::hypot(std::max(qx, 0.0), std::max(qy, 0.0)) + std::min(std::max(qx, qy), 0.0) - s.corner;
}

// Distance from the body center to its boundary along direction (nx, ny).
double boundary_distance(const InstanceShape& s, double nx, double ny) {
    double lo = 0.0, hi = 2.0;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (body_sdf(s, mid * nx, mid * ny) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::string sample_dir_name(int id) {
    return fmt::format("samples/{:06d}", id);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

}  // namespace

std::string_view to_string(Category c) {
    return c == Category::disk ? "disk" : "rounded_rect";
}

Category parse_category(std::string_view name) {
    if (name == "disk") return Category::disk;
    if (name == "rounded_rect") return Category::rounded_rect;
    throw DomainError(fmt::format("unknown object category '{}'", name));
}

void GeneratorConfig::validate() const {
    if (size < 16 || size % 4 != 0) throw DomainError(fmt::format("scene size must be a multiple of 4 and >= 16, got {}", size));
    if (n_instances < 1) throw DomainError("need at least one object instance");
    if (!(hand_per_width > 0.0)) throw DomainError("hand_per_width must be positive");
}

InstanceShape instance_shape(const GeneratorConfig& cfg, int instance_id) {
    if (instance_id < 0 || instance_id >= cfg.n_instances)
        throw DomainError(fmt::format("instance id {} outside [0, {})", instance_id, cfg.n_instances));
    Rng rng = derived_rng(cfg.instance_seed, static_cast<std::uint64_t>(instance_id));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    InstanceShape s;
    s.id = instance_id;
    s.category = u(rng) < 0.5 ? Category::disk : Category::rounded_rect;
    s.radius = 0.22 + 0.12 * u(rng);
    s.aspect = 0.7 + 0.3 * u(rng);
    s.corner = (0.2 + 0.5 * u(rng)) * s.radius * s.aspect;
    s.intensity = 0.55 + 0.3 * u(rng);
    s.texture_freq = 4.0 + 6.0 * u(rng);
    s.texture_phase = 2.0 * std::numbers::pi * u(rng);
    s.handle_width = 0.07 + 0.05 * u(rng);
    s.handle_length = 0.12 + 0.07 * u(rng);
    return s;
}

SceneParams sample_scene_params(Rng& rng, const GeneratorConfig& cfg) {
    cfg.validate();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, cfg.n_instances - 1);
    SceneParams p;
    p.shape = instance_shape(cfg, pick(rng));
    p.cx = 0.16 * u(rng) - 0.08;
    p.cy = 0.16 * u(rng) - 0.08;
    p.handle_angle = 2.0 * std::numbers::pi * u(rng);
    p.handle_width = p.shape.handle_width * (0.85 + 0.3 * u(rng));
    p.handle_length = p.shape.handle_length * (0.85 + 0.3 * u(rng));
    p.texture_seed = rng();
    return p;
}

SceneSample render_scene(const SceneParams& p, const GeneratorConfig& cfg) {
    cfg.validate();
    const int n = cfg.size;
    const double nx = std::cos(p.handle_angle), ny = std::sin(p.handle_angle);
    const double base = boundary_distance(p.shape, nx, ny);
    const double bx = p.cx + base * nx, by = p.cy + base * ny;
    const double tip_x = bx + p.handle_length * nx, tip_y = by + p.handle_length * ny;

    SceneSample s;
    s.instance_id = p.shape.id;
    s.category = p.shape.category;
    s.handle_x = tip_x;
    s.handle_y = tip_y;
    s.handle_width = p.handle_width;
    s.object_grid = Grid(n, n);
    s.object_mask = Grid(n, n);

    Rng tex(p.texture_seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    const double handle_value = 0.7 * p.shape.intensity;
    for (int row = 0; row < n; ++row) {
        const double v = pixel_to_norm(row, n);
        for (int col = 0; col < n; ++col) {
            const double u = pixel_to_norm(col, n);
            const double noise = jitter(tex);
            const bool in_body = body_sdf(p.shape, u - p.cx, v - p.cy) <= 0.0;
            const double along = (u - bx) * nx + (v - by) * ny;
            const double across = -(u - bx) * ny + (v - by) * nx;
            const bool in_handle = along >= -p.handle_width && along <= p.handle_length && std::abs(across) <= 0.5 * p.handle_width;
            double value = 0.1 + 0.05 * noise;
            if (in_handle) {
                value = handle_value + 0.02 * noise;
            } else if (in_body) {
                value = p.shape.intensity +
                        0.08 * std::sin(p.shape.texture_freq * u + p.shape.texture_phase) *
                            std::cos(p.shape.texture_freq * v + 0.7 * p.shape.texture_phase);
            }
            s.object_grid.at(col, row) = quantize(value);
            s.object_mask.at(col, row) = (in_body || in_handle) ? 1.0 : 0.0;
        }
    }

    // Palm one radius beyond the tip, approaching from the nearest frame edge.
    const double scale = cfg.hand_per_width * p.handle_width;
    const double dist[4] = {1.0 + tip_x, 1.0 - tip_x, 1.0 + tip_y, 1.0 - tip_y};
    const double dirs[4][2] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
    const int edge = static_cast<int>(std::min_element(dist, dist + 4) - dist);
    const double px = std::clamp(tip_x + scale * nx, -1.5, 1.5);
    const double py = std::clamp(tip_y + scale * ny, -1.5, 1.5);
    s.gt_layout = {std::sqrt(scale), px, py, dirs[edge][0], dirs[edge][1]};
    return s;
}

SceneSample generate_scene(Rng& rng, const GeneratorConfig& cfg) {
    return render_scene(sample_scene_params(rng, cfg), cfg);
}

std::vector<SceneSample> generate_scenes(std::uint64_t seed, int count, const GeneratorConfig& cfg) {
    if (count < 0) throw DomainError("scene count must be non-negative");
    std::vector<SceneSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = derived_rng(seed, static_cast<std::uint64_t>(i));
        out.push_back(generate_scene(rng, cfg));
    }
    return out;
}

void check_scene_invariants(const SceneSample& s) {
    s.gt_layout.validate();
    const double scale = s.gt_layout.scale();
    const double d = std::hypot(s.gt_layout.x - s.handle_x, s.gt_layout.y - s.handle_y);
    if (d > 2.0 * scale + 1e-12)
        throw Error(fmt::format("palm center {} from the handle, more than 2 palm radii ({})", d, 2.0 * scale));
    const auto [c, dd] = normalize_approach(s.gt_layout.b1, s.gt_layout.b2);
    // walking back along the approach direction from the handle must leave the frame
    const double reach = std::max(std::abs(s.handle_x), std::abs(s.handle_y));
    if (reach >= 1.0) throw Error("handle tip outside the frame");
    const double exit_x = s.handle_x - 2.0 * c, exit_y = s.handle_y - 2.0 * dd;
    if (std::max(std::abs(exit_x), std::abs(exit_y)) < 1.0) throw Error("approach direction does not come from outside the frame");
    double mask_sum = 0.0;
    for (double v : s.object_mask.values) {
        if (v != 0.0 && v != 1.0) throw Error("object mask is not binary");
        mask_sum += v;
    }
    if (mask_sum == 0.0) throw Error("object mask is empty");
    for (double v : s.object_grid.values)
        if (!(v >= 0.0 && v <= 1.0)) throw Error("object grid value outside [0, 1]");
}

std::vector<DatasetRecord> DatasetManifest::with_split(std::string_view split) const {
    std::vector<DatasetRecord> out;
    for (const auto& r : records)
        if (r.split == split) out.push_back(r);
    return out;
}

void write_sample_dir(const SceneSample& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_pgm(dir / "object.pgm", s.object_grid);
    write_pgm(dir / "objmask.pgm", s.object_mask);
    write_text(dir / "layout.txt", fmt::format("{}\ninstance_id {}\ncategory {}\nhandle {:.17g} {:.17g} {:.17g}\n",
                                               s.gt_layout.to_line(), s.instance_id, to_string(s.category), s.handle_x,
                                               s.handle_y, s.handle_width));
}

SceneSample read_sample_dir(const std::filesystem::path& dir) {
    SceneSample s;
    s.object_grid = read_pgm(dir / "object.pgm");
    s.object_mask = read_pgm(dir / "objmask.pgm");
    if (!s.object_grid.same_shape(s.object_mask)) throw Error("object and mask images differ in size");
    std::ifstream in(dir / "layout.txt");
    if (!in) throw Error(fmt::format("cannot open '{}'", (dir / "layout.txt").string()));
    std::string line;
    if (!std::getline(in, line)) throw Error("layout.txt is empty");
    s.gt_layout = Layout::parse_line(line);
    bool have_instance = false, have_category = false, have_handle = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "instance_id") {
            have_instance = static_cast<bool>(ls >> s.instance_id);
        } else if (key == "category") {
            std::string name;
            ls >> name;
            s.category = parse_category(name);
            have_category = true;
        } else if (key == "handle") {
            have_handle = static_cast<bool>(ls >> s.handle_x >> s.handle_y >> s.handle_width);
        } else {
            throw Error(fmt::format("unknown layout.txt key '{}'", key));
        }
    }
    if (!have_instance || !have_category || !have_handle) throw Error("layout.txt lacks instance_id, category or handle line");
    return s;
}

DatasetManifest write_dataset(const std::vector<SceneSample>& samples, const std::filesystem::path& root,
                              const std::vector<std::string>& splits) {
    if (!splits.empty() && splits.size() != samples.size())
        throw DomainError("split tags must match the sample count");
    std::filesystem::create_directories(root);
    DatasetManifest manifest{root, {}};
    std::string text = fmt::format("{}\ncount {}\n", kManifestHeader, samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        DatasetRecord rec;
        rec.id = static_cast<int>(i);
        rec.instance_id = samples[i].instance_id;
        rec.category = samples[i].category;
        rec.dir = sample_dir_name(rec.id);
        rec.split = splits.empty() ? "all" : splits[i];
        write_sample_dir(samples[i], root / rec.dir);
        text += fmt::format("{} {} {} {} {}\n", rec.id, rec.instance_id, to_string(rec.category), rec.dir, rec.split);
        manifest.records.push_back(std::move(rec));
    }
    write_text(root / "manifest.txt", text);
    return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& root) {
    std::ifstream in(root / "manifest.txt");
    if (!in) throw Error(fmt::format("dataset manifest '{}' not found", (root / "manifest.txt").string()));
    std::string line;
    if (!std::getline(in, line) || line != kManifestHeader) throw Error("manifest header missing or unsupported");
    std::size_t count = 0;
    if (!std::getline(in, line) || std::sscanf(line.c_str(), "count %zu", &count) != 1)
        throw Error("manifest lacks a count line");
    DatasetManifest m{root, {}};
    std::set<int> ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        DatasetRecord r;
        std::string category;
        if (!(ls >> r.id >> r.instance_id >> category >> r.dir >> r.split))
            throw Error(fmt::format("malformed manifest record '{}'", line));
        r.category = parse_category(category);
        if (!ids.insert(r.id).second) throw Error(fmt::format("duplicate sample id {} in manifest", r.id));
        m.records.push_back(std::move(r));
    }
    if (m.records.size() != count)
        throw Error(fmt::format("manifest declares {} samples but lists {}", count, m.records.size()));
    return m;
}

SceneSample read_sample(const DatasetManifest& manifest, const DatasetRecord& record) {
    try {
        SceneSample s = read_sample_dir(manifest.root / record.dir);
        if (s.instance_id != record.instance_id || s.category != record.category)
            throw Error("instance or category disagrees with the manifest");
        return s;
    } catch (const std::exception& e) {
        throw Error(fmt::format("sample {}: {}", record.id, e.what()));
    }
}

std::vector<SceneSample> read_dataset(const std::filesystem::path& root) {
    const DatasetManifest m = read_manifest(root);
    std::vector<SceneSample> out;
    out.reserve(m.records.size());
    for (const auto& r : m.records) out.push_back(read_sample(m, r));
    return out;
}

std::vector<SceneSample> read_split(const std::filesystem::path& root, std::string_view split) {
    const DatasetManifest m = read_manifest(root);
    std::vector<SceneSample> out;
    for (const auto& r : m.records)
        if (r.split == split) out.push_back(read_sample(m, r));
    return out;
}

std::pair<DatasetManifest, DatasetManifest> split_by_instance(const DatasetManifest& manifest, int held_out, Rng& rng) {
    std::set<int> distinct;
    for (const auto& r : manifest.records) distinct.insert(r.instance_id);
    std::vector<int> instances(distinct.begin(), distinct.end());
    if (held_out < 0 || held_out >= static_cast<int>(instances.size()))
        throw DomainError(fmt::format("cannot hold out {} of {} instances", held_out, instances.size()));
    std::shuffle(instances.begin(), instances.end(), rng);
    const std::set<int> test_ids(instances.begin(), instances.begin() + held_out);
    DatasetManifest train{manifest.root, {}}, test{manifest.root, {}};
    for (auto r : manifest.records) {
        const bool is_test = test_ids.contains(r.instance_id);
        r.split = is_test ? "test" : "train";
        (is_test ? test : train).records.push_back(std::move(r));
    }
    return {std::move(train), std::move(test)};
}

std::vector<std::string> instance_split_tags(const std::vector<SceneSample>& samples, int held_out, Rng& rng) {
    DatasetManifest m;
    for (std::size_t i = 0; i < samples.size(); ++i)
        m.records.push_back({static_cast<int>(i), samples[i].instance_id, samples[i].category, "", "all"});
    const auto [train, test] = split_by_instance(m, held_out, rng);
    std::vector<std::string> tags(samples.size(), "train");
    for (const auto& r : test.records) tags[static_cast<std::size_t>(r.id)] = "test";
    return tags;
}

Grid heatmap_for_scene(const SceneSample& sample, double sigma) {
    if (!(sigma > 0.0)) throw DomainError("heatmap sigma must be positive");
    const int w = sample.object_grid.width, h = sample.object_grid.height;
    Grid g(w, h);
    double total = 0.0;
    for (int row = 0; row < h; ++row)
        for (int col = 0; col < w; ++col) {
            const double du = pixel_to_norm(col, w) - sample.handle_x;
            const double dv = pixel_to_norm(row, h) - sample.handle_y;
            const double v = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
            g.at(col, row) = v;
            total += v;
        }
    if (!(total > 0.0)) {
        g.at(norm_to_pixel(sample.handle_x, w), norm_to_pixel(sample.handle_y, h)) = 1.0;
        return g;
    }
    for (double& v : g.values) v /= total;
    return g;
}

}  // namespace layoutnet

#include "layoutnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "layoutnet/gradcheck.hpp"
#include "layoutnet/image.hpp"
#include "layoutnet/render.hpp"
#include "layoutnet/synth.hpp"
#include "layoutnet/train.hpp"

namespace layoutnet {

namespace fs = std::filesystem;

namespace {

struct UsageError : Error {
    using Error::Error;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw UsageError(fmt::format("{}: '{}' is not a number", what, text));
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

std::string layout_lines(const std::vector<Layout>& layouts) {
    std::string s;
    for (const auto& l : layouts) s += l.to_line() + "\n";
    return s;
}

// Shared across subcommands.
struct Common {
    std::string config;
    std::uint64_t seed = 1;
    std::string out = "out";
};

struct SamplerFlags {
    std::string sampler = "ddpm";
    double eta = 1.0;

    SampleOptions options() const {
        SampleOptions o;
        o.sampler = parse_sampler(sampler);
        o.eta = eta;
        return o;
    }
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "key = value file; flags given here override it");
    sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

void add_sampler(CLI::App* sub, SamplerFlags& s) {
    sub->add_option("--sampler", s.sampler, "ddpm or ddim")->capture_default_str()->check(CLI::IsMember({"ddpm", "ddim"}));
    sub->add_option("--eta", s.eta, "ddim stochasticity in [0, 1]")->capture_default_str();
}

// Resolved options of the chosen subcommand, in declaration order.
std::string run_echo(const CLI::App* sub) {
    std::string text = fmt::format("# layoutnet {}\n", sub->get_name());
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        std::string value = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
        if (value.empty()) continue;
        text += fmt::format("{} = {}\n", name, value);
    }
    return text;
}

SceneSample load_scene(const std::string& dir, const Model& model) {
    SceneSample s = read_sample_dir(dir);
    if (s.object_grid.width != model.params.arch.grid || s.object_grid.height != model.params.arch.grid)
        throw DimensionMismatch(fmt::format("scene '{}' is {}x{} but the model expects {}", dir, s.object_grid.width,
                                            s.object_grid.height, model.params.arch.grid));
    return s;
}

GuidanceSpec parse_fix(const std::string& text) {
    GuidanceSpec g;
    for (const auto& item : split_list(text)) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError(fmt::format("--fix entry '{}' is not name=value", item));
        const std::string name = trim(item.substr(0, eq));
        const auto it = std::find(kLayoutNames.begin(), kLayoutNames.end(), name);
        if (it == kLayoutNames.end()) throw UsageError(fmt::format("--fix: unknown layout parameter '{}'", name));
        const auto d = static_cast<std::size_t>(it - kLayoutNames.begin());
        g.mask[d] = 1.0;
        g.target[d] = parse_number(trim(item.substr(eq + 1)), "--fix " + name);
    }
    if (!g.any()) throw UsageError("--fix names no parameter");
    return g;
}

std::vector<SceneSample> limit(std::vector<SceneSample> v, int n) {
    if (n > 0 && static_cast<std::size_t>(n) < v.size()) v.resize(static_cast<std::size_t>(n));
    return v;
}

struct TrainFlags {
    std::string data;
    int steps = 5000;
    int batch = 32;
    double lr = 3e-3;
    std::string lr_schedule = "constant";
    std::string init;
    double lambda = 10.0;
    bool mask_loss = true;
    std::string conditioning = "mask";
    int schedule_steps = 100;
    std::string family = "linear";
    int log_every = 100;

    void add(CLI::App* sub, bool with_init) {
        sub->add_option("--data", data, "dataset directory")->required();
        sub->add_option("--steps", steps, "optimizer steps")->capture_default_str();
        sub->add_option("--batch", batch, "minibatch size")->capture_default_str();
        sub->add_option("--lr", lr, "learning rate")->capture_default_str();
        sub->add_option("--lr-schedule", lr_schedule, "constant or cosine")->capture_default_str();
        if (with_init) sub->add_option("--init", init, "warm-start checkpoint");
        sub->add_option("--lambda", lambda, "weight of the parameter loss")->capture_default_str();
        if (with_init) {
            sub->add_option("--mask-loss", mask_loss, "include the splatted mask loss")->capture_default_str();
            sub->add_option("--conditioning", conditioning, "mask or vector")->capture_default_str();
        }
        sub->add_option("--schedule-steps", schedule_steps, "diffusion steps T")->capture_default_str();
        sub->add_option("--family", family, "linear or cosine")->capture_default_str();
        sub->add_option("--log-every", log_every, "loss log interval")->capture_default_str();
    }

    TrainConfig config(std::uint64_t seed) const {
        TrainConfig c;
        c.steps = steps;
        c.batch = batch;
        c.lr = lr;
        c.lr_schedule = parse_lr_schedule(lr_schedule);
        c.seed = seed;
        c.loss.lambda = lambda;
        c.loss.use_mask_loss = mask_loss;
        c.arch.conditioning = parse_conditioning(conditioning);
        c.schedule_steps = schedule_steps;
        c.family = parse_schedule_family(family);
        c.log_every = log_every;
        if (!init.empty()) c.init = init;
        return c;
    }
};

}  // namespace

std::vector<std::string> read_config_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError(fmt::format("cannot open config file '{}'", path));
    std::vector<std::string> args;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(fmt::format("{}:{}: expected 'key = value'", path, lineno));
        const std::string key = trim(line.substr(0, eq));
        if (key.empty() || key == "config") throw UsageError(fmt::format("{}:{}: invalid key", path, lineno));
        args.push_back(fmt::format("--{}={}", key, trim(line.substr(eq + 1))));
    }
    return args;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hand layout diffusion on synthetic object scenes", "layoutnet"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    Common common;
    std::map<std::string, std::function<void()>> handlers;
    fs::path outdir;

    // gen-data
    int n_scenes = 2000, n_instances = 20, size = 32, held_out = 5;
    std::uint64_t instance_seed = 1;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset with an instance-held-out split");
    add_common(gen, common);
    gen->add_option("--n-scenes", n_scenes, "number of scenes")->capture_default_str();
    gen->add_option("--n-instances", n_instances, "number of object instances")->capture_default_str();
    gen->add_option("--size", size, "scene grid size")->capture_default_str();
    gen->add_option("--held-out", held_out, "instances reserved for the test split")->capture_default_str();
    gen->add_option("--instance-seed", instance_seed, "seed of the instance shape table")->capture_default_str();
    handlers["gen-data"] = [&] {
        GeneratorConfig g;
        g.size = size;
        g.n_instances = n_instances;
        g.instance_seed = instance_seed;
        g.validate();
        const auto scenes = generate_scenes(common.seed, n_scenes, g);
        Rng rng = derived_rng(common.seed, 0xb5ad4eceda1ce2a9ULL);
        const auto tags = instance_split_tags(scenes, held_out, rng);
        const DatasetManifest m = write_dataset(scenes, outdir, tags);
        out << fmt::format("wrote {} scenes ({} test) to {}\n", m.records.size(), m.with_split("test").size(),
                           outdir.string());
    };

    // train
    TrainFlags tf;
    auto* trn = app.add_subcommand("train", "train the layout denoiser on the train split");
    add_common(trn, common);
    tf.add(trn, true);
    handlers["train"] = [&] {
        TrainConfig cfg = tf.config(common.seed);
        const auto scenes = read_split(tf.data, "train");
        if (scenes.empty()) throw Error(fmt::format("dataset '{}' has no train split", tf.data));
        cfg.arch.grid = scenes.front().object_grid.width;
        cfg.loss.mask_res = cfg.arch.grid;
        const TrainResult res = train(cfg, scenes);
        save_checkpoint(res.model, outdir / "model.ckpt");
        write_file(outdir / "loss.txt", format_loss_log(res.log));
        MetricsReport r;
        r.set("steps", cfg.steps);
        r.set("train_scenes", static_cast<double>(scenes.size()));
        if (!res.losses.empty()) {
            r.set("loss_first", res.losses.front());
            r.set("loss_last", res.losses.back());
            r.set("loss_smoothed_last", res.smoothed.back());
        }
        write_file(outdir / "metrics.txt", r.to_text());
        out << fmt::format("trained {} steps on {} scenes\n", cfg.steps, scenes.size());
        out << r.to_text();
    };

    // sample
    std::string ckpt, scene_dir;
    int n_samples = 8;
    SamplerFlags sf;
    auto* smp = app.add_subcommand("sample", "draw layouts for one scene");
    add_common(smp, common);
    smp->add_option("--ckpt", ckpt, "model checkpoint")->required();
    smp->add_option("--scene", scene_dir, "sample directory with object.pgm")->required();
    smp->add_option("--n", n_samples, "number of layouts")->capture_default_str();
    add_sampler(smp, sf);
    handlers["sample"] = [&] {
        const Model model = load_checkpoint(ckpt);
        const SceneSample scene = load_scene(scene_dir, model);
        Rng rng(common.seed);
        std::vector<Layout> layouts;
        for (int i = 0; i < n_samples; ++i) layouts.push_back(sample_layout(model, scene.object_grid, sf.options(), rng));
        fs::create_directories(outdir / "masks");
        for (std::size_t i = 0; i < layouts.size(); ++i)
            render_mask(splat(layouts[i], scene.object_grid.width, scene.object_grid.height, TemplateSpec{}),
                        outdir / "masks" / fmt::format("mask_{:03d}.pgm", i));
        write_pgm(outdir / "scene.pgm", scene.object_grid);
        write_pgm(outdir / "overlay.pgm", compose_overlay(scene.object_grid, layouts));
        write_file(outdir / "layouts.txt", layout_lines(layouts));
        out << layout_lines(layouts);
    };

    // guide
    std::string fix;
    auto* gde = app.add_subcommand("guide", "sample layouts with some parameters pinned");
    add_common(gde, common);
    gde->add_option("--ckpt", ckpt, "model checkpoint")->required();
    gde->add_option("--scene", scene_dir, "sample directory with object.pgm")->required();
    gde->add_option("--fix", fix, "pinned parameters, e.g. x=0.1,y=-0.2,a=0.3")->required();
    gde->add_option("--n", n_samples, "number of layouts")->capture_default_str();
    add_sampler(gde, sf);
    handlers["guide"] = [&] {
        const GuidanceSpec g = parse_fix(fix);
        const Model model = load_checkpoint(ckpt);
        const SceneSample scene = load_scene(scene_dir, model);
        SampleOptions o = sf.options();
        o.guidance = g;
        Rng rng(common.seed);
        std::vector<Layout> layouts;
        for (int i = 0; i < n_samples; ++i) layouts.push_back(sample_layout(model, scene.object_grid, o, rng));
        const ConstraintError ce = constraint_error(layouts, std::vector<GuidanceSpec>(layouts.size(), g));
        MetricsReport r;
        for (std::size_t d = 0; d < kLayoutDims; ++d)
            if (ce.count[d] > 0) r.set(fmt::format("constraint_mae_{}", kLayoutNames[d]), ce.mae[d]);
        r.set("constraint_mae", ce.overall);
        write_pgm(outdir / "overlay.pgm", compose_overlay(scene.object_grid, layouts));
        write_file(outdir / "layouts.txt", layout_lines(layouts));
        write_file(outdir / "metrics.txt", r.to_text());
        out << layout_lines(layouts) << r.to_text();
    };

    // interpolate
    std::string from_line, to_line;
    int k_steps = 8;
    auto* itp = app.add_subcommand("interpolate", "render a strip of layouts between two endpoints");
    add_common(itp, common);
    itp->add_option("--scene", scene_dir, "sample directory with object.pgm")->required();
    itp->add_option("--from", from_line, "start layout 'a x y b1 b2'");
    itp->add_option("--to", to_line, "end layout 'a x y b1 b2'");
    itp->add_option("--ckpt", ckpt, "sample missing endpoints from this model");
    itp->add_option("--k", k_steps, "interpolation steps")->capture_default_str();
    add_sampler(itp, sf);
    handlers["interpolate"] = [&] {
        const SceneSample scene = read_sample_dir(scene_dir);
        Rng rng(common.seed);
        std::optional<Model> model;
        if (!ckpt.empty()) model = load_checkpoint(ckpt);
        const auto endpoint = [&](const std::string& line, const char* flag) {
            if (!line.empty()) return Layout::parse_line(line);
            if (!model) throw UsageError(fmt::format("interpolate needs {} or --ckpt", flag));
            return sample_layout(*model, load_scene(scene_dir, *model).object_grid, sf.options(), rng);
        };
        const Layout a = endpoint(from_line, "--from");
        const Layout b = endpoint(to_line, "--to");
        const InterpolationFrames frames = interpolate_demo(scene.object_grid, a, b, k_steps);
        fs::create_directories(outdir / "frames");
        for (std::size_t i = 0; i < frames.frames.size(); ++i)
            write_pgm(outdir / "frames" / fmt::format("frame_{:03d}.pgm", i), frames.frames[i]);
        write_pgm(outdir / "strip.pgm", image_strip(frames.frames));
        write_file(outdir / "layouts.txt", layout_lines(frames.layouts));
        out << layout_lines(frames.layouts);
    };

    // heatmap
    double sigma = 0.1;
    bool uniform = false;
    auto* hmp = app.add_subcommand("heatmap", "sample layouts at locations drawn from a contact heatmap");
    add_common(hmp, common);
    hmp->add_option("--ckpt", ckpt, "model checkpoint")->required();
    hmp->add_option("--scene", scene_dir, "sample directory with object.pgm")->required();
    hmp->add_option("--n", n_samples, "number of locations")->capture_default_str();
    hmp->add_option("--sigma", sigma, "heatmap bump width (normalized units)")->capture_default_str();
    hmp->add_option("--uniform", uniform, "use a uniform heatmap instead of the handle bump")->capture_default_str();
    add_sampler(hmp, sf);
    handlers["heatmap"] = [&] {
        const Model model = load_checkpoint(ckpt);
        const SceneSample scene = load_scene(scene_dir, model);
        Grid heat(scene.object_grid.width, scene.object_grid.height);
        if (uniform) {
            std::fill(heat.values.begin(), heat.values.end(), 1.0 / static_cast<double>(heat.size()));
        } else {
            heat = heatmap_for_scene(scene, sigma);
        }
        Rng rng(common.seed);
        const HeatmapSamples hs = heatmap_guided_sample(model, scene.object_grid, heat, n_samples, sf.options(), rng);
        std::string locs;
        std::vector<GuidanceSpec> specs;
        for (const auto& p : hs.locations) {
            locs += fmt::format("{:.17g} {:.17g}\n", p[0], p[1]);
            GuidanceSpec g;
            g.mask[1] = g.mask[2] = 1.0;
            g.target[1] = p[0];
            g.target[2] = p[1];
            specs.push_back(g);
        }
        Grid shown = heat;
        const double peak = *std::max_element(heat.values.begin(), heat.values.end());
        for (double& v : shown.values) v /= peak;
        MetricsReport r;
        if (!hs.layouts.empty()) {
            const ConstraintError ce = constraint_error(hs.layouts, specs);
            r.set("constraint_mae_x", ce.mae[1]);
            r.set("constraint_mae_y", ce.mae[2]);
            const ChiSquare chi = coarse_uniformity(hs.locations);
            r.set("chi_square", chi.statistic);
            r.set("chi_square_p", chi.p_value);
        }
        write_pgm(outdir / "heatmap.pgm", shown);
        write_pgm(outdir / "overlay.pgm", hs.overlay);
        write_file(outdir / "locations.txt", locs);
        write_file(outdir / "layouts.txt", layout_lines(hs.layouts));
        write_file(outdir / "metrics.txt", r.to_text());
        out << r.to_text();
    };

    // scene
    std::string scenes_list, widths_list;
    double hand_size = 0.1;
    auto* scn = app.add_subcommand("scene", "sample crops of one scene with a shared absolute hand size");
    add_common(scn, common);
    scn->add_option("--ckpt", ckpt, "model checkpoint")->required();
    scn->add_option("--scenes", scenes_list, "comma-separated sample directories, one per crop")->required();
    scn->add_option("--crop-widths", widths_list, "comma-separated crop widths")->required();
    scn->add_option("--hand-size", hand_size, "shared absolute palm size a^2")->capture_default_str();
    add_sampler(scn, sf);
    handlers["scene"] = [&] {
        const auto dirs = split_list(scenes_list);
        const auto widths = split_list(widths_list);
        if (dirs.size() != widths.size() || dirs.empty())
            throw UsageError("--scenes and --crop-widths need the same non-zero number of entries");
        const Model model = load_checkpoint(ckpt);
        std::vector<SceneSample> scenes;
        for (const auto& d : dirs) scenes.push_back(load_scene(d, model));
        std::vector<CropRequest> crops;
        for (std::size_t i = 0; i < dirs.size(); ++i)
            crops.push_back({&scenes[i].object_grid, parse_number(widths[i], "--crop-widths")});
        Rng rng(common.seed);
        const auto res = scene_consistent_sample(model, crops, hand_size, sf.options(), rng);
        std::string text = "# crop relative_size absolute_size a x y b1 b2\n";
        for (std::size_t i = 0; i < res.size(); ++i) {
            text += fmt::format("{} {:.17g} {:.17g} {}\n", i, res[i].relative_size, res[i].absolute_size,
                                res[i].layout.to_line());
            write_pgm(outdir / fmt::format("overlay_{:03d}.pgm", i), compose_overlay(scenes[i].object_grid, {res[i].layout}));
        }
        write_file(outdir / "layouts.txt", text);
        out << text;
    };

    // eval
    std::string data_dir, split = "test";
    int n_eval = 100, dilation = 2;
    double palm_fraction = 1.0;
    auto* evl = app.add_subcommand("eval", "contact recall of sampled layouts on a dataset split");
    add_common(evl, common);
    evl->add_option("--ckpt", ckpt, "model checkpoint")->required();
    evl->add_option("--data", data_dir, "dataset directory")->required();
    evl->add_option("--split", split, "split tag")->capture_default_str();
    evl->add_option("--n", n_eval, "evaluate the first n scenes (0 = all)")->capture_default_str();
    evl->add_option("--palm-fraction", palm_fraction, "palm disk radius over a^2")->capture_default_str();
    evl->add_option("--dilation", dilation, "object mask dilation in pixels")->capture_default_str();
    add_sampler(evl, sf);
    handlers["eval"] = [&] {
        const Model model = load_checkpoint(ckpt);
        const auto scenes = limit(read_split(data_dir, split), n_eval);
        if (scenes.empty()) throw Error(fmt::format("split '{}' of '{}' is empty", split, data_dir));
        EvalOptions eo;
        eo.sampling = sf.options();
        eo.seed = common.seed;
        eo.palm_fraction = palm_fraction;
        eo.dilation_px = dilation;
        const EvalResult ev = evaluate(model, scenes, eo);
        write_file(outdir / "metrics.txt", ev.report.to_text());
        write_file(outdir / "layouts.txt", layout_lines(ev.layouts));
        out << ev.report.to_text();
    };

    // ablate
    TrainFlags af;
    auto* abl = app.add_subcommand("ablate", "train and compare the full, vector-conditioned and no-mask-loss variants");
    add_common(abl, common);
    af.add(abl, false);
    abl->add_option("--split", split, "evaluation split")->capture_default_str();
    abl->add_option("--n", n_eval, "evaluate the first n scenes (0 = all)")->capture_default_str();
    add_sampler(abl, sf);
    handlers["ablate"] = [&] {
        TrainConfig cfg = af.config(common.seed);
        const auto train_scenes = read_split(af.data, "train");
        const auto test_scenes = limit(read_split(af.data, split), n_eval);
        if (train_scenes.empty() || test_scenes.empty()) throw Error("ablation needs non-empty train and evaluation splits");
        cfg.arch.grid = train_scenes.front().object_grid.width;
        cfg.loss.mask_res = cfg.arch.grid;
        EvalOptions eo;
        eo.sampling = sf.options();
        eo.seed = common.seed;
        const AblationTable t = ablation_suite(cfg, train_scenes, test_scenes, eo);
        write_file(outdir / "ablation.txt", t.to_text());
        out << t.to_text();
    };

    // check-grad
    int n_layouts = 100, grid = 64;
    double fd_step = 1e-4;
    auto* chk = app.add_subcommand("check-grad", "finite-difference checks of the splat Jacobian and the loss gradient");
    add_common(chk, common);
    chk->add_option("--layouts", n_layouts, "random layouts for the Jacobian check")->capture_default_str();
    chk->add_option("--size", grid, "splat grid size")->capture_default_str();
    chk->add_option("--step", fd_step, "central-difference step")->capture_default_str();
    int exit_status = 0;
    handlers["check-grad"] = [&] {
        Rng rng(common.seed);
        const JacobianCheck jc = check_splat_jacobian(n_layouts, grid, TemplateSpec{}, fd_step, rng);

        DenoiserArch arch;
        arch.grid = 16;
        arch.conv1 = arch.conv2 = 2;
        arch.cond_dim = arch.time_dim = 4;
        arch.hidden = 6;
        arch.layers = 2;
        GeneratorConfig g;
        g.size = 16;
        const auto scenes = generate_scenes(common.seed, 2, g);
        const std::vector<TrainingItem> batch{{&scenes[0].object_grid, scenes[0].gt_layout},
                                              {&scenes[1].object_grid, scenes[1].gt_layout}};
        LossConfig lc;
        lc.mask_res = 16;
        const NoiseSchedule sched = build_schedule(20, ScheduleFamily::linear);
        const LossGradCheck lg = check_loss_gradient(batch, DenoiserParams::init(arch, common.seed), lc, sched, common.seed);

        const bool ok = jc.max_rel < 1e-3 && lg.max_rel < 1e-4;
        const std::string text = fmt::format(
            "splat jacobian: {} layouts on {}x{}, max relative error {:.3e}\n"
            "loss gradient: {} parameters, max relative error {:.3e}\n{}\n",
            jc.layouts, grid, grid, jc.max_rel, lg.params, lg.max_rel, ok ? "ok" : "FAILED");
        write_file(outdir / "check_grad.txt", text);
        out << text;
        if (!ok) exit_status = 2;
    };

    // oracle-check
    int oracle_steps = 100, chains = 10000;
    double mu = 3.0, sd = 0.5;
    std::string family = "linear";
    auto* orc = app.add_subcommand("oracle-check", "sampler moments under the closed-form Gaussian denoiser");
    add_common(orc, common);
    orc->add_option("--steps", oracle_steps, "diffusion steps T")->capture_default_str();
    orc->add_option("--chains", chains, "reverse chains per sampler")->capture_default_str();
    orc->add_option("--mu", mu, "target mean")->capture_default_str();
    orc->add_option("--sigma", sd, "target standard deviation")->capture_default_str();
    orc->add_option("--family", family, "linear or cosine")->capture_default_str();
    handlers["oracle-check"] = [&] {
        const NoiseSchedule sched = build_schedule(oracle_steps, parse_schedule_family(family));
        std::string text = fmt::format("{:<6} {:>4} {:>10} {:>10} {:>8}\n", "sampler", "eta", "mean", "std", "result");
        bool ok = true;
        for (const auto kind : {SamplerKind::ddpm, SamplerKind::ddim}) {
            Rng rng = derived_rng(common.seed, static_cast<std::uint64_t>(kind));
            const MomentReport r = sampler_moment_check(sched, kind, 1.0, mu, sd, chains, rng);
            ok = ok && r.pass;
            text += fmt::format("{:<6} {:>4.1f} {:>10.5f} {:>10.5f} {:>8}\n", to_string(kind), r.eta, r.mean, r.std,
                                r.pass ? "pass" : "FAIL");
        }
        text += fmt::format("target N({}, {}^2), T={}, {} chains; tolerance mean +-0.02, std +-2%\n", mu, sd, oracle_steps,
                            chains);
        write_file(outdir / "oracle.txt", text);
        out << text;
        if (!ok) exit_status = 2;
    };

    // Config values go right after the subcommand so explicit flags win.
    std::vector<std::string> args = raw_args;
    try {
        for (std::size_t i = 0; i < args.size(); ++i) {
            std::string path;
            if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
            if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
            if (path.empty()) continue;
            const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
            const auto extra = read_config_args(path);
            args.insert(sub == args.end() ? args.begin() : sub + 1, extra.begin(), extra.end());
            break;
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    const CLI::App* chosen = app.get_subcommands().front();
    try {
        outdir = common.out;
        fs::create_directories(outdir);
        write_file(outdir / "run.txt", run_echo(chosen));
        handlers.at(chosen->get_name())();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << chosen->help();
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_status;
}

}  // namespace layoutnet

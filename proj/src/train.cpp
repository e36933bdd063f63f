#include "layoutnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <json.hpp>

namespace layoutnet {

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw DimensionMismatch(fmt::format("adam_step: {} params, {} grads, state of {}", params.size(), grads.size(),
                                            state.m.size()));
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i])) throw Error(fmt::format("non-finite gradient at parameter {}", i));
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps);
    }
}

LrSchedule parse_lr_schedule(std::string_view name) {
    if (name == "constant") return LrSchedule::constant;
    if (name == "cosine") return LrSchedule::cosine;
    throw DomainError(fmt::format("unknown learning-rate schedule '{}'", name));
}

std::string_view to_string(LrSchedule s) {
    return s == LrSchedule::constant ? "constant" : "cosine";
}

void TrainConfig::validate() const {
    if (steps < 0) throw DomainError("steps must be non-negative");
    if (batch < 1) throw DomainError("batch must be positive");
    if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
    if (log_every < 1) throw DomainError("log_every must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0))
        throw DomainError("invalid optimizer betas/epsilon");
    loss.validate();
    arch.validate();
}

TrainResult train(const TrainConfig& cfg, const std::vector<SceneSample>& scenes) {
    cfg.validate();
    if (scenes.empty()) throw Error("training set is empty");

    TrainResult res;
    if (cfg.init) {
        res.model = load_checkpoint(*cfg.init);
    } else {
        res.model = Model{DenoiserParams::init(cfg.arch, cfg.seed), cfg.schedule_steps, cfg.family};
    }
    const DenoiserArch& arch = res.model.params.arch;
    for (const auto& s : scenes)
        if (s.object_grid.width != arch.grid || s.object_grid.height != arch.grid)
            throw DimensionMismatch(fmt::format("scene grid {}x{} does not match model grid {}", s.object_grid.width,
                                                s.object_grid.height, arch.grid));

    const NoiseSchedule sched = res.model.schedule();
    std::vector<double>& params = res.model.params.values;
    AdamState state(params.size());
    Rng rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, scenes.size() - 1);
    std::vector<TrainingItem> batch(static_cast<std::size_t>(cfg.batch));
    double ema = 0.0;
    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& item : batch) {
            const SceneSample& s = scenes[pick(rng)];
            item = {&s.object_grid, s.gt_layout};
        }
        const LossResult lr = total_loss(batch, res.model.params, cfg.loss, sched, rng);
        if (!(lr.total <= cfg.divergence_limit))
            throw Error(fmt::format("training diverged at step {} (loss {})", step, lr.total));
        ema = step == 0 ? lr.total : 0.98 * ema + 0.02 * lr.total;
        res.losses.push_back(lr.total);
        res.smoothed.push_back(ema);
        if (step % cfg.log_every == 0 || step + 1 == cfg.steps) res.log.push_back({step, lr.total, ema});
        double rate = cfg.lr;
        if (cfg.lr_schedule == LrSchedule::cosine)
            rate *= 0.5 * (1.0 + std::cos(std::numbers::pi * step / static_cast<double>(cfg.steps)));
        adam_step(params, lr.grad, state, rate, cfg.adam);
    }
    return res;
}

std::string format_loss_log(const std::vector<LossLogEntry>& log) {
    std::string out = "# step loss smoothed\n";
    for (const auto& e : log) out += fmt::format("{} {:.10g} {:.10g}\n", e.step, e.loss, e.smoothed);
    return out;
}

bool in_contact(const Layout& layout, const Grid& mask, double palm_fraction, int dilation_px) {
    if (!(palm_fraction > 0.0) || dilation_px < 0) throw DomainError("palm_fraction must be positive, dilation >= 0");
    const int w = mask.width, h = mask.height;
    const double r = palm_fraction * layout.scale();
    const double px = 2.0 / w, py = 2.0 / h;
    const double reach2 = static_cast<double>(dilation_px) * dilation_px;
    const auto near_object = [&](int col, int row) {
        for (int dr = -dilation_px; dr <= dilation_px; ++dr)
            for (int dc = -dilation_px; dc <= dilation_px; ++dc) {
                const int c = col + dc, rr = row + dr;
                if (c < 0 || rr < 0 || c >= w || rr >= h) continue;
                if (dc * dc + dr * dr <= reach2 && mask.at(c, rr) > 0.5) return true;
            }
        return false;
    };
    for (int row = 0; row < h; ++row) {
        const double y0 = -1.0 + row * py;
        const double dy = std::max({y0 - layout.y, 0.0, layout.y - (y0 + py)});
        for (int col = 0; col < w; ++col) {
            const double x0 = -1.0 + col * px;
            const double dx = std::max({x0 - layout.x, 0.0, layout.x - (x0 + px)});
            if (dx * dx + dy * dy <= r * r && near_object(col, row)) return true;
        }
    }
    return false;
}

double contact_recall(const std::vector<Layout>& layouts, const std::vector<SceneSample>& scenes, double palm_fraction,
                      int dilation_px) {
    if (layouts.size() != scenes.size())
        throw DimensionMismatch(fmt::format("{} layouts for {} scenes", layouts.size(), scenes.size()));
    if (layouts.empty()) throw DomainError("contact recall of an empty set is undefined");
    int hits = 0;
    for (std::size_t i = 0; i < layouts.size(); ++i)
        hits += in_contact(layouts[i], scenes[i].object_mask, palm_fraction, dilation_px);
    return static_cast<double>(hits) / static_cast<double>(layouts.size());
}

ConstraintError constraint_error(const std::vector<Layout>& layouts, const std::vector<GuidanceSpec>& specs) {
    if (layouts.size() != specs.size())
        throw DimensionMismatch(fmt::format("{} layouts for {} guidance specs", layouts.size(), specs.size()));
    ConstraintError out;
    double total = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        const Vec5 v = layouts[i].to_vec();
        for (std::size_t d = 0; d < kLayoutDims; ++d) {
            if (!specs[i].constrains(d)) continue;
            const double e = std::abs(v[d] - specs[i].target[d]);
            out.mae[d] += e;
            ++out.count[d];
            total += e;
            ++n;
        }
    }
    if (n == 0) throw DomainError("constraint error undefined: no coordinate is constrained");
    for (std::size_t d = 0; d < kLayoutDims; ++d)
        if (out.count[d] > 0) out.mae[d] /= out.count[d];
    out.overall = total / n;
    return out;
}

double gaussian_oracle_epsilon(double x_t, int t, double mu, double sigma, const NoiseSchedule& sched) {
    if (!(sigma >= 0.0)) throw DomainError("oracle sigma must be non-negative");
    const double cs = sched.signal_coef(t), cn = sched.noise_coef(t);
    return cn * (x_t - cs * mu) / (cs * cs * sigma * sigma + cn * cn);
}

MomentReport sampler_moment_check(const NoiseSchedule& sched, SamplerKind sampler, double eta, double mu, double sigma,
                                  int n_chains, Rng& rng) {
    if (n_chains < 1000) throw DomainError("moment check needs at least 1000 chains");
    const EpsilonFn oracle = [&](const Vec5& x, int t) {
        Vec5 e;
        for (std::size_t k = 0; k < kLayoutDims; ++k) e[k] = gaussian_oracle_epsilon(x[k], t, mu, sigma, sched);
        return e;
    };
    const ChainOptions opts{sampler, eta, std::nullopt};
    double s = 0.0, s2 = 0.0;
    for (int c = 0; c < n_chains; ++c) {
        const Vec5 x = run_reverse_chain(oracle, sched, opts, rng);
        for (double v : x) {
            s += v;
            s2 += v * v;
        }
    }
    MomentReport r;
    r.sampler = sampler;
    r.eta = eta;
    r.target_mean = mu;
    r.target_std = sigma;
    r.samples = static_cast<long>(n_chains) * static_cast<long>(kLayoutDims);
    r.mean = s / static_cast<double>(r.samples);
    r.std = std::sqrt(std::max(0.0, s2 / static_cast<double>(r.samples) - r.mean * r.mean));
    r.pass = std::abs(r.mean - mu) <= r.mean_tol && std::abs(r.std - sigma) <= r.std_rel_tol * sigma;
    return r;
}

void MetricsReport::set(const std::string& key, double value) {
    for (auto& [k, v] : metrics)
        if (k == key) {
            v = value;
            return;
        }
    metrics.emplace_back(key, value);
}

double MetricsReport::get(const std::string& key) const {
    for (const auto& [k, v] : metrics)
        if (k == key) return v;
    throw Error(fmt::format("metric '{}' not in report", key));
}

std::string MetricsReport::to_text() const {
    std::string out;
    for (const auto& line : config) out += "# " + line + "\n";
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : metrics) {
        out += fmt::format("{} = {:.10g}\n", k, v);
        j[k] = v;
    }
    out += "--- json\n" + j.dump() + "\n";
    return out;
}

EvalResult evaluate(const Model& model, const std::vector<SceneSample>& scenes, const EvalOptions& opts) {
    if (scenes.empty()) throw DomainError("evaluation set is empty");
    EvalResult res;
    double center_err = 0.0, scale_err = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        Rng rng = derived_rng(opts.seed, i);
        const Layout l = sample_layout(model, scenes[i].object_grid, opts.sampling, rng);
        center_err += std::hypot(l.x - scenes[i].gt_layout.x, l.y - scenes[i].gt_layout.y);
        scale_err += std::abs(l.scale() - scenes[i].gt_layout.scale());
        res.layouts.push_back(l);
    }
    const double n = static_cast<double>(scenes.size());
    MetricsReport& r = res.report;
    r.set("contact_recall", contact_recall(res.layouts, scenes, opts.palm_fraction, opts.dilation_px));
    r.set("palm_center_error", center_err / n);
    r.set("palm_scale_error", scale_err / n);
    r.set("samples", n);
    if (opts.sampling.guidance && opts.sampling.guidance->any()) {
        const std::vector<GuidanceSpec> specs(scenes.size(), *opts.sampling.guidance);
        const ConstraintError ce = constraint_error(res.layouts, specs);
        for (std::size_t d = 0; d < kLayoutDims; ++d)
            if (ce.count[d] > 0) r.set(fmt::format("constraint_mae_{}", kLayoutNames[d]), ce.mae[d]);
    }
    r.config = {fmt::format("sampler {} eta {}", to_string(opts.sampling.sampler), opts.sampling.eta),
                fmt::format("seed {}", opts.seed),
                fmt::format("palm_fraction {} dilation_px {}", opts.palm_fraction, opts.dilation_px),
                model.params.arch.describe()};
    return res;
}

std::string AblationTable::to_text() const {
    std::string out = fmt::format("{:<10} {:>14} {:>12}\n", "variant", "contact_recall", "final_loss");
    for (const auto& r : rows) out += fmt::format("{:<10} {:>14.4f} {:>12.5f}\n", r.label, r.contact_recall, r.final_loss);
    const auto find = [&](const char* label) -> const AblationRow* {
        for (const auto& r : rows)
            if (r.label == label) return &r;
        return nullptr;
    };
    const AblationRow *full = find("full"), *vec = find("vector"), *nomask = find("no-mask");
    if (full && vec)
        out += fmt::format("full >= vector: {}\n", full->contact_recall >= vec->contact_recall ? "yes" : "no");
    if (full && nomask)
        out += fmt::format("full >= no-mask: {}\n", full->contact_recall >= nomask->contact_recall ? "yes" : "no");
    return out;
}

AblationTable ablation_suite(const TrainConfig& base, const std::vector<SceneSample>& train_scenes,
                             const std::vector<SceneSample>& test_scenes, const EvalOptions& eval) {
    TrainConfig full = base;
    full.init.reset();
    full.arch.conditioning = Conditioning::mask_stack;
    full.loss.use_mask_loss = true;
    TrainConfig vec = full;
    vec.arch.conditioning = Conditioning::vector;
    TrainConfig nomask = full;
    nomask.loss.use_mask_loss = false;

    AblationTable table;
    for (const auto& [label, cfg] : {std::pair{"full", full}, std::pair{"vector", vec}, std::pair{"no-mask", nomask}}) {
        const TrainResult tr = train(cfg, train_scenes);
        const EvalResult ev = evaluate(tr.model, test_scenes, eval);
        table.rows.push_back({label, ev.report.get("contact_recall"), tr.smoothed.empty() ? 0.0 : tr.smoothed.back()});
    }
    return table;
}

Benchmark make_benchmark(const BenchmarkConfig& cfg) {
    const auto scenes = generate_scenes(cfg.seed, cfg.n_scenes, cfg.generator);
    Rng rng = derived_rng(cfg.seed, 0xb5ad4eceda1ce2a9ULL);
    const auto tags = instance_split_tags(scenes, cfg.held_out, rng);
    Benchmark b;
    for (std::size_t i = 0; i < scenes.size(); ++i) (tags[i] == "test" ? b.test : b.train).push_back(scenes[i]);
    return b;
}

}  // namespace layoutnet

#include "layoutnet/denoiser.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace layoutnet {

namespace {

constexpr std::string_view kCheckpointMagic = "LAYOUTNET-CKPT 1";

double silu(double z) {
    return z / (1.0 + std::exp(-z));
}

double silu_grad(double z) {
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

// 3x3 convolution, stride 2, zero padding 1. Tensors are [channel][row][col].
void conv_s2_forward(const double* in, int cin, int size, const double* w, const double* b, int cout,
                     std::vector<double>& out) {
    const int osz = size / 2;
    out.assign(static_cast<std::size_t>(cout) * osz * osz, 0.0);
    for (int co = 0; co < cout; ++co) {
        double* o = out.data() + static_cast<std::size_t>(co) * osz * osz;
        for (int oy = 0; oy < osz; ++oy) {
            for (int ox = 0; ox < osz; ++ox) {
                double acc = b[co];
                for (int ci = 0; ci < cin; ++ci) {
                    const double* plane = in + static_cast<std::size_t>(ci) * size * size;
                    const double* k = w + (static_cast<std::size_t>(co) * cin + ci) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= size) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = 2 * ox + kx - 1;
                            if (ix < 0 || ix >= size) continue;
                            acc += k[ky * 3 + kx] * plane[iy * size + ix];
                        }
                    }
                }
                o[oy * osz + ox] = acc;
            }
        }
    }
}

// d_in may be null when the input gradient is not needed.
void conv_s2_backward(const double* in, int cin, int size, const double* w, int cout, const std::vector<double>& d_out,
                      double* dw, double* db, double* d_in) {
    const int osz = size / 2;
    for (int co = 0; co < cout; ++co) {
        const double* g = d_out.data() + static_cast<std::size_t>(co) * osz * osz;
        for (int oy = 0; oy < osz; ++oy) {
            for (int ox = 0; ox < osz; ++ox) {
                const double go = g[oy * osz + ox];
                if (go == 0.0) continue;
                db[co] += go;
                for (int ci = 0; ci < cin; ++ci) {
                    const std::size_t plane_off = static_cast<std::size_t>(ci) * size * size;
                    const std::size_t k_off = (static_cast<std::size_t>(co) * cin + ci) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= size) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = 2 * ox + kx - 1;
                            if (ix < 0 || ix >= size) continue;
                            const std::size_t ii = plane_off + static_cast<std::size_t>(iy) * size + ix;
                            dw[k_off + ky * 3 + kx] += go * in[ii];
                            if (d_in) d_in[ii] += go * w[k_off + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

void dense_forward(const std::vector<double>& p, const ParamLayout::Dense& d, const double* in, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(d.out), 0.0);
    for (int o = 0; o < d.out; ++o) {
        const double* row = p.data() + d.w + static_cast<std::size_t>(o) * d.in;
        double acc = p[d.b + o];
        for (int i = 0; i < d.in; ++i) acc += row[i] * in[i];
        out[o] = acc;
    }
}

// Accumulates weight/bias gradients; writes d_in when non-null.
void dense_backward(const std::vector<double>& p, const ParamLayout::Dense& d, const double* in, const double* d_out,
                    std::vector<double>& grad, double* d_in) {
    if (d_in) std::fill(d_in, d_in + d.in, 0.0);
    for (int o = 0; o < d.out; ++o) {
        const double g = d_out[o];
        grad[d.b + o] += g;
        const std::size_t row = d.w + static_cast<std::size_t>(o) * d.in;
        for (int i = 0; i < d.in; ++i) {
            grad[row + i] += g * in[i];
            if (d_in) d_in[i] += g * p[row + i];
        }
    }
}

void check_stack(const DenoiserArch& arch, const Grid& g, const char* what) {
    if (g.width != arch.grid || g.height != arch.grid)
        throw DimensionMismatch(fmt::format("{} grid is {}x{}, network expects {}x{}", what, g.width, g.height, arch.grid,
                                            arch.grid));
}

std::vector<double> flatten_stack(const ConditionStack& s) {
    std::vector<double> in;
    in.reserve(s.object.size() * 3);
    in.insert(in.end(), s.object.values.begin(), s.object.values.end());
    in.insert(in.end(), s.mask.values.begin(), s.mask.values.end());
    in.insert(in.end(), s.blend.values.begin(), s.blend.values.end());
    return in;
}

// Encoder part of the forward pass; fills the trace's encoder fields and returns the features.
std::vector<double> encoder_forward(const DenoiserParams& params, const ConditionStack& stack, ForwardTrace& tr) {
    const DenoiserArch& a = params.arch;
    const ParamLayout lay(a);
    const auto& p = params.values;
    tr.input = flatten_stack(stack);
    conv_s2_forward(tr.input.data(), 3, a.grid, p.data() + lay.conv1_w, p.data() + lay.conv1_b, a.conv1, tr.conv1_pre);
    tr.conv1_act.resize(tr.conv1_pre.size());
    for (std::size_t i = 0; i < tr.conv1_pre.size(); ++i) tr.conv1_act[i] = silu(tr.conv1_pre[i]);
    conv_s2_forward(tr.conv1_act.data(), a.conv1, a.grid / 2, p.data() + lay.conv2_w, p.data() + lay.conv2_b, a.conv2,
                    tr.conv2_pre);
    tr.conv2_act.resize(tr.conv2_pre.size());
    for (std::size_t i = 0; i < tr.conv2_pre.size(); ++i) tr.conv2_act[i] = silu(tr.conv2_pre[i]);
    dense_forward(p, lay.encoder, tr.conv2_act.data(), tr.feat_pre);
    std::vector<double> feat(tr.feat_pre.size());
    for (std::size_t i = 0; i < feat.size(); ++i) feat[i] = silu(tr.feat_pre[i]);
    return feat;
}

Vec5 trunk_forward(const DenoiserParams& params, const Vec5& l_t, int t, const std::vector<double>& cond,
                   ForwardTrace& tr) {
    const DenoiserArch& a = params.arch;
    const ParamLayout lay(a);
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(a.trunk_in()));
    x.insert(x.end(), l_t.begin(), l_t.end());
    const auto emb = time_embedding(t, a.time_dim);
    x.insert(x.end(), emb.begin(), emb.end());
    x.insert(x.end(), cond.begin(), cond.end());

    tr.layer_in.clear();
    tr.layer_pre.clear();
    std::vector<double> pre;
    for (std::size_t k = 0; k + 1 < lay.trunk.size(); ++k) {
        dense_forward(params.values, lay.trunk[k], x.data(), pre);
        tr.layer_in.push_back(x);
        x.resize(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i) x[i] = silu(pre[i]);
        tr.layer_pre.push_back(pre);
    }
    dense_forward(params.values, lay.trunk.back(), x.data(), pre);
    tr.layer_in.push_back(x);
    Vec5 out;
    std::copy(pre.begin(), pre.end(), out.begin());
    tr.out = out;
    return out;
}

}  // namespace

Conditioning parse_conditioning(std::string_view name) {
    if (name == "mask") return Conditioning::mask_stack;
    if (name == "vector") return Conditioning::vector;
    throw DomainError(fmt::format("unknown conditioning '{}'", name));
}

std::string_view to_string(Conditioning c) {
    return c == Conditioning::mask_stack ? "mask" : "vector";
}

void DenoiserArch::validate() const {
    if (grid < 8 || grid % 4 != 0) throw DomainError(fmt::format("network grid must be a multiple of 4 and >= 8, got {}", grid));
    if (conv1 < 1 || conv2 < 1 || cond_dim < 1 || hidden < 1 || layers < 1)
        throw DomainError("network widths and depth must be positive");
    if (time_dim < 2 || time_dim % 2 != 0) throw DomainError("time embedding dimension must be even");
}

ParamLayout::ParamLayout(const DenoiserArch& arch) {
    std::size_t off = 0;
    const auto take = [&](std::size_t n) {
        const std::size_t at = off;
        off += n;
        return at;
    };
    const auto dense = [&](int in, int out) {
        Dense d;
        d.in = in;
        d.out = out;
        d.w = take(static_cast<std::size_t>(in) * out);
        d.b = take(static_cast<std::size_t>(out));
        return d;
    };
    conv1_w = take(static_cast<std::size_t>(arch.conv1) * 3 * 9);
    conv1_b = take(static_cast<std::size_t>(arch.conv1));
    conv2_w = take(static_cast<std::size_t>(arch.conv2) * arch.conv1 * 9);
    conv2_b = take(static_cast<std::size_t>(arch.conv2));
    encoder = dense(arch.conv2 * arch.pooled() * arch.pooled(), arch.cond_dim);
    int in = arch.trunk_in();
    for (int k = 0; k < arch.layers; ++k) {
        trunk.push_back(dense(in, arch.hidden));
        in = arch.hidden;
    }
    trunk.push_back(dense(in, static_cast<int>(kLayoutDims)));
    total = off;
}

std::size_t DenoiserArch::param_count() const {
    return ParamLayout(*this).total;
}

std::string DenoiserArch::describe() const {
    return fmt::format("grid={} conv1={} conv2={} cond={} time={} hidden={} layers={} conditioning={}", grid, conv1, conv2,
                       cond_dim, time_dim, hidden, layers, to_string(conditioning));
}

DenoiserArch DenoiserArch::parse(std::string_view line) {
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw Error(fmt::format("malformed architecture token '{}'", tok));
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    const auto get = [&](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw Error(fmt::format("architecture line lacks '{}'", key));
        return it->second;
    };
    DenoiserArch a;
    a.grid = std::stoi(get("grid"));
    a.conv1 = std::stoi(get("conv1"));
    a.conv2 = std::stoi(get("conv2"));
    a.cond_dim = std::stoi(get("cond"));
    a.time_dim = std::stoi(get("time"));
    a.hidden = std::stoi(get("hidden"));
    a.layers = std::stoi(get("layers"));
    a.conditioning = parse_conditioning(get("conditioning"));
    a.validate();
    return a;
}

DenoiserParams DenoiserParams::init(const DenoiserArch& arch, std::uint64_t seed) {
    arch.validate();
    const ParamLayout lay(arch);
    DenoiserParams p{arch, std::vector<double>(lay.total, 0.0)};
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto fill = [&](std::size_t off, std::size_t n, double stddev) {
        for (std::size_t i = 0; i < n; ++i) p.values[off + i] = stddev * normal(rng);
    };
    fill(lay.conv1_w, static_cast<std::size_t>(arch.conv1) * 27, std::sqrt(2.0 / 27.0));
    fill(lay.conv2_w, static_cast<std::size_t>(arch.conv2) * arch.conv1 * 9, std::sqrt(2.0 / (9.0 * arch.conv1)));
    fill(lay.encoder.w, static_cast<std::size_t>(lay.encoder.in) * lay.encoder.out, std::sqrt(1.0 / lay.encoder.in));
    for (std::size_t k = 0; k < lay.trunk.size(); ++k) {
        const auto& d = lay.trunk[k];
        const bool last = k + 1 == lay.trunk.size();
        fill(d.w, static_cast<std::size_t>(d.in) * d.out, (last ? 0.1 : 1.0) * std::sqrt(2.0 / d.in));
    }
    return p;
}

void LossConfig::validate() const {
    if (!(lambda >= 0.0)) throw DomainError("loss lambda must be non-negative");
    if (mask_res < 8) throw DomainError("mask loss resolution must be at least 8");
    templ.validate();
}

std::vector<double> time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw DomainError(fmt::format("time embedding dimension must be even, got {}", dim));
    if (t < 0) throw DomainError("time step must be non-negative");
    std::vector<double> e(static_cast<std::size_t>(dim));
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

ConditionStack condition_stack(const DenoiserArch& arch, const Grid& object, const LayoutMask& context) {
    check_stack(arch, object, "object");
    if (arch.conditioning == Conditioning::vector) return blend_condition(Grid(arch.grid, arch.grid), object);
    check_stack(arch, context, "mask context");
    return blend_condition(context, object);
}

ConditionEncoding encode_condition(const DenoiserParams& params, const Grid& object, const LayoutMask& mask_context) {
    ForwardTrace tr;
    return {encoder_forward(params, condition_stack(params.arch, object, mask_context), tr)};
}

ConditionEncoding encode_condition(const DenoiserParams& params, const Grid& object) {
    return encode_condition(params, object, Grid(object.width, object.height));
}

Vec5 denoiser_forward(const DenoiserParams& params, const Vec5& l_t, int t, const ConditionEncoding& cond) {
    if (static_cast<int>(cond.features.size()) != params.arch.cond_dim)
        throw DimensionMismatch(fmt::format("condition has {} features, network expects {}", cond.features.size(),
                                            params.arch.cond_dim));
    ForwardTrace tr;
    return trunk_forward(params, l_t, t, cond.features, tr);
}

Vec5 denoiser_forward_traced(const DenoiserParams& params, const ConditionStack& stack, const Vec5& l_t, int t,
                             ForwardTrace& trace) {
    const auto feat = encoder_forward(params, stack, trace);
    return trunk_forward(params, l_t, t, feat, trace);
}

void denoiser_backward(const DenoiserParams& params, const ForwardTrace& tr, const Vec5& d_out, std::vector<double>& grad) {
    const DenoiserArch& a = params.arch;
    const ParamLayout lay(a);
    const auto& p = params.values;
    if (grad.size() != lay.total) grad.assign(lay.total, 0.0);

    std::vector<double> d(d_out.begin(), d_out.end());
    std::vector<double> d_in;
    for (std::size_t k = lay.trunk.size(); k-- > 0;) {
        const auto& layer = lay.trunk[k];
        d_in.assign(static_cast<std::size_t>(layer.in), 0.0);
        dense_backward(p, layer, tr.layer_in[k].data(), d.data(), grad, d_in.data());
        if (k > 0) {
            const auto& pre = tr.layer_pre[k - 1];
            for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] *= silu_grad(pre[i]);
        }
        d.swap(d_in);
    }
    // d now holds the gradient of the trunk input; the condition features sit at the tail.
    const std::size_t cond_off = kLayoutDims + static_cast<std::size_t>(a.time_dim);
    std::vector<double> d_feat(d.begin() + static_cast<std::ptrdiff_t>(cond_off), d.end());
    for (std::size_t i = 0; i < d_feat.size(); ++i) d_feat[i] *= silu_grad(tr.feat_pre[i]);

    std::vector<double> d_conv2(tr.conv2_act.size(), 0.0);
    dense_backward(p, lay.encoder, tr.conv2_act.data(), d_feat.data(), grad, d_conv2.data());
    for (std::size_t i = 0; i < d_conv2.size(); ++i) d_conv2[i] *= silu_grad(tr.conv2_pre[i]);

    std::vector<double> d_conv1(tr.conv1_act.size(), 0.0);
    conv_s2_backward(tr.conv1_act.data(), a.conv1, a.grid / 2, p.data() + lay.conv2_w, a.conv2, d_conv2,
                     grad.data() + lay.conv2_w, grad.data() + lay.conv2_b, d_conv1.data());
    for (std::size_t i = 0; i < d_conv1.size(); ++i) d_conv1[i] *= silu_grad(tr.conv1_pre[i]);
    conv_s2_backward(tr.input.data(), 3, a.grid, p.data() + lay.conv1_w, a.conv1, d_conv1, grad.data() + lay.conv1_w,
                     grad.data() + lay.conv1_b, nullptr);
}

Vec5 predict_epsilon(const DenoiserParams& params, const Grid& object, const Vec5& l_t, int t, const TemplateSpec& templ) {
    const DenoiserArch& a = params.arch;
    const LayoutMask context = a.conditioning == Conditioning::mask_stack ? splat(guard_layout(l_t), a.grid, a.grid, templ)
                                                                           : Grid(a.grid, a.grid);
    ForwardTrace tr;
    return denoiser_forward_traced(params, condition_stack(a, object, context), l_t, t, tr);
}

double loss_para(const Vec5& eps, const Vec5& eps_hat) {
    double s = 0.0;
    for (std::size_t i = 0; i < kLayoutDims; ++i) {
        const double r = eps[i] - eps_hat[i];
        s += r * r;
    }
    return s;
}

Vec5 loss_para_grad(const Vec5& eps, const Vec5& eps_hat) {
    Vec5 g;
    for (std::size_t i = 0; i < kLayoutDims; ++i) g[i] = 2.0 * (eps_hat[i] - eps[i]);
    return g;
}

double loss_mask(const Vec5& l0, const Vec5& l0_hat, int res, const TemplateSpec& spec) {
    const LayoutMask target = splat(guard_layout(l0), res, res, spec);
    const LayoutMask pred = splat(guard_layout(l0_hat), res, res, spec);
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double r = target.values[i] - pred.values[i];
        s += r * r;
    }
    return s / static_cast<double>(target.size());
}

double loss_mask_grad(const Vec5& l0, const Vec5& l0_hat, int res, const TemplateSpec& spec, Vec5& grad) {
    const LayoutMask target = splat(guard_layout(l0), res, res, spec);
    LayoutMask pred;
    MaskJacobian jac;
    splat_with_jacobian(guard_layout(l0_hat), res, res, spec, pred, jac);
    const double n = static_cast<double>(target.size());
    double s = 0.0;
    grad = Vec5{};
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double r = target.values[i] - pred.values[i];
        s += r * r;
        const double w = -2.0 * r / n;
        for (std::size_t k = 0; k < kLayoutDims; ++k) grad[k] += w * jac.grad[i][k];
    }
    return s / n;
}

LossResult total_loss(const std::vector<TrainingItem>& batch, const DenoiserParams& params, const LossConfig& cfg,
                      const NoiseSchedule& sched, Rng& rng) {
    cfg.validate();
    if (batch.empty()) throw DomainError("empty training batch");
    const DenoiserArch& a = params.arch;
    LossResult res;
    res.grad.assign(params.values.size(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::uniform_int_distribution<int> step_dist(1, sched.steps());
    ForwardTrace tr;
    for (std::size_t item = 0; item < batch.size(); ++item) {
        const TrainingItem& it = batch[item];
        if (!it.object) throw DomainError("training item without object grid");
        const int t = step_dist(rng);
        const Vec5 eps = standard_normal5(rng);
        const Vec5 x0 = it.layout.to_vec();
        const Vec5 x_t = forward_noise(x0, t, eps, sched);

        const LayoutMask context = a.conditioning == Conditioning::mask_stack
                                       ? splat(guard_layout(x_t), a.grid, a.grid, cfg.templ)
                                       : Grid(a.grid, a.grid);
        const Vec5 eps_hat = denoiser_forward_traced(params, condition_stack(a, *it.object, context), x_t, t, tr);
        for (double v : eps_hat)
            if (!std::isfinite(v)) throw Error(fmt::format("non-finite loss at batch item {} (t={})", item, t));

        const double lp = loss_para(eps, eps_hat);
        Vec5 d_out = loss_para_grad(eps, eps_hat);
        for (double& g : d_out) g *= cfg.lambda;
        double lm = 0.0;
        if (cfg.use_mask_loss) {
            const Vec5 x0_hat = predict_x0(x_t, t, eps_hat, sched);
            Vec5 g_x0;
            lm = loss_mask_grad(x0, x0_hat, cfg.mask_res, cfg.templ, g_x0);
            const double d_x0_d_eps = -sched.noise_coef(t) / sched.signal_coef(t);
            for (std::size_t k = 0; k < kLayoutDims; ++k) d_out[k] += g_x0[k] * d_x0_d_eps;
        }
        const double item_loss = lm + cfg.lambda * lp;
        if (!std::isfinite(item_loss)) throw Error(fmt::format("non-finite loss at batch item {} (t={})", item, t));
        res.total += item_loss * inv_b;
        res.mask += lm * inv_b;
        res.para += lp * inv_b;
        for (double& g : d_out) g *= inv_b;
        denoiser_backward(params, tr, d_out, res.grad);
    }
    return res;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write checkpoint '{}'", path.string()));
    out << kCheckpointMagic << '\n';
    out << "arch " << model.params.arch.describe() << '\n';
    out << "schedule steps=" << model.steps << " family=" << to_string(model.family) << '\n';
    out << "params " << model.params.values.size() << '\n';
    for (double v : model.params.values) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        char buf[8];
        std::memcpy(buf, &bits, 8);
        out.write(buf, 8);
    }
    if (!out) throw Error(fmt::format("failed writing checkpoint '{}'", path.string()));
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open checkpoint '{}'", path.string()));
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic)
        throw Error(fmt::format("'{}' is not a layoutnet checkpoint", path.string()));
    Model model;
    if (!std::getline(in, line) || line.rfind("arch ", 0) != 0) throw Error("checkpoint missing architecture line");
    model.params.arch = DenoiserArch::parse(std::string_view(line).substr(5));
    if (!std::getline(in, line) || line.rfind("schedule ", 0) != 0) throw Error("checkpoint missing schedule line");
    {
        char family[32] = {};
        if (std::sscanf(line.c_str(), "schedule steps=%d family=%31s", &model.steps, family) != 2)
            throw Error(fmt::format("malformed schedule line '{}'", line));
        model.family = parse_schedule_family(family);
    }
    if (!std::getline(in, line) || line.rfind("params ", 0) != 0) throw Error("checkpoint missing parameter count");
    const std::size_t count = std::stoull(line.substr(7));
    if (count != model.params.arch.param_count())
        throw Error(fmt::format("checkpoint declares {} parameters, architecture needs {}", count,
                                model.params.arch.param_count()));
    model.params.values.resize(count);
    for (double& v : model.params.values) {
        char buf[8];
        if (!in.read(buf, 8)) throw Error(fmt::format("checkpoint '{}' is truncated", path.string()));
        std::uint64_t bits;
        std::memcpy(&bits, buf, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        v = std::bit_cast<double>(bits);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw Error(fmt::format("trailing bytes in checkpoint '{}'", path.string()));
    return model;
}

}  // namespace layoutnet

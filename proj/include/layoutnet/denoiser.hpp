#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "layoutnet/diffusion.hpp"
#include "layoutnet/geometry.hpp"
#include "layoutnet/types.hpp"

namespace layoutnet {

/// What the condition encoder sees besides the object grid.
///  mask_stack: splat of the current noisy layout and its blend with the object.
///  vector:     zero mask plane; the layout reaches the network only as a vector.
enum class Conditioning { mask_stack, vector };

Conditioning parse_conditioning(std::string_view name);
std::string_view to_string(Conditioning c);

/// Fixed network shape:
///   encoder  3 x grid^2 -> conv3x3/s2 -> conv3x3/s2 -> flatten -> dense(cond_dim)
///   trunk    [l_t | time embedding | condition] -> hidden x layers -> 5
/// All hidden activations are SiLU.
struct DenoiserArch {
    int grid = 32;
    int conv1 = 8;
    int conv2 = 8;
    int cond_dim = 32;
    int time_dim = 16;
    int hidden = 128;
    int layers = 3;
    Conditioning conditioning = Conditioning::mask_stack;

    void validate() const;
    int pooled() const { return grid / 4; }
    int trunk_in() const { return static_cast<int>(kLayoutDims) + time_dim + cond_dim; }
    std::size_t param_count() const;
    /// Single-line `key=value` echo used in checkpoint headers.
    std::string describe() const;
    static DenoiserArch parse(std::string_view line);

    bool operator==(const DenoiserArch&) const = default;
};

/// Offsets of each weight tensor inside the flat parameter vector.
struct ParamLayout {
    struct Dense {
        std::size_t w, b;
        int in, out;
    };
    std::size_t conv1_w, conv1_b, conv2_w, conv2_b;
    Dense encoder;
    std::vector<Dense> trunk;  // hidden layers followed by the output layer
    std::size_t total;

    explicit ParamLayout(const DenoiserArch& arch);
};

/// Flat parameter vector in declaration order.
struct DenoiserParams {
    DenoiserArch arch;
    std::vector<double> values;

    /// Scaled-normal initialization, deterministic in seed.
    static DenoiserParams init(const DenoiserArch& arch, std::uint64_t seed);
};

struct ConditionEncoding {
    std::vector<double> features;
};

struct LossConfig {
    double lambda = 10.0;
    int mask_res = 32;
    bool use_mask_loss = true;
    TemplateSpec templ{};

    void validate() const;
};

/// Model bundle stored in checkpoints.
struct Model {
    DenoiserParams params;
    int steps = 100;
    ScheduleFamily family = ScheduleFamily::linear;

    NoiseSchedule schedule() const { return build_schedule(steps, family); }
};

std::vector<double> time_embedding(int t, int dim);

/// Three-plane encoder input for the configured conditioning mode.
ConditionStack condition_stack(const DenoiserArch& arch, const Grid& object, const LayoutMask& context);

ConditionEncoding encode_condition(const DenoiserParams& params, const Grid& object, const LayoutMask& mask_context);
/// Zero mask context.
ConditionEncoding encode_condition(const DenoiserParams& params, const Grid& object);

Vec5 denoiser_forward(const DenoiserParams& params, const Vec5& l_t, int t, const ConditionEncoding& cond);

/// Activations retained for the backward pass.
struct ForwardTrace {
    std::vector<double> input;
    std::vector<double> conv1_pre, conv1_act;
    std::vector<double> conv2_pre, conv2_act;
    std::vector<double> feat_pre;
    std::vector<std::vector<double>> layer_in;   // input of every trunk layer
    std::vector<std::vector<double>> layer_pre;  // pre-activation of every hidden layer
    Vec5 out{};
};

Vec5 denoiser_forward_traced(const DenoiserParams& params, const ConditionStack& stack, const Vec5& l_t, int t,
                             ForwardTrace& trace);

/// Accumulates d(loss)/d(params) into grad given d(loss)/d(eps_hat).
void denoiser_backward(const DenoiserParams& params, const ForwardTrace& trace, const Vec5& d_out,
                       std::vector<double>& grad);

/// Noise-space prediction for the layout state under the given object grid.
Vec5 predict_epsilon(const DenoiserParams& params, const Grid& object, const Vec5& l_t, int t,
                     const TemplateSpec& templ = {});

/// Sum over the five coordinates of (eps - eps_hat)^2.
double loss_para(const Vec5& eps, const Vec5& eps_hat);
Vec5 loss_para_grad(const Vec5& eps, const Vec5& eps_hat);

/// Mean over res x res pixels of (M(l0) - M(l0_hat))^2; l0_hat guarded before splatting.
double loss_mask(const Vec5& l0, const Vec5& l0_hat, int res, const TemplateSpec& spec);
/// Same loss plus its gradient with respect to l0_hat (straight through the guard).
double loss_mask_grad(const Vec5& l0, const Vec5& l0_hat, int res, const TemplateSpec& spec, Vec5& grad);

struct TrainingItem {
    const Grid* object = nullptr;
    Layout layout;
};

struct LossResult {
    double total = 0.0;
    double mask = 0.0;  // batch mean
    double para = 0.0;  // batch mean
    std::vector<double> grad;
};

/// Batch mean of L_mask + lambda L_para with t ~ U{1..T}, eps ~ N(0, I) per item
/// drawn from rng in item order; grad covers every parameter.
LossResult total_loss(const std::vector<TrainingItem>& batch, const DenoiserParams& params, const LossConfig& cfg,
                      const NoiseSchedule& sched, Rng& rng);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace layoutnet

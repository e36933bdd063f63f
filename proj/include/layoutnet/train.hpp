#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layoutnet/denoiser.hpp"
#include "layoutnet/diffusion.hpp"
#include "layoutnet/sampling.hpp"
#include "layoutnet/synth.hpp"

namespace layoutnet {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    long step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected adaptive-moment update in place. Non-finite gradients throw
/// before anything is modified.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

enum class LrSchedule { constant, cosine };

LrSchedule parse_lr_schedule(std::string_view name);
std::string_view to_string(LrSchedule s);

struct TrainConfig {
    int steps = 5000;
    int batch = 32;
    double lr = 3e-3;
    /// cosine decays from lr to 0 over the run.
    LrSchedule lr_schedule = LrSchedule::constant;
    AdamConfig adam{};
    std::uint64_t seed = 1;
    LossConfig loss{};
    int schedule_steps = 100;
    ScheduleFamily family = ScheduleFamily::linear;
    DenoiserArch arch{};
    /// Warm start; arch and schedule then come from the checkpoint.
    std::optional<std::filesystem::path> init;
    int log_every = 100;
    double divergence_limit = 1e6;

    void validate() const;
};

struct LossLogEntry {
    int step = 0;
    double loss = 0.0;
    double smoothed = 0.0;  // exponential moving average, factor 0.98
};

struct TrainResult {
    Model model;
    std::vector<double> losses;    // one per step
    std::vector<double> smoothed;  // running average of losses
    std::vector<LossLogEntry> log;  // every log_every steps and the last step
};

/// Minibatches are drawn with replacement; bit-reproducible for a fixed seed.
TrainResult train(const TrainConfig& cfg, const std::vector<SceneSample>& scenes);

/// `step loss smoothed` lines.
std::string format_loss_log(const std::vector<LossLogEntry>& log);

/// Palm disk of radius palm_fraction * a^2 against the object mask dilated by
/// dilation_px (Euclidean, in pixels); pixels count as squares.
bool in_contact(const Layout& layout, const Grid& object_mask, double palm_fraction = 1.0, int dilation_px = 2);
double contact_recall(const std::vector<Layout>& layouts, const std::vector<SceneSample>& scenes,
                      double palm_fraction = 1.0, int dilation_px = 2);

struct ConstraintError {
    Vec5 mae{};                 // zero where nothing was constrained
    std::array<int, 5> count{};  // samples constraining each dimension
    double overall = 0.0;       // mean over every constrained coordinate
};

ConstraintError constraint_error(const std::vector<Layout>& layouts, const std::vector<GuidanceSpec>& specs);

/// Posterior-mean noise for scalar data x0 ~ N(mu, sigma^2).
double gaussian_oracle_epsilon(double x_t, int t, double mu, double sigma, const NoiseSchedule& sched);

struct MomentReport {
    SamplerKind sampler = SamplerKind::ddpm;
    double eta = 1.0;
    double target_mean = 0.0, target_std = 1.0;
    double mean = 0.0, std = 0.0;
    long samples = 0;
    double mean_tol = 0.02;      // absolute
    double std_rel_tol = 0.02;   // relative to target_std
    bool pass = false;
};

/// Runs n_chains five-dimensional reverse chains with the oracle as the
/// denoiser and pools every coordinate into the moment estimate.
MomentReport sampler_moment_check(const NoiseSchedule& sched, SamplerKind sampler, double eta, double mu, double sigma,
                                  int n_chains, Rng& rng);

/// Ordered `metric = value` pairs plus free-form config echo lines.
struct MetricsReport {
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::string> config;

    void set(const std::string& key, double value);
    double get(const std::string& key) const;
    /// Human lines, then a JSON block of the same pairs.
    std::string to_text() const;
};

struct EvalOptions {
    SampleOptions sampling{};
    std::uint64_t seed = 1;
    double palm_fraction = 1.0;
    int dilation_px = 2;
};

struct EvalResult {
    std::vector<Layout> layouts;
    MetricsReport report;
};

/// One sample per scene; scene i samples from its own stream seeded by (seed, i).
EvalResult evaluate(const Model& model, const std::vector<SceneSample>& scenes, const EvalOptions& opts);

struct AblationRow {
    std::string label;
    double contact_recall = 0.0;
    double final_loss = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // full, vector, no-mask

    /// Fixed-width table plus the two directional checks.
    std::string to_text() const;
};

/// Trains the full model, the vector-conditioned variant and the variant
/// without mask loss from the same seed, then evaluates each on test.
AblationTable ablation_suite(const TrainConfig& base, const std::vector<SceneSample>& train_scenes,
                             const std::vector<SceneSample>& test_scenes, const EvalOptions& eval);

/// Instance-held-out benchmark generated in memory.
struct Benchmark {
    std::vector<SceneSample> train, test;
};

struct BenchmarkConfig {
    GeneratorConfig generator{};
    std::uint64_t seed = 1;
    int n_scenes = 2000;
    int held_out = 5;
};

Benchmark make_benchmark(const BenchmarkConfig& cfg);

}  // namespace layoutnet

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "layoutnet/types.hpp"

namespace layoutnet {

using Rng = std::mt19937_64;

enum class ScheduleFamily { linear, cosine };
enum class SamplerKind { ddpm, ddim };

ScheduleFamily parse_schedule_family(std::string_view name);
std::string_view to_string(ScheduleFamily f);
SamplerKind parse_sampler(std::string_view name);
std::string_view to_string(SamplerKind s);

/// Noise schedule in the convention x_t = sqrt(1 - abar_t) x0 + sqrt(abar_t) eps,
/// i.e. abar_t is the noise fraction: abar_0 = 0 and abar_T is close to 1.
class NoiseSchedule {
public:
    NoiseSchedule(ScheduleFamily family, std::vector<double> alpha_bar);

    int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
    ScheduleFamily family() const { return family_; }
    double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
    /// Coefficient on x0.
    double signal_coef(int t) const { return signal_.at(static_cast<std::size_t>(t)); }
    /// Coefficient on eps.
    double noise_coef(int t) const { return noise_.at(static_cast<std::size_t>(t)); }
    /// Standard deviation of the ancestral reverse step t -> t-1 (zero at t = 1).
    double posterior_std(int t) const;

    void check_step(int t, int lo) const;

    /// `t alpha_bar` per line.
    std::string dump() const;

private:
    ScheduleFamily family_;
    std::vector<double> alpha_bar_;
    std::vector<double> signal_;
    std::vector<double> noise_;
};

/// Linear: abar_t = (1 - 1e-5) t / T. Cosine: one minus the squared-cosine
/// signal curve with offset 0.008, capped at 1 - 1e-5.
NoiseSchedule build_schedule(int steps, ScheduleFamily family);

/// Constrained-coordinate spec for guided generation.
struct GuidanceSpec {
    std::array<double, 5> mask{};  // entries are 0 or 1
    Vec5 target{};                 // ignored where mask is 0

    bool constrains(std::size_t dim) const { return mask[dim] != 0.0; }
    bool any() const;
    void validate() const;
};

/// Independent stream for item `index` of a run seeded with `seed`.
Rng derived_rng(std::uint64_t seed, std::uint64_t index);

Vec5 standard_normal5(Rng& rng);

Vec5 forward_noise(const Vec5& x0, int t, const Vec5& eps, const NoiseSchedule& sched);

Vec5 predict_x0(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched);

/// Generalized reverse update with explicit step noise sigma:
/// x_{t-1} = c_s(t-1) x0_hat + sqrt(c_n(t-1)^2 - sigma^2) eps_hat + sigma z.
/// Always consumes five normals from rng so chains stay aligned across samplers.
Vec5 reverse_step(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched, double sigma, Rng& rng);

/// Ancestral step with the Gaussian posterior variance.
Vec5 ddpm_step(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched, Rng& rng);

/// eta = 0 is deterministic; eta = 1 reproduces ddpm_step's variance.
Vec5 ddim_step(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched, double eta, Rng& rng);

/// Replace constrained coordinates by the target noised to level t with fresh noise.
Vec5 apply_guidance(const Vec5& x_t, int t, const GuidanceSpec& spec, const NoiseSchedule& sched, Rng& rng);

/// eps prediction for a state at step t.
using EpsilonFn = std::function<Vec5(const Vec5& x_t, int t)>;

struct ChainOptions {
    SamplerKind sampler = SamplerKind::ddpm;
    double eta = 1.0;  // ddim only
    std::optional<GuidanceSpec> guidance;
};

/// x_T ~ N(0, I) run through all T reverse steps; guidance applied after each.
Vec5 run_reverse_chain(const EpsilonFn& eps_fn, const NoiseSchedule& sched, const ChainOptions& opts, Rng& rng);

}  // namespace layoutnet

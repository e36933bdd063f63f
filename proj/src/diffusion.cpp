#include "layoutnet/diffusion.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace layoutnet {

namespace {

constexpr double kMaxAlphaBar = 1.0 - 1e-5;

}  // namespace

ScheduleFamily parse_schedule_family(std::string_view name) {
    if (name == "linear") return ScheduleFamily::linear;
    if (name == "cosine") return ScheduleFamily::cosine;
    throw DomainError(fmt::format("unknown schedule family '{}'", name));
}

std::string_view to_string(ScheduleFamily f) {
    return f == ScheduleFamily::linear ? "linear" : "cosine";
}

SamplerKind parse_sampler(std::string_view name) {
    if (name == "ddpm") return SamplerKind::ddpm;
    if (name == "ddim") return SamplerKind::ddim;
    throw DomainError(fmt::format("unknown sampler '{}'", name));
}

std::string_view to_string(SamplerKind s) {
    return s == SamplerKind::ddpm ? "ddpm" : "ddim";
}

NoiseSchedule::NoiseSchedule(ScheduleFamily family, std::vector<double> alpha_bar)
    : family_(family), alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.size() < 2) throw DomainError("schedule needs at least one step");
    if (alpha_bar_.front() != 0.0) throw DomainError("schedule must start at abar_0 = 0");
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
        if (!(alpha_bar_[t] > alpha_bar_[t - 1]) || !(alpha_bar_[t] < 1.0))
            throw DomainError(fmt::format("schedule not strictly increasing below 1 at t={}", t));
    }
    signal_.reserve(alpha_bar_.size());
    noise_.reserve(alpha_bar_.size());
    for (double ab : alpha_bar_) {
        signal_.push_back(std::sqrt(1.0 - ab));
        noise_.push_back(std::sqrt(ab));
    }
}

double NoiseSchedule::posterior_std(int t) const {
    check_step(t, 1);
    // In terms of the signal fraction g_t = 1 - abar_t:
    // var = (1 - g_{t-1}) / (1 - g_t) * (1 - g_t / g_{t-1}) = abar_{t-1} / abar_t * (abar_t - abar_{t-1}) / (1 - abar_{t-1})
    const double prev = alpha_bar(t - 1);
    const double cur = alpha_bar(t);
    const double var = prev / cur * (cur - prev) / (1.0 - prev);
    return std::sqrt(std::max(var, 0.0));
}

void NoiseSchedule::check_step(int t, int lo) const {
    if (t < lo || t > steps()) throw DomainError(fmt::format("step {} outside [{}, {}]", t, lo, steps()));
}

std::string NoiseSchedule::dump() const {
    std::string out;
    for (int t = 0; t <= steps(); ++t) out += fmt::format("{} {:.17g}\n", t, alpha_bar(t));
    return out;
}

NoiseSchedule build_schedule(int steps, ScheduleFamily family) {
    if (steps < 10) throw DomainError(fmt::format("schedule needs T >= 10, got {}", steps));
    std::vector<double> ab(static_cast<std::size_t>(steps) + 1, 0.0);
    if (family == ScheduleFamily::linear) {
        for (int t = 1; t <= steps; ++t) ab[t] = kMaxAlphaBar * static_cast<double>(t) / steps;
    } else {
        constexpr double offset = 0.008;
        const auto f = [&](int t) {
            const double c = std::cos((static_cast<double>(t) / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
            return c * c;
        };
        const double f0 = f(0);
        for (int t = 1; t <= steps; ++t) ab[t] = std::min(1.0 - f(t) / f0, kMaxAlphaBar);
        // the cap can flatten the tail; keep it strictly increasing
        for (int t = steps - 1; t >= 1; --t)
            if (ab[t] >= ab[t + 1]) ab[t] = std::nextafter(ab[t + 1], 0.0);
    }
    return NoiseSchedule(family, std::move(ab));
}

bool GuidanceSpec::any() const {
    for (double m : mask)
        if (m != 0.0) return true;
    return false;
}

void GuidanceSpec::validate() const {
    for (std::size_t i = 0; i < kLayoutDims; ++i) {
        if (mask[i] != 0.0 && mask[i] != 1.0) throw DomainError("guidance mask entries must be 0 or 1");
        if (!std::isfinite(target[i])) throw DomainError("guidance target must be finite");
    }
}

Rng derived_rng(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

Vec5 standard_normal5(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec5 z;
    for (double& v : z) v = normal(rng);
    return z;
}

Vec5 forward_noise(const Vec5& x0, int t, const Vec5& eps, const NoiseSchedule& sched) {
    sched.check_step(t, 0);
    const double cs = sched.signal_coef(t);
    const double cn = sched.noise_coef(t);
    Vec5 out;
    for (std::size_t i = 0; i < kLayoutDims; ++i) out[i] = cs * x0[i] + cn * eps[i];
    return out;
}

Vec5 predict_x0(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched) {
    sched.check_step(t, 0);
    if (t == 0) return x_t;
    if (sched.alpha_bar(t) >= 1.0 - 1e-12) throw DomainError(fmt::format("abar at step {} too close to 1 to invert", t));
    const double inv_cs = 1.0 / sched.signal_coef(t);
    const double ratio = sched.noise_coef(t) * inv_cs;
    Vec5 out;
    for (std::size_t i = 0; i < kLayoutDims; ++i) out[i] = inv_cs * x_t[i] - ratio * eps_hat[i];
    return out;
}

Vec5 reverse_step(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched, double sigma, Rng& rng) {
    sched.check_step(t, 1);
    const Vec5 x0_hat = predict_x0(x_t, t, eps_hat, sched);
    const Vec5 z = standard_normal5(rng);
    const double cs_prev = sched.signal_coef(t - 1);
    const double cn_prev = sched.noise_coef(t - 1);
    const double dir = std::sqrt(std::max(cn_prev * cn_prev - sigma * sigma, 0.0));
    Vec5 out;
    for (std::size_t i = 0; i < kLayoutDims; ++i) out[i] = cs_prev * x0_hat[i] + dir * eps_hat[i] + sigma * z[i];
    return out;
}

Vec5 ddpm_step(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched, Rng& rng) {
    return reverse_step(x_t, t, eps_hat, sched, sched.posterior_std(t), rng);
}

Vec5 ddim_step(const Vec5& x_t, int t, const Vec5& eps_hat, const NoiseSchedule& sched, double eta, Rng& rng) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("ddim eta must lie in [0, 1]");
    return reverse_step(x_t, t, eps_hat, sched, eta * sched.posterior_std(t), rng);
}

Vec5 apply_guidance(const Vec5& x_t, int t, const GuidanceSpec& spec, const NoiseSchedule& sched, Rng& rng) {
    sched.check_step(t, 0);
    if (!spec.any()) return x_t;
    const Vec5 eps = standard_normal5(rng);
    const double cs = sched.signal_coef(t);
    const double cn = sched.noise_coef(t);
    Vec5 out = x_t;
    for (std::size_t i = 0; i < kLayoutDims; ++i) {
        if (!spec.constrains(i)) continue;
        out[i] = t == 0 ? spec.target[i] : cs * spec.target[i] + cn * eps[i];
    }
    return out;
}

Vec5 run_reverse_chain(const EpsilonFn& eps_fn, const NoiseSchedule& sched, const ChainOptions& opts, Rng& rng) {
    if (opts.guidance) opts.guidance->validate();
    const int steps = sched.steps();
    Vec5 x = standard_normal5(rng);
    if (opts.guidance) x = apply_guidance(x, steps, *opts.guidance, sched, rng);
    for (int t = steps; t >= 1; --t) {
        const Vec5 eps_hat = eps_fn(x, t);
        x = opts.sampler == SamplerKind::ddpm ? ddpm_step(x, t, eps_hat, sched, rng)
                                              : ddim_step(x, t, eps_hat, sched, opts.eta, rng);
        if (opts.guidance) x = apply_guidance(x, t - 1, *opts.guidance, sched, rng);
    }
    return x;
}

}  // namespace layoutnet

#pragma once

// Test-only oracles: brute-force finite differences and random generators.
// Nothing here calls the analytic gradient code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "layoutnet/geometry.hpp"

namespace layoutnet::testing {

/// |a| in [0.3, 0.8], center in [-0.8, 0.8]^2, direction norm in [0.2, 1.5].
inline Layout random_layout(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double a = (0.3 + 0.5 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    const double angle = 2.0 * M_PI * unit(rng);
    const double norm = 0.2 + 1.3 * unit(rng);
    return {a, 1.6 * unit(rng) - 0.8, 1.6 * unit(rng) - 0.8, norm * std::cos(angle), norm * std::sin(angle)};
}

/// Worst relative error of the analytic Jacobian against central differences,
/// measured per parameter as max|analytic - fd| / max(|analytic|, |fd|) over the grid.
inline double splat_jacobian_fd_error(const Layout& l, int size, const TemplateSpec& spec, double step) {
    const MaskJacobian jac = splat_jacobian(l, size, size, spec);
    double worst = 0.0;
    for (std::size_t d = 0; d < kLayoutDims; ++d) {
        Vec5 v = l.to_vec();
        v[d] += step;
        const LayoutMask plus = splat(Layout::from_vec(v), size, size, spec);
        v[d] -= 2.0 * step;
        const LayoutMask minus = splat(Layout::from_vec(v), size, size, spec);
        double err = 0.0;
        double mag = 0.0;
        for (std::size_t i = 0; i < plus.size(); ++i) {
            const double fd = (plus.values[i] - minus.values[i]) / (2.0 * step);
            const double an = jac.grad[i][d];
            err = std::max(err, std::abs(fd - an));
            mag = std::max({mag, std::abs(fd), std::abs(an)});
        }
        if (mag > 0.0) worst = std::max(worst, err / mag);
    }
    return worst;
}

}  // namespace layoutnet::testing

#include "layoutnet/denoiser.hpp"

namespace layoutnet::testing {

inline DenoiserArch tiny_arch(Conditioning c = Conditioning::mask_stack) {
    DenoiserArch a;
    a.grid = 8;
    a.conv1 = 2;
    a.conv2 = 2;
    a.cond_dim = 4;
    a.time_dim = 4;
    a.hidden = 6;
    a.layers = 2;
    a.conditioning = c;
    return a;
}

/// Textured 8-bit-valued object grid with a bright blob off-center.
inline Grid blob_grid(int size, double cx, double cy) {
    Grid g(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double u = pixel_to_norm(c, size) - cx, v = pixel_to_norm(r, size) - cy;
            g.at(c, r) = std::round(255.0 * (0.1 + 0.8 * std::exp(-(u * u + v * v) / 0.1))) / 255.0;
        }
    return g;
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t worst_index = 0;
};

/// Central differences of total_loss over every parameter, re-seeding the
/// sampler stream for each evaluation so t and eps stay fixed.
/// Relative error per parameter: |an - fd| / max(|an|, |fd|, floor).
inline GradCheck total_loss_fd_check(const std::vector<TrainingItem>& batch, DenoiserParams params,
                                     const LossConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed,
                                     double step = 1e-5, double floor = 1e-6) {
    Rng rng(seed);
    const LossResult base = total_loss(batch, params, cfg, sched, rng);
    GradCheck out;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double keep = params.values[i];
        params.values[i] = keep + step;
        Rng rp(seed);
        const double up = total_loss(batch, params, cfg, sched, rp).total;
        params.values[i] = keep - step;
        Rng rm(seed);
        const double down = total_loss(batch, params, cfg, sched, rm).total;
        params.values[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double an = base.grad[i];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
        if (rel > out.max_rel) {
            out.max_rel = rel;
            out.worst_index = i;
        }
    }
    return out;
}

}  // namespace layoutnet::testing

namespace layoutnet::testing {

struct ChainMoments {
    double mean = 0.0, std = 0.0;
};

/// Exact output distribution of the generalized reverse chain for scalar data
/// x0 ~ N(mu, sigma^2) under the posterior-mean noise predictor, x_T ~ N(0, 1).
/// Each step is affine in x_t plus independent noise, so the moments follow a
/// closed recursion built from the alpha_bar table alone.
inline ChainMoments exact_chain_moments(const std::vector<double>& abar, double eta, double mu, double sigma) {
    const int steps = static_cast<int>(abar.size()) - 1;
    double m = 0.0, var = 1.0;
    for (int t = steps; t >= 1; --t) {
        const double cs = std::sqrt(1.0 - abar[t]), cn = std::sqrt(abar[t]);
        const double cs1 = std::sqrt(1.0 - abar[t - 1]), cn1 = std::sqrt(abar[t - 1]);
        const double k = cn / (cs * cs * sigma * sigma + cn * cn);
        // eps_hat = k x - k cs mu, x0_hat = (x - cn eps_hat) / cs
        const double x0_slope = (1.0 - cn * k) / cs, x0_icept = cn * k * mu;
        const double step_var =
            t == 1 ? 0.0 : eta * eta * abar[t - 1] / abar[t] * (abar[t] - abar[t - 1]) / (1.0 - abar[t - 1]);
        const double r = std::sqrt(cn1 * cn1 - step_var);
        const double slope = cs1 * x0_slope + r * k;
        const double icept = cs1 * x0_icept - r * k * cs * mu;
        m = slope * m + icept;
        var = slope * slope * var + step_var;
    }
    return {m, std::sqrt(var)};
}

}  // namespace layoutnet::testing

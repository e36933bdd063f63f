#include "layoutnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace layoutnet {

double splat_jacobian_error(const Layout& l, int size, const TemplateSpec& spec, double step) {
    const MaskJacobian jac = splat_jacobian(l, size, size, spec);
    double worst = 0.0;
    for (std::size_t d = 0; d < kLayoutDims; ++d) {
        Vec5 up = l.to_vec(), down = l.to_vec();
        up[d] += step;
        down[d] -= step;
        const LayoutMask plus = splat(Layout::from_vec(up), size, size, spec);
        const LayoutMask minus = splat(Layout::from_vec(down), size, size, spec);
        double err = 0.0, mag = 0.0;
        for (std::size_t i = 0; i < plus.size(); ++i) {
            const double fd = (plus.values[i] - minus.values[i]) / (2.0 * step);
            err = std::max(err, std::abs(fd - jac.grad[i][d]));
            mag = std::max({mag, std::abs(fd), std::abs(jac.grad[i][d])});
        }
        if (mag > 0.0) worst = std::max(worst, err / mag);
    }
    return worst;
}

JacobianCheck check_splat_jacobian(int n_layouts, int size, const TemplateSpec& spec, double step, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    JacobianCheck res;
    for (int i = 0; i < n_layouts; ++i) {
        const double a = (0.3 + 0.5 * u(rng)) * (u(rng) < 0.5 ? -1.0 : 1.0);
        const double angle = 2.0 * std::numbers::pi * u(rng);
        const double norm = 0.2 + 1.3 * u(rng);
        const Layout l{a, 1.6 * u(rng) - 0.8, 1.6 * u(rng) - 0.8, norm * std::cos(angle), norm * std::sin(angle)};
        res.max_rel = std::max(res.max_rel, splat_jacobian_error(l, size, spec, step));
        ++res.layouts;
    }
    return res;
}

LossGradCheck check_loss_gradient(const std::vector<TrainingItem>& batch, const DenoiserParams& params,
                                  const LossConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed, double step,
                                  double floor) {
    Rng rng(seed);
    const LossResult base = total_loss(batch, params, cfg, sched, rng);
    DenoiserParams p = params;
    LossGradCheck res;
    res.params = p.values.size();
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double keep = p.values[i];
        p.values[i] = keep + step;
        Rng ru(seed);
        const double up = total_loss(batch, p, cfg, sched, ru).total;
        p.values[i] = keep - step;
        Rng rd(seed);
        const double down = total_loss(batch, p, cfg, sched, rd).total;
        p.values[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double rel = std::abs(base.grad[i] - fd) / std::max({std::abs(base.grad[i]), std::abs(fd), floor});
        if (rel > res.max_rel) {
            res.max_rel = rel;
            res.worst_index = i;
        }
    }
    return res;
}

}  // namespace layoutnet

#pragma once

#include <cstdint>
#include <vector>

#include "layoutnet/denoiser.hpp"
#include "layoutnet/geometry.hpp"

namespace layoutnet {

/// Finite-difference self-checks used by the check-grad command. They only
/// evaluate forward quantities (splat, total_loss).

struct JacobianCheck {
    int layouts = 0;
    double max_rel = 0.0;  // worst over layouts and parameters
};

/// Per (layout, parameter): max |analytic - fd| / max(|analytic|, |fd|) over the grid.
double splat_jacobian_error(const Layout& l, int size, const TemplateSpec& spec, double step);

/// |a| in [0.3, 0.8], center in [-0.8, 0.8]^2, direction norm in [0.2, 1.5].
JacobianCheck check_splat_jacobian(int n_layouts, int size, const TemplateSpec& spec, double step, Rng& rng);

struct LossGradCheck {
    std::size_t params = 0;
    double max_rel = 0.0;
    std::size_t worst_index = 0;
};

/// Central differences over every parameter with t and eps frozen by
/// re-seeding; relative error floor keeps near-zero gradients from dominating.
LossGradCheck check_loss_gradient(const std::vector<TrainingItem>& batch, const DenoiserParams& params,
                                  const LossConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed,
                                  double step = 1e-5, double floor = 1e-6);

}  // namespace layoutnet

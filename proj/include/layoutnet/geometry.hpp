#pragma once

#include <array>
#include <string>
#include <string_view>

#include "layoutnet/types.hpp"

namespace layoutnet {

/// Articulation-agnostic hand proxy. Palm scale is a^2; (b1, b2) is an
/// un-normalized approach direction. (x, y) live in normalized image space.
struct Layout {
    double a = 1.0;
    double x = 0.0;
    double y = 0.0;
    double b1 = 1.0;
    double b2 = 0.0;

    double scale() const { return a * a; }

    Vec5 to_vec() const { return {a, x, y, b1, b2}; }
    static Layout from_vec(const Vec5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

    /// Throws DomainError / DegenerateDirection when the invariants fail.
    void validate() const;

    /// `a x y b1 b2` with round-trip precision.
    std::string to_line() const;
    static Layout parse_line(std::string_view line);
};

inline constexpr std::array<const char*, 5> kLayoutNames = {"a", "x", "y", "b1", "b2"};

/// 3x3 homogeneous similarity transform, row-major.
struct SimilarityTransform {
    std::array<std::array<double, 3>, 3> m{};

    double scale() const;
    /// Maps an image-space point back into the canonical template frame.
    std::array<double, 2> apply_inverse(double u, double v) const;
};

/// Canonical lollipop template: isotropic palm Gaussian at the origin and a
/// forearm strip trailing along the -x canonical axis.
struct TemplateSpec {
    double palm_sigma = 1.0;
    double width_ratio = 0.8;
    double forearm_sigma = 2.0 * 0.8 * 1.0;
    double forearm_length = 6.0;
    /// Forearm peak; below 1 so the palm center is the unique maximum.
    double forearm_peak = 0.8;
    /// Logistic softness of the strip's two ends, in canonical units.
    double edge_softness = 0.05;

    static TemplateSpec with_ratio(double width_ratio, double palm_sigma = 1.0);
    void validate() const;
};

using LayoutMask = Grid;

/// Per-pixel gradient of the mask with respect to (a, x, y, b1, b2).
struct MaskJacobian {
    int width = 0;
    int height = 0;
    std::vector<Vec5> grad;

    const Vec5& at(int col, int row) const { return grad[static_cast<std::size_t>(row) * width + col]; }
};

std::array<double, 2> normalize_approach(double b1, double b2);

SimilarityTransform layout_to_transform(const Layout& l);

double template_density(double q1, double q2, const TemplateSpec& spec);

/// Density and its gradient with respect to the canonical point.
struct DensityGrad {
    double value;
    double d_q1;
    double d_q2;
};
DensityGrad template_density_grad(double q1, double q2, const TemplateSpec& spec);

/// Mask value of the splatted layout at an arbitrary normalized point.
double splat_at(const Layout& l, double u, double v, const TemplateSpec& spec);

LayoutMask splat(const Layout& l, int width, int height, const TemplateSpec& spec);

MaskJacobian splat_jacobian(const Layout& l, int width, int height, const TemplateSpec& spec);

/// Splat and Jacobian in one pass (shares the per-pixel transform work).
void splat_with_jacobian(const Layout& l, int width, int height, const TemplateSpec& spec,
                         LayoutMask& mask, MaskJacobian& jac);

/// Three planes: object grid, mask, and the blend (1 - m) * object + m.
struct ConditionStack {
    Grid object;
    Grid mask;
    Grid blend;
};

ConditionStack blend_condition(const LayoutMask& mask, const Grid& object_grid);

/// (x, y) linear, direction slerp, scale geometric. Result direction is unit length.
Layout interpolate_layouts(const Layout& from, const Layout& to, double k);

/// Clamp |a| >= 1e-3 and |(b1, b2)| >= 1e-6 so a raw network state can be splatted.
/// Gradients taken at the guarded layout are passed straight through.
Layout guard_layout(const Vec5& v);

}  // namespace layoutnet

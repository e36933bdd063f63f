#include "layoutnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace layoutnet {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Canonical point of pixel (u, v) plus the pieces needed for the chain rule.
struct CanonicalPoint {
    double q1, q2;  // canonical coordinates
    double r1, r2;  // rotated but unscaled offsets
};

struct WarpFrame {
    double s, inv_s;
    double c, d, norm;
    double x, y;
};

WarpFrame make_frame(const Layout& l) {
    const double norm = std::hypot(l.b1, l.b2);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateDirection("approach direction (b1, b2) is zero");
    const double s = l.a * l.a;
    if (!(s > 0.0)) throw DomainError("layout size parameter a must be non-zero");
    const auto [c, d] = normalize_approach(l.b1, l.b2);
    return {s, 1.0 / s, c, d, norm, l.x, l.y};
}

CanonicalPoint to_canonical(const WarpFrame& f, double u, double v) {
    const double dx = u - f.x;
    const double dy = v - f.y;
    const double r1 = f.c * dx + f.d * dy;
    const double r2 = -f.d * dx + f.c * dy;
    return {r1 * f.inv_s, r2 * f.inv_s, r1, r2};
}

Vec5 chain_to_params(const WarpFrame& f, const Layout& l, const CanonicalPoint& p, const DensityGrad& g) {
    // dq/da = -(2/a) q; dq/dx = (-c, d)/s; dq/dy = (-d, -c)/s;
    // dq/db1 = d/(n s) (-r2, r1); dq/db2 = c/(n s) (r2, -r1).
    const double ga = -(2.0 / l.a) * (g.d_q1 * p.q1 + g.d_q2 * p.q2);
    const double gx = f.inv_s * (-f.c * g.d_q1 + f.d * g.d_q2);
    const double gy = f.inv_s * (-f.d * g.d_q1 - f.c * g.d_q2);
    const double rot = f.inv_s / f.norm * (-p.r2 * g.d_q1 + p.r1 * g.d_q2);
    return {ga, gx, gy, f.d * rot, -f.c * rot};
}

void check_grid_size(int width, int height) {
    if (width < 8 || height < 8) throw DomainError(fmt::format("splat grid must be at least 8x8, got {}x{}", width, height));
}

}  // namespace

void Layout::validate() const {
    if (!std::isfinite(a) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(b1) || !std::isfinite(b2))
        throw DomainError("layout has non-finite entries");
    if (a == 0.0) throw DomainError("layout size parameter a must be non-zero");
    if (b1 == 0.0 && b2 == 0.0) throw DegenerateDirection("approach direction (b1, b2) is zero");
    if (std::abs(x) > 1.5 || std::abs(y) > 1.5)
        throw DomainError(fmt::format("layout center ({}, {}) outside [-1.5, 1.5]^2", x, y));
}

std::string Layout::to_line() const {
    return fmt::format("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g}", a, x, y, b1, b2);
}

Layout Layout::parse_line(std::string_view line) {
    std::istringstream in{std::string(line)};
    Layout l;
    if (!(in >> l.a >> l.x >> l.y >> l.b1 >> l.b2)) throw Error(fmt::format("malformed layout line '{}'", line));
    std::string rest;
    if (in >> rest) throw Error(fmt::format("trailing data in layout line '{}'", line));
    return l;
}

double SimilarityTransform::scale() const {
    return std::hypot(m[0][0], m[1][0]);
}

std::array<double, 2> SimilarityTransform::apply_inverse(double u, double v) const {
    const double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if (!(det > 0.0)) throw DomainError("similarity transform is not invertible");
    const double dx = u - m[0][2];
    const double dy = v - m[1][2];
    // inverse of [[p, -q], [q, p]] is [[p, q], [-q, p]] / det
    return {(m[0][0] * dx + m[1][0] * dy) / det, (-m[1][0] * dx + m[0][0] * dy) / det};
}

TemplateSpec TemplateSpec::with_ratio(double width_ratio, double palm_sigma) {
    TemplateSpec spec;
    spec.palm_sigma = palm_sigma;
    spec.width_ratio = width_ratio;
    spec.forearm_sigma = 2.0 * width_ratio * palm_sigma;
    return spec;
}

void TemplateSpec::validate() const {
    if (!(palm_sigma > 0.0) || !(forearm_sigma > 0.0) || !(forearm_length > 0.0) || !(edge_softness > 0.0))
        throw DomainError("template spec fields must be positive");
    if (!(width_ratio > 0.0 && width_ratio <= 1.0)) throw DomainError("template width_ratio must lie in (0, 1]");
    if (!(forearm_peak > 0.0 && forearm_peak < 1.0)) throw DomainError("template forearm_peak must lie in (0, 1)");
}

std::array<double, 2> normalize_approach(double b1, double b2) {
    const double n = std::hypot(b1, b2);
    if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateDirection("cannot normalize a zero approach direction");
    // Through the ratio of the two components: exactly proportional inputs
    // give bit-identical unit vectors.
    if (std::abs(b1) >= std::abs(b2)) {
        const double r = b2 / b1;
        const double u = std::copysign(1.0 / std::sqrt(1.0 + r * r), b1);
        return {u, r * u};
    }
    const double r = b1 / b2;
    const double v = std::copysign(1.0 / std::sqrt(1.0 + r * r), b2);
    return {r * v, v};
}

SimilarityTransform layout_to_transform(const Layout& l) {
    const auto [c, d] = normalize_approach(l.b1, l.b2);
    const double s = l.a * l.a;
    SimilarityTransform t;
    t.m = {{{s * c, -s * d, l.x}, {s * d, s * c, l.y}, {0.0, 0.0, 1.0}}};
    return t;
}

DensityGrad template_density_grad(double q1, double q2, const TemplateSpec& spec) {
    const double inv_p2 = 1.0 / (spec.palm_sigma * spec.palm_sigma);
    const double inv_f2 = 1.0 / (spec.forearm_sigma * spec.forearm_sigma);
    const double tau = spec.edge_softness;

    const double palm = std::exp(-0.5 * (q1 * q1 + q2 * q2) * inv_p2);

    // Strip window: logistic rise at -length and fall at 0 along the canonical axis.
    const double lo = sigmoid((q1 + spec.forearm_length) / tau);
    const double hi = sigmoid(-q1 / tau);
    const double window = lo * hi;
    const double profile = std::exp(-0.5 * q2 * q2 * inv_f2);
    const double forearm = spec.forearm_peak * window * profile;

    const double d_window = window * (sigmoid(-(q1 + spec.forearm_length) / tau) - sigmoid(q1 / tau)) / tau;
    const double df1 = spec.forearm_peak * d_window * profile;
    const double df2 = -forearm * q2 * inv_f2;
    const double dp1 = -palm * q1 * inv_p2;
    const double dp2 = -palm * q2 * inv_p2;

    // Probabilistic union keeps the value in [0, 1] and stays smooth.
    const double value = 1.0 - (1.0 - palm) * (1.0 - forearm);
    return {value, (1.0 - forearm) * dp1 + (1.0 - palm) * df1, (1.0 - forearm) * dp2 + (1.0 - palm) * df2};
}

double template_density(double q1, double q2, const TemplateSpec& spec) {
    return template_density_grad(q1, q2, spec).value;
}

double splat_at(const Layout& l, double u, double v, const TemplateSpec& spec) {
    const WarpFrame f = make_frame(l);
    const CanonicalPoint p = to_canonical(f, u, v);
    return template_density(p.q1, p.q2, spec);
}

LayoutMask splat(const Layout& l, int width, int height, const TemplateSpec& spec) {
    check_grid_size(width, height);
    const WarpFrame f = make_frame(l);
    LayoutMask mask(width, height);
    for (int row = 0; row < height; ++row) {
        const double v = pixel_to_norm(row, height);
        for (int col = 0; col < width; ++col) {
            const CanonicalPoint p = to_canonical(f, pixel_to_norm(col, width), v);
            mask.at(col, row) = template_density(p.q1, p.q2, spec);
        }
    }
    return mask;
}

void splat_with_jacobian(const Layout& l, int width, int height, const TemplateSpec& spec,
                         LayoutMask& mask, MaskJacobian& jac) {
    check_grid_size(width, height);
    const WarpFrame f = make_frame(l);
    mask = LayoutMask(width, height);
    jac.width = width;
    jac.height = height;
    jac.grad.assign(static_cast<std::size_t>(width) * height, Vec5{});
    for (int row = 0; row < height; ++row) {
        const double v = pixel_to_norm(row, height);
        for (int col = 0; col < width; ++col) {
            const CanonicalPoint p = to_canonical(f, pixel_to_norm(col, width), v);
            const DensityGrad g = template_density_grad(p.q1, p.q2, spec);
            const std::size_t idx = static_cast<std::size_t>(row) * width + col;
            mask.values[idx] = g.value;
            jac.grad[idx] = chain_to_params(f, l, p, g);
        }
    }
}

MaskJacobian splat_jacobian(const Layout& l, int width, int height, const TemplateSpec& spec) {
    LayoutMask mask;
    MaskJacobian jac;
    splat_with_jacobian(l, width, height, spec, mask, jac);
    return jac;
}

ConditionStack blend_condition(const LayoutMask& mask, const Grid& object_grid) {
    if (!mask.same_shape(object_grid))
        throw DimensionMismatch(fmt::format("mask {}x{} does not match object grid {}x{}", mask.width, mask.height,
                                            object_grid.width, object_grid.height));
    ConditionStack stack{object_grid, mask, Grid(mask.width, mask.height)};
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double m = mask.values[i];
        stack.blend.values[i] = (1.0 - m) * object_grid.values[i] + m;
    }
    return stack;
}

Layout interpolate_layouts(const Layout& from, const Layout& to, double k) {
    if (!(k >= 0.0 && k <= 1.0)) throw DomainError("interpolation weight must lie in [0, 1]");
    if (k == 0.0) return from;
    if (k == 1.0) return to;
    const auto [c0, d0] = normalize_approach(from.b1, from.b2);
    const auto [c1, d1] = normalize_approach(to.b1, to.b2);
    const double dot = std::clamp(c0 * c1 + d0 * d1, -1.0, 1.0);
    if (dot <= -1.0 + 1e-12) throw DomainError("antipodal approach directions have no unique interpolation path");
    const double omega = std::acos(dot);
    double w0 = 1.0 - k;
    double w1 = k;
    if (omega > 1e-9) {
        w0 = std::sin((1.0 - k) * omega) / std::sin(omega);
        w1 = std::sin(k * omega) / std::sin(omega);
    }
    const auto [c, d] = normalize_approach(w0 * c0 + w1 * c1, w0 * d0 + w1 * d1);
    const double s = std::pow(from.scale(), 1.0 - k) * std::pow(to.scale(), k);
    return {std::sqrt(s), (1.0 - k) * from.x + k * to.x, (1.0 - k) * from.y + k * to.y, c, d};
}

Layout guard_layout(const Vec5& v) {
    constexpr double kMinA = 1e-3;
    constexpr double kMinNorm = 1e-6;
    Layout l = Layout::from_vec(v);
    if (std::abs(l.a) < kMinA) l.a = l.a < 0.0 ? -kMinA : kMinA;
    const double n = std::hypot(l.b1, l.b2);
    if (n < kMinNorm) {
        if (n > 0.0) {
            l.b1 *= kMinNorm / n;
            l.b2 *= kMinNorm / n;
        } else {
            l.b1 = kMinNorm;
            l.b2 = 0.0;
        }
    }
    return l;
}

}  // namespace layoutnet

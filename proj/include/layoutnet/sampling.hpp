#pragma once

#include <optional>

#include "layoutnet/denoiser.hpp"
#include "layoutnet/diffusion.hpp"
#include "layoutnet/geometry.hpp"

namespace layoutnet {

struct SampleOptions {
    SamplerKind sampler = SamplerKind::ddpm;
    double eta = 1.0;
    std::optional<GuidanceSpec> guidance;
    TemplateSpec templ{};
};

/// Canonical representative of a raw 5-vector: a made positive and the
/// direction normalized, except on coordinates pinned by guidance.
/// Throws DegenerateDirection when the direction has to be normalized but is
/// shorter than 1e-8.
Layout canonical_layout(const Vec5& raw, const std::optional<GuidanceSpec>& guidance);

/// Full reverse chain under the trained denoiser; a degenerate final direction
/// triggers one fresh chain before giving up.
Layout sample_layout(const Model& model, const Grid& object, const SampleOptions& opts, Rng& rng);

}  // namespace layoutnet

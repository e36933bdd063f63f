#include "layoutnet/sampling.hpp"

#include <cmath>

namespace layoutnet {

Layout canonical_layout(const Vec5& raw, const std::optional<GuidanceSpec>& guidance) {
    const auto pinned = [&](std::size_t d) { return guidance && guidance->constrains(d); };
    Layout l = Layout::from_vec(raw);
    if (!pinned(0)) l.a = std::abs(l.a);
    if (!pinned(3) && !pinned(4)) {
        const double n = std::hypot(l.b1, l.b2);
        if (!(n >= 1e-8)) throw DegenerateDirection("sampled approach direction is degenerate");
        l.b1 /= n;
        l.b2 /= n;
    }
    return l;
}

Layout sample_layout(const Model& model, const Grid& object, const SampleOptions& opts, Rng& rng) {
    const NoiseSchedule sched = model.schedule();
    const EpsilonFn eps_fn = [&](const Vec5& x_t, int t) {
        return predict_epsilon(model.params, object, x_t, t, opts.templ);
    };
    const ChainOptions chain{opts.sampler, opts.eta, opts.guidance};
    try {
        return canonical_layout(run_reverse_chain(eps_fn, sched, chain, rng), opts.guidance);
    } catch (const DegenerateDirection&) {
        return canonical_layout(run_reverse_chain(eps_fn, sched, chain, rng), opts.guidance);
    }
}

}  // namespace layoutnet

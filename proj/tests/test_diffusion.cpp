#include <doctest.h>

#include <cmath>
#include <random>

#include "layoutnet/diffusion.hpp"

using namespace layoutnet;

namespace {

struct Moments {
    double mean = 0.0;
    double std = 0.0;
};

template <typename Draw>
Moments monte_carlo(int n, Draw&& draw) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = draw();
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    return {mean, std::sqrt(s2 / n - mean * mean)};
}

Vec5 filled(double v) {
    Vec5 out;
    out.fill(v);
    return out;
}

}  // namespace

TEST_CASE("build_schedule invariants") {
    for (const auto family : {ScheduleFamily::linear, ScheduleFamily::cosine}) {
        for (const int steps : {10, 100, 1000}) {
            const NoiseSchedule s = build_schedule(steps, family);
            CHECK(s.steps() == steps);
            CHECK(s.alpha_bar(0) == 0.0);
            CHECK(s.alpha_bar(steps) >= 1.0 - 1e-4);
            for (int t = 0; t <= steps; ++t) {
                if (t > 0) CHECK(s.alpha_bar(t) > s.alpha_bar(t - 1));
                const double cs = s.signal_coef(t), cn = s.noise_coef(t);
                CHECK(std::abs(cs * cs + cn * cn - 1.0) < 1e-12);
            }
            CHECK(s.posterior_std(1) == 0.0);
        }
    }
    const NoiseSchedule lin = build_schedule(100, ScheduleFamily::linear);
    CHECK(lin.alpha_bar(0) == 0.0);
    CHECK(lin.alpha_bar(100) >= 0.9999);
    // closed form (1 - 1e-5) * t / T
    CHECK(lin.alpha_bar(50) == doctest::Approx(0.499995).epsilon(1e-14));
    CHECK_THROWS_AS(build_schedule(9, ScheduleFamily::linear), DomainError);
    CHECK(lin.dump().rfind("0 0\n1 0.0099999", 0) == 0);
}

TEST_CASE("forward_noise") {
    const NoiseSchedule s = build_schedule(100, ScheduleFamily::linear);
    const Vec5 x0{0.4, -0.2, 0.3, 0.8, -0.6};
    const Vec5 eps{1.0, -0.5, 0.25, 2.0, 0.1};
    CHECK(forward_noise(x0, 0, eps, s) == x0);
    const Vec5 last = forward_noise(x0, 100, eps, s);
    double nx = 0.0, d = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        nx += x0[i] * x0[i];
        d += (last[i] - eps[i]) * (last[i] - eps[i]);
    }
    CHECK(std::sqrt(d) <= 1e-2 * std::sqrt(nx));
    CHECK_THROWS_AS(forward_noise(x0, 101, eps, s), DomainError);
    CHECK_THROWS_AS(forward_noise(x0, -1, eps, s), DomainError);

    Rng rng(1234);
    for (const int t : {10, 50, 90}) {
        const auto m = monte_carlo(100000, [&] { return forward_noise(filled(10.0), t, standard_normal5(rng), s)[0]; });
        CHECK(std::abs(m.mean - s.signal_coef(t) * 10.0) <= 0.01 * s.signal_coef(t) * 10.0);
        CHECK(std::abs(m.std - s.noise_coef(t)) <= 0.01 * s.noise_coef(t));
    }
}

TEST_CASE("predict_x0") {
    const NoiseSchedule s(ScheduleFamily::linear, {0.0, 0.25, 0.5, 0.75});
    const Vec5 x_t = forward_noise(filled(2.0), 3, filled(1.0), s);
    CHECK(x_t[0] == doctest::Approx(1.866025).epsilon(1e-6));
    const Vec5 x0 = predict_x0(x_t, 3, filled(1.0), s);
    for (double v : x0) CHECK(std::abs(v - 2.0) < 1e-9);
    CHECK(predict_x0(x_t, 0, filled(7.0), s) == x_t);

    const NoiseSchedule nearly_one(ScheduleFamily::linear, {0.0, 0.5, 1.0 - 1e-13});
    CHECK_THROWS_AS(predict_x0(x_t, 2, filled(0.0), nearly_one), DomainError);

    const NoiseSchedule lin = build_schedule(100, ScheduleFamily::linear);
    Rng rng(77);
    std::uniform_int_distribution<int> step(1, 99);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec5 a = standard_normal5(rng);
        const Vec5 e = standard_normal5(rng);
        const int t = step(rng);
        const Vec5 back = predict_x0(forward_noise(a, t, e, lin), t, e, lin);
        for (std::size_t k = 0; k < 5; ++k) worst = std::max(worst, std::abs(back[k] - a[k]));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("reverse steps") {
    const NoiseSchedule s = build_schedule(100, ScheduleFamily::linear);
    Rng rng_a(5), rng_b(5), rng_c(6);
    const Vec5 x{0.3, -1.2, 0.5, 0.9, 0.1};
    const Vec5 e{0.2, 0.1, -0.3, 0.5, -0.7};

    SUBCASE("zero-noise ancestral step equals deterministic DDIM") {
        for (const int t : {1, 2, 37, 100}) {
            CHECK(reverse_step(x, t, e, s, 0.0, rng_a) == ddim_step(x, t, e, s, 0.0, rng_c));
        }
    }
    SUBCASE("ddim eta=1 shares ddpm's noise level") {
        for (const int t : {2, 50, 100}) CHECK(ddim_step(x, t, e, s, 1.0, rng_a) == ddpm_step(x, t, e, s, rng_b));
    }
    SUBCASE("final ancestral step is noiseless") {
        CHECK(ddpm_step(x, 1, e, s, rng_a) == ddpm_step(x, 1, e, s, rng_c));
    }
    SUBCASE("deterministic DDIM") {
        CHECK(ddim_step(x, 40, e, s, 0.0, rng_a) == ddim_step(x, 40, e, s, 0.0, rng_c));
        const Vec5 last = ddim_step(x, 1, e, s, 0.0, rng_a);
        const Vec5 x0 = predict_x0(x, 1, e, s);
        for (std::size_t k = 0; k < 5; ++k) CHECK(last[k] == doctest::Approx(x0[k]).epsilon(1e-14));
    }
    SUBCASE("true noise keeps DDIM on the forward trajectory") {
        Rng r(42);
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            const Vec5 x0 = standard_normal5(r);
            const Vec5 eps = standard_normal5(r);
            const int t = 1 + static_cast<int>(r() % 100);
            const Vec5 stepped = ddim_step(forward_noise(x0, t, eps, s), t, eps, s, 0.0, r);
            const Vec5 expected = forward_noise(x0, t - 1, eps, s);
            for (std::size_t k = 0; k < 5; ++k) worst = std::max(worst, std::abs(stepped[k] - expected[k]));
        }
        CHECK(worst < 1e-9);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(ddpm_step(x, 0, e, s, rng_a), DomainError);
        CHECK_THROWS_AS(ddim_step(x, 101, e, s, 0.0, rng_a), DomainError);
        CHECK_THROWS_AS(ddim_step(x, 5, e, s, 1.5, rng_a), DomainError);
    }
}

TEST_CASE("posterior variance matches the Gaussian posterior") {
    // Direct posterior of x_{t-1} given x_t and x0 in the standard parameterization
    // with g_t = 1 - abar_t as the signal fraction.
    const NoiseSchedule s = build_schedule(50, ScheduleFamily::cosine);
    for (int t = 2; t <= 50; ++t) {
        const double g = 1.0 - s.alpha_bar(t), g_prev = 1.0 - s.alpha_bar(t - 1);
        const double beta = 1.0 - g / g_prev;
        const double var = (1.0 - g_prev) / (1.0 - g) * beta;
        CHECK(s.posterior_std(t) == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    }
}

TEST_CASE("apply_guidance") {
    const NoiseSchedule s = build_schedule(100, ScheduleFamily::linear);
    Rng rng(9);
    const Vec5 x{0.1, 0.2, 0.3, 0.4, 0.5};
    GuidanceSpec none;
    CHECK(apply_guidance(x, 50, none, s, rng) == x);

    GuidanceSpec all;
    all.mask.fill(1.0);
    all.target = {0.4, -0.1, 0.2, 0.6, 0.8};
    CHECK(apply_guidance(x, 0, all, s, rng) == all.target);

    GuidanceSpec partial;
    partial.mask = {0.0, 1.0, 1.0, 0.0, 0.0};
    partial.target = {0.0, 0.25, -0.5, 0.0, 0.0};
    const Vec5 once = apply_guidance(x, 0, partial, s, rng);
    CHECK(apply_guidance(once, 0, partial, s, rng) == once);
    CHECK(once[0] == x[0]);
    CHECK(once[1] == 0.25);
    CHECK(once[3] == x[3]);

    const Vec5 mid = apply_guidance(x, 60, partial, s, rng);
    CHECK(mid[0] == x[0]);
    CHECK(mid[4] == x[4]);

    // mean tolerance is relative, so use a target well above the Monte-Carlo noise floor
    GuidanceSpec far = partial;
    far.target[2] = -8.0;
    for (const int t : {20, 70}) {
        const auto m = monte_carlo(100000, [&] { return apply_guidance(x, t, far, s, rng)[2]; });
        CHECK(std::abs(m.mean - s.signal_coef(t) * -8.0) <= 0.01 * std::abs(s.signal_coef(t) * 8.0));
        CHECK(std::abs(m.std - s.noise_coef(t)) <= 0.01 * s.noise_coef(t));
    }

    GuidanceSpec bad;
    bad.mask[0] = 0.5;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("guided chains hit constrained coordinates exactly") {
    const NoiseSchedule s = build_schedule(100, ScheduleFamily::linear);
    const EpsilonFn eps_fn = [](const Vec5& x_t, int) {
        Vec5 e;
        for (std::size_t k = 0; k < 5; ++k) e[k] = 0.5 * x_t[k];
        return e;
    };
    GuidanceSpec g;
    g.mask = {1.0, 0.0, 1.0, 0.0, 1.0};
    g.target = {0.3, 0.0, -0.7, 0.0, 0.9};
    for (const auto sampler : {SamplerKind::ddpm, SamplerKind::ddim}) {
        Rng rng(3);
        const Vec5 out = run_reverse_chain(eps_fn, s, {sampler, 0.0, g}, rng);
        CHECK(out[0] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(out[2] == doctest::Approx(-0.7).epsilon(1e-12));
        CHECK(out[4] == doctest::Approx(0.9).epsilon(1e-12));
    }
    Rng r1(4), r2(4);
    CHECK(run_reverse_chain(eps_fn, s, {SamplerKind::ddim, 0.0, {}}, r1) ==
          run_reverse_chain(eps_fn, s, {SamplerKind::ddim, 0.0, {}}, r2));
}

TEST_CASE("name parsing") {
    CHECK(parse_sampler("ddim") == SamplerKind::ddim);
    CHECK(parse_schedule_family("cosine") == ScheduleFamily::cosine);
    CHECK(to_string(SamplerKind::ddpm) == "ddpm");
    CHECK_THROWS_AS(parse_sampler("euler"), DomainError);
}

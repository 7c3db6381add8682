#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "nad/tasks.hpp"

using namespace nad;

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Signal constant_grid_signal(double c, int d = 1) {
    GridData g;
    g.d = d;
    g.m = 1;
    int cells = 1;
    for (int a = 0; a < d; ++a) {
        g.shape[static_cast<size_t>(a)] = 4;
        cells *= 4;
    }
    g.values.assign(static_cast<size_t>(cells), static_cast<float>(c));
    return Signal::grid(std::move(g));
}

AntiderivativeEvaluator synthetic_evaluator(int d, int k,
                                            std::function<double(const Coords&)> value) {
    AntiderivativeEvaluator ev;
    ev.d = d;
    ev.m = 1;
    ev.k = k;
    ev.value = [value](const Coords& x) { return std::vector<double>{value(x)}; };
    ev.mixed = [](const Coords&, const DerivOrder&) -> std::vector<double> {
        throw std::logic_error("synthetic evaluator has no derivative path");
    };
    return ev;
}

AntiderivativeEvaluator zero_evaluator(int d, int m, int k) {
    AntiderivativeEvaluator ev;
    ev.d = d;
    ev.m = m;
    ev.k = k;
    ev.value = [m](const Coords&) { return std::vector<double>(static_cast<size_t>(m), 0.0); };
    ev.mixed = [m](const Coords&, const DerivOrder&) {
        return std::vector<double>(static_cast<size_t>(m), 0.0);
    };
    return ev;
}

}  // namespace

TEST_CASE("evaluation grids cover the margined box, axis 0 fastest") {
    EvalGrid g;
    g.resolution = 5;
    g.margin = 0.1;
    g.validate();
    CHECK_THAT(g.axis_point(0), WithinAbs(0.1, 1e-15));
    CHECK_THAT(g.axis_point(2), WithinAbs(0.5, 1e-15));
    CHECK_THAT(g.axis_point(4), WithinAbs(0.9, 1e-15));
    CHECK(g.total_points(2) == 25);

    const Coords p = g.point(2, 7);
    CHECK_THAT(p[0], WithinAbs(0.5, 1e-15));
    CHECK_THAT(p[1], WithinAbs(0.3, 1e-15));

    EvalGrid bad;
    bad.resolution = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.resolution = 4;
    bad.margin = 0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("differentiating an exact antiderivative recovers the signal") {
    for (int d : {1, 2}) {
        for (int k : {1, 2}) {
            const Signal sig = make_rectangle_mixture(d, 3, 100 + 10 * d + k);
            const AntiderivativeEvaluator model = make_rectangle_oracle_evaluator(sig, k);
            EvalGrid grid;
            grid.resolution = d == 1 ? 101 : 21;
            CHECK(reconstruction_error(model, sig, grid) <= 1e-12);
        }
    }
}

TEST_CASE("a zero model scores the signal energy") {
    const double c = 0.75;
    const Signal sig = constant_grid_signal(c);
    EvalGrid grid;
    grid.resolution = 16;
    const double err = reconstruction_error(zero_evaluator(1, 1, 1), sig, grid);
    CHECK_THAT(err, WithinAbs(c * c, 1e-15));

    CHECK_THROWS_AS(reconstruction_error(zero_evaluator(2, 1, 1), sig, grid),
                    std::invalid_argument);
}

TEST_CASE("matched half-widths equate kernel and gaussian variances") {
    CHECK_THAT(gaussian_match_halfwidth(0.1, 1), WithinAbs(0.17320508075688773, 1e-15));
    CHECK_THAT(gaussian_match_halfwidth(0.1, 2), WithinAbs(0.12247448713915889, 1e-15));
    CHECK_THAT(gaussian_match_halfwidth(0.1, 3), WithinAbs(0.1, 1e-15));
    for (int k = 1; k <= 4; ++k) {
        const double sigma = 0.23;
        const double w = gaussian_match_halfwidth(sigma, k);
        CHECK_THAT(k * w * w / 3.0, WithinRel(sigma * sigma, 1e-12));
    }
    CHECK_THROWS_AS(gaussian_match_halfwidth(0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_match_halfwidth(0.1, 0), std::invalid_argument);
}

TEST_CASE("knot filtering reproduces its exactness classes") {
    SECTION("box average of a constant") {
        const double c = 1.7;
        const auto model = synthetic_evaluator(1, 1, [c](const Coords& x) { return c * x[0]; });
        for (double w : {0.05, 0.2}) {
            const FilterKernel kern{1, w};
            for (double x : {0.3, 0.5, 0.61})
                CHECK_THAT(spline_filter(model, Coords{x}, kern)[0], WithinAbs(c, 1e-12));
        }
    }
    SECTION("box average at a step") {
        const Signal step = Signal::rectangle_mixture(1, {Box{{0.5}, {1.0}, 1.0}});
        const auto model = make_rectangle_oracle_evaluator(step, 1);
        const FilterKernel kern{1, 0.2};
        CHECK_THAT(spline_filter(model, Coords{0.5}, kern)[0], WithinAbs(0.5, 1e-12));
        // fully inside and fully outside the plateau
        CHECK_THAT(spline_filter(model, Coords{0.75}, kern)[0], WithinAbs(1.0, 1e-12));
        CHECK_THAT(spline_filter(model, Coords{0.25}, kern)[0], WithinAbs(0.0, 1e-12));
    }
    SECTION("tent kernel reproduces affine signals") {
        const auto model =
            synthetic_evaluator(1, 2, [](const Coords& x) { return x[0] * x[0] * x[0] / 6.0; });
        const FilterKernel kern{2, 0.1};
        for (double x : {0.25, 0.4, 0.7})
            CHECK_THAT(spline_filter(model, Coords{x}, kern)[0], WithinAbs(x, 1e-12));
    }
    SECTION("tensor product over axes") {
        const double c = -0.8;
        const auto model = synthetic_evaluator(
            2, 1, [c](const Coords& x) { return c * x[0] * x[1]; });
        const FilterKernel kern{1, 0.15};
        CHECK_THAT(spline_filter(model, Coords{0.5, 0.4}, kern)[0], WithinAbs(c, 1e-12));

        const auto affine = synthetic_evaluator(2, 2, [](const Coords& x) {
            const double u = x[0], v = x[1];
            return u * u * u * v * v / 12.0 + u * u * v * v * v / 12.0;
        });
        const FilterKernel tent{2, 0.08};
        const Coords p{0.45, 0.6};
        CHECK_THAT(spline_filter(affine, p, tent)[0], WithinAbs(p[0] + p[1], 1e-10));
    }
    SECTION("kernel order must match the evaluator") {
        const auto model = synthetic_evaluator(1, 1, [](const Coords& x) { return x[0]; });
        CHECK_THROWS_AS(spline_filter(model, Coords{0.5}, FilterKernel{2, 0.1}),
                        std::invalid_argument);
    }
}

TEST_CASE("the sampled filter reference hits closed-form cases") {
    SECTION("constants pass through") {
        // Grid samples are stored as float32; pick a value exact in that format.
        const Signal sig = constant_grid_signal(1.25);
        McSampler sampler(1, 5);
        const FilterKernel kern{1, 0.25};
        const auto got = mc_filter_oracle(sig, Coords{0.5}, kern, 400, sampler);
        CHECK_THAT(got[0], WithinAbs(1.25, 1e-12));
    }
    SECTION("a kernel spanning the domain sees the box mass") {
        const Signal sig = Signal::rectangle_mixture(1, {Box{{0.3}, {0.5}, 2.0}});
        McSampler sampler(1, 17);
        const FilterKernel kern{1, 1.0};
        const auto got = mc_filter_oracle(sig, Coords{0.5}, kern, 100000, sampler);
        CHECK_THAT(got[0], WithinAbs(0.2, 6e-3));
    }
}

TEST_CASE("knot filtering agrees with the sampled reference on random signals") {
    // Both sides compute f * B_k; the exact-antiderivative stencil must sit
    // inside the Monte Carlo error band of the sampled convolution.
    int config = 0;
    for (int d : {1, 2}) {
        for (int k : {1, 2}) {
            ++config;
            const Signal sig = make_rectangle_mixture(d, 3, 700 + config);
            const AntiderivativeEvaluator model = make_rectangle_oracle_evaluator(sig, k);
            const double w = gaussian_match_halfwidth(0.1, k);
            const FilterKernel kern{k, w};
            const double lo = w * k + 0.02, hi = 1.0 - w * k - 0.02;
            RngStream px(5200 + config);
            for (int p = 0; p < 50; ++p) {
                Coords x;
                x.n = d;
                for (int a = 0; a < d; ++a) x.v[static_cast<size_t>(a)] = px.next_uniform(lo, hi);
                const double exact = spline_filter(model, x, kern)[0];

                const int reps = 64, n = 1000;
                double sum = 0.0, sumsq = 0.0;
                for (int r = 0; r < reps; ++r) {
                    McSampler sampler(d, RngStream::mix(811, config * 10000 + p * 100 + r));
                    const double est = mc_filter_oracle(sig, x, kern, n, sampler)[0];
                    sum += est;
                    sumsq += est * est;
                }
                const double mean = sum / reps;
                const double var = (sumsq - reps * mean * mean) / (reps - 1);
                const double se = std::sqrt(std::max(var, 0.0) / reps);
                CAPTURE(config, p);
                CHECK_THAT(exact, WithinAbs(mean, 3.0 * se + 1e-9));
            }
        }
    }
}

TEST_CASE("filter error measures model deviation over the interior") {
    const Signal sig = make_rectangle_mixture(1, 3, 909);
    const FilterKernel kern{1, 0.1};
    EvalGrid grid;
    grid.resolution = 41;

    SECTION("an exact model sits at the sampling noise floor") {
        const auto model = make_rectangle_oracle_evaluator(sig, 1);
        const double coarse = filter_error(model, sig, grid, kern, 200, 21);
        const double fine = filter_error(model, sig, grid, kern, 20000, 21);
        CHECK(fine > 0.0);
        CHECK(fine < 2e-4);
        CHECK(fine < coarse);
    }
    SECTION("a zero model scores the mean squared reference") {
        const uint64_t seed = 33;
        const double err = filter_error(zero_evaluator(1, 1, 1), sig, grid, kern, 500, seed);
        EvalGrid inner = grid;
        inner.margin = std::max(kern.half_width * kern.order, grid.margin);
        double want = 0.0;
        for (long i = 0; i < inner.total_points(1); ++i) {
            McSampler sampler(1, RngStream::mix(seed, static_cast<uint64_t>(i)));
            const double v = mc_filter_oracle(sig, inner.point(1, i), kern, 500, sampler)[0];
            want += v * v;
        }
        want /= static_cast<double>(inner.total_points(1));
        CHECK_THAT(err, WithinRel(want, 1e-12));
    }
}

TEST_CASE("box filtering yields the exact trapezoid profile") {
    // Filtering a single rectangle with a width-2w box kernel gives
    // amp * overlap([x - w, x + w], [a, b]) / (2w); the peak decays once
    // 2w exceeds the rectangle width.
    const Signal sig = Signal::rectangle_mixture(1, {Box{{0.4}, {0.6}, 3.0}});
    const auto model = make_rectangle_oracle_evaluator(sig, 1);
    const auto trapezoid = [](double x, double w) {
        const double overlap = std::max(0.0, std::min(x + w, 0.6) - std::max(x - w, 0.4));
        return 3.0 * overlap / (2.0 * w);
    };

    for (double w : {0.05, 0.1, 0.2, 0.3})
        for (double x : {0.35, 0.5, 0.65})
            CHECK_THAT(spline_filter(model, Coords{x}, FilterKernel{1, w})[0],
                       WithinAbs(trapezoid(x, w), 1e-12));

    double prev = std::numeric_limits<double>::infinity();
    for (double w : {0.02, 0.05, 0.1, 0.2, 0.3}) {
        const double peak = spline_filter(model, Coords{0.5}, FilterKernel{1, w})[0];
        CHECK(peak <= prev + 1e-12);
        prev = peak;
    }
}

TEST_CASE("wider kernels average more across random signals") {
    // For one fixed signal the windowed variance need not be monotone in w
    // (mass just outside the margin can raise it), so the check is
    // statistical: the ensemble-mean grid variance is non-increasing.
    EvalGrid grid;
    grid.resolution = 81;
    const int signals = 16;
    std::array<double, 5> widths{0.02, 0.05, 0.1, 0.2, 0.3};
    std::array<double, 5> mean_var{};
    for (int s = 0; s < signals; ++s) {
        const Signal sig = make_rectangle_mixture(1, 4, static_cast<uint64_t>(4000 + s));
        const auto model = make_rectangle_oracle_evaluator(sig, 1);
        const long total = grid.total_points(1);
        for (size_t wi = 0; wi < widths.size(); ++wi) {
            const FilterKernel kern{1, widths[wi]};
            std::vector<double> vals;
            for (long i = 0; i < total; ++i)
                vals.push_back(spline_filter(model, grid.point(1, i), kern)[0]);
            double mean = 0.0, var = 0.0;
            for (double v : vals) mean += v / static_cast<double>(total);
            for (double v : vals) var += (v - mean) * (v - mean) / static_cast<double>(total);
            mean_var[wi] += var / signals;
        }
    }
    for (size_t wi = 1; wi < widths.size(); ++wi)
        CHECK(mean_var[wi] <= mean_var[wi - 1] + 1e-12);
}

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "nad/mc.hpp"
#include "nad/signals.hpp"

using namespace nad;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("sobol sequence matches the reference construction") {
    // reference rows from an independent implementation of the same
    // direction-number tables (gray-code order, zero point skipped)
    const double d3[8][3] = {
        {0.5, 0.5, 0.5},       {0.75, 0.25, 0.25},   {0.25, 0.75, 0.75},
        {0.375, 0.375, 0.625}, {0.875, 0.875, 0.125}, {0.625, 0.125, 0.875},
        {0.125, 0.625, 0.375}, {0.1875, 0.3125, 0.9375},
    };
    SobolSampler s3(3);
    double p[8];
    for (auto& row : d3) {
        s3.next(p);
        for (int a = 0; a < 3; ++a) CHECK(p[a] == row[a]);
    }
    const double d8_row8[8] = {0.1875, 0.3125, 0.9375, 0.4375,
                               0.5625, 0.3125, 0.4375, 0.9375};
    SobolSampler s8(8);
    for (int i = 0; i < 8; ++i) s8.next(p);
    for (int a = 0; a < 8; ++a) CHECK(p[a] == d8_row8[a]);
}

TEST_CASE("sobol deep index matches sequential advance") {
    SobolSampler seq(5);
    double p[5], q[5];
    for (int i = 0; i < 1000; ++i) seq.next(p);  // p now holds emission 1000
    SobolSampler jump(5, 1000);
    jump.next(q);
    for (int a = 0; a < 5; ++a) CHECK(p[a] == q[a]);
    // reference value for the point at gray-code position 1000
    const double want[5] = {0.2197265625, 0.0966796875, 0.5185546875, 0.6767578125,
                            0.2802734375};
    for (int a = 0; a < 5; ++a) CHECK(q[a] == want[a]);
}

TEST_CASE("sobol points stratify each axis") {
    // emissions 1..1023 cover the first 1024-point block minus the zero point,
    // so every 1/16 bin holds exactly 64 points except bin 0 with 63
    SobolSampler s(3);
    double p[3];
    std::array<std::array<int, 16>, 3> bins{};
    for (int i = 0; i < 1023; ++i) {
        s.next(p);
        for (int a = 0; a < 3; ++a) {
            const int b = static_cast<int>(p[a] * 16);
            REQUIRE((b >= 0 && b < 16));
            ++bins[a][b];
        }
    }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 16; ++b) CHECK(bins[a][b] == (b == 0 ? 63 : 64));
}

TEST_CASE("shifted sobol streams stay in the unit box and differ") {
    RngStream rng(3);
    SobolSampler a = SobolSampler::shifted(2, rng);
    SobolSampler b = SobolSampler::shifted(2, rng);
    double pa[2], pb[2];
    bool differs = false;
    for (int i = 0; i < 512; ++i) {
        a.next(pa);
        b.next(pb);
        for (int ax = 0; ax < 2; ++ax) {
            CHECK((pa[ax] >= 0.0 && pa[ax] < 1.0));
            CHECK((pb[ax] >= 0.0 && pb[ax] < 1.0));
        }
        if (pa[0] != pb[0]) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("repeated-integral estimator is exact for constants at k=1") {
    SignalView c = make_signal_view(2, 1, [](const double*, double* o) { o[0] = 1.3; });
    SobolSampler s(2);
    const auto est = cauchy_estimate(c, Coords{0.6, 0.9}, 1, 7, s);
    CHECK_THAT(est[0], WithinRel(1.3 * 0.6 * 0.9, 1e-14));
}

TEST_CASE("repeated-integral estimator converges to closed forms") {
    // f(t) = t in 1-d: k-fold integral x^{k+1}/(k+1)!·(k+1)... check k=2: x^3/6
    SignalView lin = make_signal_view(1, 1, [](const double* x, double* o) { o[0] = x[0]; });
    SobolSampler s1(1);
    const auto e1 = cauchy_estimate(lin, Coords{0.8}, 2, 4096, s1);
    CHECK_THAT(e1[0], WithinRel(0.8 * 0.8 * 0.8 / 6.0, 2e-3));

    // f(x,y) = xy separable: A_2 = (x^3/6)(y^3/6)
    SignalView xy =
        make_signal_view(2, 1, [](const double* x, double* o) { o[0] = x[0] * x[1]; });
    SobolSampler s2(2);
    const auto e2 = cauchy_estimate(xy, Coords{0.7, 0.5}, 2, 16384, s2);
    CHECK_THAT(e2[0], WithinRel((0.343 / 6.0) * (0.125 / 6.0), 5e-3));

    // gaussian reference value from high-precision quadrature
    Signal g = Signal::gaussian_mixture(1, {GaussianComponent{0.8, {0.45, 0.0, 0.0}, 0.1}});
    SobolSampler s3(1);
    const auto e3 = cauchy_estimate(g.view(), Coords{0.7}, 2, 8192, s3);
    CHECK_THAT(e3[0], WithinRel(0.05017226365152596, 5e-3));
}

TEST_CASE("repeated-integral estimator is exactly zero on the axes") {
    SignalView c = make_signal_view(2, 1, [](const double*, double* o) { o[0] = 5.0; });
    SobolSampler s(2);
    const auto est = cauchy_estimate(c, Coords{0.0, 0.9}, 3, 16, s);
    CHECK(est[0] == 0.0);
    CHECK(s.next_index() == 1);  // no samples consumed
}

TEST_CASE("bspline offsets have the right support and variance") {
    RngStream rng(41);
    const int k = 2;
    const double eps = 0.25;
    const int n = 200000;
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double o = sample_bspline_offset(k, eps, rng);
        REQUIRE(std::abs(o) <= k * eps);
        mean += o;
        sq += o * o;
    }
    mean /= n;
    sq /= n;
    CHECK_THAT(mean, WithinAbs(0.0, 2e-3));
    CHECK_THAT(sq, WithinRel(k * eps * eps / 3.0, 2e-2));
}

TEST_CASE("hermite weights match reference values") {
    CHECK_THAT(hermite_weight(0, 0.1, 0.05), WithinRel(1.0, 1e-14));
    CHECK_THAT(hermite_weight(1, 0.1, 0.05), WithinRel(-5.0, 1e-13));
    CHECK_THAT(hermite_weight(2, 0.1, 0.05), WithinRel(-74.999999999999986, 1e-13));
    CHECK_THAT(hermite_weight(3, 0.25, -0.1), WithinRel(-72.704000000000008, 1e-13));
    CHECK_THAT(hermite_weight(4, 0.02, 0.013), WithinRel(4021914.0625000033, 1e-13));
    CHECK_THAT(hermite_weight(6, 0.3, 0.2), WithinRel(2914.7167794731718, 1e-13));
}

TEST_CASE("smooth sample draws pair antithetically for odd orders") {
    SobolSampler s(2);
    const auto sm = draw_smooth_samples(DerivOrder{1, 2}, 0.1, 8, s);
    REQUIRE(sm.tau.cols() == 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(sm.tau(0, 4 + i) == -sm.tau(0, i));
        CHECK(sm.tau(1, 4 + i) == -sm.tau(1, i));
    }
    // even orders: no mirroring, all draws independent positions
    SobolSampler s2(2);
    const auto sm2 = draw_smooth_samples(DerivOrder{2, 2}, 0.1, 8, s2);
    bool mirrored = true;
    for (int i = 0; i < 4; ++i)
        if (sm2.tau(0, 4 + i) != -sm2.tau(0, i)) mirrored = false;
    CHECK_FALSE(mirrored);
    SobolSampler s3(2);
    CHECK_THROWS_AS(draw_smooth_samples(DerivOrder{1, 0}, 0.1, 7, s3),
                    std::invalid_argument);
}

TEST_CASE("odd-order smooth estimates vanish exactly on constants") {
    // paired draws carry exactly negated weights and are summed per pair, so
    // the cancellation survives floating point
    SignalView c1 = make_signal_view(1, 1, [](const double*, double* o) { o[0] = 0.7; });
    SignalView c2 = make_signal_view(2, 1, [](const double*, double* o) { o[0] = -1.3; });
    for (double sigma : {0.05, 0.3}) {
        SobolSampler a(1);
        CHECK(smooth_deriv_estimate(c1, Coords{0.4}, DerivOrder{1}, sigma, 256, a)[0] == 0.0);
        SobolSampler b(1);
        CHECK(smooth_deriv_estimate(c1, Coords{0.4}, DerivOrder{3}, sigma, 256, b)[0] == 0.0);
        SobolSampler e(2);
        CHECK(smooth_deriv_estimate(c2, Coords{0.4, 0.6}, DerivOrder{1, 0}, sigma, 256, e)[0] ==
              0.0);
    }
}

TEST_CASE("smoothed derivative estimates match the blurred closed form") {
    // blurring w e^{-(x-mu)^2/(2s^2)} with a gaussian of width sigma gives
    // w s/sqrt(s^2+sigma^2) e^{-(x-mu)^2/(2(s^2+sigma^2))}; reference
    // derivatives evaluated symbolically at x=0.55
    Signal g = Signal::gaussian_mixture(1, {GaussianComponent{0.8, {0.45, 0.0, 0.0}, 0.1}});
    const double want[3] = {0.44055625192254699, -2.2027812596127352,
                            -11.013906298063675};
    for (int k = 0; k <= 2; ++k) {
        SobolSampler s(1);
        const auto est =
            smooth_deriv_estimate(g.view(), Coords{0.55}, DerivOrder{k}, 0.1, 16384, s);
        CHECK_THAT(est[0], WithinRel(want[k], 2e-2));
    }
}

TEST_CASE("stochastic convolution reproduces kernel moments") {
    // convolving t -> t^2 with any zero-mean kernel adds the kernel variance
    SignalView sq = make_signal_view(1, 1, [](const double* x, double* o) {
        o[0] = x[0] * x[0];
    });
    const double x = 0.4;

    McSampler ms(1, 7);
    const auto b = mc_convolve(sq, Coords{x}, KernelSpec::bspline(2, 0.25), 100000, ms);
    CHECK_THAT(b[0], WithinAbs(x * x + 2 * 0.25 * 0.25 / 3.0, 3e-3));

    McSampler ms2(1, 8);
    const auto g = mc_convolve(sq, Coords{x}, KernelSpec::gaussian(0.1), 65536, ms2);
    CHECK_THAT(g[0], WithinAbs(x * x + 0.01, 3e-4));

    // and the gaussian-blurred gaussian closed form
    Signal gm = Signal::gaussian_mixture(1, {GaussianComponent{0.8, {0.45, 0.0, 0.0}, 0.1}});
    McSampler ms3(1, 9);
    const auto h = mc_convolve(gm.view(), Coords{0.55}, KernelSpec::gaussian(0.1), 65536, ms3);
    CHECK_THAT(h[0], WithinRel(0.44055625192254699, 5e-3));
}

TEST_CASE("kernel factories validate their parameters") {
    CHECK_THROWS_AS(KernelSpec::bspline(0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec::bspline(2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec::gaussian(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec::gaussian_derivative(0.1, -1), std::invalid_argument);
    CHECK_THROWS_AS(KernelSpec::dirac({0.1}, {1.0, 2.0}), std::invalid_argument);
    // dirac combs cannot be sampled stochastically
    SignalView c = make_signal_view(1, 1, [](const double*, double* o) { o[0] = 1.0; });
    McSampler ms(1, 3);
    CHECK_THROWS_AS(
        mc_convolve(c, Coords{0.5}, KernelSpec::dirac({0.0}, {1.0}), 8, ms),
        std::invalid_argument);
}

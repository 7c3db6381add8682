#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "nad/rng.hpp"
#include "nad/types.hpp"

using namespace nad;

TEST_CASE("Coords holds up to three axes") {
    Coords a{0.1, 0.7};
    REQUIRE(a.dims() == 2);
    REQUIRE(a[0] == 0.1);
    REQUIRE(a[1] == 0.7);
    const double raw[3] = {0.5, 0.25, 0.125};
    Coords b = Coords::from(std::span<const double>(raw, 3));
    REQUIRE(b.dims() == 3);
    REQUIRE(b[2] == 0.125);
    REQUIRE_THROWS_AS((Coords{0.1, 0.2, 0.3, 0.4}), std::invalid_argument);
}

TEST_CASE("DerivOrder validates axis counts and totals") {
    DerivOrder o{2, 1};
    REQUIRE(o.dims() == 2);
    REQUIRE(o.total() == 3);
    REQUIRE_FALSE(o.is_zero());
    REQUIRE(DerivOrder::zero(3).is_zero());
    REQUIRE(DerivOrder::uniform(2, 3).total() == 6);
    // per-axis orders must be nonnegative and the box must stay small
    REQUIRE_THROWS_AS((DerivOrder{-1, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(DerivOrder::uniform(3, 3), std::invalid_argument);
    REQUIRE_THROWS_AS((DerivOrder{7}), std::invalid_argument);
}

TEST_CASE("factorial and binomial spot values") {
    REQUIRE(factorial(0) == 1.0);
    REQUIRE(factorial(5) == 120.0);
    REQUIRE(factorial(12) == 479001600.0);
    REQUIRE(binomial(9, 4) == 126.0);
    REQUIRE(binomial(4, 0) == 1.0);
    REQUIRE(binomial(4, 4) == 1.0);
}

TEST_CASE("clamp01 pins values into the unit interval") {
    REQUIRE(clamp01(-0.2) == 0.0);
    REQUIRE(clamp01(0.4) == 0.4);
    REQUIRE(clamp01(1.7) == 1.0);
}

TEST_CASE("inverse normal cdf matches reference quantiles") {
    CHECK_THAT(inverse_normal_cdf(0.5), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(inverse_normal_cdf(0.025),
               Catch::Matchers::WithinAbs(-1.9599639845400545, 1e-10));
    CHECK_THAT(inverse_normal_cdf(0.975),
               Catch::Matchers::WithinAbs(1.959963984540054, 1e-10));
    CHECK_THAT(inverse_normal_cdf(1e-10),
               Catch::Matchers::WithinRel(-6.3613409024040557, 1e-9));
    CHECK_THAT(inverse_normal_cdf(1.0 - 1e-10),
               Catch::Matchers::WithinRel(6.3613408896974217, 1e-9));
    CHECK_THAT(inverse_normal_cdf(0.31830988618),
               Catch::Matchers::WithinAbs(-0.47243017216530314, 1e-12));
    // antisymmetry about the median
    for (double p : {0.01, 0.2, 0.413, 0.49}) {
        CHECK_THAT(inverse_normal_cdf(p) + inverse_normal_cdf(1.0 - p),
                   Catch::Matchers::WithinAbs(0.0, 1e-11));
    }
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
    RngStream a(42), b(42), c(43);
    for (int i = 0; i < 64; ++i) {
        const uint64_t va = a.next_u64();
        REQUIRE(va == b.next_u64());
        REQUIRE(va != c.next_u64());
    }
}

TEST_CASE("rng unit draws stay in range") {
    RngStream r(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.next_unit();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double v = r.next_open_unit();
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
        const double w = r.next_uniform(-2.0, 3.0);
        REQUIRE(w >= -2.0);
        REQUIRE(w < 3.0);
    }
}

TEST_CASE("rng gaussian draws have the right first two moments") {
    RngStream r(123);
    const int n = 40000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = r.next_gaussian();
        sum += g;
        sq += g * g;
    }
    CHECK_THAT(sum / n, Catch::Matchers::WithinAbs(0.0, 0.02));
    CHECK_THAT(sq / n, Catch::Matchers::WithinAbs(1.0, 0.03));
}

TEST_CASE("forked streams do not collide with the parent or each other") {
    RngStream base(99);
    RngStream f1 = base.fork(1);
    RngStream f2 = base.fork(2);
    std::set<uint64_t> seen;
    RngStream* streams[] = {&base, &f1, &f2};
    for (auto* s : streams)
        for (int i = 0; i < 256; ++i) seen.insert(s->next_u64());
    REQUIRE(seen.size() == 3 * 256);
    // forking is a pure function of (seed, label)
    RngStream again = RngStream(99).fork(1);
    RngStream f1b = RngStream(99).fork(1);
    REQUIRE(again.next_u64() == f1b.next_u64());
}

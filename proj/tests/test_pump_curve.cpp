#include "mei/pump_curve.hpp"

#include <doctest.h>

using namespace mei;

TEST_CASE("reconstructed curves are pinned at the best-efficiency point")
{
    const auto c = reconstruct_pump_curves(150.0, 65.0, 0.8);
    CHECK(c.head.head(150.0) == doctest::Approx(65.0).epsilon(1e-15));
    CHECK(c.efficiency(150.0) == 0.8);
    CHECK(c.head.head(0.0) == doctest::Approx(65.0 * 4.0 / 3.0).epsilon(1e-12));
    CHECK(c.head.head(300.0) == 0.0);
    CHECK(c.efficiency(300.0) == kEfficiencyFloor);
}

TEST_CASE("reconstructed head is nonincreasing and efficiency unimodal")
{
    const auto c = reconstruct_pump_curves(80.0, 30.0);
    double prev_h = c.head.head(0.0);
    double prev_e = c.efficiency(0.0);
    bool past_peak = false;
    for (int i = 1; i <= 200; ++i) {
        const double q = i * 1.0;
        const double h = c.head.head(q);
        const double e = c.efficiency(q);
        CHECK(h <= prev_h);
        if (q > 80.0)
            past_peak = true;
        if (past_peak)
            CHECK(e <= prev_e);
        else
            CHECK(e >= prev_e);
        CHECK(e <= c.efficiency(80.0));
        prev_h = h;
        prev_e = e;
    }
}

TEST_CASE("invalid BEP inputs are rejected")
{
    CHECK_THROWS_AS(reconstruct_pump_curves(0.0, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(reconstruct_pump_curves(10.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(reconstruct_pump_curves(10.0, 10.0, 1.2), std::invalid_argument);
}

TEST_CASE("three-point fit passes through its points")
{
    const auto c = HeadCurve::three_point(100.0, 50.0, 80.0, 100.0, 30.0);
    CHECK(c.gain(0.0) == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(c.gain(50.0) == doctest::Approx(80.0).epsilon(1e-12));
    CHECK(c.gain(100.0) == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(c.is_decreasing());
}

TEST_CASE("tabulated curve interpolates and slopes match differences")
{
    const auto c = HeadCurve::tabulated({{0.0, 50.0}, {10.0, 45.0}, {20.0, 30.0}});
    CHECK(c.gain(5.0) == doctest::Approx(47.5));
    CHECK(c.gain(15.0) == doctest::Approx(37.5));
    CHECK(c.slope(15.0) == doctest::Approx(-1.5));
    CHECK(c.is_decreasing());
    CHECK_FALSE(HeadCurve::tabulated({{0.0, 50.0}, {10.0, 55.0}}).is_decreasing());
}

TEST_CASE("gain slope is consistent with finite differences")
{
    const auto curves = {HeadCurve::design_point(100.0, 40.0), HeadCurve::power_law(60.0, 0.01, 1.9),
                         HeadCurve::constant_power(20.0)};
    for (const auto& c : curves)
        for (double q : {5.0, 40.0, 120.0}) {
            const double fd = (c.gain(q + 1e-4) - c.gain(q - 1e-4)) / 2e-4;
            CHECK(c.slope(q) == doctest::Approx(fd).epsilon(1e-5));
        }
}

TEST_CASE("small-flow law is continuous")
{
    const auto c = HeadCurve::power_law(60.0, 0.01, 1.9);
    CHECK(c.gain(kSmallFlow * (1 - 1e-12)) == doctest::Approx(c.gain(kSmallFlow)).epsilon(1e-12));
    CHECK(c.gain(-1.0) > c.gain(0.0));
}

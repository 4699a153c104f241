#include <catch2/catch_amalgamated.hpp>

#include <mrisk/greeks.hpp>

#include "market_fixtures.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace mrisk;
using fixtures::flat_market;

namespace {

McConfig quick_config(std::uint64_t seed = 20260818, long long paths = 20000) {
    McConfig c;
    c.n_paths = paths;
    c.seed = seed;
    return c;
}

Product linear_forward(double ref = 100.0) {
    ProfileProduct f;
    f.reference_spot = ref;
    f.expiry = 1.0;
    f.profile.x = {0.0, 10.0};
    f.profile.y = {0.0, 10.0};
    return Product{f};
}

Product atm_put() {
    VanillaOption p;
    p.reference_spot = 100.0;
    p.strike = 1.0;
    p.expiry = 1.0;
    return Product{p};
}

} // namespace

TEST_CASE("bump validation") {
    MarketSnapshot mkt = flat_market(0.2, 0.01, 0.0);
    McConfig cfg = quick_config(1, 256);
    GreeksBumps b;
    b.spot_rel = 0.0;
    REQUIRE_THROWS_AS(greeks(atm_put(), lv_model(), mkt, cfg, b), ValidationError);
    b = GreeksBumps{};
    b.vol_abs = -0.01;
    REQUIRE_THROWS_AS(greeks(atm_put(), lv_model(), mkt, cfg, b), ValidationError);
    b = GreeksBumps{};
    b.correlation_abs = 0.0;
    REQUIRE_THROWS_AS(greeks(atm_put(), lv_model(), mkt, cfg, b), ValidationError);
}

TEST_CASE("linear payoff has unit delta and zero gamma") {
    // Deterministic market: zero rates, negligible vol. Common random numbers
    // make the finite differences of a linear value function exact up to
    // Monte Carlo noise in the (tiny) martingale factor.
    MarketSnapshot mkt = flat_market(1e-4, 0.0, 0.0);
    McConfig cfg = quick_config(7, 20000);
    GreeksReport rep = greeks(linear_forward(), lv_model(), mkt, cfg);
    CHECK(std::abs(rep.delta - 1.0) <= 1e-6);
    CHECK(std::abs(rep.gamma) <= 1e-6);
    CHECK(rep.bumps.spot_rel == 0.01);
    CHECK(rep.bumps.vol_abs == 0.01);
    CHECK_FALSE(rep.correlation_sensitivity.has_value());

    SECTION("and stays linear when spot has drifted off the reference") {
        MarketSnapshot shifted = mkt;
        shifted.equity.spot = 117.0;
        GreeksReport r2 = greeks(linear_forward(), lv_model(), shifted, cfg);
        CHECK(std::abs(r2.delta - 1.0) <= 1e-6);
        CHECK(std::abs(r2.gamma) <= 1e-6);
    }
}

TEST_CASE("vanilla put greeks match black-scholes") {
    MarketSnapshot mkt = flat_market(0.2, 0.01, 0.0);
    McConfig cfg = quick_config(99, 40000);
    GreeksReport rep = greeks(atm_put(), lv_model(), mkt, cfg);

    oracle::BsInputs bs;
    bs.spot = 100.0;
    bs.strike = 100.0;
    bs.rate = 0.01;
    bs.carry = 0.0;
    bs.vol = 0.2;
    bs.expiry = 1.0;

    double ref_delta = oracle::bs_put_delta(bs);
    INFO("delta " << rep.delta << " bs " << ref_delta << " se " << rep.delta_std_error);
    CHECK(std::abs(rep.delta - ref_delta) <= 3.0 * rep.delta_std_error);
    CHECK(rep.delta < 0.0);

    // Prices are quoted per unit of reference spot, so currency greeks from
    // the closed form scale by 1/spot (vega) and by spot (gamma).
    double ref_vega = oracle::bs_vega(bs) / 100.0;
    INFO("vega " << rep.vega << " bs " << ref_vega << " se " << rep.vega_std_error);
    CHECK(std::abs(rep.vega - ref_vega) <= 3.0 * rep.vega_std_error);

    double ref_gamma = 100.0 * oracle::npdf(oracle::d1(bs)) / (100.0 * 0.2);
    INFO("gamma " << rep.gamma << " bs " << ref_gamma);
    CHECK(rep.gamma > 0.0);
    CHECK(std::abs(rep.gamma - ref_gamma) <= 0.35 * ref_gamma);
    CHECK(std::isfinite(rep.vanna));
}

TEST_CASE("greeks are deterministic under a fixed seed") {
    MarketSnapshot mkt = flat_market(0.25, 0.015, -0.01);
    McConfig cfg = quick_config(31, 4000);
    GreeksReport a = greeks(atm_put(), lv_model(), mkt, cfg);
    GreeksReport b = greeks(atm_put(), lv_model(), mkt, cfg);
    CHECK(a.delta == b.delta);
    CHECK(a.gamma == b.gamma);
    CHECK(a.vega == b.vega);
    CHECK(a.vanna == b.vanna);
}

TEST_CASE("softening a sold digital shrinks its delta") {
    // Short-dated at-the-money digital: the cliff sits where the terminal
    // density peaks, so the slope cap must flatten the sensitivity.
    MarketSnapshot mkt = flat_market(0.2, 0.0, 0.0);
    McConfig cfg = quick_config(512, 40000);

    DigitalOption dig;
    dig.reference_spot = 100.0;
    dig.strike = 1.0;
    dig.expiry = 0.1;
    dig.leverage = 0.5;

    PayoffProfile cliff;
    cliff.x = {0.0, 1.0, 1.0, 3.0};
    cliff.y = {0.5, 0.5, 0.0, 0.0};
    SofteningPolicy pol;
    pol.max_delta = 5.0;
    PayoffProfile ramp = soften(cliff, pol);

    ProfileProduct soft;
    soft.reference_spot = 100.0;
    soft.expiry = 0.1;
    soft.profile = ramp;

    GreeksReport raw = greeks(Product{dig}, lv_model(), mkt, cfg);
    GreeksReport eased = greeks(Product{soft}, lv_model(), mkt, cfg);
    INFO("raw delta " << raw.delta << " softened delta " << eased.delta);
    CHECK(raw.delta < 0.0);
    CHECK(eased.delta < 0.0);
    CHECK(std::abs(eased.delta) < std::abs(raw.delta));
}

TEST_CASE("correlation sensitivity is hybrid-only") {
    MarketSnapshot mkt = flat_market(0.2, 0.01, 0.0);
    McConfig cfg = quick_config(64, 2000);

    SECTION("explicit request under local vol is refused") {
        GreeksBumps b;
        b.correlation = true;
        REQUIRE_THROWS_AS(greeks(atm_put(), lv_model(), mkt, cfg, b), UnsupportedError);
    }
    SECTION("default under local vol simply omits it") {
        GreeksReport rep = greeks(atm_put(), lv_model(), mkt, cfg);
        CHECK_FALSE(rep.correlation_sensitivity.has_value());
    }
    SECTION("hybrid model reports it by default") {
        HullWhiteParams hw;
        hw.mean_reversion = 0.05;
        hw.rate_vol = 0.008;
        LeverageSurface ls = calibrate_leverage(mkt, hw, 0.3, cfg);
        ModelSpec hybrid = hwlv_model(hw, 0.3);
        hybrid.leverage = ls;
        VanillaOption put;
        put.reference_spot = 100.0;
        put.strike = 1.0;
        put.expiry = 3.0;
        GreeksReport rep = greeks(Product{put}, hybrid, mkt, cfg);
        REQUIRE(rep.correlation_sensitivity.has_value());
        CHECK(std::isfinite(*rep.correlation_sensitivity));
        REQUIRE(rep.correlation_std_error.has_value());
        CHECK(*rep.correlation_std_error > 0.0);
        CHECK(rep.bumps.correlation_abs == 0.05);
    }
    SECTION("explicit opt-out under the hybrid skips it") {
        HullWhiteParams hw;
        LeverageSurface ls = calibrate_leverage(mkt, hw, 0.0, cfg);
        ModelSpec hybrid = hwlv_model(hw, 0.0);
        hybrid.leverage = ls;
        GreeksBumps b;
        b.correlation = false;
        GreeksReport rep = greeks(atm_put(), hybrid, mkt, cfg, b);
        CHECK_FALSE(rep.correlation_sensitivity.has_value());
    }
}

#include <catch2/catch_amalgamated.hpp>

#include <mrisk/market_data.hpp>

#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <string>

using namespace mrisk;

namespace {

ImpliedVolSurface flat_surface(double vol) {
    ImpliedVolSurface s;
    s.expiries = {0.5, 1.0, 2.0, 3.0, 5.0};
    s.moneyness_pillars = {0.5, 0.8, 1.0, 1.2, 1.5};
    s.vols.assign(s.expiries.size(),
                  std::vector<double>(s.moneyness_pillars.size(), vol));
    return s;
}

DiscountCurve flat_curve(double z) { return DiscountCurve{{30.0}, {z}}; }

} // namespace

TEST_CASE("discount curve interpolates linearly in zero-rate-times-time") {
    DiscountCurve c{{1.0, 3.0}, {0.01, 0.03}};
    validate(c);

    CHECK(discount_factor(c, 0.0) == 1.0);
    // Pillars reproduce exactly.
    CHECK(discount_factor(c, 1.0) == Catch::Approx(std::exp(-0.01)).epsilon(0).margin(1e-16));
    CHECK(discount_factor(c, 3.0) == Catch::Approx(std::exp(-0.09)).epsilon(0).margin(1e-16));
    // Hand-computed midpoint: w(2) = 0.01 + (0.09 - 0.01) * (2-1)/(3-1) = 0.05,
    // DF = exp(-0.05) = 0.951229424500714.
    CHECK(discount_factor(c, 2.0) == Catch::Approx(0.951229424500714).epsilon(1e-14));
    // Short end: linear through the origin, z flat at first pillar rate.
    CHECK(discount_factor(c, 0.5) == Catch::Approx(std::exp(-0.005)).epsilon(1e-14));
    // Long end: flat zero rate, w(5) = 0.03 * 5.
    CHECK(discount_factor(c, 5.0) == Catch::Approx(std::exp(-0.15)).epsilon(1e-14));

    CHECK_THROWS_AS(discount_factor(c, -0.1), std::domain_error);
}

TEST_CASE("instantaneous forward is the piecewise-constant slope of w") {
    DiscountCurve c{{1.0, 3.0}, {0.01, 0.03}};
    CHECK(instantaneous_forward(c, 0.2) == Catch::Approx(0.01).epsilon(1e-14));
    CHECK(instantaneous_forward(c, 2.0) == Catch::Approx(0.04).epsilon(1e-14));
    CHECK(instantaneous_forward(c, 1.0) == Catch::Approx(0.04).epsilon(1e-14)); // right-continuous
    CHECK(instantaneous_forward(c, 3.0) == Catch::Approx(0.03).epsilon(1e-14));
    CHECK(instantaneous_forward(c, 10.0) == Catch::Approx(0.03).epsilon(1e-14));

    // Consistency: DF(t) = exp(-integral of instantaneous forward).
    double acc = 0.0;
    const int n = 4000;
    double horizon = 4.0;
    for (int i = 0; i < n; ++i) acc += instantaneous_forward(c, (i + 0.5) * horizon / n) * horizon / n;
    CHECK(std::exp(-acc) == Catch::Approx(discount_factor(c, horizon)).epsilon(1e-10));
}

TEST_CASE("discount curve validation rejects bad input") {
    CHECK_THROWS_AS(validate(DiscountCurve{{}, {}}), ValidationError);
    CHECK_THROWS_AS(validate(DiscountCurve{{1.0, 1.0}, {0.01, 0.01}}), ValidationError);
    CHECK_THROWS_AS(validate(DiscountCurve{{0.0, 1.0}, {0.01, 0.01}}), ValidationError);
    CHECK_THROWS_AS(validate(DiscountCurve{{1.0}, {0.01, 0.02}}), ValidationError);
}

TEST_CASE("forward price composes funding and carry") {
    EquityForwardInputs eq{100.0, flat_curve(-0.03)};
    DiscountCurve disc = flat_curve(0.02);
    CHECK(forward_price(eq, disc, 0.0) == 100.0);
    // F(2) = 100 * exp(0.04 - 0.06) = 98.01986733067553.
    CHECK(forward_price(eq, disc, 2.0) == Catch::Approx(98.01986733067553).epsilon(1e-14));
    // Dividend-heavy carry lowers the forward below spot growth at funding.
    CHECK(forward_price(eq, disc, 2.0) < 100.0 * std::exp(0.02 * 2.0));
}

TEST_CASE("surface node values reproduce bit-exactly") {
    ImpliedVolSurface s;
    s.expiries = {1.0, 2.0};
    s.moneyness_pillars = {0.5, 1.0, 1.5};
    s.vols = {{0.2, 0.25, 0.3}, {0.22, 0.26, 0.32}};
    validate(s);
    for (size_t i = 0; i < s.expiries.size(); ++i)
        for (size_t j = 0; j < s.moneyness_pillars.size(); ++j)
            CHECK(implied_vol(s, s.expiries[i], s.moneyness_pillars[j]) == s.vols[i][j]);
}

TEST_CASE("total variance interpolates bilinearly and extrapolates flat in vol") {
    ImpliedVolSurface s;
    s.expiries = {1.0, 2.0};
    s.moneyness_pillars = {0.5, 1.0, 1.5};
    s.vols = {{0.2, 0.25, 0.3}, {0.22, 0.26, 0.32}};
    validate(s);

    // Hand-computed interior point at t = 1.5, k = 0.75:
    //   w(1, 0.75) = (0.04 + 0.0625)/2      = 0.05125
    //   w(2, 0.75) = (0.0968 + 0.1352)/2    = 0.1160
    //   w          = (0.05125 + 0.1160)/2   = 0.083625
    CHECK(total_variance(s, 1.5, 0.75) == Catch::Approx(0.083625).epsilon(1e-14));
    CHECK(implied_vol(s, 1.5, 0.75) ==
          Catch::Approx(std::sqrt(0.083625 / 1.5)).epsilon(1e-14));

    // Below the first expiry the vol is flat: sqrt(w(t)/t) = v(e0, k).
    CHECK(implied_vol(s, 0.25, 1.0) == Catch::Approx(0.25).epsilon(1e-14));
    // Beyond the last expiry likewise.
    CHECK(implied_vol(s, 4.0, 1.5) == Catch::Approx(0.32).epsilon(1e-14));
    // Outside the moneyness range the smile is flat.
    CHECK(implied_vol(s, 1.0, 0.3) == Catch::Approx(0.2).epsilon(1e-14));
    CHECK(implied_vol(s, 1.0, 2.5) == Catch::Approx(0.3).epsilon(1e-14));

    CHECK_THROWS_AS(implied_vol(s, 0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(implied_vol(s, 1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(implied_vol(s, -1.0, 1.0), std::domain_error);
}

TEST_CASE("surface validation names each violated invariant") {
    ImpliedVolSurface s = flat_surface(0.2);

    SECTION("calendar arbitrage") {
        s.vols[1][2] = 0.10; // w drops between first and second expiry
        CHECK_THROWS_AS(validate(s), ValidationError);
    }
    SECTION("moneyness span too narrow") {
        s.moneyness_pillars = {0.6, 1.0, 1.5};
        s.vols.assign(s.expiries.size(), std::vector<double>(3, 0.2));
        CHECK_THROWS_AS(validate(s), ValidationError);
    }
    SECTION("vol out of range") {
        s.vols[0][0] = 0.0;
        CHECK_THROWS_AS(validate(s), ValidationError);
        s.vols[0][0] = 5.5;
        CHECK_THROWS_AS(validate(s), ValidationError);
    }
    SECTION("ragged rows") {
        s.vols[2].pop_back();
        CHECK_THROWS_AS(validate(s), ValidationError);
    }
}

TEST_CASE("local vol on a flat surface recovers the flat vol") {
    ImpliedVolSurface s = flat_surface(0.2);
    EquityForwardInputs eq{100.0, flat_curve(0.0)};
    DiscountCurve disc = flat_curve(0.0);
    for (double t : {0.1, 0.7, 1.0, 2.5, 4.9})
        for (double level : {60.0, 90.0, 100.0, 130.0, 180.0})
            CHECK(dupire_local_vol(s, eq, disc, t, level) == Catch::Approx(0.2).margin(1e-6));
}

TEST_CASE("local vol with linear-in-time total variance equals sqrt of slope") {
    // ATM-flat smile with w(1) = 0.04, w(2) = 0.10: dw/dT = 0.06 in between,
    // so local vol = sqrt(0.06) = 0.244948974278318 there.
    ImpliedVolSurface s;
    s.expiries = {1.0, 2.0};
    s.moneyness_pillars = {0.5, 1.0, 1.5};
    s.vols = {{0.2, 0.2, 0.2},
              {std::sqrt(0.05), std::sqrt(0.05), std::sqrt(0.05)}};
    validate(s);
    EquityForwardInputs eq{100.0, flat_curve(0.0)};
    DiscountCurve disc = flat_curve(0.0);
    for (double level : {80.0, 100.0, 120.0})
        CHECK(dupire_local_vol(s, eq, disc, 1.5, level) ==
              Catch::Approx(0.244948974278318).epsilon(1e-10));
    // Below the first expiry the surface is flat 20%.
    CHECK(dupire_local_vol(s, eq, disc, 0.5, 100.0) == Catch::Approx(0.2).margin(1e-6));
}

namespace {

// Independent reference: same Dupire identity, separately coded with halved
// finite-difference steps, driving the library surface only through its
// public total_variance accessor.
double reference_local_vol(const ImpliedVolSurface& s, const EquityForwardInputs& eq,
                           const DiscountCurve& disc, double t, double level) {
    double fwd = forward_price(eq, disc, t);
    double y = std::log(level / fwd);
    double dt = 0.5 * std::min(0.05, 0.5 * 1.0); // half the library's step for 1y cells
    double dy = 0.005;
    auto w = [&](double tt, double yy) { return total_variance(s, tt, std::exp(yy)); };
    double w0 = w(t, y);
    double wy = (w(t, y + dy) - w(t, y - dy)) / (2 * dy);
    double wyy = (w(t, y + dy) - 2 * w0 + w(t, y - dy)) / (dy * dy);
    double wt = (w(t + dt, y) - w(t - dt, y)) / (2 * dt);
    double denom = 1 - (y / w0) * wy + 0.25 * (-0.25 - 1 / w0 + y * y / (w0 * w0)) * wy * wy +
                   0.5 * wyy;
    return std::sqrt(wt / denom);
}

} // namespace

TEST_CASE("local vol on a skewed surface matches a half-step reference") {
    ImpliedVolSurface s;
    s.expiries = {0.5, 1.0, 2.0, 3.0, 5.0};
    s.moneyness_pillars = {0.5, 0.8, 1.0, 1.2, 1.5, 2.0};
    s.vols.resize(s.expiries.size());
    for (size_t i = 0; i < s.expiries.size(); ++i) {
        s.vols[i].resize(s.moneyness_pillars.size());
        for (size_t j = 0; j < s.moneyness_pillars.size(); ++j) {
            double k = s.moneyness_pillars[j];
            s.vols[i][j] = 0.25 - 0.05 * (k - 1.0) + 0.02 * (k - 1.0) * (k - 1.0);
        }
    }
    validate(s);
    EquityForwardInputs eq{100.0, flat_curve(-0.02)};
    DiscountCurve disc = flat_curve(0.01);
    // Interior points away from expiry pillars (where dw/dT has kinks).
    for (double t : {1.5, 2.5})
        for (double level : {85.0, 100.0, 115.0}) {
            double lib = dupire_local_vol(s, eq, disc, t, level);
            double ref = reference_local_vol(s, eq, disc, t, level);
            CHECK(lib == Catch::Approx(ref).epsilon(2e-3));
        }
}

TEST_CASE("local vol pathologies are clamped, not propagated") {
    ImpliedVolSurface s = flat_surface(0.2);
    EquityForwardInputs eq{100.0, flat_curve(0.0)};
    DiscountCurve disc = flat_curve(0.0);
    // Extreme strikes far outside the smile: flat extrapolation keeps this
    // benign, result must stay within the [sqrt(1e-6), 5] clamp band.
    for (double level : {1e-3, 1e6}) {
        double v = dupire_local_vol(s, eq, disc, 1.0, level);
        CHECK(v >= 1e-3);
        CHECK(v <= 5.0);
    }
    CHECK_THROWS_AS(dupire_local_vol(s, eq, disc, 0.0, 100.0), std::domain_error);
    CHECK_THROWS_AS(dupire_local_vol(s, eq, disc, 1.0, 0.0), std::domain_error);
}

TEST_CASE("snapshot round-trips through file bit-exactly") {
    MarketSnapshot m;
    m.as_of = parse_date("2026-08-14");
    m.discount = DiscountCurve{{0.25, 1.0, 3.0, 7.0}, {0.0021, 0.0043, 0.0112, 0.0187}};
    m.equity = EquityForwardInputs{2876.25, DiscountCurve{{1.0, 5.0}, {-0.0301, -0.0276}}};
    m.surface = flat_surface(0.234);
    m.surface.vols[2][1] = 0.2411;
    m.surface.vols[4][4] = 0.22934;
    m.equity_rate_correlation = 0.3;
    validate(m);

    std::string path = "roundtrip_snapshot_tmp.json";
    write_snapshot(m, path);
    MarketSnapshot back = load_snapshot(path);
    std::remove(path.c_str());

    CHECK(to_iso(back.as_of) == to_iso(m.as_of));
    CHECK(back.discount.pillar_times == m.discount.pillar_times);
    CHECK(back.discount.zero_rates == m.discount.zero_rates);
    CHECK(back.equity.spot == m.equity.spot);
    CHECK(back.equity.carry_curve.zero_rates == m.equity.carry_curve.zero_rates);
    CHECK(back.surface.vols == m.surface.vols);
    CHECK(back.equity_rate_correlation == m.equity_rate_correlation);
}

TEST_CASE("snapshot loading distinguishes failure modes") {
    SECTION("missing file") {
        CHECK_THROWS_AS(load_snapshot("no_such_file_anywhere.json"), ConfigError);
    }
    SECTION("parse error") {
        std::string path = "bad_snapshot_tmp.json";
        {
            std::ofstream out(path);
            out << "{ not valid json";
        }
        CHECK_THROWS_AS(load_snapshot(path), ConfigError);
        std::remove(path.c_str());
    }
    SECTION("missing field") {
        std::string path = "incomplete_snapshot_tmp.json";
        {
            std::ofstream out(path);
            out << R"({"as_of": "2026-01-01"})";
        }
        CHECK_THROWS_AS(load_snapshot(path), ConfigError);
        std::remove(path.c_str());
    }
    SECTION("validation failure") {
        MarketSnapshot m;
        m.as_of = parse_date("2026-08-14");
        m.discount = DiscountCurve{{1.0}, {0.01}};
        m.equity = EquityForwardInputs{100.0, DiscountCurve{{1.0}, {0.0}}};
        m.surface = flat_surface(0.2);
        m.equity_rate_correlation = 1.5; // out of range
        std::string path = "invalid_snapshot_tmp.json";
        {
            std::ofstream out(path);
            out << snapshot_to_json(m).dump(2);
        }
        CHECK_THROWS_AS(load_snapshot(path), ValidationError);
        std::remove(path.c_str());
    }
}

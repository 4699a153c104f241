#include <catch2/catch_amalgamated.hpp>

#include <mrisk/engine.hpp>

#include "market_fixtures.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace mrisk;
using fixtures::flat_market;
using fixtures::skewed_market;

namespace {

McConfig quick_config(std::uint64_t seed = 20260818, long long paths = 20000) {
    McConfig c;
    c.n_paths = paths;
    c.seed = seed;
    return c;
}

VanillaOption make_put(double strike, double expiry) {
    VanillaOption p;
    p.reference_spot = 100.0;
    p.strike = strike;
    p.expiry = expiry;
    return p;
}

} // namespace

TEST_CASE("hull-white parameter validation") {
    HullWhiteParams p;
    REQUIRE_NOTHROW(validate(p));
    p.mean_reversion = 0.0;
    REQUIRE_THROWS_AS(validate(p), ValidationError);
    p.mean_reversion = 0.05;
    p.rate_vol = -0.001;
    REQUIRE_THROWS_AS(validate(p), ValidationError);
}

TEST_CASE("discount bond degenerate arguments") {
    MarketSnapshot mkt = skewed_market();
    HullWhiteParams hw;
    CHECK(hw_discount_bond(hw, mkt.discount, 2.0, 2.0, 0.05) == 1.0);
    CHECK(hw_discount_bond(hw, mkt.discount, 0.0, 0.0, 0.01) == 1.0);
    CHECK_THROWS_AS(hw_discount_bond(hw, mkt.discount, 3.0, 2.0, 0.01), std::domain_error);
    CHECK_THROWS_AS(hw_discount_bond(hw, mkt.discount, -1.0, 2.0, 0.01), std::domain_error);
}

TEST_CASE("discount bond fits the curve at inception") {
    MarketSnapshot mkt = skewed_market();
    HullWhiteParams hw;
    hw.mean_reversion = 0.05;
    hw.rate_vol = 0.008;
    double r0 = instantaneous_forward(mkt.discount, 0.0);
    for (double T : {0.5, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0}) {
        INFO("T " << T);
        double fitted = hw_discount_bond(hw, mkt.discount, 0.0, T, r0);
        CHECK(std::abs(fitted - discount_factor(mkt.discount, T)) <= 1e-10);
    }
}

TEST_CASE("discount bond matches the affine closed form") {
    MarketSnapshot mkt = skewed_market();
    HullWhiteParams hw;
    hw.mean_reversion = 0.07;
    hw.rate_vol = 0.012;
    struct Probe {
        double t, T, r;
    };
    for (Probe p : {Probe{0.5, 2.0, 0.015}, Probe{1.5, 4.0, -0.005}, Probe{3.0, 9.5, 0.03}}) {
        double engine = hw_discount_bond(hw, mkt.discount, p.t, p.T, p.r);
        double ref = oracle::hw_bond(hw.mean_reversion, hw.rate_vol, p.t, p.T,
                                     discount_factor(mkt.discount, p.t),
                                     discount_factor(mkt.discount, p.T),
                                     instantaneous_forward(mkt.discount, p.t), p.r);
        INFO("t " << p.t << " T " << p.T << " r " << p.r);
        CHECK(engine == Catch::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("short-rate factor has the exact OU distribution") {
    MarketSnapshot mkt = flat_market(0.2, 0.015, 0.0);
    HullWhiteParams hw;
    hw.mean_reversion = 0.1;
    hw.rate_vol = 0.01;
    McConfig cfg = quick_config(402, 40000);
    LeverageSurface ls = calibrate_leverage(mkt, hw, 0.0, cfg);
    ModelSpec model = hwlv_model(hw, 0.0);
    model.leverage = ls;

    McConfig sim_cfg = quick_config(402, 16000);
    sim_cfg.antithetic = false;
    double T = 5.0;
    PathSet ps = simulate_paths(model, mkt, T, sim_cfg);
    size_t last = ps.times.size() - 1;
    REQUIRE(ps.short_rates.size() == 16000);

    double f_T = instantaneous_forward(mkt.discount, T);
    double m_T = hw_fitted_spread(hw, T);
    double mean = 0.0, var = 0.0;
    for (const auto& row : ps.short_rates) mean += row[last] - f_T - m_T;
    mean /= 16000.0;
    for (const auto& row : ps.short_rates) {
        double d = row[last] - f_T - m_T - mean;
        var += d * d;
    }
    var /= 15999.0;

    double var_ref = hw.rate_vol * hw.rate_vol * (1.0 - std::exp(-2.0 * hw.mean_reversion * T)) /
                     (2.0 * hw.mean_reversion);
    double se_mean = std::sqrt(var_ref / 16000.0);
    INFO("mean " << mean << " var " << var << " ref " << var_ref);
    CHECK(std::abs(mean) <= 4.0 * se_mean);
    CHECK(var == Catch::Approx(var_ref).epsilon(0.05));

    SECTION("antithetic partner mirrors the rate factor") {
        McConfig anti_cfg = quick_config(402, 512);
        PathSet pa = simulate_paths(model, mkt, T, anti_cfg);
        size_t node = pa.times.size() - 1;
        for (size_t pr = 0; pr < 256; ++pr) {
            double ra = pa.short_rates[2 * pr][node];
            double rb = pa.short_rates[2 * pr + 1][node];
            REQUIRE(ra + rb == Catch::Approx(2.0 * (f_T + m_T)).margin(1e-12));
        }
    }
}

TEST_CASE("equity and rate shocks carry the requested correlation") {
    MarketSnapshot mkt = flat_market(0.2, 0.01, 0.0);
    HullWhiteParams hw;
    hw.mean_reversion = 0.05;
    hw.rate_vol = 0.01;
    double rho = 0.6;
    McConfig cfg = quick_config(88, 20000);
    LeverageSurface ls = calibrate_leverage(mkt, hw, rho, cfg);
    ModelSpec model = hwlv_model(hw, rho);
    model.leverage = ls;

    McConfig sim_cfg = quick_config(88, 20000);
    sim_cfg.antithetic = false;
    PathSet ps = simulate_paths(model, mkt, 1.0, sim_cfg);

    // Correlate one-step log-spot and rate-factor increments over paths.
    size_t node = 24;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double n = static_cast<double>(ps.spots.size());
    for (size_t p = 0; p < ps.spots.size(); ++p) {
        double dx = std::log(ps.spots[p][node + 1] / ps.spots[p][node]);
        double dy = ps.short_rates[p][node + 1] -
                    std::exp(-hw.mean_reversion * (ps.times[node + 1] - ps.times[node])) *
                        ps.short_rates[p][node];
        sx += dx;
        sy += dy;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    double cov = sxy / n - sx / n * sy / n;
    double sd = std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
    double corr = cov / sd;
    INFO("sample corr " << corr);
    CHECK(corr == Catch::Approx(rho).margin(4.0 / std::sqrt(n)));
}

TEST_CASE("zero rate vol reduces the hybrid to local vol exactly") {
    MarketSnapshot mkt = skewed_market();
    HullWhiteParams hw;
    hw.rate_vol = 0.0;
    McConfig cfg = quick_config(314, 4000);

    LeverageSurface ls = calibrate_leverage(mkt, hw, 0.3, cfg);
    CHECK(ls.sweeps_used == 1);
    CHECK(ls.converged);
    CHECK(ls.warnings.empty());

    ModelSpec hybrid = hwlv_model(hw, 0.3);
    hybrid.leverage = ls;

    SECTION("paths are bit-identical") {
        PathSet a = simulate_paths(lv_model(), mkt, 3.0, cfg);
        PathSet b = simulate_paths(hybrid, mkt, 3.0, cfg);
        for (size_t p = 0; p < a.spots.size(); ++p)
            for (size_t i = 0; i < a.times.size(); i += 16) {
                REQUIRE(a.spots[p][i] == b.spots[p][i]);
                REQUIRE(a.money_market[p][i] == b.money_market[p][i]);
            }
    }
    SECTION("prices coincide within 1e-12") {
        Autocallable note;
        note.reference_spot = 100.0;
        note.observation_dates = {1.0, 2.0, 3.0};
        note.floating_leg = true;
        note.floating_spread = 0.002;
        PriceResult lv = price(Product{note}, lv_model(), mkt, cfg);
        PriceResult hy = price(Product{note}, hybrid, mkt, cfg);
        CHECK(std::abs(lv.value - hy.value) <= 1e-12);
        CHECK(std::abs(lv.std_error - hy.std_error) <= 1e-12);
    }
}

TEST_CASE("hybrid pricing requires a leverage surface") {
    MarketSnapshot mkt = flat_market(0.2, 0.01, 0.0);
    HullWhiteParams hw;
    ModelSpec bare = hwlv_model(hw, 0.3);
    McConfig cfg = quick_config(1, 512);
    REQUIRE_THROWS_AS(price(Product{make_put(1.0, 1.0)}, bare, mkt, cfg), ConfigError);
}

TEST_CASE("calibration validates its inputs") {
    MarketSnapshot mkt = flat_market(0.2, 0.01, 0.0);
    HullWhiteParams hw;
    McConfig cfg = quick_config(1, 2000);
    REQUIRE_THROWS_AS(calibrate_leverage(mkt, hw, 1.5, cfg), ValidationError);
    hw.mean_reversion = -0.1;
    REQUIRE_THROWS_AS(calibrate_leverage(mkt, hw, 0.3, cfg), ValidationError);
}

TEST_CASE("calibrated leverage stays within bounds and converges") {
    MarketSnapshot mkt = skewed_market();
    HullWhiteParams hw;
    hw.mean_reversion = 0.05;
    hw.rate_vol = 0.008;
    McConfig cfg = quick_config(2718, 40000);
    LeverageSurface ls = calibrate_leverage(mkt, hw, 0.3, cfg);

    CHECK(ls.converged);
    CHECK(ls.sweeps_used <= 5);
    CHECK(ls.warnings.empty());
    REQUIRE(ls.times.size() == 241);
    REQUIRE(ls.moneyness.size() == 41);
    for (const auto& row : ls.values)
        for (double v : row) {
            REQUIRE(v >= 0.01);
            REQUIRE(v <= 10.0);
        }

    // The correction is a small perturbation at these rate vols: the bulk of
    // the surface should sit near the plain local vol.
    double atm_mid = ls.values[120][20];
    CHECK(atm_mid > 0.1);
    CHECK(atm_mid < 0.5);
}

TEST_CASE("hybrid matches local vol on vanillas after calibration") {
    MarketSnapshot mkt = skewed_market();
    HullWhiteParams hw;
    hw.mean_reversion = 0.05;
    hw.rate_vol = 0.008;
    McConfig cfg = quick_config(1618, 40000);
    LeverageSurface ls = calibrate_leverage(mkt, hw, 0.3, cfg);
    ModelSpec hybrid = hwlv_model(hw, 0.3);
    hybrid.leverage = ls;

    struct Quote {
        double k, t;
    };
    for (Quote q : {Quote{1.0, 3.0}, Quote{0.8, 1.0}}) {
        double strike = q.k * forward_price(mkt.equity, mkt.discount, q.t) / 100.0;
        Product put{make_put(strike, q.t)};
        PriceResult lv = price(put, lv_model(), mkt, cfg);
        PriceResult hy = price(put, hybrid, mkt, cfg);
        double combined = std::sqrt(lv.std_error * lv.std_error + hy.std_error * hy.std_error);
        INFO("k " << q.k << " t " << q.t << ": lv " << lv.value << " hwlv " << hy.value
                  << " combined se " << combined);
        CHECK(std::abs(lv.value - hy.value) <= std::max(3.0 * combined, 0.001));
    }
}

TEST_CASE("deflated bank account recovers curve discounting") {
    MarketSnapshot mkt = skewed_market();
    HullWhiteParams hw;
    hw.mean_reversion = 0.05;
    hw.rate_vol = 0.008;
    McConfig cfg = quick_config(9000, 20000);
    LeverageSurface ls = calibrate_leverage(mkt, hw, 0.0, cfg);
    ModelSpec model = hwlv_model(hw, 0.0);
    model.leverage = ls;

    McConfig sim_cfg = quick_config(9000, 16000);
    PathSet ps = simulate_paths(model, mkt, 5.0, sim_cfg);
    size_t last = ps.times.size() - 1;
    double mean = 0.0, m2 = 0.0;
    for (const auto& row : ps.money_market) {
        double d = 1.0 / row[last];
        mean += d;
        m2 += d * d;
    }
    double n = static_cast<double>(ps.money_market.size());
    mean /= n;
    double se = std::sqrt((m2 / n - mean * mean) / n);
    double ref = discount_factor(mkt.discount, 5.0);
    INFO("mc " << mean << " curve " << ref << " se " << se);
    CHECK(std::abs(mean - ref) <= std::max(3.0 * se, 5e-5));
}

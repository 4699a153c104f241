#pragma once

#include <mrisk/engine.hpp>

#include <algorithm>
#include <cmath>
#include <optional>

namespace mrisk {

struct GreeksBumps {
    double spot_rel = 0.01;        // relative spot bump
    double vol_abs = 0.01;         // parallel additive implied vol bump
    double correlation_abs = 0.05; // equity-rate correlation bump
    // nullopt: report the correlation sensitivity whenever the model carries a
    // rate factor; true: require it (error under local vol); false: skip it.
    std::optional<bool> correlation;
};

inline void validate(const GreeksBumps& b) {
    if (!(b.spot_rel > 0.0))
        throw ValidationError("greeks: spot bump must be > 0");
    if (!(b.vol_abs > 0.0))
        throw ValidationError("greeks: vol bump must be > 0");
    if (!(b.correlation_abs > 0.0))
        throw ValidationError("greeks: correlation bump must be > 0");
}

// Bump-and-revalue sensitivities, all in spot-return units (spot divided by
// the product's reference spot): delta is then directly comparable with the
// textbook Black-Scholes delta when the market spot equals the reference.
struct GreeksReport {
    double delta = 0.0;
    double gamma = 0.0;
    double vega = 0.0;  // per unit of implied vol (1.00 = 100 vol points)
    double vanna = 0.0; // d delta / d vol
    std::optional<double> correlation_sensitivity;
    // Standard errors combine the two finite-difference legs as if they were
    // independent; with common random numbers the true error is much smaller,
    // so these are conservative.
    double delta_std_error = 0.0;
    double vega_std_error = 0.0;
    std::optional<double> correlation_std_error;
    GreeksBumps bumps; // sizes actually applied
};

namespace detail {

inline MarketSnapshot bump_spot(const MarketSnapshot& mkt, double rel) {
    MarketSnapshot out = mkt;
    out.equity.spot *= (1.0 + rel);
    return out;
}

inline MarketSnapshot bump_vols(const MarketSnapshot& mkt, double add) {
    MarketSnapshot out = mkt;
    for (auto& row : out.surface.vols)
        for (double& v : row) v = std::max(v + add, 1e-6);
    return out;
}

inline double leg_se(const PriceResult& a, const PriceResult& b, double denom) {
    return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error) / denom;
}

} // namespace detail

inline GreeksReport greeks(const Product& product, const ModelSpec& model,
                           const MarketSnapshot& mkt, const McConfig& cfg,
                           const GreeksBumps& bumps = {}) {
    validate(bumps);
    const bool hybrid = model.kind == ModelKind::HybridHwLv;
    const bool want_corr = bumps.correlation ? *bumps.correlation : hybrid;
    if (want_corr && !hybrid)
        throw UnsupportedError(
            "correlation sensitivity requires a model with a stochastic rate factor");

    const double s0r = mkt.equity.spot / product_reference_spot(product);
    const double hs = bumps.spot_rel * s0r; // spot step in return units
    const double hv = bumps.vol_abs;

    MarketSnapshot m_su = detail::bump_spot(mkt, bumps.spot_rel);
    MarketSnapshot m_sd = detail::bump_spot(mkt, -bumps.spot_rel);
    MarketSnapshot m_vu = detail::bump_vols(mkt, hv);
    MarketSnapshot m_vd = detail::bump_vols(mkt, -hv);

    // Local vol and leverage live in forward-moneyness space, so a spot bump
    // reuses the calibrated model unchanged; a vol bump changes the surface
    // and the hybrid leverage must be refit against it (same seed throughout).
    ModelSpec model_vu = model;
    ModelSpec model_vd = model;
    if (hybrid) {
        model_vu.leverage = calibrate_leverage(m_vu, model.hw, model.equity_rate_correlation, cfg);
        model_vd.leverage = calibrate_leverage(m_vd, model.hw, model.equity_rate_correlation, cfg);
    }

    PriceResult v0 = price(product, model, mkt, cfg);
    PriceResult v_su = price(product, model, m_su, cfg);
    PriceResult v_sd = price(product, model, m_sd, cfg);
    PriceResult v_vu = price(product, model_vu, m_vu, cfg);
    PriceResult v_vd = price(product, model_vd, m_vd, cfg);
    PriceResult v_uu = price(product, model_vu, detail::bump_spot(m_vu, bumps.spot_rel), cfg);
    PriceResult v_ud = price(product, model_vd, detail::bump_spot(m_vd, bumps.spot_rel), cfg);
    PriceResult v_du = price(product, model_vu, detail::bump_spot(m_vu, -bumps.spot_rel), cfg);
    PriceResult v_dd = price(product, model_vd, detail::bump_spot(m_vd, -bumps.spot_rel), cfg);

    GreeksReport rep;
    rep.bumps = bumps;
    rep.delta = (v_su.value - v_sd.value) / (2.0 * hs);
    rep.gamma = (v_su.value - 2.0 * v0.value + v_sd.value) / (hs * hs);
    rep.vega = (v_vu.value - v_vd.value) / (2.0 * hv);
    rep.vanna = (v_uu.value - v_ud.value - v_du.value + v_dd.value) / (4.0 * hs * hv);
    rep.delta_std_error = detail::leg_se(v_su, v_sd, 2.0 * hs);
    rep.vega_std_error = detail::leg_se(v_vu, v_vd, 2.0 * hv);

    if (want_corr) {
        double rho = model.equity_rate_correlation;
        double hi = std::min(1.0, rho + bumps.correlation_abs);
        double lo = std::max(-1.0, rho - bumps.correlation_abs);
        ModelSpec up = model;
        ModelSpec dn = model;
        up.equity_rate_correlation = hi;
        dn.equity_rate_correlation = lo;
        up.leverage = calibrate_leverage(mkt, model.hw, hi, cfg);
        dn.leverage = calibrate_leverage(mkt, model.hw, lo, cfg);
        PriceResult pu = price(product, up, mkt, cfg);
        PriceResult pd = price(product, dn, mkt, cfg);
        rep.correlation_sensitivity = (pu.value - pd.value) / (hi - lo);
        rep.correlation_std_error = detail::leg_se(pu, pd, hi - lo);
    }
    return rep;
}

} // namespace mrisk

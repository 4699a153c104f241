#pragma once

// Market-data containers and interpolation: discount curve, equity forward
// inputs, implied-vol surface, Dupire local volatility, snapshot file I/O.
//
// Conventions, fixed here once:
//  - Zero rates are continuously compounded decimals. The curve interpolates
//    linearly in z(t)*t (log-linear discount factors) and extrapolates flat
//    in z beyond the last pillar.
//  - The carry curve holds repo-minus-dividend zero rates c(t). Forwards
//    grow at the funding rate plus carry: F(t) = spot * exp(w_r(t) + w_c(t))
//    with w the zero-rate-times-time integral, so a net dividend yield
//    (c < 0) lowers forwards.
//  - The vol surface is parameterised by moneyness = strike / forward so
//    one surface serves every tenor. Interpolation is bilinear in
//    (total variance, moneyness); extrapolation is flat in vol on both axes.
//
// All types are immutable after construction/validation and safe to share
// across threads.

#include <mrisk/dates.hpp>
#include <mrisk/errors.hpp>
#include <mrisk/math.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace mrisk {

// ---------------------------------------------------------------------------
// DiscountCurve
// ---------------------------------------------------------------------------

struct DiscountCurve {
    std::vector<double> pillar_times; // years, strictly increasing, > 0
    std::vector<double> zero_rates;   // continuously compounded decimals
};

inline void validate(const DiscountCurve& c, const std::string& label = "curve") {
    if (c.pillar_times.empty())
        throw ValidationError(label + ": at least one pillar required");
    if (c.pillar_times.size() != c.zero_rates.size())
        throw ValidationError(label + ": pillar_times and zero_rates size mismatch");
    double prev = 0.0;
    for (double t : c.pillar_times) {
        if (!(t > prev))
            throw ValidationError(label + ": pillar_times must be strictly increasing and > 0");
        prev = t;
    }
    for (double z : c.zero_rates)
        if (!std::isfinite(z))
            throw ValidationError(label + ": zero rates must be finite");
}

// Total yield w(t) = z(t)*t: piecewise linear through (t_i, z_i*t_i),
// anchored at w(0) = 0, slope z_n beyond the last pillar.
inline double yield_integral(const DiscountCurve& c, double t) {
    if (t < 0.0) throw std::domain_error("yield_integral: negative time");
    if (t == 0.0) return 0.0;
    const auto& ts = c.pillar_times;
    size_t n = ts.size();
    if (t >= ts.back()) {
        double wn = c.zero_rates.back() * ts.back();
        return wn + c.zero_rates.back() * (t - ts.back());
    }
    size_t hi = static_cast<size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
    double t0 = hi == 0 ? 0.0 : ts[hi - 1];
    double w0 = hi == 0 ? 0.0 : c.zero_rates[hi - 1] * ts[hi - 1];
    double t1 = ts[hi];
    double w1 = c.zero_rates[hi] * ts[hi];
    if (t == t0) return w0;
    return w0 + (w1 - w0) * (t - t0) / (t1 - t0);
}

inline double discount_factor(const DiscountCurve& c, double t) {
    if (t < 0.0) throw std::domain_error("discount_factor: negative time");
    if (t == 0.0) return 1.0;
    return std::exp(-yield_integral(c, t));
}

// dw/dt: piecewise constant, right-continuous at pillars.
inline double instantaneous_forward(const DiscountCurve& c, double t) {
    if (t < 0.0) throw std::domain_error("instantaneous_forward: negative time");
    const auto& ts = c.pillar_times;
    if (t >= ts.back()) return c.zero_rates.back();
    size_t hi = static_cast<size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
    double t0 = hi == 0 ? 0.0 : ts[hi - 1];
    double w0 = hi == 0 ? 0.0 : c.zero_rates[hi - 1] * ts[hi - 1];
    double t1 = ts[hi];
    double w1 = c.zero_rates[hi] * ts[hi];
    return (w1 - w0) / (t1 - t0);
}

// ---------------------------------------------------------------------------
// EquityForwardInputs
// ---------------------------------------------------------------------------

struct EquityForwardInputs {
    double spot = 0.0;        // > 0
    DiscountCurve carry_curve; // repo-minus-dividend zero rates
};

inline void validate(const EquityForwardInputs& e) {
    if (!(e.spot > 0.0)) throw ValidationError("equity: spot must be > 0");
    validate(e.carry_curve, "carry curve");
}

inline double forward_price(const EquityForwardInputs& eq, const DiscountCurve& discount,
                            double t) {
    if (t < 0.0) throw std::domain_error("forward_price: negative time");
    if (t == 0.0) return eq.spot;
    return eq.spot * std::exp(yield_integral(discount, t) + yield_integral(eq.carry_curve, t));
}

// ---------------------------------------------------------------------------
// ImpliedVolSurface
// ---------------------------------------------------------------------------

struct ImpliedVolSurface {
    std::vector<double> expiries;          // years, strictly increasing, > 0
    std::vector<double> moneyness_pillars; // strike/forward, strictly increasing
    std::vector<std::vector<double>> vols; // [expiry][moneyness], in (0, 5]
};

inline void validate(const ImpliedVolSurface& s) {
    if (s.expiries.empty() || s.moneyness_pillars.empty())
        throw ValidationError("surface: empty axis");
    double prev = 0.0;
    for (double e : s.expiries) {
        if (!(e > prev)) throw ValidationError("surface: expiries must be strictly increasing and > 0");
        prev = e;
    }
    prev = 0.0;
    for (double k : s.moneyness_pillars) {
        if (!(k > prev)) throw ValidationError("surface: moneyness pillars must be strictly increasing and > 0");
        prev = k;
    }
    if (s.moneyness_pillars.front() > 0.5 || s.moneyness_pillars.back() < 1.5)
        throw ValidationError("surface: moneyness pillars must span at least [0.5, 1.5]");
    if (s.vols.size() != s.expiries.size())
        throw ValidationError("surface: vols row count must match expiries");
    for (const auto& row : s.vols) {
        if (row.size() != s.moneyness_pillars.size())
            throw ValidationError("surface: vols column count must match moneyness pillars");
        for (double v : row)
            if (!(v > 0.0 && v <= 5.0))
                throw ValidationError("surface: vols must lie in (0, 5]");
    }
    // Calendar check: total variance non-decreasing in expiry at each pillar.
    for (size_t j = 0; j < s.moneyness_pillars.size(); ++j) {
        for (size_t i = 1; i < s.expiries.size(); ++i) {
            double w_prev = s.vols[i - 1][j] * s.vols[i - 1][j] * s.expiries[i - 1];
            double w_cur = s.vols[i][j] * s.vols[i][j] * s.expiries[i];
            if (w_cur < w_prev)
                throw ValidationError(
                    "surface: total variance decreasing in maturity at moneyness pillar " +
                    std::to_string(s.moneyness_pillars[j]));
        }
    }
}

// Total variance w(t,k) = implied_vol(t,k)^2 * t under the interpolation
// rule: bilinear on node total variances in (t, k), flat vol outside the
// pillar ranges (which makes w linear through the origin below the first
// expiry and proportional to t beyond the last).
inline double total_variance(const ImpliedVolSurface& s, double t, double k) {
    if (!(t > 0.0)) throw std::domain_error("total_variance: t must be > 0");
    if (!(k > 0.0)) throw std::domain_error("total_variance: moneyness must be > 0");
    const auto& kp = s.moneyness_pillars;
    size_t j0, j1;
    double uk;
    if (k <= kp.front()) {
        j0 = j1 = 0;
        uk = 0.0;
    } else if (k >= kp.back()) {
        j0 = j1 = kp.size() - 1;
        uk = 0.0;
    } else {
        j1 = static_cast<size_t>(std::upper_bound(kp.begin(), kp.end(), k) - kp.begin());
        j0 = j1 - 1;
        uk = (k - kp[j0]) / (kp[j1] - kp[j0]);
    }
    auto w_node = [&](size_t i, size_t j) { return s.vols[i][j] * s.vols[i][j] * s.expiries[i]; };
    auto w_at = [&](size_t i) { return w_node(i, j0) + uk * (w_node(i, j1) - w_node(i, j0)); };
    const auto& ex = s.expiries;
    if (t <= ex.front()) return w_at(0) * (t / ex.front());
    if (t >= ex.back()) return w_at(ex.size() - 1) * (t / ex.back());
    size_t hi = static_cast<size_t>(std::upper_bound(ex.begin(), ex.end(), t) - ex.begin());
    double w0 = w_at(hi - 1), w1 = w_at(hi);
    double u = (t - ex[hi - 1]) / (ex[hi] - ex[hi - 1]);
    return w0 + u * (w1 - w0);
}

inline double implied_vol(const ImpliedVolSurface& s, double t, double k) {
    if (!(t > 0.0)) throw std::domain_error("implied_vol: t must be > 0");
    if (!(k > 0.0)) throw std::domain_error("implied_vol: moneyness must be > 0");
    // Grid nodes reproduce stored values bit-exactly.
    auto ei = std::lower_bound(s.expiries.begin(), s.expiries.end(), t);
    if (ei != s.expiries.end() && *ei == t) {
        auto ki = std::lower_bound(s.moneyness_pillars.begin(), s.moneyness_pillars.end(), k);
        if (ki != s.moneyness_pillars.end() && *ki == k)
            return s.vols[static_cast<size_t>(ei - s.expiries.begin())]
                         [static_cast<size_t>(ki - s.moneyness_pillars.begin())];
    }
    return std::sqrt(total_variance(s, t, k) / t);
}

// ---------------------------------------------------------------------------
// MarketSnapshot
// ---------------------------------------------------------------------------

struct MarketSnapshot {
    Date as_of;
    DiscountCurve discount;
    EquityForwardInputs equity;
    ImpliedVolSurface surface;
    double equity_rate_correlation = 0.0; // in [-1, 1]
};

inline void validate(const MarketSnapshot& m) {
    validate(m.discount, "discount curve");
    validate(m.equity);
    validate(m.surface);
    if (!(m.equity_rate_correlation >= -1.0 && m.equity_rate_correlation <= 1.0))
        throw ValidationError("snapshot: equity_rate_correlation must lie in [-1, 1]");
}

// ---------------------------------------------------------------------------
// Dupire local volatility
// ---------------------------------------------------------------------------

// Local vol from the total-variance surface by finite differences in
// (T, y = log moneyness):
//
//   v_loc = (dw/dT) / [1 - (y/w) w_y + 1/4 (-1/4 - 1/w + y^2/w^2) w_y^2 + 1/2 w_yy]
//
// evaluated at y = log(spot_level / forward(t)). Steps: dT = min(0.05,
// half the surrounding expiry cell), dy = 0.01. Local variance is floored
// at 1e-6 and the vol capped at 5.0, absorbing any numerical pathology in
// thin or extrapolated regions.
inline double dupire_local_vol(const ImpliedVolSurface& s, const EquityForwardInputs& eq,
                               const DiscountCurve& discount, double t, double spot_level) {
    if (!(t > 0.0)) throw std::domain_error("dupire_local_vol: t must be > 0");
    if (!(spot_level > 0.0)) throw std::domain_error("dupire_local_vol: spot_level must be > 0");

    double fwd = forward_price(eq, discount, t);
    double y = std::log(spot_level / fwd);

    const auto& ex = s.expiries;
    double cell;
    if (t < ex.front())
        cell = ex.front();
    else if (t >= ex.back())
        cell = ex.size() > 1 ? ex.back() - ex[ex.size() - 2] : ex.back();
    else {
        size_t hi = static_cast<size_t>(std::upper_bound(ex.begin(), ex.end(), t) - ex.begin());
        cell = ex[hi] - ex[hi - 1];
    }
    double dt = std::min(0.05, 0.5 * cell);
    const double dy = 0.01;

    auto w_at = [&](double tt, double yy) { return total_variance(s, tt, std::exp(yy)); };

    double w0 = w_at(t, y);
    double wp = w_at(t, y + dy);
    double wm = w_at(t, y - dy);
    double w_y = (wp - wm) / (2.0 * dy);
    double w_yy = (wp - 2.0 * w0 + wm) / (dy * dy);
    double w_t;
    if (t > dt)
        w_t = (w_at(t + dt, y) - w_at(t - dt, y)) / (2.0 * dt);
    else
        w_t = (w_at(t + dt, y) - w0) / dt;

    double var;
    if (w0 < 1e-14) {
        var = w_t; // near-zero maturity: denominator collapses to 1
    } else {
        double denom = 1.0 - (y / w0) * w_y +
                       0.25 * (-0.25 - 1.0 / w0 + (y * y) / (w0 * w0)) * w_y * w_y +
                       0.5 * w_yy;
        if (denom < 1e-12) return 5.0; // butterfly-degenerate region: cap
        var = std::max(w_t, 0.0) / denom;
    }
    var = std::max(var, 1e-6);
    return std::min(std::sqrt(var), 5.0);
}

// ---------------------------------------------------------------------------
// Snapshot file I/O
// ---------------------------------------------------------------------------

inline nlohmann::json snapshot_to_json(const MarketSnapshot& m) {
    nlohmann::json j;
    j["as_of"] = to_iso(m.as_of);
    j["discount"]["times"] = m.discount.pillar_times;
    j["discount"]["zero_rates"] = m.discount.zero_rates;
    j["equity"]["spot"] = m.equity.spot;
    j["equity"]["carry_times"] = m.equity.carry_curve.pillar_times;
    j["equity"]["carry_rates"] = m.equity.carry_curve.zero_rates;
    j["surface"]["expiries"] = m.surface.expiries;
    j["surface"]["moneyness"] = m.surface.moneyness_pillars;
    std::vector<double> flat;
    flat.reserve(m.surface.expiries.size() * m.surface.moneyness_pillars.size());
    for (const auto& row : m.surface.vols)
        flat.insert(flat.end(), row.begin(), row.end());
    j["surface"]["vols"] = flat;
    j["equity_rate_correlation"] = m.equity_rate_correlation;
    return j;
}

inline MarketSnapshot snapshot_from_json(const nlohmann::json& j) {
    auto need = [&](const nlohmann::json& o, const char* field) -> const nlohmann::json& {
        if (!o.contains(field))
            throw ConfigError(std::string("snapshot: missing field '") + field + "'");
        return o.at(field);
    };
    MarketSnapshot m;
    m.as_of = parse_date(need(j, "as_of").get<std::string>());
    const auto& d = need(j, "discount");
    m.discount.pillar_times = need(d, "times").get<std::vector<double>>();
    m.discount.zero_rates = need(d, "zero_rates").get<std::vector<double>>();
    const auto& e = need(j, "equity");
    m.equity.spot = need(e, "spot").get<double>();
    m.equity.carry_curve.pillar_times = need(e, "carry_times").get<std::vector<double>>();
    m.equity.carry_curve.zero_rates = need(e, "carry_rates").get<std::vector<double>>();
    const auto& s = need(j, "surface");
    m.surface.expiries = need(s, "expiries").get<std::vector<double>>();
    m.surface.moneyness_pillars = need(s, "moneyness").get<std::vector<double>>();
    auto flat = need(s, "vols").get<std::vector<double>>();
    size_t rows = m.surface.expiries.size(), cols = m.surface.moneyness_pillars.size();
    if (flat.size() != rows * cols)
        throw ValidationError("surface: vols length must equal expiries x moneyness");
    m.surface.vols.resize(rows);
    for (size_t i = 0; i < rows; ++i)
        m.surface.vols[i] = std::vector<double>(flat.begin() + static_cast<long>(i * cols),
                                                flat.begin() + static_cast<long>((i + 1) * cols));
    m.equity_rate_correlation = need(j, "equity_rate_correlation").get<double>();
    validate(m);
    return m;
}

inline MarketSnapshot load_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("snapshot file not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("snapshot parse error in " + path + ": " + ex.what());
    }
    return snapshot_from_json(j);
}

inline void write_snapshot(const MarketSnapshot& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write snapshot file: " + path);
    out << snapshot_to_json(m).dump(2) << '\n';
}

} // namespace mrisk

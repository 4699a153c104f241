#pragma once

// Product definitions and pathwise cashflow logic. Everything is expressed
// in return space R = S_t / reference_spot, so payoffs are per unit notional
// and basis-point comparisons across tenors are direct. The reference spot
// is bound when the product is created and is deliberately NOT re-read from
// bumped market snapshots: strikes stay anchored in cash so spot greeks
// measure what a desk hedges.

#include <mrisk/errors.hpp>
#include <mrisk/payoff_profile.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mrisk {

// ---------------------------------------------------------------------------
// Product types
// ---------------------------------------------------------------------------

struct Autocallable {
    double notional = 1.0;                // currency
    double reference_spot = 0.0;          // cash anchor for returns, > 0
    std::vector<double> observation_dates; // years, strictly increasing (yearly 1..M)
    double autocall_barrier = 1.0;        // return trigger, calls when R >= barrier
    double coupon_step = 0.05;            // year i call pays redemption + i * coupon_step
    double redemption = 1.0;
    double short_put_strike = 0.5;
    double digital_strike = 0.5;
    double digital_leverage = 0.5;
    bool floating_leg = false;            // holder pays floating coupons while alive
    double floating_spread = 0.0;
    bool forward_start = false;           // returns fixed at the first observation; needs governance clearance
};

struct VanillaOption {
    double reference_spot = 0.0;
    double strike = 1.0; // ratio of reference spot
    double expiry = 1.0; // years
    bool is_put = true;
};

struct DigitalOption {
    double reference_spot = 0.0;
    double strike = 0.5;  // ratio
    double expiry = 1.0;  // years
    double leverage = 0.5; // payout per unit notional
    bool is_put = true;
};

// Pure terminal-profile payoff; the carrier for softened payoffs.
struct ProfileProduct {
    double reference_spot = 0.0;
    double expiry = 1.0;
    PayoffProfile profile;
};

using Product = std::variant<Autocallable, VanillaOption, DigitalOption, ProfileProduct>;

inline void validate(const Autocallable& p) {
    if (!(p.notional > 0.0)) throw ValidationError("autocallable: notional must be > 0");
    if (!(p.reference_spot > 0.0)) throw ValidationError("autocallable: reference spot must be > 0");
    if (p.observation_dates.empty())
        throw ValidationError("autocallable: at least one observation date required");
    double prev = 0.0;
    for (double t : p.observation_dates) {
        if (!(t > prev))
            throw ValidationError("autocallable: observation dates must be strictly increasing and > 0");
        prev = t;
    }
    if (!(p.autocall_barrier > 0.0)) throw ValidationError("autocallable: barrier must be > 0");
    if (!(p.coupon_step >= 0.0)) throw ValidationError("autocallable: coupon step must be >= 0");
    if (!(p.redemption > 0.0)) throw ValidationError("autocallable: redemption must be > 0");
    if (!(p.short_put_strike > 0.0)) throw ValidationError("autocallable: put strike must be > 0");
    if (!(p.digital_strike > 0.0)) throw ValidationError("autocallable: digital strike must be > 0");
    if (!(p.digital_leverage >= 0.0))
        throw ValidationError("autocallable: digital leverage must be >= 0");
    if (!std::isfinite(p.floating_spread))
        throw ValidationError("autocallable: floating spread must be finite");
}

inline void validate(const VanillaOption& p) {
    if (!(p.reference_spot > 0.0)) throw ValidationError("vanilla: reference spot must be > 0");
    if (!(p.strike > 0.0)) throw ValidationError("vanilla: strike must be > 0");
    if (!(p.expiry > 0.0)) throw ValidationError("vanilla: expiry must be > 0");
}

inline void validate(const DigitalOption& p) {
    if (!(p.reference_spot > 0.0)) throw ValidationError("digital: reference spot must be > 0");
    if (!(p.strike > 0.0)) throw ValidationError("digital: strike must be > 0");
    if (!(p.expiry > 0.0)) throw ValidationError("digital: expiry must be > 0");
    if (!(p.leverage > 0.0)) throw ValidationError("digital: leverage must be > 0");
}

inline void validate(const ProfileProduct& p) {
    if (!(p.reference_spot > 0.0)) throw ValidationError("profile product: reference spot must be > 0");
    if (!(p.expiry > 0.0)) throw ValidationError("profile product: expiry must be > 0");
    validate(p.profile);
}

inline void validate(const Product& p) {
    std::visit([](const auto& q) { validate(q); }, p);
}

inline double product_reference_spot(const Product& p) {
    return std::visit([](const auto& q) { return q.reference_spot; }, p);
}

// Last cashflow-relevant time: the horizon a path must cover.
inline double product_horizon(const Product& p) {
    struct {
        double operator()(const Autocallable& a) const { return a.observation_dates.back(); }
        double operator()(const VanillaOption& v) const { return v.expiry; }
        double operator()(const DigitalOption& d) const { return d.expiry; }
        double operator()(const ProfileProduct& f) const { return f.expiry; }
    } h;
    return std::visit(h, p);
}

// ---------------------------------------------------------------------------
// Terminal payoffs in return space (per unit notional)
// ---------------------------------------------------------------------------

inline double vanilla_payoff(const VanillaOption& p, double ret) {
    return p.is_put ? std::max(p.strike - ret, 0.0) : std::max(ret - p.strike, 0.0);
}

// Strict inequality below (above) the strike: at the strike nothing pays.
inline double digital_payoff(const DigitalOption& p, double ret) {
    bool hit = p.is_put ? (ret < p.strike) : (ret > p.strike);
    return hit ? p.leverage : 0.0;
}

// Maturity payoff of a never-called autocallable:
//   redemption - max(put_strike - R, 0) - digital_leverage * 1{R < digital_strike}
inline double autocall_terminal_payoff(const Autocallable& p, double ret) {
    double v = p.redemption - std::max(p.short_put_strike - ret, 0.0);
    if (ret < p.digital_strike) v -= p.digital_leverage;
    return v;
}

// The same maturity payoff as an explicit piecewise-linear profile, suitable
// for softening. Knots at 0, the digital strike (jump) and the put strike;
// flat beyond the larger of the strikes.
inline PayoffProfile autocall_terminal_profile(const Autocallable& p) {
    std::vector<double> breakpoints = {p.short_put_strike, p.digital_strike};
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

    PayoffProfile prof;
    auto push = [&](double x, double y) {
        prof.x.push_back(x);
        prof.y.push_back(y);
    };
    push(0.0, autocall_terminal_payoff(p, 0.0));
    for (double b : breakpoints) {
        if (b == p.digital_strike && p.digital_leverage > 0.0) {
            // Left limit still carries the digital loss; the value at b does not.
            double left = p.redemption - std::max(p.short_put_strike - b, 0.0) - p.digital_leverage;
            push(b, left);
        }
        push(b, autocall_terminal_payoff(p, b));
    }
    double xmax = std::max(2.0, breakpoints.back() + 0.5);
    push(xmax, autocall_terminal_payoff(p, xmax));
    validate(prof);
    return prof;
}

// ---------------------------------------------------------------------------
// Pathwise autocallable cashflows
// ---------------------------------------------------------------------------

struct Cashflow {
    double time;   // years
    double amount; // currency, holder's perspective
};

// One simulated path sampled on the engine's time grid. floating_rates[j] is
// the simple rate fixed over (obs_{j-1}, obs_j] for observation j (from the
// deterministic curve under LV, pathwise under HWLV); it is ignored when the
// product's floating leg is off.
struct PathOnGrid {
    std::vector<double> times;          // ascending, times[0] == 0
    std::vector<double> returns;        // S(t)/reference_spot per node
    std::vector<double> floating_rates; // per observation date, may be empty if leg off
};

// Index of each observation date on the grid; throws if any date is not a
// grid node (within 1e-9 years).
inline std::vector<size_t> locate_observations(const std::vector<double>& grid_times,
                                               const std::vector<double>& obs_times) {
    std::vector<size_t> idx;
    idx.reserve(obs_times.size());
    for (double t : obs_times) {
        auto it = std::lower_bound(grid_times.begin(), grid_times.end(), t - 1e-9);
        if (it == grid_times.end() || std::abs(*it - t) > 1e-9)
            throw ConfigError("observation date does not lie on the simulation time grid");
        idx.push_back(static_cast<size_t>(it - grid_times.begin()));
    }
    return idx;
}

// Holder cashflows for one path. First observation with return >= barrier
// redeems notional x (redemption + i x coupon_step), i being the 1-based
// observation index. While the deal is alive the holder pays floating
// coupons (negative amounts) at every observation date up to and including
// the redemption date; if never called, the maturity flow nets the terminal
// payoff against the final floating coupon.
inline void autocall_cashflows(const PathOnGrid& path, const Autocallable& p,
                               std::vector<Cashflow>& out) {
    out.clear();
    std::vector<size_t> obs_idx = locate_observations(path.times, p.observation_dates);
    if (p.floating_leg && path.floating_rates.size() < obs_idx.size())
        throw ConfigError("floating leg enabled but path carries no floating rates");

    const size_t M = obs_idx.size();
    // Forward-start deals measure returns against the first-observation fixing
    // and can only autocall from the second observation onwards.
    double ret_base = 1.0;
    size_t first_callable = 0;
    if (p.forward_start) {
        ret_base = path.returns[obs_idx[0]];
        first_callable = 1;
        if (M < 2) throw ConfigError("forward-start autocallable needs at least two observations");
    }

    double prev_t = p.forward_start ? path.times[obs_idx[0]] : 0.0;
    for (size_t j = first_callable; j < M; ++j) {
        double t = path.times[obs_idx[j]];
        double ret = path.returns[obs_idx[j]] / ret_base;
        if (p.floating_leg) {
            double accrual = t - prev_t;
            out.push_back({t, -p.notional * (path.floating_rates[j] + p.floating_spread) * accrual});
        }
        prev_t = t;
        if (ret >= p.autocall_barrier) {
            out.push_back({t, p.notional * (p.redemption + static_cast<double>(j + 1) * p.coupon_step)});
            return;
        }
        if (j + 1 == M)
            out.push_back({t, p.notional * autocall_terminal_payoff(p, ret)});
    }
}

inline std::vector<Cashflow> autocall_cashflows(const PathOnGrid& path, const Autocallable& p) {
    std::vector<Cashflow> out;
    autocall_cashflows(path, p, out);
    return out;
}

} // namespace mrisk

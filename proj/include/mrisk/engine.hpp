#pragma once

// Monte Carlo pricing engine. Two models share one simulation kernel:
//
//   LV    pure local volatility, deterministic rates from the discount curve
//   HWLV  Hull-White short rate plus a leverage (effective local vol) surface
//         calibrated so vanilla prices match the market surface
//
// Both models read their diffusion coefficient from the same sampled grid
// type (time nodes x log-moneyness pillars). Under LV the grid holds Dupire
// local vols; under HWLV it holds the calibrated leverage. With rate vol zero
// the leverage fixed point leaves the Dupire samples untouched bit for bit,
// so the hybrid degenerates to LV exactly, which is the key model-risk
// control on the implementation.
//
// State variables per path: y = ln(S/F(t)) so the grid lookup needs no
// transcendentals, x = r - f(0,t) - m(t) the mean-zero OU factor, and the
// trapezoidal integral of (x + m) which together with the curve integral
// gives the money-market account. The spot uses a log-Euler step with the
// exact curve drift; the rate uses the exact OU transition.

#include <mrisk/errors.hpp>
#include <mrisk/market_data.hpp>
#include <mrisk/products.hpp>
#include <mrisk/rng.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace mrisk {

// ---------------------------------------------------------------------------
// Model and run configuration
// ---------------------------------------------------------------------------

struct HullWhiteParams {
    double mean_reversion = 0.05;
    double rate_vol = 0.008;
};

inline void validate(const HullWhiteParams& p) {
    if (!(p.mean_reversion > 0.0))
        throw ValidationError("hull-white: mean reversion must be > 0");
    if (!(p.rate_vol >= 0.0))
        throw ValidationError("hull-white: rate vol must be >= 0");
}

enum class ModelKind { LocalVol, HybridHwLv };

// Effective local vol multiplier for the hybrid model, sampled on time nodes
// and spot/forward moneyness pillars.
struct LeverageSurface {
    std::vector<double> times;
    std::vector<double> moneyness; // S/F(t)
    std::vector<std::vector<double>> values; // [time][moneyness]
    int sweeps_used = 0;
    bool converged = true;
    std::vector<std::string> warnings;
};

inline void validate(const LeverageSurface& ls) {
    if (ls.times.empty() || ls.moneyness.empty())
        throw ValidationError("leverage surface: empty pillars");
    for (size_t i = 1; i < ls.times.size(); ++i)
        if (!(ls.times[i] > ls.times[i - 1]))
            throw ValidationError("leverage surface: times must be strictly increasing");
    for (size_t j = 1; j < ls.moneyness.size(); ++j)
        if (!(ls.moneyness[j] > ls.moneyness[j - 1]))
            throw ValidationError("leverage surface: moneyness must be strictly increasing");
    if (!(ls.moneyness.front() > 0.0))
        throw ValidationError("leverage surface: moneyness must be positive");
    if (ls.values.size() != ls.times.size())
        throw ValidationError("leverage surface: value rows do not match time pillars");
    for (const auto& row : ls.values) {
        if (row.size() != ls.moneyness.size())
            throw ValidationError("leverage surface: value row does not match moneyness pillars");
        for (double v : row)
            if (!(v >= 0.01 - 1e-9 && v <= 10.0 + 1e-9))
                throw ValidationError("leverage surface: values must lie in [0.01, 10]");
    }
}

struct ModelSpec {
    ModelKind kind = ModelKind::LocalVol;
    HullWhiteParams hw;                    // hybrid only
    double equity_rate_correlation = 0.0;  // hybrid only
    std::optional<LeverageSurface> leverage; // hybrid only, set by calibration
};

inline void validate(const ModelSpec& m) {
    if (m.kind == ModelKind::HybridHwLv) {
        validate(m.hw);
        if (!(m.equity_rate_correlation >= -1.0 && m.equity_rate_correlation <= 1.0))
            throw ValidationError("model: equity/rate correlation must lie in [-1, 1]");
        if (m.leverage) validate(*m.leverage);
    }
}

inline ModelSpec lv_model() { return ModelSpec{}; }

inline ModelSpec hwlv_model(const HullWhiteParams& hw, double correlation) {
    ModelSpec m;
    m.kind = ModelKind::HybridHwLv;
    m.hw = hw;
    m.equity_rate_correlation = correlation;
    return m;
}

struct McConfig {
    long long n_paths = 100000;
    int steps_per_year = 48;
    std::uint64_t seed = 1;
    bool antithetic = true;
    int threads = 1;
};

inline void validate(const McConfig& c) {
    if (!(c.n_paths >= 2)) throw ValidationError("mc config: need at least 2 paths");
    if (c.steps_per_year < 12)
        throw ValidationError("mc config: need at least 12 steps per year");
    if (c.antithetic && (c.n_paths % 2) != 0)
        throw ValidationError("mc config: antithetic sampling needs an even path count");
    if (c.threads < 1) throw ValidationError("mc config: thread count must be >= 1");
}

struct PathSet {
    std::vector<double> times;
    std::vector<std::vector<double>> spots;        // [path][node]
    std::vector<std::vector<double>> short_rates;  // [path][node], hybrid only
    std::vector<std::vector<double>> money_market; // [path][node]
};

struct PriceResult {
    double value = 0.0;     // per unit notional
    double std_error = 0.0;
    long long n_paths = 0;
};

// ---------------------------------------------------------------------------
// Hull-White analytics (one-factor, fitted to the discount curve)
// ---------------------------------------------------------------------------

// Deterministic spread m(t) between the fitted short-rate mean and the curve
// forward: r(t) = x(t) + f(0,t) + m(t) with x mean-zero OU.
inline double hw_fitted_spread(const HullWhiteParams& p, double t) {
    double a = p.mean_reversion, s = p.rate_vol;
    double e = std::expm1(-a * t); // -(1 - exp(-a t))
    return s * s / (2.0 * a * a) * e * e;
}

// Zero bond P(t, T) given the short rate at t. Closed form; exact fit to the
// discount curve at t = 0 by construction.
inline double hw_discount_bond(const HullWhiteParams& p, const DiscountCurve& curve,
                               double t, double T, double short_rate) {
    if (t < 0.0 || T < t) throw std::domain_error("hw bond: need 0 <= t <= T");
    if (T == t) return 1.0;
    double a = p.mean_reversion, s = p.rate_vol;
    double B = -std::expm1(-a * (T - t)) / a;
    double x = short_rate - instantaneous_forward(curve, t) - hw_fitted_spread(p, t);
    double var_adj = s * s / (4.0 * a) * B * B * (-std::expm1(-2.0 * a * t));
    double ln_p = yield_integral(curve, t) - yield_integral(curve, T) - B * x -
                  B * hw_fitted_spread(p, t) - var_adj;
    return std::exp(ln_p);
}

// ---------------------------------------------------------------------------
// Simulation grid and sampled vol grid
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kGridKLow = 0.3;  // moneyness pillar range
inline constexpr double kGridKHigh = 3.0;
inline constexpr size_t kGridNk = 41;
inline constexpr size_t kUnitChunk = 1024; // units per work chunk

struct SimGrid {
    double horizon = 0.0;
    size_t n_steps = 0;
    double dt = 0.0;
    std::vector<double> times;   // n_steps + 1 nodes
    std::vector<double> w_rate;  // integrated zero rate at node
    std::vector<double> fwd;     // equity forward at node
    std::vector<double> drift;   // per step: d(w_rate + w_carry)
};

inline SimGrid make_sim_grid(const MarketSnapshot& mkt, double horizon, int steps_per_year,
                             double t0 = 0.0) {
    if (!(t0 >= 0.0) || !(horizon > t0))
        throw ValidationError("simulation window must satisfy 0 <= start < horizon");
    SimGrid g;
    g.horizon = horizon;
    double span = horizon - t0;
    double steps = static_cast<double>(steps_per_year) * span;
    g.n_steps = static_cast<size_t>(std::max(1.0, std::round(steps)));
    g.dt = span / static_cast<double>(g.n_steps);
    size_t n = g.n_steps;
    g.times.resize(n + 1);
    g.w_rate.resize(n + 1);
    g.fwd.resize(n + 1);
    g.drift.resize(n);
    std::vector<double> w_total(n + 1);
    for (size_t i = 0; i <= n; ++i) {
        double t = t0 + static_cast<double>(i) * span / static_cast<double>(g.n_steps);
        g.times[i] = t;
        g.w_rate[i] = yield_integral(mkt.discount, t);
        double w_carry = yield_integral(mkt.equity.carry_curve, t);
        w_total[i] = g.w_rate[i] + w_carry;
        g.fwd[i] = mkt.equity.spot * std::exp(w_total[i]);
    }
    for (size_t i = 0; i < n; ++i) g.drift[i] = w_total[i + 1] - w_total[i];
    return g;
}

// Vols sampled per time node on uniform log-moneyness pillars; lookup is
// index arithmetic plus one linear interpolation, flat beyond the edges.
struct VolGrid {
    double lk0 = 0.0;
    double dlk = 0.0;
    size_t nk = 0;
    std::vector<std::vector<double>> rows; // [node][pillar]

    double vol_at(size_t node, double ln_moneyness) const {
        const std::vector<double>& r = rows[node];
        double u = (ln_moneyness - lk0) / dlk;
        if (u <= 0.0) return r.front();
        if (u >= static_cast<double>(nk - 1)) return r.back();
        size_t j = static_cast<size_t>(u);
        double w = u - static_cast<double>(j);
        return r[j] + w * (r[j + 1] - r[j]);
    }
};

inline std::vector<double> standard_log_pillars() {
    std::vector<double> lk(kGridNk);
    double lk0 = std::log(kGridKLow);
    double dlk = (std::log(kGridKHigh) - lk0) / static_cast<double>(kGridNk - 1);
    for (size_t j = 0; j < kGridNk; ++j) lk[j] = lk0 + static_cast<double>(j) * dlk;
    return lk;
}

inline VolGrid sample_dupire_grid(const MarketSnapshot& mkt, const SimGrid& g) {
    VolGrid v;
    v.lk0 = std::log(kGridKLow);
    v.dlk = (std::log(kGridKHigh) - v.lk0) / static_cast<double>(kGridNk - 1);
    v.nk = kGridNk;
    v.rows.assign(g.times.size(), std::vector<double>(kGridNk));
    for (size_t i = 0; i < g.times.size(); ++i) {
        // The row at a node drives the step leaving it; a row at t = 0 is
        // sampled half a step in, where the local vol is defined.
        double t_eff = (g.times[i] > 0.0) ? g.times[i] : 0.5 * g.times[1];
        for (size_t j = 0; j < kGridNk; ++j) {
            double k = std::exp(v.lk0 + static_cast<double>(j) * v.dlk);
            double level = k * g.fwd[i];
            v.rows[i][j] = dupire_local_vol(mkt.surface, mkt.equity, mkt.discount,
                                            t_eff, level);
        }
    }
    return v;
}

// Resample a leverage surface onto the simulation nodes. Surfaces produced by
// calibrate_leverage sit on the standard pillars and on node times that match
// bit for bit across horizons with the same steps-per-year, so the common
// path is a plain row copy; anything else interpolates linearly in time and
// log-moneyness with flat extrapolation.
inline VolGrid vol_from_leverage(const LeverageSurface& ls, const SimGrid& g) {
    validate(ls);
    VolGrid v;
    v.lk0 = std::log(kGridKLow);
    v.dlk = (std::log(kGridKHigh) - v.lk0) / static_cast<double>(kGridNk - 1);
    v.nk = kGridNk;

    bool standard_pillars = ls.moneyness.size() == kGridNk;
    if (standard_pillars) {
        for (size_t j = 0; j < kGridNk; ++j) {
            double lk = v.lk0 + static_cast<double>(j) * v.dlk;
            if (std::abs(std::log(ls.moneyness[j]) - lk) > 1e-12) {
                standard_pillars = false;
                break;
            }
        }
    }

    // One surface row resampled onto the standard moneyness pillars.
    auto resample_row = [&](const std::vector<double>& row, std::vector<double>& out) {
        if (standard_pillars) {
            out = row;
            return;
        }
        out.resize(kGridNk);
        for (size_t j = 0; j < kGridNk; ++j) {
            double lk = v.lk0 + static_cast<double>(j) * v.dlk;
            double k = std::exp(lk);
            if (k <= ls.moneyness.front()) {
                out[j] = row.front();
            } else if (k >= ls.moneyness.back()) {
                out[j] = row.back();
            } else {
                size_t h = 1;
                while (ls.moneyness[h] < k) ++h;
                double x0 = std::log(ls.moneyness[h - 1]);
                double x1 = std::log(ls.moneyness[h]);
                double w = (lk - x0) / (x1 - x0);
                out[j] = row[h - 1] + w * (row[h] - row[h - 1]);
            }
        }
    };

    v.rows.resize(g.times.size());
    std::vector<double> lo_row, hi_row;
    for (size_t i = 0; i < g.times.size(); ++i) {
        double t = g.times[i];
        // Exact node match (the common case when calibration and pricing use
        // the same steps-per-year) copies the row without interpolation.
        size_t nt = ls.times.size();
        size_t pos = nt;
        for (size_t q = 0; q < nt; ++q) {
            if (std::abs(ls.times[q] - t) <= 1e-12 * std::max(1.0, std::abs(t))) {
                pos = q;
                break;
            }
            if (ls.times[q] > t) break;
        }
        if (pos < nt) {
            resample_row(ls.values[pos], v.rows[i]);
        } else if (t <= ls.times.front()) {
            resample_row(ls.values.front(), v.rows[i]);
        } else if (t >= ls.times.back()) {
            resample_row(ls.values.back(), v.rows[i]);
        } else {
            size_t h = 1;
            while (ls.times[h] < t) ++h;
            resample_row(ls.values[h - 1], lo_row);
            resample_row(ls.values[h], hi_row);
            double w = (t - ls.times[h - 1]) / (ls.times[h] - ls.times[h - 1]);
            v.rows[i].resize(kGridNk);
            for (size_t j = 0; j < kGridNk; ++j)
                v.rows[i][j] = lo_row[j] + w * (hi_row[j] - lo_row[j]);
        }
    }
    return v;
}

// Everything the path kernel needs, model differences folded into data.
struct EngineCtx {
    SimGrid grid;
    VolGrid vol;
    bool hybrid = false;
    double rho = 0.0;
    double rho_c = 1.0;   // sqrt(1 - rho^2)
    double decay = 1.0;   // exp(-a dt)
    double svol = 0.0;    // OU shock scale over one step
    double sqdt = 0.0;
    double y0 = 0.0;      // initial ln(S / F(t)) state
    double x0 = 0.0;      // initial rate-factor state
    std::vector<double> m; // fitted spread per node (zeros for LV)
    std::vector<double> f; // curve instantaneous forward per node
};

inline EngineCtx make_engine_ctx(const ModelSpec& model, const MarketSnapshot& mkt,
                                 double horizon, const McConfig& cfg, double t0 = 0.0) {
    validate(model);
    validate(cfg);
    EngineCtx c;
    c.grid = make_sim_grid(mkt, horizon, cfg.steps_per_year, t0);
    c.hybrid = model.kind == ModelKind::HybridHwLv;
    size_t nn = c.grid.times.size();
    c.m.assign(nn, 0.0);
    c.f.resize(nn);
    for (size_t i = 0; i < nn; ++i) c.f[i] = instantaneous_forward(mkt.discount, c.grid.times[i]);
    c.sqdt = std::sqrt(c.grid.dt);
    if (c.hybrid) {
        if (!model.leverage)
            throw ConfigError("hybrid model requires a calibrated leverage surface");
        c.vol = vol_from_leverage(*model.leverage, c.grid);
        double a = model.hw.mean_reversion, s = model.hw.rate_vol;
        c.rho = model.equity_rate_correlation;
        c.rho_c = std::sqrt(std::max(0.0, 1.0 - c.rho * c.rho));
        c.decay = std::exp(-a * c.grid.dt);
        c.svol = s * std::sqrt(-std::expm1(-2.0 * a * c.grid.dt) / (2.0 * a));
        for (size_t i = 0; i < nn; ++i) c.m[i] = hw_fitted_spread(model.hw, c.grid.times[i]);
    } else {
        c.vol = sample_dupire_grid(mkt, c.grid);
    }
    return c;
}

// One simulated path in raw state coordinates.
struct RawPath {
    const double* ln_moneyness; // y = ln(S / F(t)) per node
    const double* x;            // OU rate factor per node
    const double* ln_bank;      // ln of the money-market account per node
};

// Runs all paths and hands each antithetic unit (a pair, or a single path
// when antithetic is off) to the visitor as raw state rows. Work is split
// into fixed-size chunks of units so results do not depend on the thread
// count, and each unit draws from its own counter-derived stream so they do
// not depend on the partition either. Each worker thread operates on its own
// copy of the visitor, so visitors may keep mutable per-thread scratch; any
// shared state they reference must only be written per-unit or per-chunk.
// Visitor signature: fn(unit_index, n_paths_in_unit, const RawPath* paths)
template <class Fn>
inline void run_paths(const EngineCtx& c, const McConfig& cfg, Fn&& fn) {
    const size_t n_nodes = c.grid.times.size();
    const size_t n_steps = c.grid.n_steps;
    const bool anti = cfg.antithetic;
    const size_t unit_paths = anti ? 2 : 1;
    const size_t n_units = static_cast<size_t>(cfg.n_paths) / unit_paths;
    const size_t n_chunks = (n_units + kUnitChunk - 1) / kUnitChunk;
    RngStreams streams(cfg.seed);
    const double dt = c.grid.dt;
    std::atomic<size_t> next{0};

    auto worker = [&]() {
        std::decay_t<Fn> visit(fn);
        std::vector<double> buf(6 * n_nodes);
        double* ly[2] = {buf.data(), buf.data() + 3 * n_nodes};
        double* xs[2] = {buf.data() + n_nodes, buf.data() + 4 * n_nodes};
        double* lb[2] = {buf.data() + 2 * n_nodes, buf.data() + 5 * n_nodes};
        for (;;) {
            size_t ci = next.fetch_add(1);
            if (ci >= n_chunks) break;
            size_t u0 = ci * kUnitChunk;
            size_t u1 = std::min(u0 + kUnitChunk, n_units);
            for (size_t u = u0; u < u1; ++u) {
                PathRng rng = streams.stream(static_cast<std::uint64_t>(u));
                for (size_t p = 0; p < unit_paths; ++p) {
                    ly[p][0] = c.y0;
                    xs[p][0] = c.x0;
                    lb[p][0] = c.grid.w_rate[0];
                }
                for (size_t i = 0; i < n_steps; ++i) {
                    double zs = rng.gauss();
                    double zr = rng.gauss();
                    for (size_t p = 0; p < unit_paths; ++p) {
                        double sgn = (p == 0) ? 1.0 : -1.0;
                        double z_spot = sgn * zs;
                        double z_rate = c.rho * z_spot + c.rho_c * sgn * zr;
                        double y = ly[p][i];
                        double x = xs[p][i];
                        double sig = c.vol.vol_at(i, y);
                        double xm = x + c.m[i];
                        ly[p][i + 1] = y + xm * dt - 0.5 * sig * sig * dt + sig * c.sqdt * z_spot;
                        double x1 = c.decay * x + c.svol * z_rate;
                        xs[p][i + 1] = x1;
                        // Bank account written as curve integral plus the
                        // trapezoidal spread integral; the spread term stays
                        // exactly zero under LV.
                        lb[p][i + 1] = c.grid.w_rate[i + 1] + (lb[p][i] - c.grid.w_rate[i]) +
                                       0.5 * dt * (xm + x1 + c.m[i + 1]);
                    }
                }
                RawPath raw[2];
                for (size_t p = 0; p < unit_paths; ++p) raw[p] = RawPath{ly[p], xs[p], lb[p]};
                visit(u, unit_paths, raw);
            }
        }
    };

    size_t n_threads = std::min(static_cast<size_t>(cfg.threads), n_chunks);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Path simulation (materialised paths, for diagnostics and tests)
// ---------------------------------------------------------------------------

inline PathSet simulate_paths(const ModelSpec& model, const MarketSnapshot& mkt,
                              double horizon, const McConfig& cfg) {
    validate(mkt);
    detail::EngineCtx c = detail::make_engine_ctx(model, mkt, horizon, cfg);
    size_t n_nodes = c.grid.times.size();
    size_t n_paths = static_cast<size_t>(cfg.n_paths);
    size_t rows = c.hybrid ? 3 : 2;
    if (n_paths * n_nodes * rows > (size_t{64} << 20))
        throw ConfigError("path set too large to materialise; price without storing paths");

    PathSet ps;
    ps.times = c.grid.times;
    ps.spots.assign(n_paths, std::vector<double>(n_nodes));
    ps.money_market.assign(n_paths, std::vector<double>(n_nodes));
    if (c.hybrid) ps.short_rates.assign(n_paths, std::vector<double>(n_nodes));

    detail::run_paths(c, cfg, [&](size_t u, size_t unit_paths, const detail::RawPath* raw) {
        for (size_t p = 0; p < unit_paths; ++p) {
            size_t idx = u * unit_paths + p;
            for (size_t i = 0; i < n_nodes; ++i) {
                ps.spots[idx][i] = std::exp(raw[p].ln_moneyness[i]) * c.grid.fwd[i];
                ps.money_market[idx][i] = std::exp(raw[p].ln_bank[i]);
                if (c.hybrid)
                    ps.short_rates[idx][i] = raw[p].x[i] + c.f[i] + c.m[i];
            }
        }
    });
    return ps;
}

// ---------------------------------------------------------------------------
// Leverage calibration for the hybrid model
// ---------------------------------------------------------------------------

namespace detail {

inline double pillar_k(const VolGrid& v, size_t j) {
    return std::exp(v.lk0 + static_cast<double>(j) * v.dlk);
}

} // namespace detail

// Calibrates the hybrid leverage surface by fixed-point iteration: simulate
// under the current surface, estimate the rate/equity covariance correction
// to the Dupire variance strike by strike, update, repeat until the largest
// change is below tolerance (at most five sweeps). The calibration horizon is
// the last quoted expiry of the vol surface. With rate vol zero the
// correction vanishes identically and the surface equals the Dupire samples.
inline LeverageSurface calibrate_leverage(const MarketSnapshot& mkt, const HullWhiteParams& hw,
                                          double correlation, const McConfig& cfg) {
    validate(mkt);
    validate(hw);
    validate(cfg);
    if (!(correlation >= -1.0 && correlation <= 1.0))
        throw ValidationError("calibration: correlation must lie in [-1, 1]");

    double horizon = mkt.surface.expiries.back();
    ModelSpec model = hwlv_model(hw, correlation);

    detail::SimGrid grid = detail::make_sim_grid(mkt, horizon, cfg.steps_per_year);
    detail::VolGrid dup = detail::sample_dupire_grid(mkt, grid);
    const size_t n_nodes = grid.times.size();
    const size_t nk = dup.nk;

    LeverageSurface ls;
    ls.times = grid.times;
    ls.moneyness.resize(nk);
    for (size_t j = 0; j < nk; ++j) ls.moneyness[j] = detail::pillar_k(dup, j);
    ls.values = dup.rows;
    for (auto& row : ls.values)
        for (double& v : row) v = std::min(10.0, std::max(0.01, v));

    const double tol = 2e-3;
    const int max_sweeps = 5;
    const double min_bin_count = 50.0;
    // Convergence is measured in a path-count-weighted mean absolute change:
    // sparse tail pillars re-roll by a few vol points of sampling noise every
    // sweep, but they see a tiny fraction of the paths, so a max-norm would
    // never settle while the surface is already stable where the mass sits.

    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        ls.sweeps_used = sweep;
        model.leverage = ls;
        detail::EngineCtx c = detail::make_engine_ctx(model, mkt, horizon, cfg);

        // Accumulate per fixed-size chunk so the reduction order, and with it
        // every bit of the result, is independent of the thread count.
        const size_t unit_paths = cfg.antithetic ? 2 : 1;
        const size_t n_units = static_cast<size_t>(cfg.n_paths) / unit_paths;
        const size_t chunk = detail::kUnitChunk;
        const size_t n_chunks = (n_units + chunk - 1) / chunk;
        const size_t n_buckets = nk + 1;
        std::vector<std::vector<double>> cmass(n_chunks), cspread(n_chunks), ccount(n_chunks);
        for (size_t q = 0; q < n_chunks; ++q) {
            cmass[q].assign(n_nodes * n_buckets, 0.0);
            cspread[q].assign(n_nodes * n_buckets, 0.0);
            ccount[q].assign(n_nodes * n_buckets, 0.0);
        }

        detail::run_paths(c, cfg, [&](size_t u, size_t up, const detail::RawPath* raw) {
            size_t q = u / chunk;
            double* qm = cmass[q].data();
            double* qs = cspread[q].data();
            double* qc = ccount[q].data();
            for (size_t p = 0; p < up; ++p) {
                for (size_t i = 1; i < n_nodes; ++i) {
                    double y = raw[p].ln_moneyness[i];
                    double ub = (y - c.vol.lk0) / c.vol.dlk;
                    size_t b;
                    if (ub < 0.0)
                        b = 0;
                    else if (ub >= static_cast<double>(nk - 1))
                        b = nk; // at or above the last pillar
                    else
                        b = static_cast<size_t>(ub) + 1;
                    double m_disc = std::exp(-raw[p].ln_bank[i]);
                    size_t off = i * n_buckets + b;
                    qm[off] += m_disc;
                    qs[off] += m_disc * (raw[p].x[i] + c.m[i]);
                    qc[off] += 1.0;
                }
            }
        });

        // Reduce chunk slabs in index order, then convert bucket sums into
        // tail sums from each pillar upwards.
        std::vector<double> mass(n_nodes * n_buckets, 0.0), spread(n_nodes * n_buckets, 0.0),
            count(n_nodes * n_buckets, 0.0);
        for (size_t q = 0; q < n_chunks; ++q)
            for (size_t z = 0; z < mass.size(); ++z) {
                mass[z] += cmass[q][z];
                spread[z] += cspread[q][z];
                count[z] += ccount[q][z];
            }

        double wsum = 0.0, wtot = 0.0;
        std::vector<double> tail_mass(n_buckets + 1), tail_spread(n_buckets + 1),
            tail_count(n_buckets + 1);
        for (size_t i = 1; i < n_nodes; ++i) {
            tail_mass[n_buckets] = tail_spread[n_buckets] = tail_count[n_buckets] = 0.0;
            for (size_t b = n_buckets; b-- > 0;) {
                tail_mass[b] = tail_mass[b + 1] + mass[i * n_buckets + b];
                tail_spread[b] = tail_spread[b + 1] + spread[i * n_buckets + b];
                tail_count[b] = tail_count[b + 1] + count[i * n_buckets + b];
            }
            // tail index b corresponds to moneyness >= pillar b-1; pillar j
            // tail starts at bucket j+1.
            for (size_t j = 0; j < nk; ++j) {
                double numer = tail_spread[j + 1];
                double lev;
                double weight = 0.0;
                if (numer == 0.0) {
                    lev = dup.rows[i][j];
                } else {
                    // Density of discounted mass at the pillar from a widening
                    // central difference until it holds enough paths.
                    size_t jlo = (j == 0) ? 0 : j - 1;
                    size_t jhi = (j + 1 >= nk) ? nk - 1 : j + 1;
                    if (jlo == j) jhi = std::min(nk - 1, j + 1);
                    if (jhi == j) jlo = (j == 0) ? 0 : j - 1;
                    while (tail_count[jlo + 1] - tail_count[jhi + 1] < min_bin_count &&
                           (jlo > 0 || jhi < nk - 1)) {
                        if (jlo > 0) --jlo;
                        if (jhi < nk - 1) ++jhi;
                    }
                    double bin_mass = tail_mass[jlo + 1] - tail_mass[jhi + 1];
                    double bin_n = tail_count[jlo + 1] - tail_count[jhi + 1];
                    if (bin_n < min_bin_count || bin_mass <= 0.0) {
                        lev = dup.rows[i][j];
                    } else {
                        double width = detail::pillar_k(dup, jhi) - detail::pillar_k(dup, jlo);
                        double dens = bin_mass / width;
                        double kj = detail::pillar_k(dup, j);
                        double corr = numer / (0.5 * kj * dens);
                        double var = dup.rows[i][j] * dup.rows[i][j] - corr;
                        lev = std::sqrt(std::max(var, 1e-4));
                        weight = bin_n;
                    }
                }
                lev = std::min(10.0, std::max(0.01, lev));
                wsum += weight * std::abs(lev - ls.values[i][j]);
                wtot += weight;
                ls.values[i][j] = lev;
            }
        }

        if (wsum <= tol * wtot) {
            ls.converged = true;
            return ls;
        }
        ls.converged = false;
    }
    ls.warnings.push_back("leverage calibration did not converge within 5 sweeps");
    return ls;
}

// ---------------------------------------------------------------------------
// Pricing
// ---------------------------------------------------------------------------

namespace detail {

// Accumulates per-unit discounted payoffs into fixed-size chunk slots so the
// final reduction is deterministic for any thread count. With antithetic
// sampling the statistic is the pair mean, which is the correct basis for
// the standard error of negatively correlated draws.
struct MeanAccumulator {
    size_t chunk = kUnitChunk;
    std::vector<double> sum;
    std::vector<double> sum_sq;
    size_t n_units = 0;

    explicit MeanAccumulator(size_t units) : n_units(units) {
        size_t n_chunks = (units + chunk - 1) / chunk;
        sum.assign(n_chunks, 0.0);
        sum_sq.assign(n_chunks, 0.0);
    }
    void add(size_t unit, double unit_mean) {
        size_t q = unit / chunk;
        sum[q] += unit_mean;
        sum_sq[q] += unit_mean * unit_mean;
    }
    PriceResult finish(long long n_paths) const {
        double s = 0.0, s2 = 0.0;
        for (size_t q = 0; q < sum.size(); ++q) {
            s += sum[q];
            s2 += sum_sq[q];
        }
        double n = static_cast<double>(n_units);
        double mean = s / n;
        PriceResult r;
        r.value = mean;
        r.n_paths = n_paths;
        if (n_units > 1) {
            double var = (s2 - n * mean * mean) / (n - 1.0);
            r.std_error = std::sqrt(std::max(0.0, var) / n);
        }
        return r;
    }
};

} // namespace detail

inline PriceResult price(const Product& product, const ModelSpec& model,
                         const MarketSnapshot& mkt, const McConfig& cfg) {
    validate(product);
    validate(mkt);
    double horizon = product_horizon(product);
    detail::EngineCtx c = detail::make_engine_ctx(model, mkt, horizon, cfg);
    const size_t n_nodes = c.grid.times.size();
    const size_t last = n_nodes - 1;
    const double s_ref = product_reference_spot(product);
    const size_t unit_paths = cfg.antithetic ? 2 : 1;
    const size_t n_units = static_cast<size_t>(cfg.n_paths) / unit_paths;
    detail::MeanAccumulator acc(n_units);

    // Ratio of the simulated spot to the product reference per node.
    std::vector<double> fwd_over_ref(n_nodes);
    for (size_t i = 0; i < n_nodes; ++i) fwd_over_ref[i] = c.grid.fwd[i] / s_ref;

    if (const Autocallable* auto_p = std::get_if<Autocallable>(&product)) {
        const Autocallable& a = *auto_p;
        std::vector<size_t> obs_idx = locate_observations(c.grid.times, a.observation_dates);
        const size_t n_obs = obs_idx.size();

        // Deterministic simple fixings from the curve, used under LV.
        std::vector<double> det_rates(n_obs);
        double prev_t = 0.0, prev_df = 1.0;
        for (size_t j = 0; j < n_obs; ++j) {
            double t = a.observation_dates[j];
            double df = discount_factor(mkt.discount, t);
            det_rates[j] = (prev_df / df - 1.0) / (t - prev_t);
            prev_t = t;
            prev_df = df;
        }

        struct Scratch {
            PathOnGrid path;
            std::vector<Cashflow> flows;
        };
        Scratch base;
        base.path.times = c.grid.times;
        base.path.returns.resize(n_nodes);
        base.path.floating_rates = det_rates;

        detail::run_paths(c, cfg, [&, base](size_t u, size_t up, const detail::RawPath* raw) mutable {
            double unit_sum = 0.0;
            for (size_t p = 0; p < up; ++p) {
                for (size_t i = 0; i < n_nodes; ++i)
                    base.path.returns[i] = std::exp(raw[p].ln_moneyness[i]) * fwd_over_ref[i];
                if (c.hybrid && a.floating_leg) {
                    double pt = 0.0;
                    size_t pnode = 0;
                    for (size_t j = 0; j < n_obs; ++j) {
                        double t = c.grid.times[obs_idx[j]];
                        double r_fix = raw[p].x[pnode] + c.f[pnode] + c.m[pnode];
                        double zb = hw_discount_bond(model.hw, mkt.discount, pt, t, r_fix);
                        base.path.floating_rates[j] = (1.0 / zb - 1.0) / (t - pt);
                        pt = t;
                        pnode = obs_idx[j];
                    }
                }
                autocall_cashflows(base.path, a, base.flows);
                double pv = 0.0;
                for (const Cashflow& cf : base.flows) {
                    auto it = std::lower_bound(c.grid.times.begin(), c.grid.times.end(),
                                               cf.time - 1e-12);
                    size_t node = static_cast<size_t>(it - c.grid.times.begin());
                    pv += cf.amount * std::exp(-raw[p].ln_bank[node]);
                }
                unit_sum += pv / a.notional;
            }
            acc.add(u, unit_sum / static_cast<double>(up));
        });
        return acc.finish(cfg.n_paths);
    }

    // Terminal-payoff products: vanilla, digital, profile.
    auto terminal_price = [&](auto&& payoff) {
        detail::run_paths(c, cfg, [&](size_t u, size_t up, const detail::RawPath* raw) {
            double unit_sum = 0.0;
            for (size_t p = 0; p < up; ++p) {
                double ret = std::exp(raw[p].ln_moneyness[last]) * fwd_over_ref[last];
                unit_sum += payoff(ret) * std::exp(-raw[p].ln_bank[last]);
            }
            acc.add(u, unit_sum / static_cast<double>(up));
        });
        return acc.finish(cfg.n_paths);
    };

    if (const VanillaOption* v = std::get_if<VanillaOption>(&product))
        return terminal_price([v](double r) { return vanilla_payoff(*v, r); });
    if (const DigitalOption* d = std::get_if<DigitalOption>(&product))
        return terminal_price([d](double r) { return digital_payoff(*d, r); });
    const ProfileProduct& f = std::get<ProfileProduct>(product);
    return terminal_price([&f](double r) { return evaluate(f.profile, r); });
}

namespace detail {

inline double terminal_payoff_of(const Product& product, double ret) {
    if (const VanillaOption* v = std::get_if<VanillaOption>(&product))
        return vanilla_payoff(*v, ret);
    if (const DigitalOption* d = std::get_if<DigitalOption>(&product))
        return digital_payoff(*d, ret);
    if (const ProfileProduct* f = std::get_if<ProfileProduct>(&product))
        return evaluate(f->profile, ret);
    throw UnsupportedError("product value is not a pure terminal payoff");
}

} // namespace detail

// Conditional value of a terminal-payoff product (vanilla, digital, profile)
// per unit notional, starting the simulation at time t0 from the given spot
// level and, under the hybrid model, the given short rate (ignored under
// local vol). Discounting uses the bank account accrued from t0 onwards.
// Autocallables carry path state between observations and are rejected.
inline PriceResult price_terminal_from(const Product& product, const ModelSpec& model,
                                       const MarketSnapshot& mkt, double t0, double spot,
                                       double short_rate, const McConfig& cfg) {
    validate(product);
    validate(mkt);
    if (std::holds_alternative<Autocallable>(product))
        throw UnsupportedError("conditional pricing supports terminal payoffs only");
    if (!(spot > 0.0)) throw ValidationError("conditional pricing: spot must be > 0");
    const double horizon = product_horizon(product);
    const double s_ref = product_reference_spot(product);

    if (t0 >= horizon) {
        // At or past expiry the value is the payoff itself.
        PriceResult r;
        r.value = detail::terminal_payoff_of(product, spot / s_ref);
        r.n_paths = 0;
        return r;
    }

    detail::EngineCtx c = detail::make_engine_ctx(model, mkt, horizon, cfg, t0);
    c.y0 = std::log(spot / c.grid.fwd[0]);
    if (c.hybrid) c.x0 = short_rate - c.f[0] - c.m[0];
    const size_t last = c.grid.times.size() - 1;
    const double fwd_over_ref = c.grid.fwd[last] / s_ref;
    const double lb0 = c.grid.w_rate[0];
    const size_t unit_paths = cfg.antithetic ? 2 : 1;
    detail::MeanAccumulator acc(static_cast<size_t>(cfg.n_paths) / unit_paths);

    detail::run_paths(c, cfg, [&](size_t u, size_t up, const detail::RawPath* raw) {
        double unit_sum = 0.0;
        for (size_t p = 0; p < up; ++p) {
            double ret = std::exp(raw[p].ln_moneyness[last]) * fwd_over_ref;
            unit_sum += detail::terminal_payoff_of(product, ret) *
                        std::exp(-(raw[p].ln_bank[last] - lb0));
        }
        acc.add(u, unit_sum / static_cast<double>(up));
    });
    return acc.finish(cfg.n_paths);
}

} // namespace mrisk

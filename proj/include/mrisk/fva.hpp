#pragma once

// Model-risk quantification: five fair value adjustment methods built on the
// pricing engine, plus a consolidated report with external/embedded modes.
// Amounts are per unit notional and never negative; the desk is assumed long
// the booked product unless a sign flag says otherwise, so the adverse
// direction is the one that lowers the price.

#include <mrisk/engine.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mrisk {

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

enum class FvaMethod {
    ParameterRange,
    SensitivityMultiple,
    ModelComparison,
    CalibrationVariation,
    HedgingSimulation,
};

inline const char* to_string(FvaMethod m) {
    switch (m) {
        case FvaMethod::ParameterRange: return "parameter_range";
        case FvaMethod::SensitivityMultiple: return "sensitivity_multiple";
        case FvaMethod::ModelComparison: return "model_comparison";
        case FvaMethod::CalibrationVariation: return "calibration_variation";
        case FvaMethod::HedgingSimulation: return "hedging_simulation";
    }
    return "unknown";
}

struct FvaComponent {
    FvaMethod method{};
    double amount = 0.0; // per unit notional, >= 0
    bool embedded = false;
    std::string parameter; // driving parameter, when the method has one
    // Conservative parameter value a desk could book instead of the reserve;
    // set on methods with a single bookable parameter, consumed by embedding.
    std::optional<double> bookable_value;
    std::optional<double> booked_parameter; // set once embedded
    std::map<std::string, double> diagnostics;
    std::vector<std::string> notes;
};

inline void validate(const FvaComponent& c) {
    if (!(c.amount >= 0.0)) throw ValidationError("fva component: amount must be >= 0");
}

struct FvaReport {
    std::string as_of;
    std::vector<FvaComponent> components;
    double total = 0.0; // plain sum of external amounts, no diversification
};

struct ParameterSample {
    std::string name;
    std::vector<double> samples; // historical values, >= 2
};

// ---------------------------------------------------------------------------
// Parameter binding
// ---------------------------------------------------------------------------

namespace detail {

inline double quantile(const std::vector<double>& sorted, double p) {
    size_t n = sorted.size();
    if (n == 1) return sorted[0];
    double h = p * static_cast<double>(n - 1);
    size_t lo = std::min(n - 2, static_cast<size_t>(h));
    double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

inline MarketSnapshot shift_vols(const MarketSnapshot& mkt, double add) {
    MarketSnapshot out = mkt;
    for (auto& row : out.surface.vols)
        for (double& v : row) v = std::max(v + add, 1e-6);
    return out;
}

} // namespace detail

struct PricingSetup {
    ModelSpec model;
    MarketSnapshot market;
};

// Current value of a named pricer input. Unknown names are configuration
// errors; rate-model parameters require the hybrid model.
inline double parameter_base_value(const ModelSpec& model, const MarketSnapshot& mkt,
                                   const std::string& name) {
    const bool hybrid = model.kind == ModelKind::HybridHwLv;
    if (name == "spot") return mkt.equity.spot;
    if (name == "dividend_yield") return -mkt.equity.carry_curve.zero_rates.front();
    if (name == "vol_shift") return 0.0;
    if (name == "equity_rate_correlation" || name == "rate_vol" || name == "mean_reversion") {
        if (!hybrid)
            throw UnsupportedError("parameter '" + name +
                                   "' requires a model with a stochastic rate factor");
        if (name == "equity_rate_correlation") return model.equity_rate_correlation;
        if (name == "rate_vol") return model.hw.rate_vol;
        return model.hw.mean_reversion;
    }
    throw ConfigError("unknown pricing parameter: " + name);
}

// Returns the model/market pair with the named parameter set to the value.
// Setting a parameter to its current value is an exact no-op. Local vol and
// leverage live in forward-moneyness space, so spot and dividend moves reuse
// the calibrated leverage; vol and rate-model moves refit it (same seed).
inline PricingSetup apply_parameter(const ModelSpec& model, const MarketSnapshot& mkt,
                                    const std::string& name, double value,
                                    const McConfig& cfg) {
    double base = parameter_base_value(model, mkt, name);
    PricingSetup s{model, mkt};
    if (value == base) return s;
    if (name == "spot") {
        if (!(value > 0.0)) throw ValidationError("parameter spot must be > 0");
        s.market.equity.spot = value;
        return s;
    }
    if (name == "dividend_yield") {
        for (double& z : s.market.equity.carry_curve.zero_rates) z = -value;
        return s;
    }
    const bool hybrid = model.kind == ModelKind::HybridHwLv;
    if (name == "vol_shift") {
        s.market = detail::shift_vols(mkt, value);
        if (hybrid)
            s.model.leverage = calibrate_leverage(s.market, s.model.hw,
                                                  s.model.equity_rate_correlation, cfg);
        return s;
    }
    if (name == "equity_rate_correlation") {
        s.model.equity_rate_correlation = value;
        s.model.leverage = calibrate_leverage(mkt, s.model.hw, value, cfg);
        return s;
    }
    if (name == "rate_vol") {
        if (!(value >= 0.0)) throw ValidationError("parameter rate_vol must be >= 0");
        s.model.hw.rate_vol = value;
        s.model.leverage =
            calibrate_leverage(mkt, s.model.hw, s.model.equity_rate_correlation, cfg);
        return s;
    }
    // mean_reversion: base lookup above already rejected anything else.
    if (!(value > 0.0)) throw ValidationError("parameter mean_reversion must be > 0");
    s.model.hw.mean_reversion = value;
    s.model.leverage = calibrate_leverage(mkt, s.model.hw, s.model.equity_rate_correlation, cfg);
    return s;
}

// ---------------------------------------------------------------------------
// Method 1: historical parameter range
// ---------------------------------------------------------------------------

inline FvaComponent fva_parameter_range(const Product& product, const ModelSpec& model,
                                        const MarketSnapshot& mkt, const ParameterSample& param,
                                        double p_lo, double p_hi, const McConfig& cfg,
                                        bool desk_long = true) {
    if (!(p_lo >= 0.0 && p_lo < p_hi && p_hi <= 1.0))
        throw ValidationError("parameter range: need 0 <= p_lo < p_hi <= 1");
    if (param.samples.size() < 2)
        throw ValidationError("parameter range: need at least 2 samples");
    for (double v : param.samples)
        if (!std::isfinite(v)) throw ValidationError("parameter range: samples must be finite");

    double base = parameter_base_value(model, mkt, param.name);
    std::vector<double> sorted = param.samples;
    std::sort(sorted.begin(), sorted.end());
    double q_lo = detail::quantile(sorted, p_lo);
    double q_hi = detail::quantile(sorted, p_hi);

    PriceResult p0 = price(product, model, mkt, cfg);
    PricingSetup lo = apply_parameter(model, mkt, param.name, q_lo, cfg);
    PricingSetup hi = apply_parameter(model, mkt, param.name, q_hi, cfg);
    PriceResult pl = price(product, lo.model, lo.market, cfg);
    PriceResult ph = price(product, hi.model, hi.market, cfg);

    auto adverse = [&](double bumped) { return desk_long ? p0.value - bumped : bumped - p0.value; };
    FvaComponent c;
    c.method = FvaMethod::ParameterRange;
    c.parameter = param.name;
    c.amount = std::max(0.0, std::max(adverse(pl.value), adverse(ph.value)));
    bool lo_worse = desk_long ? (pl.value <= ph.value) : (pl.value >= ph.value);
    c.bookable_value = lo_worse ? q_lo : q_hi;
    c.diagnostics = {
        {"p_lo", p_lo},
        {"p_hi", p_hi},
        {"q_lo", q_lo},
        {"q_hi", q_hi},
        {"base_value", base},
        {"price_base", p0.value},
        {"price_base_se", p0.std_error},
        {"price_lo", pl.value},
        {"price_lo_se", pl.std_error},
        {"price_hi", ph.value},
        {"price_hi_se", ph.std_error},
    };
    return c;
}

// ---------------------------------------------------------------------------
// Method 2: multiple of a sensitivity
// ---------------------------------------------------------------------------

inline FvaComponent fva_sensitivity_multiple(const Product& product, const ModelSpec& model,
                                             const MarketSnapshot& mkt,
                                             const std::string& param_name, double multiple,
                                             double bump, const McConfig& cfg) {
    if (!(multiple >= 0.0)) throw ValidationError("sensitivity multiple must be >= 0");
    if (!(bump > 0.0)) throw ValidationError("sensitivity bump must be > 0");

    double base = parameter_base_value(model, mkt, param_name);
    double up_v = base + bump;
    double dn_v = base - bump;
    if (param_name == "equity_rate_correlation") {
        up_v = std::min(1.0, up_v);
        dn_v = std::max(-1.0, dn_v);
    }
    if (param_name == "rate_vol") dn_v = std::max(0.0, dn_v);
    double width = up_v - dn_v;

    PricingSetup up = apply_parameter(model, mkt, param_name, up_v, cfg);
    PricingSetup dn = apply_parameter(model, mkt, param_name, dn_v, cfg);
    PriceResult pu = price(product, up.model, up.market, cfg);
    PriceResult pd = price(product, dn.model, dn.market, cfg);
    double sens = (pu.value - pd.value) / width;
    double sens_se =
        std::sqrt(pu.std_error * pu.std_error + pd.std_error * pd.std_error) / width;

    FvaComponent c;
    c.method = FvaMethod::SensitivityMultiple;
    c.parameter = param_name;
    c.amount = multiple * std::abs(sens);
    // Conservative mark: the parameter moved adversely by the full multiple,
    // clamped to the parameter's domain. Repricing at this mark moves the
    // value by the covered amount to first order, so embedding the component
    // and booking the shifted mark are consistent.
    double adverse_dir = (sens >= 0.0) ? -1.0 : 1.0;
    double booked = base + adverse_dir * multiple;
    if (param_name == "equity_rate_correlation") booked = std::clamp(booked, -1.0, 1.0);
    if (param_name == "rate_vol") booked = std::max(0.0, booked);
    c.bookable_value = booked;
    c.diagnostics = {
        {"base_value", base},  {"bump", bump},
        {"multiple", multiple}, {"sensitivity", sens},
        {"sensitivity_std_error", sens_se},
        {"price_up", pu.value}, {"price_down", pd.value},
    };
    return c;
}

// ---------------------------------------------------------------------------
// Method 3: model comparison grid
// ---------------------------------------------------------------------------

struct ComparisonGrid {
    std::vector<double> tenors;       // rows
    std::vector<double> correlations; // columns
    std::vector<std::vector<double>> diff;      // alternative - baseline, per unit notional
    std::vector<std::vector<double>> std_error; // combined per cell
    std::vector<std::string> warnings;
};

struct ModelComparisonResult {
    ComparisonGrid grid;
    FvaComponent component;
};

namespace detail {

inline Product product_with_tenor(const Product& product, double tenor) {
    if (!(tenor > 0.0)) throw ValidationError("model comparison: tenors must be > 0");
    Product out = product;
    if (Autocallable* a = std::get_if<Autocallable>(&out)) {
        double n = std::round(tenor);
        if (std::abs(tenor - n) > 1e-9 || n < 1.0)
            throw ConfigError("autocallable tenors must be whole years");
        size_t ny = static_cast<size_t>(n);
        if (a->forward_start && ny < 2)
            throw ConfigError("forward-start autocallable needs at least 2 observations");
        a->observation_dates.resize(ny);
        for (size_t i = 0; i < ny; ++i) a->observation_dates[i] = static_cast<double>(i + 1);
    } else if (VanillaOption* v = std::get_if<VanillaOption>(&out)) {
        v->expiry = tenor;
    } else if (DigitalOption* d = std::get_if<DigitalOption>(&out)) {
        d->expiry = tenor;
    } else {
        std::get<ProfileProduct>(out).expiry = tenor;
    }
    return out;
}

// Model resolved at one correlation; non-hybrid models ignore it. Hybrid
// leverage is refit per correlation and shared across tenors.
inline ModelSpec model_at_correlation(const ModelSpec& model, const MarketSnapshot& mkt,
                                      double corr, const McConfig& cfg,
                                      std::vector<std::string>& warnings,
                                      const char* tag) {
    if (model.kind != ModelKind::HybridHwLv) return model;
    ModelSpec out = model;
    out.equity_rate_correlation = corr;
    out.leverage = calibrate_leverage(mkt, model.hw, corr, cfg);
    if (!out.leverage->converged)
        warnings.push_back(std::string(tag) + " leverage calibration did not converge at correlation " +
                           std::to_string(corr));
    return out;
}

} // namespace detail

inline ModelComparisonResult fva_model_comparison(const Product& product,
                                                  const MarketSnapshot& mkt,
                                                  const ModelSpec& baseline,
                                                  const ModelSpec& alternative,
                                                  const std::vector<double>& tenors,
                                                  const std::vector<double>& correlations,
                                                  const McConfig& cfg, bool desk_long = true) {
    if (tenors.empty() || correlations.empty())
        throw ValidationError("model comparison: need at least one tenor and one correlation");

    ModelComparisonResult out;
    out.grid.tenors = tenors;
    out.grid.correlations = correlations;
    out.grid.diff.assign(tenors.size(), std::vector<double>(correlations.size(), 0.0));
    out.grid.std_error.assign(tenors.size(), std::vector<double>(correlations.size(), 0.0));

    // Correlation-independent models price once per tenor.
    std::vector<std::optional<PriceResult>> base_cache(tenors.size()), alt_cache(tenors.size());
    auto cell_price = [&](const ModelSpec& m, std::vector<std::optional<PriceResult>>& cache,
                          size_t ti, const Product& p) -> PriceResult {
        if (m.kind != ModelKind::HybridHwLv && cache[ti]) return *cache[ti];
        PriceResult r = price(p, m, mkt, cfg);
        if (m.kind != ModelKind::HybridHwLv) cache[ti] = r;
        return r;
    };

    for (size_t ci = 0; ci < correlations.size(); ++ci) {
        double corr = correlations[ci];
        ModelSpec base_c = detail::model_at_correlation(baseline, mkt, corr, cfg,
                                                        out.grid.warnings, "baseline");
        ModelSpec alt_c = detail::model_at_correlation(alternative, mkt, corr, cfg,
                                                       out.grid.warnings, "alternative");
        for (size_t ti = 0; ti < tenors.size(); ++ti) {
            Product p = detail::product_with_tenor(product, tenors[ti]);
            PriceResult pb = cell_price(base_c, base_cache, ti, p);
            PriceResult pa = cell_price(alt_c, alt_cache, ti, p);
            out.grid.diff[ti][ci] = pa.value - pb.value;
            out.grid.std_error[ti][ci] = std::sqrt(pa.std_error * pa.std_error +
                                                   pb.std_error * pb.std_error);
        }
    }

    // Component booked at the snapshot's marked correlation and the product's
    // own tenor, which need not be grid cells.
    double marked = mkt.equity_rate_correlation;
    ModelSpec base_m =
        detail::model_at_correlation(baseline, mkt, marked, cfg, out.grid.warnings, "baseline");
    ModelSpec alt_m = detail::model_at_correlation(alternative, mkt, marked, cfg,
                                                   out.grid.warnings, "alternative");
    PriceResult pb = price(product, base_m, mkt, cfg);
    PriceResult pa = price(product, alt_m, mkt, cfg);

    FvaComponent c;
    c.method = FvaMethod::ModelComparison;
    c.amount = std::max(0.0, desk_long ? pb.value - pa.value : pa.value - pb.value);
    c.diagnostics = {
        {"marked_correlation", marked},
        {"tenor", product_horizon(product)},
        {"price_base", pb.value},
        {"price_base_se", pb.std_error},
        {"price_alt", pa.value},
        {"price_alt_se", pa.std_error},
    };
    c.notes = out.grid.warnings;
    out.component = c;
    return out;
}

// ---------------------------------------------------------------------------
// Method 4: calibration variation
// ---------------------------------------------------------------------------

struct CalibrationVariant {
    std::string label;
    std::optional<MarketSnapshot> market;              // full market override
    std::vector<std::pair<std::string, double>> params; // or named parameter sets
};

inline FvaComponent fva_calibration_variation(const Product& product, const ModelSpec& model,
                                              const MarketSnapshot& mkt,
                                              const std::vector<CalibrationVariant>& variants,
                                              const McConfig& cfg) {
    if (variants.size() < 2)
        throw ValidationError("calibration variation: need at least 2 variants");

    FvaComponent c;
    c.method = FvaMethod::CalibrationVariation;

    std::vector<double> prices;
    prices.reserve(variants.size());
    bool single_param = true;
    std::string shared_name;
    std::vector<double> shared_values;
    for (size_t i = 0; i < variants.size(); ++i) {
        const CalibrationVariant& var = variants[i];
        PricingSetup s{model, mkt};
        if (var.market) {
            validate(*var.market);
            s.market = *var.market;
            if (model.kind == ModelKind::HybridHwLv)
                s.model.leverage = calibrate_leverage(s.market, model.hw,
                                                      model.equity_rate_correlation, cfg);
            single_param = false;
        } else {
            if (var.params.empty())
                throw ValidationError("calibration variant needs a market or parameters");
            for (const auto& [name, value] : var.params)
                s = apply_parameter(s.model, s.market, name, value, cfg);
            if (var.params.size() == 1) {
                if (shared_name.empty()) shared_name = var.params[0].first;
                if (var.params[0].first == shared_name) shared_values.push_back(var.params[0].second);
                else single_param = false;
            } else {
                single_param = false;
            }
        }
        PriceResult r = price(product, s.model, s.market, cfg);
        prices.push_back(r.value);
        c.diagnostics["price_" + std::to_string(i)] = r.value;
        c.diagnostics["price_" + std::to_string(i) + "_se"] = r.std_error;
        c.notes.push_back("variant " + std::to_string(i) + ": " +
                          (var.label.empty() ? "(unlabelled)" : var.label));
    }

    auto [mn, mx] = std::minmax_element(prices.begin(), prices.end());
    c.amount = *mx - *mn;
    c.diagnostics["price_min"] = *mn;
    c.diagnostics["price_max"] = *mx;
    if (single_param && shared_values.size() == variants.size()) {
        c.parameter = shared_name;
        c.bookable_value = shared_values[static_cast<size_t>(mn - prices.begin())];
    }
    return c;
}

// ---------------------------------------------------------------------------
// Method 5: hedging simulation
// ---------------------------------------------------------------------------

struct HedgeConfig {
    bool rebalance_each_step = true; // false: hedge set at inception only
    double kappa = 1.0;              // weight of the loss-uncertainty term
    long long value_paths = 2000;    // paths per hedge-model valuation
    int value_steps_per_year = 12;   // time steps for hedge-model valuations
    int spot_grid = 25;              // spot nodes of the per-date delta grid
};

inline void validate(const HedgeConfig& h) {
    if (!(h.kappa >= 0.0)) throw ValidationError("hedging: kappa must be >= 0");
    if (h.value_paths < 2) throw ValidationError("hedging: value_paths must be >= 2");
    if (h.value_steps_per_year < 1)
        throw ValidationError("hedging: value steps per year must be >= 1");
    if (h.spot_grid < 3) throw ValidationError("hedging: spot grid needs >= 3 nodes");
}

struct HedgeResult {
    FvaComponent component;
    std::vector<double> pnl; // per world path, present value per unit notional
};

inline HedgeResult fva_hedging_simulation(const Product& product, const ModelSpec& hedge_model,
                                          const ModelSpec& realized_model,
                                          const MarketSnapshot& mkt, const HedgeConfig& hc,
                                          const McConfig& cfg) {
    validate(product);
    validate(mkt);
    validate(hc);
    if (std::holds_alternative<Autocallable>(product))
        throw UnsupportedError("hedging simulation supports terminal-payoff products only");
    if (hedge_model.kind == ModelKind::HybridHwLv)
        throw UnsupportedError(
            "hedging simulation computes deltas under a local-vol hedge model; "
            "a stochastic-rate hedge model would need a rate-state hedge dimension");

    const double horizon = product_horizon(product);
    const double s_ref = product_reference_spot(product);

    FvaComponent c;
    c.method = FvaMethod::HedgingSimulation;
    if (cfg.n_paths > 10000)
        c.notes.push_back("hedging simulation above 10000 world paths is computationally heavy");

    PathSet world = simulate_paths(realized_model, mkt, horizon, cfg);
    const size_t n_nodes = world.times.size();
    const size_t n_paths = world.spots.size();
    if (n_paths < 2) throw ValidationError("hedging: need at least 2 world paths");

    // Hedge-model valuations share one derived seed so every date and spot
    // node reuses the same draws (common random numbers).
    McConfig vcfg = cfg;
    vcfg.n_paths = hc.value_paths;
    vcfg.steps_per_year = hc.value_steps_per_year;
    vcfg.seed = cfg.seed ^ 0x9E3779B97F4A7C15ULL;
    vcfg.antithetic = true;

    // The premium the desk sells at; extra paths since its error shifts every
    // path's P&L in parallel.
    McConfig pcfg = vcfg;
    pcfg.n_paths = hc.value_paths * 8;
    PriceResult premium =
        price_terminal_from(product, hedge_model, mkt, 0.0, mkt.equity.spot, 0.0, pcfg);

    std::vector<double> fwd(n_nodes), div_g(n_nodes - 1);
    {
        std::vector<double> w_c(n_nodes);
        for (size_t i = 0; i < n_nodes; ++i) {
            fwd[i] = forward_price(mkt.equity, mkt.discount, world.times[i]);
            w_c[i] = yield_integral(mkt.equity.carry_curve, world.times[i]);
        }
        // Dividend growth of a reinvested share position over each step.
        for (size_t i = 0; i + 1 < n_nodes; ++i) div_g[i] = std::exp(w_c[i] - w_c[i + 1]);
    }

    // Hedge-model delta for every path at one date, from a value grid in
    // log-moneyness differenced across adjacent nodes.
    std::vector<double> grid_l, grid_v, grid_d;
    auto deltas_at = [&](size_t k, std::vector<double>& out) {
        double t = world.times[k];
        double f = fwd[k];
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (size_t p = 0; p < n_paths; ++p) {
            double l = std::log(world.spots[p][k] / f);
            lo = std::min(lo, l);
            hi = std::max(hi, l);
        }
        if (hi - lo < 0.04) {
            double mid = 0.5 * (hi + lo);
            lo = mid - 0.02;
            hi = mid + 0.02;
        }
        size_t ns = static_cast<size_t>(hc.spot_grid);
        double dl = (hi - lo) / static_cast<double>(ns - 1);
        grid_l.resize(ns);
        grid_v.resize(ns);
        grid_d.resize(ns);
        for (size_t j = 0; j < ns; ++j) {
            grid_l[j] = lo + static_cast<double>(j) * dl;
            grid_v[j] =
                price_terminal_from(product, hedge_model, mkt, t, f * std::exp(grid_l[j]), 0.0, vcfg)
                    .value;
        }
        for (size_t j = 0; j < ns; ++j) {
            size_t ja = (j == 0) ? 0 : j - 1;
            size_t jb = (j + 1 == ns) ? j : j + 1;
            grid_d[j] = (grid_v[jb] - grid_v[ja]) / (f * (std::exp(grid_l[jb]) - std::exp(grid_l[ja])));
        }
        out.resize(n_paths);
        for (size_t p = 0; p < n_paths; ++p) {
            double u = (std::log(world.spots[p][k] / f) - lo) / dl;
            if (u <= 0.0) {
                out[p] = grid_d.front();
            } else if (u >= static_cast<double>(ns - 1)) {
                out[p] = grid_d.back();
            } else {
                size_t j = static_cast<size_t>(u);
                double w = u - static_cast<double>(j);
                out[p] = grid_d[j] + w * (grid_d[j + 1] - grid_d[j]);
            }
        }
    };

    // Self-financing rollout: short the product at the premium, hold "shares"
    // of the underlying with dividends reinvested, cash in the bank account.
    std::vector<double> cash(n_paths, premium.value), shares(n_paths, 0.0), d;
    size_t rebalances = 0;
    for (size_t k = 0; k + 1 < n_nodes; ++k) {
        if (k == 0 || hc.rebalance_each_step) {
            deltas_at(k, d);
            ++rebalances;
            for (size_t p = 0; p < n_paths; ++p) {
                cash[p] += (shares[p] - d[p]) * world.spots[p][k];
                shares[p] = d[p];
            }
        }
        for (size_t p = 0; p < n_paths; ++p) {
            cash[p] *= world.money_market[p][k + 1] / world.money_market[p][k];
            shares[p] *= div_g[k];
        }
    }

    HedgeResult res;
    res.pnl.resize(n_paths);
    const size_t last = n_nodes - 1;
    double mean = 0.0;
    for (size_t p = 0; p < n_paths; ++p) {
        double payoff = detail::terminal_payoff_of(product, world.spots[p][last] / s_ref);
        double wealth = cash[p] + shares[p] * world.spots[p][last] - payoff;
        res.pnl[p] = wealth / world.money_market[p][last];
        mean += res.pnl[p];
    }
    mean /= static_cast<double>(n_paths);
    double var = 0.0;
    for (double v : res.pnl) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n_paths - 1);
    double se = std::sqrt(var / static_cast<double>(n_paths));

    std::vector<double> loss(res.pnl.size());
    for (size_t p = 0; p < n_paths; ++p) loss[p] = -res.pnl[p];
    std::sort(loss.begin(), loss.end());
    double mean_loss = -mean;
    double p95_loss = detail::quantile(loss, 0.95);

    c.amount = std::max(0.0, std::max(0.0, mean_loss) + hc.kappa * (p95_loss - mean_loss));
    c.diagnostics = {
        {"mean_pnl", mean},
        {"pnl_std_error", se},
        {"premium", premium.value},
        {"premium_std_error", premium.std_error},
        {"mean_loss", mean_loss},
        {"p95_loss", p95_loss},
        {"kappa", hc.kappa},
        {"rebalances", static_cast<double>(rebalances)},
        {"world_paths", static_cast<double>(n_paths)},
    };
    res.component = c;
    return res;
}

// ---------------------------------------------------------------------------
// Report assembly and rendering
// ---------------------------------------------------------------------------

// Builds the consolidated report. Components stay external unless overridden;
// embedding zeroes the external amount and books the conservative parameter
// instead, keeping the covered amount visible in diagnostics. Only methods
// with a single bookable parameter can embed.
inline FvaReport build_report(std::vector<FvaComponent> components,
                              const std::vector<std::pair<size_t, bool>>& mode_overrides = {},
                              const std::string& as_of = "") {
    for (const auto& [idx, embedded] : mode_overrides) {
        if (idx >= components.size())
            throw ValidationError("report: mode override index out of range");
        FvaComponent& c = components[idx];
        c.embedded = embedded;
        if (!embedded) continue;
        if (c.method == FvaMethod::ModelComparison || c.method == FvaMethod::HedgingSimulation ||
            !c.bookable_value)
            throw UnsupportedError(std::string("embedded mode needs a single bookable parameter; ") +
                                   to_string(c.method) + " has none");
        c.diagnostics["covered_amount"] = c.amount;
        c.booked_parameter = c.bookable_value;
        c.amount = 0.0;
    }
    FvaReport rep;
    rep.as_of = as_of;
    double total = 0.0;
    for (const FvaComponent& c : components) {
        validate(c);
        total += c.amount;
    }
    rep.components = std::move(components);
    rep.total = total;
    return rep;
}

inline nlohmann::json component_to_json(const FvaComponent& c) {
    nlohmann::json cj;
    cj["method"] = to_string(c.method);
    cj["mode"] = c.embedded ? "embedded" : "external";
    cj["amount"] = c.amount;
    if (!c.parameter.empty()) cj["parameter"] = c.parameter;
    if (c.booked_parameter) cj["booked_parameter"] = *c.booked_parameter;
    cj["diagnostics"] = c.diagnostics;
    if (!c.notes.empty()) cj["notes"] = c.notes;
    return cj;
}

inline nlohmann::json report_to_json(const FvaReport& rep) {
    nlohmann::json j;
    j["as_of"] = rep.as_of;
    j["total"] = rep.total;
    j["components"] = nlohmann::json::array();
    for (const FvaComponent& c : rep.components) j["components"].push_back(component_to_json(c));
    return j;
}

// Markdown rendering with every number serialised exactly as in the JSON
// report, so the two artifacts cannot drift apart.
inline std::string report_to_markdown(const FvaReport& rep) {
    auto num = [](double v) { return nlohmann::json(v).dump(); };
    std::ostringstream os;
    os << "# Fair value adjustment report\n\n";
    if (!rep.as_of.empty()) os << "As of: " << rep.as_of << "\n\n";
    os << "| component | method | mode | parameter | amount | booked parameter |\n";
    os << "|-----------|--------|------|-----------|--------|------------------|\n";
    for (size_t i = 0; i < rep.components.size(); ++i) {
        const FvaComponent& c = rep.components[i];
        os << "| " << i << " | " << to_string(c.method) << " | "
           << (c.embedded ? "embedded" : "external") << " | "
           << (c.parameter.empty() ? "-" : c.parameter) << " | " << num(c.amount) << " | "
           << (c.booked_parameter ? num(*c.booked_parameter) : std::string("-")) << " |\n";
    }
    os << "| total |  |  |  | " << num(rep.total) << " |  |\n";
    for (size_t i = 0; i < rep.components.size(); ++i) {
        const FvaComponent& c = rep.components[i];
        os << "\n## component " << i << " (" << to_string(c.method) << ")\n\n";
        for (const auto& [key, value] : c.diagnostics)
            os << "- " << key << ": " << num(value) << "\n";
        for (const std::string& note : c.notes) os << "- note: " << note << "\n";
    }
    return os.str();
}

// CSV of the comparison grid: rows are tenors, columns correlations. Values
// are signed alternative-minus-baseline differences per unit notional, or in
// basis points of notional when requested.
inline std::string grid_to_csv(const ComparisonGrid& g, bool in_bp = false) {
    auto num = [](double v) { return nlohmann::json(v).dump(); };
    std::ostringstream os;
    os << "tenor_years";
    for (double corr : g.correlations) os << ",corr_" << num(corr);
    os << "\n";
    double scale = in_bp ? 1e4 : 1.0;
    for (size_t ti = 0; ti < g.tenors.size(); ++ti) {
        os << num(g.tenors[ti]);
        for (size_t ci = 0; ci < g.correlations.size(); ++ci)
            os << "," << num(g.diff[ti][ci] * scale);
        os << "\n";
    }
    return os.str();
}

} // namespace mrisk

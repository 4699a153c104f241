#pragma once
// Run configuration for the command-line tool: product JSON I/O, model
// section parsing, and the top-level config file with flag overrides.

#include <mrisk/engine.hpp>
#include <mrisk/errors.hpp>
#include <mrisk/greeks.hpp>
#include <mrisk/market_data.hpp>
#include <mrisk/products.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mrisk {

// ---------------------------------------------------------------------------
// JSON file helpers
// ---------------------------------------------------------------------------

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << j.dump(2) << '\n';
}

// Resolve a (possibly relative) input path against the directory `base_dir`.
inline std::string resolve_path(const std::string& base_dir, const std::string& path) {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

// ---------------------------------------------------------------------------
// Product JSON
// ---------------------------------------------------------------------------

inline Product product_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("product: expected a JSON object");
    const std::string type = j.value("type", std::string());
    Product p;
    try {
        if (type == "autocallable") {
            Autocallable a;
            a.notional = j.value("notional", a.notional);
            a.reference_spot = j.value("reference_spot", a.reference_spot);
            a.observation_dates = j.value("observation_dates", a.observation_dates);
            a.autocall_barrier = j.value("autocall_barrier", a.autocall_barrier);
            a.coupon_step = j.value("coupon_step", a.coupon_step);
            a.redemption = j.value("redemption", a.redemption);
            a.short_put_strike = j.value("short_put_strike", a.short_put_strike);
            a.digital_strike = j.value("digital_strike", a.digital_strike);
            a.digital_leverage = j.value("digital_leverage", a.digital_leverage);
            a.floating_leg = j.value("floating_leg", a.floating_leg);
            a.floating_spread = j.value("floating_spread", a.floating_spread);
            a.forward_start = j.value("forward_start", a.forward_start);
            p = a;
        } else if (type == "vanilla_option") {
            VanillaOption v;
            v.reference_spot = j.value("reference_spot", v.reference_spot);
            v.strike = j.value("strike", v.strike);
            v.expiry = j.value("expiry", v.expiry);
            v.is_put = j.value("put", v.is_put);
            p = v;
        } else if (type == "digital_option") {
            DigitalOption d;
            d.reference_spot = j.value("reference_spot", d.reference_spot);
            d.strike = j.value("strike", d.strike);
            d.expiry = j.value("expiry", d.expiry);
            d.leverage = j.value("leverage", d.leverage);
            d.is_put = j.value("put", d.is_put);
            p = d;
        } else if (type == "profile") {
            ProfileProduct pr;
            pr.reference_spot = j.value("reference_spot", pr.reference_spot);
            pr.expiry = j.value("expiry", pr.expiry);
            pr.profile.x = j.value("x", pr.profile.x);
            pr.profile.y = j.value("y", pr.profile.y);
            p = pr;
        } else {
            throw ConfigError("product: unknown type '" + type + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("product: malformed field: ") + e.what());
    }
    validate(p);
    return p;
}

inline nlohmann::json product_to_json(const Product& p) {
    nlohmann::json j;
    if (const auto* a = std::get_if<Autocallable>(&p)) {
        j["type"] = "autocallable";
        j["notional"] = a->notional;
        j["reference_spot"] = a->reference_spot;
        j["observation_dates"] = a->observation_dates;
        j["autocall_barrier"] = a->autocall_barrier;
        j["coupon_step"] = a->coupon_step;
        j["redemption"] = a->redemption;
        j["short_put_strike"] = a->short_put_strike;
        j["digital_strike"] = a->digital_strike;
        j["digital_leverage"] = a->digital_leverage;
        j["floating_leg"] = a->floating_leg;
        j["floating_spread"] = a->floating_spread;
        j["forward_start"] = a->forward_start;
    } else if (const auto* v = std::get_if<VanillaOption>(&p)) {
        j["type"] = "vanilla_option";
        j["reference_spot"] = v->reference_spot;
        j["strike"] = v->strike;
        j["expiry"] = v->expiry;
        j["put"] = v->is_put;
    } else if (const auto* d = std::get_if<DigitalOption>(&p)) {
        j["type"] = "digital_option";
        j["reference_spot"] = d->reference_spot;
        j["strike"] = d->strike;
        j["expiry"] = d->expiry;
        j["leverage"] = d->leverage;
        j["put"] = d->is_put;
    } else {
        const auto& pr = std::get<ProfileProduct>(p);
        j["type"] = "profile";
        j["reference_spot"] = pr.reference_spot;
        j["expiry"] = pr.expiry;
        j["x"] = pr.profile.x;
        j["y"] = pr.profile.y;
    }
    return j;
}

inline Product load_product(const std::string& path) {
    return product_from_json(read_json_file(path));
}

inline void write_product(const Product& p, const std::string& path) {
    write_json_file(product_to_json(p), path);
}

// ---------------------------------------------------------------------------
// Model section
// ---------------------------------------------------------------------------

struct ModelSection {
    std::string kind = "lv"; // "lv" | "hwlv"
    HullWhiteParams hw{};
    std::optional<double> correlation; // default: the snapshot's marked correlation
    std::string leverage_mode = "calibrate";
};

inline ModelSection model_section_from_json(const nlohmann::json& j) {
    ModelSection m;
    if (j.is_null()) return m;
    if (!j.is_object()) throw ConfigError("model: expected a JSON object");
    try {
        m.kind = j.value("kind", m.kind);
        if (j.contains("hull_white")) {
            const nlohmann::json& h = j.at("hull_white");
            m.hw.mean_reversion = h.value("mean_reversion", m.hw.mean_reversion);
            m.hw.rate_vol = h.value("rate_vol", m.hw.rate_vol);
        }
        if (j.contains("equity_rate_correlation"))
            m.correlation = j.at("equity_rate_correlation").get<double>();
        m.leverage_mode = j.value("leverage_mode", m.leverage_mode);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model: malformed field: ") + e.what());
    }
    if (m.kind != "lv" && m.kind != "hwlv")
        throw ConfigError("model: kind must be \"lv\" or \"hwlv\", got \"" + m.kind + "\"");
    if (m.leverage_mode != "calibrate")
        throw ConfigError("model: leverage_mode \"" + m.leverage_mode +
                          "\" is not supported (only \"calibrate\")");
    return m;
}

inline nlohmann::json model_section_to_json(const ModelSection& m) {
    nlohmann::json j;
    j["kind"] = m.kind;
    j["hull_white"] = {{"mean_reversion", m.hw.mean_reversion}, {"rate_vol", m.hw.rate_vol}};
    if (m.correlation) j["equity_rate_correlation"] = *m.correlation;
    j["leverage_mode"] = m.leverage_mode;
    return j;
}

// Model described by a section, without the effective-vol surface. Routines
// that calibrate per scenario (e.g. correlation grids) start from this.
inline ModelSpec model_shell(const ModelSection& sec, const MarketSnapshot& mkt) {
    if (sec.kind == "lv") return lv_model();
    const double corr = sec.correlation ? *sec.correlation : mkt.equity_rate_correlation;
    return hwlv_model(sec.hw, corr);
}

// Materialize the model described by a section against a snapshot. Hybrid
// models get their effective-vol surface calibrated here; the result can be
// handed straight to the pricer.
inline ModelSpec build_model(const ModelSection& sec, const MarketSnapshot& mkt,
                             const McConfig& cfg, std::vector<std::string>* warnings = nullptr) {
    ModelSpec model = model_shell(sec, mkt);
    if (model.kind == ModelKind::LocalVol) return model;
    LeverageSurface lev = calibrate_leverage(mkt, sec.hw, model.equity_rate_correlation, cfg);
    if (warnings) {
        for (const std::string& w : lev.warnings) warnings->push_back(w);
        if (!lev.converged)
            warnings->push_back("effective-vol calibration did not converge within sweep budget");
    }
    model.leverage = std::move(lev);
    return model;
}

// ---------------------------------------------------------------------------
// Run config
// ---------------------------------------------------------------------------

struct GovernanceSection {
    std::string store;          // inventory JSON path; empty disables the gate
    std::string product_family; // product record id to check the mapping for
    std::string model_id;       // model record id to check the mapping for
};

struct RunConfig {
    std::string config_dir; // directory of the config file, for later resolution
    std::string snapshot_path;
    std::string product_path;
    ModelSection model;
    McConfig mc;
    bool seed_set = false; // seeds are never defaulted from the clock
    nlohmann::json fva = nlohmann::json::object();    // per-method knobs, parsed by cmd_fva
    nlohmann::json greeks = nlohmann::json::object(); // bump overrides for cmd_price
    bool greeks_requested = false;
    GovernanceSection governance;
    std::string output_dir = ".";
    bool override_governance = false;
};

inline GreeksBumps greeks_bumps_from_json(const nlohmann::json& j) {
    GreeksBumps b;
    if (j.is_null()) return b;
    if (!j.is_object()) throw ConfigError("greeks: expected a JSON object");
    try {
        b.spot_rel = j.value("spot_rel", b.spot_rel);
        b.vol_abs = j.value("vol_abs", b.vol_abs);
        b.correlation_abs = j.value("correlation_abs", b.correlation_abs);
        if (j.contains("correlation")) b.correlation = j.at("correlation").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("greeks: malformed field: ") + e.what());
    }
    return b;
}

inline RunConfig load_run_config(const std::string& path) {
    nlohmann::json j = read_json_file(path);
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    RunConfig cfg;
    cfg.config_dir = std::filesystem::path(path).parent_path().string();
    try {
        cfg.snapshot_path = resolve_path(cfg.config_dir, j.value("snapshot", std::string()));
        cfg.product_path = resolve_path(cfg.config_dir, j.value("product", std::string()));
        cfg.model = model_section_from_json(j.contains("model") ? j.at("model")
                                                                : nlohmann::json(nullptr));
        if (j.contains("mc")) {
            const nlohmann::json& m = j.at("mc");
            cfg.mc.n_paths = m.value("paths", cfg.mc.n_paths);
            cfg.mc.steps_per_year = m.value("steps_per_year", cfg.mc.steps_per_year);
            if (m.contains("seed")) {
                cfg.mc.seed = m.at("seed").get<std::uint64_t>();
                cfg.seed_set = true;
            }
            cfg.mc.antithetic = m.value("antithetic", cfg.mc.antithetic);
            cfg.mc.threads = m.value("threads", cfg.mc.threads);
        }
        if (j.contains("fva")) {
            cfg.fva = j.at("fva");
            if (!cfg.fva.is_object()) throw ConfigError("fva: expected a JSON object");
        }
        if (j.contains("greeks")) {
            cfg.greeks = j.at("greeks");
            cfg.greeks_requested = true;
        }
        if (j.contains("governance")) {
            const nlohmann::json& g = j.at("governance");
            cfg.governance.store = resolve_path(cfg.config_dir, g.value("store", std::string()));
            cfg.governance.product_family = g.value("product_family", std::string());
            cfg.governance.model_id = g.value("model_id", std::string());
        }
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: malformed field: ") + e.what());
    }
    greeks_bumps_from_json(cfg.greeks); // fail fast on malformed bump overrides
    return cfg;
}

} // namespace mrisk

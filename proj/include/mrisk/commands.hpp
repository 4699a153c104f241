#pragma once
// Command implementations behind the command-line tool: shared run
// preparation (inputs, governance gate, model build) and the price / grid /
// fva / hedge commands, each writing its outputs under the run's output
// directory. Kept header-only and binary-free so tests can drive the exact
// code the tool runs.

#include <mrisk/engine.hpp>
#include <mrisk/errors.hpp>
#include <mrisk/fva.hpp>
#include <mrisk/governance.hpp>
#include <mrisk/greeks.hpp>
#include <mrisk/market_data.hpp>
#include <mrisk/products.hpp>
#include <mrisk/run_config.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mrisk {

struct CommandContext {
    RunConfig cfg;
    MarketSnapshot market;
    Product product;
    ModelSpec model;
    std::optional<InventoryStore> store;
    std::vector<std::string> warnings; // governance + calibration, echoed to outputs
};

namespace detail {

inline std::string audit_path_for(const std::string& store_path) {
    return store_path + ".audit.jsonl";
}

// Resolve a governance complaint: overridden runs log the override and carry
// a warning; everything else stops the run before any pricing happens.
inline void gate_or_override(CommandContext& ctx, AuditLog& audit, const std::string& reason) {
    const GovernanceSection& gov = ctx.cfg.governance;
    if (!ctx.cfg.override_governance) throw GovernanceBlock(reason);
    record_override(audit, gov.product_family, gov.model_id, reason);
    ctx.warnings.push_back("governance override: " + reason);
}

} // namespace detail

// Load inputs, apply the governance gate, and build the pricing model.
// `calibrate_model = false` skips the effective-vol calibration for commands
// that calibrate per scenario themselves.
inline CommandContext prepare_run(RunConfig cfg, bool calibrate_model = true) {
    if (!cfg.seed_set)
        throw ConfigError("mc.seed is mandatory: set it in the config file or pass --seed");
    if (cfg.snapshot_path.empty()) throw ConfigError("config: \"snapshot\" path is required");
    if (cfg.product_path.empty()) throw ConfigError("config: \"product\" path is required");

    CommandContext ctx;
    ctx.cfg = std::move(cfg);
    ctx.market = load_snapshot(ctx.cfg.snapshot_path);
    ctx.product = load_product(ctx.cfg.product_path);

    const GovernanceSection& gov = ctx.cfg.governance;
    if (!gov.store.empty()) {
        ctx.store = load_store(gov.store);
        if (!gov.product_family.empty() && !gov.model_id.empty()) {
            AuditLog audit(detail::audit_path_for(gov.store));
            MappingVerdict verdict = check_mapping(*ctx.store, gov.product_family, gov.model_id);
            if (!verdict.allowed) detail::gate_or_override(ctx, audit, verdict.reason);
            for (const std::string& w : verdict.warnings) ctx.warnings.push_back(w);
            if (const auto* a = std::get_if<Autocallable>(&ctx.product)) {
                if (const ProductRecord* rec = find_product(*ctx.store, gov.product_family)) {
                    for (const std::string& v : restrict_features(*a, *rec))
                        detail::gate_or_override(ctx, audit, v);
                }
            }
        }
    }

    ctx.model = calibrate_model ? build_model(ctx.cfg.model, ctx.market, ctx.cfg.mc, &ctx.warnings)
                                : model_shell(ctx.cfg.model, ctx.market);
    return ctx;
}

namespace detail {

inline std::filesystem::path ensure_output_dir(const RunConfig& cfg) {
    std::filesystem::path dir(cfg.output_dir.empty() ? std::string(".") : cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory: " + dir.string());
    return dir;
}

inline void write_text_file(const std::string& text, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path.string());
    out << text;
}

inline nlohmann::json resolved_json(const CommandContext& ctx) {
    const RunConfig& c = ctx.cfg;
    double corr = c.model.correlation ? *c.model.correlation : ctx.market.equity_rate_correlation;
    nlohmann::json j;
    j["seed"] = c.mc.seed;
    j["paths"] = c.mc.n_paths;
    j["steps_per_year"] = c.mc.steps_per_year;
    j["antithetic"] = c.mc.antithetic;
    j["threads"] = c.mc.threads;
    j["model"] = {{"kind", c.model.kind},
                  {"mean_reversion", c.model.hw.mean_reversion},
                  {"rate_vol", c.model.hw.rate_vol},
                  {"equity_rate_correlation", corr},
                  {"leverage_mode", c.model.leverage_mode}};
    j["snapshot"] = c.snapshot_path;
    j["product"] = c.product_path;
    j["governance_store"] = c.governance.store;
    j["override_governance"] = c.override_governance;
    j["output_dir"] = c.output_dir;
    return j;
}

inline void emit_warnings(const std::vector<std::string>& warnings) {
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

// Common outer shape of every JSON output: a single timestamp field plus the
// resolved configuration echo, so reruns differ in exactly one line.
inline nlohmann::json output_shell(const CommandContext& ctx, const std::string& command) {
    nlohmann::json j;
    j["timestamp"] = utc_timestamp_now();
    j["command"] = command;
    j["as_of"] = to_iso(ctx.market.as_of);
    j["resolved"] = resolved_json(ctx);
    j["warnings"] = ctx.warnings;
    return j;
}

} // namespace detail

// ---------------------------------------------------------------------------
// price
// ---------------------------------------------------------------------------

inline void cmd_price(CommandContext& ctx) {
    std::filesystem::path dir = detail::ensure_output_dir(ctx.cfg);
    PriceResult pr = price(ctx.product, ctx.model, ctx.market, ctx.cfg.mc);

    nlohmann::json out = detail::output_shell(ctx, "price");
    out["price"] = {{"value", pr.value}, {"std_error", pr.std_error}, {"n_paths", pr.n_paths}};

    std::vector<LimitBreachInfo> breaches;
    if (ctx.cfg.greeks_requested) {
        GreeksBumps bumps = greeks_bumps_from_json(ctx.cfg.greeks);
        GreeksReport rep = greeks(ctx.product, ctx.model, ctx.market, ctx.cfg.mc, bumps);
        nlohmann::json g;
        g["delta"] = rep.delta;
        g["gamma"] = rep.gamma;
        g["vega"] = rep.vega;
        g["vanna"] = rep.vanna;
        if (rep.correlation_sensitivity) g["correlation_sensitivity"] = *rep.correlation_sensitivity;
        g["delta_std_error"] = rep.delta_std_error;
        g["vega_std_error"] = rep.vega_std_error;
        if (rep.correlation_std_error) g["correlation_std_error"] = *rep.correlation_std_error;
        g["bumps"] = {{"spot_rel", rep.bumps.spot_rel},
                      {"vol_abs", rep.bumps.vol_abs},
                      {"correlation_abs", rep.bumps.correlation_abs}};
        out["greeks"] = std::move(g);

        if (ctx.store && !ctx.store->limits.empty()) {
            breaches = check_limits(rep, ctx.store->limits);
            out["limit_breaches"] = nlohmann::json::array();
            for (const LimitBreachInfo& b : breaches)
                out["limit_breaches"].push_back({{"metric", to_string(b.metric)},
                                                 {"value", b.value},
                                                 {"threshold", b.threshold},
                                                 {"action", to_string(b.action)}});
        }
    }

    // The result file is written before any breach stops the run, so the
    // numbers behind the breach are always available for review.
    write_json_file(out, (dir / "price.json").string());
    detail::emit_warnings(ctx.warnings);

    std::vector<std::string> blocking;
    for (const LimitBreachInfo& b : breaches) {
        std::string text = "risk limit breached: " + std::string(to_string(b.metric)) + " = " +
                           nlohmann::json(b.value).dump() + " exceeds threshold " +
                           nlohmann::json(b.threshold).dump();
        if (b.action == LimitAction::Block)
            blocking.push_back(text);
        else
            std::cerr << "warning: " << text << "\n";
    }
    if (!blocking.empty()) throw LimitBreach(blocking.front());
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

inline void cmd_grid(CommandContext& ctx) {
    if (ctx.cfg.model.kind != "hwlv")
        throw ConfigError("grid: a hybrid model configuration (model.kind = \"hwlv\") is required");
    std::filesystem::path dir = detail::ensure_output_dir(ctx.cfg);

    std::vector<double> tenors =
        ctx.cfg.fva.value("grid_tenors", std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0});
    std::vector<double> correlations =
        ctx.cfg.fva.value("grid_correlations", std::vector<double>{-0.3, 0.0, 0.3, 0.6});

    ModelSpec hybrid = model_shell(ctx.cfg.model, ctx.market);
    ModelComparisonResult res = fva_model_comparison(ctx.product, ctx.market, lv_model(), hybrid,
                                                     tenors, correlations, ctx.cfg.mc);

    std::string csv = grid_to_csv(res.grid, /*in_bp=*/true);
    for (const std::string& w : res.grid.warnings) csv += "# warning: " + w + "\n";
    detail::write_text_file(csv, dir / "grid.csv");

    for (const std::string& w : res.grid.warnings) ctx.warnings.push_back(w);
    detail::emit_warnings(ctx.warnings);
}

// ---------------------------------------------------------------------------
// fva
// ---------------------------------------------------------------------------

namespace detail {

inline ModelSection model_section_entry(const nlohmann::json& entry, const char* key,
                                        const char* method) {
    if (!entry.contains(key))
        throw ConfigError(std::string("fva: ") + method + " needs a \"" + key +
                          "\" model section");
    return model_section_from_json(entry.at(key));
}

inline std::vector<CalibrationVariant> variants_from_json(const nlohmann::json& entry,
                                                          const std::string& config_dir) {
    if (!entry.contains("variants") || !entry.at("variants").is_array())
        throw ConfigError("fva: calibration_variation needs a \"variants\" array");
    std::vector<CalibrationVariant> variants;
    for (const nlohmann::json& vj : entry.at("variants")) {
        CalibrationVariant v;
        v.label = vj.value("label", std::string());
        if (vj.contains("market")) {
            std::string path = resolve_path(config_dir, vj.at("market").get<std::string>());
            v.market = load_snapshot(path);
        }
        if (vj.contains("params")) {
            const nlohmann::json& pj = vj.at("params");
            if (!pj.is_object())
                throw ConfigError("fva: variant params must be an object of name -> value");
            // nlohmann iterates object keys alphabetically, so multi-parameter
            // variants apply in a deterministic (alphabetical) order.
            for (auto it = pj.begin(); it != pj.end(); ++it)
                v.params.emplace_back(it.key(), it.value().get<double>());
        }
        variants.push_back(std::move(v));
    }
    return variants;
}

inline HedgeConfig hedge_config_from_json(const nlohmann::json& entry) {
    HedgeConfig hc;
    hc.rebalance_each_step = entry.value("rebalance_each_step", hc.rebalance_each_step);
    hc.kappa = entry.value("kappa", hc.kappa);
    hc.value_paths = entry.value("value_paths", hc.value_paths);
    hc.value_steps_per_year = entry.value("value_steps_per_year", hc.value_steps_per_year);
    hc.spot_grid = entry.value("spot_grid", hc.spot_grid);
    return hc;
}

inline FvaComponent component_from_entry(const CommandContext& ctx, const nlohmann::json& entry) {
    const std::string method = entry.value("method", std::string());
    if (method.empty()) throw ConfigError("fva: every methods[] entry needs a \"method\" name");

    if (method == "parameter_range") {
        ParameterSample param;
        param.name = entry.value("parameter", std::string());
        if (param.name.empty())
            throw ConfigError("fva: parameter_range needs a \"parameter\" name");
        if (!entry.contains("samples"))
            throw ConfigError("fva: parameter_range needs a \"samples\" array");
        param.samples = entry.at("samples").get<std::vector<double>>();
        double p_lo = entry.value("p_lo", 0.05);
        double p_hi = entry.value("p_hi", 0.95);
        bool desk_long = entry.value("desk_long", true);
        return fva_parameter_range(ctx.product, ctx.model, ctx.market, param, p_lo, p_hi,
                                   ctx.cfg.mc, desk_long);
    }
    if (method == "sensitivity_multiple") {
        std::string parameter = entry.value("parameter", std::string());
        if (parameter.empty())
            throw ConfigError("fva: sensitivity_multiple needs a \"parameter\" name");
        double multiple = entry.value("multiple", 1.0);
        double bump = entry.value("bump", 0.01);
        return fva_sensitivity_multiple(ctx.product, ctx.model, ctx.market, parameter, multiple,
                                        bump, ctx.cfg.mc);
    }
    if (method == "model_comparison") {
        ModelSection alt = model_section_entry(entry, "alternative", "model_comparison");
        std::vector<double> tenors =
            entry.value("tenors", std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0});
        std::vector<double> correlations =
            entry.value("correlations", std::vector<double>{-0.3, 0.0, 0.3, 0.6});
        bool desk_long = entry.value("desk_long", true);
        ModelComparisonResult res =
            fva_model_comparison(ctx.product, ctx.market, ctx.model,
                                 model_shell(alt, ctx.market), tenors, correlations, ctx.cfg.mc,
                                 desk_long);
        return res.component;
    }
    if (method == "calibration_variation") {
        std::vector<CalibrationVariant> variants = variants_from_json(entry, ctx.cfg.config_dir);
        return fva_calibration_variation(ctx.product, ctx.model, ctx.market, variants,
                                         ctx.cfg.mc);
    }
    if (method == "hedging_simulation") {
        ModelSection realized = model_section_entry(entry, "realized", "hedging_simulation");
        HedgeConfig hc = hedge_config_from_json(entry);
        HedgeResult res = fva_hedging_simulation(ctx.product, ctx.model,
                                                 build_model(realized, ctx.market, ctx.cfg.mc),
                                                 ctx.market, hc, ctx.cfg.mc);
        return res.component;
    }
    throw ConfigError("fva: unknown method \"" + method + "\"");
}

} // namespace detail

inline void cmd_fva(CommandContext& ctx) {
    std::filesystem::path dir = detail::ensure_output_dir(ctx.cfg);

    nlohmann::json methods = ctx.cfg.fva.value("methods", nlohmann::json::array());
    if (!methods.is_array()) throw ConfigError("fva: \"methods\" must be an array");

    std::vector<FvaComponent> components;
    std::vector<std::pair<size_t, bool>> mode_overrides;
    for (const nlohmann::json& entry : methods) {
        if (!entry.is_object()) throw ConfigError("fva: every methods[] entry must be an object");
        components.push_back(detail::component_from_entry(ctx, entry));
        if (entry.value("embedded", false)) mode_overrides.emplace_back(components.size() - 1, true);
    }

    FvaReport report = build_report(std::move(components), mode_overrides,
                                    to_iso(ctx.market.as_of));

    nlohmann::json out = detail::output_shell(ctx, "fva");
    nlohmann::json rep = report_to_json(report);
    for (auto it = rep.begin(); it != rep.end(); ++it) out[it.key()] = it.value();
    write_json_file(out, (dir / "fva_report.json").string());

    // The markdown rendering carries no timestamp, so reruns are byte-identical.
    detail::write_text_file(report_to_markdown(report), dir / "fva_report.md");
    detail::emit_warnings(ctx.warnings);
}

// ---------------------------------------------------------------------------
// hedge
// ---------------------------------------------------------------------------

inline void cmd_hedge(CommandContext& ctx) {
    std::filesystem::path dir = detail::ensure_output_dir(ctx.cfg);

    nlohmann::json section = ctx.cfg.fva.value("hedging", nlohmann::json::object());
    if (!section.is_object()) throw ConfigError("fva: \"hedging\" must be an object");
    ModelSection realized = detail::model_section_entry(section, "realized", "hedging");
    HedgeConfig hc = detail::hedge_config_from_json(section);

    if (ctx.cfg.mc.n_paths > 10000)
        std::cerr << "warning: hedging simulation above 10000 world paths is computationally "
                     "heavy\n";

    HedgeResult res = fva_hedging_simulation(ctx.product, ctx.model,
                                             build_model(realized, ctx.market, ctx.cfg.mc),
                                             ctx.market, hc, ctx.cfg.mc);

    std::string csv = "path,pnl\n";
    for (size_t i = 0; i < res.pnl.size(); ++i)
        csv += std::to_string(i) + "," + nlohmann::json(res.pnl[i]).dump() + "\n";
    detail::write_text_file(csv, dir / "pnl.csv");

    nlohmann::json out = detail::output_shell(ctx, "hedge");
    out["component"] = component_to_json(res.component);
    write_json_file(out, (dir / "hedge_component.json").string());
    detail::emit_warnings(ctx.warnings);
}

} // namespace mrisk

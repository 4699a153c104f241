// Command-line front end: pricing runs (price / grid / fva / hedge) driven by
// a JSON config file with flag overrides, plus the model-inventory governance
// subcommands. Exit codes: 0 success, 2 governance block, 3 configuration or
// validation problem, 4 blocking risk-limit breach.

#include <mrisk/commands.hpp>
#include <mrisk/errors.hpp>
#include <mrisk/governance.hpp>
#include <mrisk/run_config.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct RunFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
    bool override_governance = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config_path, "run configuration JSON file")->required();
    cmd->add_option("--seed", f.seed, "Monte Carlo seed (overrides the config)");
    cmd->add_option("--threads", f.threads, "worker threads (overrides the config)");
    cmd->add_option("--out", f.out, "output directory (overrides the config)");
    cmd->add_flag("--override-governance", f.override_governance,
                  "run despite a governance block; the override is written to the audit log");
}

mrisk::RunConfig make_config(const RunFlags& f) {
    mrisk::RunConfig cfg = mrisk::load_run_config(f.config_path);
    if (f.seed) {
        cfg.mc.seed = *f.seed;
        cfg.seed_set = true;
    }
    if (f.threads) cfg.mc.threads = *f.threads;
    if (f.out) cfg.output_dir = *f.out;
    if (f.override_governance) cfg.override_governance = true;
    return cfg;
}

mrisk::InventoryStore load_or_empty(const std::string& path) {
    if (std::filesystem::exists(path)) return mrisk::load_store(path);
    return {};
}

std::string audit_path(const std::string& store_path) { return store_path + ".audit.jsonl"; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"model risk toolkit: autocallable pricing under local-vol and hybrid "
                 "rate/equity models, fair value adjustments, and inventory governance"};
    app.require_subcommand(1);

    RunFlags price_f, grid_f, fva_f, hedge_f;

    CLI::App* price_cmd =
        app.add_subcommand("price", "price the configured product; writes price.json");
    add_run_flags(price_cmd, price_f);
    price_cmd->callback([&] {
        mrisk::CommandContext ctx = mrisk::prepare_run(make_config(price_f));
        mrisk::cmd_price(ctx);
    });

    CLI::App* grid_cmd = app.add_subcommand(
        "grid", "hybrid-minus-local-vol price gaps by tenor and correlation; writes grid.csv");
    add_run_flags(grid_cmd, grid_f);
    grid_cmd->callback([&] {
        mrisk::CommandContext ctx =
            mrisk::prepare_run(make_config(grid_f), /*calibrate_model=*/false);
        mrisk::cmd_grid(ctx);
    });

    CLI::App* fva_cmd = app.add_subcommand(
        "fva", "fair value adjustment report; writes fva_report.json and fva_report.md");
    add_run_flags(fva_cmd, fva_f);
    fva_cmd->callback([&] {
        mrisk::CommandContext ctx = mrisk::prepare_run(make_config(fva_f));
        mrisk::cmd_fva(ctx);
    });

    CLI::App* hedge_cmd = app.add_subcommand(
        "hedge", "hedging-error simulation; writes pnl.csv and hedge_component.json");
    add_run_flags(hedge_cmd, hedge_f);
    hedge_cmd->callback([&] {
        mrisk::CommandContext ctx = mrisk::prepare_run(make_config(hedge_f));
        mrisk::cmd_hedge(ctx);
    });

    // ------------------------------------------------------------------
    // inventory governance
    // ------------------------------------------------------------------

    CLI::App* inv = app.add_subcommand("inventory", "model inventory and governance records");
    inv->require_subcommand(1);

    struct {
        std::string store;
        std::string id;
        std::string name;
        int tier = 2;
        std::string status = "candidate";
        std::string last_validation;
        int review_months = 12;
        std::string family = "autocallable";
        double max_maturity = 10.0;
        bool allow_forward_start = false;
        std::string product_family;
        std::string model_id;
        bool blocked = false;
        std::string metric;
        double threshold = 1.0;
        std::string action = "warn";
        bool override_governance = false;
        std::string as_of;
    } iv;

    auto add_store = [&](CLI::App* cmd) {
        cmd->add_option("--store", iv.store, "inventory store JSON file")->required();
    };

    CLI::App* inv_init = inv->add_subcommand("init", "create an empty inventory store");
    add_store(inv_init);
    inv_init->callback([&] {
        if (std::filesystem::exists(iv.store))
            throw mrisk::ConfigError("inventory store already exists: " + iv.store);
        mrisk::save_store({}, iv.store);
        std::cout << "created " << iv.store << "\n";
    });

    CLI::App* inv_rm = inv->add_subcommand("register-model", "add a model record");
    add_store(inv_rm);
    inv_rm->add_option("--id", iv.id, "model id")->required();
    inv_rm->add_option("--name", iv.name, "display name (defaults to the id)");
    inv_rm->add_option("--tier", iv.tier, "risk tier 1..3");
    inv_rm->add_option("--status", iv.status, "candidate|approved|restricted|decommissioned");
    inv_rm->add_option("--last-validation", iv.last_validation, "date YYYY-MM-DD")->required();
    inv_rm->add_option("--review-months", iv.review_months, "validation review period in months");
    inv_rm->callback([&] {
        mrisk::InventoryStore s = load_or_empty(iv.store);
        mrisk::AuditLog audit(audit_path(iv.store));
        mrisk::ModelRecord r;
        r.id = iv.id;
        r.name = iv.name.empty() ? iv.id : iv.name;
        r.risk_tier = iv.tier;
        r.status = mrisk::model_status_from_string(iv.status);
        r.last_validation = mrisk::parse_date(iv.last_validation);
        r.review_period_months = iv.review_months;
        mrisk::register_model(s, r, audit);
        mrisk::save_store(s, iv.store);
        std::cout << "registered model " << r.id << "\n";
    });

    CLI::App* inv_ss = inv->add_subcommand("set-status", "change a model's lifecycle status");
    add_store(inv_ss);
    inv_ss->add_option("--id", iv.id, "model id")->required();
    inv_ss->add_option("--status", iv.status, "candidate|approved|restricted|decommissioned")
        ->required();
    inv_ss->callback([&] {
        mrisk::InventoryStore s = mrisk::load_store(iv.store);
        mrisk::AuditLog audit(audit_path(iv.store));
        mrisk::set_model_status(s, iv.id, mrisk::model_status_from_string(iv.status), audit);
        mrisk::save_store(s, iv.store);
        std::cout << "model " << iv.id << " -> " << iv.status << "\n";
    });

    CLI::App* inv_rp = inv->add_subcommand("register-product", "add a product family record");
    add_store(inv_rp);
    inv_rp->add_option("--id", iv.id, "product family id")->required();
    inv_rp->add_option("--family", iv.family, "payoff family label");
    inv_rp->add_option("--max-maturity", iv.max_maturity, "maximum maturity in years");
    inv_rp->add_flag("--allow-forward-start", iv.allow_forward_start,
                     "permit forward-start features");
    inv_rp->callback([&] {
        mrisk::InventoryStore s = load_or_empty(iv.store);
        mrisk::AuditLog audit(audit_path(iv.store));
        mrisk::ProductRecord r;
        r.id = iv.id;
        r.payoff_family = iv.family;
        r.max_maturity_years = iv.max_maturity;
        r.forward_start_allowed = iv.allow_forward_start;
        mrisk::register_product(s, r, audit);
        mrisk::save_store(s, iv.store);
        std::cout << "registered product family " << r.id << "\n";
    });

    CLI::App* inv_map = inv->add_subcommand("register-mapping",
                                            "map a product family to a model");
    add_store(inv_map);
    inv_map->add_option("--product-family", iv.product_family, "product family id")->required();
    inv_map->add_option("--model-id", iv.model_id, "model id")->required();
    inv_map->add_flag("--blocked", iv.blocked, "register the mapping as blocked");
    inv_map->callback([&] {
        mrisk::InventoryStore s = mrisk::load_store(iv.store);
        mrisk::AuditLog audit(audit_path(iv.store));
        mrisk::MappingRecord r;
        r.product_family = iv.product_family;
        r.model_id = iv.model_id;
        r.status = iv.blocked ? mrisk::MappingStatus::Blocked : mrisk::MappingStatus::Allowed;
        mrisk::register_mapping(s, r, audit);
        mrisk::save_store(s, iv.store);
        std::cout << "registered mapping " << r.product_family << " -> " << r.model_id << "\n";
    });

    CLI::App* inv_rl = inv->add_subcommand("register-limit", "add a risk limit");
    add_store(inv_rl);
    inv_rl->add_option("--metric", iv.metric, "correlation_sensitivity|vanna|gamma")->required();
    inv_rl->add_option("--threshold", iv.threshold, "absolute threshold, > 0")->required();
    inv_rl->add_option("--action", iv.action, "warn|block");
    inv_rl->callback([&] {
        mrisk::InventoryStore s = load_or_empty(iv.store);
        mrisk::AuditLog audit(audit_path(iv.store));
        mrisk::RiskLimit l;
        l.metric = mrisk::limit_metric_from_string(iv.metric);
        l.threshold = iv.threshold;
        l.action = mrisk::limit_action_from_string(iv.action);
        mrisk::register_limit(s, l, audit);
        mrisk::save_store(s, iv.store);
        std::cout << "registered limit on " << iv.metric << "\n";
    });

    CLI::App* inv_check = inv->add_subcommand("check", "check a product-family/model mapping");
    add_store(inv_check);
    inv_check->add_option("--product-family", iv.product_family, "product family id")->required();
    inv_check->add_option("--model-id", iv.model_id, "model id")->required();
    inv_check->add_flag("--override-governance", iv.override_governance,
                        "record an audited override instead of failing");
    inv_check->callback([&] {
        mrisk::InventoryStore s = mrisk::load_store(iv.store);
        mrisk::MappingVerdict v = mrisk::check_mapping(s, iv.product_family, iv.model_id);
        for (const std::string& w : v.warnings) std::cerr << "warning: " << w << "\n";
        if (v.allowed) {
            std::cout << "allowed\n";
            return;
        }
        if (iv.override_governance) {
            mrisk::AuditLog audit(audit_path(iv.store));
            mrisk::record_override(audit, iv.product_family, iv.model_id, v.reason);
            std::cerr << "warning: governance override: " << v.reason << "\n";
            std::cout << "overridden\n";
            return;
        }
        throw mrisk::GovernanceBlock(v.reason);
    });

    CLI::App* inv_due = inv->add_subcommand("due-reviews", "models whose validation review is due");
    add_store(inv_due);
    inv_due->add_option("--as-of", iv.as_of, "date YYYY-MM-DD (default: today, UTC)");
    inv_due->callback([&] {
        mrisk::InventoryStore s = mrisk::load_store(iv.store);
        mrisk::Date as_of = mrisk::parse_date(
            iv.as_of.empty() ? mrisk::utc_timestamp_now().substr(0, 10) : iv.as_of);
        std::cout << "model_id,due,overdue_days\n";
        for (const mrisk::DueReview& d : mrisk::due_reviews(s, as_of))
            std::cout << d.model_id << "," << mrisk::to_iso(d.due) << "," << d.overdue_days
                      << "\n";
    });

    CLI::App* inv_verify =
        inv->add_subcommand("verify-audit", "replay the audit log and compare with the store");
    add_store(inv_verify);
    inv_verify->callback([&] {
        mrisk::InventoryStore s = mrisk::load_store(iv.store);
        mrisk::InventoryStore replayed = mrisk::replay_audit(audit_path(iv.store));
        if (!(replayed == s))
            throw mrisk::ValidationError("audit replay does not reconstruct the store");
        std::cout << "audit replay matches the store\n";
    });

    CLI::App* inv_show = inv->add_subcommand("show", "print the store as JSON");
    add_store(inv_show);
    inv_show->callback(
        [&] { std::cout << mrisk::store_to_json(mrisk::load_store(iv.store)).dump(2) << "\n"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 3;
    } catch (const mrisk::GovernanceBlock& e) {
        std::cerr << "governance block: " << e.what() << "\n";
        return 2;
    } catch (const mrisk::LimitBreach& e) {
        std::cerr << "limit breach: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

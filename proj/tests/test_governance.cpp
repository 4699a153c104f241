// Model-inventory governance: lifecycle transitions, audit log and replay,
// store round-trips, mapping checks, review scheduling, risk limits, and
// product feature restrictions.

#include <catch2/catch_amalgamated.hpp>

#include <mrisk/governance.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

using namespace mrisk;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::filesystem::remove(path);
    }
    ~TempFile() { std::filesystem::remove(path); }
};

ModelRecord model(const std::string& id, ModelStatus status = ModelStatus::Candidate) {
    ModelRecord m;
    m.id = id;
    m.name = "model " + id;
    m.risk_tier = 1;
    m.status = status;
    m.last_validation = Date{2026, 1, 15};
    m.review_period_months = 12;
    return m;
}

ProductRecord family(const std::string& id, double max_years = 10.0, bool fwd = false) {
    ProductRecord p;
    p.id = id;
    p.payoff_family = id;
    p.max_maturity_years = max_years;
    p.forward_start_allowed = fwd;
    return p;
}

} // namespace

TEST_CASE("serial day numbers are consistent with the calendar") {
    CHECK(to_serial_days(Date{1970, 1, 1}) == 0);
    CHECK(to_serial_days(Date{1970, 1, 2}) == 1);
    CHECK(to_serial_days(Date{1969, 12, 31}) == -1);
    CHECK(to_serial_days(Date{2026, 8, 18}) - to_serial_days(Date{2026, 8, 17}) == 1);
    // Leap-year February.
    CHECK(to_serial_days(Date{2024, 3, 1}) - to_serial_days(Date{2024, 2, 28}) == 2);
    CHECK(to_serial_days(Date{2023, 3, 1}) - to_serial_days(Date{2023, 2, 28}) == 1);
    // One Gregorian 400-year cycle is 146097 days.
    CHECK(to_serial_days(Date{2370, 1, 1}) - to_serial_days(Date{1970, 1, 1}) == 146097);
}

TEST_CASE("model lifecycle transitions") {
    TempFile audit_file("mrisk_gov_lifecycle.audit.jsonl");
    AuditLog audit(audit_file.path);
    InventoryStore store;

    register_model(store, model("lv-1"), audit);

    SECTION("the approved path reaches decommissioned") {
        set_model_status(store, "lv-1", ModelStatus::Approved, audit);
        set_model_status(store, "lv-1", ModelStatus::Decommissioned, audit);
        CHECK(find_model(store, "lv-1")->status == ModelStatus::Decommissioned);
        // register + two transitions = three audit lines
        CHECK(AuditLog::read_entries(audit_file.path).size() == 3);
    }

    SECTION("decommissioned is terminal") {
        set_model_status(store, "lv-1", ModelStatus::Approved, audit);
        set_model_status(store, "lv-1", ModelStatus::Decommissioned, audit);
        CHECK_THROWS_AS(set_model_status(store, "lv-1", ModelStatus::Approved, audit),
                        ValidationError);
        CHECK_THROWS_AS(set_model_status(store, "lv-1", ModelStatus::Candidate, audit),
                        ValidationError);
    }

    SECTION("restricted may return to approved") {
        set_model_status(store, "lv-1", ModelStatus::Approved, audit);
        set_model_status(store, "lv-1", ModelStatus::Restricted, audit);
        set_model_status(store, "lv-1", ModelStatus::Approved, audit);
        CHECK(find_model(store, "lv-1")->status == ModelStatus::Approved);
    }

    SECTION("backward and no-op moves are illegal") {
        set_model_status(store, "lv-1", ModelStatus::Approved, audit);
        CHECK_THROWS_AS(set_model_status(store, "lv-1", ModelStatus::Candidate, audit),
                        ValidationError);
        CHECK_THROWS_AS(set_model_status(store, "lv-1", ModelStatus::Approved, audit),
                        ValidationError);
    }

    SECTION("unknown ids and duplicates are rejected") {
        CHECK_THROWS_AS(set_model_status(store, "nope", ModelStatus::Approved, audit),
                        ValidationError);
        CHECK_THROWS_AS(register_model(store, model("lv-1"), audit), ValidationError);
    }

    SECTION("record validation") {
        ModelRecord bad = model("tiered");
        bad.risk_tier = 4;
        CHECK_THROWS_AS(register_model(store, bad, audit), ValidationError);
        bad = model("periodic");
        bad.review_period_months = 0;
        CHECK_THROWS_AS(register_model(store, bad, audit), ValidationError);
    }
}

TEST_CASE("audit log carries actor, action and payload") {
    TempFile audit_file("mrisk_gov_actor.audit.jsonl");
    AuditLog audit(audit_file.path);
    InventoryStore store;

    setenv("MRISK_USER", "vali.dator", 1);
    register_model(store, model("hw-1"), audit, "2026-08-18T09:00:00Z");
    unsetenv("MRISK_USER");
    register_product(store, family("autocallable"), audit, "2026-08-18T09:00:01Z");

    auto entries = AuditLog::read_entries(audit_file.path);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0]["actor"] == "vali.dator");
    CHECK(entries[0]["action"] == "register_model");
    CHECK(entries[0]["timestamp"] == "2026-08-18T09:00:00Z");
    CHECK(entries[0]["payload"]["id"] == "hw-1");
    CHECK(entries[1]["actor"] == "anonymous");
    CHECK(entries[1]["action"] == "register_product");
}

TEST_CASE("audit replay reconstructs the store exactly") {
    TempFile audit_file("mrisk_gov_replay.audit.jsonl");
    AuditLog audit(audit_file.path);
    InventoryStore store;

    register_model(store, model("lv-1"), audit);
    register_model(store, model("hwlv-1"), audit);
    set_model_status(store, "lv-1", ModelStatus::Approved, audit);
    set_model_status(store, "hwlv-1", ModelStatus::Approved, audit);
    set_model_status(store, "hwlv-1", ModelStatus::Restricted, audit);
    register_product(store, family("autocallable", 10.0, true), audit);
    register_product(store, family("vanilla", 30.0, false), audit);
    MappingRecord map{"autocallable", "hwlv-1", MappingStatus::Allowed};
    register_mapping(store, map, audit);
    RiskLimit lim{LimitMetric::Vanna, 0.5, LimitAction::Block};
    register_limit(store, lim, audit);
    // Overrides are logged but do not mutate the store.
    record_override(audit, "autocallable", "hwlv-1", "desk head approval");

    InventoryStore replayed = replay_audit(audit_file.path);
    CHECK(replayed == store);
    CHECK(AuditLog::read_entries(audit_file.path).size() == 10);
}

TEST_CASE("store save and load round-trip is lossless") {
    TempFile store_file("mrisk_gov_store.json");
    TempFile audit_file("mrisk_gov_store.audit.jsonl");
    AuditLog audit(audit_file.path);
    InventoryStore store;
    register_model(store, model("lv-1", ModelStatus::Approved), audit);
    ModelRecord tier3 = model("legacy-1", ModelStatus::Restricted);
    tier3.risk_tier = 3;
    tier3.last_validation = Date{2024, 2, 29};
    tier3.review_period_months = 6;
    register_model(store, tier3, audit);
    register_product(store, family("autocallable", 12.5, true), audit);
    register_mapping(store, {"autocallable", "lv-1", MappingStatus::Allowed}, audit);
    register_mapping(store, {"autocallable", "legacy-1", MappingStatus::Blocked}, audit);
    register_limit(store, {LimitMetric::Gamma, 2.0, LimitAction::Warn}, audit);
    register_limit(store, {LimitMetric::CorrelationSensitivity, 0.08, LimitAction::Block}, audit);

    save_store(store, store_file.path);
    InventoryStore loaded = load_store(store_file.path);
    CHECK(loaded == store);

    // In-memory JSON round trip as well.
    CHECK(store_from_json(store_to_json(store)) == store);
}

TEST_CASE("mapping checks gate pricing") {
    TempFile audit_file("mrisk_gov_mapping.audit.jsonl");
    AuditLog audit(audit_file.path);
    InventoryStore store;
    register_model(store, model("lv-1", ModelStatus::Approved), audit);
    register_model(store, model("old-1", ModelStatus::Approved), audit);
    register_model(store, model("shaky-1", ModelStatus::Approved), audit);
    register_product(store, family("autocallable"), audit);
    register_mapping(store, {"autocallable", "lv-1", MappingStatus::Allowed}, audit);
    register_mapping(store, {"autocallable", "old-1", MappingStatus::Allowed}, audit);
    register_mapping(store, {"autocallable", "shaky-1", MappingStatus::Allowed}, audit);
    set_model_status(store, "old-1", ModelStatus::Restricted, audit);
    set_model_status(store, "old-1", ModelStatus::Decommissioned, audit);
    set_model_status(store, "shaky-1", ModelStatus::Restricted, audit);

    SECTION("approved model with allowed mapping passes") {
        MappingVerdict v = check_mapping(store, "autocallable", "lv-1");
        CHECK(v.allowed);
        CHECK(v.reason.empty());
        CHECK(v.warnings.empty());
    }

    SECTION("decommissioned model blocks with a reason") {
        MappingVerdict v = check_mapping(store, "autocallable", "old-1");
        CHECK_FALSE(v.allowed);
        CHECK(v.reason == "model decommissioned");
    }

    SECTION("restricted model warns but prices") {
        MappingVerdict v = check_mapping(store, "autocallable", "shaky-1");
        CHECK(v.allowed);
        REQUIRE(v.warnings.size() == 1);
        CHECK(v.warnings[0].find("restricted") != std::string::npos);
    }

    SECTION("absent mapping blocks") {
        register_model(store, model("unmapped-1", ModelStatus::Approved), audit);
        MappingVerdict v = check_mapping(store, "autocallable", "unmapped-1");
        CHECK_FALSE(v.allowed);
        CHECK(v.reason.find("no mapping") != std::string::npos);
    }

    SECTION("blocked mapping blocks regardless of model status") {
        register_model(store, model("banned-1", ModelStatus::Approved), audit);
        register_mapping(store, {"autocallable", "banned-1", MappingStatus::Blocked}, audit);
        MappingVerdict v = check_mapping(store, "autocallable", "banned-1");
        CHECK_FALSE(v.allowed);
        CHECK(v.reason == "mapping blocked");
    }

    SECTION("unknown ids are errors, not verdicts") {
        CHECK_THROWS_AS(check_mapping(store, "swaption", "lv-1"), ValidationError);
        CHECK_THROWS_AS(check_mapping(store, "autocallable", "ghost"), ValidationError);
    }

    SECTION("verdicts are pure") {
        MappingVerdict a = check_mapping(store, "autocallable", "shaky-1");
        MappingVerdict b = check_mapping(store, "autocallable", "shaky-1");
        CHECK(a.allowed == b.allowed);
        CHECK(a.reason == b.reason);
        CHECK(a.warnings == b.warnings);
    }

    SECTION("overrides only add audit lines") {
        size_t before = AuditLog::read_entries(audit_file.path).size();
        InventoryStore snapshot = store;
        record_override(audit, "autocallable", "old-1", "legacy unwind");
        CHECK(store == snapshot);
        auto entries = AuditLog::read_entries(audit_file.path);
        REQUIRE(entries.size() == before + 1);
        CHECK(entries.back()["action"] == "override_mapping");
        CHECK(entries.back()["payload"]["reason"] == "legacy unwind");
    }
}

TEST_CASE("review scheduling flags overdue models, most overdue first") {
    InventoryStore store;
    AuditLog silent; // no path: audit disabled for this in-memory fixture
    Date as_of{2026, 8, 18};

    SECTION("empty store yields an empty list") {
        CHECK(due_reviews(store, as_of).empty());
    }

    ModelRecord fresh = model("fresh");
    fresh.last_validation = Date{2025, 9, 18}; // due 2026-09-18: not yet
    register_model(store, fresh, silent);

    ModelRecord late = model("late");
    late.last_validation = Date{2025, 7, 18}; // due 2026-07-18: 31 days over
    register_model(store, late, silent);

    ModelRecord very_late = model("very-late");
    very_late.last_validation = Date{2024, 1, 10};
    very_late.review_period_months = 18; // due 2025-07-10: 404 days over
    register_model(store, very_late, silent);

    ModelRecord retired = model("retired", ModelStatus::Decommissioned);
    retired.last_validation = Date{2020, 1, 1};
    register_model(store, retired, silent);

    std::vector<DueReview> due = due_reviews(store, as_of);
    REQUIRE(due.size() == 2);
    CHECK(due[0].model_id == "very-late");
    CHECK(due[0].overdue_days == 404);
    CHECK(due[1].model_id == "late");
    CHECK(due[1].overdue_days == 31);
    CHECK(to_iso(due[1].due) == "2026-07-18");

    SECTION("a model due exactly today is not yet overdue") {
        ModelRecord today = model("today");
        today.last_validation = Date{2025, 8, 18}; // due 2026-08-18
        register_model(store, today, silent);
        for (const DueReview& r : due_reviews(store, as_of)) CHECK(r.model_id != "today");
    }
}

TEST_CASE("risk limits applied to a greeks report") {
    GreeksReport report;
    report.delta = -0.45;
    report.gamma = 1.8;
    report.vega = 0.39;
    report.vanna = -0.62;
    report.correlation_sensitivity = 0.04;

    SECTION("all below thresholds") {
        std::vector<RiskLimit> limits{{LimitMetric::Gamma, 2.0, LimitAction::Block},
                                      {LimitMetric::Vanna, 1.0, LimitAction::Warn}};
        CHECK(check_limits(report, limits).empty());
    }

    SECTION("absolute value drives the breach") {
        std::vector<RiskLimit> limits{{LimitMetric::Vanna, 0.5, LimitAction::Block}};
        auto breaches = check_limits(report, limits);
        REQUIRE(breaches.size() == 1);
        CHECK(breaches[0].metric == LimitMetric::Vanna);
        CHECK(breaches[0].value == -0.62);
        CHECK(breaches[0].threshold == 0.5);
        CHECK(breaches[0].action == LimitAction::Block);
    }

    SECTION("warn-action breaches are reported the same way") {
        std::vector<RiskLimit> limits{{LimitMetric::Gamma, 1.5, LimitAction::Warn}};
        auto breaches = check_limits(report, limits);
        REQUIRE(breaches.size() == 1);
        CHECK(breaches[0].action == LimitAction::Warn);
    }

    SECTION("a value exactly at the threshold does not breach") {
        std::vector<RiskLimit> limits{{LimitMetric::Gamma, 1.8, LimitAction::Block}};
        CHECK(check_limits(report, limits).empty());
    }

    SECTION("limits on metrics the report lacks are configuration errors") {
        GreeksReport no_corr = report;
        no_corr.correlation_sensitivity.reset();
        std::vector<RiskLimit> limits{
            {LimitMetric::CorrelationSensitivity, 0.1, LimitAction::Warn}};
        CHECK_THROWS_AS(check_limits(no_corr, limits), ConfigError);
        CHECK(check_limits(report, limits).empty());
    }

    SECTION("invalid thresholds are rejected") {
        std::vector<RiskLimit> limits{{LimitMetric::Gamma, 0.0, LimitAction::Warn}};
        CHECK_THROWS_AS(check_limits(report, limits), ValidationError);
    }
}

TEST_CASE("product feature restrictions") {
    Autocallable ac;
    ac.reference_spot = 100.0;
    ac.observation_dates = {1.0, 2.0, 3.0, 4.0, 5.0};

    SECTION("inside the envelope") {
        CHECK(restrict_features(ac, family("autocallable", 10.0, false)).empty());
    }

    SECTION("maturity beyond the family limit") {
        Autocallable long_ac = ac;
        long_ac.observation_dates.clear();
        for (int i = 1; i <= 12; ++i) long_ac.observation_dates.push_back(i);
        auto violations = restrict_features(long_ac, family("autocallable", 10.0, true));
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].find("maturity") != std::string::npos);
    }

    SECTION("forward start needs the family flag") {
        Autocallable fwd = ac;
        fwd.forward_start = true;
        auto violations = restrict_features(fwd, family("autocallable", 10.0, false));
        REQUIRE(violations.size() == 1);
        CHECK(violations[0].find("forward-start") != std::string::npos);
        CHECK(restrict_features(fwd, family("autocallable", 10.0, true)).empty());
    }

    SECTION("both violations stack") {
        Autocallable bad = ac;
        bad.forward_start = true;
        bad.observation_dates = {6.0, 12.0};
        CHECK(restrict_features(bad, family("autocallable", 10.0, false)).size() == 2);
    }
}

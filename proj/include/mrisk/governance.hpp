#pragma once

// Model-inventory governance: model/product records with lifecycle status,
// product-model mapping checks consulted before pricing, review scheduling,
// risk limits on computed greeks, product feature restrictions, and an
// append-only audit log whose replay reconstructs the store exactly.
//
// Concurrency: single writer; concurrent readers of a loaded store are safe.
// The store is a flat JSON file, the audit log JSON-lines — desk-scale
// artifacts, not a database.

#include <mrisk/dates.hpp>
#include <mrisk/errors.hpp>
#include <mrisk/greeks.hpp>
#include <mrisk/products.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mrisk {

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

enum class ModelStatus { Candidate, Approved, Restricted, Decommissioned };
enum class MappingStatus { Allowed, Blocked };
enum class LimitMetric { CorrelationSensitivity, Vanna, Gamma };
enum class LimitAction { Warn, Block };

inline const char* to_string(ModelStatus s) {
    switch (s) {
        case ModelStatus::Candidate: return "candidate";
        case ModelStatus::Approved: return "approved";
        case ModelStatus::Restricted: return "restricted";
        case ModelStatus::Decommissioned: return "decommissioned";
    }
    return "unknown";
}

inline ModelStatus model_status_from_string(const std::string& s) {
    if (s == "candidate") return ModelStatus::Candidate;
    if (s == "approved") return ModelStatus::Approved;
    if (s == "restricted") return ModelStatus::Restricted;
    if (s == "decommissioned") return ModelStatus::Decommissioned;
    throw ValidationError("unknown model status: " + s);
}

inline const char* to_string(MappingStatus s) {
    return s == MappingStatus::Allowed ? "allowed" : "blocked";
}

inline MappingStatus mapping_status_from_string(const std::string& s) {
    if (s == "allowed") return MappingStatus::Allowed;
    if (s == "blocked") return MappingStatus::Blocked;
    throw ValidationError("unknown mapping status: " + s);
}

inline const char* to_string(LimitMetric m) {
    switch (m) {
        case LimitMetric::CorrelationSensitivity: return "correlation_sensitivity";
        case LimitMetric::Vanna: return "vanna";
        case LimitMetric::Gamma: return "gamma";
    }
    return "unknown";
}

inline LimitMetric limit_metric_from_string(const std::string& s) {
    if (s == "correlation_sensitivity") return LimitMetric::CorrelationSensitivity;
    if (s == "vanna") return LimitMetric::Vanna;
    if (s == "gamma") return LimitMetric::Gamma;
    throw ValidationError("unknown limit metric: " + s);
}

inline const char* to_string(LimitAction a) { return a == LimitAction::Warn ? "warn" : "block"; }

inline LimitAction limit_action_from_string(const std::string& s) {
    if (s == "warn") return LimitAction::Warn;
    if (s == "block") return LimitAction::Block;
    throw ValidationError("unknown limit action: " + s);
}

struct ModelRecord {
    std::string id;
    std::string name;
    int risk_tier = 2; // 1..3, 1 = highest model risk
    ModelStatus status = ModelStatus::Candidate;
    Date last_validation;
    int review_period_months = 12;

    friend bool operator==(const ModelRecord&, const ModelRecord&) = default;
};

inline void validate(const ModelRecord& r) {
    if (r.id.empty()) throw ValidationError("model record: empty id");
    if (r.risk_tier < 1 || r.risk_tier > 3)
        throw ValidationError("model record: risk tier must be 1, 2 or 3");
    if (r.review_period_months <= 0)
        throw ValidationError("model record: review period must be positive");
    validate(r.last_validation);
}

struct ProductRecord {
    std::string id; // payoff family id, e.g. "autocallable"
    std::string payoff_family;
    double max_maturity_years = 10.0;
    bool forward_start_allowed = false;

    friend bool operator==(const ProductRecord&, const ProductRecord&) = default;
};

inline void validate(const ProductRecord& r) {
    if (r.id.empty()) throw ValidationError("product record: empty id");
    if (!(r.max_maturity_years > 0.0))
        throw ValidationError("product record: max maturity must be > 0");
}

struct MappingRecord {
    std::string product_family; // ProductRecord id
    std::string model_id;       // ModelRecord id
    MappingStatus status = MappingStatus::Allowed;

    friend bool operator==(const MappingRecord&, const MappingRecord&) = default;
};

struct RiskLimit {
    LimitMetric metric = LimitMetric::Gamma;
    double threshold = 1.0; // on the absolute value of the metric
    LimitAction action = LimitAction::Warn;

    friend bool operator==(const RiskLimit&, const RiskLimit&) = default;
};

inline void validate(const RiskLimit& l) {
    if (!(l.threshold > 0.0)) throw ValidationError("risk limit: threshold must be > 0");
}

struct InventoryStore {
    std::vector<ModelRecord> models;
    std::vector<ProductRecord> products;
    std::vector<MappingRecord> mappings;
    std::vector<RiskLimit> limits;

    friend bool operator==(const InventoryStore&, const InventoryStore&) = default;
};

inline const ModelRecord* find_model(const InventoryStore& s, const std::string& id) {
    for (const ModelRecord& m : s.models)
        if (m.id == id) return &m;
    return nullptr;
}

inline const ProductRecord* find_product(const InventoryStore& s, const std::string& id) {
    for (const ProductRecord& p : s.products)
        if (p.id == id) return &p;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Audit log: JSON-lines, one object per event, append-only
// ---------------------------------------------------------------------------

inline std::string audit_actor() {
    const char* user = std::getenv("MRISK_USER");
    return (user && *user) ? user : "anonymous";
}

inline std::string utc_timestamp_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::string path) : path_(std::move(path)) {}

    const std::string& path() const { return path_; }

    // Appends one event line. An empty timestamp means "now"; tests inject a
    // fixed one for reproducible files.
    void append(const std::string& action, nlohmann::json payload,
                const std::string& timestamp = "") {
        nlohmann::json line;
        line["timestamp"] = timestamp.empty() ? utc_timestamp_now() : timestamp;
        line["actor"] = audit_actor();
        line["action"] = action;
        line["payload"] = std::move(payload);
        if (path_.empty()) return; // audit disabled
        std::ofstream out(path_, std::ios::app);
        if (!out) throw ConfigError("audit log: cannot open for append: " + path_);
        out << line.dump() << "\n";
    }

    static std::vector<nlohmann::json> read_entries(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("audit log: cannot open: " + path);
        std::vector<nlohmann::json> entries;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            entries.push_back(nlohmann::json::parse(line));
        }
        return entries;
    }

private:
    std::string path_;
};

// ---------------------------------------------------------------------------
// JSON store serialisation
// ---------------------------------------------------------------------------

inline nlohmann::json record_to_json(const ModelRecord& m) {
    return {{"id", m.id},
            {"name", m.name},
            {"risk_tier", m.risk_tier},
            {"status", to_string(m.status)},
            {"last_validation", to_iso(m.last_validation)},
            {"review_period_months", m.review_period_months}};
}

inline ModelRecord model_record_from_json(const nlohmann::json& j) {
    ModelRecord m;
    m.id = j.at("id").get<std::string>();
    m.name = j.value("name", std::string{});
    m.risk_tier = j.at("risk_tier").get<int>();
    m.status = model_status_from_string(j.at("status").get<std::string>());
    m.last_validation = parse_date(j.at("last_validation").get<std::string>());
    m.review_period_months = j.at("review_period_months").get<int>();
    return m;
}

inline nlohmann::json record_to_json(const ProductRecord& p) {
    return {{"id", p.id},
            {"payoff_family", p.payoff_family},
            {"max_maturity_years", p.max_maturity_years},
            {"forward_start_allowed", p.forward_start_allowed}};
}

inline ProductRecord product_record_from_json(const nlohmann::json& j) {
    ProductRecord p;
    p.id = j.at("id").get<std::string>();
    p.payoff_family = j.value("payoff_family", std::string{});
    p.max_maturity_years = j.at("max_maturity_years").get<double>();
    p.forward_start_allowed = j.at("forward_start_allowed").get<bool>();
    return p;
}

inline nlohmann::json record_to_json(const MappingRecord& m) {
    return {{"product_family", m.product_family},
            {"model_id", m.model_id},
            {"status", to_string(m.status)}};
}

inline MappingRecord mapping_record_from_json(const nlohmann::json& j) {
    MappingRecord m;
    m.product_family = j.at("product_family").get<std::string>();
    m.model_id = j.at("model_id").get<std::string>();
    m.status = mapping_status_from_string(j.at("status").get<std::string>());
    return m;
}

inline nlohmann::json record_to_json(const RiskLimit& l) {
    return {{"metric", to_string(l.metric)},
            {"threshold", l.threshold},
            {"action", to_string(l.action)}};
}

inline RiskLimit risk_limit_from_json(const nlohmann::json& j) {
    RiskLimit l;
    l.metric = limit_metric_from_string(j.at("metric").get<std::string>());
    l.threshold = j.at("threshold").get<double>();
    l.action = limit_action_from_string(j.at("action").get<std::string>());
    return l;
}

inline nlohmann::json store_to_json(const InventoryStore& s) {
    nlohmann::json j;
    j["models"] = nlohmann::json::array();
    j["products"] = nlohmann::json::array();
    j["mappings"] = nlohmann::json::array();
    j["limits"] = nlohmann::json::array();
    for (const auto& m : s.models) j["models"].push_back(record_to_json(m));
    for (const auto& p : s.products) j["products"].push_back(record_to_json(p));
    for (const auto& m : s.mappings) j["mappings"].push_back(record_to_json(m));
    for (const auto& l : s.limits) j["limits"].push_back(record_to_json(l));
    return j;
}

inline InventoryStore store_from_json(const nlohmann::json& j) {
    InventoryStore s;
    for (const auto& m : j.value("models", nlohmann::json::array()))
        s.models.push_back(model_record_from_json(m));
    for (const auto& p : j.value("products", nlohmann::json::array()))
        s.products.push_back(product_record_from_json(p));
    for (const auto& m : j.value("mappings", nlohmann::json::array()))
        s.mappings.push_back(mapping_record_from_json(m));
    for (const auto& l : j.value("limits", nlohmann::json::array()))
        s.limits.push_back(risk_limit_from_json(l));
    return s;
}

inline void save_store(const InventoryStore& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("inventory store: cannot write: " + path);
    out << store_to_json(s).dump(2) << "\n";
}

inline InventoryStore load_store(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("inventory store: cannot open: " + path);
    nlohmann::json j;
    in >> j;
    return store_from_json(j);
}

// ---------------------------------------------------------------------------
// Mutating operations (each appends exactly one audit line)
// ---------------------------------------------------------------------------

namespace detail {

// Status order along the lifecycle chain; forward moves are legal, backward
// only restricted -> approved.
inline int status_rank(ModelStatus s) {
    switch (s) {
        case ModelStatus::Candidate: return 0;
        case ModelStatus::Approved: return 1;
        case ModelStatus::Restricted: return 2;
        case ModelStatus::Decommissioned: return 3;
    }
    return -1;
}

inline bool legal_transition(ModelStatus from, ModelStatus to) {
    if (from == ModelStatus::Restricted && to == ModelStatus::Approved) return true;
    return status_rank(to) > status_rank(from);
}

inline void apply_register_model(InventoryStore& s, const ModelRecord& r) {
    validate(r);
    if (find_model(s, r.id)) throw ValidationError("duplicate model id: " + r.id);
    s.models.push_back(r);
}

inline void apply_set_model_status(InventoryStore& s, const std::string& id, ModelStatus to) {
    for (ModelRecord& m : s.models) {
        if (m.id != id) continue;
        if (!legal_transition(m.status, to))
            throw ValidationError(std::string("illegal status transition: ") +
                                  to_string(m.status) + " -> " + to_string(to));
        m.status = to;
        return;
    }
    throw ValidationError("unknown model id: " + id);
}

inline void apply_register_product(InventoryStore& s, const ProductRecord& r) {
    validate(r);
    if (find_product(s, r.id)) throw ValidationError("duplicate product id: " + r.id);
    s.products.push_back(r);
}

inline void apply_register_mapping(InventoryStore& s, const MappingRecord& r) {
    if (!find_product(s, r.product_family))
        throw ValidationError("mapping references unknown product family: " + r.product_family);
    if (!find_model(s, r.model_id))
        throw ValidationError("mapping references unknown model id: " + r.model_id);
    for (const MappingRecord& m : s.mappings)
        if (m.product_family == r.product_family && m.model_id == r.model_id)
            throw ValidationError("duplicate mapping: " + r.product_family + " / " + r.model_id);
    s.mappings.push_back(r);
}

inline void apply_register_limit(InventoryStore& s, const RiskLimit& l) {
    validate(l);
    s.limits.push_back(l);
}

} // namespace detail

inline std::string register_model(InventoryStore& s, const ModelRecord& r, AuditLog& audit,
                                  const std::string& timestamp = "") {
    detail::apply_register_model(s, r);
    audit.append("register_model", record_to_json(r), timestamp);
    return r.id;
}

inline ModelRecord set_model_status(InventoryStore& s, const std::string& id, ModelStatus to,
                                    AuditLog& audit, const std::string& timestamp = "") {
    detail::apply_set_model_status(s, id, to);
    audit.append("set_model_status", {{"id", id}, {"status", to_string(to)}}, timestamp);
    return *find_model(s, id);
}

inline std::string register_product(InventoryStore& s, const ProductRecord& r, AuditLog& audit,
                                    const std::string& timestamp = "") {
    detail::apply_register_product(s, r);
    audit.append("register_product", record_to_json(r), timestamp);
    return r.id;
}

inline void register_mapping(InventoryStore& s, const MappingRecord& r, AuditLog& audit,
                             const std::string& timestamp = "") {
    detail::apply_register_mapping(s, r);
    audit.append("register_mapping", record_to_json(r), timestamp);
}

inline void register_limit(InventoryStore& s, const RiskLimit& l, AuditLog& audit,
                           const std::string& timestamp = "") {
    detail::apply_register_limit(s, l);
    audit.append("register_limit", record_to_json(l), timestamp);
}

// Rebuilds the store by replaying every mutating event of an audit log from
// an empty store. Non-mutating events (overrides, run records) are skipped.
inline InventoryStore replay_audit(const std::string& audit_path) {
    InventoryStore s;
    for (const nlohmann::json& e : AuditLog::read_entries(audit_path)) {
        const std::string action = e.at("action").get<std::string>();
        const nlohmann::json& payload = e.at("payload");
        if (action == "register_model") {
            detail::apply_register_model(s, model_record_from_json(payload));
        } else if (action == "set_model_status") {
            detail::apply_set_model_status(
                s, payload.at("id").get<std::string>(),
                model_status_from_string(payload.at("status").get<std::string>()));
        } else if (action == "register_product") {
            detail::apply_register_product(s, product_record_from_json(payload));
        } else if (action == "register_mapping") {
            detail::apply_register_mapping(s, mapping_record_from_json(payload));
        } else if (action == "register_limit") {
            detail::apply_register_limit(s, risk_limit_from_json(payload));
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Checks consulted by the pricing entry points
// ---------------------------------------------------------------------------

struct MappingVerdict {
    bool allowed = true;
    std::string reason; // set when blocked
    std::vector<std::string> warnings;
};

// Pure given a store snapshot. Blocked when the mapping is absent or blocked
// or the model is decommissioned; a restricted model prices with a warning.
inline MappingVerdict check_mapping(const InventoryStore& s, const std::string& product_family,
                                    const std::string& model_id) {
    if (!find_product(s, product_family))
        throw ValidationError("unknown product family: " + product_family);
    const ModelRecord* model = find_model(s, model_id);
    if (!model) throw ValidationError("unknown model id: " + model_id);

    MappingVerdict v;
    const MappingRecord* mapping = nullptr;
    for (const MappingRecord& m : s.mappings)
        if (m.product_family == product_family && m.model_id == model_id) mapping = &m;
    if (!mapping) {
        v.allowed = false;
        v.reason = "no mapping between product family '" + product_family + "' and model '" +
                   model_id + "'";
        return v;
    }
    if (mapping->status == MappingStatus::Blocked) {
        v.allowed = false;
        v.reason = "mapping blocked";
        return v;
    }
    if (model->status == ModelStatus::Decommissioned) {
        v.allowed = false;
        v.reason = "model decommissioned";
        return v;
    }
    if (model->status == ModelStatus::Restricted)
        v.warnings.push_back("model '" + model_id + "' is restricted; pricing allowed with mitigation");
    return v;
}

// Records an explicit governance override on a blocked mapping.
inline void record_override(AuditLog& audit, const std::string& product_family,
                            const std::string& model_id, const std::string& reason,
                            const std::string& timestamp = "") {
    audit.append("override_mapping",
                 {{"product_family", product_family}, {"model_id", model_id}, {"reason", reason}},
                 timestamp);
}

struct DueReview {
    std::string model_id;
    Date due;
    long overdue_days = 0;
};

// Models past last_validation + review_period, most overdue first (ties by
// id). Decommissioned models are no longer pricing and are not flagged.
inline std::vector<DueReview> due_reviews(const InventoryStore& s, const Date& as_of) {
    std::vector<DueReview> out;
    for (const ModelRecord& m : s.models) {
        if (m.status == ModelStatus::Decommissioned) continue;
        Date due = add_months(m.last_validation, m.review_period_months);
        long overdue = to_serial_days(as_of) - to_serial_days(due);
        if (overdue > 0) out.push_back({m.id, due, overdue});
    }
    std::sort(out.begin(), out.end(), [](const DueReview& a, const DueReview& b) {
        if (a.overdue_days != b.overdue_days) return a.overdue_days > b.overdue_days;
        return a.model_id < b.model_id;
    });
    return out;
}

struct LimitBreachInfo {
    LimitMetric metric = LimitMetric::Gamma;
    double value = 0.0;
    double threshold = 0.0;
    LimitAction action = LimitAction::Warn;
};

// Limits apply to the absolute value of the metric. A limit on a metric the
// report does not carry is a configuration error, not a silent pass.
inline std::vector<LimitBreachInfo> check_limits(const GreeksReport& report,
                                                 const std::vector<RiskLimit>& limits) {
    std::vector<LimitBreachInfo> breaches;
    for (const RiskLimit& l : limits) {
        validate(l);
        double value = 0.0;
        switch (l.metric) {
            case LimitMetric::CorrelationSensitivity:
                if (!report.correlation_sensitivity)
                    throw ConfigError(
                        "limit on correlation_sensitivity, but the report does not carry it");
                value = *report.correlation_sensitivity;
                break;
            case LimitMetric::Vanna: value = report.vanna; break;
            case LimitMetric::Gamma: value = report.gamma; break;
        }
        if (std::abs(value) > l.threshold) breaches.push_back({l.metric, value, l.threshold, l.action});
    }
    return breaches;
}

// Feature restrictions on an autocallable against its product-family record.
inline std::vector<std::string> restrict_features(const Autocallable& product,
                                                  const ProductRecord& record) {
    validate(record);
    std::vector<std::string> violations;
    if (!product.observation_dates.empty()) {
        double maturity = product.observation_dates.back();
        if (maturity > record.max_maturity_years) {
            std::ostringstream os;
            os << "maturity " << maturity << "y exceeds the family limit of "
               << record.max_maturity_years << "y";
            violations.push_back(os.str());
        }
    }
    if (product.forward_start && !record.forward_start_allowed)
        violations.push_back("forward-start feature is not allowed for family '" + record.id + "'");
    return violations;
}

} // namespace mrisk

#include "orvicon/config.hpp"

#include <fstream>
#include <sstream>

namespace orvicon::harness {

namespace {

bool non_negative_integer(const json& j) {
    return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        if (!out.empty()) out += "; ";
        out += l;
    }
    return out;
}

using Diagnostics = std::vector<std::string>;

/// Typed field access on one JSON object. Every key read is remembered so
/// that finish() can flag the ones nobody asked for.
class Fields {
public:
    Fields(const json& obj, std::string path, Diagnostics& diag) : obj_(obj), path_(std::move(path)), diag_(diag) {
        if (!obj_.is_object()) {
            error("", "expected an object");
            valid_ = false;
        }
    }
    Fields(const Fields&) = delete;
    ~Fields() { finish(); }

    bool valid() const noexcept { return valid_; }
    std::string at(const std::string& key) const { return path_ + "." + key; }

    void error(const std::string& key, const std::string& msg) const {
        diag_.push_back((key.empty() ? path_ : at(key)) + ": " + msg);
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return valid_ && obj_.contains(key) && !obj_.at(key).is_null();
    }

    const json* raw(const std::string& key, bool required) {
        if (!has(key)) {
            if (required && valid_) error(key, "required field missing");
            return nullptr;
        }
        return &obj_.at(key);
    }

    template <typename T>
    std::optional<T> get(const std::string& key, bool required = true) {
        const json* j = raw(key, required);
        if (!j) return std::nullopt;
        if constexpr (std::is_same_v<T, bool>) {
            if (!j->is_boolean()) return type_error(key, "a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!j->is_string()) return type_error(key, "a string");
        } else if constexpr (std::is_integral_v<T>) {
            if (!j->is_number_integer()) return type_error(key, "an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (!non_negative_integer(*j)) return type_error(key, "a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!j->is_number()) return type_error(key, "a number");
        }
        try {
            return j->get<T>();
        } catch (const json::exception&) {
            return type_error(key, "a value of the right type");
        }
    }

    template <typename T>
    T get_or(const std::string& key, T fallback) {
        auto v = get<T>(key, false);
        return v ? *v : fallback;
    }

    void finish() {
        if (!valid_ || finished_) return;
        finished_ = true;
        for (const auto& [key, _] : obj_.items()) {
            if (!seen_.contains(key)) error(key, "unknown key");
        }
    }

private:
    std::nullopt_t type_error(const std::string& key, const char* what) {
        error(key, std::string("expected ") + what);
        return std::nullopt;
    }

    const json& obj_;
    std::string path_;
    Diagnostics& diag_;
    std::set<std::string> seen_;
    bool valid_ = true;
    bool finished_ = false;
};

std::optional<geo::Cell> parse_cell(const json* j, const std::string& path, Diagnostics& diag) {
    if (!j) return std::nullopt;
    if (!j->is_array() || j->size() != 2 || !non_negative_integer((*j)[0]) || !non_negative_integer((*j)[1])) {
        diag.push_back(path + ": expected [row, col] with non-negative integers");
        return std::nullopt;
    }
    return geo::Cell{(*j)[0].get<std::size_t>(), (*j)[1].get<std::size_t>()};
}

std::optional<dataspace::TimeWindow> parse_window(const json* j, const std::string& path, Diagnostics& diag) {
    if (!j) return std::nullopt;
    Fields f(*j, path, diag);
    auto from = f.get<UnixSeconds>("from");
    auto to = f.get<UnixSeconds>("to");
    if (!from || !to) return std::nullopt;
    return dataspace::TimeWindow{*from, *to};
}

std::optional<dataspace::BoundingBox> parse_bbox(const json* j, const std::string& path, Diagnostics& diag) {
    if (!j) return std::nullopt;
    Fields f(*j, path, diag);
    auto a = f.get<double>("lat_min");
    auto b = f.get<double>("lat_max");
    auto c = f.get<double>("lon_min");
    auto d = f.get<double>("lon_max");
    if (!a || !b || !c || !d) return std::nullopt;
    return dataspace::BoundingBox{*a, *b, *c, *d};
}

template <typename F>
void each(const json* arr, const std::string& path, Diagnostics& diag, F&& fn) {
    if (!arr) return;
    if (!arr->is_array()) {
        diag.push_back(path + ": expected a list");
        return;
    }
    for (std::size_t i = 0; i < arr->size(); ++i) fn((*arr)[i], path + "[" + std::to_string(i) + "]");
}

void parse_field(const json& j, const std::string& path, ScenarioConfig& cfg, Diagnostics& diag) {
    Fields f(j, path, diag);
    if (!f.valid()) return;
    auto& field = cfg.sim.field;
    field.grid.rows = f.get_or<std::size_t>("rows", 0);
    field.grid.cols = f.get_or<std::size_t>("cols", 0);
    if (field.grid.rows < 1) f.error("rows", "must be >= 1");
    if (field.grid.cols < 1) f.error("cols", "must be >= 1");
    field.grid.cell_size_m = f.get_or<double>("cell_size_m", 0.0);
    if (!(field.grid.cell_size_m > 0)) f.error("cell_size_m", "must be > 0");
    if (const json* o = f.raw("origin", true)) {
        Fields of(*o, f.at("origin"), diag);
        field.grid.origin.lat = of.get_or<double>("lat", 0.0);
        field.grid.origin.lon = of.get_or<double>("lon", 0.0);
        if (!(field.grid.origin.lat >= -90 && field.grid.origin.lat <= 90)) of.error("lat", "outside [-90, 90]");
        if (!(field.grid.origin.lon >= -180 && field.grid.origin.lon <= 180)) of.error("lon", "outside [-180, 180]");
    }

    const auto cells = field.grid.rows * field.grid.cols;
    const json* explicit_elev = f.raw("elevation_m", false);
    const json* plane = f.raw("elevation_plane", false);
    if (explicit_elev && plane) f.error("elevation_m", "give either elevation_m or elevation_plane, not both");
    if (explicit_elev) {
        if (!explicit_elev->is_array() || explicit_elev->size() != field.grid.rows) {
            f.error("elevation_m", "expected " + std::to_string(field.grid.rows) + " rows");
        } else {
            for (std::size_t r = 0; r < field.grid.rows; ++r) {
                const auto& row = (*explicit_elev)[r];
                if (!row.is_array() || row.size() != field.grid.cols) {
                    f.error("elevation_m", "row " + std::to_string(r) + " must have " + std::to_string(field.grid.cols) + " values");
                    continue;
                }
                for (const auto& v : row) {
                    if (!v.is_number()) f.error("elevation_m", "values must be numbers");
                    else field.elevation_m.push_back(v.get<double>());
                }
            }
        }
    } else {
        double base = 0, per_row = 0, per_col = 0;
        if (plane) {
            Fields pf(*plane, f.at("elevation_plane"), diag);
            base = pf.get_or<double>("base_m", 0.0);
            per_row = pf.get_or<double>("per_row_m", 0.0);
            per_col = pf.get_or<double>("per_col_m", 0.0);
        }
        for (std::size_t r = 0; r < field.grid.rows; ++r) {
            for (std::size_t c = 0; c < field.grid.cols; ++c) {
                field.elevation_m.push_back(base + per_row * static_cast<double>(r) + per_col * static_cast<double>(c));
            }
        }
    }
    if (field.elevation_m.size() != cells && diag.empty()) f.error("elevation_m", "wrong number of cells");

    if (const json* c = f.raw("climate", false)) {
        Fields cf(*c, f.at("climate"), diag);
        auto& cl = field.climate;
        cl.t_mean_c = cf.get_or<double>("t_mean_c", cl.t_mean_c);
        cl.diurnal_amp_c = cf.get_or<double>("diurnal_amp_c", cl.diurnal_amp_c);
        cl.t_peak_s = cf.get_or<std::int64_t>("t_peak_s", cl.t_peak_s);
        cl.noise_sigma_c = cf.get_or<double>("noise_sigma_c", cl.noise_sigma_c);
        if (cl.diurnal_amp_c < 0) cf.error("diurnal_amp_c", "must be >= 0");
        if (cl.noise_sigma_c < 0) cf.error("noise_sigma_c", "must be >= 0");
        if (cl.t_peak_s < 0 || cl.t_peak_s >= 86400) cf.error("t_peak_s", "must be a second of day");
    }
    each(f.raw("frost_events", false), f.at("frost_events"), diag, [&](const json& e, const std::string& p) {
        Fields ef(e, p, diag);
        sim::FrostEvent ev;
        ev.start_s = ef.get_or<UnixSeconds>("start_s", 0);
        ev.end_s = ef.get_or<UnixSeconds>("end_s", 0);
        ev.cooling_rate_c_per_h = ef.get_or<double>("cooling_rate_c_per_h", 0.0);
        ev.pooling_gain = ef.get_or<double>("pooling_gain", 0.0);
        if (!(ev.start_s < ev.end_s)) ef.error("end_s", "must be after start_s");
        if (ev.cooling_rate_c_per_h < 0) ef.error("cooling_rate_c_per_h", "must be >= 0");
        if (ev.pooling_gain < 0) ef.error("pooling_gain", "must be >= 0");
        field.frost_events.push_back(ev);
    });
}

std::optional<dataspace::UsagePolicy> parse_policy(const json& j, const std::string& path, Diagnostics& diag) {
    Fields f(j, path, diag);
    if (!f.valid()) return std::nullopt;
    dataspace::UsagePolicy p;
    p.policy_id = f.get_or<std::string>("policy_id", "");
    if (p.policy_id.empty()) f.error("policy_id", "required non-empty string");
    if (auto w = parse_window(f.raw("time_window", true), f.at("time_window"), diag)) p.time_window = *w;
    p.spatial_scope = parse_bbox(f.raw("spatial_scope", false), f.at("spatial_scope"), diag);
    auto rate = f.get<std::int64_t>("max_requests_per_hour");
    if (rate && *rate < 1) f.error("max_requests_per_hour", "must be >= 1");
    p.max_requests_per_hour = rate && *rate >= 1 ? static_cast<std::uint32_t>(*rate) : 1;
    p.expires_at = f.get_or<UnixSeconds>("expires_at", 0);
    if (!f.has("expires_at")) f.error("expires_at", "required field missing");
    p.purpose = f.get_or<std::string>("purpose", "");
    try {
        p.validate();
    } catch (const Error& e) {
        f.error("", e.what());
    }
    return p;
}

constexpr std::pair<ActionKind, std::string_view> kActions[] = {
    {ActionKind::Enroll, "enroll"},
    {ActionKind::CatalogQuery, "catalog_query"},
    {ActionKind::RequestContract, "request_contract"},
    {ActionKind::Countersign, "countersign"},
    {ActionKind::DataRequest, "data_request"},
    {ActionKind::RevokeMember, "revoke_member"},
    {ActionKind::RevokeContract, "revoke_contract"},
};

constexpr std::pair<Variant, std::string_view> kVariants[] = {
    {Variant::None, "none"},
    {Variant::BadSignature, "bad_signature"},
    {Variant::ForgedSender, "forged_sender"},
    {Variant::Replay, "replay"},
};

}  // namespace

std::string_view to_string(ActionKind k) noexcept {
    for (const auto& [v, n] : kActions) {
        if (v == k) return n;
    }
    return "unknown";
}

std::string_view to_string(Variant v) noexcept {
    for (const auto& [x, n] : kVariants) {
        if (x == v) return n;
    }
    return "unknown";
}

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : Error(ErrorCode::ConfigInvalid, join_lines(diagnostics)), diagnostics_(std::move(diagnostics)) {}

const MemberSpec* ScenarioConfig::find_member(const std::string& id) const {
    for (const auto& m : members) {
        if (m.member_id == id) return &m;
    }
    return nullptr;
}

const OfferSpec* ScenarioConfig::find_offer(const std::string& key) const {
    for (const auto& o : offers) {
        if (o.key == key) return &o;
    }
    return nullptr;
}

ScenarioConfig parse_scenario(const json& doc) {
    Diagnostics diag;
    ScenarioConfig cfg;
    {
        Fields root(doc, "$", diag);
        if (!root.valid()) throw ConfigError(diag);

        auto version = root.get<int>("schema_version");
        if (version && *version != kSchemaVersion) {
            root.error("schema_version", "unsupported version " + std::to_string(*version));
        }
        cfg.name = root.get_or<std::string>("name", "scenario");
        cfg.seed = root.get_or<std::uint64_t>("seed", 0);
        cfg.sim.seed = cfg.seed;

        if (const json* c = root.raw("clock", true)) {
            Fields cf(*c, root.at("clock"), diag);
            cfg.clock.start_s = cf.get_or<UnixSeconds>("start_s", 0);
            cfg.clock.end_s = cf.get_or<UnixSeconds>("end_s", 0);
            cfg.clock.tick_s = cf.get_or<std::int64_t>("tick_s", 1);
            if (!cf.has("start_s")) cf.error("start_s", "required field missing");
            if (!cf.has("end_s")) cf.error("end_s", "required field missing");
            if (!(cfg.clock.start_s < cfg.clock.end_s)) cf.error("end_s", "must be after start_s");
            if (cfg.clock.tick_s < 1) cf.error("tick_s", "must be >= 1");
        }

        if (const json* f = root.raw("field", true)) parse_field(*f, root.at("field"), cfg, diag);

        if (const json* r = root.raw("radio", false)) {
            Fields rf(*r, root.at("radio"), diag);
            cfg.sim.radio.duplicate_fraction = rf.get_or<double>("duplicate_fraction", 0.0);
            cfg.sim.radio.replay_delay_s = rf.get_or<std::int64_t>("replay_delay_s", 0);
            if (!(cfg.sim.radio.duplicate_fraction >= 0 && cfg.sim.radio.duplicate_fraction <= 1)) {
                rf.error("duplicate_fraction", "must lie in [0, 1]");
            }
            if (cfg.sim.radio.replay_delay_s < 0) rf.error("replay_delay_s", "must be >= 0");
        }

        std::set<std::uint64_t> device_ids;
        each(root.raw("sensors", true), root.at("sensors"), diag, [&](const json& s, const std::string& p) {
            Fields sf(s, p, diag);
            SensorSpec spec;
            spec.sim.device_id = sf.get_or<std::uint64_t>("device_id", 0);
            if (!sf.has("device_id")) sf.error("device_id", "required field missing");
            else if (!device_ids.insert(spec.sim.device_id).second) sf.error("device_id", "duplicate device id");
            if (auto cell = parse_cell(sf.raw("cell", true), sf.at("cell"), diag)) {
                spec.sim.cell = *cell;
                if (!cfg.sim.field.grid.contains(*cell)) sf.error("cell", "outside the field grid");
            }
            spec.sim.report_period_s = sf.get_or<std::int64_t>("report_period_s", 600);
            if (spec.sim.report_period_s <= 0) sf.error("report_period_s", "must be > 0");
            spec.sim.first_report_s = sf.get_or<UnixSeconds>("first_report_s", cfg.clock.start_s);
            spec.sim.next_counter = sf.get_or<std::uint32_t>("first_counter", 1);
            auto battery = sf.get_or<std::uint32_t>("battery_pct", 100);
            if (battery > 100) sf.error("battery_pct", "must be <= 100");
            spec.sim.battery_pct = static_cast<std::uint8_t>(std::min<std::uint32_t>(battery, 100));
            spec.label = sf.get_or<std::string>("label", "sensor-" + std::to_string(spec.sim.device_id));
            spec.field_id = sf.get_or<std::string>("field_id", "");
            if (spec.field_id.empty() || spec.field_id.size() > provider::kMaxIdLength) {
                sf.error("field_id", "required, 1..32 characters");
            }
            spec.registered = sf.get_or<bool>("registered", true);
            cfg.sensors.push_back(spec);
            cfg.sim.sensors.push_back(spec.sim);
        });

        if (const json* g = root.raw("gateway", true)) {
            Fields gf(*g, root.at("gateway"), diag);
            cfg.gateway.member_id = gf.get_or<std::string>("member_id", "");
            if (cfg.gateway.member_id.empty()) gf.error("member_id", "required non-empty string");
            if (auto cell = parse_cell(gf.raw("cell", true), gf.at("cell"), diag)) {
                cfg.gateway.cell = *cell;
                if (!cfg.sim.field.grid.contains(*cell)) gf.error("cell", "outside the field grid");
            }
            cfg.gateway.flush.max_pending = gf.get_or<std::size_t>("flush_max_frames", 32);
            cfg.gateway.flush.max_age_s = gf.get_or<std::int64_t>("flush_max_age_s", 5);
            if (cfg.gateway.flush.max_pending < 1) gf.error("flush_max_frames", "must be >= 1");
            if (cfg.gateway.flush.max_age_s < 0) gf.error("flush_max_age_s", "must be >= 0");
        }

        if (const json* d = root.raw("dataspace", true)) {
            Fields df(*d, root.at("dataspace"), diag);
            cfg.operator_id = df.get_or<std::string>("operator_id", "dataspace");
            each(df.raw("approved_certs", true), df.at("approved_certs"), diag, [&](const json& c, const std::string& p) {
                if (!c.is_string()) diag.push_back(p + ": expected a string");
                else cfg.approved_certs.insert(c.get<std::string>());
            });
            each(df.raw("certificates", true), df.at("certificates"), diag, [&](const json& c, const std::string& p) {
                Fields cf(c, p, diag);
                dataspace::ConnectorCertificate cert;
                cert.cert_id = cf.get_or<std::string>("cert_id", "");
                cert.connector_build_hash = cf.get_or<std::string>("connector_build_hash", "");
                cert.issued_by = cf.get_or<std::string>("issued_by", "");
                cert.valid_until = cf.get_or<UnixSeconds>("valid_until", 0);
                if (cert.cert_id.empty()) cf.error("cert_id", "required non-empty string");
                if (!cf.has("valid_until")) cf.error("valid_until", "required field missing");
                if (!cfg.certificates.emplace(cert.cert_id, cert).second) cf.error("cert_id", "duplicate certificate");
            });
        }

        std::set<std::string> member_ids;
        each(root.raw("members", true), root.at("members"), diag, [&](const json& m, const std::string& p) {
            Fields mf(m, p, diag);
            MemberSpec spec;
            spec.member_id = mf.get_or<std::string>("member_id", "");
            if (spec.member_id.empty()) mf.error("member_id", "required non-empty string");
            else if (!member_ids.insert(spec.member_id).second) mf.error("member_id", "duplicate member");
            spec.display_name = mf.get_or<std::string>("display_name", spec.member_id);
            auto role_name = mf.get_or<std::string>("role", "");
            auto role = dataspace::role_from_string(role_name);
            if (!role) mf.error("role", "must be provider, consumer or gateway");
            else spec.role = *role;
            spec.cert_id = mf.get_or<std::string>("cert_id", "");
            if (!cfg.certificates.contains(spec.cert_id)) mf.error("cert_id", "unknown certificate '" + spec.cert_id + "'");
            spec.enroll_at_s = mf.get<UnixSeconds>("enroll_at_s", false);
            cfg.members.push_back(spec);
        });

        if (auto* gw = cfg.find_member(cfg.gateway.member_id); !gw || gw->role != dataspace::Role::Gateway) {
            diag.push_back("$.gateway.member_id: must name a member with role gateway");
        }

        std::set<std::string> offer_keys;
        each(root.raw("offers", false), root.at("offers"), diag, [&](const json& o, const std::string& p) {
            Fields of(o, p, diag);
            OfferSpec spec;
            spec.key = of.get_or<std::string>("key", "");
            if (spec.key.empty()) of.error("key", "required non-empty string");
            else if (!offer_keys.insert(spec.key).second) of.error("key", "duplicate offer key");
            spec.provider = of.get_or<std::string>("provider", "");
            if (auto* m = cfg.find_member(spec.provider); !m || m->role != dataspace::Role::Provider) {
                of.error("provider", "must name a member with role provider");
            }
            spec.dataset_id = of.get_or<std::string>("dataset_id", "");
            bool known = std::ranges::any_of(cfg.sensors, [&](const SensorSpec& s) { return s.registered && s.field_id == spec.dataset_id; });
            if (!known) of.error("dataset_id", "no registered sensor belongs to dataset '" + spec.dataset_id + "'");
            spec.publish_at_s = of.get_or<UnixSeconds>("publish_at_s", cfg.clock.start_s);
            if (const json* pol = of.raw("policy", true)) {
                if (auto policy = parse_policy(*pol, of.at("policy"), diag)) spec.policy = *policy;
            }
            cfg.offers.push_back(spec);
        });

        if (const json* a = root.raw("provider_agent", false)) {
            Fields af(*a, root.at("provider_agent"), diag);
            cfg.provider_agent.auto_accept = af.get_or<bool>("auto_accept", true);
            each(af.raw("reject_consumers", false), af.at("reject_consumers"), diag, [&](const json& c, const std::string& p) {
                if (!c.is_string()) diag.push_back(p + ": expected a string");
                else cfg.provider_agent.reject_consumers.insert(c.get<std::string>());
            });
        }

        each(root.raw("script", false), root.at("script"), diag, [&](const json& s, const std::string& p) {
            Fields sf(s, p, diag);
            ScriptAction a;
            a.at_s = sf.get_or<UnixSeconds>("at_s", 0);
            if (!sf.has("at_s")) sf.error("at_s", "required field missing");
            else if (a.at_s < cfg.clock.start_s || a.at_s > cfg.clock.end_s) sf.error("at_s", "outside the clock range");
            a.actor = sf.get_or<std::string>("actor", "");
            if (!cfg.find_member(a.actor) && a.actor != cfg.operator_id) {
                sf.error("actor", "unknown member '" + a.actor + "'");
            }
            auto kind_name = sf.get_or<std::string>("action", "");
            bool kind_ok = false;
            for (const auto& [k, n] : kActions) {
                if (n == kind_name) {
                    a.kind = k;
                    kind_ok = true;
                }
            }
            if (!kind_ok) sf.error("action", "unknown action '" + kind_name + "'");
            a.offer = sf.get_or<std::string>("offer", "");
            a.contract_of = sf.get_or<std::string>("contract_of", a.actor);
            a.target = sf.get_or<std::string>("target", "");
            a.window = parse_window(sf.raw("window", false), sf.at("window"), diag);
            a.window_last_s = sf.get<std::int64_t>("window_last_s", false);
            a.bbox = parse_bbox(sf.raw("bbox", false), sf.at("bbox"), diag);
            auto variant_name = sf.get_or<std::string>("variant", "none");
            bool variant_ok = false;
            for (const auto& [v, n] : kVariants) {
                if (n == variant_name) {
                    a.variant = v;
                    variant_ok = true;
                }
            }
            if (!variant_ok) sf.error("variant", "unknown variant '" + variant_name + "'");
            a.cert_id = sf.get_or<std::string>("cert_id", "");
            if (!a.cert_id.empty() && !cfg.certificates.contains(a.cert_id)) sf.error("cert_id", "unknown certificate");

            bool needs_offer = a.kind == ActionKind::RequestContract || a.kind == ActionKind::Countersign ||
                               a.kind == ActionKind::DataRequest || a.kind == ActionKind::RevokeContract;
            if (needs_offer && !cfg.find_offer(a.offer)) sf.error("offer", "unknown offer '" + a.offer + "'");
            if (needs_offer && !cfg.find_member(a.contract_of)) sf.error("contract_of", "unknown member");
            if (a.kind == ActionKind::DataRequest && !a.window && !a.window_last_s) {
                sf.error("window", "data_request needs window or window_last_s");
            }
            if (a.kind == ActionKind::RevokeMember) {
                if (a.actor != cfg.operator_id) sf.error("actor", "only the operator revokes members");
                if (!cfg.find_member(a.target)) sf.error("target", "unknown member '" + a.target + "'");
            } else if (a.actor == cfg.operator_id) {
                sf.error("actor", "the operator only performs revoke_member");
            }
            if (a.variant == Variant::ForgedSender && !cfg.find_member(a.target)) {
                sf.error("target", "forged_sender needs the impersonated member as target");
            }
            cfg.script.push_back(a);
        });

        if (const json* fr = root.raw("frost", false)) {
            Fields ff(*fr, root.at("frost"), diag);
            auto critical = ff.get<double>("critical_temp_c");
            frost::FrostConfig fc{critical.value_or(0.0)};
            fc.idw_power = ff.get_or<double>("idw_power", 2.0);
            fc.snap_epsilon_m = ff.get_or<double>("snap_epsilon_m", 0.5);
            fc.trend_window = ff.get_or<std::size_t>("trend_window", 6);
            if (critical) {
                try {
                    fc.validate();
                    cfg.frost = fc;
                } catch (const Error& e) {
                    ff.error("", e.what());
                }
            }
        }
    }

    if (diag.empty()) {
        try {
            cfg.sim.validate();
        } catch (const Error& e) {
            diag.push_back(std::string("$.field: ") + e.what());
        }
    }
    if (!diag.empty()) throw ConfigError(std::move(diag));
    return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError({file.string() + ": cannot open"});
    std::stringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw ConfigError({file.string() + ": " + e.what()});
    }
    return parse_scenario(doc);
}

json scenario_to_json(const ScenarioConfig& cfg) {
    const auto& field = cfg.sim.field;
    json elev = json::array();
    for (std::size_t r = 0; r < field.grid.rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < field.grid.cols; ++c) row.push_back(field.elevation_m[field.grid.index({r, c})]);
        elev.push_back(std::move(row));
    }
    json events = json::array();
    for (const auto& e : field.frost_events) {
        events.push_back({{"start_s", e.start_s},
                          {"end_s", e.end_s},
                          {"cooling_rate_c_per_h", e.cooling_rate_c_per_h},
                          {"pooling_gain", e.pooling_gain}});
    }
    json sensors = json::array();
    for (const auto& s : cfg.sensors) {
        sensors.push_back({{"device_id", s.sim.device_id},
                           {"cell", {s.sim.cell.row, s.sim.cell.col}},
                           {"report_period_s", s.sim.report_period_s},
                           {"first_report_s", s.sim.first_report_s},
                           {"first_counter", s.sim.next_counter},
                           {"battery_pct", s.sim.battery_pct},
                           {"label", s.label},
                           {"field_id", s.field_id},
                           {"registered", s.registered}});
    }
    json certs = json::array();
    for (const auto& [_, c] : cfg.certificates) certs.push_back(dataspace::certificate_to_json(c));
    json members = json::array();
    for (const auto& m : cfg.members) {
        json mj = {{"member_id", m.member_id},
                   {"display_name", m.display_name},
                   {"role", std::string(dataspace::to_string(m.role))},
                   {"cert_id", m.cert_id}};
        if (m.enroll_at_s) mj["enroll_at_s"] = *m.enroll_at_s;
        members.push_back(std::move(mj));
    }
    json offers = json::array();
    for (const auto& o : cfg.offers) {
        auto pj = dataspace::policy_to_json(o.policy);
        if (!o.policy.spatial_scope) pj.erase("spatial_scope");
        offers.push_back({{"key", o.key},
                          {"provider", o.provider},
                          {"dataset_id", o.dataset_id},
                          {"publish_at_s", o.publish_at_s},
                          {"policy", std::move(pj)}});
    }
    json script = json::array();
    for (const auto& a : cfg.script) {
        json aj = {{"at_s", a.at_s}, {"actor", a.actor}, {"action", std::string(to_string(a.kind))}};
        if (!a.offer.empty()) aj["offer"] = a.offer;
        if (!a.contract_of.empty() && a.contract_of != a.actor) aj["contract_of"] = a.contract_of;
        if (!a.target.empty()) aj["target"] = a.target;
        if (a.window) aj["window"] = dataspace::window_to_json(*a.window);
        if (a.window_last_s) aj["window_last_s"] = *a.window_last_s;
        if (a.bbox) aj["bbox"] = dataspace::bbox_to_json(*a.bbox);
        if (a.variant != Variant::None) aj["variant"] = std::string(to_string(a.variant));
        if (!a.cert_id.empty()) aj["cert_id"] = a.cert_id;
        script.push_back(std::move(aj));
    }
    json doc = {
        {"schema_version", cfg.schema_version},
        {"name", cfg.name},
        {"seed", cfg.seed},
        {"clock", {{"start_s", cfg.clock.start_s}, {"end_s", cfg.clock.end_s}, {"tick_s", cfg.clock.tick_s}}},
        {"field",
         {{"rows", field.grid.rows},
          {"cols", field.grid.cols},
          {"cell_size_m", field.grid.cell_size_m},
          {"origin", {{"lat", field.grid.origin.lat}, {"lon", field.grid.origin.lon}}},
          {"elevation_m", std::move(elev)},
          {"climate",
           {{"t_mean_c", field.climate.t_mean_c},
            {"diurnal_amp_c", field.climate.diurnal_amp_c},
            {"t_peak_s", field.climate.t_peak_s},
            {"noise_sigma_c", field.climate.noise_sigma_c}}},
          {"frost_events", std::move(events)}}},
        {"radio",
         {{"duplicate_fraction", cfg.sim.radio.duplicate_fraction}, {"replay_delay_s", cfg.sim.radio.replay_delay_s}}},
        {"sensors", std::move(sensors)},
        {"gateway",
         {{"member_id", cfg.gateway.member_id},
          {"cell", {cfg.gateway.cell.row, cfg.gateway.cell.col}},
          {"flush_max_frames", cfg.gateway.flush.max_pending},
          {"flush_max_age_s", cfg.gateway.flush.max_age_s}}},
        {"dataspace",
         {{"operator_id", cfg.operator_id}, {"approved_certs", cfg.approved_certs}, {"certificates", std::move(certs)}}},
        {"members", std::move(members)},
        {"offers", std::move(offers)},
        {"provider_agent",
         {{"auto_accept", cfg.provider_agent.auto_accept}, {"reject_consumers", cfg.provider_agent.reject_consumers}}},
        {"script", std::move(script)},
    };
    if (cfg.frost) {
        doc["frost"] = {{"critical_temp_c", cfg.frost->critical_temp_c},
                        {"idw_power", cfg.frost->idw_power},
                        {"snap_epsilon_m", cfg.frost->snap_epsilon_m},
                        {"trend_window", cfg.frost->trend_window}};
    }
    return doc;
}

}  // namespace orvicon::harness

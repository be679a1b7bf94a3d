#pragma once

#include "orvicon/dataspace.hpp"
#include "orvicon/error.hpp"
#include "orvicon/frost.hpp"
#include "orvicon/gateway.hpp"
#include "orvicon/sensorsim.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace orvicon::harness {

using wire::json;

inline constexpr int kSchemaVersion = 1;

/// Thrown when a scenario document fails validation; carries one line per
/// problem, each prefixed with the JSON path of the offending field.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> diagnostics);
    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

private:
    std::vector<std::string> diagnostics_;
};

struct ClockSpec {
    UnixSeconds start_s = 0;
    UnixSeconds end_s = 0;
    std::int64_t tick_s = 1;
};

struct SensorSpec {
    sim::SimSensor sim;
    std::string label;
    std::string field_id;
    bool registered = true;  ///< unregistered sensors exercise the quarantine path
};

struct GatewaySpec {
    std::string member_id;
    geo::Cell cell;
    gateway::FlushPolicy flush;
};

struct MemberSpec {
    std::string member_id;
    std::string display_name;
    dataspace::Role role = dataspace::Role::Consumer;
    std::string cert_id;
    std::optional<UnixSeconds> enroll_at_s;  ///< absent: only a script action enrolls it
};

struct OfferSpec {
    std::string key;
    std::string provider;
    std::string dataset_id;
    UnixSeconds publish_at_s = 0;
    dataspace::UsagePolicy policy;
};

struct ProviderAgentSpec {
    bool auto_accept = true;
    std::set<std::string> reject_consumers;
};

enum class ActionKind { Enroll, CatalogQuery, RequestContract, Countersign, DataRequest, RevokeMember, RevokeContract };
std::string_view to_string(ActionKind k) noexcept;

enum class Variant { None, BadSignature, ForgedSender, Replay };
std::string_view to_string(Variant v) noexcept;

struct ScriptAction {
    UnixSeconds at_s = 0;
    std::string actor;
    ActionKind kind = ActionKind::CatalogQuery;
    std::string offer;         ///< offer key
    std::string contract_of;   ///< whose contract on that offer; defaults to the actor
    std::string target;        ///< member to revoke, or identity to impersonate
    std::optional<dataspace::TimeWindow> window;
    std::optional<std::int64_t> window_last_s;  ///< window [now - last, now]
    std::optional<dataspace::BoundingBox> bbox;
    Variant variant = Variant::None;
    std::string cert_id;       ///< enroll with a different certificate than declared
};

struct ScenarioConfig {
    int schema_version = kSchemaVersion;
    std::string name;
    std::uint64_t seed = 0;
    ClockSpec clock;
    sim::Scenario sim;
    std::vector<SensorSpec> sensors;
    GatewaySpec gateway;
    std::string operator_id = "dataspace";
    std::set<std::string> approved_certs;
    std::map<std::string, dataspace::ConnectorCertificate> certificates;
    std::vector<MemberSpec> members;
    std::vector<OfferSpec> offers;
    ProviderAgentSpec provider_agent;
    std::vector<ScriptAction> script;
    std::optional<frost::FrostConfig> frost;

    const MemberSpec* find_member(const std::string& id) const;
    const OfferSpec* find_offer(const std::string& key) const;
};

/// Strict parse: unknown keys, wrong types, missing required fields and
/// broken references all become diagnostics. Throws ConfigError.
ScenarioConfig parse_scenario(const json& doc);
ScenarioConfig load_scenario(const std::filesystem::path& file);
json scenario_to_json(const ScenarioConfig& cfg);

}  // namespace orvicon::harness

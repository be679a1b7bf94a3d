#pragma once

#include "orvicon/audit.hpp"
#include "orvicon/error.hpp"
#include "orvicon/geo.hpp"
#include "orvicon/provider.hpp"
#include "orvicon/random.hpp"
#include "orvicon/transport.hpp"
#include "orvicon/wire.hpp"

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace orvicon::dataspace {

using wire::json;

// ---------------------------------------------------------------------------
// Membership and certification
// ---------------------------------------------------------------------------

enum class Role { Provider, Consumer, Gateway };
std::string_view to_string(Role r) noexcept;
std::optional<Role> role_from_string(std::string_view name) noexcept;

enum class MemberStatus { Active, Revoked };

inline constexpr std::size_t kSharedSecretSize = 32;

struct MemberIdentity {
    std::string member_id;
    std::string display_name;
    Role role = Role::Consumer;
    Bytes shared_secret;
    UnixSeconds enrolled_at = 0;
    MemberStatus status = MemberStatus::Active;
};

struct ConnectorCertificate {
    std::string cert_id;
    std::string connector_build_hash;
    std::string issued_by;
    UnixSeconds valid_until = 0;
};

json certificate_to_json(const ConnectorCertificate& c);
ConnectorCertificate certificate_from_json(const json& j);

struct Applicant {
    std::string member_id;
    std::string display_name;
    Role role = Role::Consumer;
};

/// Throws Error(CertificateNotApproved) or Error(CertificateExpired).
void check_certificate(const ConnectorCertificate& cert, const std::set<std::string>& approved, UnixSeconds now);

// ---------------------------------------------------------------------------
// Usage policy
// ---------------------------------------------------------------------------

struct TimeWindow {
    UnixSeconds from = 0;
    UnixSeconds to = 0;

    bool contains(UnixSeconds t) const noexcept { return from <= t && t <= to; }
    bool contains(const TimeWindow& w) const noexcept { return from <= w.from && w.to <= to; }
    bool operator==(const TimeWindow&) const = default;
};

struct BoundingBox {
    double lat_min = 0.0;
    double lat_max = 0.0;
    double lon_min = 0.0;
    double lon_max = 0.0;

    bool well_ordered() const noexcept { return lat_min <= lat_max && lon_min <= lon_max; }
    bool contains(geo::LatLon p) const noexcept {
        return lat_min <= p.lat && p.lat <= lat_max && lon_min <= p.lon && p.lon <= lon_max;
    }
    bool contains(const BoundingBox& b) const noexcept {
        return lat_min <= b.lat_min && b.lat_max <= lat_max && lon_min <= b.lon_min && b.lon_max <= lon_max;
    }
    bool operator==(const BoundingBox&) const = default;
};

struct UsagePolicy {
    std::string policy_id;
    TimeWindow time_window;
    std::optional<BoundingBox> spatial_scope;
    std::uint32_t max_requests_per_hour = 1;
    UnixSeconds expires_at = 0;
    std::string purpose;

    /// Throws Error(InvalidPolicy).
    void validate() const;
    bool operator==(const UsagePolicy&) const = default;
};

json window_to_json(const TimeWindow& w);
TimeWindow window_from_json(const json& j);
json bbox_to_json(const BoundingBox& b);
BoundingBox bbox_from_json(const json& j);
json policy_to_json(const UsagePolicy& p);
/// Throws Error(InvalidPolicy) on shape errors.
UsagePolicy policy_from_json(const json& j);

// ---------------------------------------------------------------------------
// Contracts
// ---------------------------------------------------------------------------

enum class ContractState { Offered, Requested, Agreed, Active, Rejected, Expired, Revoked };
enum class ContractEvent { ConsumerRequest, ProviderAccept, ProviderReject, ConsumerCountersign, ProviderRevoke, ClockPastExpiry };

std::string_view to_string(ContractState s) noexcept;
std::optional<ContractState> contract_state_from_string(std::string_view name) noexcept;
std::string_view to_string(ContractEvent e) noexcept;
std::optional<ContractEvent> contract_event_from_string(std::string_view name) noexcept;

bool is_terminal(ContractState s) noexcept;

/// The negotiation table. std::nullopt for every (state, event) pair without
/// an edge.
std::optional<ContractState> next_state(ContractState from, ContractEvent event) noexcept;

inline constexpr std::string_view kSystemActor = "system";

struct HistoryEntry {
    ContractState state = ContractState::Offered;
    std::string actor;
    UnixSeconds at = 0;

    bool operator==(const HistoryEntry&) const = default;
};

struct Contract {
    std::string contract_id;
    std::string offer_id;  ///< equals contract_id for an offer template
    std::string dataset_id;
    std::string provider_id;
    std::string consumer_id;  ///< empty for an offer template
    UsagePolicy policy;
    ContractState state = ContractState::Offered;
    std::vector<HistoryEntry> history;

    bool is_offer() const noexcept { return consumer_id.empty(); }
    bool operator==(const Contract&) const = default;
};

json contract_to_json(const Contract& c);
Contract contract_from_json(const json& j);

/// Answers whether a member is enrolled and active.
using MembershipCheck = std::function<bool(const std::string& member_id)>;

/// Applies one event. The event's party must match: consumer events by the
/// contract's consumer, provider events by its provider, ClockPastExpiry by
/// the system actor once now >= policy.expires_at. Throws
/// Error(NotEnrolled), Error(WrongActor) or Error(InvalidTransition).
Contract negotiate_transition(const Contract& contract, ContractEvent event, const std::string& actor, UnixSeconds now,
                              const MembershipCheck& is_active_member);

// ---------------------------------------------------------------------------
// Policy evaluation
// ---------------------------------------------------------------------------

struct DataRequest {
    TimeWindow window;
    std::optional<BoundingBox> bbox;
};

enum class DenyReason { WindowViolation, ScopeViolation, RateExceeded, ContractExpired, ContractNotActive };
std::string_view to_string(DenyReason r) noexcept;
ErrorCode to_error_code(DenyReason r) noexcept;

struct PolicyDecision {
    bool allowed = false;
    DenyReason reason = DenyReason::ContractNotActive;

    static PolicyDecision allow() noexcept { return {true, DenyReason::ContractNotActive}; }
    static PolicyDecision deny(DenyReason r) noexcept { return {false, r}; }
};

inline constexpr std::int64_t kRateWindowS = 3600;

/// Sliding-window count of allowed transfers per contract.
class RateCounter {
public:
    /// Transfers at t with now - t < 3600.
    std::size_t count(const std::string& contract_id, UnixSeconds now) const;
    void record(const std::string& contract_id, UnixSeconds at);

private:
    std::map<std::string, std::vector<UnixSeconds>> transfers_;
};

PolicyDecision evaluate_policy(const DataRequest& request, const Contract& contract, UnixSeconds now,
                               const RateCounter& rate);

// ---------------------------------------------------------------------------
// Delivered data
// ---------------------------------------------------------------------------

json delivered_record_to_json(const provider::SensorRecord& r);
provider::SensorRecord delivered_record_from_json(const json& j);

struct TransferResult {
    std::string contract_id;
    std::vector<provider::SensorRecord> records;
};

// ---------------------------------------------------------------------------
// The data-space service
// ---------------------------------------------------------------------------

struct DataSpaceConfig {
    std::string operator_id = "dataspace";
    std::set<std::string> approved_cert_ids;
};

/// Membership registry, catalog, contract negotiation, policy enforcement and
/// the audit trail. All mutations and audit appends are serialized by one
/// lock, so audit sequence order equals the order in which state changed.
class DataSpace {
public:
    DataSpace(DataSpaceConfig config, RandomSource& random, std::shared_ptr<audit::AuditLog> audit_log = nullptr);

    /// The provider connector serving a given provider's datasets.
    void attach_provider_store(const std::string& provider_id, const provider::RecordStore& store);

    MemberIdentity enroll(const Applicant& applicant, const ConnectorCertificate& cert, UnixSeconds now);
    /// Throws Error(NotEnrolled) for unknown ids.
    void revoke_member(const std::string& member_id, UnixSeconds now);

    std::optional<MemberIdentity> member(const std::string& member_id) const;
    bool is_active(const std::string& member_id) const;
    /// Secret of an active member with the given role; std::nullopt otherwise.
    std::optional<Bytes> key_of(const std::string& member_id, std::optional<Role> role = std::nullopt) const;

    Contract publish_offer(const std::string& provider_id, const std::string& dataset_id, const UsagePolicy& policy,
                           UnixSeconds now);
    /// Open offers (OFFERED templates), visible to any active member.
    std::vector<Contract> catalog(const std::string& requester, UnixSeconds now) const;
    /// Contracts in which the member is a party, in creation order.
    std::vector<Contract> contracts_of(const std::string& member_id) const;
    /// Throws Error(UnknownContract).
    Contract contract(const std::string& contract_id) const;

    Contract request_contract(const std::string& consumer_id, const std::string& offer_id, UnixSeconds now);
    Contract decide(const std::string& provider_id, const std::string& contract_id, bool accept, UnixSeconds now);
    Contract countersign(const std::string& consumer_id, const std::string& contract_id, UnixSeconds now);
    Contract revoke_contract(const std::string& provider_id, const std::string& contract_id, UnixSeconds now);
    /// Moves every non-terminal contract whose policy has expired to EXPIRED.
    std::vector<Contract> expire_due(UnixSeconds now);

    /// Policy-checked data access. Every denial is audited as POLICY_DENY and
    /// thrown as the matching typed Error; success is audited as
    /// DATA_TRANSFER.
    TransferResult transfer_data(const std::string& consumer_id, const std::string& contract_id,
                                 const DataRequest& request, UnixSeconds now);

    /// Envelope front end. Never throws for protocol failures; they come back
    /// as ERROR envelopes.
    wire::Envelope handle(const wire::Envelope& request, UnixSeconds now);

    const audit::AuditLog& audit_log() const noexcept { return *audit_; }
    const std::string& operator_id() const noexcept { return config_.operator_id; }

private:
    struct Member {
        MemberIdentity identity;
        std::string cert_id;
    };

    const Member* active_member_locked(const std::string& member_id) const;
    Contract& contract_locked(const std::string& contract_id);
    Contract apply_locked(Contract& c, ContractEvent event, const std::string& actor, UnixSeconds now);
    void audit_deny_locked(UnixSeconds now, const std::string& actor, json details);
    wire::Envelope handle_locked(const wire::Envelope& request, UnixSeconds now);
    wire::Envelope reply(const wire::Envelope& request, wire::MsgType type, json body, const Bytes* key);
    bool is_active_locked(const std::string& member_id) const;

    DataSpaceConfig config_;
    RandomSource& random_;
    std::shared_ptr<audit::AuditLog> audit_;
    mutable std::recursive_mutex mutex_;
    std::map<std::string, Member> members_;
    std::map<std::string, const provider::RecordStore*> stores_;
    std::map<std::string, Contract> contracts_;
    std::vector<std::string> contract_order_;
    std::set<std::string> seen_msg_ids_;
    RateCounter rate_;
    std::uint64_t next_offer_ = 1;
    std::uint64_t next_contract_ = 1;
};

// ---------------------------------------------------------------------------
// Member-side connector client
// ---------------------------------------------------------------------------

/// Thrown by ConnectorClient when the data space answers with ERROR.
struct RemoteError : Error {
    using Error::Error;
};

/// Signs requests with the member's secret and unwraps the replies.
class ConnectorClient {
public:
    ConnectorClient(std::string member_id, net::Channel& channel, RandomSource& random);

    /// Sends ENROLL and keeps the issued secret.
    MemberIdentity enroll(const std::string& display_name, Role role, const ConnectorCertificate& cert);
    void set_secret(Bytes secret) { secret_ = std::move(secret); }
    const Bytes& secret() const noexcept { return secret_; }
    const std::string& member_id() const noexcept { return member_id_; }

    Contract publish_offer(const std::string& dataset_id, const UsagePolicy& policy);
    /// Open offers plus, when include_own is set, the member's own contracts.
    std::vector<Contract> catalog(bool include_own = false);
    Contract request_contract(const std::string& offer_id);
    Contract decide(const std::string& contract_id, bool accept);
    Contract countersign(const std::string& contract_id);
    Contract revoke(const std::string& contract_id);
    TransferResult request_data(const std::string& contract_id, const DataRequest& request);

    /// Signed request envelope without sending it, for callers that want to
    /// replay or tamper with it.
    wire::Envelope make_request(wire::MsgType type, json body);
    /// Sends an arbitrary envelope and unwraps the reply.
    json send(const wire::Envelope& request, wire::MsgType expected);

private:
    std::string member_id_;
    net::Channel& channel_;
    RandomSource& random_;
    Bytes secret_;
};

}  // namespace orvicon::dataspace

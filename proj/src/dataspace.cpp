#include "orvicon/dataspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace orvicon::dataspace {

namespace {

/// An Error whose POLICY_DENY audit record has already been written.
struct AuditedError : Error {
    using Error::Error;
};

std::string sequence_id(const char* prefix, std::uint64_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%06llu", prefix, static_cast<unsigned long long>(n));
    return buf;
}

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::pair<Enum, std::string_view> (&table)[N], std::string_view name) {
    for (const auto& [value, n] : table) {
        if (n == name) return value;
    }
    return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(const std::pair<Enum, std::string_view> (&table)[N], Enum value) {
    for (const auto& [v, n] : table) {
        if (v == value) return n;
    }
    return "UNKNOWN";
}

constexpr std::pair<Role, std::string_view> kRoles[] = {
    {Role::Provider, "provider"}, {Role::Consumer, "consumer"}, {Role::Gateway, "gateway"}};

constexpr std::pair<ContractState, std::string_view> kStates[] = {
    {ContractState::Offered, "OFFERED"},   {ContractState::Requested, "REQUESTED"},
    {ContractState::Agreed, "AGREED"},     {ContractState::Active, "ACTIVE"},
    {ContractState::Rejected, "REJECTED"}, {ContractState::Expired, "EXPIRED"},
    {ContractState::Revoked, "REVOKED"},
};

constexpr std::pair<ContractEvent, std::string_view> kEvents[] = {
    {ContractEvent::ConsumerRequest, "ConsumerRequest"},
    {ContractEvent::ProviderAccept, "ProviderAccept"},
    {ContractEvent::ProviderReject, "ProviderReject"},
    {ContractEvent::ConsumerCountersign, "ConsumerCountersign"},
    {ContractEvent::ProviderRevoke, "ProviderRevoke"},
    {ContractEvent::ClockPastExpiry, "ClockPastExpiry"},
};

constexpr std::pair<DenyReason, std::string_view> kDenyReasons[] = {
    {DenyReason::WindowViolation, "WindowViolation"}, {DenyReason::ScopeViolation, "ScopeViolation"},
    {DenyReason::RateExceeded, "RateExceeded"},       {DenyReason::ContractExpired, "ContractExpired"},
    {DenyReason::ContractNotActive, "ContractNotActive"},
};

bool is_consumer_event(ContractEvent e) {
    return e == ContractEvent::ConsumerRequest || e == ContractEvent::ConsumerCountersign;
}

audit::Event audit_event_for(ContractEvent e) {
    switch (e) {
    case ContractEvent::ConsumerRequest: return audit::Event::Request;
    case ContractEvent::ConsumerCountersign: return audit::Event::Countersign;
    case ContractEvent::ProviderRevoke: return audit::Event::Revoke;
    default: return audit::Event::Decision;
    }
}

std::string checked_string(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) {
        fail(ErrorCode::MessageMalformed, std::string("field '") + key + "' must be a string");
    }
    return j.at(key).get<std::string>();
}

}  // namespace

std::string_view to_string(Role r) noexcept { return name_of(kRoles, r); }
std::optional<Role> role_from_string(std::string_view name) noexcept { return lookup(kRoles, name); }
std::string_view to_string(ContractState s) noexcept { return name_of(kStates, s); }
std::optional<ContractState> contract_state_from_string(std::string_view name) noexcept { return lookup(kStates, name); }
std::string_view to_string(ContractEvent e) noexcept { return name_of(kEvents, e); }
std::optional<ContractEvent> contract_event_from_string(std::string_view name) noexcept { return lookup(kEvents, name); }
std::string_view to_string(DenyReason r) noexcept { return name_of(kDenyReasons, r); }

ErrorCode to_error_code(DenyReason r) noexcept {
    switch (r) {
    case DenyReason::WindowViolation: return ErrorCode::WindowViolation;
    case DenyReason::ScopeViolation: return ErrorCode::ScopeViolation;
    case DenyReason::RateExceeded: return ErrorCode::RateExceeded;
    case DenyReason::ContractExpired: return ErrorCode::ContractExpired;
    case DenyReason::ContractNotActive: return ErrorCode::ContractNotActive;
    }
    return ErrorCode::ContractNotActive;
}

// ---------------------------------------------------------------------------

json certificate_to_json(const ConnectorCertificate& c) {
    return {{"cert_id", c.cert_id},
            {"connector_build_hash", c.connector_build_hash},
            {"issued_by", c.issued_by},
            {"valid_until", c.valid_until}};
}

ConnectorCertificate certificate_from_json(const json& j) {
    try {
        ConnectorCertificate c;
        c.cert_id = j.at("cert_id").get<std::string>();
        c.connector_build_hash = j.at("connector_build_hash").get<std::string>();
        c.issued_by = j.at("issued_by").get<std::string>();
        c.valid_until = j.at("valid_until").get<UnixSeconds>();
        return c;
    } catch (const json::exception& e) {
        fail(ErrorCode::MessageMalformed, std::string("certificate: ") + e.what());
    }
}

void check_certificate(const ConnectorCertificate& cert, const std::set<std::string>& approved, UnixSeconds now) {
    if (!approved.contains(cert.cert_id)) {
        fail(ErrorCode::CertificateNotApproved, "connector certificate '" + cert.cert_id + "' is not approved");
    }
    if (!(now < cert.valid_until)) {
        fail(ErrorCode::CertificateExpired, "connector certificate '" + cert.cert_id + "' expired");
    }
}

void UsagePolicy::validate() const {
    if (policy_id.empty()) fail(ErrorCode::InvalidPolicy, "policy_id must be non-empty");
    if (time_window.from > time_window.to) fail(ErrorCode::InvalidPolicy, "time window start after end");
    if (spatial_scope) {
        const auto& b = *spatial_scope;
        if (!b.well_ordered()) fail(ErrorCode::InvalidPolicy, "spatial scope is not well ordered");
        if (!(b.lat_min >= -90 && b.lat_max <= 90 && b.lon_min >= -180 && b.lon_max <= 180)) {
            fail(ErrorCode::InvalidPolicy, "spatial scope outside valid coordinates");
        }
    }
    if (max_requests_per_hour < 1) fail(ErrorCode::InvalidPolicy, "max_requests_per_hour must be >= 1");
}

json window_to_json(const TimeWindow& w) { return {{"from", w.from}, {"to", w.to}}; }

TimeWindow window_from_json(const json& j) {
    try {
        return {j.at("from").get<UnixSeconds>(), j.at("to").get<UnixSeconds>()};
    } catch (const json::exception& e) {
        fail(ErrorCode::MessageMalformed, std::string("window: ") + e.what());
    }
}

json bbox_to_json(const BoundingBox& b) {
    return {{"lat_min", b.lat_min}, {"lat_max", b.lat_max}, {"lon_min", b.lon_min}, {"lon_max", b.lon_max}};
}

BoundingBox bbox_from_json(const json& j) {
    try {
        return {j.at("lat_min").get<double>(), j.at("lat_max").get<double>(), j.at("lon_min").get<double>(),
                j.at("lon_max").get<double>()};
    } catch (const json::exception& e) {
        fail(ErrorCode::MessageMalformed, std::string("bbox: ") + e.what());
    }
}

json policy_to_json(const UsagePolicy& p) {
    json j = {{"policy_id", p.policy_id},
              {"time_window", window_to_json(p.time_window)},
              {"max_requests_per_hour", p.max_requests_per_hour},
              {"expires_at", p.expires_at},
              {"purpose", p.purpose}};
    j["spatial_scope"] = p.spatial_scope ? bbox_to_json(*p.spatial_scope) : json(nullptr);
    return j;
}

UsagePolicy policy_from_json(const json& j) {
    try {
        UsagePolicy p;
        p.policy_id = j.at("policy_id").get<std::string>();
        p.time_window = window_from_json(j.at("time_window"));
        if (j.contains("spatial_scope") && !j.at("spatial_scope").is_null()) {
            p.spatial_scope = bbox_from_json(j.at("spatial_scope"));
        }
        auto rate = j.at("max_requests_per_hour").get<std::int64_t>();
        if (rate < 1 || rate > std::numeric_limits<std::uint32_t>::max()) {
            fail(ErrorCode::InvalidPolicy, "max_requests_per_hour must be a positive integer");
        }
        p.max_requests_per_hour = static_cast<std::uint32_t>(rate);
        p.expires_at = j.at("expires_at").get<UnixSeconds>();
        p.purpose = j.value("purpose", std::string{});
        return p;
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidPolicy, e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidPolicy) throw;
        fail(ErrorCode::InvalidPolicy, e.what());
    }
}

// ---------------------------------------------------------------------------

bool is_terminal(ContractState s) noexcept {
    return s == ContractState::Rejected || s == ContractState::Expired || s == ContractState::Revoked;
}

std::optional<ContractState> next_state(ContractState from, ContractEvent event) noexcept {
    using S = ContractState;
    using E = ContractEvent;
    switch (event) {
    case E::ConsumerRequest:
        if (from == S::Offered) return S::Requested;
        break;
    case E::ProviderAccept:
        if (from == S::Requested) return S::Agreed;
        break;
    case E::ProviderReject:
        if (from == S::Requested) return S::Rejected;
        break;
    case E::ConsumerCountersign:
        if (from == S::Agreed) return S::Active;
        break;
    case E::ProviderRevoke:
        if (!is_terminal(from)) return S::Revoked;
        break;
    case E::ClockPastExpiry:
        if (!is_terminal(from)) return S::Expired;
        break;
    }
    return std::nullopt;
}

json contract_to_json(const Contract& c) {
    json history = json::array();
    for (const auto& h : c.history) {
        history.push_back({{"state", std::string(to_string(h.state))}, {"actor", h.actor}, {"at", h.at}});
    }
    return {{"contract_id", c.contract_id},
            {"offer_id", c.offer_id},
            {"dataset_id", c.dataset_id},
            {"provider_id", c.provider_id},
            {"consumer_id", c.consumer_id},
            {"policy", policy_to_json(c.policy)},
            {"state", std::string(to_string(c.state))},
            {"history", std::move(history)}};
}

Contract contract_from_json(const json& j) {
    try {
        Contract c;
        c.contract_id = j.at("contract_id").get<std::string>();
        c.offer_id = j.at("offer_id").get<std::string>();
        c.dataset_id = j.at("dataset_id").get<std::string>();
        c.provider_id = j.at("provider_id").get<std::string>();
        c.consumer_id = j.at("consumer_id").get<std::string>();
        c.policy = policy_from_json(j.at("policy"));
        auto state = contract_state_from_string(j.at("state").get<std::string>());
        if (!state) fail(ErrorCode::MessageMalformed, "unknown contract state");
        c.state = *state;
        for (const auto& h : j.at("history")) {
            auto s = contract_state_from_string(h.at("state").get<std::string>());
            if (!s) fail(ErrorCode::MessageMalformed, "unknown contract state in history");
            c.history.push_back({*s, h.at("actor").get<std::string>(), h.at("at").get<UnixSeconds>()});
        }
        return c;
    } catch (const json::exception& e) {
        fail(ErrorCode::MessageMalformed, std::string("contract: ") + e.what());
    }
}

Contract negotiate_transition(const Contract& contract, ContractEvent event, const std::string& actor, UnixSeconds now,
                              const MembershipCheck& is_active_member) {
    if (event == ContractEvent::ClockPastExpiry) {
        if (actor != kSystemActor) fail(ErrorCode::WrongActor, "only the system clock expires contracts");
        if (now < contract.policy.expires_at) {
            fail(ErrorCode::InvalidTransition, "contract " + contract.contract_id + " has not reached its expiry");
        }
    } else {
        if (!is_active_member(actor)) fail(ErrorCode::NotEnrolled, "'" + actor + "' is not an active member");
        const auto& party = is_consumer_event(event) ? contract.consumer_id : contract.provider_id;
        if (actor != party) {
            fail(ErrorCode::WrongActor, "'" + actor + "' may not apply " + std::string(to_string(event)) + " to " +
                                            contract.contract_id);
        }
    }
    auto next = next_state(contract.state, event);
    if (!next) {
        fail(ErrorCode::InvalidTransition,
             std::string(to_string(event)) + " not allowed in state " + std::string(to_string(contract.state)));
    }
    Contract out = contract;
    out.state = *next;
    out.history.push_back({*next, actor, now});
    return out;
}

// ---------------------------------------------------------------------------

std::size_t RateCounter::count(const std::string& contract_id, UnixSeconds now) const {
    auto it = transfers_.find(contract_id);
    if (it == transfers_.end()) return 0;
    return static_cast<std::size_t>(std::ranges::count_if(
        it->second, [&](UnixSeconds t) { return t <= now && now - t < kRateWindowS; }));
}

void RateCounter::record(const std::string& contract_id, UnixSeconds at) { transfers_[contract_id].push_back(at); }

PolicyDecision evaluate_policy(const DataRequest& request, const Contract& contract, UnixSeconds now,
                               const RateCounter& rate) {
    const auto& p = contract.policy;
    if (contract.state != ContractState::Active) return PolicyDecision::deny(DenyReason::ContractNotActive);
    if (!(now < p.expires_at)) return PolicyDecision::deny(DenyReason::ContractExpired);
    if (request.window.from > request.window.to || !p.time_window.contains(request.window)) {
        return PolicyDecision::deny(DenyReason::WindowViolation);
    }
    if (request.bbox) {
        if (!request.bbox->well_ordered()) return PolicyDecision::deny(DenyReason::ScopeViolation);
        if (p.spatial_scope && !p.spatial_scope->contains(*request.bbox)) {
            return PolicyDecision::deny(DenyReason::ScopeViolation);
        }
    }
    if (rate.count(contract.contract_id, now) >= p.max_requests_per_hour) {
        return PolicyDecision::deny(DenyReason::RateExceeded);
    }
    return PolicyDecision::allow();
}

json delivered_record_to_json(const provider::SensorRecord& r) {
    return {{"device_id", r.device_id},
            {"frame_counter", r.frame_counter},
            {"timestamp_s", r.timestamp_s},
            {"temperature_cdeg", r.temperature_cdeg},
            {"lat", r.lat},
            {"lon", r.lon},
            {"elevation_m", r.elevation_m},
            {"field_id", r.field_id}};
}

provider::SensorRecord delivered_record_from_json(const json& j) {
    try {
        provider::SensorRecord r;
        r.device_id = j.at("device_id").get<std::uint64_t>();
        r.frame_counter = j.at("frame_counter").get<std::uint32_t>();
        r.timestamp_s = j.at("timestamp_s").get<std::int64_t>();
        r.temperature_cdeg = j.at("temperature_cdeg").get<std::int16_t>();
        r.lat = j.at("lat").get<double>();
        r.lon = j.at("lon").get<double>();
        r.elevation_m = j.at("elevation_m").get<double>();
        r.field_id = j.at("field_id").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::MessageMalformed, std::string("record: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

DataSpace::DataSpace(DataSpaceConfig config, RandomSource& random, std::shared_ptr<audit::AuditLog> audit_log)
    : config_(std::move(config)),
      random_(random),
      audit_(audit_log ? std::move(audit_log) : std::make_shared<audit::AuditLog>()) {}

void DataSpace::attach_provider_store(const std::string& provider_id, const provider::RecordStore& store) {
    std::lock_guard lock(mutex_);
    stores_[provider_id] = &store;
}

MemberIdentity DataSpace::enroll(const Applicant& applicant, const ConnectorCertificate& cert, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    try {
        if (applicant.member_id.empty() || applicant.member_id == kSystemActor ||
            applicant.member_id == config_.operator_id) {
            fail(ErrorCode::DuplicateMember, "member id '" + applicant.member_id + "' is reserved");
        }
        check_certificate(cert, config_.approved_cert_ids, now);
        if (members_.contains(applicant.member_id)) {
            fail(ErrorCode::DuplicateMember, "member '" + applicant.member_id + "' already enrolled");
        }
    } catch (const Error& e) {
        audit_deny_locked(now, applicant.member_id,
                          {{"operation", "ENROLL"}, {"reason", std::string(to_string(e.code()))}, {"cert_id", cert.cert_id}});
        throw AuditedError(e.code(), e.what());
    }
    Member m;
    m.identity.member_id = applicant.member_id;
    m.identity.display_name = applicant.display_name;
    m.identity.role = applicant.role;
    m.identity.shared_secret = random_.bytes(kSharedSecretSize);
    m.identity.enrolled_at = now;
    m.identity.status = MemberStatus::Active;
    m.cert_id = cert.cert_id;
    members_[applicant.member_id] = m;
    audit_->append(now, applicant.member_id, audit::Event::Enroll,
                   {{"member_id", applicant.member_id},
                    {"role", std::string(to_string(applicant.role))},
                    {"cert_id", cert.cert_id}});
    return m.identity;
}

void DataSpace::revoke_member(const std::string& member_id, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    auto it = members_.find(member_id);
    if (it == members_.end()) fail(ErrorCode::NotEnrolled, "unknown member '" + member_id + "'");
    if (it->second.identity.status == MemberStatus::Revoked) return;
    it->second.identity.status = MemberStatus::Revoked;
    audit_->append(now, config_.operator_id, audit::Event::Revoke, {{"member_id", member_id}});
}

std::optional<MemberIdentity> DataSpace::member(const std::string& member_id) const {
    std::lock_guard lock(mutex_);
    auto it = members_.find(member_id);
    if (it == members_.end()) return std::nullopt;
    return it->second.identity;
}

bool DataSpace::is_active_locked(const std::string& member_id) const { return active_member_locked(member_id) != nullptr; }

bool DataSpace::is_active(const std::string& member_id) const {
    std::lock_guard lock(mutex_);
    return is_active_locked(member_id);
}

const DataSpace::Member* DataSpace::active_member_locked(const std::string& member_id) const {
    auto it = members_.find(member_id);
    if (it == members_.end() || it->second.identity.status != MemberStatus::Active) return nullptr;
    return &it->second;
}

std::optional<Bytes> DataSpace::key_of(const std::string& member_id, std::optional<Role> role) const {
    std::lock_guard lock(mutex_);
    const auto* m = active_member_locked(member_id);
    if (!m || (role && m->identity.role != *role)) return std::nullopt;
    return m->identity.shared_secret;
}

void DataSpace::audit_deny_locked(UnixSeconds now, const std::string& actor, json details) {
    audit_->append(now, actor, audit::Event::PolicyDeny, std::move(details));
}

Contract& DataSpace::contract_locked(const std::string& contract_id) {
    auto it = contracts_.find(contract_id);
    if (it == contracts_.end()) fail(ErrorCode::UnknownContract, "no contract '" + contract_id + "'");
    return it->second;
}

Contract DataSpace::contract(const std::string& contract_id) const {
    std::lock_guard lock(mutex_);
    auto it = contracts_.find(contract_id);
    if (it == contracts_.end()) fail(ErrorCode::UnknownContract, "no contract '" + contract_id + "'");
    return it->second;
}

Contract DataSpace::apply_locked(Contract& c, ContractEvent event, const std::string& actor, UnixSeconds now) {
    auto from = c.state;
    c = negotiate_transition(c, event, actor, now, [this](const std::string& id) { return is_active_locked(id); });
    json details = {{"contract_id", c.contract_id},
                    {"offer_id", c.offer_id},
                    {"dataset_id", c.dataset_id},
                    {"provider_id", c.provider_id},
                    {"consumer_id", c.consumer_id},
                    {"transition", std::string(to_string(event))},
                    {"from", std::string(to_string(from))},
                    {"to", std::string(to_string(c.state))}};
    if (event == ContractEvent::ConsumerRequest) details["policy"] = policy_to_json(c.policy);
    audit_->append(now, actor, audit_event_for(event), std::move(details));
    return c;
}

Contract DataSpace::publish_offer(const std::string& provider_id, const std::string& dataset_id,
                                  const UsagePolicy& policy, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    const auto* m = active_member_locked(provider_id);
    if (!m) fail(ErrorCode::NotEnrolled, "'" + provider_id + "' is not an active member");
    if (m->identity.role != Role::Provider) fail(ErrorCode::WrongActor, "only providers may publish offers");
    auto store = stores_.find(provider_id);
    if (store == stores_.end() || !store->second->has_dataset(dataset_id)) {
        fail(ErrorCode::UnknownDataset, "provider '" + provider_id + "' has no dataset '" + dataset_id + "'");
    }
    policy.validate();

    Contract offer;
    offer.contract_id = sequence_id("offer", next_offer_++);
    offer.offer_id = offer.contract_id;
    offer.dataset_id = dataset_id;
    offer.provider_id = provider_id;
    offer.policy = policy;
    offer.state = ContractState::Offered;
    offer.history.push_back({ContractState::Offered, provider_id, now});
    contracts_[offer.contract_id] = offer;
    contract_order_.push_back(offer.contract_id);
    audit_->append(now, provider_id, audit::Event::Offer,
                   {{"offer_id", offer.offer_id},
                    {"dataset_id", dataset_id},
                    {"provider_id", provider_id},
                    {"policy", policy_to_json(policy)}});
    return offer;
}

std::vector<Contract> DataSpace::catalog(const std::string& requester, UnixSeconds /*now*/) const {
    std::lock_guard lock(mutex_);
    if (!is_active_locked(requester)) fail(ErrorCode::NotEnrolled, "'" + requester + "' is not an active member");
    std::vector<Contract> out;
    for (const auto& id : contract_order_) {
        const auto& c = contracts_.at(id);
        if (c.is_offer() && c.state == ContractState::Offered && is_active_locked(c.provider_id)) out.push_back(c);
    }
    return out;
}

std::vector<Contract> DataSpace::contracts_of(const std::string& member_id) const {
    std::lock_guard lock(mutex_);
    std::vector<Contract> out;
    for (const auto& id : contract_order_) {
        const auto& c = contracts_.at(id);
        if (!c.is_offer() && (c.consumer_id == member_id || c.provider_id == member_id)) out.push_back(c);
    }
    return out;
}

Contract DataSpace::request_contract(const std::string& consumer_id, const std::string& offer_id, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    const auto* m = active_member_locked(consumer_id);
    if (!m) fail(ErrorCode::NotEnrolled, "'" + consumer_id + "' is not an active member");
    if (m->identity.role != Role::Consumer) fail(ErrorCode::WrongActor, "only consumers may request contracts");
    auto& offer = contract_locked(offer_id);
    if (!offer.is_offer()) fail(ErrorCode::UnknownContract, "'" + offer_id + "' is not an offer");
    if (offer.state != ContractState::Offered) {
        fail(ErrorCode::InvalidTransition, "offer " + offer_id + " is " + std::string(to_string(offer.state)));
    }
    Contract c = offer;
    c.contract_id = sequence_id("contract", next_contract_);
    c.consumer_id = consumer_id;
    apply_locked(c, ContractEvent::ConsumerRequest, consumer_id, now);
    ++next_contract_;
    contracts_[c.contract_id] = c;
    contract_order_.push_back(c.contract_id);
    return c;
}

Contract DataSpace::decide(const std::string& provider_id, const std::string& contract_id, bool accept,
                           UnixSeconds now) {
    std::lock_guard lock(mutex_);
    auto& c = contract_locked(contract_id);
    return apply_locked(c, accept ? ContractEvent::ProviderAccept : ContractEvent::ProviderReject, provider_id, now);
}

Contract DataSpace::countersign(const std::string& consumer_id, const std::string& contract_id, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    auto& c = contract_locked(contract_id);
    return apply_locked(c, ContractEvent::ConsumerCountersign, consumer_id, now);
}

Contract DataSpace::revoke_contract(const std::string& provider_id, const std::string& contract_id, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    auto& c = contract_locked(contract_id);
    return apply_locked(c, ContractEvent::ProviderRevoke, provider_id, now);
}

std::vector<Contract> DataSpace::expire_due(UnixSeconds now) {
    std::lock_guard lock(mutex_);
    std::vector<Contract> expired;
    for (const auto& id : contract_order_) {
        auto& c = contracts_.at(id);
        if (!is_terminal(c.state) && now >= c.policy.expires_at) {
            expired.push_back(apply_locked(c, ContractEvent::ClockPastExpiry, std::string(kSystemActor), now));
        }
    }
    return expired;
}

TransferResult DataSpace::transfer_data(const std::string& consumer_id, const std::string& contract_id,
                                        const DataRequest& request, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    json deny = {{"operation", "DATA_REQUEST"}, {"contract_id", contract_id}};
    auto refuse = [&](ErrorCode code, const std::string& why) {
        deny["reason"] = std::string(to_string(code));
        audit_deny_locked(now, consumer_id, deny);
        throw AuditedError(code, why);
    };

    if (!is_active_locked(consumer_id)) refuse(ErrorCode::NotEnrolled, "'" + consumer_id + "' is not an active member");
    auto it = contracts_.find(contract_id);
    if (it == contracts_.end() || it->second.is_offer()) refuse(ErrorCode::UnknownContract, "no contract '" + contract_id + "'");
    const auto& c = it->second;
    deny["policy_id"] = c.policy.policy_id;
    if (c.consumer_id != consumer_id) refuse(ErrorCode::WrongActor, "contract belongs to another consumer");
    if (!is_active_locked(c.provider_id)) refuse(ErrorCode::NotEnrolled, "provider '" + c.provider_id + "' is revoked");

    auto decision = evaluate_policy(request, c, now, rate_);
    if (!decision.allowed) refuse(to_error_code(decision.reason), "request denied by policy " + c.policy.policy_id);

    auto store = stores_.find(c.provider_id);
    if (store == stores_.end()) refuse(ErrorCode::UnknownDataset, "provider connector unavailable");
    std::vector<provider::SensorRecord> records;
    for (auto& r : store->second->query_records(c.dataset_id, {request.window.from, request.window.to})) {
        geo::LatLon at{r.lat, r.lon};
        if (c.policy.spatial_scope && !c.policy.spatial_scope->contains(at)) continue;
        if (request.bbox && !request.bbox->contains(at)) continue;
        records.push_back(std::move(r));
    }

    rate_.record(contract_id, now);
    json details = {{"contract_id", contract_id},
                    {"dataset_id", c.dataset_id},
                    {"provider_id", c.provider_id},
                    {"consumer_id", consumer_id},
                    {"policy_id", c.policy.policy_id},
                    {"window", window_to_json(request.window)},
                    {"record_count", records.size()}};
    details["bbox"] = request.bbox ? bbox_to_json(*request.bbox) : json(nullptr);
    if (!records.empty()) {
        auto [tmin, tmax] = std::ranges::minmax(records, {}, &provider::SensorRecord::timestamp_s);
        auto [lamin, lamax] = std::ranges::minmax(records, {}, &provider::SensorRecord::lat);
        auto [lomin, lomax] = std::ranges::minmax(records, {}, &provider::SensorRecord::lon);
        details["delivered"] = {{"ts_min", tmin.timestamp_s},
                                {"ts_max", tmax.timestamp_s},
                                {"extent", bbox_to_json({lamin.lat, lamax.lat, lomin.lon, lomax.lon})}};
    } else {
        details["delivered"] = nullptr;
    }
    audit_->append(now, consumer_id, audit::Event::DataTransfer, std::move(details));
    return {contract_id, std::move(records)};
}

// ---------------------------------------------------------------------------

wire::Envelope DataSpace::reply(const wire::Envelope& request, wire::MsgType type, json body, const Bytes* key) {
    wire::Envelope out;
    out.msg_id = random_.hex_id();
    out.sender_id = config_.operator_id;
    out.msg_type = type;
    out.body = std::move(body);
    out.body["in_reply_to"] = request.msg_id;
    if (key && !key->empty()) out = wire::sign_envelope(std::move(out), *key);
    return out;
}

wire::Envelope DataSpace::handle(const wire::Envelope& request, UnixSeconds now) {
    std::lock_guard lock(mutex_);
    try {
        return handle_locked(request, now);
    } catch (const AuditedError& e) {
        return reply(request, wire::MsgType::Error,
                     {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}, nullptr);
    } catch (const Error& e) {
        audit_deny_locked(now, request.sender_id,
                          {{"operation", std::string(wire::to_string(request.msg_type))},
                           {"reason", std::string(to_string(e.code()))}});
        return reply(request, wire::MsgType::Error,
                     {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}, nullptr);
    } catch (const std::exception& e) {
        const auto code = std::string(to_string(ErrorCode::MessageMalformed));
        audit_deny_locked(now, request.sender_id,
                          {{"operation", std::string(wire::to_string(request.msg_type))}, {"reason", code}});
        return reply(request, wire::MsgType::Error, {{"code", code}, {"message", e.what()}}, nullptr);
    }
}

wire::Envelope DataSpace::handle_locked(const wire::Envelope& request, UnixSeconds now) {
    using wire::MsgType;
    const auto& body = request.body;
    if (!body.is_object()) fail(ErrorCode::MessageMalformed, "body must be an object");

    if (request.msg_type == MsgType::Enroll) {
        Applicant a;
        a.member_id = checked_string(body, "member_id");
        a.display_name = body.value("display_name", a.member_id);
        auto role = role_from_string(checked_string(body, "role"));
        if (!role) fail(ErrorCode::MessageMalformed, "unknown role");
        a.role = *role;
        if (a.member_id != request.sender_id) fail(ErrorCode::MessageMalformed, "sender_id must equal member_id");
        auto identity = enroll(a, certificate_from_json(body.at("certificate")), now);
        return reply(request, MsgType::EnrollAck,
                     {{"member_id", identity.member_id},
                      {"role", std::string(to_string(identity.role))},
                      {"shared_secret", to_hex(identity.shared_secret)},
                      {"enrolled_at", identity.enrolled_at}},
                     &identity.shared_secret);
    }

    const auto* sender = active_member_locked(request.sender_id);
    if (!sender) fail(ErrorCode::NotEnrolled, "'" + request.sender_id + "' is not an active member");
    if (!wire::verify_envelope(request, sender->identity.shared_secret)) {
        fail(ErrorCode::BadSignature, "signature check failed for '" + request.sender_id + "'");
    }
    if (!seen_msg_ids_.insert(request.msg_id).second) {
        fail(ErrorCode::ReplayedMessage, "msg_id " + request.msg_id + " already processed");
    }
    const Bytes key = sender->identity.shared_secret;
    const auto& who = request.sender_id;

    switch (request.msg_type) {
    case MsgType::OfferPublish: {
        auto offer = publish_offer(who, checked_string(body, "dataset_id"), policy_from_json(body.at("policy")), now);
        return reply(request, MsgType::CatalogResult, {{"offers", json::array({contract_to_json(offer)})}}, &key);
    }
    case MsgType::CatalogQuery: {
        json offers = json::array();
        for (const auto& c : catalog(who, now)) offers.push_back(contract_to_json(c));
        json out = {{"offers", std::move(offers)}};
        if (body.value("include_own", false)) {
            json own = json::array();
            for (const auto& c : contracts_of(who)) own.push_back(contract_to_json(c));
            out["contracts"] = std::move(own);
        }
        return reply(request, MsgType::CatalogResult, std::move(out), &key);
    }
    case MsgType::ContractRequest: {
        auto c = request_contract(who, checked_string(body, "offer_id"), now);
        return reply(request, MsgType::ContractDecision, {{"contract", contract_to_json(c)}}, &key);
    }
    case MsgType::ContractDecision: {
        auto id = checked_string(body, "contract_id");
        auto decision = checked_string(body, "decision");
        Contract c;
        if (decision == "accept" || decision == "reject") {
            c = decide(who, id, decision == "accept", now);
        } else if (decision == "revoke") {
            c = revoke_contract(who, id, now);
        } else {
            fail(ErrorCode::MessageMalformed, "decision must be accept, reject or revoke");
        }
        return reply(request, MsgType::ContractDecision, {{"contract", contract_to_json(c)}}, &key);
    }
    case MsgType::ContractCountersign: {
        auto c = countersign(who, checked_string(body, "contract_id"), now);
        return reply(request, MsgType::ContractDecision, {{"contract", contract_to_json(c)}}, &key);
    }
    case MsgType::DataRequest: {
        auto id = checked_string(body, "contract_id");
        DataRequest dr;
        dr.window = window_from_json(body.at("window"));
        if (body.contains("bbox") && !body.at("bbox").is_null()) dr.bbox = bbox_from_json(body.at("bbox"));
        auto result = transfer_data(who, id, dr, now);
        const auto& c = contracts_.at(id);
        json records = json::array();
        for (const auto& r : result.records) records.push_back(delivered_record_to_json(r));
        auto out = reply(request, MsgType::DataResponse, {{"contract_id", id}, {"records", std::move(records)}}, nullptr);
        out.sender_id = c.provider_id;
        return wire::sign_envelope(std::move(out), members_.at(c.provider_id).identity.shared_secret);
    }
    default:
        fail(ErrorCode::MessageMalformed, "unexpected message type " + std::string(wire::to_string(request.msg_type)));
    }
}

// ---------------------------------------------------------------------------

ConnectorClient::ConnectorClient(std::string member_id, net::Channel& channel, RandomSource& random)
    : member_id_(std::move(member_id)), channel_(channel), random_(random) {}

wire::Envelope ConnectorClient::make_request(wire::MsgType type, json body) {
    wire::Envelope e;
    e.msg_id = random_.hex_id();
    e.sender_id = member_id_;
    e.msg_type = type;
    e.body = std::move(body);
    if (!secret_.empty()) e = wire::sign_envelope(std::move(e), secret_);
    return e;
}

json ConnectorClient::send(const wire::Envelope& request, wire::MsgType expected) {
    auto response = channel_.call(request);
    if (response.msg_type == wire::MsgType::Error) {
        auto name = response.body.value("code", std::string{});
        auto code = error_code_from_string(name).value_or(ErrorCode::Transport);
        throw RemoteError(code, response.body.value("message", name));
    }
    if (response.msg_type != expected) {
        fail(ErrorCode::MessageMalformed, "unexpected reply " + std::string(wire::to_string(response.msg_type)));
    }
    return response.body;
}

MemberIdentity ConnectorClient::enroll(const std::string& display_name, Role role, const ConnectorCertificate& cert) {
    wire::Envelope e;
    e.msg_id = random_.hex_id();
    e.sender_id = member_id_;
    e.msg_type = wire::MsgType::Enroll;
    e.body = {{"member_id", member_id_},
              {"display_name", display_name},
              {"role", std::string(to_string(role))},
              {"certificate", certificate_to_json(cert)}};
    auto body = send(e, wire::MsgType::EnrollAck);
    MemberIdentity id;
    id.member_id = body.at("member_id").get<std::string>();
    id.display_name = display_name;
    id.role = role;
    id.shared_secret = from_hex(body.at("shared_secret").get<std::string>());
    id.enrolled_at = body.at("enrolled_at").get<UnixSeconds>();
    secret_ = id.shared_secret;
    return id;
}

Contract ConnectorClient::publish_offer(const std::string& dataset_id, const UsagePolicy& policy) {
    auto body = send(make_request(wire::MsgType::OfferPublish, {{"dataset_id", dataset_id}, {"policy", policy_to_json(policy)}}),
                     wire::MsgType::CatalogResult);
    return contract_from_json(body.at("offers").at(0));
}

std::vector<Contract> ConnectorClient::catalog(bool include_own) {
    auto body = send(make_request(wire::MsgType::CatalogQuery, {{"include_own", include_own}}), wire::MsgType::CatalogResult);
    std::vector<Contract> out;
    for (const auto& c : body.at("offers")) out.push_back(contract_from_json(c));
    if (include_own) {
        for (const auto& c : body.at("contracts")) out.push_back(contract_from_json(c));
    }
    return out;
}

Contract ConnectorClient::request_contract(const std::string& offer_id) {
    auto body = send(make_request(wire::MsgType::ContractRequest, {{"offer_id", offer_id}}), wire::MsgType::ContractDecision);
    return contract_from_json(body.at("contract"));
}

Contract ConnectorClient::decide(const std::string& contract_id, bool accept) {
    auto body = send(make_request(wire::MsgType::ContractDecision,
                                  {{"contract_id", contract_id}, {"decision", accept ? "accept" : "reject"}}),
                     wire::MsgType::ContractDecision);
    return contract_from_json(body.at("contract"));
}

Contract ConnectorClient::countersign(const std::string& contract_id) {
    auto body = send(make_request(wire::MsgType::ContractCountersign, {{"contract_id", contract_id}}),
                     wire::MsgType::ContractDecision);
    return contract_from_json(body.at("contract"));
}

Contract ConnectorClient::revoke(const std::string& contract_id) {
    auto body = send(make_request(wire::MsgType::ContractDecision, {{"contract_id", contract_id}, {"decision", "revoke"}}),
                     wire::MsgType::ContractDecision);
    return contract_from_json(body.at("contract"));
}

TransferResult ConnectorClient::request_data(const std::string& contract_id, const DataRequest& request) {
    json body = {{"contract_id", contract_id}, {"window", window_to_json(request.window)}};
    body["bbox"] = request.bbox ? bbox_to_json(*request.bbox) : json(nullptr);
    auto reply = send(make_request(wire::MsgType::DataRequest, std::move(body)), wire::MsgType::DataResponse);
    TransferResult out;
    out.contract_id = reply.at("contract_id").get<std::string>();
    for (const auto& r : reply.at("records")) out.records.push_back(delivered_record_from_json(r));
    return out;
}

}  // namespace orvicon::dataspace

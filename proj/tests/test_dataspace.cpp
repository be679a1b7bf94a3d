#include "orvicon/dataspace.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace orvicon;
using namespace orvicon::dataspace;
using orvicon::testing::kT0;

namespace {

constexpr UnixSeconds kYear = 365 * 86400;

ConnectorCertificate cert(const std::string& id, UnixSeconds valid_until = kT0 + kYear) {
    return {id, "ab12", "test-ca", valid_until};
}

UsagePolicy policy(std::uint32_t rate = 10) {
    UsagePolicy p;
    p.policy_id = "pol";
    p.time_window = {kT0 - 86400, kT0 + 86400};
    p.max_requests_per_hour = rate;
    p.expires_at = kT0 + 2 * 86400;
    p.purpose = "frost";
    return p;
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Io;
}

provider::SensorRegistration sensor(std::uint64_t id, double lat, double lon) {
    return {id, lat, lon, 400.0, "s", "field-a"};
}

wire::AnnotatedFrame af(std::uint64_t dev, std::uint32_t ctr, UnixSeconds ts) {
    return {wire::with_crc({.device_id = dev, .frame_counter = ctr, .timestamp_s = static_cast<std::uint64_t>(ts)}), -70};
}

// A data space with farm (provider), two consumers and two sensors with a
// day of hourly readings.
struct Fixture : ::testing::Test {
    RandomSource random{1};
    std::shared_ptr<audit::AuditLog> log = std::make_shared<audit::AuditLog>();
    DataSpace ds{{"dataspace", {"ok", "old"}}, random, log};
    provider::RecordStore store;

    void SetUp() override {
        store.register_sensor(sensor(1, 47.0, 9.0));
        store.register_sensor(sensor(2, 47.1, 9.1));
        std::vector<wire::AnnotatedFrame> frames;
        for (std::uint32_t h = 0; h < 24; ++h) {
            frames.push_back(af(1, h + 1, kT0 + h * 3600));
            frames.push_back(af(2, h + 1, kT0 + h * 3600));
        }
        store.ingest({"gw", kT0, frames});
        ds.attach_provider_store("farm", store);
        ds.enroll({"farm", "Farm", Role::Provider}, cert("ok"), kT0);
        ds.enroll({"alice", "Alice", Role::Consumer}, cert("ok"), kT0);
        ds.enroll({"bob", "Bob", Role::Consumer}, cert("ok"), kT0);
    }

    Contract active_contract(const UsagePolicy& p, const std::string& consumer = "alice") {
        auto offer = ds.publish_offer("farm", "field-a", p, kT0);
        auto c = ds.request_contract(consumer, offer.contract_id, kT0);
        ds.decide("farm", c.contract_id, true, kT0);
        return ds.countersign(consumer, c.contract_id, kT0);
    }
};

}  // namespace

TEST(StateMachine, FullTable) {
    using S = ContractState;
    using E = ContractEvent;
    const std::map<std::pair<S, E>, S> edges = {
        {{S::Offered, E::ConsumerRequest}, S::Requested},   {{S::Requested, E::ProviderAccept}, S::Agreed},
        {{S::Requested, E::ProviderReject}, S::Rejected},   {{S::Agreed, E::ConsumerCountersign}, S::Active},
        {{S::Offered, E::ProviderRevoke}, S::Revoked},      {{S::Requested, E::ProviderRevoke}, S::Revoked},
        {{S::Agreed, E::ProviderRevoke}, S::Revoked},       {{S::Active, E::ProviderRevoke}, S::Revoked},
        {{S::Offered, E::ClockPastExpiry}, S::Expired},     {{S::Requested, E::ClockPastExpiry}, S::Expired},
        {{S::Agreed, E::ClockPastExpiry}, S::Expired},      {{S::Active, E::ClockPastExpiry}, S::Expired},
    };
    for (auto s : {S::Offered, S::Requested, S::Agreed, S::Active, S::Rejected, S::Expired, S::Revoked}) {
        for (auto e : {E::ConsumerRequest, E::ProviderAccept, E::ProviderReject, E::ConsumerCountersign,
                       E::ProviderRevoke, E::ClockPastExpiry}) {
            auto it = edges.find({s, e});
            auto got = next_state(s, e);
            if (it == edges.end()) {
                EXPECT_FALSE(got) << to_string(s) << " " << to_string(e);
            } else {
                EXPECT_EQ(got, it->second) << to_string(s) << " " << to_string(e);
            }
        }
    }
}

TEST(StateMachine, PartyAndExpiryChecks) {
    Contract c;
    c.contract_id = "c1";
    c.provider_id = "farm";
    c.consumer_id = "alice";
    c.policy = policy();
    c.state = ContractState::Requested;
    auto everyone = [](const std::string&) { return true; };
    auto nobody = [](const std::string&) { return false; };
    EXPECT_EQ(code_of([&] { negotiate_transition(c, ContractEvent::ProviderAccept, "alice", kT0, everyone); }),
              ErrorCode::WrongActor);
    EXPECT_EQ(code_of([&] { negotiate_transition(c, ContractEvent::ProviderAccept, "farm", kT0, nobody); }),
              ErrorCode::NotEnrolled);
    EXPECT_EQ(code_of([&] { negotiate_transition(c, ContractEvent::ConsumerCountersign, "alice", kT0, everyone); }),
              ErrorCode::InvalidTransition);
    EXPECT_EQ(code_of([&] { negotiate_transition(c, ContractEvent::ClockPastExpiry, "farm", c.policy.expires_at, everyone); }),
              ErrorCode::WrongActor);
    EXPECT_EQ(code_of([&] { negotiate_transition(c, ContractEvent::ClockPastExpiry, "system", c.policy.expires_at - 1, everyone); }),
              ErrorCode::InvalidTransition);
    auto next = negotiate_transition(c, ContractEvent::ClockPastExpiry, "system", c.policy.expires_at, everyone);
    EXPECT_EQ(next.state, ContractState::Expired);
    ASSERT_EQ(next.history.size(), 1u);
    EXPECT_EQ(next.history[0].actor, "system");
}

TEST(Certificates, RandomUnapprovedOrExpiredAllFail) {
    RandomSource random(5);
    DataSpace ds({"dataspace", {"good", "stale"}}, random);
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 1000; ++i) {
        bool expired = rng() % 2;
        auto now = kT0 + static_cast<UnixSeconds>(rng() % kYear);
        auto c = expired ? cert(rng() % 2 ? "good" : "stale", now - static_cast<UnixSeconds>(rng() % kYear))
                         : cert("rogue-" + std::to_string(rng()), now + static_cast<UnixSeconds>(rng() % kYear) + 1);
        auto code = code_of([&] { ds.enroll({"m" + std::to_string(i), "", Role::Consumer}, c, now); });
        EXPECT_EQ(code, expired ? ErrorCode::CertificateExpired : ErrorCode::CertificateNotApproved);
        EXPECT_FALSE(ds.is_active("m" + std::to_string(i)));
    }
}

TEST(Certificates, ValidUntilIsExclusive) {
    EXPECT_NO_THROW(check_certificate(cert("a", kT0 + 1), {"a"}, kT0));
    EXPECT_EQ(code_of([] { check_certificate(cert("a", kT0), {"a"}, kT0); }), ErrorCode::CertificateExpired);
    EXPECT_EQ(code_of([] { check_certificate(cert("a", kT0), {"b"}, kT0); }), ErrorCode::CertificateNotApproved);
}

TEST(Policy, Validation) {
    EXPECT_NO_THROW(policy().validate());
    auto p = policy();
    p.policy_id = "";
    EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidPolicy);
    p = policy();
    p.time_window = {10, 5};
    EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidPolicy);
    p = policy();
    p.spatial_scope = BoundingBox{48, 47, 9, 10};
    EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidPolicy);
    p = policy();
    p.max_requests_per_hour = 0;
    EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidPolicy);
    p = policy();
    p.spatial_scope = BoundingBox{47, 48, 9, 10};
    EXPECT_EQ(policy_from_json(policy_to_json(p)), p);
}

TEST(Policy, RateLimitExample) {
    Contract c;
    c.contract_id = "c";
    c.state = ContractState::Active;
    c.policy = policy(2);
    RateCounter rate;
    DataRequest req{{kT0, kT0 + 60}, std::nullopt};
    EXPECT_TRUE(evaluate_policy(req, c, kT0, rate).allowed);
    rate.record("c", kT0);
    EXPECT_TRUE(evaluate_policy(req, c, kT0 + 10, rate).allowed);
    rate.record("c", kT0 + 10);
    auto third = evaluate_policy(req, c, kT0 + 20, rate);
    EXPECT_FALSE(third.allowed);
    EXPECT_EQ(third.reason, DenyReason::RateExceeded);
    EXPECT_FALSE(evaluate_policy(req, c, kT0 + 3599, rate).allowed);
    EXPECT_TRUE(evaluate_policy(req, c, kT0 + 3600, rate).allowed);
}

TEST(Policy, DenyOrder) {
    Contract c;
    c.contract_id = "c";
    c.state = ContractState::Agreed;
    c.policy = policy();
    c.policy.spatial_scope = BoundingBox{47.0, 47.05, 9.0, 9.05};
    RateCounter rate;
    DataRequest ok{{kT0, kT0 + 60}, std::nullopt};
    EXPECT_EQ(evaluate_policy(ok, c, kT0, rate).reason, DenyReason::ContractNotActive);
    c.state = ContractState::Active;
    EXPECT_TRUE(evaluate_policy(ok, c, kT0, rate).allowed);
    EXPECT_EQ(evaluate_policy(ok, c, c.policy.expires_at, rate).reason, DenyReason::ContractExpired);
    DataRequest wide{{kT0 - 2 * 86400, kT0}, std::nullopt};
    EXPECT_EQ(evaluate_policy(wide, c, kT0, rate).reason, DenyReason::WindowViolation);
    DataRequest reversed{{kT0 + 10, kT0}, std::nullopt};
    EXPECT_EQ(evaluate_policy(reversed, c, kT0, rate).reason, DenyReason::WindowViolation);
    DataRequest outside{{kT0, kT0 + 60}, BoundingBox{47.0, 47.2, 9.0, 9.05}};
    EXPECT_EQ(evaluate_policy(outside, c, kT0, rate).reason, DenyReason::ScopeViolation);
    DataRequest inside{{kT0, kT0 + 60}, BoundingBox{47.01, 47.02, 9.01, 9.02}};
    EXPECT_TRUE(evaluate_policy(inside, c, kT0, rate).allowed);
}

TEST_F(Fixture, EnrollAndRevoke) {
    EXPECT_EQ(code_of([&] { ds.enroll({"alice", "", Role::Consumer}, cert("ok"), kT0); }), ErrorCode::DuplicateMember);
    EXPECT_EQ(code_of([&] { ds.enroll({"dataspace", "", Role::Consumer}, cert("ok"), kT0); }), ErrorCode::DuplicateMember);
    EXPECT_EQ(code_of([&] { ds.enroll({"x", "", Role::Consumer}, cert("old", kT0), kT0); }), ErrorCode::CertificateExpired);
    EXPECT_TRUE(ds.key_of("alice", Role::Consumer));
    EXPECT_FALSE(ds.key_of("alice", Role::Provider));
    EXPECT_EQ(ds.key_of("alice")->size(), kSharedSecretSize);
    ds.revoke_member("alice", kT0 + 1);
    EXPECT_FALSE(ds.is_active("alice"));
    EXPECT_FALSE(ds.key_of("alice"));
    EXPECT_EQ(ds.member("alice")->status, MemberStatus::Revoked);
    EXPECT_EQ(code_of([&] { ds.revoke_member("nobody", kT0); }), ErrorCode::NotEnrolled);
}

TEST_F(Fixture, NegotiationAndTransfer) {
    auto offer = ds.publish_offer("farm", "field-a", policy(), kT0);
    EXPECT_EQ(ds.catalog("bob", kT0).size(), 1u);
    auto c = ds.request_contract("alice", offer.contract_id, kT0);
    EXPECT_EQ(c.state, ContractState::Requested);
    EXPECT_NE(c.contract_id, offer.contract_id);
    EXPECT_EQ(c.offer_id, offer.contract_id);
    // the offer stays open for others
    EXPECT_EQ(ds.contract(offer.contract_id).state, ContractState::Offered);
    EXPECT_EQ(code_of([&] { ds.countersign("alice", c.contract_id, kT0); }), ErrorCode::InvalidTransition);
    EXPECT_EQ(code_of([&] { ds.decide("alice", c.contract_id, true, kT0); }), ErrorCode::WrongActor);
    EXPECT_EQ(ds.decide("farm", c.contract_id, true, kT0).state, ContractState::Agreed);

    DataRequest req{{kT0, kT0 + 3 * 3600}, std::nullopt};
    EXPECT_EQ(code_of([&] { ds.transfer_data("alice", c.contract_id, req, kT0); }), ErrorCode::ContractNotActive);
    EXPECT_EQ(code_of([&] { ds.countersign("bob", c.contract_id, kT0); }), ErrorCode::WrongActor);
    EXPECT_EQ(ds.countersign("alice", c.contract_id, kT0).state, ContractState::Active);

    auto result = ds.transfer_data("alice", c.contract_id, req, kT0 + 10);
    EXPECT_EQ(result.records.size(), 8u);
    EXPECT_EQ(code_of([&] { ds.transfer_data("bob", c.contract_id, req, kT0); }), ErrorCode::WrongActor);
    EXPECT_EQ(code_of([&] { ds.transfer_data("alice", "contract-999", req, kT0); }), ErrorCode::UnknownContract);
    EXPECT_EQ(code_of([&] { ds.transfer_data("alice", offer.contract_id, req, kT0); }), ErrorCode::UnknownContract);

    auto records = log->records();
    EXPECT_TRUE(audit::verify_audit_chain(records).ok);
    EXPECT_EQ(records.back().event, audit::Event::PolicyDeny);
    auto transfers = std::ranges::count_if(records, [](const auto& r) { return r.event == audit::Event::DataTransfer; });
    EXPECT_EQ(transfers, 1);
}

TEST_F(Fixture, ScopeFiltersDeliveredRecords) {
    auto p = policy();
    p.spatial_scope = BoundingBox{46.9, 47.05, 8.9, 9.05};
    auto c = active_contract(p);
    auto result = ds.transfer_data("alice", c.contract_id, {{kT0, kT0 + 86400}, std::nullopt}, kT0);
    ASSERT_EQ(result.records.size(), 24u);
    for (const auto& r : result.records) EXPECT_EQ(r.device_id, 1u);
    auto last = log->records().back();
    ASSERT_EQ(last.event, audit::Event::DataTransfer);
    EXPECT_EQ(last.details["record_count"], 24);
    EXPECT_EQ(last.details["delivered"]["ts_min"], kT0);
    EXPECT_EQ(last.details["delivered"]["extent"]["lat_max"], 47.0);
}

TEST_F(Fixture, AgreedContractDataRequestAlwaysDenied) {
    auto offer = ds.publish_offer("farm", "field-a", policy(100), kT0);
    auto c = ds.request_contract("alice", offer.contract_id, kT0);
    ds.decide("farm", c.contract_id, true, kT0);
    std::mt19937_64 rng(8);
    for (int i = 0; i < 200; ++i) {
        auto from = kT0 - 86400 + static_cast<UnixSeconds>(rng() % 86400);
        EXPECT_EQ(code_of([&] { ds.transfer_data("alice", c.contract_id, {{from, from + 60}, std::nullopt}, kT0 + i); }),
                  ErrorCode::ContractNotActive);
    }
}

TEST_F(Fixture, RateBurstAllowsExactlyLimit) {
    auto c = active_contract(policy(3));
    int allowed = 0;
    for (int i = 0; i < 10; ++i) {
        try {
            ds.transfer_data("alice", c.contract_id, {{kT0, kT0 + 60}, std::nullopt}, kT0 + i);
            ++allowed;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::RateExceeded);
        }
    }
    EXPECT_EQ(allowed, 3);
}

TEST_F(Fixture, RevocationsCutAccess) {
    auto c = active_contract(policy());
    DataRequest req{{kT0, kT0 + 60}, std::nullopt};
    ds.revoke_contract("farm", c.contract_id, kT0 + 5);
    EXPECT_EQ(code_of([&] { ds.transfer_data("alice", c.contract_id, req, kT0 + 6); }), ErrorCode::ContractNotActive);

    auto c2 = active_contract(policy(), "bob");
    ds.revoke_member("bob", kT0 + 7);
    EXPECT_EQ(code_of([&] { ds.transfer_data("bob", c2.contract_id, req, kT0 + 8); }), ErrorCode::NotEnrolled);
}

TEST_F(Fixture, RevokedProviderServesNothing) {
    auto c = active_contract(policy());
    ds.revoke_member("farm", kT0 + 1);
    EXPECT_EQ(code_of([&] { ds.transfer_data("alice", c.contract_id, {{kT0, kT0 + 60}, std::nullopt}, kT0 + 2); }),
              ErrorCode::NotEnrolled);
    EXPECT_TRUE(ds.catalog("alice", kT0 + 2).empty());
}

TEST_F(Fixture, ExpiryMovesContracts) {
    auto p = policy();
    p.expires_at = kT0 + 100;
    auto c = active_contract(p);
    EXPECT_TRUE(ds.expire_due(kT0 + 99).empty());
    auto expired = ds.expire_due(kT0 + 100);
    EXPECT_EQ(expired.size(), 2u);  // the offer template and the contract
    EXPECT_EQ(ds.contract(c.contract_id).state, ContractState::Expired);
    EXPECT_EQ(ds.contract(c.contract_id).history.back().actor, "system");
    EXPECT_TRUE(ds.expire_due(kT0 + 200).empty());
}

TEST_F(Fixture, PublishChecks) {
    EXPECT_EQ(code_of([&] { ds.publish_offer("farm", "missing", policy(), kT0); }), ErrorCode::UnknownDataset);
    EXPECT_EQ(code_of([&] { ds.publish_offer("alice", "field-a", policy(), kT0); }), ErrorCode::WrongActor);
    auto bad = policy();
    bad.time_window = {5, 1};
    EXPECT_EQ(code_of([&] { ds.publish_offer("farm", "field-a", bad, kT0); }), ErrorCode::InvalidPolicy);
}

// ---------------------------------------------------------------------------
// Envelope front end through the connector client

namespace {

struct Wired : Fixture {
    UnixSeconds now = kT0;
    net::InProcessChannel channel{[this](const wire::Envelope& e) { return ds.handle(e, now); }};
    RandomSource client_random{77};

    ConnectorClient client(const std::string& id) {
        ConnectorClient c(id, channel, client_random);
        c.set_secret(*ds.key_of(id));
        return c;
    }
};

}  // namespace

TEST_F(Wired, ClientFlow) {
    auto farm = client("farm");
    auto alice = client("alice");
    auto offer = farm.publish_offer("field-a", policy());
    auto offers = alice.catalog();
    ASSERT_EQ(offers.size(), 1u);
    EXPECT_EQ(offers[0].contract_id, offer.contract_id);
    auto c = alice.request_contract(offer.contract_id);
    EXPECT_EQ(farm.decide(c.contract_id, true).state, ContractState::Agreed);
    EXPECT_EQ(alice.countersign(c.contract_id).state, ContractState::Active);
    auto own = alice.catalog(true);
    auto result = alice.request_data(c.contract_id, {{kT0, kT0 + 3600}, std::nullopt});
    EXPECT_EQ(result.records.size(), 4u);
    EXPECT_EQ(result.records[0].field_id, "field-a");
    EXPECT_EQ(farm.revoke(c.contract_id).state, ContractState::Revoked);
    EXPECT_EQ(code_of([&] { alice.request_data(c.contract_id, {{kT0, kT0 + 3600}, std::nullopt}); }),
              ErrorCode::ContractNotActive);
}

TEST_F(Wired, EnrollOverEnvelope) {
    ConnectorClient carol("carol", channel, client_random);
    auto id = carol.enroll("Carol", Role::Consumer, cert("ok"));
    EXPECT_EQ(id.shared_secret, *ds.key_of("carol"));
    ConnectorClient dave("dave", channel, client_random);
    EXPECT_EQ(code_of([&] { dave.enroll("Dave", Role::Consumer, cert("rogue")); }), ErrorCode::CertificateNotApproved);
}

TEST_F(Wired, SignatureForgeryAndReplay) {
    auto alice = client("alice");
    auto bad = alice.make_request(wire::MsgType::CatalogQuery, json::object());
    bad = wire::sign_envelope(bad, Bytes(32, 0x42));
    EXPECT_EQ(code_of([&] { alice.send(bad, wire::MsgType::CatalogResult); }), ErrorCode::BadSignature);

    auto forged = alice.make_request(wire::MsgType::CatalogQuery, json::object());
    forged.sender_id = "bob";
    forged = wire::sign_envelope(forged, alice.secret());
    EXPECT_EQ(code_of([&] { alice.send(forged, wire::MsgType::CatalogResult); }), ErrorCode::BadSignature);

    auto ok = alice.make_request(wire::MsgType::CatalogQuery, json::object());
    EXPECT_NO_THROW(alice.send(ok, wire::MsgType::CatalogResult));
    EXPECT_EQ(code_of([&] { alice.send(ok, wire::MsgType::CatalogResult); }), ErrorCode::ReplayedMessage);

    ConnectorClient stranger("mallory", channel, client_random);
    stranger.set_secret(Bytes(32, 1));
    EXPECT_EQ(code_of([&] { stranger.catalog(); }), ErrorCode::NotEnrolled);

    auto deny = std::ranges::count_if(log->records(), [](const auto& r) { return r.event == audit::Event::PolicyDeny; });
    EXPECT_EQ(deny, 4);
}

TEST_F(Wired, RepliesAreSigned) {
    auto alice = client("alice");
    auto req = alice.make_request(wire::MsgType::CatalogQuery, json::object());
    auto reply = channel.call(req);
    EXPECT_EQ(reply.body["in_reply_to"], req.msg_id);
    EXPECT_TRUE(wire::verify_envelope(reply, alice.secret()));
}

TEST_F(Wired, MalformedBodiesComeBackAsErrors) {
    auto alice = client("alice");
    auto req = alice.make_request(wire::MsgType::DataRequest, {{"contract_id", 5}});
    auto reply = channel.call(req);
    EXPECT_EQ(reply.msg_type, wire::MsgType::Error);
    auto req2 = alice.make_request(wire::MsgType::DataRequest, {{"contract_id", "contract-1"}});
    EXPECT_EQ(channel.call(req2).msg_type, wire::MsgType::Error);
    EXPECT_TRUE(audit::verify_audit_chain(log->records()).ok);
}

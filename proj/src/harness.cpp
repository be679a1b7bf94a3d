#include "orvicon/harness.hpp"

#include "orvicon/dataspace.hpp"
#include "orvicon/gateway.hpp"
#include "orvicon/transport.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <memory>
#include <sstream>

namespace orvicon::harness {

namespace {

using dataspace::ConnectorClient;
using dataspace::Contract;
using dataspace::ContractState;
using wire::MsgType;

json zone_to_json(const frost::MitigationZone& z) {
    json cells = json::array();
    for (const auto& c : z.cells) cells.push_back({c.row, c.col});
    return {{"zone_id", z.zone_id},
            {"cell_count", z.cells.size()},
            {"cells", std::move(cells)},
            {"bbox", {{"min_row", z.bbox.min_row}, {"min_col", z.bbox.min_col}, {"max_row", z.bbox.max_row}, {"max_col", z.bbox.max_col}}},
            {"min_temp_c", z.min_temp_c}};
}

json error_outcome(const Error& e) { return {{"outcome", "error"}, {"code", std::string(to_string(e.code()))}}; }

template <typename F>
json attempt(F&& fn) {
    try {
        json result = fn();
        result["outcome"] = "ok";
        return result;
    } catch (const Error& e) {
        return error_outcome(e);
    } catch (const std::exception&) {
        return error_outcome(Error(ErrorCode::MessageMalformed, "unreadable reply"));
    }
}

struct TransferStats {
    std::uint64_t requests = 0;
    std::uint64_t allowed = 0;
    std::uint64_t denied = 0;
    std::uint64_t records = 0;
    std::optional<UnixSeconds> ts_min;
    std::optional<UnixSeconds> ts_max;
};

struct IngestTotals {
    std::uint64_t batches_sent = 0;
    std::uint64_t batches_accepted = 0;
    std::uint64_t batches_rejected = 0;
    std::uint64_t frames_rejected = 0;
    std::uint64_t stored = 0;
    std::uint64_t quarantined = 0;
    std::uint64_t duplicates = 0;
    std::map<std::string, std::uint64_t> rejection_codes;
};

class Runner {
public:
    Runner(ScenarioConfig config, const RunOptions& options)
        : cfg_(std::move(config)),
          opt_(options),
          random_(mix64(cfg_.seed ^ 0x0DA7A5FACEULL)),
          audit_(std::make_shared<audit::AuditLog>()),
          store_(opt_.store_dir ? std::make_unique<provider::RecordStore>(*opt_.store_dir)
                                : std::make_unique<provider::RecordStore>()),
          ds_(dataspace::DataSpaceConfig{cfg_.operator_id, cfg_.approved_certs}, random_, audit_),
          provider_id_(first_provider()),
          ingest_(*store_,
                  [this](const std::string& member, const std::string& role) {
                      return ds_.key_of(member, dataspace::role_from_string(role));
                  },
                  provider_id_, [this] { return random_.hex_id(); }),
          gateway_(cfg_.gateway.member_id, cfg_.sim.field.grid.cell_center_local(cfg_.gateway.cell), cfg_.gateway.flush) {}

    RunOutput run();

private:
    struct Client {
        std::unique_ptr<net::Channel> channel;
        std::unique_ptr<ConnectorClient> client;
    };

    std::string first_provider() const {
        for (const auto& m : cfg_.members) {
            if (m.role == dataspace::Role::Provider) return m.member_id;
        }
        return cfg_.operator_id;
    }

    std::unique_ptr<net::Channel> dataspace_channel() {
        if (ds_server_) return std::make_unique<net::SocketChannel>(ds_server_->port());
        return std::make_unique<net::InProcessChannel>([this](const wire::Envelope& e) { return ds_.handle(e, now_.load()); });
    }

    std::unique_ptr<net::Channel> ingest_channel() {
        if (ingest_server_) return std::make_unique<net::SocketChannel>(ingest_server_->port());
        return std::make_unique<net::InProcessChannel>([this](const wire::Envelope& e) { return ingest_.handle(e); });
    }

    void setup();
    void tick(UnixSeconds t, UnixSeconds t_end);
    void send_batch(const wire::IngestionBatch& batch);
    void enroll(const MemberSpec& m, const std::string& cert_id, UnixSeconds t, const ScriptAction* action);
    void publish(const OfferSpec& o, UnixSeconds t);
    void run_action(const ScriptAction& a, UnixSeconds t);
    void run_provider_agent(UnixSeconds t);
    void analyze(const std::string& consumer, UnixSeconds t);
    std::string contract_for(const std::string& offer_key, const std::string& consumer) const;
    wire::Envelope build(Client& c, MsgType type, json body, const ScriptAction& a);
    void log_action(UnixSeconds t, const std::string& actor, std::string_view name, json result);
    json build_report();

    ScenarioConfig cfg_;
    RunOptions opt_;
    RandomSource random_;
    std::shared_ptr<audit::AuditLog> audit_;
    std::unique_ptr<provider::RecordStore> store_;
    dataspace::DataSpace ds_;
    std::string provider_id_;
    provider::IngestEndpoint ingest_;
    gateway::Gateway gateway_;
    std::atomic<UnixSeconds> now_{0};
    std::unique_ptr<net::Server> ds_server_;
    std::unique_ptr<net::Server> ingest_server_;

    std::map<std::string, Client> clients_;
    Client uplink_;
    std::set<std::string> enrolled_at_schedule_;
    std::set<std::string> published_;
    std::vector<std::size_t> script_order_;
    std::size_t next_action_ = 0;

    std::map<std::string, std::string> offer_ids_;
    std::map<std::pair<std::string, std::string>, std::string> contract_ids_;
    std::map<std::string, std::map<provider::RecordKey, provider::SensorRecord>> received_;
    std::map<std::string, TransferStats> transfers_;
    IngestTotals ingest_totals_;
    json actions_ = json::array();
    json alerts_ = json::array();
    std::uint64_t analyses_ = 0;
    std::optional<frost::FrostAlert> last_alert_;
};

void Runner::setup() {
    const auto& grid = cfg_.sim.field.grid;
    for (const auto& s : cfg_.sensors) {
        gateway_.set_sensor_position(s.sim.device_id, grid.cell_center_local(s.sim.cell));
        if (!s.registered) continue;
        auto at = grid.cell_center(s.sim.cell);
        store_->register_sensor({s.sim.device_id, at.lat, at.lon, cfg_.sim.field.elevation(s.sim.cell), s.label, s.field_id});
    }
    for (const auto& m : cfg_.members) {
        if (m.role == dataspace::Role::Provider) ds_.attach_provider_store(m.member_id, *store_);
    }
    if (opt_.net) {
        ds_server_ = std::make_unique<net::Server>(
            [this](const wire::Envelope& e) { return ds_.handle(e, now_.load()); }, cfg_.operator_id);
        ingest_server_ = std::make_unique<net::Server>([this](const wire::Envelope& e) { return ingest_.handle(e); },
                                                       provider_id_);
    }
    for (const auto& m : cfg_.members) {
        Client c;
        c.channel = dataspace_channel();
        c.client = std::make_unique<ConnectorClient>(m.member_id, *c.channel, random_);
        clients_.emplace(m.member_id, std::move(c));
    }
    uplink_.channel = ingest_channel();
    uplink_.client = std::make_unique<ConnectorClient>(cfg_.gateway.member_id, *uplink_.channel, random_);

    script_order_.resize(cfg_.script.size());
    for (std::size_t i = 0; i < script_order_.size(); ++i) script_order_[i] = i;
    std::ranges::stable_sort(script_order_, {}, [&](std::size_t i) { return cfg_.script[i].at_s; });
}

void Runner::log_action(UnixSeconds t, const std::string& actor, std::string_view name, json result) {
    json entry = {{"at_s", t}, {"actor", actor}, {"action", std::string(name)}};
    entry.update(result);
    actions_.push_back(std::move(entry));
}

void Runner::enroll(const MemberSpec& m, const std::string& cert_id, UnixSeconds t, const ScriptAction* action) {
    auto& c = clients_.at(m.member_id);
    wire::Envelope e;
    e.msg_id = random_.hex_id();
    e.sender_id = m.member_id;
    e.msg_type = MsgType::Enroll;
    e.body = {{"member_id", m.member_id},
              {"display_name", m.display_name},
              {"role", std::string(dataspace::to_string(m.role))},
              {"certificate", dataspace::certificate_to_json(cfg_.certificates.at(cert_id))}};
    if (action) e = build(c, MsgType::Enroll, e.body, *action);
    auto send = [&] {
        auto body = c.client->send(e, MsgType::EnrollAck);
        auto secret = from_hex(body.at("shared_secret").get<std::string>());
        c.client->set_secret(secret);
        if (m.member_id == cfg_.gateway.member_id) uplink_.client->set_secret(secret);
        return json{{"cert_id", cert_id}};
    };
    json result = attempt(send);
    if (action && action->variant == Variant::Replay) result["replay"] = attempt(send);
    if (action && action->variant != Variant::None) result["variant"] = std::string(to_string(action->variant));
    if (!action) result["scheduled"] = true;
    log_action(t, m.member_id, "enroll", std::move(result));
}

void Runner::publish(const OfferSpec& o, UnixSeconds t) {
    auto& c = clients_.at(o.provider);
    json result = attempt([&] {
        auto offer = c.client->publish_offer(o.dataset_id, o.policy);
        offer_ids_[o.key] = offer.offer_id;
        return json{{"offer", o.key}, {"offer_id", offer.offer_id}};
    });
    result["scheduled"] = true;
    log_action(t, o.provider, "publish_offer", std::move(result));
}

std::string Runner::contract_for(const std::string& offer_key, const std::string& consumer) const {
    auto it = contract_ids_.find({offer_key, consumer});
    return it == contract_ids_.end() ? "contract-unknown" : it->second;
}

wire::Envelope Runner::build(Client& c, MsgType type, json body, const ScriptAction& a) {
    wire::Envelope e = c.client->make_request(type, std::move(body));
    switch (a.variant) {
    case Variant::None:
    case Variant::Replay:
        break;
    case Variant::ForgedSender:
        e.sender_id = a.target;
        e.signature.clear();
        if (!c.client->secret().empty()) e = wire::sign_envelope(std::move(e), c.client->secret());
        break;
    case Variant::BadSignature:
        e.signature.clear();
        e = wire::sign_envelope(std::move(e), random_.bytes(dataspace::kSharedSecretSize));
        break;
    }
    return e;
}

void Runner::send_batch(const wire::IngestionBatch& batch) {
    ++ingest_totals_.batches_sent;
    try {
        auto env = uplink_.client->make_request(MsgType::IngestBatch, wire::batch_to_json(batch));
        auto reply = uplink_.client->send(env, MsgType::IngestBatch);
        ++ingest_totals_.batches_accepted;
        ingest_totals_.stored += reply.at("stored").get<std::uint64_t>();
        ingest_totals_.quarantined += reply.at("quarantined").get<std::uint64_t>();
        ingest_totals_.duplicates += reply.at("duplicates").get<std::uint64_t>();
    } catch (const Error& e) {
        ++ingest_totals_.batches_rejected;
        ingest_totals_.frames_rejected += batch.frames.size();
        ++ingest_totals_.rejection_codes[std::string(to_string(e.code()))];
    }
}

void Runner::run_action(const ScriptAction& a, UnixSeconds t) {
    const auto name = to_string(a.kind);
    if (a.kind == ActionKind::RevokeMember) {
        json result = attempt([&] {
            ds_.revoke_member(a.target, t);
            return json{{"target", a.target}};
        });
        log_action(t, a.actor, name, std::move(result));
        return;
    }
    const auto* member = cfg_.find_member(a.actor);
    if (a.kind == ActionKind::Enroll) {
        enroll(*member, a.cert_id.empty() ? member->cert_id : a.cert_id, t, &a);
        return;
    }

    auto& c = clients_.at(a.actor);
    MsgType type = MsgType::CatalogQuery;
    MsgType expected = MsgType::CatalogResult;
    json body;
    std::function<json(const json&)> on_reply;
    json extra = json::object();

    switch (a.kind) {
    case ActionKind::CatalogQuery:
        body = {{"include_own", false}};
        on_reply = [](const json& r) { return json{{"offers", r.at("offers").size()}}; };
        break;
    case ActionKind::RequestContract: {
        type = MsgType::ContractRequest;
        expected = MsgType::ContractDecision;
        auto it = offer_ids_.find(a.offer);
        body = {{"offer_id", it == offer_ids_.end() ? std::string("offer-unpublished") : it->second}};
        extra["offer"] = a.offer;
        on_reply = [&](const json& r) {
            auto contract = dataspace::contract_from_json(r.at("contract"));
            contract_ids_[{a.offer, a.actor}] = contract.contract_id;
            return json{{"contract_id", contract.contract_id}, {"state", std::string(dataspace::to_string(contract.state))}};
        };
        break;
    }
    case ActionKind::Countersign:
    case ActionKind::RevokeContract: {
        auto id = contract_for(a.offer, a.contract_of);
        if (a.kind == ActionKind::Countersign) {
            type = MsgType::ContractCountersign;
            body = {{"contract_id", id}};
        } else {
            type = MsgType::ContractDecision;
            body = {{"contract_id", id}, {"decision", "revoke"}};
        }
        expected = MsgType::ContractDecision;
        extra["contract_id"] = id;
        on_reply = [](const json& r) {
            auto contract = dataspace::contract_from_json(r.at("contract"));
            return json{{"state", std::string(dataspace::to_string(contract.state))}};
        };
        break;
    }
    case ActionKind::DataRequest: {
        type = MsgType::DataRequest;
        expected = MsgType::DataResponse;
        auto id = contract_for(a.offer, a.contract_of);
        dataspace::TimeWindow w = a.window ? *a.window : dataspace::TimeWindow{t - *a.window_last_s, t};
        body = {{"contract_id", id}, {"window", dataspace::window_to_json(w)}};
        body["bbox"] = a.bbox ? dataspace::bbox_to_json(*a.bbox) : json(nullptr);
        extra["contract_id"] = id;
        extra["window"] = dataspace::window_to_json(w);
        on_reply = [&, t](const json& r) {
            auto& stats = transfers_[a.actor];
            auto& bag = received_[a.actor];
            std::uint64_t n = 0;
            for (const auto& rj : r.at("records")) {
                auto rec = dataspace::delivered_record_from_json(rj);
                stats.ts_min = std::min(stats.ts_min.value_or(rec.timestamp_s), rec.timestamp_s);
                stats.ts_max = std::max(stats.ts_max.value_or(rec.timestamp_s), rec.timestamp_s);
                bag.insert_or_assign(provider::RecordKey{rec.device_id, rec.frame_counter}, std::move(rec));
                ++n;
            }
            ++stats.allowed;
            stats.records += n;
            analyze(a.actor, t);
            return json{{"records", n}};
        };
        break;
    }
    default:
        break;
    }

    auto envelope = build(c, type, std::move(body), a);
    auto send = [&] { return on_reply(c.client->send(envelope, expected)); };
    json result = attempt(send);
    if (a.variant == Variant::Replay) result["replay"] = attempt(send);
    if (a.kind == ActionKind::DataRequest) {
        auto& stats = transfers_[a.actor];
        auto tries = a.variant == Variant::Replay ? 2u : 1u;
        stats.requests += tries;
        std::uint64_t ok = result["outcome"] == "ok";
        if (a.variant == Variant::Replay) ok += result["replay"]["outcome"] == "ok";
        stats.denied += tries - ok;
    }
    if (a.variant != Variant::None) {
        result["variant"] = std::string(to_string(a.variant));
        if (a.variant == Variant::ForgedSender) result["as"] = a.target;
    }
    extra.update(result);
    log_action(t, a.actor, name, std::move(extra));
}

void Runner::run_provider_agent(UnixSeconds t) {
    for (const auto& m : cfg_.members) {
        if (m.role != dataspace::Role::Provider) continue;
        auto& c = clients_.at(m.member_id);
        if (c.client->secret().empty() || !ds_.is_active(m.member_id)) continue;
        std::vector<Contract> pending;
        try {
            for (auto& contract : c.client->catalog(true)) {
                if (contract.state == ContractState::Requested && contract.provider_id == m.member_id) {
                    pending.push_back(std::move(contract));
                }
            }
        } catch (const Error& e) {
            log_action(t, m.member_id, "catalog_query", error_outcome(e));
            continue;
        }
        for (const auto& contract : pending) {
            bool accept = cfg_.provider_agent.auto_accept && !cfg_.provider_agent.reject_consumers.contains(contract.consumer_id);
            json result = attempt([&] {
                auto after = c.client->decide(contract.contract_id, accept);
                return json{{"state", std::string(dataspace::to_string(after.state))}};
            });
            json entry = {{"contract_id", contract.contract_id}, {"decision", accept ? "accept" : "reject"}, {"scheduled", true}};
            entry.update(result);
            log_action(t, m.member_id, "decide", std::move(entry));
        }
    }
}

void Runner::analyze(const std::string& consumer, UnixSeconds t) {
    if (!cfg_.frost) return;
    ++analyses_;
    std::vector<provider::SensorRecord> records;
    for (const auto& [_, r] : received_[consumer]) records.push_back(r);
    std::optional<frost::FrostAlert> alert;
    try {
        alert = frost::build_alert(cfg_.sim.field.grid, records, *cfg_.frost, t, std::max(1u, opt_.threads));
    } catch (const Error&) {
        return;
    }
    if (!alert) return;
    json zones = json::array();
    for (const auto& z : alert->zones) zones.push_back(zone_to_json(z));
    json eta = json::object();
    for (const auto& [dev, s] : alert->eta_s) eta[std::to_string(dev)] = s;
    json map = json::array();
    std::istringstream lines(frost::render_zone_map(alert->snapshot, alert->zones));
    for (std::string line; std::getline(lines, line);) map.push_back(line);
    alerts_.push_back({{"at_s", t},
                       {"consumer", consumer},
                       {"zone_count", alert->zones.size()},
                       {"zones", std::move(zones)},
                       {"min_temp_c", alert->min_temp_c},
                       {"coverage_fraction", alert->coverage_fraction},
                       {"eta_s", std::move(eta)},
                       {"map", std::move(map)}});
    last_alert_ = std::move(alert);
}

void Runner::tick(UnixSeconds t, UnixSeconds t_end) {
    now_ = t;
    for (const auto& c : ds_.expire_due(t)) {
        log_action(t, std::string(dataspace::kSystemActor), "expire",
                   {{"contract_id", c.contract_id}, {"state", std::string(dataspace::to_string(c.state))}, {"outcome", "ok"}});
    }
    for (const auto& m : cfg_.members) {
        if (m.enroll_at_s && *m.enroll_at_s <= t && enrolled_at_schedule_.insert(m.member_id).second) {
            enroll(m, m.cert_id, t, nullptr);
        }
    }
    for (const auto& o : cfg_.offers) {
        if (o.publish_at_s <= t && published_.insert(o.key).second) publish(o, t);
    }

    for (const auto& e : sim::emission_schedule(cfg_.sim, t, t_end)) {
        auto raw = wire::encode_frame(e.frame);
        gateway_.receive(raw, e.t);
        if (auto batch = gateway_.poll(e.t)) send_batch(*batch);
    }
    if (auto batch = gateway_.poll(t_end)) send_batch(*batch);

    bool acted = false;
    while (next_action_ < script_order_.size() && cfg_.script[script_order_[next_action_]].at_s <= t) {
        run_action(cfg_.script[script_order_[next_action_]], t);
        ++next_action_;
        acted = true;
    }
    if (acted) run_provider_agent(t);
}

json Runner::build_report() {
    const auto& gs = gateway_.stats();
    json report;
    report["schema_version"] = kSchemaVersion;
    report["scenario"] = cfg_.name;
    report["seed"] = cfg_.seed;
    report["mode"] = opt_.net ? "net" : "in-process";
    report["clock"] = {{"start_s", cfg_.clock.start_s}, {"end_s", cfg_.clock.end_s}, {"tick_s", cfg_.clock.tick_s}};
    report["gateway"] = {{"received", gs.received},
                         {"accepted", gs.accepted},
                         {"dropped_replay", gs.dropped_replay},
                         {"dropped_stale", gs.dropped_stale},
                         {"dropped_corrupt", gs.dropped_corrupt},
                         {"dropped_malformed", gs.dropped_malformed},
                         {"batches", gs.batches}};
    report["ingest"] = {{"batches_sent", ingest_totals_.batches_sent},
                        {"batches_accepted", ingest_totals_.batches_accepted},
                        {"batches_rejected", ingest_totals_.batches_rejected},
                        {"frames_rejected", ingest_totals_.frames_rejected},
                        {"stored", ingest_totals_.stored},
                        {"quarantined", ingest_totals_.quarantined},
                        {"duplicates", ingest_totals_.duplicates},
                        {"rejection_codes", ingest_totals_.rejection_codes}};

    json datasets = json::array();
    for (const auto& d : store_->list_datasets()) {
        datasets.push_back({{"dataset_id", d.dataset_id}, {"record_count", d.record_count}, {"min_ts", d.min_ts}, {"max_ts", d.max_ts}});
    }
    auto all = store_->all_records();
    json content = json::array();
    for (const auto& r : all) {
        content.push_back({r.device_id, r.frame_counter, r.timestamp_s, r.temperature_cdeg, r.field_id});
    }
    std::sort(content.begin(), content.end());
    report["store"] = {{"records", all.size()},
                       {"quarantined", store_->quarantined_records().size()},
                       {"datasets", std::move(datasets)},
                       {"content_hash", to_hex(sha256(wire::canonical_json(content)))}};

    report["actions"] = actions_;

    std::map<std::string, Contract> contracts;
    for (const auto& m : cfg_.members) {
        for (auto& c : ds_.contracts_of(m.member_id)) contracts.emplace(c.contract_id, std::move(c));
    }
    json cj = json::array();
    for (const auto& [id, c] : contracts) {
        cj.push_back({{"contract_id", id},
                      {"offer_id", c.offer_id},
                      {"dataset_id", c.dataset_id},
                      {"provider_id", c.provider_id},
                      {"consumer_id", c.consumer_id},
                      {"policy_id", c.policy.policy_id},
                      {"state", std::string(dataspace::to_string(c.state))}});
    }
    report["contracts"] = std::move(cj);

    auto records = audit_->records();
    struct PolicyCount {
        std::uint64_t allow = 0;
        std::uint64_t deny = 0;
        std::map<std::string, std::uint64_t> reasons;
    };
    std::map<std::string, PolicyCount> counts;
    std::map<std::string, std::map<std::string, std::uint64_t>> denials;
    for (const auto& r : records) {
        if (r.event == audit::Event::DataTransfer) {
            ++counts[r.details.value("policy_id", std::string{})].allow;
        } else if (r.event == audit::Event::PolicyDeny) {
            auto reason = r.details.value("reason", std::string{"unknown"});
            auto op = r.details.value("operation", std::string{"unknown"});
            ++denials[op][reason];
            if (op == "DATA_REQUEST" && r.details.contains("policy_id")) {
                auto& p = counts[r.details.at("policy_id").get<std::string>()];
                ++p.deny;
                ++p.reasons[reason];
            }
        }
    }
    json policies = json::object();
    for (const auto& [id, p] : counts) policies[id] = {{"allow", p.allow}, {"deny", p.deny}, {"reasons", p.reasons}};
    report["policies"] = std::move(policies);
    report["denials"] = denials;

    json transfers = json::object();
    for (const auto& [actor, s] : transfers_) {
        transfers[actor] = {{"requests", s.requests},
                            {"allowed", s.allowed},
                            {"denied", s.denied},
                            {"records", s.records},
                            {"ts_min", s.ts_min ? json(*s.ts_min) : json(nullptr)},
                            {"ts_max", s.ts_max ? json(*s.ts_max) : json(nullptr)}};
    }
    report["transfers"] = std::move(transfers);
    report["frost"] = {{"analyses", analyses_}, {"alerts", alerts_.size()}};
    report["alerts"] = alerts_;

    auto verdict = audit::verify_audit_chain(records);
    report["audit"] = {{"records", records.size()}, {"head_hash", audit_->head_hash()}, {"chain_ok", verdict.ok}};
    report["digest"] = report_digest(report);
    return report;
}

RunOutput Runner::run() {
    setup();
    const auto step = cfg_.clock.tick_s;
    for (UnixSeconds t = cfg_.clock.start_s; t <= cfg_.clock.end_s; t += step) {
        tick(t, std::min(t + step - 1, cfg_.clock.end_s));
    }
    if (gateway_.pending() > 0) send_batch(gateway_.flush_batch(cfg_.clock.end_s));
    if (ds_server_) ds_server_->stop();
    if (ingest_server_) ingest_server_->stop();

    RunOutput out;
    out.report = build_report();
    out.audit = audit_->records();
    out.store_records = store_->all_records();
    out.quarantined = store_->quarantined_records();
    out.last_alert = std::move(last_alert_);
    return out;
}

}  // namespace

RunOutput run_scenario(const ScenarioConfig& config, const RunOptions& options) {
    ScenarioConfig cfg = config;
    if (options.seed) {
        cfg.seed = *options.seed;
        cfg.sim.seed = *options.seed;
    }
    Runner runner(std::move(cfg), options);
    return runner.run();
}

std::string report_digest(const json& report) {
    json body = report;
    body.erase("digest");
    return to_hex(sha256(wire::canonical_json(body)));
}

std::string report_text(const json& report) { return report.dump(2) + "\n"; }

void write_report(const std::filesystem::path& file, const json& report) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + file.string());
    out << report_text(report);
    if (!out) fail(ErrorCode::Io, "write failed for " + file.string());
}

json read_report(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + file.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::MessageMalformed, file.string() + ": " + e.what());
    }
}

}  // namespace orvicon::harness

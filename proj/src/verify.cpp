#include "orvicon/harness.hpp"

#include <deque>
#include <set>

namespace orvicon::harness {

namespace {

struct Box {
    double lat_min = 0, lat_max = 0, lon_min = 0, lon_max = 0;
};

Box box_of(const json& j) {
    return {j.at("lat_min").get<double>(), j.at("lat_max").get<double>(), j.at("lon_min").get<double>(),
            j.at("lon_max").get<double>()};
}

bool inside(const Box& inner, const Box& outer) {
    return outer.lat_min <= inner.lat_min && inner.lat_max <= outer.lat_max && outer.lon_min <= inner.lon_min &&
           inner.lon_max <= outer.lon_max;
}

struct Policy {
    std::string id;
    UnixSeconds from = 0;
    UnixSeconds to = 0;
    std::optional<Box> scope;
    std::int64_t max_per_hour = 0;
    UnixSeconds expires_at = 0;
};

Policy policy_of(const json& j) {
    Policy p;
    p.id = j.at("policy_id").get<std::string>();
    p.from = j.at("time_window").at("from").get<UnixSeconds>();
    p.to = j.at("time_window").at("to").get<UnixSeconds>();
    if (j.contains("spatial_scope") && !j.at("spatial_scope").is_null()) p.scope = box_of(j.at("spatial_scope"));
    p.max_per_hour = j.at("max_requests_per_hour").get<std::int64_t>();
    p.expires_at = j.at("expires_at").get<UnixSeconds>();
    return p;
}

struct ContractView {
    std::string state;
    std::string provider;
    std::string consumer;
    std::optional<Policy> policy;
    std::deque<UnixSeconds> transfers;
};

// Legal contract edges, written out independently of the service's table.
const std::set<std::pair<std::string, std::string>> kEdges = {
    {"OFFERED", "REQUESTED"}, {"REQUESTED", "AGREED"}, {"REQUESTED", "REJECTED"}, {"AGREED", "ACTIVE"},
    {"OFFERED", "REVOKED"},   {"REQUESTED", "REVOKED"}, {"AGREED", "REVOKED"},   {"ACTIVE", "REVOKED"},
    {"OFFERED", "EXPIRED"},   {"REQUESTED", "EXPIRED"}, {"AGREED", "EXPIRED"},   {"ACTIVE", "EXPIRED"},
};

class Analyzer {
public:
    SovereigntyAnalysis run(std::span<const audit::AuditRecord> log) {
        for (const auto& r : log) {
            try {
                step(r);
            } catch (const std::exception& e) {
                flag(r, std::string("unreadable details: ") + e.what());
            }
        }
        return std::move(out_);
    }

private:
    void flag(const audit::AuditRecord& r, const std::string& what) {
        out_.violations.push_back("seq " + std::to_string(r.seq) + " (" + std::string(audit::to_string(r.event)) + "): " + what);
    }

    bool active(const std::string& id) const {
        auto it = members_.find(id);
        return it != members_.end() && it->second;
    }

    void step(const audit::AuditRecord& r) {
        const auto& d = r.details;
        switch (r.event) {
        case audit::Event::Enroll:
            if (d.at("member_id").get<std::string>() != r.actor) flag(r, "enrolment actor differs from member");
            members_[r.actor] = true;
            break;
        case audit::Event::Revoke:
            if (d.contains("member_id")) {
                members_[d.at("member_id").get<std::string>()] = false;
            } else {
                transition(r);
            }
            break;
        case audit::Event::Offer: {
            auto& c = contracts_[d.at("offer_id").get<std::string>()];
            c.state = "OFFERED";
            c.provider = r.actor;
            c.policy = policy_of(d.at("policy"));
            if (!active(r.actor)) flag(r, "offer by inactive member " + r.actor);
            break;
        }
        case audit::Event::Request:
        case audit::Event::Decision:
        case audit::Event::Countersign:
            transition(r);
            break;
        case audit::Event::DataTransfer:
            transfer(r);
            break;
        case audit::Event::PolicyDeny:
            if (d.value("operation", std::string{}) == "DATA_REQUEST" && d.contains("policy_id")) {
                ++out_.policy_counts[d.at("policy_id").get<std::string>()].second;
            }
            break;
        }
    }

    void transition(const audit::AuditRecord& r) {
        const auto& d = r.details;
        auto id = d.at("contract_id").get<std::string>();
        auto from = d.at("from").get<std::string>();
        auto to = d.at("to").get<std::string>();
        auto& c = contracts_[id];
        if (r.event == audit::Event::Request) {
            c.state = "OFFERED";
            c.provider = d.at("provider_id").get<std::string>();
            c.consumer = d.at("consumer_id").get<std::string>();
            c.policy = policy_of(d.at("policy"));
        }
        if (c.state.empty()) flag(r, "transition on unknown contract " + id);
        else if (c.state != from) flag(r, id + " recorded from " + from + " but was " + c.state);
        if (!kEdges.contains({from, to})) flag(r, id + " illegal edge " + from + " -> " + to);

        const auto& transition = d.at("transition").get_ref<const std::string&>();
        if (transition == "ClockPastExpiry") {
            if (r.actor != dataspace::kSystemActor) flag(r, "expiry by " + r.actor);
            if (c.policy && r.at < c.policy->expires_at) flag(r, id + " expired early");
        } else {
            bool consumer_side = transition == "ConsumerRequest" || transition == "ConsumerCountersign";
            const auto& party = consumer_side ? c.consumer : c.provider;
            if (r.actor != party) flag(r, id + " moved by " + r.actor + " instead of " + party);
            if (!active(r.actor)) flag(r, id + " moved by inactive member " + r.actor);
        }
        c.state = to;
    }

    void transfer(const audit::AuditRecord& r) {
        const auto& d = r.details;
        auto id = d.at("contract_id").get<std::string>();
        auto consumer = d.at("consumer_id").get<std::string>();
        auto count = d.at("record_count").get<std::uint64_t>();
        auto& delivered = out_.delivered[r.actor];
        ++delivered.transfers;
        delivered.records += count;
        ++out_.policy_counts[d.at("policy_id").get<std::string>()].first;

        if (consumer != r.actor) flag(r, "delivered to " + r.actor + " on behalf of " + consumer);
        if (!active(r.actor)) flag(r, "delivered to non-enrolled or revoked member " + r.actor);
        auto it = contracts_.find(id);
        if (it == contracts_.end() || !it->second.policy) {
            flag(r, "transfer under unknown contract " + id);
            return;
        }
        auto& c = it->second;
        const auto& p = *c.policy;
        if (c.state != "ACTIVE") flag(r, id + " is " + c.state + ", not ACTIVE");
        if (c.consumer != r.actor) flag(r, id + " belongs to " + c.consumer);
        if (!active(c.provider)) flag(r, "provider " + c.provider + " is not active");
        if (d.at("policy_id").get<std::string>() != p.id) flag(r, "policy id differs from the negotiated one");
        if (r.at >= p.expires_at) flag(r, id + " used after expiry");

        auto wf = d.at("window").at("from").get<UnixSeconds>();
        auto wt = d.at("window").at("to").get<UnixSeconds>();
        if (wf < p.from || wt > p.to) flag(r, "requested window outside policy window");
        std::optional<Box> request_box;
        if (d.contains("bbox") && !d.at("bbox").is_null()) request_box = box_of(d.at("bbox"));
        if (p.scope && request_box && !inside(*request_box, *p.scope)) flag(r, "requested bbox outside policy scope");

        const auto& got = d.at("delivered");
        if (got.is_null() != (count == 0)) flag(r, "record_count and delivered summary disagree");
        if (!got.is_null()) {
            auto ts_min = got.at("ts_min").get<UnixSeconds>();
            auto ts_max = got.at("ts_max").get<UnixSeconds>();
            if (ts_min < p.from || ts_max > p.to) flag(r, "records outside policy time window");
            if (ts_min < wf || ts_max > wt) flag(r, "records outside requested window");
            auto extent = box_of(got.at("extent"));
            if (p.scope && !inside(extent, *p.scope)) flag(r, "records outside policy spatial scope");
            if (request_box && !inside(extent, *request_box)) flag(r, "records outside requested bbox");
        }

        while (!c.transfers.empty() && r.at - c.transfers.front() >= dataspace::kRateWindowS) c.transfers.pop_front();
        c.transfers.push_back(r.at);
        if (static_cast<std::int64_t>(c.transfers.size()) > p.max_per_hour) {
            flag(r, id + " exceeded " + std::to_string(p.max_per_hour) + " transfers per hour");
        }
    }

    SovereigntyAnalysis out_;
    std::map<std::string, bool> members_;
    std::map<std::string, ContractView> contracts_;
};

}  // namespace

SovereigntyAnalysis analyze_sovereignty(std::span<const audit::AuditRecord> log) { return Analyzer{}.run(log); }

VerifyResult verify_run(const json& report, std::span<const audit::AuditRecord> log) {
    VerifyResult out;
    auto& diag = out.diagnostics;

    if (!report.is_object() || !report.contains("digest") || !report.at("digest").is_string()) {
        diag.push_back("report: no digest");
    } else if (report.at("digest").get<std::string>() != report_digest(report)) {
        diag.push_back("report: digest mismatch");
    }

    auto chain = audit::verify_audit_chain(log);
    if (!chain.ok) {
        diag.push_back("audit: chain broken at seq " + (chain.first_bad_seq ? std::to_string(*chain.first_bad_seq) : "?") +
                       ": " + chain.message);
    }

    try {
        const auto& a = report.at("audit");
        if (a.at("records").get<std::size_t>() != log.size()) {
            diag.push_back("audit: report lists " + std::to_string(a.at("records").get<std::size_t>()) +
                           " records, log has " + std::to_string(log.size()));
        }
        auto head = log.empty() ? audit::kGenesisHash : log.back().chain_hash;
        if (a.at("head_hash").get<std::string>() != head) diag.push_back("audit: head hash differs from the report");
        if (!a.at("chain_ok").get<bool>()) diag.push_back("audit: run reported a broken chain");
    } catch (const json::exception& e) {
        diag.push_back(std::string("report: audit section unreadable: ") + e.what());
    }

    auto analysis = analyze_sovereignty(log);
    for (const auto& v : analysis.violations) diag.push_back("sovereignty: " + v);

    try {
        const auto& policies = report.at("policies");
        std::set<std::string> ids;
        for (const auto& [id, _] : policies.items()) ids.insert(id);
        for (const auto& [id, _] : analysis.policy_counts) ids.insert(id);
        for (const auto& id : ids) {
            auto [allow, deny] = analysis.policy_counts.contains(id) ? analysis.policy_counts.at(id) : std::pair<std::uint64_t, std::uint64_t>{};
            std::uint64_t r_allow = 0;
            std::uint64_t r_deny = 0;
            if (policies.contains(id)) {
                r_allow = policies.at(id).at("allow").get<std::uint64_t>();
                r_deny = policies.at(id).at("deny").get<std::uint64_t>();
            }
            if (allow != r_allow || deny != r_deny) {
                diag.push_back("policies: " + id + " reported " + std::to_string(r_allow) + "/" + std::to_string(r_deny) +
                               " allow/deny, audit shows " + std::to_string(allow) + "/" + std::to_string(deny));
            }
        }
        const auto& transfers = report.at("transfers");
        std::set<std::string> actors;
        for (const auto& [id, _] : transfers.items()) actors.insert(id);
        for (const auto& [id, _] : analysis.delivered) actors.insert(id);
        for (const auto& actor : actors) {
            std::uint64_t audited = analysis.delivered.contains(actor) ? analysis.delivered.at(actor).records : 0;
            std::uint64_t reported = transfers.contains(actor) ? transfers.at(actor).at("records").get<std::uint64_t>() : 0;
            if (audited != reported) {
                diag.push_back("transfers: " + actor + " received " + std::to_string(reported) + " records, audit shows " +
                               std::to_string(audited));
            }
        }

        const auto& store = report.at("store");
        std::uint64_t in_datasets = 0;
        for (const auto& d : store.at("datasets")) in_datasets += d.at("record_count").get<std::uint64_t>();
        if (in_datasets != store.at("records").get<std::uint64_t>()) {
            diag.push_back("store: " + std::to_string(store.at("records").get<std::uint64_t>()) +
                           " records but datasets hold " + std::to_string(in_datasets));
        }
        if (report.at("frost").at("alerts").get<std::size_t>() != report.at("alerts").size()) {
            diag.push_back("frost: alert count differs from the alert list");
        }
    } catch (const json::exception& e) {
        diag.push_back(std::string("report: unreadable section: ") + e.what());
    }
    return out;
}

VerifyResult verify_files(const std::filesystem::path& report, const std::filesystem::path& audit_log) {
    json doc;
    std::vector<audit::AuditRecord> log;
    VerifyResult out;
    try {
        doc = read_report(report);
    } catch (const Error& e) {
        out.diagnostics.push_back(std::string("report: ") + e.what());
    }
    try {
        log = audit::read_jsonl(audit_log);
    } catch (const Error& e) {
        out.diagnostics.push_back(std::string("audit: ") + e.what());
    }
    if (!out.ok()) return out;
    return verify_run(doc, log);
}

}  // namespace orvicon::harness

#include "orvicon/audit.hpp"

#include <fstream>

namespace orvicon::audit {

namespace {
constexpr std::pair<Event, std::string_view> kEventNames[] = {
    {Event::Enroll, "ENROLL"},           {Event::Offer, "OFFER"},
    {Event::Request, "REQUEST"},         {Event::Decision, "DECISION"},
    {Event::Countersign, "COUNTERSIGN"}, {Event::DataTransfer, "DATA_TRANSFER"},
    {Event::PolicyDeny, "POLICY_DENY"},  {Event::Revoke, "REVOKE"},
};

json body_of(const AuditRecord& r) {
    return {{"seq", r.seq},
            {"at", r.at},
            {"actor", r.actor},
            {"event", std::string(to_string(r.event))},
            {"details", r.details}};
}
}  // namespace

std::string_view to_string(Event e) noexcept {
    for (const auto& [ev, name] : kEventNames) {
        if (ev == e) return name;
    }
    return "UNKNOWN";
}

std::optional<Event> event_from_string(std::string_view name) noexcept {
    for (const auto& [ev, n] : kEventNames) {
        if (n == name) return ev;
    }
    return std::nullopt;
}

std::string canonical_record_bytes(const AuditRecord& r) { return wire::canonical_json(body_of(r)); }

std::string chain_link(const std::string& previous_hex, const AuditRecord& r) {
    Bytes input;
    try {
        input = from_hex(previous_hex);
    } catch (const Error&) {
        input.clear();
    }
    auto bytes = canonical_record_bytes(r);
    input.insert(input.end(), bytes.begin(), bytes.end());
    return to_hex(sha256(input));
}

json record_to_json(const AuditRecord& r) {
    auto j = body_of(r);
    j["chain_hash"] = r.chain_hash;
    return j;
}

AuditRecord record_from_json(const json& j) {
    try {
        if (!j.is_object() || j.size() != 6) fail(ErrorCode::MessageMalformed, "audit record must have 6 fields");
        AuditRecord r;
        r.seq = j.at("seq").get<std::uint64_t>();
        r.at = j.at("at").get<UnixSeconds>();
        r.actor = j.at("actor").get<std::string>();
        auto name = j.at("event").get<std::string>();
        auto ev = event_from_string(name);
        if (!ev) fail(ErrorCode::MessageMalformed, "unknown audit event '" + name + "'");
        r.event = *ev;
        r.details = j.at("details");
        r.chain_hash = j.at("chain_hash").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::MessageMalformed, e.what());
    }
}

ChainVerdict verify_audit_chain(std::span<const AuditRecord> log) {
    std::string prev = kGenesisHash;
    std::uint64_t expected_seq = 1;
    for (const auto& r : log) {
        if (r.seq != expected_seq) {
            return {false, expected_seq, "sequence gap: expected " + std::to_string(expected_seq) + ", found " +
                                             std::to_string(r.seq)};
        }
        auto link = chain_link(prev, r);
        if (link != r.chain_hash) return {false, r.seq, "chain hash mismatch at seq " + std::to_string(r.seq)};
        prev = link;
        ++expected_seq;
    }
    return {true, std::nullopt, "ok"};
}

AuditLog::AuditLog(std::filesystem::path sink) : sink_(std::move(sink)) {
    std::ofstream out(*sink_, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot create audit log " + sink_->string());
}

AuditRecord AuditLog::append(UnixSeconds at, std::string actor, Event event, json details) {
    std::lock_guard lock(mutex_);
    AuditRecord r;
    r.seq = records_.size() + 1;
    r.at = at;
    r.actor = std::move(actor);
    r.event = event;
    r.details = std::move(details);
    r.chain_hash = chain_link(records_.empty() ? kGenesisHash : records_.back().chain_hash, r);
    if (sink_) {
        std::ofstream out(*sink_, std::ios::app);
        out << wire::canonical_json(record_to_json(r)) << '\n';
        if (!out) fail(ErrorCode::Io, "append to audit log failed");
    }
    records_.push_back(r);
    return r;
}

std::vector<AuditRecord> AuditLog::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t AuditLog::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::string AuditLog::head_hash() const {
    std::lock_guard lock(mutex_);
    return records_.empty() ? kGenesisHash : records_.back().chain_hash;
}

void AuditLog::write_jsonl(const std::filesystem::path& file) const {
    std::lock_guard lock(mutex_);
    std::ofstream out(file, std::ios::trunc);
    for (const auto& r : records_) out << wire::canonical_json(record_to_json(r)) << '\n';
    if (!out) fail(ErrorCode::Io, "cannot write " + file.string());
}

std::vector<AuditRecord> read_jsonl(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCode::Io, "cannot open " + file.string());
    std::vector<AuditRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) fail(ErrorCode::MessageMalformed, file.string() + ":" + std::to_string(lineno) + ": not a document");
        try {
            out.push_back(record_from_json(doc));
        } catch (const Error& e) {
            fail(ErrorCode::MessageMalformed, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace orvicon::audit

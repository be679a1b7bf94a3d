#pragma once

#include "orvicon/error.hpp"
#include "orvicon/wire.hpp"

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace orvicon::audit {

using wire::json;

enum class Event { Enroll, Offer, Request, Decision, Countersign, DataTransfer, PolicyDeny, Revoke };

std::string_view to_string(Event e) noexcept;
std::optional<Event> event_from_string(std::string_view name) noexcept;

struct AuditRecord {
    std::uint64_t seq = 0;
    UnixSeconds at = 0;
    std::string actor;
    Event event = Event::Enroll;
    json details = json::object();
    std::string chain_hash;  ///< hex SHA-256(previous chain hash || canonical record bytes)

    bool operator==(const AuditRecord&) const = default;
};

/// Canonical bytes of everything except chain_hash.
std::string canonical_record_bytes(const AuditRecord& r);
/// The genesis link is 32 zero bytes.
std::string chain_link(const std::string& previous_hex, const AuditRecord& r);
inline const std::string kGenesisHash(64, '0');

json record_to_json(const AuditRecord& r);
/// Throws Error(MessageMalformed).
AuditRecord record_from_json(const json& j);

struct ChainVerdict {
    bool ok = true;
    std::optional<std::uint64_t> first_bad_seq;
    std::string message;
};

/// Recomputes the chain and the gapless 1-based sequence. Reports the first
/// sequence number at which either breaks: a mutated record reports its own
/// seq, a deleted record the seq that is missing.
ChainVerdict verify_audit_chain(std::span<const AuditRecord> log);

/// Append-only, hash-chained log. Appends are serialized; each record is
/// also written to the sink file, one canonical document per line, when one
/// is attached.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::filesystem::path sink);

    AuditRecord append(UnixSeconds at, std::string actor, Event event, json details);

    std::vector<AuditRecord> records() const;
    std::size_t size() const;
    std::string head_hash() const;

    void write_jsonl(const std::filesystem::path& file) const;

private:
    mutable std::mutex mutex_;
    std::vector<AuditRecord> records_;
    std::optional<std::filesystem::path> sink_;
};

/// Throws Error(MessageMalformed) naming the offending line.
std::vector<AuditRecord> read_jsonl(const std::filesystem::path& file);

}  // namespace orvicon::audit

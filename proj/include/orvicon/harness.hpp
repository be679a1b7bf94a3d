#pragma once

#include "orvicon/audit.hpp"
#include "orvicon/config.hpp"
#include "orvicon/provider.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace orvicon::harness {

struct RunOptions {
    std::optional<std::uint64_t> seed;  ///< overrides the scenario seed
    bool net = false;                   ///< services behind loopback sockets
    std::optional<std::filesystem::path> store_dir;
    unsigned threads = 1;  ///< frost snapshot workers
};

struct RunOutput {
    json report;  ///< includes the digest
    std::vector<audit::AuditRecord> audit;
    std::vector<provider::SensorRecord> store_records;
    std::vector<provider::SensorRecord> quarantined;
    std::optional<frost::FrostAlert> last_alert;
};

/// Runs the scenario on the simulated clock. Protocol failures end up in the
/// report; only configuration and I/O problems throw.
RunOutput run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

/// Hex SHA-256 of the canonical report with the "digest" member removed.
std::string report_digest(const json& report);
/// Pretty-printed report text as written to disk (trailing newline).
std::string report_text(const json& report);

void write_report(const std::filesystem::path& file, const json& report);
/// Throws Error(MessageMalformed) on unparsable input.
json read_report(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// Per-member view of DATA_TRANSFER records reconstructed from the audit log.
struct Delivery {
    std::uint64_t transfers = 0;
    std::uint64_t records = 0;
};

/// Replays the audit log from scratch: membership, contract states and
/// policies are rebuilt from the records alone. Every DATA_TRANSFER is then
/// checked against that reconstruction.
struct SovereigntyAnalysis {
    std::vector<std::string> violations;
    std::map<std::string, Delivery> delivered;  ///< by receiving member
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> policy_counts;  ///< (allow, deny) by policy id

    bool ok() const noexcept { return violations.empty(); }
};

SovereigntyAnalysis analyze_sovereignty(std::span<const audit::AuditRecord> log);

struct VerifyResult {
    std::vector<std::string> diagnostics;
    bool ok() const noexcept { return diagnostics.empty(); }
};

VerifyResult verify_run(const json& report, std::span<const audit::AuditRecord> log);
VerifyResult verify_files(const std::filesystem::path& report, const std::filesystem::path& audit_log);

}  // namespace orvicon::harness

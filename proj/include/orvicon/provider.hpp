#pragma once

#include "orvicon/error.hpp"
#include "orvicon/wire.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace orvicon::provider {

struct SensorRegistration {
    std::uint64_t device_id = 0;
    double lat = 0.0;
    double lon = 0.0;
    double elevation_m = 0.0;
    std::string label;
    std::string field_id;

    bool operator==(const SensorRegistration&) const = default;
};

struct SensorRecord {
    std::uint64_t device_id = 0;
    std::uint32_t frame_counter = 0;
    std::int64_t timestamp_s = 0;
    std::int16_t temperature_cdeg = 0;
    double lat = 0.0;
    double lon = 0.0;
    double elevation_m = 0.0;
    std::string gateway_id;
    int rssi_dbm = 0;
    std::uint64_t ingest_seq = 0;
    std::string field_id;  ///< empty for quarantined records

    double temperature_c() const noexcept { return temperature_cdeg / 100.0; }

    /// Everything but ingest_seq, which depends on persistence order.
    bool same_content(const SensorRecord& o) const noexcept {
        return device_id == o.device_id && frame_counter == o.frame_counter && timestamp_s == o.timestamp_s &&
               temperature_cdeg == o.temperature_cdeg && lat == o.lat && lon == o.lon &&
               elevation_m == o.elevation_m && gateway_id == o.gateway_id && rssi_dbm == o.rssi_dbm &&
               field_id == o.field_id;
    }
    bool operator==(const SensorRecord&) const = default;
};

/// Dedup identity of a record.
using RecordKey = std::pair<std::uint64_t, std::uint32_t>;  // (device_id, frame_counter)

struct DatasetDescriptor {
    std::string dataset_id;
    std::string field_id;
    std::string description;
    std::int64_t min_ts = 0;
    std::int64_t max_ts = 0;
    std::uint64_t record_count = 0;

    bool operator==(const DatasetDescriptor&) const = default;
};

struct IngestResult {
    std::uint64_t stored = 0;
    std::uint64_t quarantined = 0;
    std::uint64_t duplicates = 0;

    bool operator==(const IngestResult&) const = default;
};

struct ReconcileResult {
    std::uint64_t moved = 0;
    std::uint64_t remaining = 0;
};

struct Window {
    std::int64_t from = 0;
    std::int64_t to = 0;
};

// ---------------------------------------------------------------------------
// Store file format (all integers big-endian, doubles as IEEE-754 bit patterns)
//
//   header : "OVRS" magic, u32 format version (= 1)
//   block  : "BTCH", u32 n, n * 120-byte records, 4-byte SHA-256 prefix of
//            the block bytes before it
//   record : u64 device_id, u32 frame_counter, i64 timestamp_s,
//            i16 temperature_cdeg, f64 lat, f64 lon, f64 elevation_m,
//            i16 rssi_dbm, u64 ingest_seq, char[32] gateway_id,
//            char[32] field_id (NUL padded)
//
// Each ingested batch is one block, so a batch is either fully present or
// (torn tail after a crash) discarded on reopen. records.log holds enriched
// records of every dataset, quarantine.log holds records of unregistered
// devices, sensors.json the registrations.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kStoreFormatVersion = 1;
inline constexpr std::size_t kRecordSize = 120;
inline constexpr std::size_t kMaxIdLength = 32;

Bytes encode_record(const SensorRecord& r);
SensorRecord decode_record(std::span<const std::uint8_t> bytes);

/// Reads every record of a log file without going through the store index.
std::vector<SensorRecord> read_log(const std::filesystem::path& file);

/// Persistent record store. Mutations are serialized by a single writer lock;
/// readers share a lock and see the state after the last completed batch.
class RecordStore {
public:
    /// In-memory store.
    RecordStore();
    /// Opens (or creates) a store directory and rebuilds the index by scanning
    /// the logs. Throws Error(StoreCorrupt) on a damaged header or interior
    /// block.
    explicit RecordStore(std::filesystem::path dir);

    /// Throws Error(InvalidRegistration) on bad coordinates or ids and
    /// Error(DuplicateDevice) when the device is registered with different
    /// data. Re-registering identical data succeeds.
    void register_sensor(const SensorRegistration& reg);
    std::optional<SensorRegistration> registration(std::uint64_t device_id) const;
    std::vector<SensorRegistration> registrations() const;

    IngestResult ingest(const wire::IngestionBatch& batch);

    /// Records of the dataset with timestamp in [window.from, window.to],
    /// ordered by (timestamp_s, device_id, frame_counter). Throws
    /// Error(InvalidWindow) when from > to and Error(UnknownDataset).
    std::vector<SensorRecord> query_records(const std::string& dataset_id, Window window,
                                            const std::optional<std::set<std::uint64_t>>& devices = std::nullopt) const;

    bool has_dataset(const std::string& dataset_id) const;
    /// Throws Error(UnknownDataset).
    DatasetDescriptor describe(const std::string& dataset_id) const;
    std::vector<DatasetDescriptor> list_datasets() const;

    /// Moves quarantined records of now-registered devices into the store.
    ReconcileResult reconcile_quarantine();

    std::vector<SensorRecord> all_records() const;
    std::vector<SensorRecord> quarantined_records() const;
    std::uint64_t record_count() const;

    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

private:
    void load();
    void append_block(const std::filesystem::path& file, const std::vector<SensorRecord>& records);
    void rewrite_log(const std::filesystem::path& file, const std::vector<SensorRecord>& records);
    void save_registry() const;
    void index_record(SensorRecord r);

    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mutex_;
    std::map<std::uint64_t, SensorRegistration> sensors_;
    std::vector<SensorRecord> records_;
    std::map<std::string, std::vector<std::size_t>> by_dataset_;
    std::set<RecordKey> stored_keys_;
    std::vector<SensorRecord> quarantine_;
    std::set<RecordKey> quarantine_keys_;
    std::uint64_t next_seq_ = 1;
};

/// Secret lookup for signed traffic: the key issued to a member, if it is
/// enrolled and active with the given role.
using KeyLookup = std::function<std::optional<Bytes>(const std::string& member_id, const std::string& role)>;

/// INGEST_BATCH endpoint. Verifies the gateway's signature, ingests, and
/// answers with an INGEST_BATCH acknowledgement carrying the counts.
class IngestEndpoint {
public:
    IngestEndpoint(RecordStore& store, KeyLookup keys, std::string provider_id,
                   std::function<std::string()> msg_ids);

    /// Throws Error(BadSignature) or Error(MalformedBatch).
    IngestResult ingest_envelope(const wire::Envelope& envelope);
    wire::Envelope handle(const wire::Envelope& envelope);

private:
    RecordStore& store_;
    KeyLookup keys_;
    std::string provider_id_;
    std::function<std::string()> msg_ids_;
};

}  // namespace orvicon::provider

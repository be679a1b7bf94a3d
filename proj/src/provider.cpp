#include "orvicon/provider.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

namespace orvicon::provider {

namespace fs = std::filesystem;
using wire::json;

namespace {

constexpr char kMagic[4] = {'O', 'V', 'R', 'S'};
constexpr char kBlockMagic[4] = {'B', 'T', 'C', 'H'};
constexpr std::size_t kHeaderSize = 8;

class Writer {
public:
    explicit Writer(Bytes& out) : out_(out) {}
    template <typename T>
    void be(T v) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * (sizeof(T) - 1 - i))));
    }
    void f64(double v) { be(std::bit_cast<std::uint64_t>(v)); }
    void text(const std::string& s, std::size_t width) {
        for (std::size_t i = 0; i < width; ++i) out_.push_back(i < s.size() ? static_cast<std::uint8_t>(s[i]) : 0);
    }
    void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }

private:
    Bytes& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
    template <typename T>
    T be() {
        using U = std::make_unsigned_t<T>;
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>((u << 8) | in_[pos_++]);
        return static_cast<T>(u);
    }
    double f64() { return std::bit_cast<double>(be<std::uint64_t>()); }
    std::string text(std::size_t width) {
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), width);
        pos_ += width;
        s.resize(std::strlen(s.c_str()));
        return s;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::array<std::uint8_t, 4> block_checksum(std::span<const std::uint8_t> block) {
    auto d = sha256(block);
    return {d[0], d[1], d[2], d[3]};
}

Bytes encode_block(const std::vector<SensorRecord>& records) {
    Bytes out;
    Writer w(out);
    w.raw(kBlockMagic, 4);
    w.be(static_cast<std::uint32_t>(records.size()));
    for (const auto& r : records) {
        auto rec = encode_record(r);
        out.insert(out.end(), rec.begin(), rec.end());
    }
    auto sum = block_checksum(out);
    out.insert(out.end(), sum.begin(), sum.end());
    return out;
}

Bytes header_bytes() {
    Bytes out;
    Writer w(out);
    w.raw(kMagic, 4);
    w.be(kStoreFormatVersion);
    return out;
}

struct LogScan {
    std::vector<SensorRecord> records;
    std::uintmax_t valid_length = 0;
    bool torn_tail = false;
};

// A short final block is an interrupted append and gets discarded; any other
// damage is corruption.
LogScan scan_log(const fs::path& file) {
    LogScan scan;
    std::ifstream in(file, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + file.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < kHeaderSize || std::memcmp(data.data(), kMagic, 4) != 0) {
        fail(ErrorCode::StoreCorrupt, file.string() + ": bad magic");
    }
    Reader hdr(std::span<const std::uint8_t>(data).subspan(4, 4));
    auto version = hdr.be<std::uint32_t>();
    if (version != kStoreFormatVersion) {
        fail(ErrorCode::StoreCorrupt, file.string() + ": unsupported format version " + std::to_string(version));
    }
    std::size_t pos = kHeaderSize;
    while (pos < data.size()) {
        std::span<const std::uint8_t> rest(data.data() + pos, data.size() - pos);
        auto where = file.string() + " at offset " + std::to_string(pos);
        if (rest.size() < 8) {
            scan.torn_tail = true;
            break;
        }
        if (std::memcmp(rest.data(), kBlockMagic, 4) != 0) fail(ErrorCode::StoreCorrupt, where + ": bad block magic");
        std::size_t count = Reader(rest.subspan(4, 4)).be<std::uint32_t>();
        std::size_t block_len = 8 + count * kRecordSize + 4;
        if (rest.size() < block_len) {
            scan.torn_tail = true;
            break;
        }
        if (!std::ranges::equal(block_checksum(rest.first(block_len - 4)), rest.subspan(block_len - 4, 4))) {
            fail(ErrorCode::StoreCorrupt, where + ": block checksum mismatch");
        }
        for (std::size_t i = 0; i < count; ++i) {
            scan.records.push_back(decode_record(rest.subspan(8 + i * kRecordSize, kRecordSize)));
        }
        pos += block_len;
    }
    scan.valid_length = pos;
    return scan;
}

void check_id(const std::string& id, const char* what, ErrorCode code) {
    if (id.empty() || id.size() > kMaxIdLength || id.find('\0') != std::string::npos) {
        fail(code, std::string(what) + " must be 1.." + std::to_string(kMaxIdLength) + " bytes");
    }
}

json registration_to_json(const SensorRegistration& r) {
    return {{"device_id", r.device_id}, {"lat", r.lat},     {"lon", r.lon},
            {"elevation_m", r.elevation_m}, {"label", r.label}, {"field_id", r.field_id}};
}

SensorRegistration registration_from_json(const json& j) {
    SensorRegistration r;
    r.device_id = j.at("device_id").get<std::uint64_t>();
    r.lat = j.at("lat").get<double>();
    r.lon = j.at("lon").get<double>();
    r.elevation_m = j.at("elevation_m").get<double>();
    r.label = j.at("label").get<std::string>();
    r.field_id = j.at("field_id").get<std::string>();
    return r;
}

bool record_order(const SensorRecord& a, const SensorRecord& b) {
    return std::tie(a.timestamp_s, a.device_id, a.frame_counter) < std::tie(b.timestamp_s, b.device_id, b.frame_counter);
}

}  // namespace

Bytes encode_record(const SensorRecord& r) {
    Bytes out;
    out.reserve(kRecordSize);
    Writer w(out);
    w.be(r.device_id);
    w.be(r.frame_counter);
    w.be(r.timestamp_s);
    w.be(r.temperature_cdeg);
    w.f64(r.lat);
    w.f64(r.lon);
    w.f64(r.elevation_m);
    w.be(static_cast<std::int16_t>(r.rssi_dbm));
    w.be(r.ingest_seq);
    w.text(r.gateway_id, kMaxIdLength);
    w.text(r.field_id, kMaxIdLength);
    return out;
}

SensorRecord decode_record(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kRecordSize) fail(ErrorCode::StoreCorrupt, "record size mismatch");
    Reader rd(bytes);
    SensorRecord r;
    r.device_id = rd.be<std::uint64_t>();
    r.frame_counter = rd.be<std::uint32_t>();
    r.timestamp_s = rd.be<std::int64_t>();
    r.temperature_cdeg = rd.be<std::int16_t>();
    r.lat = rd.f64();
    r.lon = rd.f64();
    r.elevation_m = rd.f64();
    r.rssi_dbm = rd.be<std::int16_t>();
    r.ingest_seq = rd.be<std::uint64_t>();
    r.gateway_id = rd.text(kMaxIdLength);
    r.field_id = rd.text(kMaxIdLength);
    return r;
}

std::vector<SensorRecord> read_log(const fs::path& file) { return scan_log(file).records; }

// ---------------------------------------------------------------------------

RecordStore::RecordStore() = default;

RecordStore::RecordStore(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(*dir_);
    load();
}

void RecordStore::load() {
    const auto registry = *dir_ / "sensors.json";
    if (fs::exists(registry)) {
        std::ifstream in(registry);
        json doc = json::parse(in, nullptr, false);
        if (doc.is_discarded() || !doc.is_array()) fail(ErrorCode::StoreCorrupt, registry.string() + " unreadable");
        try {
            for (const auto& item : doc) {
                auto reg = registration_from_json(item);
                sensors_[reg.device_id] = reg;
            }
        } catch (const json::exception& e) {
            fail(ErrorCode::StoreCorrupt, registry.string() + ": " + e.what());
        }
    }
    for (const char* name : {"records.log", "quarantine.log"}) {
        auto file = *dir_ / name;
        if (!fs::exists(file)) {
            std::ofstream out(file, std::ios::binary);
            auto hdr = header_bytes();
            out.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
            if (!out) fail(ErrorCode::Io, "cannot create " + file.string());
            continue;
        }
        auto scan = scan_log(file);
        if (scan.torn_tail) fs::resize_file(file, scan.valid_length);
        for (auto& r : scan.records) {
            next_seq_ = std::max(next_seq_, r.ingest_seq + 1);
            if (std::string_view(name) == "records.log") {
                index_record(std::move(r));
            } else {
                quarantine_keys_.insert({r.device_id, r.frame_counter});
                quarantine_.push_back(std::move(r));
            }
        }
    }
}

void RecordStore::index_record(SensorRecord r) {
    stored_keys_.insert({r.device_id, r.frame_counter});
    quarantine_keys_.erase({r.device_id, r.frame_counter});
    by_dataset_[r.field_id].push_back(records_.size());
    records_.push_back(std::move(r));
}

void RecordStore::append_block(const fs::path& file, const std::vector<SensorRecord>& records) {
    if (records.empty()) return;
    auto block = encode_block(records);
    std::ofstream out(file, std::ios::binary | std::ios::app);
    out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size()));
    out.flush();
    if (!out) fail(ErrorCode::Io, "append to " + file.string() + " failed");
}

void RecordStore::rewrite_log(const fs::path& file, const std::vector<SensorRecord>& records) {
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        auto hdr = header_bytes();
        out.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
        if (!records.empty()) {
            auto block = encode_block(records);
            out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size()));
        }
        if (!out) fail(ErrorCode::Io, "write " + tmp.string() + " failed");
    }
    fs::rename(tmp, file);
}

void RecordStore::save_registry() const {
    if (!dir_) return;
    json doc = json::array();
    for (const auto& [_, reg] : sensors_) doc.push_back(registration_to_json(reg));
    auto file = *dir_ / "sensors.json";
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << doc.dump(2) << '\n';
        if (!out) fail(ErrorCode::Io, "write " + tmp.string() + " failed");
    }
    fs::rename(tmp, file);
}

void RecordStore::register_sensor(const SensorRegistration& reg) {
    if (!(reg.lat >= -90.0 && reg.lat <= 90.0)) fail(ErrorCode::InvalidRegistration, "lat outside [-90, 90]");
    if (!(reg.lon >= -180.0 && reg.lon <= 180.0)) fail(ErrorCode::InvalidRegistration, "lon outside [-180, 180]");
    if (!std::isfinite(reg.elevation_m)) fail(ErrorCode::InvalidRegistration, "elevation_m must be finite");
    check_id(reg.field_id, "field_id", ErrorCode::InvalidRegistration);

    std::unique_lock lock(mutex_);
    auto it = sensors_.find(reg.device_id);
    if (it != sensors_.end()) {
        if (it->second == reg) return;
        fail(ErrorCode::DuplicateDevice, "device " + std::to_string(reg.device_id) + " already registered");
    }
    sensors_.emplace(reg.device_id, reg);
    save_registry();
}

std::optional<SensorRegistration> RecordStore::registration(std::uint64_t device_id) const {
    std::shared_lock lock(mutex_);
    auto it = sensors_.find(device_id);
    if (it == sensors_.end()) return std::nullopt;
    return it->second;
}

std::vector<SensorRegistration> RecordStore::registrations() const {
    std::shared_lock lock(mutex_);
    std::vector<SensorRegistration> out;
    for (const auto& [_, reg] : sensors_) out.push_back(reg);
    return out;
}

IngestResult RecordStore::ingest(const wire::IngestionBatch& batch) {
    if (batch.frames.empty()) fail(ErrorCode::MalformedBatch, "batch carries no frames");
    check_id(batch.gateway_id, "gateway_id", ErrorCode::MalformedBatch);

    std::unique_lock lock(mutex_);
    IngestResult result;
    std::vector<SensorRecord> stored;
    std::vector<SensorRecord> quarantined;
    std::set<RecordKey> seen;
    auto seq = next_seq_;

    for (const auto& af : batch.frames) {
        RecordKey key{af.frame.device_id, af.frame.frame_counter};
        if (stored_keys_.contains(key) || quarantine_keys_.contains(key) || !seen.insert(key).second) {
            ++result.duplicates;
            continue;
        }
        SensorRecord r;
        r.device_id = af.frame.device_id;
        r.frame_counter = af.frame.frame_counter;
        r.timestamp_s = static_cast<std::int64_t>(af.frame.timestamp_s);
        r.temperature_cdeg = af.frame.temperature_cdeg;
        r.gateway_id = batch.gateway_id;
        r.rssi_dbm = af.rssi_dbm;
        r.ingest_seq = seq++;
        if (auto it = sensors_.find(r.device_id); it != sensors_.end()) {
            r.lat = it->second.lat;
            r.lon = it->second.lon;
            r.elevation_m = it->second.elevation_m;
            r.field_id = it->second.field_id;
            stored.push_back(std::move(r));
            ++result.stored;
        } else {
            quarantined.push_back(std::move(r));
            ++result.quarantined;
        }
    }

    if (dir_) {
        append_block(*dir_ / "records.log", stored);
        append_block(*dir_ / "quarantine.log", quarantined);
    }
    next_seq_ = seq;
    for (auto& r : stored) index_record(std::move(r));
    for (auto& r : quarantined) {
        quarantine_keys_.insert({r.device_id, r.frame_counter});
        quarantine_.push_back(std::move(r));
    }
    return result;
}

bool RecordStore::has_dataset(const std::string& dataset_id) const {
    std::shared_lock lock(mutex_);
    return std::ranges::any_of(sensors_, [&](const auto& kv) { return kv.second.field_id == dataset_id; });
}

std::vector<SensorRecord> RecordStore::query_records(const std::string& dataset_id, Window window,
                                                     const std::optional<std::set<std::uint64_t>>& devices) const {
    if (window.from > window.to) fail(ErrorCode::InvalidWindow, "window start after end");
    if (!has_dataset(dataset_id)) fail(ErrorCode::UnknownDataset, "no dataset '" + dataset_id + "'");
    std::shared_lock lock(mutex_);
    std::vector<SensorRecord> out;
    if (auto it = by_dataset_.find(dataset_id); it != by_dataset_.end()) {
        for (auto idx : it->second) {
            const auto& r = records_[idx];
            if (r.timestamp_s < window.from || r.timestamp_s > window.to) continue;
            if (devices && !devices->contains(r.device_id)) continue;
            out.push_back(r);
        }
    }
    std::ranges::sort(out, record_order);
    return out;
}

DatasetDescriptor RecordStore::describe(const std::string& dataset_id) const {
    if (!has_dataset(dataset_id)) fail(ErrorCode::UnknownDataset, "no dataset '" + dataset_id + "'");
    std::shared_lock lock(mutex_);
    DatasetDescriptor d;
    d.dataset_id = dataset_id;
    d.field_id = dataset_id;
    d.description = "temperature readings of field " + dataset_id;
    if (auto it = by_dataset_.find(dataset_id); it != by_dataset_.end() && !it->second.empty()) {
        d.min_ts = records_[it->second.front()].timestamp_s;
        d.max_ts = d.min_ts;
        for (auto idx : it->second) {
            d.min_ts = std::min(d.min_ts, records_[idx].timestamp_s);
            d.max_ts = std::max(d.max_ts, records_[idx].timestamp_s);
        }
        d.record_count = it->second.size();
    }
    return d;
}

std::vector<DatasetDescriptor> RecordStore::list_datasets() const {
    std::set<std::string> ids;
    {
        std::shared_lock lock(mutex_);
        for (const auto& [_, reg] : sensors_) ids.insert(reg.field_id);
    }
    std::vector<DatasetDescriptor> out;
    for (const auto& id : ids) out.push_back(describe(id));
    return out;
}

ReconcileResult RecordStore::reconcile_quarantine() {
    std::unique_lock lock(mutex_);
    std::vector<SensorRecord> moved;
    std::vector<SensorRecord> remaining;
    for (const auto& q : quarantine_) {
        auto it = sensors_.find(q.device_id);
        if (it == sensors_.end()) {
            remaining.push_back(q);
            continue;
        }
        if (stored_keys_.contains({q.device_id, q.frame_counter})) continue;
        SensorRecord r = q;
        r.lat = it->second.lat;
        r.lon = it->second.lon;
        r.elevation_m = it->second.elevation_m;
        r.field_id = it->second.field_id;
        moved.push_back(std::move(r));
    }
    if (dir_) {
        append_block(*dir_ / "records.log", moved);
        rewrite_log(*dir_ / "quarantine.log", remaining);
    }
    ReconcileResult result{moved.size(), remaining.size()};
    for (auto& r : moved) index_record(std::move(r));
    quarantine_ = std::move(remaining);
    quarantine_keys_.clear();
    for (const auto& r : quarantine_) quarantine_keys_.insert({r.device_id, r.frame_counter});
    return result;
}

std::vector<SensorRecord> RecordStore::all_records() const {
    std::shared_lock lock(mutex_);
    return records_;
}

std::vector<SensorRecord> RecordStore::quarantined_records() const {
    std::shared_lock lock(mutex_);
    return quarantine_;
}

std::uint64_t RecordStore::record_count() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

// ---------------------------------------------------------------------------

IngestEndpoint::IngestEndpoint(RecordStore& store, KeyLookup keys, std::string provider_id,
                               std::function<std::string()> msg_ids)
    : store_(store), keys_(std::move(keys)), provider_id_(std::move(provider_id)), msg_ids_(std::move(msg_ids)) {}

IngestResult IngestEndpoint::ingest_envelope(const wire::Envelope& envelope) {
    if (envelope.msg_type != wire::MsgType::IngestBatch) fail(ErrorCode::MalformedBatch, "expected INGEST_BATCH");
    auto key = keys_(envelope.sender_id, "gateway");
    if (!key || !wire::verify_envelope(envelope, *key)) {
        fail(ErrorCode::BadSignature, "batch from '" + envelope.sender_id + "' failed verification");
    }
    auto batch = wire::batch_from_json(envelope.body);
    if (batch.gateway_id != envelope.sender_id) fail(ErrorCode::MalformedBatch, "gateway_id does not match sender");
    return store_.ingest(batch);
}

wire::Envelope IngestEndpoint::handle(const wire::Envelope& envelope) {
    wire::Envelope reply;
    reply.msg_id = msg_ids_();
    reply.sender_id = provider_id_;
    try {
        auto result = ingest_envelope(envelope);
        reply.msg_type = wire::MsgType::IngestBatch;
        reply.body = {{"stored", result.stored}, {"quarantined", result.quarantined}, {"duplicates", result.duplicates}};
    } catch (const Error& e) {
        reply.msg_type = wire::MsgType::Error;
        reply.body = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    }
    if (auto key = keys_(provider_id_, "provider")) reply = wire::sign_envelope(std::move(reply), *key);
    return reply;
}

}  // namespace orvicon::provider

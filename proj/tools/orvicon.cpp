#include "orvicon/config.hpp"
#include "orvicon/frost.hpp"
#include "orvicon/harness.hpp"
#include "orvicon/provider.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using namespace orvicon;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;

struct RunArgs {
    fs::path scenario;
    std::optional<std::uint64_t> seed;
    bool net = false;
    fs::path out;
    std::optional<fs::path> audit;
    std::optional<fs::path> store;
    unsigned threads = 1;
    std::optional<fs::path> snapshot_csv;
    bool map = false;
};

int cmd_run(const RunArgs& args) {
    auto cfg = harness::load_scenario(args.scenario);
    harness::RunOptions opt;
    opt.seed = args.seed;
    opt.net = args.net;
    opt.store_dir = args.store;
    opt.threads = args.threads;
    auto out = harness::run_scenario(cfg, opt);

    auto audit_path = args.audit.value_or(fs::path(args.out.string() + ".audit.jsonl"));
    harness::write_report(args.out, out.report);
    {
        std::ofstream sink(audit_path, std::ios::binary | std::ios::trunc);
        if (!sink) fail(ErrorCode::Io, "cannot write " + audit_path.string());
        for (const auto& r : out.audit) sink << wire::canonical_json(audit::record_to_json(r)) << '\n';
    }
    if (args.snapshot_csv && out.last_alert) {
        std::ofstream csv(*args.snapshot_csv);
        frost::write_snapshot_csv(csv, out.last_alert->snapshot);
    }

    const auto& rep = out.report;
    std::cout << "scenario   " << rep["scenario"].get<std::string>() << " (seed " << rep["seed"] << ", "
              << rep["mode"].get<std::string>() << ")\n"
              << "ingest     stored " << rep["ingest"]["stored"] << ", duplicates " << rep["ingest"]["duplicates"]
              << ", quarantined " << rep["ingest"]["quarantined"] << "\n"
              << "alerts     " << rep["alerts"].size() << " from " << rep["frost"]["analyses"] << " analyses\n"
              << "report     " << args.out.string() << "\n"
              << "audit      " << audit_path.string() << " (" << rep["audit"]["records"] << " records)\n"
              << "digest     " << rep["digest"].get<std::string>() << "\n";
    if (args.map && out.last_alert) {
        std::cout << "\nlast alert at t=" << out.last_alert->at << "\n"
                  << frost::render_zone_map(out.last_alert->snapshot, out.last_alert->zones);
    }
    return rep["audit"]["chain_ok"].get<bool>() ? kExitOk : kExitVerify;
}

int cmd_verify(const fs::path& report, const fs::path& audit_log) {
    auto result = harness::verify_files(report, audit_log);
    if (result.ok()) {
        std::cout << "ok\n";
        return kExitOk;
    }
    for (const auto& d : result.diagnostics) std::cout << d << "\n";
    return kExitVerify;
}

int cmd_inspect(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(ErrorCode::Io, dir.string() + " is not a directory");
    provider::RecordStore store(dir);
    auto sensors = store.registrations();
    std::cout << "sensors      " << sensors.size() << "\n";
    for (const auto& s : sensors) {
        std::cout << "  " << s.device_id << "  " << s.field_id << "  " << s.label << "  (" << s.lat << ", " << s.lon
                  << ", " << s.elevation_m << " m)\n";
    }
    std::cout << "records      " << store.record_count() << "\n"
              << "quarantined  " << store.quarantined_records().size() << "\n";
    for (const auto& d : store.list_datasets()) {
        std::cout << "  dataset " << d.dataset_id << ": " << d.record_count << " records, ts " << d.min_ts << ".."
                  << d.max_ts << "\n";
    }
    return kExitOk;
}

int cmd_list_datasets(const fs::path& dir) {
    provider::RecordStore store(dir);
    wire::json out = wire::json::array();
    for (const auto& d : store.list_datasets()) {
        out.push_back({{"dataset_id", d.dataset_id},
                       {"field_id", d.field_id},
                       {"description", d.description},
                       {"record_count", d.record_count},
                       {"min_ts", d.min_ts},
                       {"max_ts", d.max_ts}});
    }
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_reconcile(const fs::path& dir) {
    provider::RecordStore store(dir);
    auto r = store.reconcile_quarantine();
    std::cout << "moved " << r.moved << ", remaining " << r.remaining << "\n";
    return kExitOk;
}

int cmd_register(const fs::path& dir, const provider::SensorRegistration& reg) {
    fs::create_directories(dir);
    provider::RecordStore store(dir);
    store.register_sensor(reg);
    std::cout << "registered " << reg.device_id << " in " << reg.field_id << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"orvicon: orchard frost monitoring data space"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "run a scenario and write the report and audit log");
    run_cmd->add_option("--scenario", run.scenario, "scenario file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", run.seed, "override the scenario seed");
    run_cmd->add_flag("--net", run.net, "run services behind loopback sockets");
    run_cmd->add_option("--out", run.out, "report file")->required();
    run_cmd->add_option("--audit", run.audit, "audit log file (default <out>.audit.jsonl)");
    run_cmd->add_option("--store", run.store, "persist the provider store in this directory");
    run_cmd->add_option("--threads", run.threads, "frost snapshot workers")->check(CLI::Range(1u, 256u));
    run_cmd->add_option("--snapshot-csv", run.snapshot_csv, "write the last alert snapshot as CSV");
    run_cmd->add_flag("--map", run.map, "print the last alert's zone map");

    fs::path report, audit_log;
    auto* verify_cmd = app.add_subcommand("verify", "check a report and its audit log");
    verify_cmd->add_option("--report", report, "report file")->required();
    verify_cmd->add_option("--audit", audit_log, "audit log file")->required();

    fs::path scenario;
    auto* validate_cmd = app.add_subcommand("validate", "parse and validate a scenario file");
    validate_cmd->add_option("scenario", scenario, "scenario file")->required();

    fs::path store_dir;
    auto* inspect_cmd = app.add_subcommand("inspect-store", "summarize a provider store directory");
    inspect_cmd->add_option("dir", store_dir, "store directory")->required();

    auto* list_cmd = app.add_subcommand("list-datasets", "list the datasets of a provider store");
    list_cmd->add_option("--store", store_dir, "store directory")->required();

    auto* reconcile_cmd = app.add_subcommand("reconcile-quarantine", "move records of newly registered sensors out of quarantine");
    reconcile_cmd->add_option("--store", store_dir, "store directory")->required();

    provider::SensorRegistration reg;
    auto* register_cmd = app.add_subcommand("register-sensor", "register a sensor with a provider store");
    register_cmd->add_option("--store", store_dir, "store directory")->required();
    register_cmd->add_option("--device-id", reg.device_id)->required();
    register_cmd->add_option("--lat", reg.lat)->required();
    register_cmd->add_option("--lon", reg.lon)->required();
    register_cmd->add_option("--elevation", reg.elevation_m)->required();
    register_cmd->add_option("--field", reg.field_id)->required();
    register_cmd->add_option("--label", reg.label);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*verify_cmd) return cmd_verify(report, audit_log);
        if (*validate_cmd) {
            auto cfg = harness::load_scenario(scenario);
            std::cout << "ok: " << cfg.name << "\n";
            return kExitOk;
        }
        if (*inspect_cmd) return cmd_inspect(store_dir);
        if (*list_cmd) return cmd_list_datasets(store_dir);
        if (*reconcile_cmd) return cmd_reconcile(store_dir);
        if (*register_cmd) return cmd_register(store_dir, reg);
    } catch (const harness::ConfigError& e) {
        for (const auto& d : e.diagnostics()) std::cerr << "config: " << d << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        if (e.code() == ErrorCode::InvalidRegistration || e.code() == ErrorCode::DuplicateDevice) return kExitConfig;
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

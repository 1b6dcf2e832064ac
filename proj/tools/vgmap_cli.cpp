// vgmap: command-line front end for the valley-phase mapping pipeline.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vgmap/vgmap.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

struct Loaded {
    std::string text;
    std::string digest;
};

vgmap::RunConfig load_config(const Globals& g)
{
    return vgmap::run_stage("config", [&] {
        vgmap::RunConfig c;
        if (!g.config_path.empty()) {
            c = vgmap::parse_run_config(vgmap::read_file(g.config_path));
        }
        if (g.seed) {
            c.seed = *g.seed;
        }
        c.validate();
        return c;
    });
}

fs::path output_dir(const Globals& g)
{
    if (!g.out_dir.empty()) {
        return g.out_dir;
    }
    if (const char* env = std::getenv("VGMAP_OUT_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "vgmap_out";
}

Loaded load(const std::string& path, std::map<std::string, std::string>& digests)
{
    auto text = vgmap::run_stage("load", [&] { return vgmap::read_file(path); });
    auto digest = vgmap::sha256_hex(text);
    digests[path] = digest;
    return {std::move(text), std::move(digest)};
}

vgmap::io::CsvTable load_table(const std::string& path, std::map<std::string, std::string>& digests)
{
    const auto f = load(path, digests);
    return vgmap::run_stage("load", [&] { return vgmap::io::parse_csv(f.text); });
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

void finish(const Globals& g, const vgmap::RunConfig& cfg, std::vector<vgmap::OutputFile> files,
            const std::map<std::string, std::string>& inputs)
{
    files.push_back({"config", "config.json", "config", vgmap::serialize(cfg)});
    const auto dir = output_dir(g);
    vgmap::run_stage("write", [&] { return vgmap::write_outputs(dir, files, vgmap::config_digest(cfg), inputs); });
}

std::vector<vgmap::SiteKey> parse_overrides(const std::vector<std::string>& specs)
{
    std::vector<vgmap::SiteKey> out;
    for (const auto& s : specs) {
        const auto comma = s.find(',');
        vgmap::require(comma != std::string::npos, "override '" + s + "' must be of the form D,Y");
        try {
            std::size_t used_d = 0, used_y = 0;
            const std::string ds = s.substr(0, comma), ys = s.substr(comma + 1);
            const double d = std::stod(ds, &used_d);
            const double y = std::stod(ys, &used_y);
            vgmap::require(used_d == ds.size() && used_y == ys.size(), "override '" + s + "' is not numeric");
            out.push_back({d, y});
        } catch (const std::logic_error&) {
            throw vgmap::ValidationError("override '" + s + "' is not numeric");
        }
    }
    return out;
}

int cmd_simulate(const Globals& g)
{
    const auto cfg = load_config(g);
    const auto field = vgmap::run_stage("simulate", [&] { return vgmap::generate_field(cfg.field_params()); });
    const auto summary = vgmap::summarize_field(field);
    finish(g, cfg, {{"simulate", "field.csv", "field", vgmap::io::field_csv(field)}}, {});
    json j = {{"nodes", field.values().size()},
              {"mean_evs_ueV", summary.mean_evs},
              {"expected_mean_evs_ueV", summary.expected_mean_evs},
              {"corr_length_nm", field.params().corr_length}};
    if (std::isfinite(summary.corr_length_estimate)) {
        j["corr_length_estimate_nm"] = summary.corr_length_estimate;
        j["corr_length_relative_error"] =
            std::abs(summary.corr_length_estimate - field.params().corr_length) / field.params().corr_length;
    } else {
        j["corr_length_estimate_nm"] = nullptr;
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_synthesize(const Globals& g, const std::string& field_path)
{
    const auto cfg = load_config(g);
    std::map<std::string, std::string> inputs;
    const auto field = [&] {
        if (field_path.empty()) {
            return vgmap::run_stage("simulate", [&] { return vgmap::generate_field(cfg.field_params()); });
        }
        const auto table = load_table(field_path, inputs);
        return vgmap::run_stage("load", [&] { return vgmap::io::parse_field(table, cfg.field_params()); });
    }();
    const auto lines = vgmap::run_stage("synthesize", [&] { return vgmap::synthesize_scan(field, cfg); });
    std::vector<vgmap::PsRaster> rasters;
    for (const auto& l : lines) {
        rasters.push_back(l.raster);
    }
    finish(g, cfg,
           {{"synthesize", "raster.csv", "raster", vgmap::io::raster_csv(rasters)},
            {"synthesize", "evs.csv", "evs", vgmap::io::evs_csv(vgmap::evs_samples(lines))}},
           inputs);
    std::cout << json_text({{"scanlines", lines.size()},
                            {"d_points", cfg.scan.d_points},
                            {"tau_points", rasters.empty() ? 0 : rasters.front().cols()}});
    return 0;
}

int cmd_extract(const Globals& g, const std::string& raster_path, const std::vector<std::string>& override_specs)
{
    const auto cfg = load_config(g);
    vgmap::require(cfg.extraction.mode == vgmap::ExtractionMode::Fft,
                   "extract: mode 'exact' needs the forward model and is only available in roundtrip");
    std::map<std::string, std::string> inputs;
    const auto table = load_table(raster_path, inputs);
    const auto rasters = vgmap::run_stage("load", [&] { return vgmap::io::parse_raster(table); });
    const auto overrides = vgmap::run_stage("extract", [&] { return parse_overrides(override_specs); });
    const auto peaks = vgmap::run_stage("extract", [&] { return vgmap::extract_scan(rasters, cfg); });
    const auto map = vgmap::run_stage("extract", [&] { return vgmap::assemble_map(peaks, overrides); });
    std::vector<vgmap::OutputFile> files{{"extract", "peaks.csv", "peaks", vgmap::io::peaks_csv(peaks)},
                                         {"extract", "gmap.csv", "gmap", vgmap::io::gmap_csv(map)}};
    const std::vector<std::pair<const char*, vgmap::MapQuantity>> grids{{"dg1", vgmap::MapQuantity::Dg1},
                                                                        {"dg2", vgmap::MapQuantity::Dg2},
                                                                        {"dg_mean", vgmap::MapQuantity::DgMean},
                                                                        {"abs_dgs", vgmap::MapQuantity::AbsDgs}};
    for (const auto& [name, q] : grids) {
        const auto grid = vgmap::run_stage("extract", [&] {
            return vgmap::grid_map(map, q, cfg.extraction.grid_d_step, cfg.extraction.grid_y_step);
        });
        files.push_back({"extract", std::string("grid_") + name + ".csv", "gridded", vgmap::io::gridded_csv(grid)});
    }
    finish(g, cfg, std::move(files), inputs);
    std::size_t two = 0;
    for (const auto& p : peaks) {
        two += p.peaks.size() == 2 ? 1 : 0;
    }
    std::cout << json_text({{"sites", peaks.size()}, {"two_peak_sites", two}, {"overrides", overrides.size()}});
    return 0;
}

int cmd_reconstruct(const Globals& g, const std::string& gmap_path, const std::string& evs_path)
{
    const auto cfg = load_config(g);
    std::map<std::string, std::string> inputs;
    const auto gt = load_table(gmap_path, inputs);
    const auto et = load_table(evs_path, inputs);
    const auto map = vgmap::run_stage("load", [&] { return vgmap::io::parse_gmap(gt); });
    const auto evs = vgmap::run_stage("load", [&] { return vgmap::io::parse_evs(et); });
    const auto traces =
        vgmap::run_stage("reconstruct", [&] { return vgmap::reconstruct_map(map, evs, cfg.reconstruction); });
    const auto summary = vgmap::reconstruct_summary(traces);
    finish(g, cfg,
           {{"reconstruct", "traces.csv", "trace", vgmap::io::traces_csv(traces)},
            {"reconstruct", "reconstruct_summary.json", "reconstruct_summary", json_text(summary)}},
           inputs);
    std::cout << json_text(summary);
    return 0;
}

int cmd_stats(const Globals& g, const std::string& gmap_path, const std::string& evs_path)
{
    const auto cfg = load_config(g);
    std::map<std::string, std::string> inputs;
    const auto gt = load_table(gmap_path, inputs);
    const auto map = vgmap::run_stage("load", [&] { return vgmap::io::parse_gmap(gt); });
    std::optional<std::vector<vgmap::io::EvsSample>> evs;
    if (!evs_path.empty()) {
        const auto et = load_table(evs_path, inputs);
        evs = vgmap::run_stage("load", [&] { return vgmap::io::parse_evs(et); });
    }
    const auto stats = vgmap::run_stage("stats", [&] { return vgmap::map_statistics(map, evs ? &*evs : nullptr, nullptr); });
    finish(g, cfg, {{"stats", "stats.json", "stats", json_text(stats)}}, inputs);
    std::cout << json_text(stats);
    return 0;
}

int cmd_roundtrip(const Globals& g)
{
    const auto cfg = load_config(g);
    const auto r = vgmap::roundtrip(cfg);
    std::vector<vgmap::PsRaster> rasters;
    for (const auto& l : r.lines) {
        rasters.push_back(l.raster);
    }
    finish(g, cfg,
           {{"simulate", "field.csv", "field", vgmap::io::field_csv(r.field)},
            {"synthesize", "raster.csv", "raster", vgmap::io::raster_csv(rasters)},
            {"synthesize", "evs.csv", "evs", vgmap::io::evs_csv(vgmap::evs_samples(r.lines))},
            {"extract", "peaks.csv", "peaks", vgmap::io::peaks_csv(r.peaks)},
            {"extract", "gmap.csv", "gmap", vgmap::io::gmap_csv(r.map)},
            {"reconstruct", "traces.csv", "trace", vgmap::io::traces_csv(r.traces)},
            {"compare", "report.json", "roundtrip_report", json_text(r.report)}},
           {});
    std::cout << json_text({{"phase_rms_rad", r.report["phase_rms_rad"]},
                            {"magnitude_max_error_ueV", r.report["magnitude_max_error_ueV"]},
                            {"pearson_r", r.report["pearson_r"]},
                            {"checks", r.report["checks"]},
                            {"passed", r.passed}});
    return r.passed ? 0 : static_cast<int>(vgmap::ExitCode::ThresholdFailure);
}

int cmd_ingest(const Globals& g, const std::string& schema_name, const std::vector<std::string>& paths)
{
    const auto cfg = load_config(g);
    const auto schema = vgmap::run_stage("ingest", [&] { return vgmap::parse_schema(schema_name); });
    std::map<std::string, std::string> inputs;
    std::vector<vgmap::OutputFile> files;
    json accepted = json::array();
    for (const auto& p : paths) {
        const auto f = load(p, inputs);
        const auto canonical = vgmap::run_stage("ingest", [&] {
            try {
                return vgmap::ingest_text(f.text, schema);
            } catch (const vgmap::ValidationError& e) {
                throw vgmap::ValidationError(p + ": " + e.what());
            }
        });
        const auto name = fs::path(p).stem().string() + ".csv";
        vgmap::require(std::none_of(files.begin(), files.end(), [&](const auto& o) { return o.path == name; }),
                       "ingest: two inputs map onto the output name " + name);
        files.push_back({"ingest", name, schema_name, canonical});
        accepted.push_back({{"input", p}, {"output", name}, {"unchanged", canonical == f.text}});
    }
    finish(g, cfg, std::move(files), inputs);
    std::cout << json_text({{"schema", schema_name}, {"files", accepted}});
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Valley-phase mapping from shuttled singlet-triplet g-factor measurements"};
    app.set_version_flag("--version", std::string(vgmap::io::kToolVersion));
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    app.add_option("--seed", g.seed, "Override the configuration seed");
    app.add_option("--out-dir", g.out_dir, "Output directory (default: $VGMAP_OUT_DIR, else ./vgmap_out)");

    bool print_config = false;
    auto* config_cmd = app.add_subcommand("config", "Print the effective configuration");
    config_cmd->add_flag("--digest", print_config, "Print only the configuration digest");

    auto* simulate = app.add_subcommand("simulate", "Generate a disorder field");

    std::string field_path;
    auto* synthesize = app.add_subcommand("synthesize", "Synthesize the P_S raster of every scanline");
    synthesize->add_option("--field", field_path, "Field CSV (default: generate from the configuration)");

    std::string raster_path;
    std::vector<std::string> overrides;
    auto* extract = app.add_subcommand("extract", "Spectral peak extraction and g-factor map assembly");
    extract->add_option("--raster", raster_path, "Raster CSV")->required();
    extract->add_option("--override", overrides, "Swap the dominant peak at site D,Y (repeatable)");

    std::string gmap_path, evs_path;
    auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct complex valley-coupling traces");
    reconstruct->add_option("--gmap", gmap_path, "g-factor map CSV")->required();
    reconstruct->add_option("--evs", evs_path, "Valley-splitting CSV")->required();

    std::string stats_gmap, stats_evs;
    auto* stats = app.add_subcommand("stats", "Map statistics and distribution fits");
    stats->add_option("--gmap", stats_gmap, "g-factor map CSV")->required();
    stats->add_option("--evs", stats_evs, "Valley-splitting CSV");

    auto* roundtrip = app.add_subcommand("roundtrip", "Full synthetic pipeline with ground-truth comparison");

    std::string schema;
    std::vector<std::string> ingest_paths;
    auto* ingest = app.add_subcommand("ingest", "Validate measurement files and write canonical copies");
    ingest->add_option("--schema", schema, "raster, peaks or evs")->required();
    ingest->add_option("files", ingest_paths, "Input CSV files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(vgmap::ExitCode::Usage);
    }

    try {
        if (*config_cmd) {
            const auto cfg = load_config(g);
            std::cout << (print_config ? vgmap::config_digest(cfg) + "\n" : vgmap::serialize(cfg));
            return 0;
        }
        if (*simulate) {
            return cmd_simulate(g);
        }
        if (*synthesize) {
            return cmd_synthesize(g, field_path);
        }
        if (*extract) {
            return cmd_extract(g, raster_path, overrides);
        }
        if (*reconstruct) {
            return cmd_reconstruct(g, gmap_path, evs_path);
        }
        if (*stats) {
            return cmd_stats(g, stats_gmap, stats_evs);
        }
        if (*roundtrip) {
            return cmd_roundtrip(g);
        }
        if (*ingest) {
            return cmd_ingest(g, schema, ingest_paths);
        }
    } catch (const vgmap::StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const vgmap::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(vgmap::ExitCode::Validation);
    } catch (const vgmap::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(vgmap::ExitCode::Numerical);
    } catch (const vgmap::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(vgmap::ExitCode::Io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(vgmap::ExitCode::Usage);
    }
    return static_cast<int>(vgmap::ExitCode::Usage);
}

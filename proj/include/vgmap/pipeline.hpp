#pragma once

// Stage composition shared by the CLI and the acceptance suite: field ->
// raster -> peaks -> g-factor map -> reconstructed traces, plus comparison
// against the injected ground truth.

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vgmap/config.hpp"
#include "vgmap/errors.hpp"
#include "vgmap/extraction.hpp"
#include "vgmap/field.hpp"
#include "vgmap/io.hpp"
#include "vgmap/reconstruction.hpp"
#include "vgmap/signal.hpp"
#include "vgmap/stats.hpp"

namespace vgmap {

/// Runs `fn`, rethrowing library errors as StageError tagged with `stage`.
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const ValidationError& e) {
        throw StageError(stage, e.what(), ExitCode::Validation);
    } catch (const IoError& e) {
        throw StageError(stage, e.what(), ExitCode::Io);
    } catch (const NumericalError& e) {
        throw StageError(stage, e.what(), ExitCode::Numerical);
    } catch (const nlohmann::json::exception& e) {
        throw StageError(stage, e.what(), ExitCode::Validation);
    }
}

inline std::uint64_t scanline_seed(std::uint64_t seed, int k)
{
    return derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(k));
}

struct ScanlineData {
    double y = 0.0;
    std::vector<TracePoint> trace;
    std::vector<ColumnTruth> truth;
    PsRaster raster;
};

inline std::vector<TracePoint> scanline_trace(const ValleyField& field, const RunConfig& cfg, int k)
{
    const auto& s = cfg.scan;
    return sample_trace(field, s.y_of(k), s.d_start, s.d_start + (s.d_points - 1) * s.d_step, s.d_step);
}

/// Samples every scanline from `field` and synthesizes its raster.
inline std::vector<ScanlineData> synthesize_scan(const ValleyField& field, const RunConfig& cfg)
{
    const auto plan = cfg.measurement_plan();
    std::vector<ScanlineData> out;
    for (int k = 0; k < cfg.scan.n_scanlines; ++k) {
        ScanlineData line;
        line.y = cfg.scan.y_of(k);
        line.trace = scanline_trace(field, cfg, k);
        const auto seed = scanline_seed(cfg.seed, k);
        line.truth = column_truth(line.trace, cfg.scenario, plan, seed);
        line.raster = synthesize_raster(line.trace, cfg.scenario, plan, seed, line.y);
        out.push_back(std::move(line));
    }
    return out;
}

inline std::vector<io::EvsSample> evs_samples(const std::vector<ScanlineData>& lines)
{
    std::vector<io::EvsSample> out;
    for (const auto& l : lines) {
        for (const auto& p : l.trace) {
            out.push_back({p.d, l.y, evs_from_delta(p.delta)});
        }
    }
    return out;
}

/// Forward-model components as peaks, ordered by weight.
inline std::vector<PeakSet> exact_peaks(const ScanlineData& line)
{
    std::vector<PeakSet> out;
    for (const auto& t : line.truth) {
        PeakSet p;
        p.d = t.d;
        p.y = line.y;
        for (const auto& c : t.components) {
            p.peaks.push_back({c.delta_g, c.weight, false});
        }
        std::stable_sort(p.peaks.begin(), p.peaks.end(),
                         [](const Peak& a, const Peak& b) { return a.amplitude > b.amplitude; });
        p.peaks[0].dominant = true;
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<PeakSet> extract_scan(const std::vector<PsRaster>& rasters, const RunConfig& cfg)
{
    std::vector<PeakSet> all;
    for (const auto& r : rasters) {
        auto sets = extract_raster(r, cfg.plan.B, cfg.extraction.spectrum, cfg.extraction.peaks,
                                   cfg.extraction.refine);
        if (cfg.extraction.track_dominant) {
            track_dominant(sets);
        }
        all.insert(all.end(), sets.begin(), sets.end());
    }
    return all;
}

using ScanTraces = std::vector<std::pair<double, ReconstructedTrace>>;

inline ScanTraces reconstruct_map(const GFactorMap& map, const std::vector<io::EvsSample>& evs,
                                  const ReconstructionOptions& options)
{
    ScanTraces out;
    for (double y : map.scanline_ys()) {
        const auto line = map.scanline(y);
        const auto [ed, ev] = io::evs_line(evs, y);
        require(!ed.empty(), "reconstruct: no E_VS samples for scanline y = " + io::format_number(y));
        out.emplace_back(y, reconstruct_scanline(line, ed, ev, options));
    }
    return out;
}

/// Total branch cost, quadrant occupancy and near-origin (low-confidence)
/// counts, overall and per scanline.
inline nlohmann::json reconstruct_summary(const ScanTraces& traces)
{
    nlohmann::json lines = nlohmann::json::array();
    double total = 0.0;
    std::array<std::size_t, 4> quadrants{};
    std::size_t near_origin = 0, clamped = 0, points = 0;
    for (const auto& [y, tr] : traces) {
        const auto q = quadrant_occupancy(tr);
        std::size_t low = 0, cl = 0;
        for (const auto& p : tr.points) {
            low += p.low_confidence ? 1 : 0;
            cl += p.clamped ? 1 : 0;
        }
        lines.push_back({{"y_nm", y},
                         {"cost", tr.cost},
                         {"scale", tr.scale},
                         {"points", tr.points.size()},
                         {"quadrant_occupancy", q},
                         {"near_origin_points", low},
                         {"clamped_points", cl}});
        total += tr.cost;
        for (std::size_t k = 0; k < 4; ++k) {
            quadrants[k] += q[k];
        }
        near_origin += low;
        clamped += cl;
        points += tr.points.size();
    }
    return {{"total_cost", total},
            {"points", points},
            {"quadrant_occupancy", quadrants},
            {"near_origin_points", near_origin},
            {"clamped_points", clamped},
            {"scanlines", lines}};
}

struct PhaseComparison {
    double rms = 0.0;
    std::size_t scored = 0;
    std::vector<double> per_scanline;
    std::vector<bool> conjugated;  // per scanline, true when -phi matched better
    double magnitude_max_error = 0.0;
};

/// Phase error wrapped to (-pi, pi] over points with E_VS > evs_cut (and not
/// low confidence), taking the better of phi and -phi for each scanline.
/// The magnitude error covers every reconstructed point.
inline PhaseComparison compare_phases(const ScanTraces& traces, const std::vector<ScanlineData>& lines,
                                      double evs_cut)
{
    PhaseComparison out;
    double total_ss = 0.0;
    for (const auto& [y, tr] : traces) {
        const auto line = std::find_if(lines.begin(), lines.end(),
                                       [y = y](const ScanlineData& l) { return std::abs(l.y - y) <= 1e-6; });
        require(line != lines.end(), "compare: no ground truth for scanline");
        double ss_direct = 0.0, ss_conj = 0.0;
        std::size_t n = 0;
        for (const auto& p : tr.points) {
            const auto it = std::find_if(line->trace.begin(), line->trace.end(),
                                         [&](const TracePoint& t) { return std::abs(t.d - p.d) <= 1e-6; });
            require(it != line->trace.end(), "compare: reconstructed point has no ground truth");
            const double evs = evs_from_delta(it->delta);
            out.magnitude_max_error =
                std::max(out.magnitude_max_error, std::abs(p.delta.magnitude() - 0.5 * evs));
            if (!(evs > evs_cut) || p.low_confidence) {
                continue;
            }
            const double truth = it->delta.phase();
            const double a = wrap_phase(p.phi - truth);
            const double b = wrap_phase(-p.phi - truth);
            ss_direct += a * a;
            ss_conj += b * b;
            ++n;
        }
        const bool conj = ss_conj < ss_direct;
        const double ss = conj ? ss_conj : ss_direct;
        out.per_scanline.push_back(n > 0 ? std::sqrt(ss / static_cast<double>(n)) : 0.0);
        out.conjugated.push_back(conj);
        total_ss += ss;
        out.scored += n;
    }
    out.rms = out.scored > 0 ? std::sqrt(total_ss / static_cast<double>(out.scored)) : 0.0;
    return out;
}

inline nlohmann::json fit_json(const stats::DistributionFit& f)
{
    nlohmann::json j = {{"distribution", stats::to_string(f.kind)},
                        {"n", f.n},
                        {"ks_statistic", f.ks_statistic},
                        {"ks_pvalue", f.ks_pvalue},
                        {"pvalue_approximate", f.pvalue_approximate}};
    for (const auto& [k, v] : f.params) {
        j["params"][k] = v;
    }
    if (!f.note.empty()) {
        j["note"] = f.note;
    }
    return j;
}

inline nlohmann::json boxplot_json(const stats::BoxplotSummary& b)
{
    return {{"q1", b.q1},
            {"median", b.median},
            {"q3", b.q3},
            {"mean", b.mean},
            {"whisker_low", b.whisker_low},
            {"whisker_high", b.whisker_high},
            {"n_outliers", b.outliers.size()}};
}

/// Map-level statistics: pair correlation, mean-g spread per scanline and
/// distribution fits where enough samples exist.
inline nlohmann::json map_statistics(const GFactorMap& map, const std::vector<io::EvsSample>* evs,
                                     const ScanTraces* traces)
{
    nlohmann::json j = nlohmann::json::object();
    const auto pairs = pair_scatter(map);
    j["n_sites"] = map.records.size();
    j["n_pairs"] = pairs.size();
    if (pairs.size() >= 3) {
        try {
            j["pearson_r"] = stats::pearson(pairs);
        } catch (const ValidationError&) {
            j["pearson_r"] = nullptr;
        }
    }
    std::vector<double> means;
    nlohmann::json lines = nlohmann::json::array();
    for (double y : map.scanline_ys()) {
        std::vector<double> m;
        for (const auto& r : map.scanline(y)) {
            if (r.dg_mean && !r.mean_extrapolated) {
                m.push_back(*r.dg_mean);
            }
        }
        nlohmann::json l = {{"y_nm", y}, {"n_pairs", m.size()}};
        if (m.size() >= 2) {
            l["dg_mean_std"] = stats::stddev(m);
            l["dg_mean_boxplot"] = boxplot_json(stats::boxplot_summary(m));
        }
        lines.push_back(l);
        means.insert(means.end(), m.begin(), m.end());
    }
    j["scanlines"] = lines;
    if (means.size() >= 2) {
        j["dg_mean_boxplot"] = boxplot_json(stats::boxplot_summary(means));
    }
    if (evs != nullptr) {
        std::vector<double> e;
        for (const auto& s : *evs) {
            e.push_back(s.evs);
        }
        if (e.size() >= stats::kMinFitSamples) {
            j["evs_rayleigh"] = fit_json(stats::fit_distribution(e, stats::DistributionKind::Rayleigh));
            j["evs_rician"] = fit_json(stats::fit_distribution(e, stats::DistributionKind::Rician));
        }
    }
    if (traces != nullptr) {
        std::vector<double> c;
        for (const auto& [y, tr] : *traces) {
            for (const auto& p : tr.points) {
                c.push_back(std::cos(p.phi_raw));
            }
        }
        if (c.size() >= stats::kMinFitSamples) {
            j["c_arcsine"] = fit_json(stats::fit_distribution(c, stats::DistributionKind::Arcsine));
        }
    }
    return j;
}

struct RoundtripResult {
    ValleyField field;
    std::vector<ScanlineData> lines;
    std::vector<PeakSet> peaks;
    GFactorMap map;
    ScanTraces traces;
    PhaseComparison phases;
    std::optional<double> pearson_r;
    nlohmann::json report;
    bool passed = false;
};

inline RoundtripResult roundtrip(const RunConfig& cfg)
{
    cfg.validate();
    auto field = run_stage("simulate", [&] { return generate_field(cfg.field_params()); });
    RoundtripResult r{std::move(field), {}, {}, {}, {}, {}, {}, {}, false};
    r.lines = run_stage("synthesize", [&] { return synthesize_scan(r.field, cfg); });
    r.peaks = run_stage("extract", [&] {
        std::vector<PeakSet> all;
        if (cfg.extraction.mode == ExtractionMode::Exact) {
            for (const auto& l : r.lines) {
                const auto p = exact_peaks(l);
                all.insert(all.end(), p.begin(), p.end());
            }
        } else {
            std::vector<PsRaster> rasters;
            for (const auto& l : r.lines) {
                rasters.push_back(l.raster);
            }
            all = extract_scan(rasters, cfg);
        }
        return all;
    });
    r.map = run_stage("extract", [&] { return assemble_map(r.peaks, {}); });
    const auto evs = evs_samples(r.lines);
    r.traces = run_stage("reconstruct", [&] { return reconstruct_map(r.map, evs, cfg.reconstruction); });
    const double cut = cfg.thresholds.evs_cut_sigma * cfg.field.sigma;
    r.phases = run_stage("compare", [&] { return compare_phases(r.traces, r.lines, cut); });

    const auto pairs = pair_scatter(r.map);
    if (pairs.size() >= 3) {
        try {
            r.pearson_r = stats::pearson(pairs);
        } catch (const ValidationError&) {
        }
    }
    const bool phase_ok = r.phases.scored > 0 && r.phases.rms < cfg.thresholds.phase_rms;
    const bool magnitude_ok = r.phases.magnitude_max_error <= cfg.thresholds.magnitude_error;
    const bool pearson_ok = r.pearson_r && *r.pearson_r <= cfg.thresholds.pearson_max;
    r.passed = phase_ok && magnitude_ok && pearson_ok;

    nlohmann::json rep;
    rep["tool_version"] = io::kToolVersion;
    rep["config_digest"] = config_digest(cfg);
    rep["phase_rms_rad"] = r.phases.rms;
    rep["phase_points_scored"] = r.phases.scored;
    rep["phase_rms_per_scanline"] = r.phases.per_scanline;
    rep["conjugated_scanlines"] = r.phases.conjugated;
    rep["magnitude_max_error_ueV"] = r.phases.magnitude_max_error;
    rep["pearson_r"] = r.pearson_r ? nlohmann::json(*r.pearson_r) : nlohmann::json(nullptr);
    rep["n_pairs"] = pairs.size();
    rep["statistics"] = map_statistics(r.map, &evs, &r.traces);
    rep["reconstruction"] = reconstruct_summary(r.traces);
    rep["checks"] = {{"phase_rms", phase_ok}, {"magnitude", magnitude_ok}, {"pearson", pearson_ok}};
    rep["passed"] = r.passed;
    r.report = std::move(rep);
    return r;
}

struct OutputFile {
    std::string stage;
    std::filesystem::path path;
    std::string schema;
    std::string text;
};

/// Writes every file with its sidecar and returns the manifest JSON.
inline nlohmann::json write_outputs(const std::filesystem::path& dir, const std::vector<OutputFile>& files,
                                    const std::string& config_digest,
                                    const std::map<std::string, std::string>& input_digests)
{
    nlohmann::json manifest;
    manifest["tool_version"] = io::kToolVersion;
    manifest["config_digest"] = config_digest;
    manifest["inputs"] = nlohmann::json::object();
    for (const auto& [name, digest] : input_digests) {
        manifest["inputs"][name] = digest;
    }
    manifest["outputs"] = nlohmann::json::array();
    for (const auto& f : files) {
        io::write_with_sidecar(dir / f.path, f.text, f.schema, config_digest);
        manifest["outputs"].push_back({{"stage", f.stage},
                                       {"path", f.path.generic_string()},
                                       {"schema", f.schema},
                                       {"sha256", sha256_hex(f.text)}});
    }
    io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

enum class IngestSchema { Raster, Peaks, Evs };

inline IngestSchema parse_schema(const std::string& s)
{
    if (s == "raster") {
        return IngestSchema::Raster;
    }
    if (s == "peaks") {
        return IngestSchema::Peaks;
    }
    if (s == "evs") {
        return IngestSchema::Evs;
    }
    throw ValidationError("ingest: unknown schema '" + s + "' (expected raster, peaks or evs)");
}

/// Validates `text` against a schema and returns the canonical rewrite.
inline std::string ingest_text(const std::string& text, IngestSchema schema)
{
    const auto table = io::parse_csv(text);
    switch (schema) {
    case IngestSchema::Raster: {
        const auto rasters = io::parse_raster(table);
        for (const auto& r : rasters) {
            uniform_spacing(r.tau_ns);
        }
        return io::raster_csv(rasters);
    }
    case IngestSchema::Peaks: return io::peaks_csv(io::parse_peaks(table));
    case IngestSchema::Evs: return io::evs_csv(io::parse_evs(table));
    }
    throw ValidationError("ingest: unknown schema");
}

} // namespace vgmap

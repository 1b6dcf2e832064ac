#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "vgmap/digest.hpp"
#include "vgmap/errors.hpp"
#include "vgmap/extraction.hpp"
#include "vgmap/field.hpp"
#include "vgmap/physics.hpp"
#include "vgmap/reconstruction.hpp"
#include "vgmap/signal.hpp"

namespace vgmap {

/// Scanline geometry: n_scanlines lines at y_center + (k - (n-1)/2) y_spacing,
/// each sampled at d_start + j d_step for j < d_points.
struct ScanConfig {
    int n_scanlines = 6;
    double y_spacing = 6.0;  // nm
    double y_center = 0.0;   // nm
    double d_start = 0.0;    // nm
    double d_step = 2.0;     // nm
    int d_points = 200;

    double y_of(int k) const { return y_center + (k - 0.5 * (n_scanlines - 1)) * y_spacing; }
    std::vector<double> d_grid() const
    {
        std::vector<double> g(static_cast<std::size_t>(d_points));
        for (int j = 0; j < d_points; ++j) {
            g[static_cast<std::size_t>(j)] = d_start + j * d_step;
        }
        return g;
    }

    void validate() const
    {
        require(n_scanlines >= 1, "scan: n_scanlines must be >= 1");
        require(y_spacing > 0.0 || n_scanlines == 1, "scan: y_spacing must be > 0");
        require(d_step > 0.0, "scan: d_step must be > 0");
        require(d_points >= 2, "scan: d_points must be >= 2");
    }
};

enum class ExtractionMode {
    Fft,    // spectral peak extraction from the synthesized raster
    Exact,  // peaks taken directly from the forward-model components
};

struct ExtractionConfig {
    ExtractionMode mode = ExtractionMode::Fft;
    SpectrumOptions spectrum;
    PeakOptions peaks;
    RefineOptions refine;
    bool track_dominant = false;
    double grid_d_step = 2.0;  // nm, for gridded map output
    double grid_y_step = 1.0;  // nm
};

/// Pass/fail thresholds applied by the round trip.
struct Thresholds {
    double phase_rms = 0.2;         // rad
    double magnitude_error = 1e-9;  // ueV
    double pearson_max = -0.85;
    double evs_cut_sigma = 0.5;     // phase RMS uses points with E_VS > cut * sigma
};

struct RunConfig {
    std::uint64_t seed = 1;
    FieldParams field;
    ScenarioConfig scenario;
    MeasurementPlan plan;  // d_grid is filled from scan
    double tau_start = 0.0;
    double tau_stop = 500.0;
    double tau_step = 2.0;
    ScanConfig scan;
    ExtractionConfig extraction;
    ReconstructionOptions reconstruction;
    Thresholds thresholds;

    MeasurementPlan measurement_plan() const
    {
        MeasurementPlan p = plan;
        p.tau_grid = uniform_grid(tau_start, tau_stop, tau_step);
        p.d_grid = scan.d_grid();
        return p;
    }

    /// Field parameters with the run seed applied.
    FieldParams field_params() const
    {
        FieldParams f = field;
        f.seed = seed;
        return f;
    }

    void validate() const
    {
        field.validate();
        scenario.validate();
        measurement_plan().validate();
        scan.validate();
        require(extraction.spectrum.pad_factor >= 1, "extraction: pad_factor must be >= 1");
        require(extraction.peaks.max_peaks >= 1, "extraction: max_peaks must be >= 1");
        require(extraction.peaks.rel_threshold > 0.0 && extraction.peaks.rel_threshold < 1.0,
                "extraction: rel_threshold must be in (0, 1)");
        require(extraction.refine.max_iterations >= 1, "extraction: refine_max_iterations must be >= 1");
        require(extraction.refine.max_shift_bins > 0.0, "extraction: refine_max_shift_bins must be > 0");
        const auto& w = reconstruction.cost;
        require(w.step >= 0.0 && w.curvature >= 0.0 && w.jerk >= 0.0 && w.phase >= 0.0,
                "reconstruction: cost weights must be >= 0");
        require(reconstruction.axis_tolerance >= 0.0 && reconstruction.axis_tolerance < 1.0,
                "reconstruction: axis_tolerance must be in [0, 1)");
        const auto& n = reconstruction.normalize;
        require(n.scale_quantile > 0.0 && n.scale_quantile <= 1.0,
                "reconstruction: scale_quantile must be in (0, 1]");
        require(!n.scale || *n.scale > 0.0, "reconstruction: scale must be > 0");
        require(field.origin_y <= scan.y_of(0) + 1e-9 &&
                    scan.y_of(scan.n_scanlines - 1) <= field.origin_y + field.extent_y - field.grid_step + 1e-9,
                "scan: scanlines fall outside the field y extent");
        require(field.origin_d <= scan.d_start + 1e-9 &&
                    scan.d_start + (scan.d_points - 1) * scan.d_step <=
                        field.origin_d + field.extent_d - field.grid_step + 1e-9,
                "scan: d range falls outside the field d extent");
    }
};

namespace detail {

// Reads `key` from `obj` into `out` when present, recording it as consumed.
template <typename T>
void take(const nlohmann::json& obj, const char* key, T& out, std::set<std::string>& seen)
{
    seen.insert(key);
    if (auto it = obj.find(key); it != obj.end()) {
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
        }
    }
}

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& seen, const std::string& where)
{
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!seen.contains(it.key())) {
            throw ValidationError("config: unknown key '" + where + it.key() + "'");
        }
    }
}

inline const nlohmann::json& section(const nlohmann::json& root, const char* key, std::set<std::string>& seen)
{
    static const nlohmann::json empty = nlohmann::json::object();
    seen.insert(key);
    auto it = root.find(key);
    if (it == root.end()) {
        return empty;
    }
    require(it->is_object(), std::string("config: '") + key + "' must be an object");
    return *it;
}

} // namespace detail

inline std::string to_string(ExtractionMode m) { return m == ExtractionMode::Fft ? "fft" : "exact"; }
inline std::string to_string(Scenario s) { return s == Scenario::ShuttledMixed ? "shuttled_mixed" : "inert_mixed"; }
inline std::string to_string(Window w) { return w == Window::Hann ? "hann" : "rectangular"; }

inline nlohmann::json to_json(const RunConfig& c)
{
    using nlohmann::json;
    const auto& n = c.reconstruction.normalize;
    return json{
        {"seed", c.seed},
        {"field",
         {{"extent_d", c.field.extent_d},
          {"extent_y", c.field.extent_y},
          {"grid_step", c.field.grid_step},
          {"origin_d", c.field.origin_d},
          {"origin_y", c.field.origin_y},
          {"corr_length", c.field.corr_length},
          {"sigma", c.field.sigma},
          {"mean_re", c.field.mean_re},
          {"mean_im", c.field.mean_im}}},
        {"scenario",
         {{"scenario", to_string(c.scenario.scenario)},
          {"delta_g_i", c.scenario.delta_g_i},
          {"w_plus", c.scenario.w_plus},
          {"w_minus", c.scenario.w_minus},
          {"g0", c.scenario.g0},
          {"delta_g_max", c.scenario.delta_g_max}}},
        {"plan",
         {{"B", c.plan.B},
          {"tau_start", c.tau_start},
          {"tau_stop", c.tau_stop},
          {"tau_step", c.tau_step},
          {"shots", c.plan.shots},
          {"shot_noise", c.plan.shot_noise},
          {"t2_star", std::isinf(c.plan.t2_star) ? json(nullptr) : json(c.plan.t2_star)},
          {"visibility", c.plan.visibility},
          {"crosstalk_sigma", c.plan.crosstalk_sigma}}},
        {"scan",
         {{"n_scanlines", c.scan.n_scanlines},
          {"y_spacing", c.scan.y_spacing},
          {"y_center", c.scan.y_center},
          {"d_start", c.scan.d_start},
          {"d_step", c.scan.d_step},
          {"d_points", c.scan.d_points}}},
        {"extraction",
         {{"mode", to_string(c.extraction.mode)},
          {"pad_factor", c.extraction.spectrum.pad_factor},
          {"window", to_string(c.extraction.spectrum.window)},
          {"max_peaks", c.extraction.peaks.max_peaks},
          {"rel_threshold", c.extraction.peaks.rel_threshold},
          {"min_separation", c.extraction.peaks.min_separation},
          {"refine", c.extraction.refine.enabled},
          {"refine_max_iterations", c.extraction.refine.max_iterations},
          {"refine_max_shift_bins", c.extraction.refine.max_shift_bins},
          {"track_dominant", c.extraction.track_dominant},
          {"grid_d_step", c.extraction.grid_d_step},
          {"grid_y_step", c.extraction.grid_y_step}}},
        {"reconstruction",
         {{"scale_quantile", n.scale_quantile},
          {"scale", n.scale ? json(*n.scale) : json(nullptr)},
          {"cost_step", c.reconstruction.cost.step},
          {"cost_curvature", c.reconstruction.cost.curvature},
          {"cost_jerk", c.reconstruction.cost.jerk},
          {"cost_phase", c.reconstruction.cost.phase},
          {"low_confidence_evs", c.reconstruction.low_confidence_evs},
          {"axis_tolerance", c.reconstruction.axis_tolerance}}},
        {"thresholds",
         {{"phase_rms", c.thresholds.phase_rms},
          {"magnitude_error", c.thresholds.magnitude_error},
          {"pearson_max", c.thresholds.pearson_max},
          {"evs_cut_sigma", c.thresholds.evs_cut_sigma}}},
    };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& j)
{
    using detail::take;
    require(j.is_object(), "config: top level must be an object");
    RunConfig c;
    std::set<std::string> root;
    take(j, "seed", c.seed, root);
    {
        std::set<std::string> s;
        const auto& o = detail::section(j, "field", root);
        take(o, "extent_d", c.field.extent_d, s);
        take(o, "extent_y", c.field.extent_y, s);
        take(o, "grid_step", c.field.grid_step, s);
        take(o, "origin_d", c.field.origin_d, s);
        take(o, "origin_y", c.field.origin_y, s);
        take(o, "corr_length", c.field.corr_length, s);
        take(o, "sigma", c.field.sigma, s);
        take(o, "mean_re", c.field.mean_re, s);
        take(o, "mean_im", c.field.mean_im, s);
        detail::reject_unknown(o, s, "field.");
    }
    {
        std::set<std::string> s;
        const auto& o = detail::section(j, "scenario", root);
        std::string name = to_string(c.scenario.scenario);
        take(o, "scenario", name, s);
        if (name == "shuttled_mixed") {
            c.scenario.scenario = Scenario::ShuttledMixed;
        } else if (name == "inert_mixed") {
            c.scenario.scenario = Scenario::InertMixed;
        } else {
            throw ValidationError("config: scenario must be 'shuttled_mixed' or 'inert_mixed'");
        }
        take(o, "delta_g_i", c.scenario.delta_g_i, s);
        take(o, "w_plus", c.scenario.w_plus, s);
        take(o, "w_minus", c.scenario.w_minus, s);
        take(o, "g0", c.scenario.g0, s);
        take(o, "delta_g_max", c.scenario.delta_g_max, s);
        detail::reject_unknown(o, s, "scenario.");
    }
    {
        std::set<std::string> s;
        const auto& o = detail::section(j, "plan", root);
        take(o, "B", c.plan.B, s);
        take(o, "tau_start", c.tau_start, s);
        take(o, "tau_stop", c.tau_stop, s);
        take(o, "tau_step", c.tau_step, s);
        take(o, "shots", c.plan.shots, s);
        take(o, "shot_noise", c.plan.shot_noise, s);
        s.insert("t2_star");
        if (auto it = o.find("t2_star"); it != o.end()) {
            if (it->is_null()) {
                c.plan.t2_star = std::numeric_limits<double>::infinity();
            } else {
                take(o, "t2_star", c.plan.t2_star, s);
            }
        }
        take(o, "visibility", c.plan.visibility, s);
        take(o, "crosstalk_sigma", c.plan.crosstalk_sigma, s);
        detail::reject_unknown(o, s, "plan.");
    }
    {
        std::set<std::string> s;
        const auto& o = detail::section(j, "scan", root);
        take(o, "n_scanlines", c.scan.n_scanlines, s);
        take(o, "y_spacing", c.scan.y_spacing, s);
        take(o, "y_center", c.scan.y_center, s);
        take(o, "d_start", c.scan.d_start, s);
        take(o, "d_step", c.scan.d_step, s);
        take(o, "d_points", c.scan.d_points, s);
        detail::reject_unknown(o, s, "scan.");
    }
    {
        std::set<std::string> s;
        const auto& o = detail::section(j, "extraction", root);
        std::string mode = to_string(c.extraction.mode);
        take(o, "mode", mode, s);
        if (mode == "fft") {
            c.extraction.mode = ExtractionMode::Fft;
        } else if (mode == "exact") {
            c.extraction.mode = ExtractionMode::Exact;
        } else {
            throw ValidationError("config: extraction.mode must be 'fft' or 'exact'");
        }
        take(o, "pad_factor", c.extraction.spectrum.pad_factor, s);
        std::string window = to_string(c.extraction.spectrum.window);
        take(o, "window", window, s);
        if (window == "hann") {
            c.extraction.spectrum.window = Window::Hann;
        } else if (window == "rectangular") {
            c.extraction.spectrum.window = Window::Rectangular;
        } else {
            throw ValidationError("config: extraction.window must be 'hann' or 'rectangular'");
        }
        take(o, "max_peaks", c.extraction.peaks.max_peaks, s);
        take(o, "rel_threshold", c.extraction.peaks.rel_threshold, s);
        take(o, "min_separation", c.extraction.peaks.min_separation, s);
        take(o, "refine", c.extraction.refine.enabled, s);
        take(o, "refine_max_iterations", c.extraction.refine.max_iterations, s);
        take(o, "refine_max_shift_bins", c.extraction.refine.max_shift_bins, s);
        take(o, "track_dominant", c.extraction.track_dominant, s);
        take(o, "grid_d_step", c.extraction.grid_d_step, s);
        take(o, "grid_y_step", c.extraction.grid_y_step, s);
        detail::reject_unknown(o, s, "extraction.");
    }
    {
        std::set<std::string> s;
        const auto& o = detail::section(j, "reconstruction", root);
        auto& n = c.reconstruction.normalize;
        take(o, "scale_quantile", n.scale_quantile, s);
        s.insert("scale");
        if (auto it = o.find("scale"); it != o.end() && !it->is_null()) {
            double v = 0.0;
            take(o, "scale", v, s);
            n.scale = v;
        }
        take(o, "cost_step", c.reconstruction.cost.step, s);
        take(o, "cost_curvature", c.reconstruction.cost.curvature, s);
        take(o, "cost_jerk", c.reconstruction.cost.jerk, s);
        take(o, "cost_phase", c.reconstruction.cost.phase, s);
        take(o, "low_confidence_evs", c.reconstruction.low_confidence_evs, s);
        take(o, "axis_tolerance", c.reconstruction.axis_tolerance, s);
        detail::reject_unknown(o, s, "reconstruction.");
    }
    {
        std::set<std::string> s;
        const auto& o = detail::section(j, "thresholds", root);
        take(o, "phase_rms", c.thresholds.phase_rms, s);
        take(o, "magnitude_error", c.thresholds.magnitude_error, s);
        take(o, "pearson_max", c.thresholds.pearson_max, s);
        take(o, "evs_cut_sigma", c.thresholds.evs_cut_sigma, s);
        detail::reject_unknown(o, s, "thresholds.");
    }
    detail::reject_unknown(j, root, "");
    c.validate();
    return c;
}

inline RunConfig parse_run_config(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

/// Canonical serialization: keys sorted, fixed indentation, trailing newline.
inline std::string serialize(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline std::string config_digest(const RunConfig& c) { return sha256_hex(serialize(c)); }

} // namespace vgmap

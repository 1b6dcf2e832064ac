#pragma once

// Column-wise spectral analysis of P_S rasters: windowed, zero-padded FFT
// on a Delta-g axis, up-to-two-peak picking with parabolic refinement, an
// optional time-domain least-squares polish of the peak frequencies, and
// assembly of the per-site records into a (d, y) g-factor map.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vgmap/errors.hpp"
#include "vgmap/fft.hpp"
#include "vgmap/physics.hpp"
#include "vgmap/signal.hpp"

namespace vgmap {

enum class Window { Hann, Rectangular };

struct SpectrumOptions {
    int pad_factor = 8;
    Window window = Window::Hann;
};

struct Spectrum {
    std::vector<double> delta_g_axis;  // strictly increasing, DC excluded
    std::vector<double> magnitudes;
    double padded_bin = 0.0;  // axis spacing
    double native_bin = 0.0;  // 1 / (N dt) converted to Delta-g
    double d = 0.0;
    double y = 0.0;
};

inline std::vector<double> window_taps(std::size_t n, Window w)
{
    std::vector<double> taps(n, 1.0);
    if (w == Window::Hann && n > 1) {
        for (std::size_t k = 0; k < n; ++k) {
            taps[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                            static_cast<double>(n - 1)));
        }
    }
    return taps;
}

/// Sample spacing of a uniform grid; rejects non-uniform grids.
inline double uniform_spacing(std::span<const double> grid)
{
    require(grid.size() >= 2, "tau grid needs at least 2 points");
    const double dt = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    require(dt > 0.0, "tau grid must be increasing");
    for (std::size_t k = 1; k < grid.size(); ++k) {
        require(std::abs(grid[k] - grid[k - 1] - dt) <= 1e-6 * dt, "tau grid is not uniformly spaced");
    }
    return dt;
}

/// Mean-subtracted, windowed input to the transform.
inline std::vector<double> prepare_column(std::span<const double> column, Window window)
{
    double mean = 0.0;
    for (double v : column) {
        mean += v;
    }
    mean /= static_cast<double>(column.size());
    const auto taps = window_taps(column.size(), window);
    std::vector<double> x(column.size());
    for (std::size_t k = 0; k < column.size(); ++k) {
        x[k] = (column[k] - mean) * taps[k];
    }
    return x;
}

inline Spectrum column_spectrum(std::span<const double> column, std::span<const double> tau_ns,
                                double B, const SpectrumOptions& options = {})
{
    require(options.pad_factor >= 1, "column_spectrum: pad_factor must be >= 1");
    require(column.size() == tau_ns.size(), "column_spectrum: column and tau grid differ in length");
    const double dt = uniform_spacing(tau_ns) * 1e-9;
    const auto x = prepare_column(column, options.window);
    const std::size_t n_fft = column.size() * static_cast<std::size_t>(options.pad_factor);
    RealFft fft(n_fft);
    const auto bins = fft.forward(x);

    Spectrum s;
    const double df = 1.0 / (static_cast<double>(n_fft) * dt);
    s.padded_bin = delta_g_from_frequency(B, df);
    s.native_bin = delta_g_from_frequency(B, 1.0 / (static_cast<double>(column.size()) * dt));
    s.delta_g_axis.reserve(bins.size() - 1);
    s.magnitudes.reserve(bins.size() - 1);
    for (std::size_t k = 1; k < bins.size(); ++k) {
        s.delta_g_axis.push_back(delta_g_from_frequency(B, static_cast<double>(k) * df));
        s.magnitudes.push_back(std::abs(bins[k]));
    }
    return s;
}

struct Peak {
    double delta_g;
    double amplitude;
    bool dominant;
};

/// Up to two peaks; peaks[0] is the dominant component Delta-g_1.
struct PeakSet {
    std::vector<Peak> peaks;
    double d = 0.0;
    double y = 0.0;
    bool swapped = false;  // dominant assignment was overridden

    std::optional<double> mean_delta_g() const
    {
        if (peaks.size() != 2) {
            return std::nullopt;
        }
        return 0.5 * (peaks[0].delta_g + peaks[1].delta_g);
    }

    void swap_dominant()
    {
        require(peaks.size() == 2, "swap_dominant: site does not have two peaks");
        std::swap(peaks[0], peaks[1]);
        peaks[0].dominant = true;
        peaks[1].dominant = false;
        swapped = !swapped;
    }
};

struct PeakOptions {
    std::size_t max_peaks = 2;
    double rel_threshold = 0.2;
    // In Delta-g units; <= 0 selects two native bins of the spectrum.
    double min_separation = 0.0;
};

inline PeakSet find_peaks(const Spectrum& spectrum, const PeakOptions& options = {})
{
    require(!spectrum.magnitudes.empty(), "find_peaks: empty spectrum");
    require(options.rel_threshold > 0.0 && options.rel_threshold < 1.0,
            "find_peaks: rel_threshold must be in (0, 1)");
    const auto& m = spectrum.magnitudes;
    const auto& axis = spectrum.delta_g_axis;
    const double min_sep =
        options.min_separation > 0.0 ? options.min_separation : 2.0 * spectrum.native_bin;

    PeakSet out;
    out.d = spectrum.d;
    out.y = spectrum.y;
    const double global_max = *std::max_element(m.begin(), m.end());
    if (!(global_max > 0.0)) {
        return out;
    }

    std::vector<Peak> candidates;
    for (std::size_t k = 1; k + 1 < m.size(); ++k) {
        if (!(m[k] > m[k - 1] && m[k] >= m[k + 1]) || m[k] < options.rel_threshold * global_max) {
            continue;
        }
        const double a = m[k - 1], b = m[k], c = m[k + 1];
        const double denom = a - 2.0 * b + c;
        const double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
        const double h = axis[k + 1] - axis[k];
        candidates.push_back({axis[k] + delta * h, b - 0.25 * (a - c) * delta, false});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Peak& l, const Peak& r) { return l.amplitude > r.amplitude; });
    for (const auto& c : candidates) {
        if (out.peaks.size() >= options.max_peaks) {
            break;
        }
        const bool clear = std::all_of(out.peaks.begin(), out.peaks.end(), [&](const Peak& p) {
            return std::abs(p.delta_g - c.delta_g) >= min_sep;
        });
        if (clear) {
            out.peaks.push_back(c);
        }
    }
    if (!out.peaks.empty()) {
        out.peaks[0].dominant = true;
    }
    return out;
}

struct RefineOptions {
    bool enabled = true;
    int max_iterations = 50;
    double t2_guess_ns = 300.0;
    // A polished frequency further than this many native bins from its FFT
    // estimate is treated as a failed fit and discarded.
    double max_shift_bins = 1.0;
};

/// Result of the time-domain fit, exposed for diagnostics.
struct RefineReport {
    bool converged = false;
    int iterations = 0;
    double rss_initial = 0.0;
    double rss_final = 0.0;
    double t2_ns = 0.0;
};

namespace detail {

// Parameters: [c0, 1/T^2, (omega_k, a_k, b_k) per tone]; model
// c0 + exp(-t^2/T^2) sum_k (a_k cos(omega_k t) + b_k sin(omega_k t)).
struct ToneModel {
    std::span<const double> t;
    std::span<const double> x;
    std::size_t tones;

    std::size_t size() const { return 2 + 3 * tones; }

    double residuals(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const
    {
        r.resize(static_cast<Eigen::Index>(t.size()));
        if (jac != nullptr) {
            jac->resize(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(size()));
        }
        for (std::size_t n = 0; n < t.size(); ++n) {
            const auto i = static_cast<Eigen::Index>(n);
            const double tn = t[n];
            const double env = std::exp(-tn * tn * p[1]);
            double osc = 0.0;
            for (std::size_t k = 0; k < tones; ++k) {
                const auto o = static_cast<Eigen::Index>(2 + 3 * k);
                const double cw = std::cos(p[o] * tn), sw = std::sin(p[o] * tn);
                osc += p[o + 1] * cw + p[o + 2] * sw;
                if (jac != nullptr) {
                    (*jac)(i, o) = env * tn * (-p[o + 1] * sw + p[o + 2] * cw);
                    (*jac)(i, o + 1) = env * cw;
                    (*jac)(i, o + 2) = env * sw;
                }
            }
            r[i] = p[0] + env * osc - x[n];
            if (jac != nullptr) {
                (*jac)(i, 0) = 1.0;
                (*jac)(i, 1) = -tn * tn * env * osc;
            }
        }
        return r.squaredNorm();
    }
};

/// Linear amplitudes for fixed frequencies and decay: the starting point of
/// the nonlinear fit.
inline void fit_linear_part(const ToneModel& m, Eigen::VectorXd& p)
{
    const auto rows = static_cast<Eigen::Index>(m.t.size());
    const auto cols = static_cast<Eigen::Index>(1 + 2 * m.tones);
    Eigen::MatrixXd a(rows, cols);
    Eigen::VectorXd b(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double tn = m.t[static_cast<std::size_t>(i)];
        const double env = std::exp(-tn * tn * p[1]);
        a(i, 0) = 1.0;
        for (std::size_t k = 0; k < m.tones; ++k) {
            const double w = p[static_cast<Eigen::Index>(2 + 3 * k)];
            a(i, static_cast<Eigen::Index>(1 + 2 * k)) = env * std::cos(w * tn);
            a(i, static_cast<Eigen::Index>(2 + 2 * k)) = env * std::sin(w * tn);
        }
        b[i] = m.x[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
    p[0] = sol[0];
    for (std::size_t k = 0; k < m.tones; ++k) {
        p[static_cast<Eigen::Index>(3 + 3 * k)] = sol[static_cast<Eigen::Index>(1 + 2 * k)];
        p[static_cast<Eigen::Index>(4 + 3 * k)] = sol[static_cast<Eigen::Index>(2 + 2 * k)];
    }
}

} // namespace detail

/// Polishes the peak frequencies of one column by Levenberg-Marquardt on the
/// time-domain model (constant plus Gaussian-damped tones, free phases and
/// decay). Peak order, amplitudes and the dominant flag are kept; only
/// delta_g moves, and only when the fit lowers the residual and stays within
/// max_shift_bins of the spectral estimate.
inline RefineReport refine_peaks(PeakSet& peaks, std::span<const double> column,
                                 std::span<const double> tau_ns, double B,
                                 const RefineOptions& options = {})
{
    RefineReport report;
    if (!options.enabled || peaks.peaks.empty()) {
        return report;
    }
    require(column.size() == tau_ns.size(), "refine_peaks: column and tau grid differ in length");
    require(options.t2_guess_ns > 0.0, "refine_peaks: t2_guess_ns must be > 0");
    const double dt = uniform_spacing(tau_ns);
    // Time in microseconds keeps the parameters of comparable magnitude.
    std::vector<double> t(tau_ns.size());
    for (std::size_t n = 0; n < t.size(); ++n) {
        t[n] = tau_ns[n] * 1e-3;
    }
    const double to_omega = 2.0 * std::numbers::pi * 1e-6;  // Hz -> rad/us
    const detail::ToneModel model{t, column, peaks.peaks.size()};
    Eigen::VectorXd p(static_cast<Eigen::Index>(model.size()));
    p.setZero();
    const double t2 = options.t2_guess_ns * 1e-3;
    p[1] = 1.0 / (t2 * t2);
    for (std::size_t k = 0; k < peaks.peaks.size(); ++k) {
        p[static_cast<Eigen::Index>(2 + 3 * k)] = to_omega * st_frequency(B, peaks.peaks[k].delta_g);
    }
    detail::fit_linear_part(model, p);

    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    double cost = model.residuals(p, r, &jac);
    report.rss_initial = cost;
    double lambda = 1e-3;
    for (int it = 0; it < options.max_iterations; ++it) {
        report.iterations = it + 1;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        bool stepped = false;
        for (int attempt = 0; attempt < 20 && !stepped; ++attempt) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            const Eigen::VectorXd trial = p + step;
            Eigen::VectorXd rt;
            const double ct = trial[1] > 0.0 ? model.residuals(trial, rt, nullptr)
                                             : std::numeric_limits<double>::infinity();
            if (std::isfinite(ct) && ct <= cost) {
                const double gain = cost - ct;
                p = trial;
                cost = model.residuals(p, r, &jac);
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (gain <= 1e-12 * std::max(cost, 1e-300)) {
                    report.converged = true;
                }
            } else {
                lambda *= 10.0;
            }
        }
        if (!stepped || report.converged) {
            report.converged = true;
            break;
        }
    }
    report.rss_final = cost;
    report.t2_ns = p[1] > 0.0 ? 1e3 / std::sqrt(p[1]) : 0.0;

    const double native = delta_g_from_frequency(B, 1.0 / (static_cast<double>(column.size()) * dt * 1e-9));
    std::vector<double> polished;
    for (std::size_t k = 0; k < peaks.peaks.size(); ++k) {
        const double f = std::abs(p[static_cast<Eigen::Index>(2 + 3 * k)]) / to_omega;
        const double dg = delta_g_from_frequency(B, f);
        if (!(std::abs(dg - peaks.peaks[k].delta_g) <= options.max_shift_bins * native)) {
            report.converged = false;
            return report;
        }
        polished.push_back(dg);
    }
    if (!(cost <= report.rss_initial)) {
        report.converged = false;
        return report;
    }
    for (std::size_t k = 0; k < polished.size(); ++k) {
        peaks.peaks[k].delta_g = polished[k];
    }
    return report;
}

/// Spectrum and peaks for every d row of a raster.
inline std::vector<PeakSet> extract_raster(const PsRaster& raster, double B,
                                           const SpectrumOptions& spectrum_options = {},
                                           const PeakOptions& peak_options = {},
                                           const RefineOptions& refine_options = {})
{
    raster.validate();
    std::vector<PeakSet> out;
    out.reserve(raster.rows());
    for (std::size_t i = 0; i < raster.rows(); ++i) {
        auto spec = column_spectrum(raster.row(i), raster.tau_ns, B, spectrum_options);
        spec.d = raster.d_nm[i];
        spec.y = raster.y_nm;
        auto peaks = find_peaks(spec, peak_options);
        refine_peaks(peaks, raster.row(i), raster.tau_ns, B, refine_options);
        out.push_back(std::move(peaks));
    }
    return out;
}

/// Continuity heuristic along one scanline (ordered by d): at two-peak sites,
/// pick the assignment minimizing |dg1(d) - dg1(previous site)|.
inline std::size_t track_dominant(std::span<PeakSet> scanline)
{
    std::size_t swaps = 0;
    std::optional<double> previous;
    for (auto& site : scanline) {
        if (site.peaks.empty()) {
            continue;
        }
        if (previous && site.peaks.size() == 2 &&
            std::abs(site.peaks[1].delta_g - *previous) < std::abs(site.peaks[0].delta_g - *previous)) {
            site.swap_dominant();
            ++swaps;
        }
        previous = site.peaks[0].delta_g;
    }
    return swaps;
}

struct SiteRecord {
    double d = 0.0;
    double y = 0.0;
    std::optional<double> dg1;
    std::optional<double> dg2;
    double amp1 = 0.0;
    double amp2 = 0.0;
    std::optional<double> dg_mean;
    bool mean_extrapolated = false;
    std::optional<double> abs_dgs;  // |dg1 - mean|
    bool overridden = false;
};

struct SiteKey {
    double d;
    double y;
};

inline bool same_site(double d, double y, const SiteKey& k)
{
    return std::abs(d - k.d) <= 1e-6 && std::abs(y - k.y) <= 1e-6;
}

struct GFactorMap {
    std::vector<SiteRecord> records;
    std::vector<SiteKey> overrides;

    std::vector<double> scanline_ys() const
    {
        std::vector<double> ys;
        for (const auto& r : records) {
            if (std::none_of(ys.begin(), ys.end(), [&](double y) { return std::abs(y - r.y) <= 1e-6; })) {
                ys.push_back(r.y);
            }
        }
        std::sort(ys.begin(), ys.end());
        return ys;
    }

    /// Records at one y, ordered by d.
    std::vector<SiteRecord> scanline(double y) const
    {
        std::vector<SiteRecord> out;
        for (const auto& r : records) {
            if (std::abs(r.y - y) <= 1e-6) {
                out.push_back(r);
            }
        }
        std::sort(out.begin(), out.end(), [](const SiteRecord& a, const SiteRecord& b) { return a.d < b.d; });
        return out;
    }
};

struct AssembleOptions {
    bool extrapolate_mean = true;
};

inline GFactorMap assemble_map(std::vector<PeakSet> peaksets, std::span<const SiteKey> overrides,
                               const AssembleOptions& options = {})
{
    GFactorMap map;
    map.overrides.assign(overrides.begin(), overrides.end());
    for (const auto& key : overrides) {
        auto it = std::find_if(peaksets.begin(), peaksets.end(),
                               [&](const PeakSet& p) { return same_site(p.d, p.y, key); });
        require(it != peaksets.end(), "assemble_map: override references an unknown site");
        require(it->peaks.size() == 2, "assemble_map: override references a single-peak site");
        it->swap_dominant();
    }

    map.records.reserve(peaksets.size());
    for (const auto& p : peaksets) {
        SiteRecord r;
        r.d = p.d;
        r.y = p.y;
        r.overridden = p.swapped;
        if (!p.peaks.empty()) {
            r.dg1 = p.peaks[0].delta_g;
            r.amp1 = p.peaks[0].amplitude;
        }
        if (p.peaks.size() == 2) {
            r.dg2 = p.peaks[1].delta_g;
            r.amp2 = p.peaks[1].amplitude;
            r.dg_mean = p.mean_delta_g();
        }
        map.records.push_back(r);
    }

    if (options.extrapolate_mean) {
        auto mean_of = [&](auto&& pick) -> std::optional<double> {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& r : map.records) {
                if (r.dg_mean && !r.mean_extrapolated && pick(r)) {
                    sum += *r.dg_mean;
                    ++n;
                }
            }
            return n > 0 ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
        };
        const auto global = mean_of([](const SiteRecord&) { return true; });
        std::vector<std::pair<double, std::optional<double>>> per_line;
        for (double y : map.scanline_ys()) {
            per_line.emplace_back(y, mean_of([y](const SiteRecord& r) { return std::abs(r.y - y) <= 1e-6; }));
        }
        for (auto& r : map.records) {
            if (r.dg1 && !r.dg_mean) {
                for (const auto& [y, m] : per_line) {
                    if (std::abs(r.y - y) <= 1e-6) {
                        r.dg_mean = m ? m : global;
                    }
                }
                r.mean_extrapolated = r.dg_mean.has_value();
            }
        }
    }

    for (auto& r : map.records) {
        if (r.dg1 && r.dg_mean) {
            r.abs_dgs = std::abs(*r.dg1 - *r.dg_mean);
        }
    }
    return map;
}

/// (smaller, larger) Delta-g of every two-peak site.
inline std::vector<std::pair<double, double>> pair_scatter(const GFactorMap& map)
{
    std::vector<std::pair<double, double>> out;
    for (const auto& r : map.records) {
        if (r.dg1 && r.dg2) {
            out.emplace_back(std::min(*r.dg1, *r.dg2), std::max(*r.dg1, *r.dg2));
        }
    }
    return out;
}

enum class MapQuantity { Dg1, Dg2, DgMean, AbsDgs };

inline std::optional<double> quantity_of(const SiteRecord& r, MapQuantity q)
{
    switch (q) {
    case MapQuantity::Dg1: return r.dg1;
    case MapQuantity::Dg2: return r.dg2;
    case MapQuantity::DgMean: return r.dg_mean;
    case MapQuantity::AbsDgs: return r.abs_dgs;
    }
    return std::nullopt;
}

/// Regular (d, y) raster; NaN where the quantity is undefined.
struct GriddedMap {
    std::vector<double> d_axis;
    std::vector<double> y_axis;
    std::vector<double> values;  // row-major (y, d)

    double at(std::size_t iy, std::size_t id) const { return values.at(iy * d_axis.size() + id); }
};

namespace detail {

inline std::optional<double> interpolate_line(std::span<const std::pair<double, double>> pts, double d)
{
    if (pts.empty() || d < pts.front().first - 1e-9 || d > pts.back().first + 1e-9) {
        return std::nullopt;
    }
    auto hi = std::lower_bound(pts.begin(), pts.end(), d,
                               [](const std::pair<double, double>& p, double v) { return p.first < v; });
    if (hi == pts.end()) {
        return pts.back().second;
    }
    if (hi == pts.begin() || std::abs(hi->first - d) <= 1e-9) {
        return hi->second;
    }
    const auto lo = hi - 1;
    const double t = (d - lo->first) / (hi->first - lo->first);
    return lo->second + t * (hi->second - lo->second);
}

} // namespace detail

/// Bilinear resampling of a possibly ragged scanline mesh: linear in d within
/// each scanline, then linear in y between the bracketing scanlines.
inline GriddedMap grid_map(const GFactorMap& map, MapQuantity q, double d_step, double y_step)
{
    require(d_step > 0.0 && y_step > 0.0, "grid_map: steps must be > 0");
    const auto ys = map.scanline_ys();
    require(!ys.empty(), "grid_map: empty map");
    std::vector<std::vector<std::pair<double, double>>> lines;
    double d_lo = std::numeric_limits<double>::infinity();
    double d_hi = -d_lo;
    for (double y : ys) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : map.scanline(y)) {
            if (auto v = quantity_of(r, q)) {
                pts.emplace_back(r.d, *v);
            }
            d_lo = std::min(d_lo, r.d);
            d_hi = std::max(d_hi, r.d);
        }
        lines.push_back(std::move(pts));
    }
    GriddedMap g;
    g.d_axis = uniform_grid(d_lo, d_hi, d_step);
    g.y_axis = uniform_grid(ys.front(), ys.back(), y_step);
    g.values.assign(g.d_axis.size() * g.y_axis.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t iy = 0; iy < g.y_axis.size(); ++iy) {
        const double y = g.y_axis[iy];
        auto hi = std::lower_bound(ys.begin(), ys.end(), y - 1e-9);
        const std::size_t b = hi == ys.end() ? ys.size() - 1 : static_cast<std::size_t>(hi - ys.begin());
        const std::size_t a = (std::abs(ys[b] - y) <= 1e-9 || b == 0) ? b : b - 1;
        const double t = a == b ? 0.0 : (y - ys[a]) / (ys[b] - ys[a]);
        for (std::size_t id = 0; id < g.d_axis.size(); ++id) {
            const auto va = detail::interpolate_line(lines[a], g.d_axis[id]);
            const auto vb = detail::interpolate_line(lines[b], g.d_axis[id]);
            if (va && vb) {
                g.values[iy * g.d_axis.size() + id] = *va + t * (*vb - *va);
            }
        }
    }
    return g;
}

} // namespace vgmap

#pragma once

// Disorder model for the intervalley coupling: Re(Delta) and Im(Delta) are
// independent stationary Gaussian random fields on a (d, y) grid with a
// Gaussian autocorrelation C(r) = exp(-r^2 / (2 l^2)).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vgmap/errors.hpp"
#include "vgmap/physics.hpp"
#include "vgmap/rng.hpp"

namespace vgmap {

struct FieldParams {
    double extent_d = 400.0;  // nm
    double extent_y = 40.0;   // nm
    double grid_step = 1.0;   // nm
    double origin_d = 0.0;    // nm, coordinate of the first d node
    double origin_y = -20.0;  // nm, coordinate of the first y node
    double corr_length = 20.0;  // nm
    double sigma = 10.0;        // ueV, per quadrature
    double mean_re = 0.0;       // ueV
    double mean_im = 0.0;       // ueV
    std::uint64_t seed = 1;

    static std::size_t node_count(double extent, double step)
    {
        const double n = extent / step;
        const double rounded = std::round(n);
        require(rounded >= 1.0 && std::abs(n - rounded) <= 1e-9 * std::max(1.0, rounded),
                "field: extents must be positive integer multiples of grid_step");
        return static_cast<std::size_t>(rounded);
    }

    std::size_t nodes_d() const { return node_count(extent_d, grid_step); }
    std::size_t nodes_y() const { return node_count(extent_y, grid_step); }

    void validate() const
    {
        require(grid_step > 0.0, "field: grid_step must be > 0");
        require(corr_length >= grid_step, "field: corr_length must be >= grid_step");
        require(sigma >= 0.0, "field: sigma must be >= 0");
        require(std::isfinite(mean_re) && std::isfinite(mean_im) && std::isfinite(origin_d) &&
                    std::isfinite(origin_y),
                "field: means and origins must be finite");
        (void)nodes_d();
        (void)nodes_y();
    }
};

/// Immutable grid of Delta(d, y). Node (i, j) sits at
/// (origin_d + i * step, origin_y + j * step).
class ValleyField {
public:
    ValleyField(FieldParams params, std::vector<ComplexCoupling> values)
        : params_(params), nd_(params.nodes_d()), ny_(params.nodes_y()), values_(std::move(values))
    {
        require(values_.size() == nd_ * ny_, "field: value count does not match grid");
        for (const auto& v : values_) {
            require(std::isfinite(v.re) && std::isfinite(v.im), "field: non-finite entry");
        }
    }

    const FieldParams& params() const noexcept { return params_; }
    std::size_t nodes_d() const noexcept { return nd_; }
    std::size_t nodes_y() const noexcept { return ny_; }
    std::span<const ComplexCoupling> values() const noexcept { return values_; }

    const ComplexCoupling& at(std::size_t i_d, std::size_t j_y) const
    {
        return values_.at(i_d * ny_ + j_y);
    }

    double d_coord(std::size_t i) const noexcept { return params_.origin_d + i * params_.grid_step; }
    double y_coord(std::size_t j) const noexcept { return params_.origin_y + j * params_.grid_step; }
    double d_max() const noexcept { return d_coord(nd_ - 1); }
    double y_max() const noexcept { return y_coord(ny_ - 1); }

    /// Bilinear interpolation; exact at grid nodes.
    ComplexCoupling interpolate(double d, double y) const
    {
        const auto [i, fd] = locate(d, params_.origin_d, nd_, "d");
        const auto [j, fy] = locate(y, params_.origin_y, ny_, "y");
        const std::size_t i1 = fd > 0.0 ? i + 1 : i;
        const std::size_t j1 = fy > 0.0 ? j + 1 : j;
        const auto& a = at(i, j);
        const auto& b = at(i1, j);
        const auto& c = at(i, j1);
        const auto& e = at(i1, j1);
        if (fd == 0.0 && fy == 0.0) {
            return a;
        }
        const double w00 = (1 - fd) * (1 - fy), w10 = fd * (1 - fy), w01 = (1 - fd) * fy,
                     w11 = fd * fy;
        return {w00 * a.re + w10 * b.re + w01 * c.re + w11 * e.re,
                w00 * a.im + w10 * b.im + w01 * c.im + w11 * e.im};
    }

private:
    struct Cell {
        std::size_t index;
        double frac;
    };

    Cell locate(double x, double origin, std::size_t n, const char* axis) const
    {
        const double u = (x - origin) / params_.grid_step;
        const double last = static_cast<double>(n - 1);
        constexpr double snap = 1e-9;
        require(u >= -snap && u <= last + snap,
                std::string("field: ") + axis + " coordinate outside field extent");
        const double r = std::round(u);
        if (std::abs(u - r) <= snap) {
            return {static_cast<std::size_t>(std::clamp(r, 0.0, last)), 0.0};
        }
        const double fl = std::floor(u);
        return {static_cast<std::size_t>(fl), u - fl};
    }

    FieldParams params_;
    std::size_t nd_;
    std::size_t ny_;
    std::vector<ComplexCoupling> values_;
};

namespace detail {

// Normalized 1D taps whose self-convolution is exp(-r^2 / (2 l^2)); the 2D
// kernel is the outer product, so the squared taps of the 2D kernel sum to 1.
inline std::vector<double> correlation_taps(double corr_length, double step)
{
    const double width = corr_length / std::numbers::sqrt2;
    const auto radius = static_cast<std::size_t>(std::ceil(4.0 * corr_length / step));
    std::vector<double> taps(2 * radius + 1);
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < taps.size(); ++k) {
        const double r = (static_cast<double>(k) - static_cast<double>(radius)) * step;
        taps[k] = std::exp(-r * r / (2.0 * width * width));
        sum_sq += taps[k] * taps[k];
    }
    const double norm = std::sqrt(sum_sq);
    for (auto& t : taps) {
        t /= norm;
    }
    return taps;
}

// White noise on a (nd + 2R) x (ny + 2R) grid convolved with taps along both
// axes, keeping only the fully supported nd x ny interior.
inline std::vector<double> correlated_gaussian(std::size_t nd, std::size_t ny,
                                               std::span<const double> taps, Rng& rng)
{
    const std::size_t radius = taps.size() / 2;
    const std::size_t pd = nd + 2 * radius;
    const std::size_t py = ny + 2 * radius;
    std::vector<double> white(pd * py);
    for (auto& w : white) {
        w = rng.normal();
    }
    // Along y first: pd x ny.
    std::vector<double> stage(pd * ny, 0.0);
    for (std::size_t i = 0; i < pd; ++i) {
        const double* row = &white[i * py];
        for (std::size_t j = 0; j < ny; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < taps.size(); ++k) {
                acc += taps[k] * row[j + k];
            }
            stage[i * ny + j] = acc;
        }
    }
    std::vector<double> out(nd * ny, 0.0);
    for (std::size_t i = 0; i < nd; ++i) {
        for (std::size_t k = 0; k < taps.size(); ++k) {
            const double t = taps[k];
            const double* src = &stage[(i + k) * ny];
            double* dst = &out[i * ny];
            for (std::size_t j = 0; j < ny; ++j) {
                dst[j] += t * src[j];
            }
        }
    }
    return out;
}

} // namespace detail

/// Deterministic for a fixed seed. Re and Im use independent RNG streams.
inline ValleyField generate_field(const FieldParams& params)
{
    params.validate();
    const std::size_t nd = params.nodes_d();
    const std::size_t ny = params.nodes_y();
    std::vector<ComplexCoupling> values(nd * ny, ComplexCoupling{params.mean_re, params.mean_im});
    if (params.sigma > 0.0) {
        const auto taps = detail::correlation_taps(params.corr_length, params.grid_step);
        Rng rng_re(params.seed, 0);
        Rng rng_im(params.seed, 1);
        const auto re = detail::correlated_gaussian(nd, ny, taps, rng_re);
        const auto im = detail::correlated_gaussian(nd, ny, taps, rng_im);
        for (std::size_t k = 0; k < values.size(); ++k) {
            values[k] = {params.mean_re + params.sigma * re[k], params.mean_im + params.sigma * im[k]};
        }
    }
    return ValleyField(params, std::move(values));
}

struct TracePoint {
    double d;
    ComplexCoupling delta;
};

/// Delta(d) along the line at fixed y for d = d_start, d_start + step, ...
/// up to and including d_end.
inline std::vector<TracePoint> sample_trace(const ValleyField& field, double y, double d_start,
                                            double d_end, double step)
{
    require(step > 0.0, "sample_trace: step must be > 0");
    require(d_end >= d_start, "sample_trace: d_end must be >= d_start");
    const auto count = static_cast<std::size_t>(std::floor((d_end - d_start) / step + 1e-9)) + 1;
    std::vector<TracePoint> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double d = d_start + static_cast<double>(k) * step;
        out.push_back({d, field.interpolate(d, y)});
    }
    return out;
}

inline std::vector<ComplexCoupling> trace_values(std::span<const TracePoint> trace)
{
    std::vector<ComplexCoupling> out;
    out.reserve(trace.size());
    for (const auto& p : trace) {
        out.push_back(p.delta);
    }
    return out;
}

struct DeepMinimum {
    std::size_t index;
    double evs;           // ueV at the minimum
    std::size_t left;     // flanking E_VS maximum (or trace end)
    std::size_t right;
    double phase_jump;    // |phi(left) - phi(right)| wrapped to [0, pi]
};

/// Local minima of E_VS = 2|Delta| below `threshold_ueV`, annotated with the
/// valley-phase change between the flanking E_VS maxima.
inline std::vector<DeepMinimum> deep_minima(std::span<const ComplexCoupling> trace,
                                            double threshold_ueV)
{
    require(trace.size() >= 3, "deep_minima: trace needs at least 3 points");
    const std::size_t n = trace.size();
    std::vector<double> evs(n);
    for (std::size_t k = 0; k < n; ++k) {
        evs[k] = evs_from_delta(trace[k]);
    }
    std::vector<DeepMinimum> out;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        // A plateau counts once, at its first point.
        if (!(evs[k] < evs[k - 1] && evs[k] <= evs[k + 1]) || evs[k] >= threshold_ueV) {
            continue;
        }
        std::size_t right = k;
        while (right + 1 < n && evs[right + 1] == evs[right]) {
            ++right;
        }
        if (right + 1 < n && evs[right + 1] < evs[right]) {
            continue;  // descending plateau, not a minimum
        }
        std::size_t left = k;
        while (left > 0 && evs[left - 1] >= evs[left]) {
            --left;
        }
        while (right + 1 < n && evs[right + 1] >= evs[right]) {
            ++right;
        }
        const double jump = std::abs(wrap_phase(trace[left].phase() - trace[right].phase()));
        out.push_back({k, evs[k], left, right, jump});
    }
    return out;
}

struct FieldSummary {
    double mean_evs = 0.0;           // ueV
    double expected_mean_evs = 0.0;  // sqrt(2 pi) sigma for a zero-mean field
    double corr_length_estimate = 0.0;  // nm; NaN when undetermined
};

/// Empirical check of a generated field: mean E_VS, and the lag along d where
/// the pooled autocorrelation of (Re, Im) first drops below exp(-1/2), which
/// equals the correlation length for the Gaussian covariance used here.
inline FieldSummary summarize_field(const ValleyField& field)
{
    FieldSummary s;
    const auto& p = field.params();
    double sum = 0.0;
    for (const auto& v : field.values()) {
        sum += evs_from_delta(v);
    }
    s.mean_evs = sum / static_cast<double>(field.values().size());
    s.expected_mean_evs = std::sqrt(2.0 * std::numbers::pi) * p.sigma;
    s.corr_length_estimate = std::numeric_limits<double>::quiet_NaN();

    const std::size_t nd = field.nodes_d(), ny = field.nodes_y();
    auto autocorr = [&](std::size_t lag) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t i = 0; i + lag < nd; ++i) {
                const auto& a = field.at(i, j);
                const auto& b = field.at(i + lag, j);
                num += (a.re - p.mean_re) * (b.re - p.mean_re) + (a.im - p.mean_im) * (b.im - p.mean_im);
            }
            for (std::size_t i = 0; i < nd; ++i) {
                const auto& a = field.at(i, j);
                den += (a.re - p.mean_re) * (a.re - p.mean_re) + (a.im - p.mean_im) * (a.im - p.mean_im);
            }
        }
        return den > 0.0 ? num / den * static_cast<double>(nd) / static_cast<double>(nd - lag) : 0.0;
    };
    if (p.sigma <= 0.0 || nd < 3) {
        return s;
    }
    const double target = std::exp(-0.5);
    double prev = 1.0;
    for (std::size_t lag = 1; lag < nd / 2; ++lag) {
        const double r = autocorr(lag);
        if (r < target) {
            const double t = (prev - target) / (prev - r);
            s.corr_length_estimate = (static_cast<double>(lag - 1) + t) * p.grid_step;
            break;
        }
        prev = r;
    }
    return s;
}

} // namespace vgmap

#pragma once

// Inverse problem for one scanline: from the dominant Delta-g component and
// E_VS, recover Delta(d) = (E_VS / 2) e^{i phi(d)}.
//
// arccos only yields |phi| in [0, pi]; the sign of phi at every point is
// chosen by an exact dynamic program over the branch chain. The result is
// defined up to one global complex conjugation.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "vgmap/errors.hpp"
#include "vgmap/extraction.hpp"
#include "vgmap/physics.hpp"

namespace vgmap {

struct NormalizeOptions {
    // Scale s is this quantile of |dg1 - mean| over the scanline; 1 is the max.
    double scale_quantile = 1.0;
    // Overrides the estimated scale (e.g. a known dg_max).
    std::optional<double> scale;
};

struct NormalizedTrace {
    std::vector<double> c;
    std::vector<bool> clamped;
    double scale = 0.0;  // scanline estimate of dg_max
};

/// c(d) = (dg1(d) - mean(d)) / s, clamped to [-1, 1]. `dg_mean` holds either
/// one value per point or a single scanline constant.
inline NormalizedTrace normalize_dg(std::span<const double> dg_trace, std::span<const double> dg_mean,
                                    const NormalizeOptions& options = {})
{
    require(!dg_trace.empty(), "normalize_dg: empty trace");
    require(dg_mean.size() == dg_trace.size() || dg_mean.size() == 1,
            "normalize_dg: mean must be per point or a single constant");
    require(options.scale_quantile > 0.0 && options.scale_quantile <= 1.0,
            "normalize_dg: scale_quantile must be in (0, 1]");
    const std::size_t n = dg_trace.size();
    std::vector<double> dev(n);
    for (std::size_t k = 0; k < n; ++k) {
        dev[k] = dg_trace[k] - dg_mean[dg_mean.size() == 1 ? 0 : k];
    }

    double s = 0.0;
    if (options.scale) {
        s = *options.scale;
    } else {
        std::vector<double> mags(n);
        std::transform(dev.begin(), dev.end(), mags.begin(), [](double v) { return std::abs(v); });
        std::sort(mags.begin(), mags.end());
        const double pos = options.scale_quantile * static_cast<double>(n - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, n - 1);
        s = mags[lo] + (pos - static_cast<double>(lo)) * (mags[hi] - mags[lo]);
    }
    if (!(s > 0.0)) {
        throw NumericalError("normalize_dg: trace has no deviation from its mean (scale is 0)");
    }

    NormalizedTrace out;
    out.scale = s;
    out.c.resize(n);
    out.clamped.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double c = dev[k] / s;
        out.c[k] = std::clamp(c, -1.0, 1.0);
        out.clamped[k] = c < -1.0 || c > 1.0;
    }
    return out;
}

inline std::vector<double> phi_from_c(std::span<const double> c)
{
    std::vector<double> out(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
        require(c[k] >= -1.0 && c[k] <= 1.0, "phi_from_c: input outside [-1, 1]");
        out[k] = std::acos(c[k]);
    }
    return out;
}

/// Smoothness cost of a complex-plane trajectory z_j sampled at positions
/// x_j (in units of the median spacing, so a uniform grid has unit steps):
///   step      * sum |D1 z|^2
/// + curvature * sum |D2 z|^2
/// + jerk      * sum |D3 z|^2
/// + phase     * sum (wrap(phi_{j+1} - phi_j) / h_j)^2
/// where D1, D2 and D3 are divided differences scaled so that on a uniform
/// grid they reduce to z_{j+1} - z_j, z_{j+1} - 2 z_j + z_{j-1} and
/// z_{j+1} - 3 z_j + 3 z_{j-1} - z_{j-2}.
///
/// The step term alone always prefers mirroring a trace back into its own
/// half-plane, so higher orders carry the branch decision. The curvature
/// term alone straightens shallow touches of the real axis into crossings;
/// the jerk term distinguishes the two.
struct BranchCost {
    double step = 0.0;
    double curvature = 1.0;
    double jerk = 1.0;
    double phase = 0.0;
};

namespace detail {

inline bool degenerate_phase(double phi_raw)
{
    return phi_raw == 0.0 || phi_raw == std::numbers::pi;
}

// The sign is irrelevant on the real axis; using +1 there keeps every cost
// term bit-identical under either choice.
inline double signed_phase(double phi_raw, int sign)
{
    return degenerate_phase(phi_raw) ? phi_raw : sign * phi_raw;
}

inline std::complex<double> branch_point(double evs, double phi_raw, int sign)
{
    return std::polar(0.5 * evs, signed_phase(phi_raw, sign));
}

inline constexpr std::array<int, 2> kSigns{+1, -1};

// Both candidate points of every sample plus normalized positions.
struct BranchChain {
    std::vector<std::array<std::complex<double>, 2>> z;
    std::vector<std::array<double, 2>> phi;
    std::vector<double> x;

    BranchChain(std::span<const double> phi_raw, std::span<const double> evs, std::span<const double> positions)
        : z(phi_raw.size()), phi(phi_raw.size()), x(phi_raw.size())
    {
        require(phi_raw.size() == evs.size(), "disambiguate_branch: length mismatch");
        require(positions.empty() || positions.size() == phi_raw.size(),
                "disambiguate_branch: positions must match the trace length");
        const std::size_t n = phi_raw.size();
        for (std::size_t j = 0; j < n; ++j) {
            for (int b = 0; b < 2; ++b) {
                z[j][b] = branch_point(evs[j], phi_raw[j], kSigns[b]);
                phi[j][b] = signed_phase(phi_raw[j], kSigns[b]);
            }
        }
        if (positions.empty()) {
            for (std::size_t j = 0; j < n; ++j) {
                x[j] = static_cast<double>(j);
            }
            return;
        }
        std::vector<double> steps;
        for (std::size_t j = 1; j < n; ++j) {
            require(positions[j] > positions[j - 1], "disambiguate_branch: positions must increase");
            steps.push_back(positions[j] - positions[j - 1]);
        }
        std::vector<double> sorted = steps;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
        const double h = sorted.empty() ? 1.0 : sorted[sorted.size() / 2];
        for (std::size_t j = 0; j < n; ++j) {
            x[j] = (positions[j] - positions[0]) / h;
        }
    }

    std::size_t size() const noexcept { return z.size(); }

    std::complex<double> d1(std::size_t k, int a, int b) const
    {
        return (z[k][b] - z[k - 1][a]) / (x[k] - x[k - 1]);
    }

    std::complex<double> d2(std::size_t k, int a, int b, int c) const
    {
        return 2.0 * (d1(k, b, c) - d1(k - 1, a, b)) / (x[k] - x[k - 2]);
    }

    // Every term whose last index is k, given s_{k-3..k} = (a, b, c, d)
    // encoded as indices into kSigns.
    double local(const BranchCost& w, std::size_t k, int a, int b, int c, int d) const
    {
        double t = 0.0;
        if (w.step != 0.0) {
            t += w.step * std::norm(d1(k, c, d));
        }
        if (w.phase != 0.0) {
            const double dp = wrap_phase(phi[k][d] - phi[k - 1][c]) / (x[k] - x[k - 1]);
            t += w.phase * dp * dp;
        }
        if (k >= 2 && w.curvature != 0.0) {
            t += w.curvature * std::norm(d2(k, b, c, d));
        }
        if (k >= 3 && w.jerk != 0.0) {
            t += w.jerk * std::norm(3.0 * (d2(k, b, c, d) - d2(k - 1, a, b, c)) / (x[k] - x[k - 3]));
        }
        return t;
    }
};

inline int sign_index(int s) { return s > 0 ? 0 : 1; }

} // namespace detail

/// Total cost of one sign assignment, evaluated term by term in index order.
/// Empty `positions` means unit spacing.
inline double trace_cost(std::span<const double> phi_raw, std::span<const double> evs,
                         std::span<const int> signs, const BranchCost& weights = {},
                         std::span<const double> positions = {})
{
    require(signs.size() == phi_raw.size(), "trace_cost: sequences must be aligned");
    const detail::BranchChain chain(phi_raw, evs, positions);
    const auto idx = [&](std::size_t j) { return detail::sign_index(signs[j]); };
    double cost = 0.0;
    for (std::size_t k = 1; k < chain.size(); ++k) {
        cost += chain.local(weights, k, k >= 3 ? idx(k - 3) : 0, k >= 2 ? idx(k - 2) : 0, idx(k - 1), idx(k));
    }
    return cost;
}

struct ReconstructedPoint {
    double d = 0.0;
    ComplexCoupling delta;
    double phi = 0.0;      // branch_sign * phi_raw, wrapped to (-pi, pi]
    double phi_raw = 0.0;  // [0, pi]
    int branch_sign = 1;
    bool clamped = false;
    bool low_confidence = false;
    bool axis_ambiguous = false;  // sign set by the second reconstruction pass
};

struct ReconstructedTrace {
    std::vector<ReconstructedPoint> points;
    double cost = 0.0;
    double scale = 0.0;  // normalization scale used (dg_max estimate)
    bool global_conjugate_ambiguity = true;
};

/// Branch signs minimizing `trace_cost`, found exactly by a backward dynamic
/// program over the states (s_{j-2}, s_{j-1}, s_j). Signs are then chosen
/// front to back, preferring +1 on ties. Points with phi_raw in {0, pi} get
/// +1, and the global conjugate is fixed by s = +1 at the first other point.
///
/// A non-zero entry of `fixed` pins that point's sign (up to the global
/// conjugation applied at the end).
inline std::vector<int> optimal_branch_signs(std::span<const double> phi_raw,
                                             std::span<const double> evs,
                                             const BranchCost& weights = {},
                                             std::span<const double> positions = {},
                                             std::span<const int> fixed = {})
{
    require(phi_raw.size() >= 2, "disambiguate_branch: need at least 2 points");
    require(fixed.empty() || fixed.size() == phi_raw.size(), "disambiguate_branch: fixed must match trace length");
    const detail::BranchChain chain(phi_raw, evs, positions);
    const std::size_t n = chain.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto allowed = [&](std::size_t j, int b) {
        return fixed.empty() || fixed[j] == 0 || detail::sign_index(fixed[j]) == b;
    };
    const auto local = [&](std::size_t k, int a, int b, int c, int d) {
        return allowed(k, d) ? chain.local(weights, k, a, b, c, d) : inf;
    };

    std::vector<int> state(n, 0);
    if (n <= 3) {
        double best = inf;
        for (int code = 0; code < (1 << n); ++code) {
            std::array<int, 3> s{};
            for (std::size_t k = 0; k < n; ++k) {
                s[k] = (code >> (n - 1 - k)) & 1;
            }
            double v = allowed(0, s[0]) ? 0.0 : inf;
            for (std::size_t k = 1; k < n; ++k) {
                v += local(k, 0, k >= 2 ? s[k - 2] : 0, s[k - 1], s[k]);
            }
            if (v < best) {
                best = v;
                std::copy(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n), state.begin());
            }
        }
    } else {
        // tail[j][a][b][c]: minimal cost of the terms ending after index j
        // given (s_{j-2}, s_{j-1}, s_j) = (a, b, c); defined for j >= 2.
        using Cube = std::array<std::array<std::array<double, 2>, 2>, 2>;
        std::vector<Cube> tail(n);
        tail[n - 1] = Cube{};
        for (std::size_t j = n - 1; j-- > 2;) {
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    for (int c = 0; c < 2; ++c) {
                        double best = inf;
                        for (int d = 0; d < 2; ++d) {
                            best = std::min(best, local(j + 1, a, b, c, d) + tail[j + 1][b][c][d]);
                        }
                        tail[j][a][b][c] = best;
                    }
                }
            }
        }
        double best = inf;
        for (int code = 0; code < 8; ++code) {
            const int a = (code >> 2) & 1, b = (code >> 1) & 1, c = code & 1;
            const double v =
                (allowed(0, a) ? 0.0 : inf) + local(1, 0, 0, a, b) + local(2, 0, a, b, c) + tail[2][a][b][c];
            if (v < best) {
                best = v;
                state[0] = a;
                state[1] = b;
                state[2] = c;
            }
        }
        for (std::size_t j = 2; j + 1 < n; ++j) {
            const int a = state[j - 2], b = state[j - 1], c = state[j];
            double step_best = inf;
            for (int d = 0; d < 2; ++d) {
                const double v = local(j + 1, a, b, c, d) + tail[j + 1][b][c][d];
                if (v < step_best) {
                    step_best = v;
                    state[j + 1] = d;
                }
            }
        }
    }

    std::vector<int> signs(n);
    for (std::size_t j = 0; j < n; ++j) {
        signs[j] = detail::degenerate_phase(phi_raw[j]) ? 1 : detail::kSigns[state[j]];
    }
    const auto first = std::find_if(phi_raw.begin(), phi_raw.end(),
                                    [](double p) { return !detail::degenerate_phase(p); });
    if (first != phi_raw.end() && signs[static_cast<std::size_t>(first - phi_raw.begin())] < 0) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!detail::degenerate_phase(phi_raw[j])) {
                signs[j] = -signs[j];
            }
        }
    }
    return signs;
}

inline ReconstructedTrace make_trace(std::span<const double> phi_raw, std::span<const double> evs,
                                     std::span<const int> signs)
{
    ReconstructedTrace out;
    out.points.resize(phi_raw.size());
    for (std::size_t j = 0; j < phi_raw.size(); ++j) {
        auto& p = out.points[j];
        p.phi_raw = phi_raw[j];
        p.branch_sign = signs[j];
        p.phi = wrap_phase(signs[j] * phi_raw[j]);
        p.delta = ComplexCoupling::from_polar(0.5 * evs[j], p.phi);
    }
    return out;
}

inline ReconstructedTrace disambiguate_branch(std::span<const double> phi_raw,
                                              std::span<const double> evs,
                                              const BranchCost& weights = {},
                                              std::span<const double> positions = {})
{
    const auto signs = optimal_branch_signs(phi_raw, evs, weights, positions);
    auto out = make_trace(phi_raw, evs, signs);
    out.cost = trace_cost(phi_raw, evs, signs, weights, positions);
    return out;
}

struct ReconstructionOptions {
    NormalizeOptions normalize;
    BranchCost cost;
    double low_confidence_evs = 1.0;  // ueV
    // Points with 1 - |c| below this are left out of the first branch pass
    // and receive their signs from a second pass with the rest pinned; 0
    // disables the split.
    double axis_tolerance = 0.0;
};

/// Linear interpolation of (d, value) samples at `d`; d must lie in range.
inline double interpolate_linear(std::span<const double> xs, std::span<const double> ys, double x)
{
    require(xs.size() == ys.size() && !xs.empty(), "interpolate: bad sample arrays");
    require(x >= xs.front() - 1e-9 && x <= xs.back() + 1e-9, "interpolate: point outside sample range");
    auto hi = std::lower_bound(xs.begin(), xs.end(), x - 1e-9);
    if (hi == xs.end()) {
        return ys.back();
    }
    const auto i = static_cast<std::size_t>(hi - xs.begin());
    if (std::abs(xs[i] - x) <= 1e-9 || i == 0) {
        return ys[i];
    }
    const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

/// normalize_dg -> phi_from_c -> disambiguate_branch for one scanline. Sites
/// without dg1 or mean are skipped. E_VS samples are resampled onto the map's
/// d positions when the grids differ.
inline ReconstructedTrace reconstruct_scanline(std::span<const SiteRecord> scanline,
                                               std::span<const double> evs_d,
                                               std::span<const double> evs_ueV,
                                               const ReconstructionOptions& options = {})
{
    std::vector<double> d, dg1, mean, evs;
    for (const auto& r : scanline) {
        if (r.dg1 && r.dg_mean) {
            d.push_back(r.d);
            dg1.push_back(*r.dg1);
            mean.push_back(*r.dg_mean);
            evs.push_back(interpolate_linear(evs_d, evs_ueV, r.d));
        }
    }
    require(d.size() >= 2, "reconstruct_scanline: fewer than 2 usable sites");
    const auto norm = normalize_dg(dg1, mean, options.normalize);
    const auto phi_raw = phi_from_c(norm.c);

    std::vector<int> fixed(d.size(), 0);
    std::vector<bool> ambiguous(d.size(), false);
    if (options.axis_tolerance > 0.0) {
        std::vector<std::size_t> keep;
        for (std::size_t j = 0; j < d.size(); ++j) {
            ambiguous[j] = 1.0 - std::abs(norm.c[j]) < options.axis_tolerance;
            if (!ambiguous[j]) {
                keep.push_back(j);
            }
        }
        if (keep.size() >= 2 && keep.size() < d.size()) {
            std::vector<double> sp, se, sd;
            for (auto j : keep) {
                sp.push_back(phi_raw[j]);
                se.push_back(evs[j]);
                sd.push_back(d[j]);
            }
            const auto sub = optimal_branch_signs(sp, se, options.cost, sd);
            for (std::size_t k = 0; k < keep.size(); ++k) {
                fixed[keep[k]] = sub[k];
            }
        } else {
            std::fill(ambiguous.begin(), ambiguous.end(), false);
        }
    }
    const auto signs = optimal_branch_signs(phi_raw, evs, options.cost, d, fixed);
    auto trace = make_trace(phi_raw, evs, signs);
    trace.cost = trace_cost(phi_raw, evs, signs, options.cost, d);
    trace.scale = norm.scale;
    for (std::size_t j = 0; j < trace.points.size(); ++j) {
        trace.points[j].d = d[j];
        trace.points[j].clamped = norm.clamped[j];
        trace.points[j].low_confidence = evs[j] < options.low_confidence_evs;
        trace.points[j].axis_ambiguous = ambiguous[j];
    }
    return trace;
}

/// Count of points per complex-plane quadrant (I..IV, counter-clockwise);
/// points on an axis go to the quadrant that follows it counter-clockwise.
inline std::array<std::size_t, 4> quadrant_occupancy(const ReconstructedTrace& trace)
{
    std::array<std::size_t, 4> q{};
    for (const auto& p : trace.points) {
        const auto& z = p.delta;
        const int k = z.re > 0.0 && z.im >= 0.0   ? 0
                      : z.re <= 0.0 && z.im > 0.0 ? 1
                      : z.re < 0.0 && z.im <= 0.0 ? 2
                                                  : 3;
        ++q[k];
    }
    return q;
}

} // namespace vgmap

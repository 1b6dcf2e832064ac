#pragma once

// Forward model of the tau_W sweep: singlet-return probability P_S(d, tau)
// for a mixture of ST oscillation frequencies, with Gaussian quasi-static
// dephasing, finite visibility and binomial shot noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "vgmap/errors.hpp"
#include "vgmap/field.hpp"
#include "vgmap/physics.hpp"
#include "vgmap/rng.hpp"

namespace vgmap {

inline std::vector<double> uniform_grid(double start, double stop, double step)
{
    require(step > 0.0 && stop >= start, "uniform_grid: need step > 0 and stop >= start");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) {
        g[k] = start + static_cast<double>(k) * step;
    }
    return g;
}

struct MeasurementPlan {
    double B = 1.7;                                     // T
    std::vector<double> tau_grid = uniform_grid(0.0, 500.0, 2.0);  // ns
    std::vector<double> d_grid;                         // nm
    int shots = 800;
    bool shot_noise = true;  // false: infinite-shot limit, raster = ideal P_S
    double t2_star = 300.0;  // ns; infinity disables dephasing
    double visibility = 0.8;
    double crosstalk_sigma = 0.0;  // std of Gaussian smearing of dg_s

    void validate() const
    {
        require(B >= 0.5 && B <= 3.0, "plan: B must lie in [0.5, 3] T");
        require(shots >= 1, "plan: shots must be >= 1");
        require(visibility > 0.0 && visibility <= 1.0, "plan: visibility must be in (0, 1]");
        require(t2_star > 0.0, "plan: t2_star must be > 0");
        require(crosstalk_sigma >= 0.0, "plan: crosstalk_sigma must be >= 0");
        require(!tau_grid.empty(), "plan: tau_grid must be non-empty");
    }
};

/// P_S(tau) = 1 - (v/2) sum_k w_k [1 - cos(2 pi f_k tau) exp(-(tau/T2*)^2)]
/// with f_k = st_frequency(B, dg_k).
inline double ideal_ps(std::span<const FrequencyComponent> components, double tau_ns,
                       const MeasurementPlan& plan)
{
    double wsum = 0.0;
    for (const auto& c : components) {
        wsum += c.weight;
    }
    require(std::abs(wsum - 1.0) < 1e-9, "ideal_ps: weights must sum to 1");
    const double x = tau_ns / plan.t2_star;
    const double envelope = std::isinf(plan.t2_star) ? 1.0 : std::exp(-x * x);
    double acc = 0.0;
    for (const auto& c : components) {
        const double f = st_frequency(plan.B, c.delta_g);
        acc += c.weight * (1.0 - std::cos(2.0 * std::numbers::pi * f * tau_ns * 1e-9) * envelope);
    }
    return std::clamp(1.0 - 0.5 * plan.visibility * acc, 0.0, 1.0);
}

/// Fraction of `shots` Bernoulli(p) outcomes that returned a singlet.
inline double sample_shots(double p, int shots, Rng& rng)
{
    int hits = 0;
    for (int s = 0; s < shots; ++s) {
        hits += rng.bernoulli(p) ? 1 : 0;
    }
    return static_cast<double>(hits) / shots;
}

/// One scanline measurement, P_S indexed by (d, tau) in row-major order.
struct PsRaster {
    std::vector<double> d_nm;
    std::vector<double> tau_ns;
    std::vector<double> values;
    double y_nm = 0.0;

    std::size_t rows() const noexcept { return d_nm.size(); }
    std::size_t cols() const noexcept { return tau_ns.size(); }

    std::span<const double> row(std::size_t i) const
    {
        return std::span<const double>(values).subspan(i * cols(), cols());
    }

    double at(std::size_t i, std::size_t k) const { return values.at(i * cols() + k); }

    void validate() const
    {
        require(values.size() == rows() * cols(), "raster: value count mismatch");
        for (double v : values) {
            require(v >= 0.0 && v <= 1.0, "raster: P_S outside [0, 1]");
        }
    }
};

/// Per-column ideal inputs, exposed so callers can compare extraction output
/// with the injected frequencies.
struct ColumnTruth {
    double d;
    double phi;
    double deviation;  // signed dg_s = dg_max cos(phi) + crosstalk offset
    std::array<FrequencyComponent, 2> components;
};

/// Column i uses its own RNG stream derived from (seed, i), so the result
/// does not depend on the order in which columns are processed.
inline std::vector<ColumnTruth> column_truth(std::span<const TracePoint> trace,
                                             const ScenarioConfig& scenario,
                                             const MeasurementPlan& plan, std::uint64_t seed)
{
    scenario.validate();
    plan.validate();
    require(trace.size() == plan.d_grid.size(), "synthesize: trace length does not match d_grid");
    std::vector<ColumnTruth> out;
    out.reserve(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        require(std::abs(trace[i].d - plan.d_grid[i]) <= 1e-9 * std::max(1.0, std::abs(plan.d_grid[i])),
                "synthesize: trace is not aligned with d_grid");
        const double phi = trace[i].delta.phase();
        double x = scenario.delta_g_max * std::cos(phi);
        if (plan.crosstalk_sigma > 0.0) {
            Rng rng(derive_seed(seed, 0x5157), i);
            x += plan.crosstalk_sigma * rng.normal();
        }
        out.push_back({trace[i].d, phi, x, valley_components(scenario, x)});
    }
    return out;
}

inline PsRaster synthesize_raster(std::span<const TracePoint> trace, const ScenarioConfig& scenario,
                                  const MeasurementPlan& plan, std::uint64_t seed, double y_nm = 0.0)
{
    const auto truth = column_truth(trace, scenario, plan, seed);
    PsRaster raster;
    raster.d_nm = plan.d_grid;
    raster.tau_ns = plan.tau_grid;
    raster.y_nm = y_nm;
    raster.values.resize(raster.rows() * raster.cols());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        Rng rng(seed, i);
        for (std::size_t k = 0; k < plan.tau_grid.size(); ++k) {
            const double p = ideal_ps(truth[i].components, plan.tau_grid[k], plan);
            raster.values[i * raster.cols() + k] =
                plan.shot_noise ? sample_shots(p, plan.shots, rng) : p;
        }
    }
    return raster;
}

} // namespace vgmap

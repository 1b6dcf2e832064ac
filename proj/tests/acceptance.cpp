// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
// below. Criteria listed with --known-failure N are still evaluated and
// printed; they only stop counting toward the exit status.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "vgmap/vgmap.hpp"

using namespace vgmap;

namespace {

constexpr double pi = std::numbers::pi;

// Pinned tolerances.
constexpr double kFreqRelTol = 1e-3;           // criterion 1
constexpr double kKsAlpha = 0.01;              // criteria 2
constexpr double kPaddedBinFraction = 0.1;     // criterion 3, noiseless
constexpr double kNoisyDgTol = 5e-5;           // criterion 3, noisy RMS
constexpr double kPearsonNoisy = -0.85;        // criterion 4
constexpr double kPearsonExactTol = 1e-6;      // criterion 4, noiseless
constexpr double kMeanStdFraction = 0.05;      // criterion 5
constexpr double kPhaseRms = 0.2;              // criterion 6, rad
constexpr double kMagnitudeTol = 1e-9;         // criterion 6, ueV
constexpr int kDpTraces = 200;                 // criterion 7
constexpr double kSmearFraction = 0.2;         // criterion 8
constexpr double kChiAlpha = 0.01;             // criterion 8
constexpr int kEnsembleFields = 100;           // criterion 9
constexpr double kDeepThresholdSigma = 0.2;    // criterion 9
constexpr double kJumpRad = 1.0;               // criterion 9
constexpr double kJumpFraction = 0.5;          // criterion 9

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args)
{
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome physics_identities()
{
    bool exact = true;
    for (int k = 0; k <= 720; ++k) {
        const double phi = -pi + k * (2.0 * pi / 720.0);
        const auto g = g_factors(phi, 2.0, 1.5e-3);
        exact = exact && g.g_plus + g.g_minus == 4.0;
        const auto d = ComplexCoupling::from_polar(3.0 + k * 0.01, phi);
        exact = exact && evs_from_delta(d) == 2.0 * d.magnitude();
    }
    const double f = st_frequency(1.7, 1e-3);
    const double rel = std::abs(f / 23.794e6 - 1.0);
    return {exact && rel <= kFreqRelTol,
            fmt("identities exact=%s, f(1.7 T, 1e-3) = %.6f MHz (rel dev %.2e)", exact ? "yes" : "no", f / 1e6, rel)};
}

Outcome field_statistics()
{
    // sigma = 1, l = 20 nm; nodes every 5 nm, samples every 60 nm (3 l, correlation 0.011).
    std::vector<double> evs, c;
    for (std::uint64_t seed = 1; evs.size() < 10000; ++seed) {
        FieldParams p;
        p.sigma = 1.0;
        p.corr_length = 20.0;
        p.grid_step = 5.0;
        p.extent_d = 6000.0;
        p.extent_y = 600.0;
        p.origin_y = 0.0;
        p.seed = 1000 + seed;
        const auto f = generate_field(p);
        for (std::size_t i = 0; i < f.nodes_d() && evs.size() < 10000; i += 12) {
            for (std::size_t j = 0; j < f.nodes_y() && evs.size() < 10000; j += 12) {
                const auto& v = f.at(i, j);
                evs.push_back(evs_from_delta(v));
                c.push_back(std::cos(v.phase()));
            }
        }
    }
    const auto ray = stats::ks_test(evs, [](double x) { return stats::rayleigh_cdf(x, 2.0); });
    const auto arc = stats::ks_test(c, [](double x) { return stats::arcsine_cdf(x, -1.0, 1.0); });
    return {ray.pvalue > kKsAlpha && arc.pvalue > kKsAlpha,
            fmt("n = %zu, Rayleigh KS D = %.4f p = %.3f, arcsine KS D = %.4f p = %.3f", evs.size(), ray.statistic,
                ray.pvalue, arc.statistic, arc.pvalue)};
}

struct DgErrors {
    double noiseless_max_bins = 0.0;  // worst error in padded bins
    std::size_t noiseless_n = 0;
    double noisy_rms = 0.0;
    double noisy_max = 0.0;
    std::size_t noisy_n = 0;
};

// Errors of both extracted components at sites whose true components are at
// least two native bins apart (resolvable by the spectrum).
void score_extraction(const RoundtripResult& r, const RunConfig& cfg, bool noisy, DgErrors& e)
{
    const auto plan = cfg.measurement_plan();
    const auto spec = column_spectrum(r.lines.front().raster.row(0), plan.tau_grid, plan.B, cfg.extraction.spectrum);
    const double native = spec.padded_bin * cfg.extraction.spectrum.pad_factor;
    double ss = 0.0;
    std::size_t idx = 0;
    for (const auto& line : r.lines) {
        for (const auto& t : line.truth) {
            const auto& p = r.peaks[idx++];
            const double a = t.components[0].delta_g, b = t.components[1].delta_g;
            if (std::abs(a - b) < 2.0 * native || p.peaks.size() != 2) {
                continue;
            }
            for (const auto& [got, want] : {std::pair{p.peaks[0].delta_g, a}, std::pair{p.peaks[1].delta_g, b}}) {
                const double err = std::abs(got - want);
                if (noisy) {
                    ss += err * err;
                    e.noisy_max = std::max(e.noisy_max, err);
                    ++e.noisy_n;
                } else {
                    e.noiseless_max_bins = std::max(e.noiseless_max_bins, err / spec.padded_bin);
                    ++e.noiseless_n;
                }
            }
        }
    }
    if (noisy && e.noisy_n > 0) {
        e.noisy_rms = std::sqrt(ss / static_cast<double>(e.noisy_n));
    }
}

Outcome mean_constancy(const RoundtripResult& r, double delta_g_i)
{
    double worst = 0.0;
    for (double y : r.map.scanline_ys()) {
        std::vector<double> m;
        for (const auto& s : r.map.scanline(y)) {
            if (s.dg_mean && !s.mean_extrapolated) {
                m.push_back(*s.dg_mean);
            }
        }
        if (m.size() >= 2) {
            worst = std::max(worst, stats::stddev(m));
        }
    }
    return {worst < kMeanStdFraction * delta_g_i,
            fmt("worst scanline std of the mean %.3e = %.2f%% of dg_i", worst, 100.0 * worst / delta_g_i)};
}

Outcome dp_optimality()
{
    Rng rng(777);
    const BranchCost w;
    int mismatches = 0;
    for (int rep = 0; rep < kDpTraces; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 11.0);
        std::vector<double> phi(n), evs(n);
        for (std::size_t k = 0; k < n; ++k) {
            phi[k] = pi * rng.uniform();
            evs[k] = 0.5 + 20.0 * rng.uniform();
        }
        const auto t = disambiguate_branch(phi, evs, w);
        double best = std::numeric_limits<double>::infinity();
        std::vector<int> s(n);
        for (std::size_t code = 0; code < (std::size_t{1} << n); ++code) {
            for (std::size_t k = 0; k < n; ++k) {
                s[k] = ((code >> k) & 1) ? -1 : 1;
            }
            best = std::min(best, trace_cost(phi, evs, s, w));
        }
        mismatches += t.cost != best;
    }
    return {mismatches == 0, fmt("%d random traces (n <= 12), %d cost mismatches", kDpTraces, mismatches)};
}

Outcome smoothing()
{
    const ScenarioConfig sc;
    Rng rng(31);
    std::vector<double> x(20000);
    for (auto& v : x) {
        v = sc.delta_g_i + sc.delta_g_max * std::cos(2.0 * pi * rng.uniform());
    }
    const auto none = stats::smoothing_clustering(x, 0.0);
    const auto chi = stats::chi_square_uniform(none.phi_histogram.counts);
    const auto sm = stats::smoothing_clustering(x, kSmearFraction * sc.delta_g_max);
    const auto& h = sm.phi_histogram;
    // Inside: not in the outermost bins; near the endpoints: in the outer
    // three eighths of [0, pi].
    const bool inside = sm.low_mode > h.center(0) && sm.high_mode < h.center(h.counts.size() - 1);
    const bool near = sm.low_mode < 3.0 * pi / 8.0 && sm.high_mode > 5.0 * pi / 8.0;
    return {chi.pvalue > kChiAlpha && inside && near,
            fmt("no smear: chi2 p = %.3f; smear 0.2 dg_max: modes %.3f, %.3f rad", chi.pvalue, sm.low_mode,
                sm.high_mode)};
}

Outcome deep_minima_ensemble()
{
    std::size_t total = 0, jumps = 0;
    for (int s = 0; s < kEnsembleFields; ++s) {
        FieldParams p;
        p.seed = 5000 + static_cast<std::uint64_t>(s);
        const auto f = generate_field(p);
        for (std::size_t j = 0; j < f.nodes_y(); j += 4) {
            std::vector<ComplexCoupling> row;
            for (std::size_t i = 0; i < f.nodes_d(); ++i) {
                row.push_back(f.at(i, j));
            }
            for (const auto& m : deep_minima(row, kDeepThresholdSigma * p.sigma)) {
                ++total;
                jumps += m.phase_jump > kJumpRad;
            }
        }
    }
    const double frac = total > 0 ? static_cast<double>(jumps) / static_cast<double>(total) : 0.0;
    return {frac > kJumpFraction, fmt("%zu deep minima, %.1f%% with jump > 1 rad", total, 100.0 * frac)};
}

std::string output_digest(const RoundtripResult& r)
{
    std::vector<PsRaster> rasters;
    for (const auto& l : r.lines) {
        rasters.push_back(l.raster);
    }
    std::string all;
    for (const auto& text : {io::field_csv(r.field), io::raster_csv(rasters), io::evs_csv(evs_samples(r.lines)),
                             io::peaks_csv(r.peaks), io::gmap_csv(r.map), io::traces_csv(r.traces),
                             r.report.dump(2)}) {
        all += sha256_hex(text);
    }
    return sha256_hex(all);
}

} // namespace

int main(int argc, char** argv)
{
    std::set<int> known;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--known-failure") == 0 && i + 1 < argc) {
            known.insert(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: acceptance [--known-failure N]...\n");
            return 1;
        }
    }

    int unexpected = 0, known_failed = 0;
    const auto report = [&](int id, const char* name, const Outcome& o, double secs) {
        const char* tag = o.pass ? "PASS" : (known.count(id) ? "FAIL (known)" : "FAIL");
        std::printf("[%s] %2d %-28s %s (%.1f s)\n", tag, id, name, o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) {
            (known.count(id) ? known_failed : unexpected) += 1;
        }
    };
    const auto timed = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto o = fn();
        report(id, name, o, seconds_since(t0));
    };

    timed(1, "physics identities", physics_identities);
    timed(2, "field statistics", field_statistics);

    // Default-parameter runs shared by criteria 3 to 6.
    const RunConfig noisy_cfg;
    auto clean_cfg = noisy_cfg;
    clean_cfg.plan.shot_noise = false;
    auto t0 = std::chrono::steady_clock::now();
    const auto noisy = roundtrip(noisy_cfg);
    const double noisy_secs = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const auto clean = roundtrip(clean_cfg);
    const double clean_secs = seconds_since(t0);

    DgErrors e;
    score_extraction(clean, clean_cfg, false, e);
    score_extraction(noisy, noisy_cfg, true, e);
    report(3, "extraction accuracy",
           {e.noiseless_n > 0 && e.noisy_n > 0 && e.noiseless_max_bins <= kPaddedBinFraction &&
                e.noisy_rms < kNoisyDgTol,
            fmt("noiseless worst %.2e padded bins (%zu peaks); 800 shots RMS %.2e, max %.2e (%zu peaks)",
                e.noiseless_max_bins, e.noiseless_n, e.noisy_rms, e.noisy_max, e.noisy_n)},
           noisy_secs + clean_secs);

    const double r_noisy = noisy.pearson_r.value_or(0.0);
    const double r_clean = clean.pearson_r.value_or(0.0);
    report(4, "anti-correlation",
           {noisy.pearson_r && clean.pearson_r && r_noisy <= kPearsonNoisy &&
                std::abs(r_clean + 1.0) <= kPearsonExactTol,
            fmt("800 shots r = %.6f; noiseless r = %.9f", r_noisy, r_clean)},
           0.0);
    report(5, "mean constancy", mean_constancy(noisy, noisy_cfg.scenario.delta_g_i), 0.0);

    std::string per;
    for (double v : noisy.phases.per_scanline) {
        per += fmt("%.3f ", v);
    }
    report(6, "round-trip reconstruction",
           {noisy.phases.scored > 0 && noisy.phases.rms < kPhaseRms &&
                noisy.phases.magnitude_max_error <= kMagnitudeTol,
            fmt("phase RMS %.3f rad over %zu points (per scanline: %s), |Delta| max error %.1e ueV",
                noisy.phases.rms, noisy.phases.scored, per.c_str(), noisy.phases.magnitude_max_error)},
           noisy_secs);

    timed(7, "DP optimality", dp_optimality);
    timed(8, "smoothing clustering", smoothing);
    timed(9, "deep minima / phase jumps", deep_minima_ensemble);
    timed(10, "determinism", [&] {
        const auto a = output_digest(roundtrip(noisy_cfg));
        const auto b = output_digest(roundtrip(noisy_cfg));
        const auto c = output_digest(noisy);
        return Outcome{a == b && b == c, "output digest " + a.substr(0, 16) + (a == b && b == c ? " x3" : " differs")};
    });

    std::printf("%d unexpected failure(s), %d known failure(s)\n", unexpected, known_failed);
    return unexpected == 0 ? 0 : 1;
}

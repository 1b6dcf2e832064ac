#pragma once

// Estimators behind the statistical checks: Pearson correlation, histogram
// and boxplot summaries, distribution fits (Gaussian, Rayleigh, Rician,
// arcsine) with Kolmogorov-Smirnov goodness of fit, and the phase
// clustering that appears when a bimodal Delta-g distribution is smeared.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "vgmap/errors.hpp"
#include "vgmap/reconstruction.hpp"
#include "vgmap/rng.hpp"

namespace vgmap::stats {

inline double mean(std::span<const double> x)
{
    require(!x.empty(), "mean: empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(std::span<const double> x)
{
    require(x.size() >= 2, "stddev: need at least 2 samples");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) {
        ss += (v - m) * (v - m);
    }
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline double pearson(std::span<const double> x, std::span<const double> y)
{
    require(x.size() == y.size(), "pearson: length mismatch");
    require(x.size() >= 2, "pearson: need at least 2 points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = x[k] - mx, dy = y[k] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) {
        throw ValidationError("pearson: degenerate variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson(std::span<const std::pair<double, double>> pairs)
{
    std::vector<double> x, y;
    x.reserve(pairs.size());
    y.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
        x.push_back(a);
        y.push_back(b);
    }
    return pearson(x, y);
}

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double p)
{
    require(!sorted.empty(), "quantile: empty sample");
    require(p >= 0.0 && p <= 1.0, "quantile: p must be in [0, 1]");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> x, double p)
{
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    return quantile_sorted(s, p);
}

struct BoxplotSummary {
    double q1, median, q3, mean;
    double whisker_low;   // 5th percentile
    double whisker_high;  // 95th percentile
    std::vector<double> outliers;
};

inline BoxplotSummary boxplot_summary(std::span<const double> x)
{
    require(!x.empty(), "boxplot_summary: empty sample");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    BoxplotSummary b{quantile_sorted(s, 0.25), quantile_sorted(s, 0.5), quantile_sorted(s, 0.75),
                     stats::mean(s),           quantile_sorted(s, 0.05), quantile_sorted(s, 0.95),
                     {}};
    for (double v : s) {
        if (v < b.whisker_low || v > b.whisker_high) {
            b.outliers.push_back(v);
        }
    }
    return b;
}

struct Histogram {
    std::vector<double> edges;  // bins + 1
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    double width(std::size_t k) const { return edges[k + 1] - edges[k]; }
    double center(std::size_t k) const { return 0.5 * (edges[k] + edges[k + 1]); }
    double density(std::size_t k) const
    {
        return static_cast<double>(counts[k]) / (static_cast<double>(total) * width(k));
    }
};

/// Fixed bins on [lo, hi]; samples outside are dropped, hi is included.
inline Histogram histogram(std::span<const double> x, std::size_t bins, double lo, double hi)
{
    require(bins >= 1, "histogram: need at least one bin");
    require(hi > lo, "histogram: empty range");
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t k = 0; k <= bins; ++k) {
        h.edges[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
    }
    h.counts.assign(bins, 0);
    for (double v : x) {
        if (v < lo || v > hi) {
            continue;
        }
        auto k = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        ++h.counts[std::min(k, bins - 1)];
    }
    h.total = std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0});
    return h;
}

/// Freedman-Diaconis bin count over the sample range.
inline std::size_t freedman_diaconis_bins(std::span<const double> x)
{
    require(x.size() >= 2, "freedman_diaconis: need at least 2 samples");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    const double range = s.back() - s.front();
    if (!(iqr > 0.0) || !(range > 0.0)) {
        return 1;
    }
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(s.size()));
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(range / width)));
}

inline Histogram histogram(std::span<const double> x)
{
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    require(*hi > *lo, "histogram: constant sample");
    return histogram(x, freedman_diaconis_bins(x), *lo, *hi);
}

/// Asymptotic Kolmogorov survival function with the Stephens small-n
/// correction, lambda = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D.
inline double kolmogorov_pvalue(double statistic, std::size_t n)
{
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    if (lambda < 1e-3) {
        return 1.0;
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) {
            break;
        }
    }
    return std::clamp(sum, 0.0, 1.0);
}

struct KsResult {
    double statistic;
    double pvalue;
};

inline KsResult ks_test(std::span<const double> x, const std::function<double(double)>& cdf)
{
    require(!x.empty(), "ks_test: empty sample");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = cdf(s[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, kolmogorov_pvalue(d, s.size())};
}

inline double normal_cdf(double x, double mu, double sigma)
{
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

inline double rayleigh_cdf(double x, double scale)
{
    return x <= 0.0 ? 0.0 : 1.0 - std::exp(-x * x / (2.0 * scale * scale));
}

/// P(|X| <= x) for X complex Gaussian with |mean| = nu and per-quadrature
/// std sigma, via the noncentral chi-square with 2 degrees of freedom.
inline double rician_cdf(double x, double nu, double sigma)
{
    if (x <= 0.0) {
        return 0.0;
    }
    const double t = x * x / (sigma * sigma);
    if (nu <= 0.0) {
        return 1.0 - std::exp(-0.5 * t);
    }
    const boost::math::non_central_chi_squared dist(2.0, nu * nu / (sigma * sigma));
    return boost::math::cdf(dist, t);
}

/// Arcsine law on [a, b]; for [-1, 1] the density is 1 / (pi sqrt(1 - c^2)).
inline double arcsine_cdf(double x, double a, double b)
{
    if (x <= a) {
        return 0.0;
    }
    if (x >= b) {
        return 1.0;
    }
    return 2.0 / std::numbers::pi * std::asin(std::sqrt((x - a) / (b - a)));
}

inline double arcsine_pdf(double c)
{
    return 1.0 / (std::numbers::pi * std::sqrt(1.0 - c * c));
}

enum class DistributionKind { Gaussian, Rayleigh, Rician, Arcsine };

inline const char* to_string(DistributionKind k)
{
    switch (k) {
    case DistributionKind::Gaussian: return "gaussian";
    case DistributionKind::Rayleigh: return "rayleigh";
    case DistributionKind::Rician: return "rician";
    case DistributionKind::Arcsine: return "arcsine";
    }
    return "unknown";
}

struct DistributionFit {
    DistributionKind kind;
    std::map<std::string, double> params;
    double ks_statistic = 0.0;
    double ks_pvalue = 0.0;
    // KS p-values against fitted parameters are approximate.
    bool pvalue_approximate = true;
    std::size_t n = 0;
    std::string note;
};

namespace detail {

// Solves the 3x3 system A x = b by Gaussian elimination with partial pivoting.
inline bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b,
                   std::array<double, 3>& x)
{
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) {
                piv = r;
            }
        }
        if (std::abs(a[piv][col]) < 1e-300) {
            return false;
        }
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 3; ++c) {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    for (int r = 2; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < 3; ++c) {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    return true;
}

struct GaussianCurve {
    double amplitude, mu, sigma;
};

// Levenberg-Marquardt least squares of A exp(-(x - mu)^2 / (2 s^2)) to the
// histogram densities.
inline GaussianCurve fit_gaussian_curve(const Histogram& h, GaussianCurve start)
{
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        xs.push_back(h.center(k));
        ys.push_back(h.density(k));
    }
    auto residual_ss = [&](const GaussianCurve& g) {
        double ss = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const double z = (xs[k] - g.mu) / g.sigma;
            const double r = ys[k] - g.amplitude * std::exp(-0.5 * z * z);
            ss += r * r;
        }
        return ss;
    };
    GaussianCurve g = start;
    double lambda = 1e-3;
    double current = residual_ss(g);
    for (int iter = 0; iter < 200; ++iter) {
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const double z = (xs[k] - g.mu) / g.sigma;
            const double e = std::exp(-0.5 * z * z);
            const double model = g.amplitude * e;
            const std::array<double, 3> jac{e, model * z / g.sigma, model * z * z / g.sigma};
            const double r = ys[k] - model;
            for (int i = 0; i < 3; ++i) {
                jtr[i] += jac[i] * r;
                for (int j = 0; j < 3; ++j) {
                    jtj[i][j] += jac[i] * jac[j];
                }
            }
        }
        bool improved = false;
        for (int attempt = 0; attempt < 20 && !improved; ++attempt) {
            auto damped = jtj;
            for (int i = 0; i < 3; ++i) {
                damped[i][i] *= 1.0 + lambda;
            }
            std::array<double, 3> step{};
            if (!solve3(damped, jtr, step)) {
                lambda *= 10.0;
                continue;
            }
            GaussianCurve trial{g.amplitude + step[0], g.mu + step[1], std::abs(g.sigma + step[2])};
            const double ss = trial.sigma > 0.0 ? residual_ss(trial) : current;
            if (ss < current) {
                const double rel = (current - ss) / std::max(current, 1e-300);
                g = trial;
                current = ss;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (rel < 1e-12) {
                    return g;
                }
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved) {
            break;
        }
    }
    return g;
}

inline double log_bessel_i0(double z)
{
    if (z < 500.0) {
        return std::log(std::cyl_bessel_i(0.0, z));
    }
    return z - 0.5 * std::log(2.0 * std::numbers::pi * z) + std::log1p(1.0 / (8.0 * z));
}

} // namespace detail

inline constexpr std::size_t kMinFitSamples = 20;

inline DistributionFit fit_distribution(std::span<const double> x, DistributionKind kind)
{
    require(x.size() >= kMinFitSamples, "fit_distribution: need at least 20 samples");
    DistributionFit fit;
    fit.kind = kind;
    fit.n = x.size();
    const double n = static_cast<double>(x.size());

    switch (kind) {
    case DistributionKind::Gaussian: {
        const double m = mean(x);
        const double s = stddev(x);
        require(s > 0.0, "fit_distribution: constant sample");
        const auto h = histogram(x);
        const double peak = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
        const auto g = detail::fit_gaussian_curve(h, {peak, m, s});
        fit.params = {{"mu", g.mu},
                      {"sigma", g.sigma},
                      {"amplitude", g.amplitude},
                      {"mu_moments", m},
                      {"sigma_moments", s},
                      {"mu_stderr", s / std::sqrt(n)},
                      {"sigma_stderr", s / std::sqrt(2.0 * (n - 1.0))}};
        const auto ks = ks_test(x, [&](double v) { return normal_cdf(v, g.mu, g.sigma); });
        fit.ks_statistic = ks.statistic;
        fit.ks_pvalue = ks.pvalue;
        break;
    }
    case DistributionKind::Rayleigh: {
        double ss = 0.0;
        for (double v : x) {
            require(v >= 0.0, "fit_distribution: Rayleigh samples must be >= 0");
            ss += v * v;
        }
        const double scale = std::sqrt(ss / (2.0 * n));
        require(scale > 0.0, "fit_distribution: all-zero sample");
        fit.params = {{"scale", scale}};
        const auto ks = ks_test(x, [&](double v) { return rayleigh_cdf(v, scale); });
        fit.ks_statistic = ks.statistic;
        fit.ks_pvalue = ks.pvalue;
        break;
    }
    case DistributionKind::Rician: {
        double s2 = 0.0;
        for (double v : x) {
            require(v >= 0.0, "fit_distribution: Rician samples must be >= 0");
            s2 += v * v;
        }
        const double m2 = s2 / n;
        require(m2 > 0.0, "fit_distribution: all-zero sample");
        // At the maximum of the likelihood 2 s^2 = <x^2> - nu^2, so the global
        // maximum is the maximum along that curve: a 1-d search in nu. A grid
        // scan brackets it and Brent's method polishes; the fixed-point
        // iteration of the likelihood equations stalls near nu = 0.
        const double nu_max = std::sqrt(m2) * (1.0 - 1e-9);
        const auto neg_loglik = [&](double nu) {
            const double var = 0.5 * (m2 - nu * nu);
            double ll = 0.0;
            for (double v : x) {
                ll += -std::log(var) - (v * v + nu * nu) / (2.0 * var) + detail::log_bessel_i0(v * nu / var);
            }
            return -ll;
        };
        constexpr int kGrid = 200;
        int best_k = 0;
        double best_v = std::numeric_limits<double>::infinity();
        for (int k = 0; k < kGrid; ++k) {
            const double v = neg_loglik(nu_max * k / kGrid);
            if (v < best_v) {
                best_v = v;
                best_k = k;
            }
        }
        const double lo = nu_max * std::max(0, best_k - 1) / kGrid;
        const double hi = nu_max * std::min(kGrid, best_k + 1) / kGrid;
        const auto [nu, nll] = boost::math::tools::brent_find_minima(neg_loglik, lo, hi, 52);
        (void)nll;
        const double var = 0.5 * (m2 - nu * nu);
        const double sigma = std::sqrt(var);
        fit.params = {{"nu", nu}, {"sigma", sigma}};
        if (nu < 0.1 * sigma) {
            fit.note = "nu below 0.1 sigma: consistent with Rayleigh";
        }
        const auto ks = ks_test(x, [&](double v) { return rician_cdf(v, nu, sigma); });
        fit.ks_statistic = ks.statistic;
        fit.ks_pvalue = ks.pvalue;
        break;
    }
    case DistributionKind::Arcsine: {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        require(*hi > *lo, "fit_distribution: constant sample");
        fit.params = {{"a", *lo}, {"b", *hi}};
        const double a = *lo, b = *hi;
        const auto ks = ks_test(x, [&](double v) { return arcsine_cdf(v, a, b); });
        fit.ks_statistic = ks.statistic;
        fit.ks_pvalue = ks.pvalue;
        break;
    }
    }
    return fit;
}

struct ChiSquareResult {
    double statistic;
    std::size_t dof;
    double pvalue;
};

/// Pearson chi-square of histogram counts against equal expected counts.
inline ChiSquareResult chi_square_uniform(std::span<const std::size_t> counts)
{
    require(counts.size() >= 2, "chi_square_uniform: need at least 2 bins");
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    require(total > 0.0, "chi_square_uniform: empty histogram");
    const double expected = total / static_cast<double>(counts.size());
    double chi2 = 0.0;
    for (auto c : counts) {
        const double d = static_cast<double>(c) - expected;
        chi2 += d * d / expected;
    }
    const std::size_t dof = counts.size() - 1;
    const boost::math::chi_squared dist(static_cast<double>(dof));
    return {chi2, dof, boost::math::cdf(boost::math::complement(dist, chi2))};
}

struct PhiClustering {
    Histogram phi_histogram;  // on [0, pi]
    double scale = 0.0;       // normalization scale of the smeared sample
    double low_mode = 0.0;    // bin center of the maximum on [0, pi/2)
    double high_mode = 0.0;   // bin center of the maximum on [pi/2, pi]
};

struct SmoothingOptions {
    std::size_t bins = 30;
    std::uint64_t seed = 7;
};

/// Smears each Delta-g sample with N(0, smear_sigma^2), rescales the result
/// onto [-1, 1] (min -> -1, max -> +1, i.e. normalize_dg about the midrange)
/// and histograms phi = arccos(c).
inline PhiClustering smoothing_clustering(std::span<const double> delta_g, double smear_sigma,
                                          const SmoothingOptions& options = {})
{
    require(smear_sigma >= 0.0, "smoothing_clustering: smear_sigma must be >= 0");
    require(delta_g.size() >= 2, "smoothing_clustering: need at least 2 samples");
    Rng rng(options.seed, 0x534D);
    std::vector<double> smeared(delta_g.begin(), delta_g.end());
    if (smear_sigma > 0.0) {
        for (auto& v : smeared) {
            v += smear_sigma * rng.normal();
        }
    }
    const auto [lo, hi] = std::minmax_element(smeared.begin(), smeared.end());
    const double mid = 0.5 * (*lo + *hi);
    const std::array<double, 1> center{mid};
    const auto norm = normalize_dg(smeared, center);
    const auto phi = phi_from_c(norm.c);

    PhiClustering out;
    out.scale = norm.scale;
    out.phi_histogram = histogram(phi, options.bins, 0.0, std::numbers::pi);
    const auto& h = out.phi_histogram;
    const std::size_t half = options.bins / 2;
    const auto low = std::max_element(h.counts.begin(), h.counts.begin() + static_cast<std::ptrdiff_t>(half));
    const auto high = std::max_element(h.counts.begin() + static_cast<std::ptrdiff_t>(half), h.counts.end());
    out.low_mode = h.center(static_cast<std::size_t>(low - h.counts.begin()));
    out.high_mode = h.center(static_cast<std::size_t>(high - h.counts.begin()));
    return out;
}

} // namespace vgmap::stats

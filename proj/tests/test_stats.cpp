#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "vgmap/rng.hpp"
#include "vgmap/stats.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace vgmap;
using namespace vgmap::stats;

constexpr double pi = std::numbers::pi;

namespace {

// Deterministic Box-Muller samples from two golden-ratio sequences; the same
// construction is used by tests/oracles/stats_oracle.py.
struct Samples {
    std::vector<double> gauss, rice, ray;
};

Samples oracle_samples()
{
    Samples s;
    for (int k = 0; k < 400; ++k) {
        const double u1 = std::fmod(0.5 + k * 0.6180339887498949, 1.0);
        const double u2 = std::fmod(0.5 + k * 0.7548776662466927, 1.0);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double zr = r * std::cos(2.0 * pi * u2), zi = r * std::sin(2.0 * pi * u2);
        s.gauss.push_back(1.5 + 0.7 * zr);
        s.rice.push_back(std::hypot(3.0 + 1.2 * zr, 1.2 * zi));
        s.ray.push_back(std::hypot(2.0 * zr, 2.0 * zi));
    }
    return s;
}

std::vector<double> arcsine_dg(std::size_t n, std::uint64_t seed)
{
    Rng r(seed);
    std::vector<double> x(n);
    for (auto& v : x) {
        v = 2e-3 + 1.5e-3 * std::cos(2.0 * pi * r.uniform());
    }
    return x;
}

} // namespace

TEST_CASE("quantiles use linear interpolation between order statistics", "[stats]")
{
    const std::vector<double> x{3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5};
    CHECK(quantile(x, 0.0) == 1.0);
    CHECK(quantile(x, 0.05) == 1.0);
    CHECK(quantile(x, 0.25) == 2.5);
    CHECK(quantile(x, 0.5) == 4.0);
    CHECK(quantile(x, 0.75) == 5.0);
    CHECK_THAT(quantile(x, 0.95), WithinAbs(7.5, 1e-12));
    CHECK(quantile(x, 1.0) == 9.0);
    CHECK_THROWS_AS(quantile(x, 1.5), ValidationError);
    CHECK_THROWS_AS(quantile(std::vector<double>{}, 0.5), ValidationError);
}

TEST_CASE("boxplot summary agrees with a sort-based oracle", "[stats][property]")
{
    Rng r(5);
    for (std::size_t n : {1u, 2u, 7u, 100u, 1001u}) {
        std::vector<double> x(n);
        for (auto& v : x) {
            v = r.normal();
        }
        std::vector<double> s = x;
        std::sort(s.begin(), s.end());
        const auto at = [&](double p) {
            const double pos = p * static_cast<double>(n - 1);
            const auto lo = static_cast<std::size_t>(pos);
            const auto hi = std::min(lo + 1, n - 1);
            return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
        };
        const auto b = boxplot_summary(x);
        CHECK(b.q1 == at(0.25));
        CHECK(b.median == at(0.5));
        CHECK(b.q3 == at(0.75));
        CHECK(b.whisker_low == at(0.05));
        CHECK(b.whisker_high == at(0.95));
        std::size_t outside = 0;
        for (double v : s) {
            outside += v < b.whisker_low || v > b.whisker_high;
        }
        CHECK(b.outliers.size() == outside);
    }
}

TEST_CASE("pearson: reference value and affine properties", "[stats][property]")
{
    const auto s = oracle_samples();
    CHECK_THAT(pearson(s.gauss, s.rice), WithinAbs(0.9534760225880338, 1e-12));

    std::vector<double> a = s.gauss, neg = s.rice;
    for (auto& v : a) {
        v = 3.0 * v - 7.0;
    }
    for (auto& v : neg) {
        v = -v;
    }
    CHECK_THAT(pearson(a, s.rice), WithinAbs(0.9534760225880338, 1e-12));
    CHECK_THAT(pearson(s.gauss, neg), WithinAbs(-0.9534760225880338, 1e-12));
    CHECK(pearson(s.gauss, s.gauss) == 1.0);

    const std::vector<double> flat(5, 1.0), line{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(pearson(flat, line), ValidationError);
    CHECK_THROWS_AS(pearson(line, std::vector<double>{1, 2}), ValidationError);
}

TEST_CASE("histogram binning", "[stats]")
{
    const auto s = oracle_samples();
    CHECK(freedman_diaconis_bins(s.gauss) == 17);
    const auto h = histogram(s.gauss);
    CHECK(h.counts.size() == 17);
    CHECK(h.total == s.gauss.size());

    const std::vector<double> x{0.0, 0.5, 1.0, 1.0, 2.0, -1.0};
    const auto f = histogram(x, 2, 0.0, 1.0);
    CHECK(f.counts == std::vector<std::size_t>{1, 3});
    CHECK(f.total == 4);
    CHECK(f.density(1) == 1.5);
    CHECK(freedman_diaconis_bins(std::vector<double>{2.0, 2.0, 2.0}) == 1);
    CHECK_THROWS_AS(histogram(std::vector<double>{2.0, 2.0}), ValidationError);
}

TEST_CASE("distribution functions against scipy", "[stats]")
{
    // lambda = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D; pick D so lambda hits the reference points.
    const std::size_t n = 100;
    const double scale = 10.0 + 0.12 + 0.011;
    CHECK_THAT(kolmogorov_pvalue(0.5 / scale, n), WithinAbs(0.9639452436648751, 1e-12));
    CHECK_THAT(kolmogorov_pvalue(1.0 / scale, n), WithinAbs(0.26999967167735456, 1e-12));
    CHECK_THAT(kolmogorov_pvalue(1.36 / scale, n), WithinAbs(0.049485876755377876, 1e-12));

    CHECK_THAT(rician_cdf(0.5, 3.0, 1.2), WithinRel(0.004163856204212769, 1e-9));
    CHECK_THAT(rician_cdf(2.0, 3.0, 1.2), WithinRel(0.13815548417342288, 1e-9));
    CHECK_THAT(rician_cdf(3.5, 3.0, 1.2), WithinRel(0.5898609398572433, 1e-9));
    CHECK_THAT(rician_cdf(6.0, 3.0, 1.2), WithinRel(0.990853476885017, 1e-9));
    CHECK_THAT(rician_cdf(1.3, 0.0, 0.8), WithinRel(rayleigh_cdf(1.3, 0.8), 1e-14));
    CHECK(rician_cdf(-1.0, 3.0, 1.2) == 0.0);
    CHECK_THAT(arcsine_cdf(0.3, -1.0, 1.0), WithinAbs(0.5969866840206784, 1e-14));
    CHECK(arcsine_cdf(-2.0, -1.0, 1.0) == 0.0);
    CHECK(arcsine_cdf(1.0, -1.0, 1.0) == 1.0);
    CHECK_THAT(arcsine_pdf(0.0), WithinAbs(1.0 / pi, 1e-15));
    CHECK_THAT(normal_cdf(1.0, 0.0, 1.0), WithinAbs(0.8413447460685429, 1e-14));
}

TEST_CASE("KS statistic against scipy", "[stats]")
{
    const auto s = oracle_samples();
    const auto ks = ks_test(s.gauss, [](double v) { return normal_cdf(v, 1.5, 0.7); });
    CHECK_THAT(ks.statistic, WithinAbs(0.021630218101195697, 1e-12));
    CHECK(ks.pvalue > 0.9);
}

TEST_CASE("distribution fits against scipy", "[stats]")
{
    const auto s = oracle_samples();
    const auto ray = fit_distribution(s.ray, DistributionKind::Rayleigh);
    CHECK_THAT(ray.params.at("scale"), WithinRel(2.0127254028552586, 1e-12));
    CHECK(ray.ks_pvalue > 0.01);
    CHECK(ray.pvalue_approximate);

    // scipy's generic MLE optimizer converges to about 1e-5.
    const auto rice = fit_distribution(s.rice, DistributionKind::Rician);
    CHECK_THAT(rice.params.at("nu"), WithinRel(3.015686300282951, 1e-4));
    CHECK_THAT(rice.params.at("sigma"), WithinRel(1.2150719384400555, 1e-4));
    CHECK(rice.note.empty());

    const auto ray_as_rice = fit_distribution(s.ray, DistributionKind::Rician);
    CHECK(!ray_as_rice.note.empty());

    const auto g = fit_distribution(s.gauss, DistributionKind::Gaussian);
    CHECK_THAT(g.params.at("amplitude"), WithinRel(0.5595602714891195, 1e-6));
    CHECK_THAT(g.params.at("mu"), WithinRel(1.506031407509945, 1e-6));
    CHECK_THAT(g.params.at("sigma"), WithinRel(0.7167131687088724, 1e-6));

    CHECK_THROWS_AS(fit_distribution(std::vector<double>(5, 1.0), DistributionKind::Gaussian), ValidationError);
    std::vector<double> negative = s.ray;
    negative[3] = -1.0;
    CHECK_THROWS_AS(fit_distribution(negative, DistributionKind::Rayleigh), ValidationError);
}

TEST_CASE("Gaussian curve fit and moments agree within two standard errors", "[stats][property]")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng r(seed);
        std::vector<double> x(5000);
        for (auto& v : x) {
            v = 0.3 + 2.0 * r.normal();
        }
        const auto g = fit_distribution(x, DistributionKind::Gaussian);
        const auto& p = g.params;
        CHECK(std::abs(p.at("mu") - p.at("mu_moments")) < 2.0 * p.at("mu_stderr"));
        CHECK(std::abs(p.at("sigma") - p.at("sigma_moments")) < 2.0 * p.at("sigma_stderr"));
    }
}

TEST_CASE("analytic laws of zero-mean complex Gaussian samples", "[stats][property]")
{
    Rng r(2024);
    std::vector<double> mag, c;
    for (int k = 0; k < 10000; ++k) {
        const double re = r.normal(), im = r.normal();
        mag.push_back(2.0 * std::hypot(re, im));
        c.push_back(std::cos(std::atan2(im, re)));
    }
    CHECK(fit_distribution(mag, DistributionKind::Rayleigh).ks_pvalue > 0.01);
    CHECK(fit_distribution(c, DistributionKind::Arcsine).ks_pvalue > 0.01);
    const auto direct = ks_test(c, [](double v) { return arcsine_cdf(v, -1.0, 1.0); });
    CHECK(direct.pvalue > 0.01);
    const auto ray = ks_test(mag, [](double v) { return rayleigh_cdf(v, 2.0); });
    CHECK(ray.pvalue > 0.01);
}

TEST_CASE("chi-square against uniform counts", "[stats]")
{
    const std::vector<std::size_t> counts{18, 25, 22, 35};
    const auto chi = chi_square_uniform(counts);
    CHECK_THAT(chi.statistic, WithinAbs(6.32, 1e-12));
    CHECK(chi.dof == 3);
    CHECK_THAT(chi.pvalue, WithinRel(0.09703806460956206, 1e-9));
    CHECK_THROWS_AS(chi_square_uniform(std::vector<std::size_t>{4}), ValidationError);
}

TEST_CASE("smoothing: uniform phase without smear, inner modes with smear", "[stats]")
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto x = arcsine_dg(20000, seed);
        const auto none = smoothing_clustering(x, 0.0);
        CHECK(chi_square_uniform(none.phi_histogram.counts).pvalue > 0.01);

        const auto smooth = smoothing_clustering(x, 0.2 * 1.5e-3);
        const auto& h = smooth.phi_histogram;
        const double first = h.center(0), last = h.center(h.counts.size() - 1);
        CHECK(smooth.low_mode > first);
        CHECK(smooth.low_mode < 3.0 * pi / 8.0);
        CHECK(smooth.high_mode < last);
        CHECK(smooth.high_mode > 5.0 * pi / 8.0);
        // The endpoint bins themselves are depleted.
        const double uniform = static_cast<double>(h.total) / static_cast<double>(h.counts.size());
        CHECK(static_cast<double>(h.counts.front()) < 0.1 * uniform);
        CHECK(static_cast<double>(h.counts.back()) < 0.1 * uniform);
        CHECK(static_cast<double>(*std::max_element(h.counts.begin(), h.counts.end())) > 1.5 * uniform);
    }
}

TEST_CASE("smoothing: large smear concentrates phases at pi/2", "[stats]")
{
    const auto x = arcsine_dg(20000, 4);
    const auto c = smoothing_clustering(x, 100.0 * 1.5e-3);
    CHECK_THAT(c.low_mode, WithinAbs(pi / 2.0, 0.2));
    CHECK_THAT(c.high_mode, WithinAbs(pi / 2.0, 0.2));
    CHECK_THROWS_AS(smoothing_clustering(x, -1.0), ValidationError);
}

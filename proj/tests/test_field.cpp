#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "vgmap/field.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace vgmap;

namespace {

FieldParams small_params(double extent_d, double extent_y, double corr, double sigma, std::uint64_t seed)
{
    FieldParams p;
    p.extent_d = extent_d;
    p.extent_y = extent_y;
    p.origin_y = 0.0;
    p.corr_length = corr;
    p.sigma = sigma;
    p.seed = seed;
    return p;
}

// Pooled lag-k autocorrelation of one quadrature along d.
double autocorr_d(const ValleyField& f, std::size_t lag, bool re)
{
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < f.nodes_y(); ++j) {
        for (std::size_t i = 0; i < f.nodes_d(); ++i) {
            const double a = re ? f.at(i, j).re : f.at(i, j).im;
            den += a * a;
            if (i + lag < f.nodes_d()) {
                const double b = re ? f.at(i + lag, j).re : f.at(i + lag, j).im;
                num += a * b;
            }
        }
    }
    const double n = static_cast<double>(f.nodes_d());
    return num / den * n / (n - static_cast<double>(lag));
}

} // namespace

TEST_CASE("parameter validation", "[field]")
{
    FieldParams p;
    CHECK_NOTHROW(p.validate());
    p.grid_step = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.corr_length = 0.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.sigma = -1.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.extent_d = 400.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.extent_y = 0.0;
    CHECK_THROWS_AS(generate_field(p), ValidationError);
}

TEST_CASE("zero sigma gives a constant field", "[field]")
{
    auto p = small_params(50, 10, 5, 0.0, 3);
    p.mean_re = 5.0;
    const auto f = generate_field(p);
    for (const auto& v : f.values()) {
        CHECK(v == ComplexCoupling{5.0, 0.0});
    }
    const auto t = sample_trace(f, 3.5, 0.0, 40.0, 2.5);
    for (const auto& pt : t) {
        CHECK(pt.delta == ComplexCoupling{5.0, 0.0});
    }
}

TEST_CASE("generation is deterministic per seed", "[field]")
{
    const auto p = small_params(120, 20, 10, 3.0, 42);
    const auto a = generate_field(p);
    const auto b = generate_field(p);
    REQUIRE(a.values().size() == b.values().size());
    bool identical = true;
    for (std::size_t k = 0; k < a.values().size(); ++k) {
        identical = identical && a.values()[k] == b.values()[k];
    }
    CHECK(identical);
    auto q = p;
    q.seed = 43;
    CHECK(!(generate_field(q).values()[17] == a.values()[17]));
}

TEST_CASE("default grid is 400 x 40 nodes", "[field]")
{
    const auto f = generate_field(FieldParams{});
    CHECK(f.nodes_d() == 400);
    CHECK(f.nodes_y() == 40);
    CHECK(f.values().size() == 16000);
    CHECK(f.y_coord(0) == -20.0);
    CHECK(f.d_max() == 399.0);
}

TEST_CASE("mean coupling modulus is sigma sqrt(pi/2)", "[field][statistics]")
{
    // 500 x 200 nodes = 1e5 samples; a short correlation keeps them nearly independent.
    const auto f = generate_field(small_params(500, 200, 1, 1.0, 11));
    double sum = 0.0, sum_re = 0.0, sum_im = 0.0;
    for (const auto& v : f.values()) {
        sum += v.magnitude();
        sum_re += v.re;
        sum_im += v.im;
    }
    const double n = static_cast<double>(f.values().size());
    CHECK_THAT(sum / n, WithinRel(std::sqrt(std::numbers::pi / 2.0), 0.02));
    CHECK(std::abs(sum_re / n) < 5.0 * 3.0 / std::sqrt(n));
    CHECK(std::abs(sum_im / n) < 5.0 * 3.0 / std::sqrt(n));
}

TEST_CASE("Gaussian autocorrelation: exp(-1/2) at one correlation length", "[field][statistics]")
{
    // 4000 x 100 nm with l = 4: d extent spans 1000 correlation lengths per row.
    const auto f = generate_field(small_params(4000, 100, 4, 2.0, 5));
    CHECK_THAT(autocorr_d(f, 4, true), WithinAbs(std::exp(-0.5), 0.05));
    CHECK_THAT(autocorr_d(f, 4, false), WithinAbs(std::exp(-0.5), 0.05));
    CHECK_THAT(autocorr_d(f, 8, true), WithinAbs(std::exp(-2.0), 0.05));

    double cross = 0.0, vr = 0.0, vi = 0.0;
    for (const auto& v : f.values()) {
        cross += v.re * v.im;
        vr += v.re * v.re;
        vi += v.im * v.im;
    }
    CHECK(std::abs(cross / std::sqrt(vr * vi)) < 0.05);
    const double n = static_cast<double>(f.values().size());
    CHECK_THAT(std::sqrt(vr / n), WithinRel(2.0, 0.05));

    const auto s = summarize_field(f);
    CHECK_THAT(s.corr_length_estimate, WithinRel(4.0, 0.1));
    CHECK_THAT(s.mean_evs, WithinRel(s.expected_mean_evs, 0.05));
}

TEST_CASE("traces: nodes are exact, midpoints bilinear", "[field]")
{
    auto p = small_params(4, 2, 1, 0.0, 1);
    std::vector<ComplexCoupling> v(8);
    // Node (i, j) at index i * ny + j; ny = 2.
    v[0] = {0.0, 0.0};
    v[2] = {10.0, 0.0};
    v[1] = {0.0, 4.0};
    v[3] = {10.0, 4.0};
    v[4] = {2.0, 2.0};
    v[6] = {3.0, 1.0};
    const ValleyField f(p, v);
    const auto mid = f.interpolate(0.5, 0.0);
    CHECK_THAT(mid.re, WithinAbs(5.0, 1e-12));
    CHECK_THAT(mid.im, WithinAbs(0.0, 1e-12));
    const auto centre = f.interpolate(0.5, 0.5);
    CHECK_THAT(centre.re, WithinAbs(5.0, 1e-12));
    CHECK_THAT(centre.im, WithinAbs(2.0, 1e-12));
    CHECK(f.interpolate(2.0, 0.0) == v[4]);

    const auto g = generate_field(small_params(60, 10, 5, 4.0, 9));
    const auto t = sample_trace(g, 3.0, 0.0, 59.0, 1.0);
    REQUIRE(t.size() == 60);
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(t[i].delta == g.at(i, 3));
    }
    CHECK_THROWS_AS(sample_trace(g, 3.0, 0.0, 60.0, 1.0), ValidationError);
    CHECK_THROWS_AS(sample_trace(g, 10.0, 0.0, 10.0, 1.0), ValidationError);
    CHECK_THROWS_AS(sample_trace(g, 3.0, 0.0, 10.0, 0.0), ValidationError);
}

TEST_CASE("deep minima", "[field]")
{
    // Real-axis crossing through the origin.
    std::vector<ComplexCoupling> line;
    for (int k = -5; k <= 5; ++k) {
        line.push_back({k + 0.1, 0.0});
    }
    line.insert(line.begin(), {-4.0, 0.0});
    line.push_back({4.0, 0.0});
    auto m = deep_minima(line, 1.0);
    REQUIRE(m.size() == 1);
    CHECK_THAT(m[0].phase_jump, WithinAbs(std::numbers::pi, 1e-12));
    CHECK(m[0].evs < 1.0);

    std::vector<ComplexCoupling> circle;
    for (int k = 0; k < 40; ++k) {
        circle.push_back(ComplexCoupling::from_polar(10.0, k * 0.15));
    }
    CHECK(deep_minima(circle, 5.0).empty());

    // A shallow dip that stays above the threshold is ignored.
    std::vector<ComplexCoupling> dip{{5, 0}, {4, 0}, {3, 0}, {4, 0}, {5, 0}};
    CHECK(deep_minima(dip, 2.0).empty());
    CHECK(deep_minima(dip, 7.0).size() == 1);
    CHECK_THROWS_AS(deep_minima(std::vector<ComplexCoupling>{{1, 0}, {2, 0}}, 1.0), ValidationError);
}

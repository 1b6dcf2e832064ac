// Branch-sign choice on two straight trajectories that pass the origin on
// the real axis side: one crosses the axis, one only comes close. The
// measured |phi| of both is compared under a difference-only cost and the
// default curvature + jerk cost.

#include <complex>
#include <cstdio>
#include <vector>

#include "vgmap/vgmap.hpp"

using namespace vgmap;

namespace {

void run(const char* label, const std::vector<std::complex<double>>& z)
{
    std::vector<double> phi, evs;
    for (const auto& v : z) {
        phi.push_back(std::abs(std::arg(v)));
        evs.push_back(2.0 * std::abs(v));
    }
    std::printf("%s\n  truth    ", label);
    for (const auto& v : z) {
        std::printf("%c", std::arg(v) < 0 ? '-' : '+');
    }
    for (const auto& [name, w] : {std::pair{"step   ", BranchCost{1.0, 0.0, 0.0, 0.0}},
                                  std::pair{"default", BranchCost{}}}) {
        const auto t = disambiguate_branch(phi, evs, w);
        std::printf("\n  %s  ", name);
        for (const auto& p : t.points) {
            std::printf("%c", p.branch_sign < 0 ? '-' : '+');
        }
        std::printf("  cost %.4g", t.cost);
    }
    std::printf("\n\n");
}

} // namespace

int main()
{
    std::vector<std::complex<double>> crossing, touch;
    for (int k = 0; k <= 40; ++k) {
        const double t = k - 20.0;
        crossing.push_back(std::complex<double>(0.4, 0.25) * t + std::complex<double>(0.0, 0.6));
        // Mirror of the lower half of the crossing into the upper half-plane.
        const auto c = crossing.back();
        touch.push_back(c.imag() < 0 ? std::conj(c) : c);
    }
    run("straight line crossing the real axis", crossing);
    run("same |Delta| and |phi|, reflected so it only touches the axis", touch);
    std::printf("Both inputs have identical |phi| and E_VS, so no cost can tell them apart;\n"
                "the default cost prefers the smooth crossing.\n");
    return 0;
}

#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "vgmap/errors.hpp"

namespace vgmap {

namespace detail {
// FFTW planning is not thread-safe; execution with distinct buffers is.
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace detail

/// Real-to-complex DFT of fixed length n (unnormalized, X_k = sum x_n e^{-2 pi i k n / N}).
class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n)
    {
        require(n >= 2, "RealFft: length must be >= 2");
        in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
        if (in_ == nullptr || out_ == nullptr) {
            release();
            throw NumericalError("RealFft: allocation failed");
        }
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
        if (plan_ == nullptr) {
            release();
            throw NumericalError("RealFft: planning failed");
        }
    }

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    ~RealFft() { release(); }

    std::size_t size() const noexcept { return n_; }

    /// Input shorter than n is zero-padded. Returns bins 0..n/2.
    std::vector<std::complex<double>> forward(std::span<const double> x)
    {
        require(x.size() <= n_, "RealFft: input longer than transform length");
        std::size_t k = 0;
        for (; k < x.size(); ++k) {
            in_[k] = x[k];
        }
        for (; k < n_; ++k) {
            in_[k] = 0.0;
        }
        fftw_execute(plan_);
        std::vector<std::complex<double>> out(n_ / 2 + 1);
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] = {out_[j][0], out_[j][1]};
        }
        return out;
    }

private:
    void release() noexcept
    {
        if (plan_ != nullptr) {
            std::lock_guard lock(detail::fftw_planner_mutex());
            fftw_destroy_plan(plan_);
            plan_ = nullptr;
        }
        if (in_ != nullptr) {
            fftw_free(in_);
            in_ = nullptr;
        }
        if (out_ != nullptr) {
            fftw_free(out_);
            out_ = nullptr;
        }
    }

    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

/// Sum over all n bins of |X_k|^2, reconstructed from the half spectrum.
inline double full_spectrum_energy(std::span<const std::complex<double>> half, std::size_t n)
{
    double e = std::norm(half[0]);
    const std::size_t last = n / 2;
    for (std::size_t k = 1; k < half.size(); ++k) {
        const bool self_conjugate = (n % 2 == 0) && k == last;
        e += (self_conjugate ? 1.0 : 2.0) * std::norm(half[k]);
    }
    return e;
}

} // namespace vgmap

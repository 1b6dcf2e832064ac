#pragma once

// Closed-form relations between the intervalley coupling, the valley
// dependent g-factors and the singlet-triplet oscillation frequency, plus
// the conveyor drive and screening-gate voltage laws.
//
// Units at this boundary: energies in ueV, lengths in nm, fields in T,
// wait times in ns, drive time in s, voltages in mV.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "vgmap/errors.hpp"

namespace vgmap {

struct PhysicalConstants {
    double mu_B;  // J/T
    double hbar;  // J s
    double h;     // J s

    static constexpr PhysicalConstants codata2018() noexcept
    {
        constexpr double h = 6.62607015e-34;
        return {9.2740100783e-24, h / (2.0 * std::numbers::pi), h};
    }
};

inline constexpr PhysicalConstants kCodata2018 = PhysicalConstants::codata2018();

/// Complex intervalley coupling Delta = |Delta| e^{i phi}, in ueV.
struct ComplexCoupling {
    double re = 0.0;
    double im = 0.0;

    static ComplexCoupling from_polar(double magnitude, double phase) noexcept
    {
        return {magnitude * std::cos(phase), magnitude * std::sin(phase)};
    }

    double magnitude() const noexcept { return std::hypot(re, im); }

    // (-pi, pi]; zero coupling has phase 0 by convention.
    double phase() const noexcept
    {
        if (re == 0.0 && im == 0.0) {
            return 0.0;
        }
        const double p = std::atan2(im, re);
        return p == -std::numbers::pi ? std::numbers::pi : p;
    }

    std::complex<double> as_complex() const noexcept { return {re, im}; }
    ComplexCoupling conj() const noexcept { return {re, -im}; }

    friend bool operator==(const ComplexCoupling&, const ComplexCoupling&) = default;
};

/// Valley splitting E_VS = 2|Delta| in ueV.
inline double evs_from_delta(const ComplexCoupling& delta) noexcept
{
    return 2.0 * delta.magnitude();
}

/// Wraps an angle onto (-pi, pi].
inline double wrap_phase(double phi) noexcept
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::remainder(phi, two_pi);
    if (w <= -std::numbers::pi) {
        w += two_pi;
    }
    return w;
}

struct GFactorPair {
    double g_plus;
    double g_minus;
};

inline constexpr double kDefaultG0 = 2.0;
inline constexpr double kDefaultDeltaGMax = 1.5e-3;

/// g_pm = g0 pm dg_max cos(phi) for the two valley eigenstates.
inline GFactorPair g_factors(double phi, double g0 = kDefaultG0,
                             double delta_g_max = kDefaultDeltaGMax)
{
    require(delta_g_max >= 0.0, "g_factors: delta_g_max must be >= 0");
    const double dev = delta_g_max * std::cos(phi);
    return {g0 + dev, g0 - dev};
}

/// Singlet-triplet oscillation frequency (Hz) for a g-factor difference
/// delta_g at in-plane field B (T): f = mu_B B dg / h.
inline double st_frequency(double B, double delta_g,
                           const PhysicalConstants& c = kCodata2018)
{
    require(B > 0.0, "st_frequency: B must be > 0");
    require(delta_g >= 0.0, "st_frequency: delta_g must be >= 0");
    return c.mu_B * B * delta_g / c.h;
}

/// Inverse of st_frequency.
inline double delta_g_from_frequency(double B, double frequency_hz,
                                     const PhysicalConstants& c = kCodata2018)
{
    require(B > 0.0, "delta_g_from_frequency: B must be > 0");
    return c.h * frequency_hz / (c.mu_B * B);
}

/// Accumulated ST phase (rad) after waiting tau_ns.
inline double st_phase(double B, double delta_g, double tau_ns,
                       const PhysicalConstants& c = kCodata2018)
{
    require(B > 0.0, "st_phase: B must be > 0");
    return c.mu_B * B / c.hbar * delta_g * tau_ns * 1e-9;
}

enum class Scenario {
    ShuttledMixed,  // shuttled dot occupies both valleys, inert dot one
    InertMixed,     // inert dot occupies both valleys, shuttled dot one
};

struct ScenarioConfig {
    Scenario scenario = Scenario::ShuttledMixed;
    double delta_g_i = 2.0e-3;  // |dg_i| of the inert dot
    double w_plus = 0.7;        // occupation of the + valley of the mixed dot
    double w_minus = 0.3;
    double g0 = kDefaultG0;
    double delta_g_max = kDefaultDeltaGMax;

    void validate() const
    {
        require(w_plus >= 0.0 && w_minus >= 0.0, "scenario: weights must be >= 0");
        require(std::abs(w_plus + w_minus - 1.0) < 1e-12, "scenario: weights must sum to 1");
        require(delta_g_i >= 0.0, "scenario: delta_g_i must be >= 0");
        require(delta_g_max >= 0.0, "scenario: delta_g_max must be >= 0");
    }
};

struct FrequencyComponent {
    double delta_g;  // modulus of the g-factor difference
    double weight;
};

/// Observable pair for a shuttled-dot deviation of modulus delta_g_s.
/// `low`/`high` are (| |dg_i| - dg_s |, |dg_i| + dg_s). Weights correspond to
/// a non-negative signed deviation: the + valley produces the high frequency.
struct DeltaGPair {
    FrequencyComponent low;
    FrequencyComponent high;

    double mean() const noexcept { return 0.5 * (low.delta_g + high.delta_g); }
};

inline DeltaGPair delta_g_pair(const ScenarioConfig& config, double delta_g_s)
{
    config.validate();
    require(delta_g_s >= 0.0, "delta_g_pair: delta_g_s must be >= 0");
    const double gi = config.delta_g_i;
    return {{std::abs(gi - delta_g_s), config.w_minus}, {gi + delta_g_s, config.w_plus}};
}

/// The two weighted frequency components for a signed shuttled-dot valley
/// deviation x = dg_max cos(phi). Order is (+ valley, - valley) of the mixed
/// dot, so components[0] carries w_plus.
///
/// Sign bookkeeping: the inert dot sits at -|dg_i| (ShuttledMixed), or its
/// valley u sits at -u |dg_i| (InertMixed); in both cases the frequencies are
/// | |dg_i| + x | and | |dg_i| - x |, so the + valley tracks dg_i + x.
inline std::array<FrequencyComponent, 2> valley_components(const ScenarioConfig& config,
                                                           double x)
{
    config.validate();
    const double gi = config.delta_g_i;
    switch (config.scenario) {
    case Scenario::ShuttledMixed: {
        const double inert = -gi;
        return {{{std::abs(inert - x), config.w_plus}, {std::abs(inert + x), config.w_minus}}};
    }
    case Scenario::InertMixed: {
        const double shuttled = x;
        return {{{std::abs(-gi - shuttled), config.w_plus},
                 {std::abs(gi - shuttled), config.w_minus}}};
    }
    }
    throw ValidationError("valley_components: unknown scenario");
}

struct DriveParams {
    double frequency_hz = 5.6e6;
    std::array<double, 4> amplitudes_mv{150.0, 180.0, 150.0, 180.0};
    std::array<double, 4> offsets_mv{700.0, 700.0, 700.0, 700.0};
    double velocity_m_per_s = 5.6;
    double pitch_nm = 1000.0;  // distance per drive period

    // Consistent kinematics for a given speed and pitch.
    static DriveParams for_velocity(double velocity_m_per_s, double pitch_nm)
    {
        DriveParams p;
        p.velocity_m_per_s = velocity_m_per_s;
        p.pitch_nm = pitch_nm;
        p.frequency_hz = velocity_m_per_s / (pitch_nm * 1e-9);
        return p;
    }

    void validate() const
    {
        require(frequency_hz > 0.0 && pitch_nm > 0.0, "drive: frequency and pitch must be > 0");
        for (double a : amplitudes_mv) {
            require(a >= 0.0, "drive: amplitudes must be >= 0");
        }
        const double v = frequency_hz * pitch_nm * 1e-9;
        require(std::abs(v - velocity_m_per_s) <= 1e-9 * std::abs(velocity_m_per_s),
                "drive: velocity must equal frequency * pitch");
    }
};

/// V_{S,i}(t) = A_i cos(2 pi f t - (i-1) pi/2) + B_i for the four gate sets.
inline std::array<double, 4> conveyor_waveform(double t_s, const DriveParams& drive)
{
    require(t_s >= 0.0, "conveyor_waveform: t must be >= 0");
    drive.validate();
    // Reduce to one period first so t and t + 1/f share the same argument.
    const double cycles = drive.frequency_hz * t_s;
    const double frac = cycles - std::floor(cycles);
    std::array<double, 4> v{};
    for (int i = 0; i < 4; ++i) {
        const double arg = 2.0 * std::numbers::pi * frac - i * std::numbers::pi / 2.0;
        v[i] = drive.amplitudes_mv[i] * std::cos(arg) + drive.offsets_mv[i];
    }
    return v;
}

/// Separation distance (nm) reached when the drive stops at t_stop.
inline double separation_distance_nm(double t_stop_s, const DriveParams& drive)
{
    require(t_stop_s >= 0.0, "separation_distance: t_stop must be >= 0");
    return drive.velocity_m_per_s * t_stop_s * 1e9;
}

inline double stop_time_for_distance(double d_nm, const DriveParams& drive)
{
    require(d_nm >= 0.0 && drive.velocity_m_per_s > 0.0, "stop_time: invalid distance or velocity");
    return d_nm * 1e-9 / drive.velocity_m_per_s;
}

enum class ScreeningSign {
    PlusOnST,  // V_ST = 100 mV + k y, V_SB = 100 mV - k y
    PlusOnSB,
};

struct ScreeningVoltages {
    double v_st_mv;
    double v_sb_mv;
};

inline constexpr double kScreeningBaseMv = 100.0;
inline constexpr double kScreeningSlopeMvPerNm = 50.0 / 6.0;
inline constexpr double kScreeningMaxAbsYNm = 30.0;

/// Opposite-sign screening-gate voltages displacing the channel by y (nm).
inline ScreeningVoltages screening_voltages(double y_nm,
                                            ScreeningSign sign = ScreeningSign::PlusOnST)
{
    require(std::abs(y_nm) <= kScreeningMaxAbsYNm, "screening_voltages: |y| exceeds 30 nm");
    const double dv = kScreeningSlopeMvPerNm * y_nm;
    if (sign == ScreeningSign::PlusOnST) {
        return {kScreeningBaseMv + dv, kScreeningBaseMv - dv};
    }
    return {kScreeningBaseMv - dv, kScreeningBaseMv + dv};
}

} // namespace vgmap

#pragma once

// Independent reference computations used by the tests.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <resetloop/resetloop.hpp>

namespace oracle {

using resetloop::Complex;
using resetloop::ComplexMatrix;
using resetloop::Matrix;
using resetloop::ResetStateSpace;
using resetloop::RowVector;
using resetloop::Vector;

inline constexpr double kPi = std::numbers::pi;

inline double deg(double rad) { return rad * 180.0 / kPi; }

/// Truncated Taylor series of e^M, summed until terms vanish.
inline Matrix series_exp(const Matrix& m, int terms = 60) {
    Matrix sum  = Matrix::Identity(m.rows(), m.cols());
    Matrix term = sum;
    for (int k = 1; k < terms; ++k) {
        term = term * m / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

/// (1 + jw_1/w)(...) style factors evaluated straight from the definitions.
inline Complex pid(double w, double kp, double wi, double wd, double wt, double wf) {
    const Complex s(0.0, w);
    return kp * (1.0 + wi / s) * (s / wd + 1.0) / (s / wt + 1.0) / (s / wf + 1.0);
}

inline Complex integrator_factor(double w, double wi2) { return 1.0 + wi2 / Complex(0.0, w); }

inline Complex default_plant(double w) {
    const auto p  = resetloop::plant::default_stage();
    const Complex s(0.0, w);
    return p.gain / (p.m * s * s + p.c * s + p.k) * (p.actuator_pole / (s + p.actuator_pole));
}

/// CI describing function: (4/pi j + 1) / (j w), hand-derived.
inline Complex clegg_df(double w, double wi = 1.0) { return wi * (1.0 + Complex(0.0, 4.0 / kPi)) / Complex(0.0, w); }

/**
 * Harmonic content of a reset system driven by a long sine, from a
 * simulation. The input is held per sample; the continuous output between
 * samples is integrated exactly, so the Fourier coefficients are those of
 * the true sampled-data response rather than of its samples.
 *
 * Input: amplitude * sin(w (k + 1/2) Ts + pi/2); zero crossings fall on
 * sample instants, as in the simulator's reset predicate.
 */
template <std::size_t N>
std::array<Complex, N> dft_harmonics(const ResetStateSpace& s, double f_hz, double fs, const std::array<int, N>& orders,
                                     double amplitude = 1.0) {
    const double w = 2.0 * kPi * f_hz, ts = 1.0 / fs, phi0 = kPi / 2.0;
    const auto per         = static_cast<std::size_t>(std::llround(fs / f_hz));
    const std::size_t warm = per * static_cast<std::size_t>(std::ceil(160.0 * f_hz));
    const std::size_t len  = 40 * per;
    std::vector<double> e(warm + len);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = amplitude * std::sin(w * (static_cast<double>(k) + 0.5) * ts + phi0);

    const auto n = s.order();
    Matrix ah    = Matrix::Zero(n + 1, n + 1);
    ah.topLeftCorner(n, n)  = s.base().A();
    ah.topRightCorner(n, 1) = s.base().B();
    const Matrix big        = resetloop::numerics::mat_exp(ah * ts);
    RowVector c0(n + 1);
    c0 << s.base().C(), 0.0;

    std::array<ComplexMatrix, N> row;
    for (std::size_t i = 0; i < N; ++i) {
        ComplexMatrix m = ah.cast<Complex>();
        m.diagonal().array() -= Complex(0.0, orders[i] * w);
        const ComplexMatrix rhs = std::exp(Complex(0.0, -orders[i] * w * ts)) * big.cast<Complex>() -
                                  ComplexMatrix::Identity(n + 1, n + 1);
        row[i] = c0.cast<Complex>() * resetloop::numerics::solve_complex(m, rhs);
    }

    std::array<Complex, N> acc{};
    Eigen::VectorXcd z(n + 1);
    (void)resetloop::simulate::run_open_loop(s, e, fs, [&](std::size_t k, const Vector& x, double ek) {
        if (k < warm) return;
        for (Eigen::Index i = 0; i < n; ++i) z(i) = x(i);
        z(n)           = ek;
        const double t = static_cast<double>(k - warm) * ts;
        for (std::size_t i = 0; i < N; ++i) acc[i] += std::exp(Complex(0.0, -orders[i] * w * t)) * (row[i] * z)(0, 0);
    });

    const double period_t = static_cast<double>(len) * ts;
    const double ph       = w * static_cast<double>(warm) * ts + phi0;
    std::array<Complex, N> out;
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = (2.0 / period_t) * acc[i] * std::exp(Complex(0.0, kPi / 2.0 - orders[i] * ph)) / amplitude;
        if (orders[i] == 1) out[i] += s.base().D();
    }
    return out;
}

/// Single-bin DFT amplitude of x at f over an integer number of periods at the end.
inline Complex tone(const std::vector<double>& x, double f_hz, double fs, std::size_t periods) {
    const auto per = static_cast<std::size_t>(std::llround(fs / f_hz));
    const auto len = per * periods;
    Complex acc{};
    for (std::size_t k = x.size() - len; k < x.size(); ++k)
        acc += x[k] * std::exp(Complex(0.0, -2.0 * kPi * f_hz * static_cast<double>(k) / fs));
    return 2.0 * acc / static_cast<double>(len);
}

}  // namespace oracle

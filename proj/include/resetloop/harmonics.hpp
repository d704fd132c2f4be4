#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "errors.hpp"
#include "lti.hpp"
#include "numerics.hpp"
#include "reset_system.hpp"

namespace resetloop {

/**
 * Frequency-dependent matrices of the reset describing function.
 *
 *   Lambda  = w^2 I + A^2
 *   Delta   = I + exp(pi/w A)
 *   DeltaR  = I + A_R exp(pi/w A)
 *   GammaR  = DeltaR^-1 A_R Delta Lambda^-1
 *   ThetaD  = -(2 w^2 / pi) Delta (GammaR - Lambda^-1)
 */
struct DfKernel {
    double omega = 0.0;
    Matrix lambda;
    Matrix lambda_inv;
    Matrix delta;
    Matrix delta_r;
    Matrix gamma_r;
    Matrix theta_d;

    static DfKernel compute(const ResetStateSpace& sys, double omega) {
        if (!(omega > 0.0) || !std::isfinite(omega)) throw ParameterError("describing function: omega must be > 0");
        const auto n    = sys.order();
        const Matrix& a = sys.base().A();
        const Matrix id = Matrix::Identity(n, n);
        const Matrix ar = sys.reset_matrix();

        DfKernel k;
        k.omega            = omega;
        k.lambda           = omega * omega * id + a * a;
        const Matrix e_pi  = numerics::mat_exp((std::numbers::pi / omega) * a);
        k.delta            = id + e_pi;
        k.delta_r          = id + ar * e_pi;
        try {
            k.lambda_inv = numerics::solve_real(k.lambda, id);
        } catch (const SingularityError&) {
            throw SingularityError("describing function: Lambda(omega) is singular", omega);
        }
        try {
            k.gamma_r = numerics::solve_real(k.delta_r, ar * k.delta * k.lambda_inv);
        } catch (const SingularityError&) {
            throw SingularityError("describing function: Delta_R(omega) is singular", omega);
        }
        k.theta_d = -(2.0 * omega * omega / std::numbers::pi) * k.delta * (k.gamma_r - k.lambda_inv);
        return k;
    }
};

/// Harmonic response samples on a frequency grid; NaN entries mark singular gaps.
struct HarmonicResponse {
    struct Gap {
        double omega;
        int order;
    };

    std::vector<double> omega;             // rad/s
    std::vector<int> orders;               // harmonic orders n
    std::vector<std::vector<Complex>> values;  // values[order index][omega index]
    std::vector<Gap> gaps;

    [[nodiscard]] const std::vector<Complex>& at_order(int n) const {
        for (std::size_t i = 0; i < orders.size(); ++i)
            if (orders[i] == n) return values[i];
        throw ParameterError("HarmonicResponse: order " + std::to_string(n) + " not computed");
    }
};

namespace harmonics {

namespace detail {
inline void require_error_condition(const ResetStateSpace& sys) {
    if (sys.has_reset() && sys.condition().signal != "e")
        throw UnsupportedConfiguration("describing function is defined only for resets on the input error 'e'");
}
}  // namespace detail

/// First-harmonic describing function C (jwI - A)^-1 (I + j ThetaD) B + D.
[[nodiscard]] inline Complex df(const ResetStateSpace& sys, double omega) {
    if (sys.is_linear()) return lti::freq_response(sys.base(), omega);
    detail::require_error_condition(sys);
    const auto k = DfKernel::compute(sys, omega);
    const auto n = sys.order();

    ComplexMatrix m = -sys.base().A().cast<Complex>();
    m.diagonal().array() += Complex(0.0, omega);
    ComplexMatrix rhs = ComplexMatrix::Identity(n, n) + Complex(0.0, 1.0) * k.theta_d.cast<Complex>();
    rhs               = rhs * sys.base().B().cast<Complex>();
    ComplexMatrix x;
    try {
        x = numerics::solve_complex(m, rhs);
    } catch (const SingularityError&) {
        throw SingularityError("describing function: jwI - A is singular", omega);
    }
    return (sys.base().C().cast<Complex>() * x)(0, 0) + sys.base().D();
}

/// n-th order harmonic (n >= 2); zero for even n and for linear systems.
[[nodiscard]] inline Complex hosidf(const ResetStateSpace& sys, double omega, int n) {
    if (n < 2) throw ParameterError("hosidf: harmonic order must be >= 2");
    if (!(omega > 0.0) || !std::isfinite(omega)) throw ParameterError("hosidf: omega must be > 0");
    if (n % 2 == 0 || sys.is_linear()) return {0.0, 0.0};
    detail::require_error_condition(sys);
    const auto k  = DfKernel::compute(sys, omega);

    ComplexMatrix m = sys.base().A().cast<Complex>();
    m.diagonal().array() -= Complex(0.0, omega * n);
    const Matrix inner      = k.delta * (k.gamma_r - k.lambda_inv) * sys.base().B();
    ComplexMatrix x;
    try {
        x = numerics::solve_complex(m, inner.cast<Complex>());
    } catch (const SingularityError&) {
        throw SingularityError("hosidf: A - jwnI is singular", omega);
    }
    const Complex scale = -2.0 * omega * omega / (Complex(0.0, 1.0) * std::numbers::pi);
    return scale * (sys.base().C().cast<Complex>() * x)(0, 0);
}

/// df for n = 1, hosidf otherwise.
[[nodiscard]] inline Complex harmonic(const ResetStateSpace& sys, double omega, int n) {
    if (n < 1) throw ParameterError("harmonic order must be >= 1");
    return n == 1 ? df(sys, omega) : hosidf(sys, omega, n);
}

/// Controller followed by the plant, plant states non-resetting.
[[nodiscard]] inline ResetStateSpace open_loop(const ResetStateSpace& ctrl, const StateSpace& plant) {
    return reset::series(ctrl, ResetStateSpace(plant.prefixed("plant")));
}

[[nodiscard]] inline Complex open_loop_harmonic(const ResetStateSpace& ctrl, const StateSpace& plant, double omega,
                                                int n) {
    return harmonic(open_loop(ctrl, plant), omega, n);
}

/// n logarithmically spaced points over [lo, hi], endpoints included.
[[nodiscard]] inline std::vector<double> logspace(double lo, double hi, std::size_t points) {
    if (!(lo > 0.0) || !(hi > lo)) throw ParameterError("logspace: need 0 < lo < hi");
    if (points < 2) throw ParameterError("logspace: need at least 2 points");
    std::vector<double> w(points);
    const double l0 = std::log10(lo), l1 = std::log10(hi);
    for (std::size_t i = 0; i < points; ++i)
        w[i] = std::pow(10.0, l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(points - 1));
    w.front() = lo;
    w.back()  = hi;
    return w;
}

/**
 * Reset element followed by a linear chain. The chain is driven by the
 * element's periodic output, so harmonic n is just scaled by tail(j n w).
 * Better conditioned than the DF of the assembled realization when the
 * tail has integrators and fast poles.
 */
[[nodiscard]] inline Complex cascade_harmonic(const ResetStateSpace& front, const StateSpace& tail, double omega,
                                              int n) {
    const Complex h = harmonic(front, omega, n);
    if (h == Complex{}) return h;
    return h * lti::freq_response(tail, omega * n);
}

/// Evaluates each requested harmonic on a log grid. Singular points become NaN gaps.
template <class Eval>
[[nodiscard]] HarmonicResponse sweep_with(Eval&& eval, double omega_min, double omega_max, std::size_t points,
                                          const std::vector<int>& orders) {
    if (orders.empty()) throw ParameterError("sweep: no harmonic orders requested");
    for (int n : orders)
        if (n < 1) throw ParameterError("sweep: harmonic orders must be >= 1");
    HarmonicResponse out;
    out.omega  = logspace(omega_min, omega_max, points);
    out.orders = orders;
    out.values.assign(orders.size(), std::vector<Complex>(points));
    const Complex nan{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    for (std::size_t oi = 0; oi < orders.size(); ++oi) {
        for (std::size_t i = 0; i < points; ++i) {
            try {
                out.values[oi][i] = eval(out.omega[i], orders[oi]);
            } catch (const SingularityError&) {
                out.values[oi][i] = nan;
                out.gaps.push_back({out.omega[i], orders[oi]});
            }
        }
    }
    return out;
}

[[nodiscard]] inline HarmonicResponse sweep(const ResetStateSpace& sys, double omega_min, double omega_max,
                                            std::size_t points, const std::vector<int>& orders) {
    return sweep_with([&](double w, int n) { return harmonic(sys, w, n); }, omega_min, omega_max, points, orders);
}

[[nodiscard]] inline HarmonicResponse sweep_cascade(const ResetStateSpace& front, const StateSpace& tail,
                                                    double omega_min, double omega_max, std::size_t points,
                                                    const std::vector<int>& orders) {
    return sweep_with([&](double w, int n) { return cascade_harmonic(front, tail, w, n); }, omega_min, omega_max,
                      points, orders);
}

}  // namespace harmonics
}  // namespace resetloop

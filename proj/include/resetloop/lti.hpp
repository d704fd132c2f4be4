#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "numerics.hpp"

namespace resetloop {

/**
 * Continuous-time SISO state-space block
 *
 *     dx/dt = A x + B u
 *         y = C x + D u
 *
 * Each state carries a label so that later stages (reset selection, event
 * logging) can refer to it by name.
 */
class StateSpace {
public:
    StateSpace() = default;

    StateSpace(Matrix a, Vector b, RowVector c, double d, std::vector<std::string> labels = {})
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(d), labels_(std::move(labels)) {
        const auto n = a_.rows();
        if (a_.cols() != n) throw DimensionError("StateSpace: A must be square");
        if (b_.size() != n) throw DimensionError("StateSpace: rows(B) must equal dim(A)");
        if (c_.size() != n) throw DimensionError("StateSpace: cols(C) must equal dim(A)");
        numerics::require_finite(a_, "StateSpace A");
        numerics::require_finite(b_, "StateSpace B");
        numerics::require_finite(c_, "StateSpace C");
        if (!std::isfinite(d_)) throw ParameterError("StateSpace: D must be finite");
        if (labels_.empty()) {
            for (Eigen::Index i = 0; i < n; ++i) labels_.push_back("x" + std::to_string(i + 1));
        } else if (static_cast<Eigen::Index>(labels_.size()) != n) {
            throw DimensionError("StateSpace: one label per state required");
        }
    }

    /// Static gain block with no states.
    static StateSpace gain(double k) { return StateSpace(Matrix(0, 0), Vector(0), RowVector(0), k); }

    [[nodiscard]] const Matrix& A() const noexcept { return a_; }
    [[nodiscard]] const Vector& B() const noexcept { return b_; }
    [[nodiscard]] const RowVector& C() const noexcept { return c_; }
    [[nodiscard]] double D() const noexcept { return d_; }
    [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }
    [[nodiscard]] Eigen::Index order() const noexcept { return a_.rows(); }

    /// Output scaled by k (C and D multiplied).
    [[nodiscard]] StateSpace scaled(double k) const { return StateSpace(a_, b_, k * c_, k * d_, labels_); }

    /// Copy with every label prefixed by `prefix` + '.'.
    [[nodiscard]] StateSpace prefixed(const std::string& prefix) const {
        auto l = labels_;
        for (auto& s : l) s = prefix + "." + s;
        return StateSpace(a_, b_, c_, d_, std::move(l));
    }

private:
    Matrix a_{0, 0};
    Vector b_{0};
    RowVector c_{0};
    double d_ = 0.0;
    std::vector<std::string> labels_;
};

/// Sampled counterpart of a StateSpace: x[k+1] = Ad x[k] + Bd u[k], y[k] = C x[k] + D u[k].
struct DiscreteStateSpace {
    Matrix Ad;
    Vector Bd;
    RowVector C;
    double D  = 0.0;
    double fs = 0.0;  // Hz
};

/// Polynomial ratio in s with coefficients in descending degree.
struct RationalTF {
    std::vector<double> num;
    std::vector<double> den;
};

namespace lti {

namespace detail {
inline std::vector<double> trim_leading_zeros(std::vector<double> p) {
    auto it = p.begin();
    while (it != p.end() && *it == 0.0) ++it;
    p.erase(p.begin(), it);
    return p;
}
}  // namespace detail

/// Horner evaluation of a descending-degree polynomial at complex s.
[[nodiscard]] inline Complex polyval(const std::vector<double>& p, Complex s) {
    Complex acc{0.0, 0.0};
    for (double c : p) acc = acc * s + c;
    return acc;
}

[[nodiscard]] inline Complex evaluate(const RationalTF& tf, Complex s) {
    return polyval(tf.num, s) / polyval(tf.den, s);
}

/// Product of polynomials (descending degree).
[[nodiscard]] inline std::vector<double> polymul(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) return {};
    std::vector<double> r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

/**
 * Controllable canonical realization.
 *
 * For den = s^n + a1 s^(n-1) + ... + an, A has first row [-a1 ... -an] and a
 * shifted identity below it; B = e1. A bi-proper numerator is split into the
 * feedthrough D plus a strictly proper remainder that forms C.
 */
[[nodiscard]] inline StateSpace tf_to_ss(const RationalTF& tf, const std::string& prefix = "x") {
    const auto num = detail::trim_leading_zeros(tf.num);
    const auto den = detail::trim_leading_zeros(tf.den);
    if (den.empty()) throw RealizationError("tf_to_ss: denominator is zero");
    if (num.size() > den.size()) throw RealizationError("tf_to_ss: improper transfer function");
    for (double c : num)
        if (!std::isfinite(c)) throw RealizationError("tf_to_ss: non-finite numerator");
    for (double c : den)
        if (!std::isfinite(c)) throw RealizationError("tf_to_ss: non-finite denominator");

    const std::size_t n = den.size() - 1;
    const double lead   = den.front();
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = den[i + 1] / lead;

    // Numerator padded to n+1 coefficients, normalized by the leading denominator term.
    std::vector<double> b(n + 1, 0.0);
    for (std::size_t i = 0; i < num.size(); ++i) b[n + 1 - num.size() + i] = num[i] / lead;

    const double d = b[0];
    Matrix A       = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Vector B       = Vector::Zero(static_cast<Eigen::Index>(n));
    RowVector C(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        A(0, static_cast<Eigen::Index>(i)) = -a[i];
        if (i + 1 < n) A(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(i)) = 1.0;
        C(static_cast<Eigen::Index>(i)) = b[i + 1] - d * a[i];
    }
    if (n > 0) B(0) = 1.0;

    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i)
        labels.push_back(n == 1 ? prefix : prefix + std::to_string(i + 1));
    return StateSpace(std::move(A), std::move(B), std::move(C), d, std::move(labels));
}

/// `b` driven by the output of `a`; state vector [x_a; x_b].
[[nodiscard]] inline StateSpace series(const StateSpace& a, const StateSpace& b) {
    const auto na = a.order(), nb = b.order(), n = na + nb;
    Matrix A                = Matrix::Zero(n, n);
    A.topLeftCorner(na, na) = a.A();
    A.bottomLeftCorner(nb, na)  = b.B() * a.C();
    A.bottomRightCorner(nb, nb) = b.A();
    Vector B(n);
    B << a.B(), b.B() * a.D();
    RowVector C(n);
    C << b.D() * a.C(), b.C();
    auto labels = a.labels();
    labels.insert(labels.end(), b.labels().begin(), b.labels().end());
    return StateSpace(std::move(A), std::move(B), std::move(C), b.D() * a.D(), std::move(labels));
}

/// Shared input, summed outputs; state vector [x_a; x_b].
[[nodiscard]] inline StateSpace parallel(const StateSpace& a, const StateSpace& b) {
    const auto na = a.order(), nb = b.order(), n = na + nb;
    Matrix A                    = Matrix::Zero(n, n);
    A.topLeftCorner(na, na)     = a.A();
    A.bottomRightCorner(nb, nb) = b.A();
    Vector B(n);
    B << a.B(), b.B();
    RowVector C(n);
    C << a.C(), b.C();
    auto labels = a.labels();
    labels.insert(labels.end(), b.labels().begin(), b.labels().end());
    return StateSpace(std::move(A), std::move(B), std::move(C), a.D() + b.D(), std::move(labels));
}

/// Negative feedback: y = forward(u - back(y)). Requires 1 + D_f D_b != 0.
[[nodiscard]] inline StateSpace feedback(const StateSpace& forward, const StateSpace& back) {
    const double den = 1.0 + forward.D() * back.D();
    if (std::abs(den) < 1e-14) throw SingularityError("feedback: algebraic loop is singular");
    const auto nf = forward.order(), nb = back.order(), n = nf + nb;
    const double e_gain = 1.0 / den;
    // u_f = e_gain * (u - Db Cf xf - Cb xb)
    RowVector uf_x(n);
    uf_x << -back.D() * forward.C(), -back.C();
    uf_x *= e_gain;
    const double uf_u = e_gain;
    RowVector y_x(n);
    y_x << forward.C(), RowVector::Zero(nb);
    y_x += forward.D() * uf_x;
    const double y_u = forward.D() * uf_u;

    Matrix A = Matrix::Zero(n, n);
    A.topLeftCorner(nf, nf) = forward.A();
    A.topRows(nf) += forward.B() * uf_x;
    A.bottomRightCorner(nb, nb) = back.A();
    A.bottomRows(nb) += back.B() * y_x;
    Vector B(n);
    B << forward.B() * uf_u, back.B() * y_u;
    auto labels = forward.labels();
    labels.insert(labels.end(), back.labels().begin(), back.labels().end());
    return StateSpace(std::move(A), std::move(B), std::move(y_x), y_u, std::move(labels));
}

/// C (jωI - A)^-1 B + D.
[[nodiscard]] inline Complex freq_response(const StateSpace& sys, double omega) {
    if (!(omega > 0.0) || !std::isfinite(omega)) throw ParameterError("freq_response: omega must be > 0");
    const auto n = sys.order();
    if (n == 0) return {sys.D(), 0.0};
    ComplexMatrix m = -sys.A().cast<Complex>();
    m.diagonal().array() += Complex(0.0, omega);
    ComplexMatrix x;
    try {
        x = numerics::solve_complex(m, sys.B().cast<Complex>());
    } catch (const SingularityError&) {
        throw SingularityError("freq_response: pole on the imaginary axis at omega", omega);
    }
    return (sys.C().cast<Complex>() * x)(0, 0) + sys.D();
}

/**
 * Exact zero-order-hold discretization from the augmented exponential
 * exp([[A, B], [0, 0]] / fs).
 */
[[nodiscard]] inline DiscreteStateSpace zoh_discretize(const StateSpace& sys, double fs) {
    if (!(fs > 0.0) || !std::isfinite(fs)) throw ParameterError("zoh_discretize: fs must be > 0");
    const auto n = sys.order();
    Matrix aug                = Matrix::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n)   = sys.A();
    aug.topRightCorner(n, 1)  = sys.B();
    const Matrix e            = numerics::mat_exp(aug / fs);
    return DiscreteStateSpace{e.topLeftCorner(n, n), e.topRightCorner(n, 1), sys.C(), sys.D(), fs};
}

/**
 * Bilinear (Tustin) equivalent, s -> 2 fs (z - 1)/(z + 1), in the realization
 * w[k+1] = Ad w + Bd e, u = C w + D e with w = x - N e, where
 * x[k] = M x[k-1] + N (e[k-1] + e[k]) is the trapezoidal state and
 * M = (I - A T/2)^-1 (I + A T/2), N = (I - A T/2)^-1 B T/2.
 */
[[nodiscard]] inline DiscreteStateSpace tustin_discretize(const StateSpace& sys, double fs) {
    if (!(fs > 0.0) || !std::isfinite(fs)) throw ParameterError("tustin_discretize: fs must be > 0");
    const auto n    = sys.order();
    const double h  = 0.5 / fs;
    const Matrix id = Matrix::Identity(n, n);
    Matrix rhs(n, n + 1);
    rhs.leftCols(n) = id + h * sys.A();
    rhs.col(n)      = h * sys.B();
    Matrix sol;
    try {
        sol = numerics::solve_real(id - h * sys.A(), rhs);
    } catch (const SingularityError&) {
        throw SingularityError("tustin_discretize: I - A T/2 is singular", 2.0 * fs);
    }
    const Matrix m = sol.leftCols(n);
    const Vector nv = sol.col(n);
    return DiscreteStateSpace{m, (m + id) * nv, sys.C(), sys.D() + sys.C().dot(nv), fs};
}

}  // namespace lti
}  // namespace resetloop

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "lti.hpp"
#include "numerics.hpp"

namespace resetloop {

/// Reset surface: zero crossing of a named signal. Only the loop error "e" can be evaluated.
struct ResetCondition {
    std::string signal = "e";

    friend bool operator==(const ResetCondition&, const ResetCondition&) = default;
};

/// One jump of the reset map, as logged by the simulator.
struct ResetEvent {
    double time = 0.0;
    Vector pre_state;
    Vector post_state;
};

enum class FilterKind { lpf, hpf, pi };

[[nodiscard]] inline FilterKind parse_filter_kind(std::string_view s) {
    if (s == "LPF" || s == "lpf") return FilterKind::lpf;
    if (s == "HPF" || s == "hpf") return FilterKind::hpf;
    if (s == "PI" || s == "pi") return FilterKind::pi;
    throw ParameterError("unknown filter kind '" + std::string(s) + "' (expected LPF, HPF or PI)");
}

/**
 * Linear base system plus a jump map applied on the reset surface.
 *
 * States flagged as resetting are mapped through A_rho; the remaining states
 * pass through the jump unchanged, so A_R is [A_rho 0; 0 I] up to a
 * permutation of the state vector.
 */
class ResetStateSpace {
public:
    ResetStateSpace() = default;

    /// Purely linear system (no resetting states).
    explicit ResetStateSpace(StateSpace base)
        : base_(std::move(base)), flags_(static_cast<std::size_t>(base_.order()), false), a_rho_(0, 0) {}

    ResetStateSpace(StateSpace base, std::vector<bool> flags, std::optional<Matrix> a_rho = std::nullopt,
                    ResetCondition condition = {})
        : base_(std::move(base)), flags_(std::move(flags)), condition_(std::move(condition)) {
        if (static_cast<Eigen::Index>(flags_.size()) != base_.order())
            throw DimensionError("ResetStateSpace: one reset flag per state required");
        const auto nr = static_cast<Eigen::Index>(std::count(flags_.begin(), flags_.end(), true));
        a_rho_        = a_rho ? std::move(*a_rho) : Matrix::Zero(nr, nr);
        if (a_rho_.rows() != nr || a_rho_.cols() != nr)
            throw DimensionError("ResetStateSpace: A_rho must be square over the resetting states");
        numerics::require_finite(a_rho_, "ResetStateSpace A_rho");
        if (numerics::spectral_radius(a_rho_) > 1.0 + 1e-12)
            throw ParameterError("ResetStateSpace: A_rho must be non-expansive (eigenvalues |.| <= 1)");
    }

    [[nodiscard]] const StateSpace& base() const noexcept { return base_; }
    [[nodiscard]] const std::vector<bool>& reset_flags() const noexcept { return flags_; }
    [[nodiscard]] const Matrix& a_rho() const noexcept { return a_rho_; }
    [[nodiscard]] const ResetCondition& condition() const noexcept { return condition_; }
    [[nodiscard]] Eigen::Index order() const noexcept { return base_.order(); }

    [[nodiscard]] std::vector<Eigen::Index> resetting_indices() const {
        std::vector<Eigen::Index> idx;
        for (std::size_t i = 0; i < flags_.size(); ++i)
            if (flags_[i]) idx.push_back(static_cast<Eigen::Index>(i));
        return idx;
    }

    [[nodiscard]] bool has_reset() const noexcept {
        return std::find(flags_.begin(), flags_.end(), true) != flags_.end();
    }

    /// Jump matrix A_R over the full state vector.
    [[nodiscard]] Matrix reset_matrix() const {
        const auto n = order();
        Matrix ar    = Matrix::Identity(n, n);
        const auto r = resetting_indices();
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < r.size(); ++j)
                ar(r[i], r[j]) = a_rho_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        return ar;
    }

    /// True when the jump map is the identity, i.e. the system behaves as its base.
    [[nodiscard]] bool is_linear() const {
        if (!has_reset()) return true;
        return a_rho_.isIdentity(0.0);
    }

    /// Same dynamics with every reset flag cleared.
    [[nodiscard]] ResetStateSpace linearized() const { return ResetStateSpace(base_); }

    /// Output scaled by k; reset structure untouched.
    [[nodiscard]] ResetStateSpace scaled(double k) const {
        return ResetStateSpace(base_.scaled(k), flags_, a_rho_, condition_);
    }

    [[nodiscard]] ResetStateSpace prefixed(const std::string& prefix) const {
        return ResetStateSpace(base_.prefixed(prefix), flags_, a_rho_, condition_);
    }

private:
    StateSpace base_;
    std::vector<bool> flags_;
    Matrix a_rho_{0, 0};
    ResetCondition condition_{};
};

namespace reset {

namespace detail {

inline ResetCondition merged_condition(const ResetStateSpace& a, const ResetStateSpace& b) {
    if (a.has_reset() && b.has_reset() && !(a.condition() == b.condition())) {
        throw UnsupportedConfiguration("reset elements with different reset conditions ('" + a.condition().signal +
                                       "' vs '" + b.condition().signal + "') cannot share one jump map");
    }
    return a.has_reset() ? a.condition() : b.condition();
}

inline Matrix block_diag(const Matrix& x, const Matrix& y) {
    Matrix m                                    = Matrix::Zero(x.rows() + y.rows(), x.cols() + y.cols());
    m.topLeftCorner(x.rows(), x.cols())         = x;
    m.bottomRightCorner(y.rows(), y.cols())     = y;
    return m;
}

inline std::vector<bool> concat(std::vector<bool> a, const std::vector<bool>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace detail

/// Series connection; resetting states of both parts keep their flags.
[[nodiscard]] inline ResetStateSpace series(const ResetStateSpace& a, const ResetStateSpace& b) {
    auto cond = detail::merged_condition(a, b);
    return ResetStateSpace(lti::series(a.base(), b.base()), detail::concat(a.reset_flags(), b.reset_flags()),
                           detail::block_diag(a.a_rho(), b.a_rho()), std::move(cond));
}

[[nodiscard]] inline ResetStateSpace parallel(const ResetStateSpace& a, const ResetStateSpace& b) {
    auto cond = detail::merged_condition(a, b);
    return ResetStateSpace(lti::parallel(a.base(), b.base()), detail::concat(a.reset_flags(), b.reset_flags()),
                           detail::block_diag(a.a_rho(), b.a_rho()), std::move(cond));
}

/// Integrator with gain ω_i on the output (B = 1, C = ω_i) whose state resets to zero.
[[nodiscard]] inline ResetStateSpace make_clegg(double omega_i) {
    if (!(omega_i > 0.0) || !std::isfinite(omega_i)) throw ParameterError("make_clegg: omega_i must be > 0");
    StateSpace ss(Matrix::Zero(1, 1), Vector::Ones(1), RowVector::Constant(1, omega_i), 0.0, {"CI"});
    return ResetStateSpace(std::move(ss), {true});
}

/// First-order reset element 1/(s/ω + 1).
[[nodiscard]] inline ResetStateSpace make_fore(double omega_ra) {
    if (!(omega_ra > 0.0) || !std::isfinite(omega_ra)) throw ParameterError("make_fore: omega_ra must be > 0");
    auto ss = lti::tf_to_ss({{1.0}, {1.0 / omega_ra, 1.0}}, "FORE");
    return ResetStateSpace(std::move(ss), {true});
}

/**
 * First-order filter with an optionally resetting state:
 * LPF ω/(s+ω), HPF s/(s+ω), PI 1 + ω/s.
 */
[[nodiscard]] inline ResetStateSpace make_reset_filter(FilterKind kind, double omega_c, bool resetting) {
    if (!(omega_c > 0.0) || !std::isfinite(omega_c)) throw ParameterError("make_reset_filter: omega_c must be > 0");
    StateSpace ss;
    switch (kind) {
        case FilterKind::lpf: ss = lti::tf_to_ss({{omega_c}, {1.0, omega_c}}, "LPF"); break;
        case FilterKind::hpf: ss = lti::tf_to_ss({{1.0, 0.0}, {1.0, omega_c}}, "HPF"); break;
        case FilterKind::pi: ss = lti::tf_to_ss({{1.0, omega_c}, {1.0, 0.0}}, "PI"); break;
        default: throw ParameterError("make_reset_filter: invalid filter kind");
    }
    return ResetStateSpace(std::move(ss), {resetting});
}

/// pre -> reset element -> post, as one system whose jump map touches only the reset element's states.
[[nodiscard]] inline ResetStateSpace embed(const ResetStateSpace& element, const std::optional<StateSpace>& pre,
                                           const std::optional<StateSpace>& post) {
    if (pre && element.has_reset() && element.condition().signal != "e") {
        throw UnsupportedConfiguration("embed: element resets on '" + element.condition().signal +
                                       "', which is not the chain input once a block precedes it");
    }
    ResetStateSpace out = element;
    if (pre) out = series(ResetStateSpace(*pre), out);
    if (post) out = series(out, ResetStateSpace(*post));
    return out;
}

/// x+ = A_R x.
[[nodiscard]] inline Vector apply_reset(const ResetStateSpace& sys, const Vector& x) {
    if (x.size() != sys.order()) throw DimensionError("apply_reset: state dimension mismatch");
    Vector out   = x;
    const auto r = sys.resetting_indices();
    if (r.empty()) return out;
    Vector xr(static_cast<Eigen::Index>(r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) xr(static_cast<Eigen::Index>(i)) = x(r[i]);
    const Vector yr = sys.a_rho() * xr;
    for (std::size_t i = 0; i < r.size(); ++i) out(r[i]) = yr(static_cast<Eigen::Index>(i));
    return out;
}

}  // namespace reset
}  // namespace resetloop

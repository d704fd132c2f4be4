#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace resetloop;

TEST(Clegg, Structure) {
    const auto ci = reset::make_clegg(3.0);
    ASSERT_EQ(ci.order(), 1);
    EXPECT_EQ(ci.base().A()(0, 0), 0.0);
    EXPECT_EQ(ci.base().B()(0), 1.0);
    EXPECT_EQ(ci.base().C()(0), 3.0);
    EXPECT_TRUE(ci.reset_flags()[0]);
    EXPECT_EQ(ci.a_rho()(0, 0), 0.0);
    EXPECT_THROW((void)reset::make_clegg(0.0), ParameterError);
    EXPECT_THROW((void)reset::make_clegg(-1.0), ParameterError);
}

TEST(Clegg, DescribingFunctionAtUnitFrequency) {
    const auto g = harmonics::df(reset::make_clegg(1.0), 1.0);
    EXPECT_NEAR(std::abs(g), 1.6186, 1e-3 * 1.6186);
    EXPECT_NEAR(oracle::deg(std::arg(g)), -38.15, 0.01);
    // 51.9 deg less lag than the linear integrator
    EXPECT_NEAR(90.0 + oracle::deg(std::arg(g)), 51.85, 0.05);
}

TEST(Clegg, LinearLimit) {
    const auto ci = reset::make_clegg(1.0).linearized();
    for (double w : {0.1, 1.0, 10.0}) {
        const auto g = harmonics::df(ci, w);
        EXPECT_NEAR(std::abs(g - 1.0 / Complex(0, w)), 0.0, 1e-12);
    }
}

TEST(Clegg, ThirdHarmonicAtUnitFrequency) {
    const auto h = harmonics::hosidf(reset::make_clegg(1.0), 1.0, 3);
    EXPECT_NEAR(h.real(), 4.0 / (3.0 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(h.imag(), 0.0, 1e-12);
}

TEST(Fore, LinearLimitAtCorner) {
    const auto g = harmonics::df(reset::make_fore(813.0).linearized(), 813.0);
    EXPECT_NEAR(std::abs(g), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_THROW((void)reset::make_fore(0.0), ParameterError);
}

TEST(Fore, UnitGainForSlowInput) {
    const double wr = 813.0;
    EXPECT_NEAR(std::abs(harmonics::df(reset::make_fore(wr), wr / 1000.0)), 1.0, 0.01);
}

TEST(Fore, LessLagThanLinearAboveCorner) {
    const double wr = 813.0;
    const double reset_lag = -std::arg(harmonics::df(reset::make_fore(wr), 10 * wr));
    EXPECT_LT(reset_lag, std::atan(10.0));
    EXPECT_GT(reset_lag, 0.0);
}

TEST(ResetFilter, Kinds) {
    const double wc = 5.0;
    const auto lpf  = reset::make_reset_filter(FilterKind::lpf, wc, false);
    EXPECT_NEAR(oracle::deg(std::arg(harmonics::df(lpf, wc))), -45.0, 1e-10);
    const auto hpf = reset::make_reset_filter(FilterKind::hpf, wc, false);
    const auto sum = lti::parallel(lpf.base(), hpf.base());
    for (double w : {0.1, 5.0, 100.0}) EXPECT_NEAR(std::abs(lti::freq_response(sum, w) - 1.0), 0.0, 1e-12);
    const auto pi = reset::make_reset_filter(FilterKind::pi, wc, true);
    EXPECT_TRUE(pi.has_reset());
    EXPECT_FALSE(hpf.has_reset());
    EXPECT_THROW((void)reset::make_reset_filter(static_cast<FilterKind>(42), wc, true), ParameterError);
    EXPECT_THROW((void)reset::make_reset_filter(FilterKind::lpf, -1.0, true), ParameterError);
    EXPECT_THROW((void)parse_filter_kind("bpf"), ParameterError);
}

TEST(ResetFilter, ResettingLowPassLeadsLinearAboveCorner) {
    const double wc = 5.0, w = 50.0;
    const double lin = std::arg(harmonics::df(reset::make_reset_filter(FilterKind::lpf, wc, false), w));
    const double rst = std::arg(harmonics::df(reset::make_reset_filter(FilterKind::lpf, wc, true), w));
    EXPECT_GT(rst, lin);
}

TEST(Embed, Trivial) {
    const auto ci = reset::make_clegg(2.0);
    const auto e  = reset::embed(ci, std::nullopt, std::nullopt);
    EXPECT_EQ(e.base().A(), ci.base().A());
    EXPECT_EQ(e.reset_flags(), ci.reset_flags());
}

TEST(Embed, CleggThenPidIsProduct) {
    ControllerSpec spec = ControllerSpec::preset(ControllerKind::PID);
    const auto pid      = controllers::linear_tail(spec);
    const auto ci       = reset::make_clegg(94.28);
    const auto chain    = reset::embed(ci, std::nullopt, pid);
    EXPECT_EQ(chain.resetting_indices(), std::vector<Eigen::Index>{0});
    for (double w : {50.0, 200.0, 942.48, 3000.0}) {
        const Complex want = harmonics::df(ci, w) * lti::freq_response(pid, w);
        EXPECT_LT(std::abs(harmonics::df(chain, w) - want) / std::abs(want), 1e-6) << w;
    }
}

TEST(Embed, FlagsClearedIsLinearSeries) {
    const auto pre  = lti::tf_to_ss({{1.0}, {1.0, 3.0}});
    const auto post = lti::tf_to_ss({{2.0, 1.0}, {1.0, 7.0}});
    const auto e    = reset::embed(reset::make_fore(10.0).linearized(), pre, post);
    const auto lin  = lti::series(lti::series(pre, reset::make_fore(10.0).base()), post);
    EXPECT_TRUE(e.is_linear());
    EXPECT_EQ(e.base().A(), lin.A());
    for (double w : {0.5, 10.0, 300.0}) EXPECT_EQ(harmonics::df(e, w), lti::freq_response(lin, w));
}

TEST(Embed, ForeignConditionAfterPreIsUnsupported) {
    const auto base = reset::make_clegg(1.0);
    ResetStateSpace odd(base.base(), base.reset_flags(), std::nullopt, ResetCondition{"y"});
    EXPECT_THROW((void)reset::embed(odd, lti::tf_to_ss({{1.0}, {1.0, 1.0}}), std::nullopt), UnsupportedConfiguration);
    EXPECT_THROW((void)reset::series(odd, base), UnsupportedConfiguration);
}

TEST(ApplyReset, FullPartialAndIdentity) {
    Vector x(1);
    x << 0.7;
    EXPECT_EQ(reset::apply_reset(reset::make_clegg(1.0), x)(0), 0.0);

    const auto ci = reset::make_clegg(1.0);
    Matrix half(1, 1);
    half << 0.5;
    ResetStateSpace partial(ci.base(), ci.reset_flags(), half);
    x << 0.8;
    EXPECT_DOUBLE_EQ(reset::apply_reset(partial, x)(0), 0.4);

    const auto two = reset::series(partial, ResetStateSpace(lti::tf_to_ss({{1.0}, {1.0, 2.0}})));
    Vector y(2);
    y << 0.8, 1.3;
    const auto post = reset::apply_reset(two, y);
    EXPECT_DOUBLE_EQ(post(0), 0.4);
    EXPECT_EQ(post(1), 1.3);
    EXPECT_THROW((void)reset::apply_reset(two, x), DimensionError);
}

TEST(ApplyReset, IdempotentForProjectionRho) {
    const auto fore = reset::make_fore(3.0);
    for (double r : {0.0, 1.0}) {
        Matrix rho(1, 1);
        rho << r;
        ResetStateSpace s(fore.base(), fore.reset_flags(), rho);
        Vector x(1);
        x << -2.5;
        const auto once = reset::apply_reset(s, x);
        EXPECT_EQ(reset::apply_reset(s, once), once);
    }
}

TEST(ResetMatrix, BlockStructureAndRadius) {
    const auto chain = reset::series(ResetStateSpace(lti::tf_to_ss({{1.0}, {1.0, 2.0}})),
                                     reset::series(reset::make_clegg(1.0), reset::make_fore(5.0)));
    const Matrix ar = chain.reset_matrix();
    EXPECT_EQ(ar(0, 0), 1.0);
    EXPECT_EQ(ar(1, 1), 0.0);
    EXPECT_EQ(ar(2, 2), 0.0);
    EXPECT_LE(numerics::spectral_radius(ar), 1.0);
}

TEST(ResetStateSpaceType, Invariants) {
    const auto ci = reset::make_clegg(1.0);
    EXPECT_THROW(ResetStateSpace(ci.base(), {true, false}), DimensionError);
    Matrix big(1, 1);
    big << 1.5;
    EXPECT_THROW(ResetStateSpace(ci.base(), ci.reset_flags(), big), ParameterError);
    Matrix wrong(2, 2);
    wrong.setZero();
    EXPECT_THROW(ResetStateSpace(ci.base(), ci.reset_flags(), wrong), DimensionError);
    EXPECT_TRUE(ResetStateSpace(ci.base(), {false}).is_linear());
}

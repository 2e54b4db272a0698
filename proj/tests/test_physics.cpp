#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ossimm/physics.hpp"

using namespace ossimm;

namespace {

double rel_err(const CVector& a, const CVector& b) { return (a - b).norm() / b.norm(); }

CVector oracle_signal(const SequenceParams& s, const IsochromatParams& p, int n_record) {
    return oracle::bloch_isochromat(s.tr_s, s.te_s, s.flip_rad, s.n_c, s.n_warmup_tr, p.t1_s, p.t2_s, p.f0_hz,
                                    p.m0, n_record);
}

}  // namespace

TEST(QuadraticPhase, KnownValues) {
    EXPECT_DOUBLE_EQ(quadratic_phase(0, 10), 0.0);
    EXPECT_DOUBLE_EQ(quadratic_phase(1, 10), kPi / 10.0);
    EXPECT_DOUBLE_EQ(quadratic_phase(3, 10), 9.0 * kPi / 10.0);
    EXPECT_DOUBLE_EQ(quadratic_phase(5, 10), kPi * 5.0 / 10.0);  // 25 mod 20 = 5
}

TEST(QuadraticPhase, PeriodicInNc) {
    for (long long n = 0; n < 100; ++n) EXPECT_DOUBLE_EQ(quadratic_phase(n, 10), quadratic_phase(n + 10, 10));
    EXPECT_THROW(quadratic_phase(-1, 10), std::invalid_argument);
    EXPECT_THROW(quadratic_phase(1, 1), std::invalid_argument);
}

TEST(SequenceParams, Validation) {
    SequenceParams s;
    EXPECT_NO_THROW(s.validate());
    s.te_s = s.tr_s;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = SequenceParams{};
    s.n_warmup_tr = 675;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = SequenceParams{};
    s.n_c = 1;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Isochromat, RejectsInvalidTissue) {
    SequenceParams s;
    EXPECT_THROW(simulate_isochromat(s, {-1.0, 0.05, 0.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(simulate_isochromat(s, {1.0, 2.0, 0.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(simulate_isochromat(s, {1.0, 0.05, NAN, 1.0}), std::invalid_argument);
}

TEST(Isochromat, MatchesMatrixStepper) {
    SequenceParams s;
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> t1(0.6, 2.0), t2(0.03, 0.2), f0(-30.0, 30.0), ph(-3.0, 3.0);
    for (int i = 0; i < 10; ++i) {
        IsochromatParams p{t1(gen), t2(gen), f0(gen), std::polar(0.5 + 0.1 * i, ph(gen))};
        EXPECT_LT(rel_err(simulate_isochromat(s, p), oracle_signal(s, p, s.n_c)), 1e-12);
    }
}

TEST(Isochromat, ZeroFlipGivesZeroSignal) {
    SequenceParams s;
    s.flip_rad = 0.0;
    EXPECT_EQ(simulate_isochromat(s, {}).norm(), 0.0);
}

TEST(Isochromat, M0ScalesLinearly) {
    SequenceParams s;
    const CVector a = simulate_isochromat(s, {1.4, 0.0926, 3.0, 1.0});
    const CVector b = simulate_isochromat(s, {1.4, 0.0926, 3.0, std::polar(2.5, 0.7)});
    EXPECT_LT((b - std::polar(2.5, 0.7) * a).norm(), 1e-14);
}

TEST(Isochromat, PeriodicAfterWarmup) {
    SequenceParams s;
    IsochromatParams p{1.4, 0.0926, 4.0, 1.0};
    const CVector two = oracle_signal(s, p, 2 * s.n_c);
    EXPECT_LT((two.head(s.n_c) - two.tail(s.n_c)).norm(), 1e-6 * two.norm());
    SequenceParams longer = s;
    longer.n_warmup_tr += s.n_c;
    EXPECT_LT((simulate_isochromat(s, p) - simulate_isochromat(longer, p)).norm(), 1e-6 * two.norm());
}

TEST(Isochromat, LongT1NeedsLongerWarmup) {
    // Approach to steady state slows with T1; a longer warm-up restores periodicity.
    SequenceParams s;
    s.n_warmup_tr = 4000;
    SequenceParams s2 = s;
    s2.n_warmup_tr += s.n_c;
    IsochromatParams p{4.0, 0.2, 1.0, 1.0};
    const CVector a = simulate_isochromat(s, p);
    EXPECT_LT((a - simulate_isochromat(s2, p)).norm(), 1e-6 * a.norm());
}

TEST(Isochromat, MagnitudePeriodicInOffResonance) {
    SequenceParams s;
    for (double f : {-7.0, 0.3, 12.5}) {
        const CVector a = simulate_isochromat(s, {1.4, 0.0926, f, 1.0});
        const CVector b = simulate_isochromat(s, {1.4, 0.0926, f + 1.0 / s.tr_s, 1.0});
        for (int k = 0; k < s.n_c; ++k) EXPECT_NEAR(std::abs(a[k]), std::abs(b[k]), 1e-9 * a.cwiseAbs().maxCoeff());
    }
}

TEST(IsochromatBank, ParallelMatchesSerialBitwise) {
    SequenceParams s;
    std::vector<double> f;
    for (int i = 0; i < 257; ++i) f.push_back(-40.0 + 0.31 * i);
    const CMatrix a = isochromat_bank(s, 1.4, 0.0926, f);
    const CMatrix b = isochromat_bank_serial(s, 1.4, 0.0926, f);
    EXPECT_TRUE((a.array() == b.array()).all());
    EXPECT_LT((a.row(10).transpose() - simulate_isochromat(s, {1.4, 0.0926, f[10], 1.0})).norm(), 1e-15);
}

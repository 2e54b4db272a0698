#include <gtest/gtest.h>

#include <numeric>

#include "ossimm/manifold.hpp"

using namespace ossimm;

namespace {

DictionaryGrid small_grid(bool vary_t2) {
    DictionaryGrid g;
    g.t2_values_s = vary_t2 ? std::vector<double>{0.08, 0.0926, 0.1} : std::vector<double>{0.0926};
    g.r2star_values_hz = uniform_grid(15.0, 25.0, 2.5, true);
    g.f0_values_hz = uniform_grid(-2.0, 2.0, 1.0, false);
    return g;
}

}  // namespace

TEST(Cauchy, T2PrimeFromR2Star) {
    EXPECT_NEAR(t2prime_from_r2star(20.0, 0.1), 0.1, 1e-15);
    EXPECT_THROW(t2prime_from_r2star(10.0, 0.1), std::invalid_argument);
    EXPECT_THROW(t2prime_from_r2star(5.0, 0.1), std::invalid_argument);
}

TEST(Cauchy, WeightsNormalizedAndSymmetric) {
    const CauchyGrid g = cauchy_grid(0.05, 4000, 200.0);
    EXPECT_EQ(g.f_offsets_hz.size(), 4000u);
    EXPECT_NEAR(std::accumulate(g.weights.begin(), g.weights.end(), 0.0), 1.0, 1e-12);
    EXPECT_NEAR(g.f_offsets_hz.front(), -200.0, 1e-12);
    EXPECT_NEAR(g.f_offsets_hz.back(), 200.0, 1e-12);
    for (std::size_t i = 0; i < g.weights.size(); ++i)
        EXPECT_NEAR(g.weights[i], g.weights[g.weights.size() - 1 - i], 1e-15);
    // Truncation at +-200 Hz keeps almost all of the mass for T2' = 50 ms.
    EXPECT_GT(g.raw_mass, 0.98);
    EXPECT_NEAR(cauchy_scale_hz(0.05), 1.0 / (2.0 * kPi * 0.05), 1e-15);
}

TEST(Grid, EndpointSemantics) {
    EXPECT_EQ(uniform_grid(0.0, 1.0, 0.25, true).size(), 5u);
    EXPECT_EQ(uniform_grid(0.0, 1.0, 0.25, false).size(), 4u);
    const auto f0 = uniform_grid(-6.0, 6.0, 0.22, false);
    EXPECT_EQ(f0.size(), 55u);
    const auto r2 = uniform_grid(12.0, 38.0, 0.2, true);
    EXPECT_EQ(r2.size(), 131u);
    EXPECT_NEAR(r2.back(), 38.0, 1e-9);
}

TEST(VoxelSignal, LongT2PrimeApproachesIsochromat) {
    SequenceParams s;
    VoxelParams v{1.4, 0.0926, 1e4, 2.0, 1.0};
    const CVector a = voxel_signal(s, v, cauchy_grid(v.t2p_s, 4001, 200.0));
    const CVector b = simulate_isochromat(s, {1.4, 0.0926, 2.0, 1.0});
    EXPECT_LT((a - b).norm() / b.norm(), 1e-3);
}

TEST(VoxelSignal, BatchMatchesSingle) {
    SequenceParams s;
    const auto offs = cauchy_offsets(1000, 200.0);
    const std::vector<double> t2p = {0.05, 0.1};
    const CMatrix m = voxel_signals(s, 1.4, 0.0926, 1.5, t2p, offs);
    for (int j = 0; j < 2; ++j) {
        VoxelParams v{1.4, 0.0926, t2p[j], 1.5, 1.0};
        const CVector one = voxel_signal(s, v, cauchy_grid(t2p[j], 1000, 200.0));
        EXPECT_LT((m.row(j).transpose() - one).norm(), 1e-13);
    }
}

TEST(Dictionary, OrderingAndNormalization) {
    SequenceParams s;
    const DictionaryGrid g = small_grid(true);
    const Dictionary d = build_dictionary(s, g, 500, 200.0);
    const auto t2p = g.t2p_values_s();
    ASSERT_EQ(d.size(), static_cast<Eigen::Index>(3 * t2p.size() * 4));
    EXPECT_EQ(d.n_c(), s.n_c);
    for (Eigen::Index j = 0; j < d.size(); ++j) EXPECT_NEAR(d.atoms.row(j).norm(), 1.0, 1e-12);
    const Eigen::Index j = d.index_of(1, 2, 3);
    EXPECT_EQ(j, (1 * static_cast<Eigen::Index>(t2p.size()) + 2) * 4 + 3);
    EXPECT_DOUBLE_EQ(d.t2_s[j], 0.0926);
    EXPECT_DOUBLE_EQ(d.t2p_s[j], t2p[2]);
    EXPECT_DOUBLE_EQ(d.f0_hz[j], g.f0_values_hz[3]);
    EXPECT_NEAR(d.r2star_hz[j], 1.0 / 0.0926 + 1.0 / t2p[2], 1e-12);
    VoxelParams v{g.fixed_t1_s, 0.0926, t2p[2], g.f0_values_hz[3], 1.0};
    const CVector raw = voxel_signal(s, v, cauchy_grid(t2p[2], 500, 200.0));
    EXPECT_NEAR(d.norms[j], raw.norm(), 1e-12);
    EXPECT_LT((d.atoms.row(j).transpose() - raw / raw.norm()).norm(), 1e-12);
}

TEST(Dictionary, ParallelMatchesSerialBitwise) {
    SequenceParams s;
    const DictionaryGrid g = small_grid(true);
    const Dictionary a = build_dictionary(s, g, 300, 200.0);
    const Dictionary b = build_dictionary_serial(s, g, 300, 200.0);
    EXPECT_TRUE((a.atoms.array() == b.atoms.array()).all());
    EXPECT_TRUE((a.norms.array() == b.norms.array()).all());
}

TEST(Dictionary, Slices) {
    SequenceParams s;
    const Dictionary d = build_dictionary(s, small_grid(true), 300, 200.0);
    const Dictionary c = d.slice_t2(0.093);
    EXPECT_FALSE(c.varies_t2());
    EXPECT_EQ(c.size(), d.size() / 3);
    for (Eigen::Index j = 0; j < c.size(); ++j) EXPECT_DOUBLE_EQ(c.t2_s[j], 0.0926);
    const double t2p = d.grid.t2p_values_s()[1];
    const Dictionary b = d.slice_t2prime(t2p);
    EXPECT_EQ(b.size(), 3 * 4);
    for (Eigen::Index j = 0; j < b.size(); ++j) EXPECT_DOUBLE_EQ(b.t2p_s[j], t2p);
    const Eigen::Index k = d.index_of(2, 1, 0);
    EXPECT_TRUE((b.atoms.row(2 * 4).array() == d.atoms.row(k).array()).all());
}

TEST(Dictionary, AssembleRoundTrip) {
    SequenceParams s;
    const Dictionary d = build_dictionary(s, small_grid(false), 300, 200.0);
    const Dictionary r = assemble_dictionary(s, d.grid, 300, 200.0, d.atoms, d.norms);
    EXPECT_TRUE((r.match_basis.array() == d.match_basis.array()).all());
    EXPECT_EQ(r.r2star_hz, d.r2star_hz);
    EXPECT_THROW(assemble_dictionary(s, d.grid, 300, 200.0, d.atoms.topRows(3), d.norms), std::invalid_argument);
}

TEST(Dictionary, GridValidation) {
    DictionaryGrid g = small_grid(false);
    g.r2star_values_hz = {5.0};  // below 1 / T2
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

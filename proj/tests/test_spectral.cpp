#include "glued/error.hpp"
#include "glued/spectral.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace glued;

namespace {

/// Neumann eigenvalues of the lumped P1 Laplacian on a uniform grid of n cells over [0, 1].
double grid_eigenvalue(std::size_t n, std::size_t j)
{
    const double s = std::sin(static_cast<double>(j) * M_PI / (2.0 * static_cast<double>(n)));
    return 4.0 * static_cast<double>(n * n) * s * s;
}

DirichletSystem two_segments()
{
    return assemble(WeightedComplex(glue({build_segment_piece(1.0, 32, {}, "a"),
                                          build_segment_piece(1.0, 32, Placement::along(Vec3(0, 1, 0), Vec3::UnitX()),
                                                              "b")}),
                                    {}));
}

} // namespace

TEST(Eigen, IntervalMatchesGridOracle)
{
    const auto sys = test::interval(64);
    const auto rep = eigen(sys, 5);
    ASSERT_EQ(rep.eigenvalues.size(), 5u);
    EXPECT_LT(std::abs(rep.eigenvalues[0]), rep.tol);
    for (std::size_t j = 1; j < 5; ++j)
        EXPECT_NEAR(rep.eigenvalues[j], grid_eigenvalue(64, j), 1e-8 * grid_eigenvalue(64, j)) << j;
    EXPECT_EQ(rep.kernel_dim, 1u);
}

TEST(Eigen, IntervalNearPiSquared)
{
    const auto rep = eigen(test::interval(256), 2);
    EXPECT_LT(std::abs(rep.eigenvalues[0]), 1e-9);
    EXPECT_NEAR(rep.gap, M_PI * M_PI, 0.005 * M_PI * M_PI);
}

TEST(Eigen, ConnectedKernelIsConstant)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    const auto rep = eigen(sys, 3);
    const Vector phi0 = rep.eigenvectors.col(0);
    EXPECT_LT((phi0.array() - phi0.mean()).abs().maxCoeff(), 1e-8);
    EXPECT_NEAR(sys.norm(phi0), 1.0, 1e-10);
}

TEST(Eigen, DisjointSegmentsHaveTwoConstants)
{
    const auto sys = two_segments();
    const auto rep = eigen(sys, 4);
    EXPECT_EQ(rep.kernel_dim, 2u);
    // The kernel columns are constant on each component.
    for (int j = 0; j < 2; ++j) {
        const Vector v = rep.eigenvectors.col(j);
        for (Dof d = 1; d < sys.dof_count(); ++d)
            if (sys.complex().component(d) == sys.complex().component(d - 1))
                EXPECT_NEAR(v[static_cast<Eigen::Index>(d)], v[static_cast<Eigen::Index>(d - 1)], 1e-8);
    }
}

TEST(Eigen, GapInequalityOnComputedVectors)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    const auto rep = eigen(sys, 6);
    for (Eigen::Index j = 1; j < rep.eigenvectors.cols(); ++j) {
        const Vector phi = rep.eigenvectors.col(j);
        EXPECT_NEAR(sys.integral(phi), 0.0, 1e-8);
        EXPECT_GE(sys.energy(phi), rep.gap * sys.inner(phi, phi) * (1.0 - 1e-8));
    }
}

TEST(Eigen, WeightedJunctionGapStable)
{
    const auto a = eigen(assemble(test::disk_segment_weighted(16)), 3);
    const auto b = eigen(assemble(test::disk_segment_weighted(32)), 3);
    EXPECT_EQ(a.kernel_dim, 1u);
    EXPECT_EQ(b.kernel_dim, 1u);
    EXPECT_LT(std::abs(b.gap - a.gap) / a.gap, 0.2);
}

TEST(Ergodicity, WeightedJunctionIsErgodic)
{
    const double levels[] = {8, 16, 32};
    const auto v = ergodicity_verdict([](double l) { return assemble(test::disk_segment_weighted(std::size_t(l))); },
                                      levels);
    EXPECT_EQ(v.verdict, Ergodicity::ergodic) << v.reason;
    EXPECT_GT(v.ratio, 0.5);
}

TEST(Ergodicity, SinglePieceIsErgodic)
{
    const double levels[] = {16, 32};
    const auto v = ergodicity_verdict([](double l) { return test::interval(std::size_t(l)); }, levels);
    EXPECT_EQ(v.verdict, Ergodicity::ergodic);
}

TEST(Ergodicity, VerdictRules)
{
    EXPECT_EQ(ergodicity_verdict({{1, 1.0, 1}, {2, 0.1, 1}}).verdict, Ergodicity::degenerate);
    EXPECT_EQ(ergodicity_verdict({{1, 1.0, 1}, {2, 0.3, 1}}).verdict, Ergodicity::inconclusive);
    EXPECT_EQ(ergodicity_verdict({{1, 1.0, 2}, {2, 1.0, 2}}).verdict, Ergodicity::degenerate);
    EXPECT_EQ(ergodicity_verdict({{1, 1.0, 1}, {2, not_resolved, 1}}).verdict, Ergodicity::inconclusive);
    EXPECT_EQ(ergodicity_verdict({{1, 1.0, 1}, {2, 0.1, 1}}, {0.5, 0.05}).verdict, Ergodicity::inconclusive);
}

TEST(Decay, FirstModeRate)
{
    const auto sys = test::interval(128);
    const auto rep = eigen(sys, 3);
    const auto fit = decay_fit(sys, rep.eigenvectors.col(1), 0.3, 1e-3);
    EXPECT_NEAR(fit.corrected_rate, rep.eigenvalues[1], 1e-3 * rep.eigenvalues[1]);
    // Uncorrected: log(1 + lambda tau)/tau.
    EXPECT_NEAR(fit.rate, std::log1p(rep.eigenvalues[1] * 1e-3) / 1e-3, 1e-3 * rep.eigenvalues[1]);
}

TEST(Decay, SecondModeFaster)
{
    const auto sys = test::interval(128);
    const auto rep = eigen(sys, 3);
    const auto fit = decay_fit(sys, rep.eigenvectors.col(2), 0.1, 1e-4);
    EXPECT_NEAR(fit.corrected_rate, rep.eigenvalues[2], 5e-3 * rep.eigenvalues[2]);
    EXPECT_GT(fit.corrected_rate, rep.eigenvalues[1]);
}

TEST(Decay, ConstantRejected)
{
    const auto sys = test::interval(16);
    EXPECT_THROW(decay_fit(sys, Vector::Ones(17), 1.0, 0.1), Error);
}

TEST(Support, WholeSpaceStaysWhole)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    std::vector<Dof> all(sys.dof_count());
    std::iota(all.begin(), all.end(), Dof{0});
    EXPECT_EQ(support_spread(sys, all, 0.3).support.size(), sys.dof_count());
}

TEST(Support, RimVertexReachesEverything)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    const Dof rim = nearest_dof(sys.complex(), Vec3(1, 0, 0));
    EXPECT_EQ(support_spread(sys, std::span<const Dof>(&rim, 1), 4.0).support.size(), sys.dof_count());
}

TEST(Support, ConfinedToComponent)
{
    const auto sys = two_segments();
    const Dof start = 3;
    const auto sp = support_spread(sys, std::span<const Dof>(&start, 1), 10.0);
    for (Dof d : sp.support) EXPECT_EQ(sys.complex().component(d), sys.complex().component(start));
    EXPECT_EQ(sp.component_dofs, 33u);
}

TEST(Support, MonotoneInTimeAndSet)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    std::vector<Dof> small{nearest_dof(sys.complex(), Vec3(0.5, 0, 0))};
    std::vector<Dof> big = small;
    big.push_back(nearest_dof(sys.complex(), Vec3(0, 0, 0.8)));
    std::sort(big.begin(), big.end());
    std::size_t prev = 0;
    for (double t : {1e-4, 1e-3, 1e-2}) {
        const auto s = support_spread(sys, small, t, 1);
        const auto b = support_spread(sys, big, t, 1);
        EXPECT_GE(s.support.size(), prev);
        EXPECT_TRUE(std::includes(b.support.begin(), b.support.end(), s.support.begin(), s.support.end()));
        prev = s.support.size();
    }
}

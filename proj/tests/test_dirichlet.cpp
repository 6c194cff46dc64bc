#include "glued/dirichlet.hpp"
#include "glued/mesh_io.hpp"
#include "glued/spectral.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace glued;

TEST(Assemble, TwoCellInterval)
{
    const auto sys = test::interval(2);
    const Eigen::MatrixXd K = Eigen::MatrixXd(sys.stiffness());
    Eigen::Matrix3d expected;
    expected << 2, -2, 0, -2, 4, -2, 0, -2, 2;
    EXPECT_LT((K - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sys.mass() - Eigen::Vector3d(0.25, 0.5, 0.25)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Assemble, ConstantsHaveZeroEnergy)
{
    for (const auto& sys : {test::interval(7), assemble(test::disk_segment_weighted(8))}) {
        const Vector one = Vector::Ones(static_cast<Eigen::Index>(sys.dof_count()));
        EXPECT_NEAR(sys.energy(one), 0.0, 1e-10);
    }
}

TEST(Assemble, LinearFunctionHasUnitEnergy)
{
    for (std::size_t n : {1u, 3u, 64u, 1000u}) {
        const auto sys = test::interval(n);
        EXPECT_NEAR(sys.energy(test::coordinate(sys)), 1.0, 1e-9) << n;
    }
}

TEST(Assemble, SymmetricPositiveSemidefinite)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    const SparseMatrix& K = sys.stiffness();
    EXPECT_EQ((K - SparseMatrix(K.transpose())).norm(), 0.0);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) EXPECT_GE(sys.energy(test::random_vector(rng, sys.dof_count())), -1e-12);
}

TEST(Assemble, RowSumsVanishAcrossPieces)
{
    const auto sys = assemble(test::disk_segment_weighted(16));
    const Vector r = sys.stiffness() * Vector::Ones(static_cast<Eigen::Index>(sys.dof_count()));
    const double scale = sys.stiffness().coeffs().cwiseAbs().maxCoeff();
    for (Dof d : sys.complex().glue_maps()[0].dofs) EXPECT_NEAR(r[static_cast<Eigen::Index>(d)], 0.0, 1e-12 * scale);
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-12 * scale);
}

TEST(Assemble, ObtuseMeshReportsViolations)
{
    std::istringstream in("dim 2\nvertices 4\n0 0 0\n2 0 0\n1 0.1 0\n1 -0.1 0\ncells 2\n0 1 2\n0 3 1\n");
    const auto sys = assemble(WeightedComplex(glue({read_mesh(in, "sliver")}), {}));
    EXPECT_FALSE(sys.compliant());
    ASSERT_FALSE(sys.violations().empty());
    EXPECT_GT(sys.violations()[0].value, 0.0);
    EXPECT_TRUE(assemble(test::disk_segment_weighted(16)).compliant());
}

TEST(Assemble, EnergyDensityIntegratesToEnergy)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    std::mt19937_64 rng(6);
    const Vector u = test::random_vector(rng, sys.dof_count());
    const auto dens = energy_density(sys, u);
    double total = 0.0;
    std::size_t i = 0;
    for (const auto& p : sys.complex().pieces())
        for (std::size_t c = 0; c < p.cell_count(); ++c) total += dens[i++] * p.cell_volume(c);
    EXPECT_NEAR(total, sys.energy(u), 1e-9 * sys.energy(u));
}

TEST(Resolvent, ConstantsAreFixed)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    const Vector c = Vector::Constant(static_cast<Eigen::Index>(sys.dof_count()), 3.5);
    EXPECT_LT((apply_resolvent(sys, c) - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Resolvent, EigenvectorIsScaled)
{
    const auto sys = test::interval(64);
    const auto rep = eigen(sys, 3);
    const Vector phi = rep.eigenvectors.col(1);
    const Vector u = apply_resolvent(sys, phi);
    EXPECT_LT((u - phi / (1.0 + rep.eigenvalues[1])).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Resolvent, ContractionOnRandomInputs)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const Vector f = test::random_vector(rng, sys.dof_count());
        EXPECT_LE(sys.norm(apply_resolvent(sys, f)), sys.norm(f) * (1.0 + 1e-12));
    }
}

TEST(Resolvent, SelfAdjointInMuInnerProduct)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    std::mt19937_64 rng(8);
    for (int i = 0; i < 10; ++i) {
        const Vector f = test::random_vector(rng, sys.dof_count()), g = test::random_vector(rng, sys.dof_count());
        EXPECT_NEAR(sys.inner(apply_resolvent(sys, f), g), sys.inner(f, apply_resolvent(sys, g)), 1e-10);
    }
}

TEST(Heat, ConstantStaysConstant)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    HeatState s{Vector::Constant(static_cast<Eigen::Index>(sys.dof_count()), -2.0), 0.0, {}};
    const auto next = heat_step(sys, s, 0.1);
    EXPECT_LT((next.values.array() + 2.0).abs().maxCoeff(), 1e-12);
    EXPECT_DOUBLE_EQ(next.time, 0.1);
}

TEST(Heat, MassConservedOnRandomStates)
{
    const auto sys = assemble(test::disk_segment_weighted(16));
    std::mt19937_64 rng(9);
    for (double tau : {1e-4, 1e-2, 1.0}) {
        const Vector u = test::random_vector(rng, sys.dof_count(), 0.0, 1.0);
        const ImplicitEuler step(sys, tau);
        const double before = sys.integral(u), after = sys.integral(step.step(u));
        EXPECT_LT(std::abs(after - before) / std::abs(before), 1e-10) << tau;
    }
}

TEST(Heat, CosineDecaysLikeFirstMode)
{
    const auto sys = test::interval(256);
    const Vector u0 = (M_PI * test::coordinate(sys)).array().cos().matrix();
    const auto traj = evolve(sys, u0, uniform_schedule(0.1, 1000));
    const double ratio = traj.points.back().deviation / traj.points.front().deviation;
    EXPECT_NEAR(ratio, std::exp(-M_PI * M_PI * 0.1), 0.02 * std::exp(-M_PI * M_PI * 0.1));
}

TEST(Heat, EnergyNonIncreasing)
{
    const auto sys = assemble(test::disk_segment_weighted(16));
    std::mt19937_64 rng(10);
    const auto traj = evolve(sys, test::random_vector(rng, sys.dof_count()), uniform_schedule(0.5, 50));
    for (std::size_t i = 1; i < traj.points.size(); ++i)
        EXPECT_LE(traj.points[i].energy, traj.points[i - 1].energy * (1.0 + 1e-12));
}

TEST(Heat, IndicatorStaysInUnitInterval)
{
    const auto sys = assemble(test::disk_segment_weighted(16));
    ASSERT_TRUE(sys.compliant());
    Vector chi = Vector::Zero(static_cast<Eigen::Index>(sys.dof_count()));
    for (Dof d : sys.complex().piece_dofs(1)) chi[static_cast<Eigen::Index>(d)] = 1.0;
    const auto traj = evolve(sys, chi, uniform_schedule(0.2, 40));
    for (const auto& p : traj.points) {
        EXPECT_GE(p.min, -1e-10);
        EXPECT_LE(p.max, 1.0 + 1e-10);
    }
}

TEST(Heat, FirstOrderInTime)
{
    // Global error of implicit Euler at fixed T halves with the step.
    const auto sys = test::interval(128);
    const Vector u0 = (M_PI * test::coordinate(sys)).array().cos().matrix();
    auto run = [&](std::size_t n) { return evolve(sys, u0, uniform_schedule(0.1, n)).final_state.values; };
    const double d1 = sys.norm(run(40) - run(20)), d2 = sys.norm(run(80) - run(40));
    EXPECT_NEAR(d1 / d2, 2.0, 0.1);
}

TEST(Heat, DecayBoundedByGap)
{
    // Each implicit step contracts mean-free data by at least 1/(1 + tau lambda_1);
    // relative to exp(-lambda_1 T) this is the documented slack eps(tau).
    const auto sys = assemble(test::disk_segment_weighted(8));
    const double l1 = eigen(sys, 3).gap;
    std::mt19937_64 rng(11);
    Vector f = test::random_vector(rng, sys.dof_count());
    f.array() -= sys.mean(f);
    const double T = 0.2, tau = 1e-2;
    const auto traj = evolve(sys, f, uniform_schedule(T, 20));
    const double bound = std::pow(1.0 + tau * l1, -20.0) * sys.norm(f);
    EXPECT_LE(sys.norm(traj.final_state.values), bound * (1.0 + 1e-8));
    const double eps = std::pow(1.0 + tau * l1, -20.0) * std::exp(l1 * T) - 1.0;
    EXPECT_LE(sys.norm(traj.final_state.values), std::exp(-l1 * T) * sys.norm(f) * (1.0 + eps) * (1.0 + 1e-8));
}

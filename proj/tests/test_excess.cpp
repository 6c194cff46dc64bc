#include "glued/error.hpp"
#include "glued/excess.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace glued;

namespace {

CellSet everything(const GluedComplex& cx, std::uint8_t v)
{
    CellSet s;
    for (const auto& p : cx.pieces()) s.emplace_back(p.cell_count(), v);
    return s;
}

CellSet left_half(const GluedComplex& cx) { return half_space_cells(cx, Vec3::UnitX(), 0.5); }

ErrorKind kind_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::numeric;
}

} // namespace

TEST(Excess, ConstantFunctionIsZero)
{
    const auto sys = assemble(test::disk_segment_weighted(4));
    const auto e = heat_excess_general(sys, Vector::Constant(static_cast<Eigen::Index>(sys.dof_count()), 2.0), 0.01);
    EXPECT_EQ(e.value, 0.0);
    EXPECT_TRUE(e.exact);
}

TEST(Excess, EmptyAndFullSetsAreZero)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    for (std::uint8_t v : {0, 1}) {
        const auto e = heat_excess(sys, characteristic(sys, everything(sys.complex(), v)), 0.01);
        EXPECT_NEAR(e.symmetric, 0.0, 1e-12) << int(v);
        EXPECT_NEAR(e.one_sided, 0.0, 1e-12) << int(v);
    }
}

TEST(Excess, SymmetricFormIgnoresComplement)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    const auto U = half_space_cells(sys.complex(), Vec3(1, 1, 0).normalized(), 0.1);
    const Vector chi = characteristic(sys, U);
    const Vector comp = Vector::Ones(chi.size()) - chi;
    // Equal up to the CG tolerance of the two solves.
    for (double h : {1e-3, 1e-2, 1e-1}) {
        const double a = heat_excess(sys, chi, h).symmetric;
        EXPECT_NEAR(a, heat_excess(sys, comp, h).symmetric, 1e-7 * a) << h;
    }
}

TEST(Excess, BoundedByMeasureOfSet)
{
    const auto sys = assemble(test::disk_segment_weighted(8));
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> off(-0.8, 0.8), ang(0.0, 2.0 * M_PI);
    for (int i = 0; i < 20; ++i) {
        const double a = ang(rng);
        const Vector chi = characteristic(sys, half_space_cells(sys.complex(), Vec3(std::cos(a), std::sin(a), 0), off(rng)));
        const double m = sys.integral(chi);
        const auto e = heat_excess(sys, chi, 0.05);
        EXPECT_GE(e.one_sided, -1e-12);
        EXPECT_LE(e.one_sided, std::min(m, sys.total_mass() - m) * (1.0 + 1e-9));
        EXPECT_LE(e.symmetric, 2.0 * std::min(m, sys.total_mass() - m) * (1.0 + 1e-9));
    }
}

TEST(Excess, GeneralFormBelowTwiceL1Norm)
{
    const auto sys = assemble(test::disk_segment_weighted(4));
    std::mt19937_64 rng(42);
    for (int i = 0; i < 5; ++i) {
        const Vector f = test::random_vector(rng, sys.dof_count());
        const double l1 = sys.integral(f.cwiseAbs());
        EXPECT_LE(heat_excess_general(sys, f, 0.05).value, 2.0 * l1 * (1.0 + 1e-9));
    }
}

TEST(Excess, GeneralFormAgreesOnIndicators)
{
    const auto sys = assemble(test::disk_segment_weighted(4));
    const auto U = half_space_cells(sys.complex(), Vec3::UnitX(), 0.2);
    const Vector chi = characteristic(sys, U);
    Vector f = Vector::Zero(chi.size());
    // Threshold the lumped characteristic so f is a genuine indicator on vertices.
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = chi[i] == 1.0 ? 1.0 : 0.0;
    const double h = 0.02;
    EXPECT_NEAR(heat_excess_general(sys, f, h).value, heat_excess(sys, f, h).symmetric, 1e-7);
}

TEST(Excess, SampledGeneralFormWithinErrorBars)
{
    const auto sys = assemble(test::disk_segment_weighted(4));
    const Vector f = test::coordinate(sys, 0);
    const auto full = heat_excess_general(sys, f, 0.02);
    const auto sampled = heat_excess_general(sys, f, 0.02, 200, 5);
    EXPECT_FALSE(sampled.exact);
    EXPECT_GT(sampled.standard_error, 0.0);
    EXPECT_NEAR(sampled.value, full.value, 4.0 * sampled.standard_error);
}

TEST(Perimeter, HalfDiskDiameter)
{
    const auto wc = WeightedComplex(glue({build_disk_piece(1.0, 64)}), {});
    const auto U = half_space_cells(wc.complex(), Vec3::UnitX(), 0.0);
    EXPECT_NEAR(discrete_perimeter(wc, U), 2.0, 0.04);
}

TEST(Perimeter, WholeSpaceHasNone)
{
    const auto wc = test::disk_segment_weighted(8);
    EXPECT_EQ(discrete_perimeter(wc, everything(wc.complex(), 1)), 0.0);
}

TEST(Perimeter, SegmentCutCountsWeight)
{
    const auto wc = WeightedComplex(glue({build_segment_piece(1.0, 16)}), {WeightSpec::constant("segment", 3.0)});
    EXPECT_NEAR(discrete_perimeter(wc, left_half(wc.complex())), 3.0, 1e-12);
}

TEST(Perimeter, ComplementHasSamePerimeter)
{
    const auto wc = test::disk_segment_weighted(16);
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> off(-0.7, 0.7), ang(0.0, 2.0 * M_PI);
    int finite = 0;
    for (int i = 0; i < 10; ++i) {
        const double a = ang(rng);
        auto U = half_space_cells(wc.complex(), Vec3(std::cos(a), std::sin(a), 0.3), off(rng));
        auto C = U;
        for (auto& piece : C)
            for (auto& c : piece) c = !c;
        // Interfaces through the junction carry infinite weighted length on both sides.
        const double pu = discrete_perimeter(wc, U), pc = discrete_perimeter(wc, C);
        if (std::isinf(pu)) EXPECT_TRUE(std::isinf(pc));
        else EXPECT_NEAR(pu, pc, 1e-12 * pu);
        finite += std::isfinite(pu);
    }
    EXPECT_GE(finite, 5);
}

TEST(Perimeter, AdditiveOverPieces)
{
    const auto wc = test::disk_segment_weighted(16);
    const auto disk = half_space_cells(wc.complex(), Vec3::UnitX(), 0.3, "disk");
    const auto seg = half_space_cells(wc.complex(), Vec3::UnitZ(), 0.5, "segment");
    CellSet both = disk;
    for (std::size_t p = 0; p < both.size(); ++p)
        for (std::size_t c = 0; c < both[p].size(); ++c) both[p][c] |= seg[p][c];
    EXPECT_NEAR(discrete_perimeter(wc, both), discrete_perimeter(wc, disk) + discrete_perimeter(wc, seg), 1e-12);
}

TEST(Curve, IntervalCutMatchesFlatLimit)
{
    const auto sys = test::interval(512);
    const double hs[] = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
    const auto c = excess_curve(sys, left_half(sys.complex()), hs);
    EXPECT_NEAR(c.reference_perimeter, 1.0, 1e-12);
    EXPECT_LT(c.deviation, 0.03);
    EXPECT_NEAR(c.normalization, 2.0 / std::sqrt(M_PI), 1e-15);
    EXPECT_GT(c.samples.front().h, c.samples.back().h);
}

TEST(Curve, RefinementConsistency)
{
    const double hs[] = {4e-3, 1e-3};
    std::vector<double> e;
    for (std::size_t n : {256u, 512u}) {
        const auto sys = test::interval(n);
        e.push_back(excess_curve(sys, left_half(sys.complex()), hs).samples.back().excess);
    }
    EXPECT_LT(std::abs(e[1] - e[0]) / e[1], 0.01);
}

TEST(Curve, OneSidedIsHalfSymmetric)
{
    const auto sys = test::interval(128);
    const double hs[] = {1e-2, 1e-3};
    const auto U = left_half(sys.complex());
    const auto sym = excess_curve(sys, U, hs, ExcessConvention::symmetric);
    const auto one = excess_curve(sys, U, hs, ExcessConvention::one_sided);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(one.samples[i].excess, 0.5 * sym.samples[i].excess, 1e-9);
    EXPECT_NEAR(one.samples[0].normalized, sym.samples[0].normalized, 1e-9);
}

TEST(Probe, GluedExampleProducesCurves)
{
    const auto sys = assemble(test::disk_segment_weighted(32));
    const std::vector<CellSet> family{half_space_cells(sys.complex(), Vec3::UnitX(), 0.0, "disk"),
                                      half_space_cells(sys.complex(), Vec3::UnitZ(), 0.5, "segment")};
    const double hs[] = {10.0, 3.0, 1.0, 0.3, 0.1};
    const auto probe = gamma_probe(sys, family, hs);
    ASSERT_EQ(probe.curves.size(), 2u);
    ASSERT_EQ(probe.within.size(), 2u);
    for (const auto& c : probe.curves) {
        EXPECT_EQ(c.samples.size(), 5u);
        for (const auto& s : c.samples) EXPECT_GT(s.excess, 0.0);
    }
    EXPECT_FALSE(probe.note.empty());
}

TEST(Probe, RejectsUnresolvedSchedule)
{
    const auto sys = test::interval(64);
    const std::vector<CellSet> family{left_half(sys.complex())};
    const double fine[] = {1e-2, 1e-3, 1e-4, 1e-5};
    EXPECT_EQ(kind_of([&] { gamma_probe(sys, family, fine); }), ErrorKind::invalid_parameter);
    const double short_range[] = {1e-1, 8e-2, 6e-2, 5e-2};
    EXPECT_EQ(kind_of([&] { gamma_probe(sys, family, short_range); }), ErrorKind::invalid_parameter);
    const double few[] = {1e-1, 1e-3};
    EXPECT_EQ(kind_of([&] { gamma_probe(sys, family, few); }), ErrorKind::invalid_parameter);
}

#pragma once

/**
 * @file excess.hpp
 * @brief Heat excess E_h, discrete perimeter and the h -> 0 extrapolation probe.
 */

#include "glued/dirichlet.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace glued {

/// Cell membership per piece: sets[p][c] != 0 when cell c of piece p is in U.
using CellSet = std::vector<std::vector<std::uint8_t>>;

/// Cells whose vertices all lie in U. `snapped` is set when U is not the
/// vertex set of a union of closed cells.
CellSet cells_from_dofs(const GluedComplex& complex, std::span<const Dof> U, bool* snapped = nullptr);

/// Cells of `piece` (all pieces when empty) whose centroid satisfies normal.x > offset.
CellSet half_space_cells(const GluedComplex& complex, const Vec3& normal, double offset,
                         const std::string& piece = {});

/// Per-DOF fraction of lumped mass contributed by cells of U.
Vector characteristic(const DirichletSystem& system, const CellSet& U);

enum class ExcessConvention { one_sided, symmetric };
const char* to_string(ExcessConvention c);
/// Flat-space limit of E_h / (sqrt(h) Per): 1/sqrt(pi) one-sided, 2/sqrt(pi) symmetric.
double excess_normalization(ExcessConvention c);

struct ExcessValue {
    /// int (1 - chi) S_h chi dmu.
    double one_sided = 0.0;
    /// int (1 - chi) S_h chi + int chi S_h (1 - chi) dmu.
    double symmetric = 0.0;
    double get(ExcessConvention c) const { return c == ExcessConvention::symmetric ? symmetric : one_sided; }
};

/// Default number of implicit Euler substeps for S_h.
inline constexpr std::size_t excess_substeps = 32;

/// Excess of a characteristic vector chi (entries in [0, 1]).
ExcessValue heat_excess(const DirichletSystem& system, const Vector& chi, double h,
                        std::size_t substeps = excess_substeps);

struct GeneralExcess {
    double value = 0.0;
    double standard_error = 0.0;
    std::size_t sources = 0;
    bool exact = false;
};

/**
 * @brief E_h(f) = sum_x M_x (S_h g_x)(x) with g_x = |f(x) - f(.)|.
 *
 * Row x of the heat kernel is one evolve of the unit mu-mass at x. With
 * `samples` = 0 every DOF is a source; otherwise sources are drawn with
 * probability M_x / mu(X) from `seed` and the standard error is reported.
 */
GeneralExcess heat_excess_general(const DirichletSystem& system, const Vector& f, double h, std::size_t samples = 0,
                                  std::uint64_t seed = 0, std::size_t substeps = excess_substeps);

/// Sum over interface facets of int_facet omega; a 1D cut point contributes omega there.
double discrete_perimeter(const WeightedComplex& weighted, const CellSet& U);

struct ExcessSample {
    double h;
    double excess;
    double scaled;
    double normalized;
};

struct ExcessCurve {
    /// Sorted by h descending.
    std::vector<ExcessSample> samples;
    ExcessConvention convention = ExcessConvention::symmetric;
    double normalization = 0.0;
    /// Fit E_h / sqrt(h) = a + b sqrt(h); a is the extrapolated limit.
    double extrapolated_limit = 0.0;
    double slope = 0.0;
    double fit_residual = 0.0;
    double reference_perimeter = 0.0;
    /// |a / normalization - perimeter| / perimeter (NaN for zero perimeter).
    double deviation = 0.0;
};

ExcessCurve excess_curve(const DirichletSystem& system, const CellSet& U, std::span<const double> h_schedule,
                         ExcessConvention convention = ExcessConvention::symmetric,
                         std::size_t substeps = excess_substeps);

struct GammaProbe {
    std::vector<ExcessCurve> curves;
    double tolerance = 0.05;
    /// Per curve: deviation <= tolerance (or zero excess for zero perimeter).
    std::vector<bool> within;
    std::string note;
};

/// Minimum ratio sqrt(h_min) / max cell diameter accepted by gamma_probe.
inline constexpr double excess_resolution_ratio = 8.0;

/**
 * @brief Excess curves for a family of sets, after checking the schedule.
 *
 * Requires at least 4 values of h spanning 2 decades and
 * sqrt(h_min) >= 8 * max cell diameter; otherwise throws invalid_parameter.
 * Only pointwise limits along fixed sets are computed; Gamma-convergence
 * itself is not checked.
 */
GammaProbe gamma_probe(const DirichletSystem& system, const std::vector<CellSet>& family,
                       std::span<const double> h_schedule, ExcessConvention convention = ExcessConvention::symmetric,
                       double tolerance = 0.05);

} // namespace glued

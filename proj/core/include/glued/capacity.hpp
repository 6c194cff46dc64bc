#pragma once

/**
 * @file capacity.hpp
 * @brief Relative capacities by energy minimization and the capacity
 * lower/upper bound integrals around an intersection.
 */

#include "glued/dirichlet.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace glued {

/// DOFs at glued distance <= r from the intersection, ascending.
std::vector<Dof> tube(const GluedComplex& complex, const std::string& intersection_id, double r);

struct CapacityResult {
    double value = 0.0;
    Vector potential;
    std::vector<Dof> K_set;
    std::vector<Dof> Omega;
    double residual = 0.0;
    /// 0 <= u <= 1 within 1e-12 (obstacle inactive off K_set).
    bool maximum_principle = true;
};

/**
 * @brief Discrete Cap(K, Omega) = min u.Ku with u = 1 on K_set and u = 0 off Omega.
 *
 * Solved as an equality-constrained harmonic problem with a sparse LDL^T
 * factorization. Components of Omega \ K_set that touch only K_set are set
 * to 1, isolated ones to 0; both carry no energy. Throws invalid_parameter
 * for an empty K_set, K_set not inside Omega, or K_set adjacent to the
 * complement of Omega.
 */
CapacityResult relative_capacity(const SparseMatrix& stiffness, std::span<const Dof> K_set,
                                 std::span<const Dof> Omega);
CapacityResult relative_capacity(const DirichletSystem& system, std::span<const Dof> K_set,
                                 std::span<const Dof> Omega);

/// DOFs with distance strictly below R (relative slack 1e-9): the open set {d < R}.
std::vector<Dof> open_sublevel(std::span<const double> dist, double R);
/// DOFs with distance at most r (relative slack 1e-9).
std::vector<Dof> closed_sublevel(std::span<const double> dist, double r);

struct BoundOptions {
    /// Power weight dist(., L)^(-alpha) on the piece in place of its declared
    /// weight. Only alpha < n - k is required (the bound integral is
    /// meaningful beyond the admissible range).
    std::optional<double> alpha;
    int points_per_decade = 16;
    /// Decades integrated below the mesh scale with the local power model.
    int decades_below_mesh = 6;
    /// Decade-increment ratio below which the integral is declared finite.
    double finite_ratio = 0.9;
};

struct IntegrandSample {
    double rho;
    double N;
    double mu;
    double integrand;
    bool model;
};

struct BoundEvaluation {
    double lower = 0.0;
    double upper = 0.0;
    /// Boundary term N(R) R^2 / mu_i(L_R).
    double boundary_term = 0.0;
    /// int_0^R N(rho) rho / mu_i(L_rho) drho (infinite when divergent).
    double integral = 0.0;
    /// 2(n-k-1) int rho^-(2n-2k-1) (1/omega)(L_rho) drho + R^-(2(n-k-1)) (1/omega)(L_R).
    double general_integral = 0.0;
    double general_lower = 0.0;
    std::vector<double> decade_increments;
    /// Ratio of the two deepest decade increments.
    double increment_ratio = 0.0;
    bool finite = false;
    /// lower / upper, logged rather than assumed to be 1.
    double comparability = 0.0;
    /// Local exponent e with mu_i(L_rho) ~ rho^e below the mesh scale.
    double model_exponent = 0.0;
    double mesh_scale = 0.0;
    std::vector<IntegrandSample> integrand_table;
    int n = 0;
    int k = 0;
    double alpha = 0.0;
};

/**
 * @brief Lower bound integral with N(rho) = mu(L_{3rho/2})/mu(L_{rho/2}) and
 * the dyadic competitor upper bound on piece `piece`.
 *
 * Tube measures come from the mesh above 4x the piece's cell diameter and
 * from the power model mu(L_rho) ~ rho^(n-k-alpha), matched at that scale,
 * below it. The verdict is finite when decade increments of the integral
 * shrink by more than `finite_ratio`.
 */
BoundEvaluation capacity_bounds(const WeightedComplex& weighted, const std::string& intersection_id,
                                std::size_t piece, double R, const BoundOptions& options = {});

struct EquivalenceLevel {
    double level;
    double capacity_a;
    double capacity_b;
};

struct EquivalenceReport {
    std::string intersection;
    std::size_t piece_a = 0;
    std::size_t piece_b = 0;
    double R = 0.0;
    std::vector<EquivalenceLevel> levels;
    bool positive_a = false;
    bool positive_b = false;
    bool mismatch = false;
};

/// Capacity of L in L_R computed within each piece alone, along a refinement ladder.
/// A side is positive when its last/first ratio stays above `stable_ratio`.
EquivalenceReport capacity_equivalence_check(const std::function<WeightedComplex(double)>& build,
                                             std::span<const double> levels, const std::string& intersection_id,
                                             double R, double stable_ratio = 0.8);

} // namespace glued

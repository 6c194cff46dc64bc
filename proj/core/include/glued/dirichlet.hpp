#pragma once

/**
 * @file dirichlet.hpp
 * @brief Discrete Dirichlet form (P1 stiffness, lumped mass), resolvent and heat semigroup.
 */

#include "glued/measure.hpp"

#include <Eigen/Core>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <memory>
#include <optional>
#include <vector>

namespace glued {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// A positive off-diagonal stiffness entry (breaks the discrete maximum principle).
struct MMatrixViolation {
    Dof row;
    Dof col;
    double value;
};

/// Relative residual of every linear solve in this module.
inline constexpr double solver_tolerance = 1e-10;

class DirichletSystem {
public:
    DirichletSystem(WeightedComplex weighted, SparseMatrix stiffness, Vector mass);

    const WeightedComplex& weighted() const { return weighted_; }
    const GluedComplex& complex() const { return weighted_.complex(); }
    const SparseMatrix& stiffness() const { return K_; }
    const Vector& mass() const { return M_; }
    std::size_t dof_count() const { return static_cast<std::size_t>(M_.size()); }
    std::span<const PieceVertex> piece_membership(Dof d) const { return complex().owners(d); }

    const std::vector<MMatrixViolation>& violations() const { return violations_; }
    bool compliant() const { return violations_.empty(); }

    double energy(const Vector& u) const { return u.dot(K_ * u); }
    double total_mass() const { return M_.sum(); }
    double integral(const Vector& u) const { return M_.dot(u); }
    double mean(const Vector& u) const { return integral(u) / total_mass(); }
    double inner(const Vector& u, const Vector& v) const { return u.dot(M_.cwiseProduct(v)); }
    double norm(const Vector& u) const { return std::sqrt(inner(u, u)); }
    /// ||u - mean(u)||_mu.
    double deviation(const Vector& u) const;

private:
    WeightedComplex weighted_;
    SparseMatrix K_;
    Vector M_;
    std::vector<MMatrixViolation> violations_;
};

/**
 * @brief Assemble K = sum_i K_i and the lumped mass over global DOFs.
 *
 * K_i is the P1 stiffness of piece i with cell weights int_T omega;
 * M_x = sum over cells of int_T phi_x omega. Boundaries are natural
 * (Neumann). Throws non_integrable_weight for infinite cell integrals and
 * invalid_parameter naming a degenerate cell.
 */
DirichletSystem assemble(const WeightedComplex& weighted);

/// Stiffness of one piece alone, over the global DOF numbering.
SparseMatrix piece_stiffness(const WeightedComplex& weighted, std::size_t piece);

/// Per-cell |grad u|^2 omega averaged over the cell, pieces concatenated in order.
std::vector<double> energy_density(const DirichletSystem& system, const Vector& u);

/// Solves (M + K) u = M f. Throws NumericError on non-convergence.
Vector apply_resolvent(const DirichletSystem& system, const Vector& f);

struct HeatState {
    Vector values;
    double time = 0.0;
    std::optional<std::vector<double>> energy_density;
};

/**
 * @brief Implicit Euler stepper (M + tau K) u+ = M u for a fixed tau.
 *
 * Conjugate gradients with a diagonal (Jacobi) preconditioner, warm-started
 * from u, relative residual solver_tolerance. The remaining residual mass
 * is corrected per connected component by adding a constant, so the
 * mu-mass of every component is conserved to round-off.
 */
class ImplicitEuler {
public:
    ImplicitEuler(const DirichletSystem& system, double tau);

    double tau() const { return tau_; }
    Vector step(const Vector& u) const;
    /// Iterations used by the most recent step.
    int last_iterations() const { return iterations_; }

private:
    const DirichletSystem* system_;
    double tau_;
    SparseMatrix A_;
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg_;
    mutable int iterations_ = 0;
};

HeatState heat_step(const DirichletSystem& system, const HeatState& state, double tau);

struct TrajectoryPoint {
    double time;
    double mass;
    double energy;
    double min;
    double max;
    double deviation;
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    std::vector<HeatState> states;
    HeatState final_state;
};

struct EvolveOptions {
    /// Keep every k-th state (0 keeps none besides the final one).
    std::size_t keep_every = 0;
    bool energy_density = false;
};

/// Runs heat steps over `schedule` (step sizes summing to T), recording diagnostics.
Trajectory evolve(const DirichletSystem& system, const Vector& f0, std::span<const double> schedule,
                  const EvolveOptions& options = {});

/// Uniform schedule of `steps` steps covering [0, T].
std::vector<double> uniform_schedule(double T, std::size_t steps);

} // namespace glued

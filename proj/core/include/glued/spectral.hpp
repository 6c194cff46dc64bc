#pragma once

/**
 * @file spectral.hpp
 * @brief Low spectrum of the generalized problem K phi = lambda M phi, and
 * heat-flow diagnostics built on it.
 */

#include "glued/dirichlet.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace glued {

inline constexpr double not_resolved = std::numeric_limits<double>::quiet_NaN();

struct SpectralReport {
    /// Ascending.
    std::vector<double> eigenvalues;
    /// M-orthonormal columns; the largest-magnitude entry of each is positive.
    Eigen::MatrixXd eigenvectors;
    /// Number of eigenvalues below tol (one per connected component).
    std::size_t kernel_dim = 0;
    /// Smallest eigenvalue above tol, NaN when all computed ones are below it.
    double gap = not_resolved;
    double tol = 0.0;
    std::vector<double> residuals;
    int iterations = 0;
};

/**
 * @brief The k smallest eigenpairs.
 *
 * Shift-invert block subspace iteration with a sparse LDL^T factorization
 * of K - sigma M (sigma slightly negative), block size max(2k, k+8),
 * M-orthonormalization and Rayleigh-Ritz. Default tol is
 * 1e-9 * max_i K_ii / M_ii. Throws NumericError if the residuals do not
 * converge.
 */
SpectralReport eigen(const DirichletSystem& system, std::size_t k, std::optional<double> tol = {});

enum class Ergodicity { ergodic, degenerate, inconclusive };
const char* to_string(Ergodicity v);

struct GapSample {
    double level;
    double gap;
    std::size_t kernel_dim;
};

struct ErgodicityVerdict {
    Ergodicity verdict = Ergodicity::inconclusive;
    std::vector<GapSample> curve;
    /// gap(last level) / gap(first level).
    double ratio = not_resolved;
    std::string reason;
};

struct ErgodicityThresholds {
    double ergodic_ratio = 0.5;
    double degenerate_ratio = 0.2;
};

/// Verdict from a gap curve ordered by increasing refinement.
ErgodicityVerdict ergodicity_verdict(std::vector<GapSample> curve, const ErgodicityThresholds& thresholds = {});

/// Builds and solves one system per level.
ErgodicityVerdict ergodicity_verdict(const std::function<DirichletSystem(double)>& build,
                                     std::span<const double> levels, const ErgodicityThresholds& thresholds = {});

struct DecayFit {
    /// -slope of log ||u - mean||_mu over the tail of the run.
    double rate = not_resolved;
    /// (exp(rate tau) - 1)/tau: undoes the first-order bias of implicit Euler.
    double corrected_rate = not_resolved;
    double fit_from = 0.0;
    double fit_to = 0.0;
    /// Set when the deviation fell below round-off before the horizon.
    bool underflow = false;
    std::vector<std::pair<double, double>> samples;
};

/// Fits the exponential decay of the mean deviation of S_t f0 on [0, horizon].
DecayFit decay_fit(const DirichletSystem& system, const Vector& f0, double horizon, double tau,
                   double tail_fraction = 0.5);

struct SupportSpread {
    double t;
    std::vector<Dof> support;
    std::size_t component_dofs;
};

/// DOFs where S_t chi_E exceeds 1e-12 of its maximum.
SupportSpread support_spread(const DirichletSystem& system, std::span<const Dof> E, double t,
                             std::size_t steps = 16);

} // namespace glued

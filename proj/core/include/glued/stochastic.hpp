#pragma once

/**
 * @file stochastic.hpp
 * @brief Continuous-time jump chain of the discrete generator M^-1 K and walk statistics.
 */

#include "glued/dirichlet.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace glued {

/// Uniform double in [0, 1) from the top 53 bits of one 64-bit draw.
inline double uniform01(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Seed of path `index` split from a master seed (splitmix64 finalizer).
std::uint64_t path_seed(std::uint64_t master, std::uint64_t index);

/**
 * @brief Rates q_xy = -K_xy / M_x of the chain; stationary law proportional to M.
 *
 * Off-diagonal entries of K with |K_xy| <= 1e-12 max|K| are treated as zero.
 */
class JumpChain {
public:
    const DirichletSystem& system() const { return *system_; }
    std::size_t size() const { return total_.size(); }
    double total_rate(Dof x) const { return total_[x]; }
    /// Outgoing (target, rate) pairs of x.
    std::span<const std::pair<Dof, double>> rates(Dof x) const
    {
        return {rates_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
    }
    double rate(Dof x, Dof y) const;
    std::uint64_t seed() const { return seed_; }
    /// Stationary probability of each DOF (M normalized).
    const std::vector<double>& stationary() const { return stationary_; }

    /// Next state given a uniform draw in [0, 1).
    Dof jump_target(Dof x, double u) const;

private:
    friend JumpChain build_chain(const DirichletSystem&, std::uint64_t);
    const DirichletSystem* system_ = nullptr;
    std::vector<std::pair<Dof, double>> rates_;
    std::vector<double> cumulative_;
    std::vector<std::size_t> offsets_;
    std::vector<double> total_;
    std::vector<double> stationary_;
    std::uint64_t seed_ = 0;
};

/// Throws Error(non_compliant_mesh) listing positive off-diagonal entries of K.
JumpChain build_chain(const DirichletSystem& system, std::uint64_t seed);

struct Crossing {
    double time;
    std::size_t from_piece;
    std::size_t to_piece;
    /// Index into complex().glue_maps() of the last intersection DOF visited.
    std::size_t intersection;
};

struct WalkTrace {
    /// (time, DOF), times strictly increasing; empty unless requested.
    std::vector<std::pair<double, Dof>> path;
    /// Holding time per DOF (sums to the horizon).
    std::vector<double> occupation;
    std::vector<Crossing> crossings;
    Dof start = 0;
    Dof end = 0;
    double horizon = 0.0;
    std::size_t jumps = 0;
};

struct PathOptions {
    bool record_path = true;
    bool record_occupation = true;
};

/// Exact simulation: exponential holding times and categorical jumps.
WalkTrace sample_path(const JumpChain& chain, Dof x0, double T, std::uint64_t seed, const PathOptions& options = {});

/// Start DOF drawn from the stationary law.
Dof sample_stationary(const JumpChain& chain, std::mt19937_64& rng);

struct Interval {
    double lo;
    double hi;
};

struct CrossingStatistics {
    double rate = 0.0;
    Interval ci{0.0, 0.0};
    std::size_t crossings = 0;
    double total_time = 0.0;
    std::size_t paths = 0;
};

/// Crossings through `intersection_id` per unit time, with a 95% percentile bootstrap over paths.
CrossingStatistics crossing_statistics(const std::vector<WalkTrace>& traces, const GluedComplex& complex,
                                       const std::string& intersection_id, std::uint64_t seed,
                                       std::size_t resamples = 1000);

/// DOF partition for occupation comparisons: per piece, `bins` equal-volume
/// shells of distance from the intersections (shared DOFs go to the first owner).
std::vector<std::size_t> occupation_bins(const DirichletSystem& system, std::size_t bins_per_piece);

/// Total-variation distance between binned occupation and binned mu.
double occupation_tv(const DirichletSystem& system, const std::vector<WalkTrace>& traces,
                     std::span<const std::size_t> bins);

struct ChiSquare {
    double statistic = 0.0;
    double critical = 0.0;
    std::size_t dof = 0;
    bool accepted = false;
};

/// Pearson test of endpoint counts against binned mu at significance 1 - level.
ChiSquare endpoint_chi_square(const DirichletSystem& system, const std::vector<WalkTrace>& traces,
                              std::span<const std::size_t> bins, double level = 0.99);

} // namespace glued

#pragma once

/**
 * @file measure.hpp
 * @brief Weights on pieces, the measure mu = sum_i omega_i vol_i, and weight diagnostics.
 */

#include "glued/geometry.hpp"

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace glued {

enum class WeightKind { constant, power, tabulated };

const char* to_string(WeightKind kind);

/**
 * @brief Declaration of the weight of one piece.
 *
 * Power weights are omega(x) = dist(x, anchor)^(-alpha). The anchor is an
 * intersection id of the complex or an explicit point that coincides with
 * a vertex of the piece. Tabulated weights hold one positive value per
 * local vertex and are interpolated linearly inside cells.
 */
struct WeightSpec {
    std::string piece;
    WeightKind kind = WeightKind::constant;
    double value = 1.0;
    double alpha = 0.0;
    std::string anchor;
    std::optional<Vec3> anchor_point;
    std::vector<double> table;

    static WeightSpec constant(std::string piece, double c);
    static WeightSpec power(std::string piece, std::string intersection_id, double alpha);
    static WeightSpec power_at(std::string piece, const Vec3& point, double alpha);
    static WeightSpec tabulated(std::string piece, std::vector<double> values);
};

/// First moments of omega^sign over a region: m0 = int w, m1 = int w (x - origin).
struct Moments {
    double m0 = 0.0;
    Vec3 m1 = Vec3::Zero();
};

/**
 * @brief A weight bound to one piece, able to integrate omega^(+-1) times
 * affine functions over cells and over convex sub-polygons of a cell.
 *
 * Point-anchored power weights use exact radial integration on regions
 * near the anchor; line anchors (k = 1) integrate exactly in the
 * perpendicular distance to the adjacent intersection edge. Far regions
 * use collapsed Gauss rules. Divergent integrals return +infinity.
 */
class WeightField {
public:
    WeightField() = default;
    WeightField(const GluedComplex& complex, std::size_t piece, const WeightSpec& spec);

    WeightKind kind() const { return kind_; }
    double alpha() const { return alpha_; }
    int n() const { return n_; }
    /// Dimension of the anchor set (0 or 1), -1 when not a power weight.
    int k() const { return k_; }
    const Vec3& anchor_point() const { return anchor_; }
    /// |S^(n-k-1)| * |L|: the tube-volume constant of the anchor.
    double anchor_size() const;

    double distance_to_anchor(const Vec3& x) const;
    /// omega at a point of the piece (sign = -1 gives 1/omega).
    double value(const Vec3& x, std::size_t cell, int sign = 1) const;

    /// Moments of omega^sign over `region` (a sub-interval or convex
    /// sub-polygon of `cell`, vertices in ambient coordinates). sign is
    /// +1 (omega), -1 (1/omega) or 0 (plain volume).
    Moments integrate(std::size_t cell, std::span<const Vec3> region, int sign, const Vec3& origin) const;

    /// Admissibility of power weights: -(n-k) < alpha < n-k.
    bool admissible() const;

private:
    const PieceMesh* piece_ = nullptr;
    WeightKind kind_ = WeightKind::constant;
    double c_ = 1.0;
    double alpha_ = 0.0;
    int n_ = 1;
    int k_ = -1;
    Vec3 anchor_ = Vec3::Zero();
    std::vector<std::array<Vec3, 2>> anchor_segments_;
    double anchor_length_ = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> anchor_edges_;
    std::vector<std::uint8_t> on_anchor_;
    std::vector<double> table_;

    Moments gauss(std::size_t cell, std::span<const Vec3> region, int sign, const Vec3& origin,
                  int order) const;
    Moments radial(std::span<const Vec3> region, double s, const Vec3& origin) const;
    Moments line_slice(std::size_t cell, std::span<const Vec3> region, double s, const Vec3& origin) const;
    Moments adaptive(std::size_t cell, std::span<const Vec3> region, int sign, const Vec3& origin,
                     int depth) const;
    bool touches_anchor(std::size_t cell) const;
    std::optional<std::size_t> anchor_edge_of(std::size_t cell) const;
};

/**
 * @brief A glued complex together with its weights and cached cell integrals.
 *
 * Pieces without a declared weight carry omega = 1.
 */
class WeightedComplex {
public:
    /// Throws non_integrable_weight when a power weight is outside the
    /// admissible range and `enforce_admissibility` is set.
    WeightedComplex(GluedComplex complex, std::vector<WeightSpec> specs,
                    bool enforce_admissibility = true);
    WeightedComplex(std::shared_ptr<const GluedComplex> complex, std::vector<WeightSpec> specs,
                    bool enforce_admissibility = true);

    const GluedComplex& complex() const { return *complex_; }
    const std::shared_ptr<const GluedComplex>& shared_complex() const { return complex_; }
    const std::vector<WeightSpec>& specs() const { return specs_; }
    const WeightField& weight(std::size_t piece) const { return fields_[piece]; }

    /// int_cell omega, int_cell 1/omega, and lumped int_cell phi_j omega.
    double cell_mu(std::size_t piece, std::size_t cell) const { return cells_[piece][cell].mu; }
    double cell_inverse_mu(std::size_t piece, std::size_t cell) const { return cells_[piece][cell].inv; }
    const std::array<double, 3>& cell_lumped(std::size_t piece, std::size_t cell) const
    {
        return cells_[piece][cell].lumped;
    }
    double piece_mu(std::size_t piece) const;
    double total_mu() const;

private:
    struct CellIntegrals {
        double mu = 0.0;
        double inv = 0.0;
        std::array<double, 3> lumped{};
    };

    // Shared so that copies keep the piece pointers of the weight fields valid.
    std::shared_ptr<const GluedComplex> complex_;
    std::vector<WeightSpec> specs_;
    std::vector<WeightField> fields_;
    std::vector<std::vector<CellIntegrals>> cells_;
};

WeightedComplex attach_weight(GluedComplex complex, const WeightSpec& spec);
/// Adds or replaces the weight of spec.piece.
WeightedComplex attach_weight(const WeightedComplex& weighted, const WeightSpec& spec,
                              bool enforce_admissibility = true);

/**
 * @brief Measure of a distance sublevel set {dist <= r}.
 *
 * `dist` holds one value per DOF. Cells entirely inside count fully;
 * cells cut by the level set are clipped along the linear interpolant of
 * the vertex distances and the clipped polygon is integrated exactly.
 * `piece` restricts the sum to one piece; `sign = -1` integrates 1/omega.
 */
double sublevel_measure(const WeightedComplex& weighted, std::span<const double> dist, double r,
                        std::optional<std::size_t> piece = {}, int sign = 1);

/// mu(B_r(center)) in the glued metric.
double mu_ball(const WeightedComplex& weighted, Dof center, double r);

/// mu restricted to one piece of B_r(center).
double mu_ball_piece(const WeightedComplex& weighted, std::size_t piece, Dof center, double r);

struct BallSample {
    Dof center;
    double r;
};

struct A2Entry {
    Dof center;
    double r;
    double mean_weight;
    double mean_inverse;
    double product;
};

struct A2Report {
    std::vector<A2Entry> table;
    double estimate = 0.0;
    /// Raised when the product is infinite or grows along shrinking balls at a center.
    bool unbounded = false;
};

/// (avg omega)(avg 1/omega) over balls restricted to `piece`.
A2Report check_A2(const WeightedComplex& weighted, std::size_t piece, std::span<const BallSample> sample);

struct DoublingEntry {
    Dof center;
    double r;
    double mu_r;
    double mu_3r;
    double ratio;
};

struct ComparisonEntry {
    Dof center;
    double r;
    std::size_t piece_a;
    std::size_t piece_b;
    double ratio;
};

struct MeasureProfile {
    struct Ball {
        Dof center;
        double r;
        double mu;
    };
    std::vector<Ball> ball_table;
    std::vector<DoublingEntry> doubling_table;
    /// (r, N_fit(r)): pointwise max of the doubling ratio over centers.
    std::vector<std::pair<double, double>> n_fit;
    double n_integral = 0.0;
    /// Log-log slope of N_fit over the smallest radii.
    double n_slope = 0.0;
    bool integrable = true;
    /// mu_a(B_r)/mu_b(B_r) at intersection centers, per pair of owning pieces.
    std::vector<ComparisonEntry> comparison;
    bool comparison_degenerate = false;
};

/// Heuristic N-doubling profile over centers x radii (radii sorted ascending in output).
MeasureProfile check_N_doubling(const WeightedComplex& weighted, std::span<const Dof> centers,
                                std::span<const double> radii);

struct MuckenhouptEntry {
    double R;
    double mu;
    double inverse_mu;
    double ratio;
};

struct MuckenhouptReport {
    std::vector<MuckenhouptEntry> table;
    double band = 0.0;
    bool satisfied = false;
};

/// int_{L_R} omega * int_{L_R} 1/omega / R^(2(n-k)) on one piece, for each R.
MuckenhouptReport check_L_muckenhoupt(const WeightedComplex& weighted, std::size_t piece,
                                      const std::string& intersection_id, std::span<const double> radii,
                                      double band_limit = 10.0);

} // namespace glued

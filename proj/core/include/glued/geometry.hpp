#pragma once

/**
 * @file geometry.hpp
 * @brief Simplicial manifold pieces, vertex gluing and glued-metric queries.
 *
 * A glued complex is a finite union of meshed pieces of possibly different
 * intrinsic dimension. Vertices of different pieces that coincide in ambient
 * coordinates are identified into one global degree of freedom; the
 * identified sets realise the intersections between pieces.
 */

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glued {

using Vec3 = Eigen::Vector3d;
using Dof = std::size_t;

/// Distance value for DOFs in different connected components.
inline constexpr double unreachable = std::numeric_limits<double>::infinity();

/// Rigid motion x -> rotation * x + origin.
struct Placement {
    Vec3 origin = Vec3::Zero();
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

    Vec3 apply(const Vec3& local) const { return rotation * local + origin; }

    static Placement identity() { return {}; }
    /// Maps the local x axis onto `direction`.
    static Placement along(const Vec3& origin, const Vec3& direction);
    /// Maps the local z axis (the normal of planar pieces) onto `normal`.
    static Placement facing(const Vec3& origin, const Vec3& normal);
    static Placement axis_angle(const Vec3& origin, const Vec3& axis, double angle_rad);
};

/// Vertex indices of a cell; the first dim+1 entries are used.
using Cell = std::array<std::size_t, 3>;

struct PieceMesh {
    std::string id;
    int dim = 1;
    std::vector<Vec3> vertices;
    std::vector<Cell> cells;
    std::vector<std::uint8_t> boundary;
    /// Flat and convex: the intrinsic distance between two vertices is the chord.
    bool convex = false;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t cell_count() const { return cells.size(); }
    std::span<const std::size_t> cell_vertices(std::size_t c) const
    {
        return {cells[c].data(), static_cast<std::size_t>(dim + 1)};
    }
    /// dim-volume of a cell (length or area).
    double cell_volume(std::size_t c) const;
    double total_volume() const;
    double max_cell_diameter() const;
    /// Diagonal of the axis-aligned bounding box.
    double extent() const;
};

/// Throws Error(invalid_parameter) on degenerate cells, a disconnected cell
/// graph, or boundary flags that do not lie on a boundary facet.
void validate(const PieceMesh& piece);

/// Boundary flags derived from facet incidence (facets owned by one cell).
std::vector<std::uint8_t> boundary_from_cells(const PieceMesh& piece);

/// Uniform 1D mesh of [0, length] along the placement's x axis.
PieceMesh build_segment_piece(double length, std::size_t n_cells,
                              const Placement& placement = {},
                              std::string id = "segment");

/**
 * @brief Ring triangulation of a disk in the placement's xy plane.
 *
 * Ring j (1..refinement) carries 8j vertices at radius j*radius/refinement;
 * the center is a vertex. Adjacent rings are stitched by angle and then
 * made Delaunay by edge flips. The longest edge is below
 * disk_diameter_constant * radius / refinement.
 */
PieceMesh build_disk_piece(double radius, std::size_t refinement,
                           const Placement& placement = {},
                           std::string id = "disk");

inline constexpr double disk_diameter_constant = 1.5;

/// Structured triangulation of [0,width]x[0,height] (one diagonal per quad).
PieceMesh build_rectangle_piece(double width, double height,
                                std::size_t nx, std::size_t ny,
                                const Placement& placement = {},
                                std::string id = "rectangle");

struct PieceVertex {
    std::size_t piece;
    std::size_t local;
};

/// One connected component of the identified vertex set of two pieces.
struct GlueMap {
    struct Pair {
        std::size_t piece_a, vertex_a, piece_b, vertex_b;
    };

    std::string intersection_id;
    std::size_t piece_a = 0;
    std::size_t piece_b = 0;
    std::vector<Pair> pairs;
    /// Global DOFs of the intersection, ascending.
    std::vector<Dof> dofs;
    /// Edges of the intersection as global DOF pairs (empty when k == 0).
    std::vector<std::pair<Dof, Dof>> edges;
    int k = 0;
};

struct Neighbor {
    Dof dof;
    double length;
};

class GluedComplex {
public:
    GluedComplex() = default;

    const std::vector<PieceMesh>& pieces() const { return pieces_; }
    const PieceMesh& piece(std::size_t p) const { return pieces_[p]; }
    std::size_t piece_count() const { return pieces_.size(); }
    /// Throws Error(invalid_parameter) for an unknown id.
    std::size_t piece_index(std::string_view id) const;

    const std::vector<GlueMap>& glue_maps() const { return glue_maps_; }
    const GlueMap& intersection(std::string_view id) const;

    std::size_t dof_count() const { return positions_.size(); }
    Dof global_dof(std::size_t piece, std::size_t local) const
    {
        return piece_dofs_[piece][local];
    }
    std::span<const Dof> piece_dofs(std::size_t piece) const { return piece_dofs_[piece]; }
    std::span<const PieceVertex> owners(Dof d) const
    {
        return {owners_.data() + owner_offsets_[d], owner_offsets_[d + 1] - owner_offsets_[d]};
    }
    bool is_shared(Dof d) const { return owner_offsets_[d + 1] - owner_offsets_[d] > 1; }
    const Vec3& position(Dof d) const { return positions_[d]; }

    std::span<const Neighbor> neighbors(Dof d) const
    {
        return {adjacency_.data() + adjacency_offsets_[d],
                adjacency_offsets_[d + 1] - adjacency_offsets_[d]};
    }
    std::size_t edge_count() const { return adjacency_.size() / 2; }

    std::size_t component_count() const { return component_count_; }
    std::size_t component(Dof d) const { return component_[d]; }

    double tolerance() const { return tolerance_; }
    double extent() const { return extent_; }

private:
    friend GluedComplex glue(std::vector<PieceMesh>, double,
                             const std::map<std::string, int>&);

    std::vector<PieceMesh> pieces_;
    std::vector<GlueMap> glue_maps_;
    std::vector<std::vector<Dof>> piece_dofs_;
    std::vector<PieceVertex> owners_;
    std::vector<std::size_t> owner_offsets_;
    std::vector<Vec3> positions_;
    std::vector<Neighbor> adjacency_;
    std::vector<std::size_t> adjacency_offsets_;
    std::vector<std::size_t> component_;
    std::size_t component_count_ = 0;
    double tolerance_ = 0.0;
    double extent_ = 0.0;
};

/// Default identification tolerance: 1e-9 times the extent of all pieces.
double default_glue_tolerance(std::span<const PieceMesh> pieces);

/**
 * @brief Identify coincident vertices of different pieces.
 *
 * Vertices within `tolerance` are merged into one DOF. Each connected
 * component of the identified set becomes a GlueMap whose dimension k is
 * inferred: 0 for an isolated vertex, 1 for a path or cycle of common edges.
 * `declared_k` maps intersection ids to an expected k.
 *
 * Errors: ambiguity (a vertex matches two vertices of one piece),
 * hypothesis_violation (identification on a boundary vertex, an intersection
 * containing a whole cell, a vertex in two different intersections, or a
 * declared k that disagrees).
 */
GluedComplex glue(std::vector<PieceMesh> pieces, double tolerance,
                  const std::map<std::string, int>& declared_k = {});
GluedComplex glue(std::vector<PieceMesh> pieces);

/// Glued distance from a set of sources to every DOF (`unreachable` across components).
std::vector<double> distances_from(const GluedComplex& complex, std::span<const Dof> sources);

double glued_distance(const GluedComplex& complex, Dof a, Dof b);

/// DOFs within glued distance r of `center`, ascending.
std::vector<Dof> metric_ball(const GluedComplex& complex, Dof center, double r);

/// Nearest DOF to an ambient point (ties broken by lowest index).
Dof nearest_dof(const GluedComplex& complex, const Vec3& point);

} // namespace glued

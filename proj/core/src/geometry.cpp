#include "glued/geometry.hpp"
#include "glued/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_map>

namespace glued {

Placement Placement::along(const Vec3& origin, const Vec3& direction)
{
    if (direction.norm() == 0.0) throw_invalid("placement direction must be nonzero");
    Placement p;
    p.origin = origin;
    p.rotation = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitX(), direction.normalized())
                     .toRotationMatrix();
    return p;
}

Placement Placement::facing(const Vec3& origin, const Vec3& normal)
{
    if (normal.norm() == 0.0) throw_invalid("placement normal must be nonzero");
    Placement p;
    p.origin = origin;
    p.rotation = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal.normalized())
                     .toRotationMatrix();
    return p;
}

Placement Placement::axis_angle(const Vec3& origin, const Vec3& axis, double angle_rad)
{
    Placement p;
    p.origin = origin;
    if (axis.norm() > 0.0)
        p.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
    return p;
}

double PieceMesh::cell_volume(std::size_t c) const
{
    const auto v = cell_vertices(c);
    if (dim == 1) return (vertices[v[1]] - vertices[v[0]]).norm();
    return 0.5 * (vertices[v[1]] - vertices[v[0]]).cross(vertices[v[2]] - vertices[v[0]]).norm();
}

double PieceMesh::total_volume() const
{
    double total = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) total += cell_volume(c);
    return total;
}

double PieceMesh::max_cell_diameter() const
{
    double h = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto v = cell_vertices(c);
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j)
                h = std::max(h, (vertices[v[i]] - vertices[v[j]]).norm());
    }
    return h;
}

double PieceMesh::extent() const
{
    if (vertices.empty()) return 0.0;
    Vec3 lo = vertices.front(), hi = vertices.front();
    for (const auto& x : vertices) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    return (hi - lo).norm();
}

namespace {

using Facet = std::array<std::size_t, 2>;

// Facets of a cell: vertices for 1D cells, edges for triangles.
std::vector<Facet> cell_facets(const PieceMesh& piece, std::size_t c)
{
    const auto v = piece.cell_vertices(c);
    if (piece.dim == 1) return {{v[0], v[0]}, {v[1], v[1]}};
    auto sorted = [](std::size_t a, std::size_t b) { return Facet{std::min(a, b), std::max(a, b)}; };
    return {sorted(v[0], v[1]), sorted(v[1], v[2]), sorted(v[2], v[0])};
}

struct FacetHash {
    std::size_t operator()(const Facet& f) const noexcept
    {
        return std::hash<std::size_t>{}(f[0] * 0x9E3779B97F4A7C15ull ^ f[1]);
    }
};

} // namespace

std::vector<std::uint8_t> boundary_from_cells(const PieceMesh& piece)
{
    std::unordered_map<Facet, int, FacetHash> count;
    for (std::size_t c = 0; c < piece.cells.size(); ++c)
        for (const auto& f : cell_facets(piece, c)) ++count[f];
    std::vector<std::uint8_t> flags(piece.vertices.size(), 0);
    for (const auto& [f, n] : count)
        if (n == 1) flags[f[0]] = flags[f[1]] = 1;
    return flags;
}

void validate(const PieceMesh& piece)
{
    if (piece.dim != 1 && piece.dim != 2)
        throw_invalid(fmt::format("piece '{}': dimension {} unsupported (1 or 2)", piece.id, piece.dim));
    if (piece.cells.empty()) throw_invalid(fmt::format("piece '{}' has no cells", piece.id));
    if (piece.boundary.size() != piece.vertices.size())
        throw_invalid(fmt::format("piece '{}': boundary flag count {} != vertex count {}",
                                  piece.id, piece.boundary.size(), piece.vertices.size()));

    const double scale = std::max(piece.extent(), 1e-300);
    for (std::size_t c = 0; c < piece.cells.size(); ++c) {
        for (auto v : piece.cell_vertices(c))
            if (v >= piece.vertices.size())
                throw_invalid(fmt::format("piece '{}': cell {} references vertex {}", piece.id, c, v));
        const double vol = piece.cell_volume(c);
        if (!(vol > 1e-14 * std::pow(scale, piece.dim)))
            throw_invalid(fmt::format("piece '{}': cell {} is degenerate (volume {:.3g})", piece.id, c, vol));
    }

    // Connectivity of the cell graph through shared facets.
    std::unordered_map<Facet, std::vector<std::size_t>, FacetHash> incident;
    for (std::size_t c = 0; c < piece.cells.size(); ++c)
        for (const auto& f : cell_facets(piece, c)) incident[f].push_back(c);
    std::vector<std::vector<std::size_t>> cell_adj(piece.cells.size());
    for (const auto& [f, cs] : incident)
        for (std::size_t i = 0; i < cs.size(); ++i)
            for (std::size_t j = i + 1; j < cs.size(); ++j) {
                cell_adj[cs[i]].push_back(cs[j]);
                cell_adj[cs[j]].push_back(cs[i]);
            }
    std::vector<char> seen(piece.cells.size(), 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
        const auto c = stack.back();
        stack.pop_back();
        for (auto n : cell_adj[c])
            if (!seen[n]) {
                seen[n] = 1;
                ++reached;
                stack.push_back(n);
            }
    }
    if (reached != piece.cells.size())
        throw_invalid(fmt::format("piece '{}': cell graph is disconnected", piece.id));

    const auto derived = boundary_from_cells(piece);
    for (std::size_t v = 0; v < piece.vertices.size(); ++v)
        if (piece.boundary[v] && !derived[v])
            throw_invalid(fmt::format("piece '{}': vertex {} flagged boundary but lies on no boundary facet",
                                      piece.id, v));
}

std::size_t GluedComplex::piece_index(std::string_view id) const
{
    for (std::size_t p = 0; p < pieces_.size(); ++p)
        if (pieces_[p].id == id) return p;
    throw_invalid(fmt::format("unknown piece '{}'", id));
}

const GlueMap& GluedComplex::intersection(std::string_view id) const
{
    for (const auto& g : glue_maps_)
        if (g.intersection_id == id) return g;
    throw_invalid(fmt::format("unknown intersection '{}'", id));
}

double default_glue_tolerance(std::span<const PieceMesh> pieces)
{
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 hi = -lo;
    for (const auto& p : pieces)
        for (const auto& x : p.vertices) {
            lo = lo.cwiseMin(x);
            hi = hi.cwiseMax(x);
        }
    const double extent = pieces.empty() ? 1.0 : (hi - lo).norm();
    return 1e-9 * std::max(extent, 1e-300);
}

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x)
    {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept
    {
        std::size_t h = static_cast<std::size_t>(k.x) * 73856093u;
        h ^= static_cast<std::size_t>(k.y) * 19349663u;
        h ^= static_cast<std::size_t>(k.z) * 83492791u;
        return h;
    }
};

std::set<std::pair<std::size_t, std::size_t>> piece_edges(const PieceMesh& piece)
{
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t c = 0; c < piece.cells.size(); ++c) {
        const auto v = piece.cell_vertices(c);
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j)
                edges.emplace(std::min(v[i], v[j]), std::max(v[i], v[j]));
    }
    return edges;
}

} // namespace

GluedComplex glue(std::vector<PieceMesh> pieces)
{
    const double tol = default_glue_tolerance(pieces);
    return glue(std::move(pieces), tol);
}

GluedComplex glue(std::vector<PieceMesh> pieces, double tolerance,
                  const std::map<std::string, int>& declared_k)
{
    if (!(tolerance > 0.0)) throw_invalid("glue tolerance must be positive");
    if (pieces.empty()) throw_invalid("glue needs at least one piece");
    for (std::size_t p = 0; p < pieces.size(); ++p) {
        validate(pieces[p]);
        for (std::size_t q = 0; q < p; ++q)
            if (pieces[q].id == pieces[p].id)
                throw_invalid(fmt::format("duplicate piece id '{}'", pieces[p].id));
    }

    // Flat node numbering over (piece, local vertex).
    std::vector<std::size_t> node_offset(pieces.size() + 1, 0);
    for (std::size_t p = 0; p < pieces.size(); ++p)
        node_offset[p + 1] = node_offset[p] + pieces[p].vertices.size();
    const std::size_t node_count = node_offset.back();

    std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> grid;
    auto key_of = [&](const Vec3& x) {
        return CellKey{static_cast<std::int64_t>(std::floor(x.x() / tolerance)),
                       static_cast<std::int64_t>(std::floor(x.y() / tolerance)),
                       static_cast<std::int64_t>(std::floor(x.z() / tolerance))};
    };
    std::vector<std::size_t> node_piece(node_count);
    for (std::size_t p = 0; p < pieces.size(); ++p)
        for (std::size_t v = 0; v < pieces[p].vertices.size(); ++v) {
            node_piece[node_offset[p] + v] = p;
            grid[key_of(pieces[p].vertices[v])].push_back(node_offset[p] + v);
        }

    auto node_position = [&](std::size_t n) -> const Vec3& {
        const auto p = node_piece[n];
        return pieces[p].vertices[n - node_offset[p]];
    };

    UnionFind uf(node_count);
    for (std::size_t n = 0; n < node_count; ++n) {
        const auto p = node_piece[n];
        const Vec3& x = node_position(n);
        const auto k = key_of(x);
        std::map<std::size_t, std::vector<std::size_t>> matches; // other piece -> nodes
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({k.x + dx, k.y + dy, k.z + dz});
                    if (it == grid.end()) continue;
                    for (auto m : it->second)
                        if (node_piece[m] != p && (node_position(m) - x).norm() <= tolerance)
                            matches[node_piece[m]].push_back(m);
                }
        for (const auto& [q, nodes] : matches) {
            if (nodes.size() > 1)
                throw Error(ErrorKind::ambiguity,
                            fmt::format("vertex {} of piece '{}' matches {} vertices of piece '{}'",
                                        n - node_offset[p], pieces[p].id, nodes.size(), pieces[q].id));
            const auto m = nodes.front();
            const auto lv = n - node_offset[p];
            const auto lm = m - node_offset[q];
            if (pieces[p].boundary[lv] || pieces[q].boundary[lm])
                throw Error(ErrorKind::hypothesis_violation,
                            fmt::format("identification of '{}' vertex {} with '{}' vertex {} touches a "
                                        "piece boundary; intersections must be interior",
                                        pieces[p].id, lv, pieces[q].id, lm));
            uf.unite(n, m);
        }
    }

    GluedComplex cx;
    cx.tolerance_ = tolerance;

    // Global DOFs in order of first appearance.
    std::vector<Dof> root_dof(node_count, static_cast<Dof>(-1));
    cx.piece_dofs_.resize(pieces.size());
    std::vector<std::vector<PieceVertex>> owners;
    for (std::size_t p = 0; p < pieces.size(); ++p) {
        cx.piece_dofs_[p].resize(pieces[p].vertices.size());
        for (std::size_t v = 0; v < pieces[p].vertices.size(); ++v) {
            const auto r = uf.find(node_offset[p] + v);
            if (root_dof[r] == static_cast<Dof>(-1)) {
                root_dof[r] = cx.positions_.size();
                cx.positions_.push_back(pieces[p].vertices[v]);
                owners.emplace_back();
            }
            const Dof d = root_dof[r];
            for (const auto& o : owners[d])
                if (o.piece == p)
                    throw Error(ErrorKind::ambiguity,
                                fmt::format("two vertices of piece '{}' collapse onto one DOF", pieces[p].id));
            owners[d].push_back({p, v});
            cx.piece_dofs_[p][v] = d;
        }
    }
    cx.owner_offsets_.assign(1, 0);
    for (const auto& o : owners) {
        cx.owners_.insert(cx.owners_.end(), o.begin(), o.end());
        cx.owner_offsets_.push_back(cx.owners_.size());
    }

    for (Dof d = 0; d < owners.size(); ++d)
        if (owners[d].size() > 2)
            throw Error(ErrorKind::hypothesis_violation,
                        fmt::format("DOF {} is shared by {} pieces; intersections must be pairwise disjoint",
                                    d, owners[d].size()));

    // Intersections per piece pair.
    std::vector<std::set<std::pair<std::size_t, std::size_t>>> edges(pieces.size());
    for (std::size_t p = 0; p < pieces.size(); ++p) edges[p] = piece_edges(pieces[p]);

    std::map<std::pair<std::size_t, std::size_t>, std::vector<Dof>> shared;
    for (Dof d = 0; d < owners.size(); ++d)
        if (owners[d].size() == 2) {
            auto a = owners[d][0].piece, b = owners[d][1].piece;
            shared[{std::min(a, b), std::max(a, b)}].push_back(d);
        }

    for (const auto& [pair, dofs] : shared) {
        const auto [pa, pb] = pair;
        std::set<Dof> in_set(dofs.begin(), dofs.end());
        auto local_of = [&](Dof d, std::size_t piece) {
            for (const auto& o : owners[d])
                if (o.piece == piece) return o.local;
            return static_cast<std::size_t>(-1);
        };

        for (std::size_t p : {pa, pb}) {
            const auto& pc = pieces[p];
            for (std::size_t c = 0; c < pc.cells.size(); ++c) {
                bool all = true;
                for (auto v : pc.cell_vertices(c)) all = all && in_set.count(cx.piece_dofs_[p][v]);
                if (all)
                    throw Error(ErrorKind::hypothesis_violation,
                                fmt::format("intersection of '{}' and '{}' contains cell {} of '{}' "
                                            "(nonempty interior, mu(L) > 0)",
                                            pieces[pa].id, pieces[pb].id, c, pc.id));
            }
        }

        // Common edges: an edge in both pieces between identified DOFs.
        std::map<Dof, std::vector<Dof>> adj;
        std::vector<std::pair<Dof, Dof>> common;
        for (const auto& [u, v] : edges[pa]) {
            const Dof du = cx.piece_dofs_[pa][u], dv = cx.piece_dofs_[pa][v];
            if (!in_set.count(du) || !in_set.count(dv)) continue;
            const auto bu = local_of(du, pb), bv = local_of(dv, pb);
            if (edges[pb].count({std::min(bu, bv), std::max(bu, bv)})) {
                common.emplace_back(std::min(du, dv), std::max(du, dv));
                adj[du].push_back(dv);
                adj[dv].push_back(du);
            }
        }

        std::vector<std::vector<Dof>> comps;
        std::set<Dof> seen;
        for (Dof d : dofs) {
            if (seen.count(d)) continue;
            std::vector<Dof> comp;
            std::vector<Dof> stack{d};
            seen.insert(d);
            while (!stack.empty()) {
                const Dof x = stack.back();
                stack.pop_back();
                comp.push_back(x);
                for (Dof y : adj[x])
                    if (seen.insert(y).second) stack.push_back(y);
            }
            std::sort(comp.begin(), comp.end());
            comps.push_back(std::move(comp));
        }

        for (std::size_t ci = 0; ci < comps.size(); ++ci) {
            GlueMap g;
            g.piece_a = pa;
            g.piece_b = pb;
            g.intersection_id = pieces[pa].id + ":" + pieces[pb].id;
            if (comps.size() > 1) g.intersection_id += fmt::format("#{}", ci);
            g.dofs = comps[ci];
            std::set<Dof> members(g.dofs.begin(), g.dofs.end());
            for (const auto& e : common)
                if (members.count(e.first)) g.edges.push_back(e);
            for (Dof d : g.dofs)
                g.pairs.push_back({pa, local_of(d, pa), pb, local_of(d, pb)});

            if (g.dofs.size() == 1) {
                g.k = 0;
            } else {
                for (Dof d : g.dofs)
                    if (adj[d].size() > 2)
                        throw Error(ErrorKind::hypothesis_violation,
                                    fmt::format("intersection '{}' branches at DOF {}; only points, "
                                                "paths and cycles are supported",
                                                g.intersection_id, d));
                g.k = 1;
            }
            if (auto it = declared_k.find(g.intersection_id); it != declared_k.end() && it->second != g.k)
                throw Error(ErrorKind::hypothesis_violation,
                            fmt::format("intersection '{}' has inferred k={} but k={} was declared",
                                        g.intersection_id, g.k, it->second));
            cx.glue_maps_.push_back(std::move(g));
        }
    }
    for (const auto& [id, k] : declared_k) {
        (void)k;
        if (std::none_of(cx.glue_maps_.begin(), cx.glue_maps_.end(),
                         [&](const GlueMap& g) { return g.intersection_id == id; }))
            throw Error(ErrorKind::hypothesis_violation,
                        fmt::format("declared intersection '{}' was not found", id));
    }

    // Edge graph.
    std::vector<std::vector<Neighbor>> adj(cx.positions_.size());
    for (std::size_t p = 0; p < pieces.size(); ++p)
        for (const auto& [u, v] : edges[p]) {
            const Dof a = cx.piece_dofs_[p][u], b = cx.piece_dofs_[p][v];
            const double len = (pieces[p].vertices[u] - pieces[p].vertices[v]).norm();
            auto& na = adj[a];
            if (std::any_of(na.begin(), na.end(), [&](const Neighbor& n) { return n.dof == b; })) continue;
            na.push_back({b, len});
            adj[b].push_back({a, len});
        }
    cx.adjacency_offsets_.assign(1, 0);
    for (auto& na : adj) {
        std::sort(na.begin(), na.end(), [](const Neighbor& x, const Neighbor& y) { return x.dof < y.dof; });
        cx.adjacency_.insert(cx.adjacency_.end(), na.begin(), na.end());
        cx.adjacency_offsets_.push_back(cx.adjacency_.size());
    }

    cx.component_.assign(cx.positions_.size(), static_cast<std::size_t>(-1));
    for (Dof s = 0; s < cx.positions_.size(); ++s) {
        if (cx.component_[s] != static_cast<std::size_t>(-1)) continue;
        const auto label = cx.component_count_++;
        std::vector<Dof> stack{s};
        cx.component_[s] = label;
        while (!stack.empty()) {
            const Dof x = stack.back();
            stack.pop_back();
            for (const auto& n : cx.neighbors(x))
                if (cx.component_[n.dof] == static_cast<std::size_t>(-1)) {
                    cx.component_[n.dof] = label;
                    stack.push_back(n.dof);
                }
        }
    }

    cx.extent_ = default_glue_tolerance(pieces) * 1e9;
    cx.pieces_ = std::move(pieces);
    return cx;
}

Dof nearest_dof(const GluedComplex& complex, const Vec3& point)
{
    Dof best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Dof d = 0; d < complex.dof_count(); ++d) {
        const double dist = (complex.position(d) - point).squaredNorm();
        if (dist < best_d) {
            best_d = dist;
            best = d;
        }
    }
    return best;
}

} // namespace glued

#include "glued/error.hpp"
#include "glued/geometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace glued {

namespace {

void place(PieceMesh& piece, const Placement& placement)
{
    for (auto& x : piece.vertices) x = placement.apply(x);
}

using Edge = std::pair<std::size_t, std::size_t>;

Edge edge_key(std::size_t a, std::size_t b) { return {std::min(a, b), std::max(a, b)}; }

double angle_at(const Vec3& apex, const Vec3& a, const Vec3& b)
{
    const Vec3 u = a - apex, v = b - apex;
    return std::atan2(u.cross(v).norm(), u.dot(v));
}

std::size_t opposite(const Cell& t, const Edge& e)
{
    for (int i = 0; i < 3; ++i)
        if (t[i] != e.first && t[i] != e.second) return t[i];
    return t[0];
}

// Lawson edge flips in the local xy plane until every interior edge is
// locally Delaunay. Triangles are kept counter-clockwise.
void make_delaunay(std::vector<Vec3>& v, std::vector<Cell>& tris)
{
    for (int pass = 0; pass < 1000; ++pass) {
        std::map<Edge, std::array<std::size_t, 2>> incident;
        for (std::size_t t = 0; t < tris.size(); ++t)
            for (int i = 0; i < 3; ++i) {
                auto [it, fresh] = incident.try_emplace(edge_key(tris[t][i], tris[t][(i + 1) % 3]),
                                                         std::array<std::size_t, 2>{t, t});
                if (!fresh) it->second[1] = t;
            }
        std::vector<char> touched(tris.size(), 0);
        std::size_t flips = 0;
        for (const auto& [e, ts] : incident) {
            const auto [t0, t1] = ts;
            if (t0 == t1 || touched[t0] || touched[t1]) continue;
            const auto a = opposite(tris[t0], e), b = opposite(tris[t1], e);
            const double sum = angle_at(v[a], v[e.first], v[e.second]) +
                               angle_at(v[b], v[e.first], v[e.second]);
            if (sum <= std::numbers::pi * (1.0 + 1e-12)) continue;
            // Flip e -> (a, b); orient both triangles counter-clockwise.
            auto ccw = [&](std::size_t p, std::size_t q, std::size_t r) {
                const double z = (v[q] - v[p]).cross(v[r] - v[p]).z();
                return z > 0 ? Cell{p, q, r} : Cell{p, r, q};
            };
            tris[t0] = ccw(a, b, e.first);
            tris[t1] = ccw(a, b, e.second);
            touched[t0] = touched[t1] = 1;
            ++flips;
        }
        if (flips == 0) return;
    }
}

} // namespace

PieceMesh build_segment_piece(double length, std::size_t n_cells, const Placement& placement,
                              std::string id)
{
    if (!(length > 0.0) || !std::isfinite(length))
        throw_invalid(fmt::format("segment length must be positive, got {}", length));
    if (n_cells < 1) throw_invalid("segment needs at least one cell");

    PieceMesh piece;
    piece.id = std::move(id);
    piece.dim = 1;
    piece.convex = true;
    piece.vertices.reserve(n_cells + 1);
    for (std::size_t i = 0; i <= n_cells; ++i)
        piece.vertices.emplace_back(length * static_cast<double>(i) / static_cast<double>(n_cells), 0.0, 0.0);
    piece.cells.reserve(n_cells);
    for (std::size_t i = 0; i < n_cells; ++i) piece.cells.push_back({i, i + 1, 0});
    piece.boundary.assign(n_cells + 1, 0);
    piece.boundary.front() = piece.boundary.back() = 1;
    place(piece, placement);
    return piece;
}

PieceMesh build_disk_piece(double radius, std::size_t refinement, const Placement& placement,
                           std::string id)
{
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw_invalid(fmt::format("disk radius must be positive, got {}", radius));
    if (refinement < 1) throw_invalid("disk refinement must be at least 1");

    PieceMesh piece;
    piece.id = std::move(id);
    piece.dim = 2;
    piece.convex = true;

    const double dr = radius / static_cast<double>(refinement);
    std::vector<std::size_t> ring_start{0};
    piece.vertices.emplace_back(0.0, 0.0, 0.0);
    for (std::size_t j = 1; j <= refinement; ++j) {
        ring_start.push_back(piece.vertices.size());
        const std::size_t n = 8 * j;
        for (std::size_t i = 0; i < n; ++i) {
            const double th = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
            piece.vertices.emplace_back(dr * j * std::cos(th), dr * j * std::sin(th), 0.0);
        }
    }

    for (std::size_t i = 0; i < 8; ++i) piece.cells.push_back({0, 1 + i, 1 + (i + 1) % 8});

    for (std::size_t j = 2; j <= refinement; ++j) {
        const std::size_t m = 8 * (j - 1), n = 8 * j;
        const std::size_t in0 = ring_start[j - 1], out0 = ring_start[j];
        // Merge the two rings by angle; every step emits one triangle.
        std::size_t a = 0, b = 0;
        while (a < m || b < n) {
            const double next_in = static_cast<double>(a + 1) / static_cast<double>(m);
            const double next_out = static_cast<double>(b + 1) / static_cast<double>(n);
            const std::size_t ia = in0 + a % m, ob = out0 + b % n;
            if (b < n && (a >= m || next_out <= next_in)) {
                piece.cells.push_back({ia, ob, out0 + (b + 1) % n});
                ++b;
            } else {
                piece.cells.push_back({ia, ob, in0 + (a + 1) % m});
                ++a;
            }
        }
    }
    make_delaunay(piece.vertices, piece.cells);

    piece.boundary.assign(piece.vertices.size(), 0);
    for (std::size_t v = ring_start.back(); v < piece.vertices.size(); ++v) piece.boundary[v] = 1;
    place(piece, placement);
    return piece;
}

PieceMesh build_rectangle_piece(double width, double height, std::size_t nx, std::size_t ny,
                                const Placement& placement, std::string id)
{
    if (!(width > 0.0) || !(height > 0.0))
        throw_invalid(fmt::format("rectangle sides must be positive, got {} x {}", width, height));
    if (nx < 1 || ny < 1) throw_invalid("rectangle needs at least one cell per direction");

    PieceMesh piece;
    piece.id = std::move(id);
    piece.dim = 2;
    piece.convex = true;
    for (std::size_t j = 0; j <= ny; ++j)
        for (std::size_t i = 0; i <= nx; ++i)
            piece.vertices.emplace_back(width * static_cast<double>(i) / static_cast<double>(nx),
                                        height * static_cast<double>(j) / static_cast<double>(ny), 0.0);
    auto at = [nx](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            piece.cells.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            piece.cells.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    piece.boundary = boundary_from_cells(piece);
    place(piece, placement);
    return piece;
}

} // namespace glued

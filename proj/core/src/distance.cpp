#include "glued/error.hpp"
#include "glued/geometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <functional>
#include <queue>

namespace glued {

namespace {

// Dijkstra inside one piece, seeded with the current distances of `seeds`.
void relax_mesh_piece(const GluedComplex& cx, std::size_t p, std::span<const Dof> seeds,
                      std::vector<double>& dist)
{
    const auto& piece = cx.piece(p);
    const auto dofs = cx.piece_dofs(p);
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(piece.vertex_count());
    for (std::size_t c = 0; c < piece.cell_count(); ++c) {
        const auto v = piece.cell_vertices(c);
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j) {
                const double len = (piece.vertices[v[i]] - piece.vertices[v[j]]).norm();
                adj[v[i]].emplace_back(v[j], len);
                adj[v[j]].emplace_back(v[i], len);
            }
    }
    std::vector<double> local(piece.vertex_count(), unreachable);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (Dof s : seeds)
        for (const auto& o : cx.owners(s))
            if (o.piece == p && dist[s] < local[o.local]) {
                local[o.local] = dist[s];
                queue.emplace(dist[s], o.local);
            }
    while (!queue.empty()) {
        const auto [d, v] = queue.top();
        queue.pop();
        if (d > local[v]) continue;
        for (const auto& [w, len] : adj[v])
            if (d + len < local[w]) {
                local[w] = d + len;
                queue.emplace(local[w], w);
            }
    }
    for (std::size_t v = 0; v < local.size(); ++v) dist[dofs[v]] = std::min(dist[dofs[v]], local[v]);
}

void relax_convex_piece(const GluedComplex& cx, std::size_t p, std::span<const Dof> seeds,
                        std::vector<double>& dist)
{
    for (Dof d : cx.piece_dofs(p)) {
        double best = dist[d];
        const Vec3& x = cx.position(d);
        for (Dof s : seeds) best = std::min(best, dist[s] + (cx.position(s) - x).norm());
        dist[d] = best;
    }
}

} // namespace

std::vector<double> distances_from(const GluedComplex& cx, std::span<const Dof> sources)
{
    std::vector<double> dist(cx.dof_count(), unreachable);
    for (Dof s : sources) {
        if (s >= cx.dof_count()) throw_invalid(fmt::format("DOF {} out of range", s));
        dist[s] = 0.0;
    }

    // Portals: sources and intersection DOFs. Paths between pieces pass
    // through portals only, so iterating piece relaxations over portal
    // seeds until portal distances settle realizes the chain infimum.
    std::vector<std::vector<Dof>> portals(cx.piece_count());
    std::vector<char> is_source(cx.dof_count(), 0);
    for (Dof s : sources) is_source[s] = 1;
    for (Dof d = 0; d < cx.dof_count(); ++d)
        if (is_source[d] || cx.is_shared(d))
            for (const auto& o : cx.owners(d)) portals[o.piece].push_back(d);

    std::vector<double> previous;
    for (;;) {
        previous = dist;
        for (std::size_t p = 0; p < cx.piece_count(); ++p) {
            std::vector<Dof> seeds;
            for (Dof d : portals[p])
                if (dist[d] < unreachable) seeds.push_back(d);
            if (seeds.empty()) continue;
            if (cx.piece(p).convex)
                relax_convex_piece(cx, p, seeds, dist);
            else
                relax_mesh_piece(cx, p, seeds, dist);
        }
        if (dist == previous) break;
    }
    return dist;
}

double glued_distance(const GluedComplex& cx, Dof a, Dof b)
{
    if (a >= cx.dof_count() || b >= cx.dof_count())
        throw_invalid(fmt::format("DOF pair ({}, {}) out of range", a, b));
    if (a == b) return 0.0;
    const Dof src[] = {a};
    return distances_from(cx, src)[b];
}

std::vector<Dof> metric_ball(const GluedComplex& cx, Dof center, double r)
{
    if (!(r > 0.0)) throw_invalid("ball radius must be positive");
    const Dof src[] = {center};
    const auto dist = distances_from(cx, src);
    std::vector<Dof> ball;
    for (Dof d = 0; d < dist.size(); ++d)
        if (dist[d] <= r) ball.push_back(d);
    return ball;
}

} // namespace glued

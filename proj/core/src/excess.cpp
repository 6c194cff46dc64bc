#include "glued/error.hpp"
#include "glued/excess.hpp"
#include "glued/stochastic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace glued {

namespace {

void check_shape(const GluedComplex& cx, const CellSet& U)
{
    if (U.size() != cx.piece_count()) throw_invalid("cell set does not match the piece count");
    for (std::size_t p = 0; p < cx.piece_count(); ++p)
        if (U[p].size() != cx.piece(p).cell_count())
            throw_invalid(fmt::format("cell set for piece '{}' has the wrong size", cx.piece(p).id));
}

} // namespace

CellSet cells_from_dofs(const GluedComplex& cx, std::span<const Dof> U, bool* snapped)
{
    std::vector<std::uint8_t> in(cx.dof_count(), 0);
    for (Dof d : U) {
        if (d >= cx.dof_count()) throw_invalid(fmt::format("DOF {} out of range", d));
        in[d] = 1;
    }
    CellSet out(cx.piece_count());
    std::vector<std::uint8_t> covered(cx.dof_count(), 0);
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        const auto& piece = cx.piece(p);
        const auto dofs = cx.piece_dofs(p);
        out[p].assign(piece.cell_count(), 0);
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            const auto v = piece.cell_vertices(c);
            const bool all = std::all_of(v.begin(), v.end(), [&](std::size_t i) { return in[dofs[i]] != 0; });
            out[p][c] = all;
            if (all)
                for (auto i : v) covered[dofs[i]] = 1;
        }
    }
    if (snapped) *snapped = covered != in;
    return out;
}

CellSet half_space_cells(const GluedComplex& cx, const Vec3& normal, double offset, const std::string& only)
{
    CellSet out(cx.piece_count());
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        const auto& piece = cx.piece(p);
        out[p].assign(piece.cell_count(), 0);
        if (!only.empty() && piece.id != only) continue;
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            const auto v = piece.cell_vertices(c);
            Vec3 centroid = Vec3::Zero();
            for (auto i : v) centroid += piece.vertices[i];
            centroid /= static_cast<double>(v.size());
            out[p][c] = normal.dot(centroid) > offset;
        }
    }
    if (!only.empty()) cx.piece_index(only);
    return out;
}

Vector characteristic(const DirichletSystem& sys, const CellSet& U)
{
    const auto& wc = sys.weighted();
    const auto& cx = wc.complex();
    check_shape(cx, U);
    Vector inside = Vector::Zero(static_cast<int>(sys.dof_count()));
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        const auto& piece = cx.piece(p);
        const auto dofs = cx.piece_dofs(p);
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            if (!U[p][c]) continue;
            const auto v = piece.cell_vertices(c);
            const auto& l = wc.cell_lumped(p, c);
            for (std::size_t j = 0; j < v.size(); ++j) inside[static_cast<int>(dofs[v[j]])] += l[j];
        }
    }
    return inside.cwiseQuotient(sys.mass()).cwiseMin(1.0).cwiseMax(0.0);
}

const char* to_string(ExcessConvention c)
{
    return c == ExcessConvention::symmetric ? "symmetric" : "one_sided";
}

double excess_normalization(ExcessConvention c)
{
    return (c == ExcessConvention::symmetric ? 2.0 : 1.0) / std::sqrt(std::numbers::pi);
}

namespace {

Vector semigroup(const DirichletSystem& sys, const Vector& u0, double h, std::size_t substeps)
{
    if (!(h > 0.0)) throw_invalid(fmt::format("excess time h must be positive, got {}", h));
    if (substeps < 16) throw_invalid("S_h needs at least 16 substeps");
    const ImplicitEuler stepper(sys, h / static_cast<double>(substeps));
    Vector u = u0;
    for (std::size_t i = 0; i < substeps; ++i) u = stepper.step(u);
    return u;
}

} // namespace

ExcessValue heat_excess(const DirichletSystem& sys, const Vector& chi, double h, std::size_t substeps)
{
    if (chi.size() != static_cast<int>(sys.dof_count())) throw_invalid("characteristic vector has wrong size");
    const Vector& M = sys.mass();
    const Vector s = semigroup(sys, chi, h, substeps);
    const Vector one_minus = (1.0 - chi.array()).matrix();
    ExcessValue v;
    v.one_sided = std::max(0.0, one_minus.dot(M.cwiseProduct(s)));
    // int chi S_h(1 - chi) = int chi - int chi S_h chi, using S_h 1 = 1.
    const double other = std::max(0.0, chi.dot(M) - chi.dot(M.cwiseProduct(s)));
    v.symmetric = v.one_sided + other;
    return v;
}

GeneralExcess heat_excess_general(const DirichletSystem& sys, const Vector& f, double h, std::size_t samples,
                                  std::uint64_t seed, std::size_t substeps)
{
    if (f.size() != static_cast<int>(sys.dof_count())) throw_invalid("f has wrong size");
    const Vector& M = sys.mass();
    const auto n = sys.dof_count();
    // Row x of the kernel times M: M_y (S_h (e_x / M_x))(y).
    auto contribution = [&](Dof x) {
        Vector e = Vector::Zero(static_cast<int>(n));
        e[static_cast<int>(x)] = 1.0 / M[static_cast<int>(x)];
        const Vector s = semigroup(sys, e, h, substeps);
        const double fx = f[static_cast<int>(x)];
        return (M.cwiseProduct(s).array() * (f.array() - fx).abs()).sum();
    };
    GeneralExcess out;
    if (samples == 0) {
        for (Dof x = 0; x < n; ++x) out.value += M[static_cast<int>(x)] * contribution(x);
        out.sources = n;
        out.exact = true;
        return out;
    }
    std::mt19937_64 rng(seed);
    std::vector<double> cdf(n);
    double acc = 0.0;
    for (Dof x = 0; x < n; ++x) cdf[x] = acc += M[static_cast<int>(x)];
    std::map<Dof, double> cache;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double u = uniform01(rng) * acc;
        const auto x = std::min<Dof>(n - 1, static_cast<Dof>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()));
        auto it = cache.find(x);
        if (it == cache.end()) it = cache.emplace(x, contribution(x)).first;
        s += it->second;
        s2 += it->second * it->second;
    }
    const double m = s / static_cast<double>(samples);
    const double var = samples > 1 ? std::max(0.0, (s2 - s * m) / static_cast<double>(samples - 1)) : 0.0;
    out.value = acc * m;
    out.standard_error = acc * std::sqrt(var / static_cast<double>(samples));
    out.sources = cache.size();
    return out;
}

double discrete_perimeter(const WeightedComplex& wc, const CellSet& U)
{
    const auto& cx = wc.complex();
    check_shape(cx, U);
    double total = 0.0;
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        const auto& piece = cx.piece(p);
        const auto& field = wc.weight(p);
        // Facet -> (first cell, membership of each incident cell).
        std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> facets;
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            const auto v = piece.cell_vertices(c);
            if (piece.dim == 1) {
                facets[{v[0], v[0]}].push_back(c);
                facets[{v[1], v[1]}].push_back(c);
            } else {
                for (int j = 0; j < 3; ++j) {
                    auto a = v[j], b = v[(j + 1) % 3];
                    if (a > b) std::swap(a, b);
                    facets[{a, b}].push_back(c);
                }
            }
        }
        for (const auto& [key, cells] : facets) {
            if (cells.size() != 2 || (U[p][cells[0]] != 0) == (U[p][cells[1]] != 0)) continue;
            if (piece.dim == 1) {
                total += field.value(piece.vertices[key.first], cells[0], 1);
            } else {
                const Vec3 seg[] = {piece.vertices[key.first], piece.vertices[key.second]};
                total += field.integrate(cells[0], seg, 1, seg[0]).m0;
            }
        }
    }
    return total;
}

ExcessCurve excess_curve(const DirichletSystem& sys, const CellSet& U, std::span<const double> hs,
                         ExcessConvention convention, std::size_t substeps)
{
    if (hs.empty()) throw_invalid("empty h schedule");
    ExcessCurve curve;
    curve.convention = convention;
    curve.normalization = excess_normalization(convention);
    curve.reference_perimeter = discrete_perimeter(sys.weighted(), U);
    const Vector chi = characteristic(sys, U);
    std::vector<double> sorted(hs.begin(), hs.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    for (double h : sorted) {
        const double e = heat_excess(sys, chi, h, substeps).get(convention);
        const double scaled = e / std::sqrt(h);
        curve.samples.push_back({h, e, scaled, scaled / curve.normalization});
    }
    if (curve.samples.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const auto m = static_cast<double>(curve.samples.size());
        for (const auto& s : curve.samples) {
            const double x = std::sqrt(s.h);
            sx += x;
            sy += s.scaled;
            sxx += x * x;
            sxy += x * s.scaled;
        }
        curve.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        curve.extrapolated_limit = (sy - curve.slope * sx) / m;
        double r2 = 0.0;
        for (const auto& s : curve.samples) {
            const double r = s.scaled - curve.extrapolated_limit - curve.slope * std::sqrt(s.h);
            r2 += r * r;
        }
        curve.fit_residual = std::sqrt(r2 / m);
    } else {
        curve.extrapolated_limit = curve.samples.front().scaled;
    }
    curve.deviation = curve.reference_perimeter > 0.0
        ? std::abs(curve.extrapolated_limit / curve.normalization - curve.reference_perimeter) /
              curve.reference_perimeter
        : std::numeric_limits<double>::quiet_NaN();
    return curve;
}

GammaProbe gamma_probe(const DirichletSystem& sys, const std::vector<CellSet>& family, std::span<const double> hs,
                       ExcessConvention convention, double tolerance)
{
    if (hs.size() < 4) throw_invalid(fmt::format("gamma probe needs at least 4 values of h, got {}", hs.size()));
    const auto [lo, hi] = std::minmax_element(hs.begin(), hs.end());
    if (!(*lo > 0.0)) throw_invalid("h values must be positive");
    if (*hi / *lo < 100.0 * (1.0 - 1e-12))
        throw_invalid(fmt::format("h schedule spans {:.3g} decades, needs 2", std::log10(*hi / *lo)));
    double diam = 0.0;
    for (const auto& p : sys.complex().pieces()) diam = std::max(diam, p.max_cell_diameter());
    if (std::sqrt(*lo) < excess_resolution_ratio * diam)
        throw_invalid(fmt::format("resolution: sqrt(h_min) = {:.4g} is below {} x max cell diameter {:.4g}",
                                  std::sqrt(*lo), excess_resolution_ratio, diam));
    GammaProbe probe;
    probe.tolerance = tolerance;
    probe.note = "pointwise limits along fixed sets only; Gamma-convergence is not checked";
    for (const auto& U : family) {
        probe.curves.push_back(excess_curve(sys, U, hs, convention));
        const auto& c = probe.curves.back();
        probe.within.push_back(c.reference_perimeter > 0.0 ? c.deviation <= tolerance
                                                           : std::abs(c.extrapolated_limit) <= 1e-12);
    }
    return probe;
}

} // namespace glued

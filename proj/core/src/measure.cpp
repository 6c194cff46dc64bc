#include "glued/error.hpp"
#include "glued/measure.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace glued {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Gradients of the barycentric coordinates of a cell.
std::array<Vec3, 3> barycentric_gradients(const PieceMesh& piece, std::size_t c)
{
    const auto v = piece.cell_vertices(c);
    const auto& P = piece.vertices;
    if (piece.dim == 1) {
        const Vec3 e = P[v[1]] - P[v[0]];
        const Vec3 g = e / e.squaredNorm();
        return {-g, g, Vec3::Zero()};
    }
    const Vec3 n = (P[v[1]] - P[v[0]]).cross(P[v[2]] - P[v[0]]);
    const double nn = n.squaredNorm();
    return {n.cross(P[v[2]] - P[v[1]]) / nn, n.cross(P[v[0]] - P[v[2]]) / nn, n.cross(P[v[1]] - P[v[0]]) / nn};
}

// Clips a cell to {linear interpolant of `d` <= r}.
std::vector<Vec3> clip_cell(std::span<const Vec3> x, std::span<const double> d, double r)
{
    std::vector<Vec3> out;
    if (x.size() == 2) {
        const bool in0 = d[0] <= r, in1 = d[1] <= r;
        auto cut = [&] {
            const double t = std::isfinite(d[0]) && std::isfinite(d[1]) ? (r - d[0]) / (d[1] - d[0]) : 0.0;
            return Vec3(x[0] + t * (x[1] - x[0]));
        };
        if (in0 && in1) return {x[0], x[1]};
        if (in0) return {x[0], cut()};
        if (in1) return {cut(), x[1]};
        return {};
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t j = (i + 1) % x.size();
        const bool in_i = d[i] <= r, in_j = d[j] <= r;
        if (in_i) out.push_back(x[i]);
        if (in_i != in_j) {
            double t = (r - d[i]) / (d[j] - d[i]);
            if (!std::isfinite(t)) t = in_i ? 0.0 : 1.0;
            out.emplace_back(x[i] + std::clamp(t, 0.0, 1.0) * (x[j] - x[i]));
        }
    }
    return out.size() >= 3 ? out : std::vector<Vec3>{};
}

} // namespace

WeightedComplex::WeightedComplex(GluedComplex complex, std::vector<WeightSpec> specs, bool enforce)
    : WeightedComplex(std::make_shared<const GluedComplex>(std::move(complex)), std::move(specs), enforce)
{
}

WeightedComplex::WeightedComplex(std::shared_ptr<const GluedComplex> complex, std::vector<WeightSpec> specs,
                                 bool enforce)
    : complex_(std::move(complex)), specs_(std::move(specs))
{
    const auto& cx = *complex_;
    std::vector<const WeightSpec*> by_piece(cx.piece_count(), nullptr);
    for (const auto& s : specs_) {
        const auto p = cx.piece_index(s.piece);
        if (by_piece[p]) throw_invalid(fmt::format("piece '{}' has two weight declarations", s.piece));
        by_piece[p] = &s;
    }

    fields_.reserve(cx.piece_count());
    cells_.resize(cx.piece_count());
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        const WeightSpec spec = by_piece[p] ? *by_piece[p] : WeightSpec::constant(cx.piece(p).id, 1.0);
        fields_.emplace_back(cx, p, spec);
        const auto& field = fields_.back();
        if (enforce && !field.admissible())
            throw Error(ErrorKind::non_integrable_weight,
                        fmt::format("power weight on '{}' has alpha = {} outside (-(n-k), n-k) = ({}, {})",
                                    cx.piece(p).id, field.alpha(), -(field.n() - field.k()),
                                    field.n() - field.k()));

        const auto& piece = cx.piece(p);
        auto& cells = cells_[p];
        cells.resize(piece.cell_count());
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            const auto v = piece.cell_vertices(c);
            std::vector<Vec3> poly;
            for (auto i : v) poly.push_back(piece.vertices[i]);
            const Vec3& origin = poly[0];
            const Moments m = field.integrate(c, poly, 1, origin);
            const auto grads = barycentric_gradients(piece, c);
            auto& ci = cells[c];
            ci.mu = m.m0;
            for (std::size_t j = 0; j < v.size(); ++j)
                ci.lumped[j] = (j == 0 ? m.m0 : 0.0) + grads[j].dot(m.m1);
            ci.inv = field.integrate(c, poly, -1, origin).m0;
        }
    }
}

double WeightedComplex::piece_mu(std::size_t piece) const
{
    double total = 0.0;
    for (const auto& c : cells_[piece]) total += c.mu;
    return total;
}

double WeightedComplex::total_mu() const
{
    double total = 0.0;
    for (std::size_t p = 0; p < cells_.size(); ++p) total += piece_mu(p);
    return total;
}

WeightedComplex attach_weight(GluedComplex complex, const WeightSpec& spec)
{
    return WeightedComplex(std::move(complex), {spec});
}

WeightedComplex attach_weight(const WeightedComplex& weighted, const WeightSpec& spec, bool enforce)
{
    std::vector<WeightSpec> specs;
    for (const auto& s : weighted.specs())
        if (s.piece != spec.piece) specs.push_back(s);
    specs.push_back(spec);
    return WeightedComplex(weighted.shared_complex(), std::move(specs), enforce);
}

double sublevel_measure(const WeightedComplex& wc, std::span<const double> dist, double r,
                        std::optional<std::size_t> only, int sign)
{
    const auto& cx = wc.complex();
    if (dist.size() != cx.dof_count()) throw_invalid("distance vector size does not match DOF count");
    double total = 0.0;
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        if (only && *only != p) continue;
        const auto& piece = cx.piece(p);
        const auto dofs = cx.piece_dofs(p);
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            const auto v = piece.cell_vertices(c);
            double lo = inf, hi = -inf;
            std::array<double, 3> d{};
            std::array<Vec3, 3> x;
            for (std::size_t j = 0; j < v.size(); ++j) {
                d[j] = dist[dofs[v[j]]];
                x[j] = piece.vertices[v[j]];
                lo = std::min(lo, d[j]);
                hi = std::max(hi, d[j]);
            }
            if (lo > r) continue;
            if (hi <= r) {
                total += sign == 1 ? wc.cell_mu(p, c)
                                   : (sign == -1 ? wc.cell_inverse_mu(p, c) : piece.cell_volume(c));
                continue;
            }
            const auto poly = clip_cell(std::span<const Vec3>(x.data(), v.size()),
                                        std::span<const double>(d.data(), v.size()), r);
            if (poly.empty()) continue;
            total += wc.weight(p).integrate(c, poly, sign, poly[0]).m0;
        }
    }
    return total;
}

double mu_ball(const WeightedComplex& wc, Dof center, double r)
{
    const Dof src[] = {center};
    return sublevel_measure(wc, distances_from(wc.complex(), src), r);
}

double mu_ball_piece(const WeightedComplex& wc, std::size_t piece, Dof center, double r)
{
    const Dof src[] = {center};
    return sublevel_measure(wc, distances_from(wc.complex(), src), r, piece);
}

A2Report check_A2(const WeightedComplex& wc, std::size_t piece, std::span<const BallSample> sample)
{
    if (sample.empty()) throw_invalid("A2 check needs at least one ball");
    A2Report report;
    std::map<Dof, std::vector<double>> cache;
    for (const auto& b : sample) {
        auto it = cache.find(b.center);
        if (it == cache.end()) {
            const Dof src[] = {b.center};
            it = cache.emplace(b.center, distances_from(wc.complex(), src)).first;
        }
        const double vol = sublevel_measure(wc, it->second, b.r, piece, 0);
        if (!(vol > 0.0)) continue;
        const double w = sublevel_measure(wc, it->second, b.r, piece, 1) / vol;
        const double iw = sublevel_measure(wc, it->second, b.r, piece, -1) / vol;
        double prod = w * iw;
        if (std::isnan(prod)) prod = inf;
        report.table.push_back({b.center, b.r, w, iw, prod});
        report.estimate = std::max(report.estimate, prod);
    }
    if (!std::isfinite(report.estimate)) report.unbounded = true;

    // Growth along shrinking balls at a fixed center.
    std::map<Dof, std::vector<std::pair<double, double>>> by_center;
    for (const auto& e : report.table) by_center[e.center].emplace_back(e.r, e.product);
    for (auto& [c, series] : by_center) {
        if (series.size() < 3) continue;
        std::sort(series.begin(), series.end(), std::greater<>());
        bool increasing = true;
        for (std::size_t i = 1; i < series.size(); ++i)
            increasing = increasing && series[i].second >= series[i - 1].second * (1.0 - 1e-9);
        if (increasing && series.back().second > 2.0 * series.front().second) report.unbounded = true;
    }
    return report;
}

MeasureProfile check_N_doubling(const WeightedComplex& wc, std::span<const Dof> centers,
                                std::span<const double> radii_in)
{
    const auto& cx = wc.complex();
    std::vector<double> radii(radii_in.begin(), radii_in.end());
    for (double r : radii)
        if (!(r > 0.0)) throw_invalid("doubling radii must be positive");
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());

    MeasureProfile prof;
    std::vector<double> envelope(radii.size(), 0.0);
    for (Dof c : centers) {
        if (c >= cx.dof_count()) throw_invalid(fmt::format("center DOF {} out of range", c));
        const Dof src[] = {c};
        const auto dist = distances_from(cx, src);
        for (std::size_t i = 0; i < radii.size(); ++i) {
            const double r = radii[i];
            const double m1 = sublevel_measure(wc, dist, r);
            const double m3 = sublevel_measure(wc, dist, 3.0 * r);
            prof.ball_table.push_back({c, r, m1});
            prof.ball_table.push_back({c, 3.0 * r, m3});
            if (m1 > 0.0) {
                const double ratio = m3 / m1;
                prof.doubling_table.push_back({c, r, m1, m3, ratio});
                envelope[i] = std::max(envelope[i], ratio);
            }
        }
        if (cx.is_shared(c)) {
            const auto own = cx.owners(c);
            for (std::size_t i = 0; i < radii.size(); ++i) {
                const double ma = sublevel_measure(wc, dist, radii[i], own[0].piece);
                const double mb = sublevel_measure(wc, dist, radii[i], own[1].piece);
                prof.comparison.push_back({c, radii[i], own[0].piece, own[1].piece, mb > 0.0 ? ma / mb : inf});
            }
        }
    }
    std::stable_sort(prof.ball_table.begin(), prof.ball_table.end(),
                     [](const auto& a, const auto& b) { return a.r < b.r; });
    std::stable_sort(prof.doubling_table.begin(), prof.doubling_table.end(),
                     [](const auto& a, const auto& b) { return a.r < b.r; });

    for (std::size_t i = 0; i < radii.size(); ++i) prof.n_fit.emplace_back(radii[i], envelope[i]);
    if (!radii.empty()) {
        // N is extended as a constant on [0, r_min].
        prof.n_integral = radii.front() * envelope.front();
        for (std::size_t i = 1; i < radii.size(); ++i)
            prof.n_integral += 0.5 * (envelope[i] + envelope[i - 1]) * (radii[i] - radii[i - 1]);
    }
    const std::size_t half = std::max<std::size_t>(2, (radii.size() + 1) / 2);
    if (radii.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        std::size_t m = 0;
        for (std::size_t i = 0; i < std::min(half, radii.size()); ++i) {
            if (!(envelope[i] > 0.0)) continue;
            const double x = std::log(radii[i]), y = std::log(envelope[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++m;
        }
        if (m >= 2) prof.n_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    }
    prof.integrable = prof.n_slope > -0.9 && std::isfinite(prof.n_integral);

    std::map<std::tuple<Dof, std::size_t, std::size_t>, std::vector<double>> series;
    for (const auto& e : prof.comparison) series[{e.center, e.piece_a, e.piece_b}].push_back(e.ratio);
    for (const auto& [key, values] : series) {
        if (values.size() < 2) continue;
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        bool up = true, down = true;
        for (std::size_t i = 1; i < values.size(); ++i) {
            up = up && values[i] >= values[i - 1];
            down = down && values[i] <= values[i - 1];
        }
        if (!std::isfinite(*hi) || (*lo > 0.0 && *hi / *lo > 4.0 && (up || down)) || *lo == 0.0)
            prof.comparison_degenerate = true;
    }
    return prof;
}

MuckenhouptReport check_L_muckenhoupt(const WeightedComplex& wc, std::size_t piece,
                                      const std::string& intersection_id, std::span<const double> radii,
                                      double band_limit)
{
    const auto& cx = wc.complex();
    const auto& g = cx.intersection(intersection_id);
    if (g.piece_a != piece && g.piece_b != piece)
        throw_invalid(fmt::format("intersection '{}' does not lie in piece '{}'", intersection_id,
                                  cx.piece(piece).id));
    const auto dist = distances_from(cx, g.dofs);
    const int codim = cx.piece(piece).dim - g.k;

    MuckenhouptReport rep;
    std::vector<double> rs(radii.begin(), radii.end());
    std::sort(rs.begin(), rs.end());
    double lo = inf, hi = 0.0;
    bool finite = true;
    for (double R : rs) {
        if (!(R > 0.0)) throw_invalid("tube radii must be positive");
        const double m = sublevel_measure(wc, dist, R, piece, 1);
        const double im = sublevel_measure(wc, dist, R, piece, -1);
        double ratio = m * im / std::pow(R, 2.0 * codim);
        if (std::isnan(ratio)) ratio = inf;
        rep.table.push_back({R, m, im, ratio});
        finite = finite && std::isfinite(ratio);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    rep.band = (finite && lo > 0.0) ? hi / lo : inf;
    rep.satisfied = finite && rep.band <= band_limit;
    return rep;
}

} // namespace glued

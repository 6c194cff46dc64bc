#include "glued/error.hpp"
#include "glued/measure.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace glued {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Gauss-Legendre rule on [0, 1]; boost stores the non-negative half of the
// symmetric rule on [-1, 1].
template <unsigned N>
const std::vector<std::pair<double, double>>& unit_rule()
{
    static const auto rule = [] {
        using G = boost::math::quadrature::gauss<double, N>;
        std::vector<std::pair<double, double>> r;
        const auto& x = G::abscissa();
        const auto& w = G::weights();
        for (std::size_t i = 0; i < x.size(); ++i) {
            r.emplace_back(0.5 * (1.0 + x[i]), 0.5 * w[i]);
            if (x[i] != 0.0) r.emplace_back(0.5 * (1.0 - x[i]), 0.5 * w[i]);
        }
        return r;
    }();
    return rule;
}

const std::vector<std::pair<double, double>>& rule_for(int order)
{
    if (order <= 4) return unit_rule<4>();
    if (order <= 7) return unit_rule<7>();
    return unit_rule<10>();
}

// Antiderivative of r^(m-1): r^m/m, or log r for m == 0.
double antiderivative(double r, double m)
{
    if (m == 0.0) return std::log(r);
    return std::pow(r, m) / m;
}

Vec3 polygon_normal(std::span<const Vec3> poly)
{
    Vec3 n = Vec3::Zero();
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) n += (poly[i] - poly[0]).cross(poly[i + 1] - poly[0]);
    return n;
}

Moments flat_moments(std::span<const Vec3> region, const Vec3& origin)
{
    Moments m;
    if (region.size() == 2) {
        const double len = (region[1] - region[0]).norm();
        m.m0 = len;
        m.m1 = len * (0.5 * (region[0] + region[1]) - origin);
        return m;
    }
    for (std::size_t i = 1; i + 1 < region.size(); ++i) {
        const double a = 0.5 * (region[i] - region[0]).cross(region[i + 1] - region[0]).norm();
        m.m0 += a;
        m.m1 += a * ((region[0] + region[i] + region[i + 1]) / 3.0 - origin);
    }
    return m;
}

double region_diameter(std::span<const Vec3> region)
{
    double d = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i)
        for (std::size_t j = i + 1; j < region.size(); ++j) d = std::max(d, (region[i] - region[j]).norm());
    return d;
}

Vec3 region_centroid(std::span<const Vec3> region)
{
    Vec3 c = Vec3::Zero();
    for (const auto& x : region) c += x;
    return c / static_cast<double>(region.size());
}

bool point_in_polygon(const Vec3& p, std::span<const Vec3> poly, double tol)
{
    const Vec3 n = polygon_normal(poly);
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec3& a = poly[i];
        const Vec3& b = poly[(i + 1) % poly.size()];
        if ((b - a).cross(p - a).dot(n) < -tol * n.norm()) return false;
    }
    return true;
}

double point_segment_distance(const Vec3& x, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double t = std::clamp((x - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (x - (a + t * ab)).norm();
}

} // namespace

const char* to_string(WeightKind kind)
{
    switch (kind) {
    case WeightKind::constant: return "constant";
    case WeightKind::power: return "power";
    case WeightKind::tabulated: return "tabulated";
    }
    return "unknown";
}

WeightSpec WeightSpec::constant(std::string piece, double c)
{
    WeightSpec s;
    s.piece = std::move(piece);
    s.kind = WeightKind::constant;
    s.value = c;
    return s;
}

WeightSpec WeightSpec::power(std::string piece, std::string intersection_id, double alpha)
{
    WeightSpec s;
    s.piece = std::move(piece);
    s.kind = WeightKind::power;
    s.anchor = std::move(intersection_id);
    s.alpha = alpha;
    return s;
}

WeightSpec WeightSpec::power_at(std::string piece, const Vec3& point, double alpha)
{
    WeightSpec s;
    s.piece = std::move(piece);
    s.kind = WeightKind::power;
    s.anchor_point = point;
    s.alpha = alpha;
    return s;
}

WeightSpec WeightSpec::tabulated(std::string piece, std::vector<double> values)
{
    WeightSpec s;
    s.piece = std::move(piece);
    s.kind = WeightKind::tabulated;
    s.table = std::move(values);
    return s;
}

WeightField::WeightField(const GluedComplex& complex, std::size_t p, const WeightSpec& spec)
    : piece_(&complex.piece(p)), kind_(spec.kind), n_(complex.piece(p).dim)
{
    const auto& piece = *piece_;
    switch (kind_) {
    case WeightKind::constant:
        if (!(spec.value > 0.0) || !std::isfinite(spec.value))
            throw_invalid(fmt::format("constant weight on '{}' must be positive and finite", piece.id));
        c_ = spec.value;
        break;
    case WeightKind::tabulated:
        if (spec.table.size() != piece.vertex_count())
            throw_invalid(fmt::format("tabulated weight on '{}' has {} values for {} vertices", piece.id,
                                      spec.table.size(), piece.vertex_count()));
        for (double v : spec.table)
            if (!(v > 0.0) || !std::isfinite(v))
                throw_invalid(fmt::format("tabulated weight on '{}' must be positive and finite", piece.id));
        table_ = spec.table;
        break;
    case WeightKind::power: {
        if (!std::isfinite(spec.alpha)) throw_invalid("power weight exponent must be finite");
        alpha_ = spec.alpha;
        on_anchor_.assign(piece.vertex_count(), 0);
        const double tol = std::max(complex.tolerance(), 1e-9 * std::max(piece.extent(), 1e-300));
        if (spec.anchor_point) {
            k_ = 0;
            anchor_ = *spec.anchor_point;
            bool found = false;
            for (std::size_t v = 0; v < piece.vertex_count(); ++v)
                if ((piece.vertices[v] - anchor_).norm() <= tol) {
                    on_anchor_[v] = 1;
                    anchor_ = piece.vertices[v];
                    found = true;
                    break;
                }
            if (!found)
                throw_invalid(fmt::format("anchor point ({}, {}, {}) is not a vertex of piece '{}'",
                                          anchor_.x(), anchor_.y(), anchor_.z(), piece.id));
        } else {
            const auto& g = complex.intersection(spec.anchor);
            if (g.piece_a != p && g.piece_b != p)
                throw_invalid(fmt::format("intersection '{}' does not lie in piece '{}'", spec.anchor, piece.id));
            k_ = g.k;
            std::map<Dof, std::size_t> local;
            for (const auto& pr : g.pairs) {
                const std::size_t lv = pr.piece_a == p ? pr.vertex_a : pr.vertex_b;
                local[complex.global_dof(p, lv)] = lv;
            }
            for (const auto& [d, v] : local) on_anchor_[v] = 1;
            anchor_ = complex.position(g.dofs.front());
            for (const auto& [a, b] : g.edges) {
                anchor_segments_.push_back({complex.position(a), complex.position(b)});
                anchor_length_ += (complex.position(a) - complex.position(b)).norm();
                const auto la = local.at(a), lb = local.at(b);
                anchor_edges_.emplace_back(std::min(la, lb), std::max(la, lb));
            }
        }
        if (k_ >= n_)
            throw Error(ErrorKind::hypothesis_violation,
                        fmt::format("anchor of dimension {} in piece '{}' of dimension {}", k_, piece.id, n_));
        break;
    }
    }
}

double WeightField::anchor_size() const
{
    if (kind_ != WeightKind::power) return 0.0;
    const int codim = n_ - k_;
    const double sphere = codim == 1 ? 2.0 : (codim == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi);
    return k_ == 0 ? sphere : sphere * anchor_length_;
}

bool WeightField::admissible() const
{
    if (kind_ != WeightKind::power) return true;
    const double codim = n_ - k_;
    return alpha_ > -codim && alpha_ < codim;
}

double WeightField::distance_to_anchor(const Vec3& x) const
{
    if (k_ == 0) return (x - anchor_).norm();
    double d = inf;
    for (const auto& s : anchor_segments_) d = std::min(d, point_segment_distance(x, s[0], s[1]));
    return d;
}

double WeightField::value(const Vec3& x, std::size_t cell, int sign) const
{
    if (sign == 0) return 1.0;
    switch (kind_) {
    case WeightKind::constant: return std::pow(c_, sign);
    case WeightKind::power: return std::pow(distance_to_anchor(x), -alpha_ * sign);
    case WeightKind::tabulated: {
        const auto v = piece_->cell_vertices(cell);
        const auto& P = piece_->vertices;
        double w;
        if (n_ == 1) {
            const Vec3 e = P[v[1]] - P[v[0]];
            const double t = std::clamp((x - P[v[0]]).dot(e) / e.squaredNorm(), 0.0, 1.0);
            w = (1.0 - t) * table_[v[0]] + t * table_[v[1]];
        } else {
            const Vec3 n = (P[v[1]] - P[v[0]]).cross(P[v[2]] - P[v[0]]);
            const double nn = n.squaredNorm();
            const double l1 = n.dot((x - P[v[0]]).cross(P[v[2]] - P[v[0]])) / nn;
            const double l2 = n.dot((P[v[1]] - P[v[0]]).cross(x - P[v[0]])) / nn;
            w = (1.0 - l1 - l2) * table_[v[0]] + l1 * table_[v[1]] + l2 * table_[v[2]];
        }
        return std::pow(std::max(w, 1e-300), sign);
    }
    }
    return 1.0;
}

bool WeightField::touches_anchor(std::size_t cell) const
{
    if (on_anchor_.empty()) return false;
    for (auto v : piece_->cell_vertices(cell))
        if (on_anchor_[v]) return true;
    return false;
}

std::optional<std::size_t> WeightField::anchor_edge_of(std::size_t cell) const
{
    if (k_ != 1) return std::nullopt;
    const auto v = piece_->cell_vertices(cell);
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            if (!on_anchor_[v[i]] || !on_anchor_[v[j]]) continue;
            const std::pair<std::size_t, std::size_t> e{std::min(v[i], v[j]), std::max(v[i], v[j])};
            for (std::size_t s = 0; s < anchor_edges_.size(); ++s)
                if (anchor_edges_[s] == e) return s;
        }
    return std::nullopt;
}

Moments WeightField::integrate(std::size_t cell, std::span<const Vec3> region, int sign,
                               const Vec3& origin) const
{
    if (sign == 0 || kind_ == WeightKind::constant) {
        Moments m = flat_moments(region, origin);
        const double scale = sign == 0 ? 1.0 : std::pow(c_, sign);
        m.m0 *= scale;
        m.m1 *= scale;
        return m;
    }
    if (kind_ == WeightKind::tabulated) return gauss(cell, region, sign, origin, 7);

    const double s = -alpha_ * sign;
    if (s == 0.0) return flat_moments(region, origin);

    if (region.size() == 2 && k_ == 1) return adaptive(cell, region, sign, origin, 10);
    if (region.size() == 2) {
        // 1D region: closed form in the coordinate u = t - t0 along the cell.
        const Vec3 a = region[0];
        const double len = (region[1] - a).norm();
        if (len == 0.0) return {};
        const Vec3 e = (region[1] - a) / len;
        const Vec3& p = anchor_;
        const double t0 = (p - a).dot(e);
        const double h = (p - a - t0 * e).norm();
        if (h > 1e-12 * len) return adaptive(cell, region, sign, origin, 6);
        const double tol = 1e-14 * len;
        // int_{lo}^{hi} u^(m-1) du for 0 < lo < hi.
        auto I = [](double lo, double hi, double m) { return antiderivative(hi, m) - antiderivative(lo, m); };
        double u1 = -t0, u2 = len - t0;
        if (std::abs(u1) < tol) u1 = 0.0;
        if (std::abs(u2) < tol) u2 = 0.0;
        double I0 = 0.0, I1 = 0.0;
        const bool touches = u1 <= 0.0 && u2 >= 0.0;
        if (touches && s + 1.0 <= 0.0) return {inf, Vec3::Zero()};
        if (u2 > 0.0) {
            const double lo = std::max(u1, 0.0);
            I0 += lo == 0.0 ? std::pow(u2, s + 1) / (s + 1) : I(lo, u2, s + 1);
            I1 += lo == 0.0 ? std::pow(u2, s + 2) / (s + 2) : I(lo, u2, s + 2);
        }
        if (u1 < 0.0) {
            const double hi = std::min(u2, 0.0);
            // Mirror to w = -u in [-hi, -u1].
            I0 += hi == 0.0 ? std::pow(-u1, s + 1) / (s + 1) : I(-hi, -u1, s + 1);
            I1 -= hi == 0.0 ? std::pow(-u1, s + 2) / (s + 2) : I(-hi, -u1, s + 2);
        }
        Moments m;
        m.m0 = I0;
        m.m1 = (a - origin + t0 * e) * I0 + e * I1;
        return m;
    }

    const double diam = region_diameter(region);
    if (k_ == 0) {
        const double far = (region_centroid(region) - anchor_).norm();
        if (far < 3.0 * diam) return radial(region, s, origin);
        return gauss(cell, region, sign, origin, 7);
    }
    if (anchor_edge_of(cell)) return line_slice(cell, region, s, origin);
    if (touches_anchor(cell) || distance_to_anchor(region_centroid(region)) < 2.0 * diam)
        return adaptive(cell, region, sign, origin, 5);
    return gauss(cell, region, sign, origin, 7);
}

Moments WeightField::gauss(std::size_t cell, std::span<const Vec3> region, int sign, const Vec3& origin,
                           int order) const
{
    const auto& rule = rule_for(order);
    Moments m;
    if (region.size() == 2) {
        const Vec3 d = region[1] - region[0];
        const double len = d.norm();
        for (const auto& [t, w] : rule) {
            const Vec3 x = region[0] + t * d;
            const double f = value(x, cell, sign) * w * len;
            m.m0 += f;
            m.m1 += f * (x - origin);
        }
        return m;
    }
    for (std::size_t i = 1; i + 1 < region.size(); ++i) {
        const Vec3& a = region[0];
        const Vec3 ab = region[i] - a;
        const Vec3 bc = region[i + 1] - region[i];
        const double jac = ab.cross(region[i + 1] - a).norm();
        // Collapsed map (u, v) -> a + u (ab + v bc); Jacobian = 2A u.
        for (const auto& [u, wu] : rule)
            for (const auto& [v, wv] : rule) {
                const Vec3 x = a + u * (ab + v * bc);
                const double f = value(x, cell, sign) * wu * wv * jac * u;
                m.m0 += f;
                m.m1 += f * (x - origin);
            }
    }
    return m;
}

Moments WeightField::adaptive(std::size_t cell, std::span<const Vec3> region, int sign, const Vec3& origin,
                              int depth) const
{
    if (region.size() == 2) {
        const Moments whole = gauss(cell, region, sign, origin, 10);
        if (depth == 0) return whole;
        const Vec3 mid = 0.5 * (region[0] + region[1]);
        const Vec3 left[] = {region[0], mid};
        const Vec3 right[] = {mid, region[1]};
        const Moments a = gauss(cell, left, sign, origin, 10);
        const Moments b = gauss(cell, right, sign, origin, 10);
        if (std::abs(a.m0 + b.m0 - whole.m0) <= 1e-12 * std::abs(whole.m0))
            return {a.m0 + b.m0, a.m1 + b.m1};
        const Moments l = adaptive(cell, left, sign, origin, depth - 1);
        const Moments r = adaptive(cell, right, sign, origin, depth - 1);
        return {l.m0 + r.m0, l.m1 + r.m1};
    }
    Moments total;
    for (std::size_t i = 1; i + 1 < region.size(); ++i) {
        const Vec3 t[] = {region[0], region[i], region[i + 1]};
        const Moments whole = gauss(cell, t, sign, origin, 7);
        if (depth == 0) {
            total.m0 += whole.m0;
            total.m1 += whole.m1;
            continue;
        }
        const Vec3 m01 = 0.5 * (t[0] + t[1]), m12 = 0.5 * (t[1] + t[2]), m20 = 0.5 * (t[2] + t[0]);
        const std::array<std::array<Vec3, 3>, 4> kids{{{t[0], m01, m20}, {m01, t[1], m12}, {m20, m12, t[2]},
                                                       {m01, m12, m20}}};
        Moments sum;
        for (const auto& kid : kids) {
            const Moments km = gauss(cell, kid, sign, origin, 7);
            sum.m0 += km.m0;
            sum.m1 += km.m1;
        }
        if (std::abs(sum.m0 - whole.m0) <= 1e-12 * std::abs(whole.m0)) {
            total.m0 += sum.m0;
            total.m1 += sum.m1;
            continue;
        }
        for (const auto& kid : kids) {
            const Moments km = adaptive(cell, kid, sign, origin, depth - 1);
            total.m0 += km.m0;
            total.m1 += km.m1;
        }
    }
    return total;
}

// Exact radial integration of |x - p|^s (1, x - p) over a convex polygon.
// The polygon is fanned from the anchor p; each fan triangle (p, a, b) is
// integrated in polar coordinates with the substitution x = d sinh v along
// the edge, where d is the distance from p to the edge line.
Moments WeightField::radial(std::span<const Vec3> region, double s, const Vec3& origin) const
{
    const Vec3& p = anchor_;
    const Vec3 normal = polygon_normal(region);
    const double diam = region_diameter(region);
    const bool contains = point_in_polygon(p, region, 1e-12 * diam);
    if (contains && s + 2.0 <= 0.0) return {inf, Vec3::Zero()};

    const auto& rule = unit_rule<10>();
    double m0 = 0.0;
    Vec3 m1 = Vec3::Zero();
    for (std::size_t i = 0; i < region.size(); ++i) {
        const Vec3& a = region[i];
        const Vec3& b = region[(i + 1) % region.size()];
        const double len = (b - a).norm();
        if (len == 0.0) continue;
        const Vec3 t = (b - a) / len;
        const Vec3 foot = a + (p - a).dot(t) * t;
        const double d = (foot - p).norm();
        if (d <= 1e-13 * std::max(len, diam)) continue;
        const double orient = (a - p).cross(b - p).dot(normal) > 0.0 ? 1.0 : -1.0;
        const Vec3 nhat = (foot - p) / d;
        const double v0 = std::asinh((a - foot).dot(t) / d);
        const double v1 = std::asinh((b - foot).dot(t) / d);
        const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(v1 - v0) / 0.5)));
        const double hv = (v1 - v0) / panels;
        double e0 = 0.0;
        Vec3 e1 = Vec3::Zero();
        for (int k = 0; k < panels; ++k)
            for (const auto& [x, w] : rule) {
                const double v = v0 + (k + x) * hv;
                const double ch = std::cosh(v);
                const double R = d * ch;
                const double wt = w * hv / ch;
                e0 += wt * antiderivative(R, s + 2.0);
                e1 += wt * antiderivative(R, s + 3.0) * (nhat / ch + std::tanh(v) * t);
            }
        m0 += orient * e0;
        m1 += orient * e1;
    }
    Moments m;
    m.m0 = m0;
    m.m1 = m1 + m0 * (p - origin);
    return m;
}

// Exact integration of tau^s (1, x - origin) where tau is the distance to
// the line through the intersection edge adjacent to the cell. Uses
// Green's theorem in the (xi, tau) frame of the edge line.
Moments WeightField::line_slice(std::size_t cell, std::span<const Vec3> region, double s,
                                const Vec3& origin) const
{
    const auto seg = anchor_segments_[*anchor_edge_of(cell)];
    const Vec3 e0 = seg[0];
    const Vec3 th = (seg[1] - seg[0]).normalized();
    const Vec3 centroid = region_centroid(region);
    Vec3 nh = (centroid - e0) - (centroid - e0).dot(th) * th;
    if (nh.norm() == 0.0) return {};
    nh.normalize();

    std::vector<double> xi(region.size()), tau(region.size());
    double tau_min = inf, tau_max = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        xi[i] = (region[i] - e0).dot(th);
        tau[i] = std::max((region[i] - e0).dot(nh), 0.0);
        tau_min = std::min(tau_min, tau[i]);
        tau_max = std::max(tau_max, tau[i]);
    }
    if (tau_min <= 1e-13 * tau_max) {
        tau_min = 0.0;
        if (s + 1.0 <= 0.0) return {inf, Vec3::Zero()};
    }
    double area2 = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        const std::size_t j = (i + 1) % region.size();
        area2 += xi[i] * tau[j] - xi[j] * tau[i];
    }
    const double orient = area2 > 0.0 ? -1.0 : 1.0;

    boost::math::quadrature::tanh_sinh<double> integrator;
    const Vec3 base = e0 - origin;
    double m0 = 0.0;
    Vec3 m1 = Vec3::Zero();
    for (std::size_t i = 0; i < region.size(); ++i) {
        const std::size_t j = (i + 1) % region.size();
        const double dxi = xi[j] - xi[i];
        if (std::abs(dxi) <= 1e-15 * (std::abs(xi[i]) + std::abs(xi[j]) + tau_max)) continue;
        auto tau_at = [&](double l) { return std::max(tau[i] + (tau[j] - tau[i]) * l, 0.0); };
        auto xi_at = [&](double l) { return xi[i] + dxi * l; };
        auto G = [&](double l, double m) {
            const double tv = tau_at(l);
            if (tv == 0.0) return 0.0;
            return antiderivative(tv, m);
        };
        auto integ = [&](auto&& f) { return integrator.integrate(f, 0.0, 1.0) * dxi; };
        const double g0 = integ([&](double l) { return G(l, s + 1.0); });
        const double gxi = integ([&](double l) { return xi_at(l) * G(l, s + 1.0); });
        const double gt = integ([&](double l) { return G(l, s + 2.0); });
        m0 += orient * g0;
        m1 += orient * (base * g0 + th * gxi + nh * gt);
    }
    return {m0, m1};
}

} // namespace glued

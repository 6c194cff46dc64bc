#include "glued/capacity.hpp"
#include "glued/error.hpp"

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace glued {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double slack = 1e-9;

std::vector<std::uint8_t> flags(std::span<const Dof> set, std::size_t n, const char* what)
{
    std::vector<std::uint8_t> f(n, 0);
    for (Dof d : set) {
        if (d >= n) throw_invalid(fmt::format("{} DOF {} out of range", what, d));
        f[d] = 1;
    }
    return f;
}

// Power-law model of a tube measure below the mesh scale, matched at rho_s.
struct TubeModel {
    double rho_s = 0.0;
    double at_s = 0.0;
    double exponent = 0.0;
    double operator()(double rho) const
    {
        if (exponent <= 0.0) return inf;
        return at_s * std::pow(rho / rho_s, exponent);
    }
};

} // namespace

std::vector<Dof> tube(const GluedComplex& cx, const std::string& id, double r)
{
    if (!(r > 0.0)) throw_invalid("tube radius must be positive");
    const auto dist = distances_from(cx, cx.intersection(id).dofs);
    return closed_sublevel(dist, r);
}

std::vector<Dof> open_sublevel(std::span<const double> dist, double R)
{
    std::vector<Dof> out;
    for (Dof d = 0; d < dist.size(); ++d)
        if (dist[d] < R * (1.0 - slack)) out.push_back(d);
    return out;
}

std::vector<Dof> closed_sublevel(std::span<const double> dist, double r)
{
    std::vector<Dof> out;
    for (Dof d = 0; d < dist.size(); ++d)
        if (dist[d] <= r * (1.0 + slack)) out.push_back(d);
    return out;
}

CapacityResult relative_capacity(const SparseMatrix& K, std::span<const Dof> K_set, std::span<const Dof> Omega)
{
    const auto n = static_cast<std::size_t>(K.rows());
    if (K_set.empty()) throw_invalid("capacity needs a non-empty K_set");
    const auto inK = flags(K_set, n, "K_set");
    const auto inO = flags(Omega, n, "Omega");
    for (Dof d : K_set)
        if (!inO[d]) throw_invalid(fmt::format("K_set DOF {} lies outside Omega", d));
    for (Dof d : K_set)
        for (SparseMatrix::InnerIterator it(K, static_cast<int>(d)); it; ++it)
            if (it.value() != 0.0 && !inO[static_cast<std::size_t>(it.row())])
                throw_invalid(fmt::format("K_set DOF {} is adjacent to DOF {} outside Omega (infinite capacity)", d,
                                          it.row()));

    // Classify the components of Omega \ K_set by what they touch.
    Vector u = Vector::Zero(static_cast<int>(n));
    for (Dof d : K_set) u[static_cast<int>(d)] = 1.0;
    std::vector<std::int64_t> comp(n, -1);
    std::vector<Dof> free;
    std::vector<Dof> stack;
    for (Dof s = 0; s < n; ++s) {
        if (!inO[s] || inK[s] || comp[s] >= 0) continue;
        std::vector<Dof> members;
        bool touchK = false, touchC = false;
        comp[s] = static_cast<std::int64_t>(s);
        stack.push_back(s);
        while (!stack.empty()) {
            const Dof x = stack.back();
            stack.pop_back();
            members.push_back(x);
            for (SparseMatrix::InnerIterator it(K, static_cast<int>(x)); it; ++it) {
                const auto y = static_cast<Dof>(it.row());
                if (y == x || it.value() == 0.0) continue;
                if (inK[y]) {
                    touchK = true;
                } else if (!inO[y]) {
                    touchC = true;
                } else if (comp[y] < 0) {
                    comp[y] = static_cast<std::int64_t>(s);
                    stack.push_back(y);
                }
            }
        }
        if (touchC) {
            free.insert(free.end(), members.begin(), members.end());
        } else if (touchK) {
            for (Dof x : members) u[static_cast<int>(x)] = 1.0;
        }
    }
    std::sort(free.begin(), free.end());

    CapacityResult res;
    if (!free.empty()) {
        std::vector<int> index(n, -1);
        for (std::size_t i = 0; i < free.size(); ++i) index[free[i]] = static_cast<int>(i);
        std::vector<Eigen::Triplet<double>> trip;
        Vector rhs = Vector::Zero(static_cast<int>(free.size()));
        for (std::size_t i = 0; i < free.size(); ++i)
            for (SparseMatrix::InnerIterator it(K, static_cast<int>(free[i])); it; ++it) {
                const int j = index[static_cast<std::size_t>(it.row())];
                if (j >= 0)
                    trip.emplace_back(j, static_cast<int>(i), it.value());
                else
                    rhs[static_cast<int>(i)] -= it.value() * u[static_cast<int>(it.row())];
            }
        SparseMatrix A(static_cast<int>(free.size()), static_cast<int>(free.size()));
        A.setFromTriplets(trip.begin(), trip.end());
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
        if (ldlt.info() != Eigen::Success) throw NumericError("capacity system factorization failed", inf);
        const Vector x = ldlt.solve(rhs);
        const double scale = std::max(rhs.norm(), 1e-300);
        res.residual = (A * x - rhs).norm() / scale;
        if (!x.allFinite() || res.residual > 1e-8)
            throw NumericError(fmt::format("capacity solve residual {:.3e}", res.residual), res.residual);
        for (std::size_t i = 0; i < free.size(); ++i) u[static_cast<int>(free[i])] = x[static_cast<int>(i)];
    }
    res.value = u.dot(K * u);
    res.maximum_principle = u.minCoeff() >= -1e-12 && u.maxCoeff() <= 1.0 + 1e-12;
    res.potential = std::move(u);
    res.K_set.assign(K_set.begin(), K_set.end());
    res.Omega.assign(Omega.begin(), Omega.end());
    std::sort(res.K_set.begin(), res.K_set.end());
    std::sort(res.Omega.begin(), res.Omega.end());
    return res;
}

CapacityResult relative_capacity(const DirichletSystem& sys, std::span<const Dof> K_set, std::span<const Dof> Omega)
{
    return relative_capacity(sys.stiffness(), K_set, Omega);
}

BoundEvaluation capacity_bounds(const WeightedComplex& weighted, const std::string& id, std::size_t piece, double R,
                                const BoundOptions& opt)
{
    const auto& cx = weighted.complex();
    if (piece >= cx.piece_count()) throw_invalid(fmt::format("piece index {} out of range", piece));
    const auto& g = cx.intersection(id);
    if (g.piece_a != piece && g.piece_b != piece)
        throw_invalid(fmt::format("intersection '{}' does not lie in piece '{}'", id, cx.piece(piece).id));
    if (!(R > 0.0)) throw_invalid("bound radius must be positive");
    if (opt.points_per_decade < 2 || opt.decades_below_mesh < 2) throw_invalid("bound grid is too coarse");

    BoundEvaluation ev;
    ev.n = cx.piece(piece).dim;
    ev.k = g.k;
    const int codim = ev.n - ev.k;

    // Exponent of each side's tube measure near L.
    auto exponent_of = [&](const WeightedComplex& wc, std::size_t p, int sign) -> std::pair<double, double> {
        const int cd = cx.piece(p).dim - g.k;
        const auto& spec_list = wc.specs();
        for (const auto& s : spec_list) {
            if (s.piece != cx.piece(p).id || s.kind != WeightKind::power) continue;
            bool on_L = s.anchor == id;
            if (!on_L && s.anchor_point && g.k == 0) on_L = (*s.anchor_point - cx.position(g.dofs[0])).norm() <= cx.tolerance();
            if (on_L) return {cd - sign * s.alpha, s.alpha};
        }
        return {static_cast<double>(cd), 0.0};
    };

    std::optional<WeightedComplex> overridden;
    if (opt.alpha) {
        if (!(*opt.alpha < codim))
            throw Error(ErrorKind::non_integrable_weight,
                        fmt::format("alpha = {} >= n - k = {}: mu is not locally finite near L", *opt.alpha, codim));
        overridden.emplace(attach_weight(weighted, WeightSpec::power(cx.piece(piece).id, id, *opt.alpha), false));
    }
    const WeightedComplex& wc = overridden ? *overridden : weighted;
    ev.alpha = exponent_of(wc, piece, 1).second;
    for (std::size_t p : {g.piece_a, g.piece_b}) {
        const auto [e, a] = exponent_of(wc, p, 1);
        if (!(e > 0.0))
            throw Error(ErrorKind::non_integrable_weight,
                        fmt::format("weight on '{}' is not integrable near '{}'", cx.piece(p).id, id));
    }

    const auto dist = distances_from(cx, g.dofs);
    const double rho_s = 4.0 * std::max(cx.piece(g.piece_a).max_cell_diameter(), cx.piece(g.piece_b).max_cell_diameter());
    if (R < 2.0 * rho_s)
        throw_invalid(fmt::format("R = {} is below twice the mesh scale {}", R, rho_s));
    ev.mesh_scale = rho_s;

    auto make_model = [&](std::size_t p, int sign) {
        TubeModel m;
        m.rho_s = rho_s;
        m.at_s = sublevel_measure(wc, dist, rho_s, p, sign);
        m.exponent = exponent_of(wc, p, sign).first;
        return m;
    };
    const TubeModel model_a = make_model(g.piece_a, 1), model_b = make_model(g.piece_b, 1);
    const TubeModel model_i = piece == g.piece_a ? model_a : model_b;
    const TubeModel inv_model = make_model(piece, -1);
    ev.model_exponent = model_i.exponent;

    auto tube_mu = [&](std::size_t p, double rho) {
        if (rho >= rho_s) return sublevel_measure(wc, dist, rho, p, 1);
        return (p == g.piece_a ? model_a : model_b)(rho);
    };
    auto tube_inv = [&](double rho) {
        if (rho >= rho_s) return sublevel_measure(wc, dist, rho, piece, -1);
        return inv_model(rho);
    };
    auto N = [&](double rho) {
        const double big = tube_mu(g.piece_a, 1.5 * rho) + tube_mu(g.piece_b, 1.5 * rho);
        const double small = tube_mu(g.piece_a, 0.5 * rho) + tube_mu(g.piece_b, 0.5 * rho);
        return big / small;
    };

    // Geometric grid aligned to decades below R.
    const double rho_min = rho_s * std::pow(10.0, -opt.decades_below_mesh);
    const int decades = static_cast<int>(std::ceil(std::log10(R / rho_min)));
    const int steps = decades * opt.points_per_decade;
    std::vector<double> rho(steps + 1), f(steps + 1), gen(steps + 1);
    for (int i = 0; i <= steps; ++i) {
        rho[i] = R * std::pow(10.0, -static_cast<double>(i) / opt.points_per_decade);
        const double mu = tube_mu(piece, rho[i]);
        const double Nr = N(rho[i]);
        f[i] = Nr * rho[i] / mu;
        gen[i] = std::pow(rho[i], -(2.0 * codim - 1.0)) * tube_inv(rho[i]);
        ev.integrand_table.push_back({rho[i], Nr, mu, f[i], rho[i] < rho_s});
    }
    std::reverse(ev.integrand_table.begin(), ev.integrand_table.end());

    // Trapezoid in log rho; decade j covers [R 10^-(j+1), R 10^-j].
    auto decade_sums = [&](const std::vector<double>& h) {
        std::vector<double> out(decades, 0.0);
        for (int i = 0; i < steps; ++i) {
            const double dl = std::log(rho[i] / rho[i + 1]);
            out[i / opt.points_per_decade] += 0.5 * (h[i] * rho[i] + h[i + 1] * rho[i + 1]) * dl;
        }
        return out;
    };
    auto total_with_tail = [&](const std::vector<double>& inc, double& ratio) {
        ratio = inc[decades - 1] / inc[decades - 2];
        if (!std::isfinite(ratio)) ratio = inf;
        if (!(ratio < opt.finite_ratio)) return inf;
        double s = 0.0;
        for (double v : inc) s += v;
        return s + inc.back() * ratio / (1.0 - ratio);
    };

    ev.decade_increments = decade_sums(f);
    ev.integral = total_with_tail(ev.decade_increments, ev.increment_ratio);
    ev.finite = std::isfinite(ev.integral);
    ev.boundary_term = N(R) * R * R / tube_mu(piece, R);
    ev.lower = ev.finite ? 1.0 / (ev.boundary_term + ev.integral) : 0.0;

    const double gen_boundary = std::pow(R, -2.0 * (codim - 1)) * tube_inv(R);
    if (codim == 1) {
        ev.general_integral = gen_boundary;
    } else {
        double gratio = 0.0;
        const double gi = total_with_tail(decade_sums(gen), gratio);
        ev.general_integral = 2.0 * (codim - 1) * gi + gen_boundary;
    }
    ev.general_lower = std::isfinite(ev.general_integral) ? 1.0 / ev.general_integral : 0.0;

    // Dyadic competitor chain.
    double sum_inv = 0.0;
    for (double r = R / 2.0; r >= rho_min; r /= 2.0) {
        const double term = (tube_mu(piece, 2.0 * r) - tube_mu(piece, r)) / (r * r);
        if (term > 0.0) sum_inv += 1.0 / term;
    }
    ev.upper = sum_inv > 0.0 ? 1.0 / sum_inv : inf;
    ev.comparability = ev.upper > 0.0 ? ev.lower / ev.upper : inf;
    return ev;
}

EquivalenceReport capacity_equivalence_check(const std::function<WeightedComplex(double)>& build,
                                             std::span<const double> levels, const std::string& id, double R,
                                             double stable_ratio)
{
    if (levels.empty()) throw_invalid("equivalence check needs at least one level");
    EquivalenceReport rep;
    rep.intersection = id;
    rep.R = R;
    for (double level : levels) {
        const auto wc = build(level);
        const auto& cx = wc.complex();
        const auto& g = cx.intersection(id);
        rep.piece_a = g.piece_a;
        rep.piece_b = g.piece_b;
        const auto dist = distances_from(cx, g.dofs);
        auto side = [&](std::size_t p) {
            const auto K = piece_stiffness(wc, p);
            std::vector<Dof> omega;
            const auto own = cx.piece_dofs(p);
            std::vector<Dof> sorted(own.begin(), own.end());
            std::sort(sorted.begin(), sorted.end());
            for (Dof d : sorted)
                if (dist[d] < R * (1.0 - slack)) omega.push_back(d);
            return relative_capacity(K, g.dofs, omega).value;
        };
        rep.levels.push_back({level, side(g.piece_a), side(g.piece_b)});
    }
    auto positive = [&](auto get) {
        const double first = get(rep.levels.front()), last = get(rep.levels.back());
        return first > 0.0 && last / first >= stable_ratio;
    };
    rep.positive_a = positive([](const EquivalenceLevel& l) { return l.capacity_a; });
    rep.positive_b = positive([](const EquivalenceLevel& l) { return l.capacity_b; });
    rep.mismatch = rep.positive_a != rep.positive_b;
    return rep;
}

} // namespace glued

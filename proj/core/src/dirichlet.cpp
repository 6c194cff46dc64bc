#include "glued/dirichlet.hpp"
#include "glued/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace glued {

namespace {

std::array<Vec3, 3> gradients(const PieceMesh& piece, std::size_t c)
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

void add_piece_stiffness(const WeightedComplex& wc, std::size_t p, std::vector<Eigen::Triplet<double>>& out)
{
    const auto& cx = wc.complex();
    const auto& piece = cx.piece(p);
    const auto dofs = cx.piece_dofs(p);
    for (std::size_t c = 0; c < piece.cell_count(); ++c) {
        const double w = wc.cell_mu(p, c);
        if (!std::isfinite(w))
            throw Error(ErrorKind::non_integrable_weight,
                        fmt::format("weight integral on cell {} of '{}' is not finite", c, piece.id));
        const auto g = gradients(piece, c);
        const auto v = piece.cell_vertices(c);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!g[i].allFinite() || piece.cell_volume(c) <= 0.0)
                throw_invalid(fmt::format("degenerate cell {} of piece '{}' during assembly", c, piece.id));
            for (std::size_t j = 0; j < v.size(); ++j)
                out.emplace_back(static_cast<int>(dofs[v[i]]), static_cast<int>(dofs[v[j]]), w * g[i].dot(g[j]));
        }
    }
}

} // namespace

DirichletSystem::DirichletSystem(WeightedComplex weighted, SparseMatrix stiffness, Vector mass)
    : weighted_(std::move(weighted)), K_(std::move(stiffness)), M_(std::move(mass))
{
    double scale = 0.0;
    for (int k = 0; k < K_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(K_, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
    for (int k = 0; k < K_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(K_, k); it; ++it)
            if (it.row() < it.col() && it.value() > 1e-12 * scale)
                violations_.push_back({static_cast<Dof>(it.row()), static_cast<Dof>(it.col()), it.value()});
}

double DirichletSystem::deviation(const Vector& u) const
{
    const double m = mean(u);
    return norm((u.array() - m).matrix());
}

SparseMatrix piece_stiffness(const WeightedComplex& wc, std::size_t piece)
{
    std::vector<Eigen::Triplet<double>> trip;
    add_piece_stiffness(wc, piece, trip);
    const auto n = static_cast<int>(wc.complex().dof_count());
    SparseMatrix K(n, n);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

DirichletSystem assemble(const WeightedComplex& wc)
{
    const auto& cx = wc.complex();
    const auto n = static_cast<int>(cx.dof_count());
    std::vector<Eigen::Triplet<double>> trip;
    Vector M = Vector::Zero(n);
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        add_piece_stiffness(wc, p, trip);
        const auto& piece = cx.piece(p);
        const auto dofs = cx.piece_dofs(p);
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            const auto v = piece.cell_vertices(c);
            const auto& lumped = wc.cell_lumped(p, c);
            for (std::size_t j = 0; j < v.size(); ++j) M[static_cast<int>(dofs[v[j]])] += lumped[j];
        }
    }
    SparseMatrix K(n, n);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    for (int i = 0; i < n; ++i)
        if (!(M[i] > 0.0) || !std::isfinite(M[i]))
            throw Error(ErrorKind::non_integrable_weight, fmt::format("lumped mass of DOF {} is {}", i, M[i]));
    return DirichletSystem(wc, std::move(K), std::move(M));
}

std::vector<double> energy_density(const DirichletSystem& sys, const Vector& u)
{
    const auto& wc = sys.weighted();
    const auto& cx = wc.complex();
    std::vector<double> out;
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        const auto& piece = cx.piece(p);
        const auto dofs = cx.piece_dofs(p);
        for (std::size_t c = 0; c < piece.cell_count(); ++c) {
            const auto g = gradients(piece, c);
            const auto v = piece.cell_vertices(c);
            Vec3 grad = Vec3::Zero();
            for (std::size_t j = 0; j < v.size(); ++j) grad += u[static_cast<int>(dofs[v[j]])] * g[j];
            out.push_back(wc.cell_mu(p, c) * grad.squaredNorm() / piece.cell_volume(c));
        }
    }
    return out;
}

ImplicitEuler::ImplicitEuler(const DirichletSystem& system, double tau) : system_(&system), tau_(tau)
{
    if (!(tau > 0.0) || !std::isfinite(tau)) throw_invalid(fmt::format("time step must be positive, got {}", tau));
    A_ = tau * system.stiffness();
    for (int i = 0; i < A_.rows(); ++i) A_.coeffRef(i, i) += system.mass()[i];
    A_.makeCompressed();
    cg_.setTolerance(solver_tolerance);
    cg_.setMaxIterations(std::max<int>(1000, 10 * static_cast<int>(A_.rows())));
    cg_.compute(A_);
}

Vector ImplicitEuler::step(const Vector& u) const
{
    const Vector& M = system_->mass();
    const Vector rhs = M.cwiseProduct(u);
    Vector next = cg_.solveWithGuess(rhs, u);
    iterations_ = static_cast<int>(cg_.iterations());
    if (cg_.info() != Eigen::Success || !next.allFinite())
        throw NumericError(fmt::format("heat step (tau = {}) did not converge: residual {:.3e} after {} iterations",
                                       tau_, cg_.error(), cg_.iterations()),
                           cg_.error());

    // Restore exact mass per component: 1_c^T K = 0 so adding a constant
    // to a component changes only its mass.
    const Vector residual = rhs - A_ * next;
    const auto& cx = system_->complex();
    if (cx.component_count() == 1) {
        next.array() += residual.sum() / M.sum();
    } else {
        std::vector<double> r(cx.component_count(), 0.0), m(cx.component_count(), 0.0);
        for (Dof d = 0; d < cx.dof_count(); ++d) {
            r[cx.component(d)] += residual[static_cast<int>(d)];
            m[cx.component(d)] += M[static_cast<int>(d)];
        }
        for (Dof d = 0; d < cx.dof_count(); ++d) next[static_cast<int>(d)] += r[cx.component(d)] / m[cx.component(d)];
    }
    return next;
}

Vector apply_resolvent(const DirichletSystem& sys, const Vector& f)
{
    if (f.size() != static_cast<int>(sys.dof_count())) throw_invalid("resolvent input has wrong size");
    return ImplicitEuler(sys, 1.0).step(f);
}

HeatState heat_step(const DirichletSystem& sys, const HeatState& state, double tau)
{
    if (state.values.size() != static_cast<int>(sys.dof_count())) throw_invalid("heat state has wrong size");
    HeatState next;
    next.values = ImplicitEuler(sys, tau).step(state.values);
    next.time = state.time + tau;
    return next;
}

std::vector<double> uniform_schedule(double T, std::size_t steps)
{
    if (!(T > 0.0) || steps == 0) throw_invalid("schedule needs T > 0 and at least one step");
    return std::vector<double>(steps, T / static_cast<double>(steps));
}

Trajectory evolve(const DirichletSystem& sys, const Vector& f0, std::span<const double> schedule,
                  const EvolveOptions& options)
{
    if (f0.size() != static_cast<int>(sys.dof_count())) throw_invalid("initial state has wrong size");
    if (schedule.empty()) throw_invalid("empty time-step schedule");
    auto point = [&](double t, const Vector& u) {
        return TrajectoryPoint{t, sys.integral(u), sys.energy(u), u.minCoeff(), u.maxCoeff(), sys.deviation(u)};
    };
    Trajectory traj;
    HeatState state{f0, 0.0, {}};
    if (options.energy_density) state.energy_density = energy_density(sys, f0);
    traj.points.push_back(point(0.0, f0));
    if (options.keep_every) traj.states.push_back(state);

    std::optional<ImplicitEuler> stepper;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const double tau = schedule[i];
        if (!stepper || stepper->tau() != tau) stepper.emplace(sys, tau);
        state.values = stepper->step(state.values);
        state.time += tau;
        if (options.energy_density) state.energy_density = energy_density(sys, state.values);
        traj.points.push_back(point(state.time, state.values));
        if (options.keep_every && (i + 1) % options.keep_every == 0) traj.states.push_back(state);
    }
    traj.final_state = std::move(state);
    return traj;
}

} // namespace glued

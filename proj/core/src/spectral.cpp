#include "glued/error.hpp"
#include "glued/spectral.hpp"

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace glued {

namespace {

// Modified Gram-Schmidt in the M inner product, two passes. Columns that
// collapse are replaced by fresh random vectors.
void m_orthonormalize(Eigen::MatrixXd& X, const Vector& M, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal;
    for (int j = 0; j < X.cols(); ++j) {
        for (int attempt = 0;; ++attempt) {
            const double before = std::sqrt(X.col(j).dot(M.cwiseProduct(X.col(j))));
            for (int pass = 0; pass < 2; ++pass)
                for (int i = 0; i < j; ++i) X.col(j) -= X.col(i).dot(M.cwiseProduct(X.col(j))) * X.col(i);
            const double nrm = std::sqrt(X.col(j).dot(M.cwiseProduct(X.col(j))));
            if (nrm > 1e-10 * before && nrm > 0.0) {
                X.col(j) /= nrm;
                break;
            }
            if (attempt > 5) throw NumericError("could not build an M-orthonormal block", nrm);
            for (int i = 0; i < X.rows(); ++i) X(i, j) = normal(rng);
        }
    }
}

} // namespace

SpectralReport eigen(const DirichletSystem& sys, std::size_t k, std::optional<double> tol_in)
{
    const auto& K = sys.stiffness();
    const Vector& M = sys.mass();
    const auto n = static_cast<int>(sys.dof_count());
    if (k == 0) throw_invalid("eigen needs k >= 1");
    if (static_cast<int>(k) > n) throw_invalid(fmt::format("k = {} exceeds the DOF count {}", k, n));

    double scale = 0.0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, K.coeff(i, i) / M[i]);
    if (!(scale > 0.0)) scale = 1.0;
    const double tol = tol_in.value_or(1e-9 * scale);
    const int p = std::min<int>(n, static_cast<int>(std::max(2 * k, k + 8)));
    const double sigma = -1e-6 * scale;

    SparseMatrix A = K;
    for (int i = 0; i < n; ++i) A.coeffRef(i, i) -= sigma * M[i];
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw NumericError("factorization of K - sigma M failed", 0.0);

    std::mt19937_64 rng(0);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd X(n, p);
    for (int j = 0; j < p; ++j)
        for (int i = 0; i < n; ++i) X(i, j) = normal(rng);
    m_orthonormalize(X, M, rng);

    SpectralReport rep;
    rep.tol = tol;
    Eigen::VectorXd lambda;
    const int max_iter = 500;
    for (int it = 1;; ++it) {
        Eigen::MatrixXd Y = ldlt.solve(M.asDiagonal() * X);
        m_orthonormalize(Y, M, rng);
        const Eigen::MatrixXd KY = K * Y;
        Eigen::MatrixXd Kp = Y.transpose() * KY;
        Eigen::MatrixXd Mp = Y.transpose() * M.asDiagonal() * Y;
        Kp = 0.5 * (Kp + Kp.transpose()).eval();
        Mp = 0.5 * (Mp + Mp.transpose()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> rr(Kp, Mp);
        if (rr.info() != Eigen::Success) throw NumericError("Rayleigh-Ritz step failed", 0.0);
        X = Y * rr.eigenvectors();
        lambda = rr.eigenvalues();
        const Eigen::MatrixXd KX = KY * rr.eigenvectors();

        // Residuals measured in the M^{-1} norm against 1e-8 ||K phi|| + tol.
        rep.residuals.assign(k, 0.0);
        bool done = true;
        const Vector Minv_sqrt = M.cwiseSqrt().cwiseInverse();
        for (std::size_t j = 0; j < k; ++j) {
            const Vector r = KX.col(j) - lambda[j] * M.cwiseProduct(X.col(j));
            const double res = r.cwiseProduct(Minv_sqrt).norm();
            const double bound = 1e-8 * KX.col(j).cwiseProduct(Minv_sqrt).norm() + tol;
            rep.residuals[j] = res;
            done = done && res <= 0.1 * bound;
        }
        rep.iterations = it;
        if (done) break;
        if (it >= max_iter) {
            const double worst = *std::max_element(rep.residuals.begin(), rep.residuals.end());
            throw NumericError(fmt::format("eigensolver did not converge in {} iterations", max_iter), worst);
        }
    }

    rep.eigenvectors = X.leftCols(static_cast<int>(k));
    for (std::size_t j = 0; j < k; ++j) {
        rep.eigenvalues.push_back(std::max(lambda[j], 0.0));
        Eigen::Index at = 0;
        rep.eigenvectors.col(j).cwiseAbs().maxCoeff(&at);
        if (rep.eigenvectors(at, j) < 0) rep.eigenvectors.col(j) *= -1.0;
    }
    for (double l : rep.eigenvalues) {
        if (l < tol) {
            ++rep.kernel_dim;
        } else {
            rep.gap = l;
            break;
        }
    }
    return rep;
}

const char* to_string(Ergodicity v)
{
    switch (v) {
    case Ergodicity::ergodic: return "ergodic";
    case Ergodicity::degenerate: return "degenerate";
    case Ergodicity::inconclusive: return "inconclusive";
    }
    return "?";
}

ErgodicityVerdict ergodicity_verdict(std::vector<GapSample> curve, const ErgodicityThresholds& th)
{
    if (curve.size() < 2) throw_invalid("ergodicity verdict needs at least two refinement levels");
    ErgodicityVerdict v;
    v.curve = std::move(curve);
    const auto& c = v.curve;
    if (std::all_of(c.begin(), c.end(), [](const GapSample& s) { return s.kernel_dim > 1; })) {
        v.verdict = Ergodicity::degenerate;
        v.reason = "kernel has dimension > 1 at every level (the complex is reducible)";
        return v;
    }
    if (std::any_of(c.begin(), c.end(), [](const GapSample& s) { return std::isnan(s.gap); })) {
        v.reason = "gap not resolved at some level; increase k";
        return v;
    }
    v.ratio = c.back().gap / c.front().gap;
    bool decreasing = true;
    for (std::size_t i = 1; i < c.size(); ++i) decreasing = decreasing && c[i].gap < c[i - 1].gap;
    if (v.ratio > th.ergodic_ratio) {
        v.verdict = Ergodicity::ergodic;
        v.reason = fmt::format("gap ratio {:.4g} > {}", v.ratio, th.ergodic_ratio);
    } else if (decreasing && v.ratio < th.degenerate_ratio) {
        v.verdict = Ergodicity::degenerate;
        v.reason = fmt::format("gap decreases monotonically, ratio {:.4g} < {}", v.ratio, th.degenerate_ratio);
    } else {
        v.reason = fmt::format("gap ratio {:.4g} between thresholds or not monotone", v.ratio);
    }
    return v;
}

ErgodicityVerdict ergodicity_verdict(const std::function<DirichletSystem(double)>& build,
                                     std::span<const double> levels, const ErgodicityThresholds& th)
{
    std::vector<GapSample> curve;
    for (double level : levels) {
        const auto sys = build(level);
        const auto rep = eigen(sys, std::min<std::size_t>(sys.dof_count(), 4));
        curve.push_back({level, rep.gap, rep.kernel_dim});
    }
    return ergodicity_verdict(std::move(curve), th);
}

DecayFit decay_fit(const DirichletSystem& sys, const Vector& f0, double horizon, double tau, double tail_fraction)
{
    if (!(horizon > 0.0) || !(tau > 0.0) || tau > horizon) throw_invalid("decay fit needs 0 < tau <= horizon");
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw_invalid("tail fraction must lie in (0, 1]");
    const double d0 = sys.deviation(f0);
    if (!(d0 > 1e-14 * std::max(sys.norm(f0), 1e-300))) throw_invalid("initial datum is constant");

    DecayFit fit;
    const ImplicitEuler stepper(sys, tau);
    Vector u = f0;
    const auto steps = static_cast<std::size_t>(std::llround(horizon / tau));
    fit.samples.emplace_back(0.0, d0);
    for (std::size_t i = 1; i <= steps; ++i) {
        u = stepper.step(u);
        const double d = sys.deviation(u);
        if (!(d > 1e-13 * d0)) {
            fit.underflow = true;
            break;
        }
        fit.samples.emplace_back(static_cast<double>(i) * tau, d);
    }
    const double t_end = fit.samples.back().first;
    fit.fit_from = (1.0 - tail_fraction) * t_end;
    fit.fit_to = t_end;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (const auto& [t, d] : fit.samples) {
        if (t < fit.fit_from) continue;
        const double y = std::log(d);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        ++m;
    }
    if (m < 2) throw_invalid("decay fit window holds fewer than two samples");
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    fit.rate = -slope;
    fit.corrected_rate = std::expm1(fit.rate * tau) / tau;
    return fit;
}

SupportSpread support_spread(const DirichletSystem& sys, std::span<const Dof> E, double t, std::size_t steps)
{
    if (E.empty()) throw_invalid("support spread needs a non-empty set");
    if (!(t > 0.0) || steps == 0) throw_invalid("support spread needs t > 0");
    Vector u = Vector::Zero(static_cast<int>(sys.dof_count()));
    for (Dof d : E) {
        if (d >= sys.dof_count()) throw_invalid(fmt::format("DOF {} out of range", d));
        u[static_cast<int>(d)] = 1.0;
    }
    const ImplicitEuler stepper(sys, t / static_cast<double>(steps));
    for (std::size_t i = 0; i < steps; ++i) u = stepper.step(u);
    const double top = u.maxCoeff();
    SupportSpread out{t, {}, 0};
    for (Dof d = 0; d < sys.dof_count(); ++d)
        if (u[static_cast<int>(d)] > 1e-12 * top) out.support.push_back(d);
    const auto comp = sys.complex().component(E.front());
    for (Dof d = 0; d < sys.dof_count(); ++d) out.component_dofs += sys.complex().component(d) == comp;
    return out;
}

} // namespace glued

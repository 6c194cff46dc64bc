#include "glued/experiment.hpp"
#include "glued/capacity.hpp"
#include "glued/dirichlet.hpp"
#include "glued/excess.hpp"
#include "glued/mesh_io.hpp"
#include "glued/spectral.hpp"
#include "glued/stochastic.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <thread>

namespace glued {

using nlohmann::json;
namespace fs = std::filesystem;

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& f)
{
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i; !failed && (i = next++) < n;) {
                try {
                    f(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
            (void)t;
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_parameter: return 2;
    case ErrorKind::ambiguity:
    case ErrorKind::hypothesis_violation:
    case ErrorKind::non_integrable_weight:
    case ErrorKind::non_compliant_mesh: return 3;
    case ErrorKind::numeric: return 4;
    }
    return 4;
}

namespace {

// Worker cap for the current run; set by run_experiment.
std::size_t threads_hint = 1;

std::string g17(double x) { return fmt::format("{:.17g}", x); }

/// Like json::dump(2) but floats carry 17 significant digits.
void dump17(std::ostream& out, const json& j, int depth = 0)
{
    const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' '), close(static_cast<std::size_t>(2 * depth), ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out << "{}";
            return;
        }
        out << "{\n";
        bool first = true;
        for (const auto& [k, v] : j.items()) {
            out << (first ? "" : ",\n") << pad << json(k).dump() << ": ";
            dump17(out, v, depth + 1);
            first = false;
        }
        out << '\n' << close << '}';
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out << "[]";
            return;
        }
        out << "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            out << (i ? ",\n" : "") << pad;
            dump17(out, j[i], depth + 1);
        }
        out << '\n' << close << ']';
        return;
    }
    case json::value_t::number_float: out << fmt::format("{:.17g}", j.get<double>()); return;
    default: out << j.dump();
    }
}

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json num_array(const std::vector<double>& xs)
{
    json a = json::array();
    for (double x : xs) a.push_back(num(x));
    return a;
}

class Writer {
public:
    Writer(const ExperimentConfig& cfg, const RunOptions& opt) : cfg_(cfg), dir_(opt.out_dir)
    {
        fs::create_directories(dir_);
    }

    json envelope() const
    {
        return {{"task", to_string(cfg_.task)},
                {"config",
                 {{"hash", fmt::format("{:016x}", cfg_.hash)}, {"seed", cfg_.seed}, {"canonical", cfg_.canonical}}}};
    }

    void write_json(const std::string& name, const json& body)
    {
        json doc = envelope();
        doc["report"] = body;
        std::ofstream out(open(name));
        dump17(out, doc);
        out << '\n';
    }

    /// Header then rows, all numbers at 17 significant digits.
    std::ofstream csv(const std::string& name, const std::string& header)
    {
        std::ofstream out = open(name);
        out << header << '\n';
        return out;
    }

    const std::vector<fs::path>& files() const { return files_; }

    std::ofstream open(const std::string& name)
    {
        const auto p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error(ErrorKind::config, fmt::format("cannot write '{}'", p.string()));
        files_.push_back(p);
        return out;
    }

private:
    const ExperimentConfig& cfg_;
    fs::path dir_;
    std::vector<fs::path> files_;
};

std::optional<double> level_of(const SectionView& t)
{
    if (!t.has("level")) return {};
    const double l = t.number("level");
    if (!(l > 0)) t.fail("level", "must be positive");
    return l;
}

std::vector<double> levels_of(const SectionView& t, const std::string& key)
{
    auto levels = t.numbers(key);
    if (levels.size() < 2) t.fail(key, "a ladder needs at least two levels");
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (!(levels[i] > 0) || (i && levels[i] <= levels[i - 1])) t.fail(key, "levels must be positive and increasing");
    return levels;
}

double max_cell_diameter(const GluedComplex& cx)
{
    double h = 0.0;
    for (const auto& p : cx.pieces()) h = std::max(h, p.max_cell_diameter());
    return h;
}

/// 8 log-spaced radii from twice the mesh scale to half the extent.
std::vector<double> default_radii(const GluedComplex& cx)
{
    const double lo = 2.0 * max_cell_diameter(cx), hi = 0.5 * cx.extent();
    std::vector<double> r;
    for (int i = 0; i < 8; ++i) r.push_back(lo * std::pow(hi / lo, i / 7.0));
    return r;
}

std::size_t piece_of(const GluedComplex& cx, const SectionView& t, const std::string& key)
{
    const auto id = t.text(key);
    for (std::size_t p = 0; p < cx.piece_count(); ++p)
        if (cx.piece(p).id == id) return p;
    t.fail(key, fmt::format("unknown piece '{}'", id));
}

const GlueMap& intersection_of(const GluedComplex& cx, const SectionView& t, const std::string& key)
{
    const auto id = t.text(key);
    for (const auto& g : cx.glue_maps())
        if (g.intersection_id == id) return g;
    std::string known;
    for (const auto& g : cx.glue_maps()) known += (known.empty() ? "" : ", ") + g.intersection_id;
    t.fail(key, fmt::format("unknown intersection '{}' (known: {})", id, known.empty() ? "none" : known));
}

json eigen_json(const SpectralReport& r)
{
    return {{"eigenvalues", num_array(r.eigenvalues)},
            {"kernel_dim", r.kernel_dim},
            {"gap", num(r.gap)},
            {"tol", r.tol},
            {"residuals", num_array(r.residuals)},
            {"iterations", r.iterations}};
}

// ---------------------------------------------------------------- build

std::string run_build(const ExperimentConfig& cfg, Writer& w)
{
    const auto t = cfg.task_view();
    const auto wc = build_weighted(cfg.space, level_of(t));
    const auto& cx = wc.complex();
    json body = complex_summary(cx);
    json mu = json::object();
    for (std::size_t p = 0; p < cx.piece_count(); ++p) mu[cx.piece(p).id] = num(wc.piece_mu(p));
    body["piece_mu"] = mu;
    body["total_mu"] = num(wc.total_mu());
    body["max_cell_diameter"] = max_cell_diameter(cx);
    if (t.flag("export_matrices", false)) {
        const auto sys = assemble(wc);
        auto k = w.open("stiffness.csv");
        write_triplets(k, sys.stiffness());
        auto m = w.csv("mass.csv", "dof,mass");
        for (int i = 0; i < sys.mass().size(); ++i) m << i << ',' << g17(sys.mass()[i]) << '\n';
        body["m_matrix_violations"] = sys.violations().size();
    }
    w.write_json("build.json", body);
    return fmt::format("{} pieces, {} DOFs, {} intersections, {} components", cx.piece_count(), cx.dof_count(),
                       cx.glue_maps().size(), cx.component_count());
}

// ---------------------------------------------------------------- check-weights

std::string run_check_weights(const ExperimentConfig& cfg, Writer& w)
{
    const auto t = cfg.task_view();
    const auto wc = build_weighted(cfg.space, level_of(t));
    const auto& cx = wc.complex();
    const auto radii = t.has("radii") ? t.numbers("radii") : default_radii(cx);
    for (double r : radii)
        if (!(r > 0)) t.fail("radii", "radii must be positive");

    std::vector<std::size_t> pieces;
    if (t.has("piece")) pieces.push_back(piece_of(cx, t, "piece"));
    else
        for (std::size_t p = 0; p < cx.piece_count(); ++p) pieces.push_back(p);

    std::vector<Dof> centers;
    for (const auto& g : cx.glue_maps()) centers.insert(centers.end(), g.dofs.begin(), g.dofs.end());
    if (t.has("center_points")) {
        const auto c = t.numbers("center_points");
        if (c.empty() || c.size() % 3) t.fail("center_points", "expected a multiple of three numbers");
        for (std::size_t i = 0; i < c.size(); i += 3) centers.push_back(nearest_dof(cx, Vec3(c[i], c[i + 1], c[i + 2])));
    }
    if (centers.empty()) centers.push_back(nearest_dof(cx, cx.position(0)));
    std::sort(centers.begin(), centers.end());
    centers.erase(std::unique(centers.begin(), centers.end()), centers.end());

    json body;
    body["heuristic"] = true;
    body["note"] = "sampled diagnostics over finitely many balls; not a proof of the weight conditions";
    json a2 = json::array();
    auto a2csv = w.csv("a2.csv", "piece,center,r,mean_weight,mean_inverse,product");
    for (auto p : pieces) {
        std::vector<BallSample> sample;
        for (Dof c : centers) {
            bool on_piece = false;
            for (const auto& o : cx.owners(c)) on_piece |= o.piece == p;
            if (on_piece)
                for (double r : radii) sample.push_back({c, r});
        }
        if (sample.empty())
            for (double r : radii) sample.push_back({cx.piece_dofs(p)[0], r});
        const auto rep = check_A2(wc, p, sample);
        for (const auto& e : rep.table)
            a2csv << cx.piece(p).id << ',' << e.center << ',' << g17(e.r) << ',' << g17(e.mean_weight) << ','
                  << g17(e.mean_inverse) << ',' << g17(e.product) << '\n';
        a2.push_back({{"piece", cx.piece(p).id}, {"estimate", num(rep.estimate)}, {"unbounded", rep.unbounded}});
    }
    body["a2"] = a2;

    const auto prof = check_N_doubling(wc, centers, radii);
    auto ncsv = w.csv("doubling.csv", "r,N_fit");
    for (const auto& [r, n] : prof.n_fit) ncsv << g17(r) << ',' << g17(n) << '\n';
    auto ccsv = w.csv("comparison.csv", "center,r,piece_a,piece_b,ratio");
    for (const auto& e : prof.comparison)
        ccsv << e.center << ',' << g17(e.r) << ',' << cx.piece(e.piece_a).id << ',' << cx.piece(e.piece_b).id << ','
             << g17(e.ratio) << '\n';
    body["doubling"] = {{"n_integral", num(prof.n_integral)},
                        {"n_slope", num(prof.n_slope)},
                        {"integrable", prof.integrable},
                        {"comparison_degenerate", prof.comparison_degenerate}};

    json muck = json::array();
    auto mcsv = w.csv("muckenhoupt.csv", "intersection,piece,R,mu,inverse_mu,ratio");
    const auto tube_radii = t.has("tube_radii") ? t.numbers("tube_radii") : radii;
    const double band = t.number("band", 10.0);
    for (const auto& g : cx.glue_maps()) {
        if (t.has("intersection") && g.intersection_id != t.text("intersection")) continue;
        for (auto p : {g.piece_a, g.piece_b}) {
            if (std::find(pieces.begin(), pieces.end(), p) == pieces.end()) continue;
            const auto rep = check_L_muckenhoupt(wc, p, g.intersection_id, tube_radii, band);
            for (const auto& e : rep.table)
                mcsv << g.intersection_id << ',' << cx.piece(p).id << ',' << g17(e.R) << ',' << g17(e.mu) << ','
                     << g17(e.inverse_mu) << ',' << g17(e.ratio) << '\n';
            muck.push_back({{"intersection", g.intersection_id},
                            {"piece", cx.piece(p).id},
                            {"band", num(rep.band)},
                            {"satisfied", rep.satisfied}});
        }
    }
    body["muckenhoupt"] = muck;
    w.write_json("check-weights.json", body);
    return fmt::format("weights admissible; {} A2 reports, {} Muckenhoupt reports", a2.size(), muck.size());
}

// ---------------------------------------------------------------- spectrum

void write_trajectory(Writer& w, const std::string& name, const Trajectory& tr)
{
    auto out = w.csv(name, "time,mass,energy,min,max,deviation");
    for (const auto& p : tr.points)
        out << g17(p.time) << ',' << g17(p.mass) << ',' << g17(p.energy) << ',' << g17(p.min) << ',' << g17(p.max)
            << ',' << g17(p.deviation) << '\n';
}

std::string run_spectrum(const ExperimentConfig& cfg, Writer& w)
{
    const auto t = cfg.task_view();
    const auto sys = assemble(build_weighted(cfg.space, level_of(t)));
    const auto k = t.count("k", 6);
    if (k == 0) t.fail("k", "must be positive");
    std::optional<double> tol;
    if (t.has("tol")) tol = t.number("tol");
    const auto rep = eigen(sys, k, tol);
    json body = eigen_json(rep);
    body["dof_count"] = sys.dof_count();
    body["components"] = sys.complex().component_count();
    if (t.flag("export_vectors", false)) {
        std::string header = "dof";
        for (Eigen::Index j = 0; j < rep.eigenvectors.cols(); ++j) header += fmt::format(",phi{}", j);
        auto out = w.csv("eigenvectors.csv", header);
        for (Eigen::Index i = 0; i < rep.eigenvectors.rows(); ++i) {
            out << i;
            for (Eigen::Index j = 0; j < rep.eigenvectors.cols(); ++j) out << ',' << g17(rep.eigenvectors(i, j));
            out << '\n';
        }
    }
    if (t.has("decay_horizon")) {
        const double T = t.number("decay_horizon");
        const double tau = t.number("decay_tau", 1e-3);
        if (!(T > 0) || !(tau > 0) || tau > T) t.fail("decay_tau", "need 0 < decay_tau <= decay_horizon");
        const auto mode = t.text("decay_mode", "eigenvector");
        Vector f0;
        if (mode == "eigenvector") {
            if (rep.kernel_dim >= static_cast<std::size_t>(rep.eigenvectors.cols()))
                t.fail("decay_mode", "no non-kernel eigenvector computed; raise k");
            f0 = rep.eigenvectors.col(static_cast<Eigen::Index>(rep.kernel_dim));
        } else if (mode == "indicator") {
            f0 = Vector::Zero(static_cast<Eigen::Index>(sys.dof_count()));
            for (Dof d : sys.complex().piece_dofs(0)) f0[static_cast<Eigen::Index>(d)] = 1.0;
        } else {
            t.fail("decay_mode", "expected eigenvector or indicator");
        }
        const auto fit = decay_fit(sys, f0, T, tau);
        const auto steps = static_cast<std::size_t>(std::llround(T / tau));
        const auto sched = uniform_schedule(T, std::max<std::size_t>(1, steps));
        write_trajectory(w, "trajectory.csv", evolve(sys, f0, sched));
        body["decay"] = {{"mode", mode},
                         {"tau", tau},
                         {"horizon", T},
                         {"rate", num(fit.rate)},
                         {"corrected_rate", num(fit.corrected_rate)},
                         {"fit_from", fit.fit_from},
                         {"fit_to", fit.fit_to},
                         {"underflow", fit.underflow}};
    }
    w.write_json("spectrum.json", body);
    return fmt::format("kernel_dim {}, gap {:.6g}", rep.kernel_dim, rep.gap);
}

// ---------------------------------------------------------------- ergodicity

ErgodicityThresholds thresholds_of(const SectionView& t)
{
    ErgodicityThresholds th;
    th.ergodic_ratio = t.number("ergodic_ratio", th.ergodic_ratio);
    th.degenerate_ratio = t.number("degenerate_ratio", th.degenerate_ratio);
    if (!(th.degenerate_ratio > 0) || !(th.degenerate_ratio < th.ergodic_ratio))
        t.fail("degenerate_ratio", "need 0 < degenerate_ratio < ergodic_ratio");
    return th;
}

std::string run_ergodicity(const ExperimentConfig& cfg, Writer& w)
{
    const auto t = cfg.task_view();
    const auto levels = levels_of(t, "levels");
    const auto th = thresholds_of(t);
    if (t.has("support_point") != t.has("support_time")) t.fail("support_time", "give support_time with support_point");

    std::vector<GapSample> curve(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto sys = assemble(build_weighted(cfg.space, levels[i]));
        const auto rep = eigen(sys, std::min<std::size_t>(sys.dof_count(), 4));
        curve[i] = {levels[i], rep.gap, rep.kernel_dim};
    }
    const auto v = ergodicity_verdict(curve, th);
    auto out = w.csv("gap_curve.csv", "level,gap,kernel_dim");
    for (const auto& s : v.curve) out << g17(s.level) << ',' << g17(s.gap) << ',' << s.kernel_dim << '\n';
    json body = {{"verdict", to_string(v.verdict)},
                 {"ratio", num(v.ratio)},
                 {"reason", v.reason},
                 {"thresholds", {{"ergodic_ratio", th.ergodic_ratio}, {"degenerate_ratio", th.degenerate_ratio}}}};
    json c = json::array();
    for (const auto& s : v.curve) c.push_back({{"level", s.level}, {"gap", num(s.gap)}, {"kernel_dim", s.kernel_dim}});
    body["curve"] = c;
    if (t.has("support_point")) {
        const auto sys = assemble(build_weighted(cfg.space, levels.back()));
        const Dof e = nearest_dof(sys.complex(), t.vector("support_point"));
        const auto sp = support_spread(sys, std::span<const Dof>(&e, 1), t.number("support_time"));
        body["support"] = {{"time", sp.t},
                           {"start_dof", e},
                           {"support", sp.support.size()},
                           {"component_dofs", sp.component_dofs}};
    }
    w.write_json("ergodicity.json", body);
    return fmt::format("verdict {} (ratio {:.4g})", to_string(v.verdict), v.ratio);
}

// ---------------------------------------------------------------- capacity

std::vector<Dof> condenser_sources(const GluedComplex& cx, const SectionView& t)
{
    if (t.has("center") == t.has("center_point")) t.fail("center", "give exactly one of center, center_point");
    if (t.has("center")) return intersection_of(cx, t, "center").dofs;
    return {nearest_dof(cx, t.vector("center_point"))};
}

CapacityResult condenser(const DirichletSystem& sys, const SectionView& t)
{
    const auto& cx = sys.complex();
    const auto src = condenser_sources(cx, t);
    const auto dist = distances_from(cx, src);
    const double r = t.number("inner_radius", 0.0);
    const double R = t.number("outer_radius");
    if (r < 0 || !(R > r)) t.fail("outer_radius", "need 0 <= inner_radius < outer_radius");
    auto omega = open_sublevel(dist, R);
    if (t.has("piece")) {
        const auto p = piece_of(cx, t, "piece");
        const auto own = cx.piece_dofs(p);
        std::vector<Dof> mine(own.begin(), own.end());
        std::sort(mine.begin(), mine.end());
        std::vector<Dof> both;
        std::set_intersection(omega.begin(), omega.end(), mine.begin(), mine.end(), std::back_inserter(both));
        omega = std::move(both);
        return relative_capacity(piece_stiffness(sys.weighted(), p), closed_sublevel(dist, r), omega);
    }
    return relative_capacity(sys, closed_sublevel(dist, r), omega);
}

std::string run_capacity(const ExperimentConfig& cfg, Writer& w)
{
    const auto t = cfg.task_view();
    json body = json::object();
    std::string summary;
    const bool want_condenser = t.has("outer_radius");
    const bool want_bounds = t.has("bound_radius");
    const bool want_equiv = t.has("equivalence_radius");
    if (!want_condenser && !want_bounds && !want_equiv)
        t.fail("outer_radius", "capacity task needs outer_radius, bound_radius or equivalence_radius");

    if (want_condenser) {
        const auto sys = assemble(build_weighted(cfg.space, level_of(t)));
        const auto res = condenser(sys, t);
        body["condenser"] = {{"value", num(res.value)},
                             {"residual", res.residual},
                             {"maximum_principle", res.maximum_principle},
                             {"K_size", res.K_set.size()},
                             {"Omega_size", res.Omega.size()}};
        if (t.flag("export_potential", false)) {
            auto out = w.csv("potential.csv", "dof,x,y,z,u");
            for (Dof d = 0; d < sys.dof_count(); ++d) {
                const auto& x = sys.complex().position(d);
                out << d << ',' << g17(x[0]) << ',' << g17(x[1]) << ',' << g17(x[2]) << ','
                    << g17(res.potential[static_cast<Eigen::Index>(d)]) << '\n';
            }
        }
        summary += fmt::format("capacity {:.6g}", res.value);
        if (t.has("levels")) {
            const auto levels = levels_of(t, "levels");
            auto out = w.csv("capacity_ladder.csv", "level,capacity");
            json ladder = json::array();
            for (double l : levels) {
                const auto s = assemble(build_weighted(cfg.space, l));
                const double v = condenser(s, t).value;
                out << g17(l) << ',' << g17(v) << '\n';
                ladder.push_back({{"level", l}, {"capacity", num(v)}});
            }
            body["condenser"]["ladder"] = ladder;
        }
    }

    if (want_bounds) {
        const auto wc = build_weighted(cfg.space, level_of(t));
        const auto& g = intersection_of(wc.complex(), t, "center");
        const auto p = piece_of(wc.complex(), t, "bound_piece");
        if (p != g.piece_a && p != g.piece_b) t.fail("bound_piece", "piece does not meet the intersection");
        const double R = t.number("bound_radius");
        std::vector<std::optional<double>> alphas;
        if (t.has("alphas"))
            for (double a : t.numbers("alphas")) alphas.emplace_back(a);
        else
            alphas.emplace_back();
        std::vector<BoundEvaluation> evals(alphas.size());
        parallel_for(alphas.size(), threads_hint, [&](std::size_t i) {
            BoundOptions o;
            o.alpha = alphas[i];
            evals[i] = capacity_bounds(wc, g.intersection_id, p, R, o);
        });
        auto out = w.csv("bounds.csv", "alpha,finite,lower,upper,integral,increment_ratio,model_exponent");
        json arr = json::array();
        for (const auto& e : evals) {
            out << g17(e.alpha) << ',' << (e.finite ? 1 : 0) << ',' << g17(e.lower) << ',' << g17(e.upper) << ','
                << g17(e.integral) << ',' << g17(e.increment_ratio) << ',' << g17(e.model_exponent) << '\n';
            arr.push_back({{"alpha", e.alpha},
                           {"finite", e.finite},
                           {"lower", num(e.lower)},
                           {"upper", num(e.upper)},
                           {"boundary_term", num(e.boundary_term)},
                           {"integral", num(e.integral)},
                           {"general_lower", num(e.general_lower)},
                           {"increment_ratio", num(e.increment_ratio)},
                           {"comparability", num(e.comparability)},
                           {"model_exponent", num(e.model_exponent)},
                           {"mesh_scale", e.mesh_scale},
                           {"n", e.n},
                           {"k", e.k}});
        }
        body["bounds"] = {{"intersection", g.intersection_id},
                          {"piece", wc.complex().piece(p).id},
                          {"R", R},
                          {"threshold_alpha", evals.front().n - evals.front().k - 2},
                          {"evaluations", arr}};
        if (!summary.empty()) summary += "; ";
        summary += fmt::format("{} bound evaluations", evals.size());
    }

    if (want_equiv) {
        const auto levels = levels_of(t, "levels");
        const auto probe = build_complex(cfg.space, levels.front());
        const auto& g = intersection_of(probe, t, "center");
        const auto rep = capacity_equivalence_check([&](double l) { return build_weighted(cfg.space, l); }, levels,
                                                    g.intersection_id, t.number("equivalence_radius"),
                                                    t.number("stable_ratio", 0.8));
        auto out = w.csv("equivalence.csv", "level,capacity_a,capacity_b");
        for (const auto& l : rep.levels) out << g17(l.level) << ',' << g17(l.capacity_a) << ',' << g17(l.capacity_b) << '\n';
        body["equivalence"] = {{"intersection", rep.intersection},
                               {"piece_a", probe.piece(rep.piece_a).id},
                               {"piece_b", probe.piece(rep.piece_b).id},
                               {"R", rep.R},
                               {"positive_a", rep.positive_a},
                               {"positive_b", rep.positive_b},
                               {"mismatch", rep.mismatch}};
        if (!summary.empty()) summary += "; ";
        summary += rep.mismatch ? "capacity mismatch across the intersection" : "capacities agree in positivity";
    }
    w.write_json("capacity.json", body);
    return summary;
}

// ---------------------------------------------------------------- walk

struct WalkRun {
    double horizon = 0.0;
    double lambda1 = not_resolved;
    std::vector<WalkTrace> traces;
};

WalkRun simulate(const DirichletSystem& sys, const SectionView& t, std::uint64_t seed, bool record_path)
{
    WalkRun run;
    const auto chain = build_chain(sys, seed);
    if (t.has("horizon") == t.has("horizon_gaps")) t.fail("horizon", "give exactly one of horizon, horizon_gaps");
    if (t.has("horizon")) {
        run.horizon = t.number("horizon");
    } else {
        run.lambda1 = eigen(sys, std::min<std::size_t>(sys.dof_count(), 4)).gap;
        if (!std::isfinite(run.lambda1)) throw NumericError("horizon_gaps: spectral gap not resolved", 0.0);
        run.horizon = t.number("horizon_gaps") / run.lambda1;
    }
    if (!(run.horizon > 0)) t.fail("horizon", "must be positive");
    const auto paths = t.count("paths", 200);
    if (paths == 0) t.fail("paths", "must be positive");
    std::optional<Dof> start;
    if (t.has("start_point")) start = nearest_dof(sys.complex(), t.vector("start_point"));
    run.traces.resize(paths);
    parallel_for(paths, threads_hint, [&](std::size_t i) {
        const auto s = path_seed(seed, i);
        std::mt19937_64 rng(path_seed(s, 0x5eed));
        const Dof x0 = start ? *start : sample_stationary(chain, rng);
        run.traces[i] = sample_path(chain, x0, run.horizon, s, {record_path && i == 0, true});
    });
    return run;
}

std::string run_walk(const ExperimentConfig& cfg, Writer& w)
{
    const auto t = cfg.task_view();
    const auto sys = assemble(build_weighted(cfg.space, level_of(t)));
    const auto& cx = sys.complex();
    const bool export_trace = t.flag("export_trace", false);
    const auto run = simulate(sys, t, cfg.seed, export_trace);
    const auto bins = occupation_bins(sys, t.count("bins", 8));
    const double tv = occupation_tv(sys, run.traces, bins);
    const auto chi = endpoint_chi_square(sys, run.traces, bins, t.number("chi_level", 0.99));

    json body = {{"paths", run.traces.size()},
                 {"horizon", run.horizon},
                 {"lambda1", num(run.lambda1)},
                 {"occupation_tv", num(tv)},
                 {"bins_per_piece", t.count("bins", 8)},
                 {"endpoint_chi_square",
                  {{"statistic", num(chi.statistic)},
                   {"critical", num(chi.critical)},
                   {"dof", chi.dof},
                   {"accepted", chi.accepted}}}};
    std::size_t jumps = 0;
    for (const auto& tr : run.traces) jumps += tr.jumps;
    body["jumps"] = jumps;

    json crossings = json::array();
    for (const auto& g : cx.glue_maps()) {
        if (t.has("intersection") && g.intersection_id != t.text("intersection")) continue;
        const auto cs = crossing_statistics(run.traces, cx, g.intersection_id, path_seed(cfg.seed, 0xb007));
        crossings.push_back({{"intersection", g.intersection_id},
                             {"rate", num(cs.rate)},
                             {"ci", {num(cs.ci.lo), num(cs.ci.hi)}},
                             {"crossings", cs.crossings},
                             {"total_time", cs.total_time}});
    }
    body["crossings"] = crossings;

    if (export_trace) {
        auto out = w.csv("trace.csv", "time,dof,piece");
        for (const auto& [time, d] : run.traces.front().path)
            out << g17(time) << ',' << d << ',' << cx.piece(cx.owners(d)[0].piece).id << '\n';
    }

    std::string summary = fmt::format("TV {:.4g}, chi-square {}", tv, chi.accepted ? "accepted" : "rejected");
    if (t.has("levels")) {
        const auto levels = levels_of(t, "levels");
        if (!t.has("intersection")) t.fail("levels", "a crossing ladder needs intersection");
        const auto th = thresholds_of(t);
        auto out = w.csv("crossing_ladder.csv", "level,horizon,rate,ci_lo,ci_hi,crossings");
        json ladder = json::array();
        std::vector<double> rates;
        for (double l : levels) {
            const auto s = assemble(build_weighted(cfg.space, l));
            const auto r = simulate(s, t, cfg.seed, false);
            const auto& id = intersection_of(s.complex(), t, "intersection").intersection_id;
            const auto cs = crossing_statistics(r.traces, s.complex(), id, path_seed(cfg.seed, 0xb007));
            out << g17(l) << ',' << g17(r.horizon) << ',' << g17(cs.rate) << ',' << g17(cs.ci.lo) << ','
                << g17(cs.ci.hi) << ',' << cs.crossings << '\n';
            ladder.push_back({{"level", l}, {"horizon", r.horizon}, {"rate", num(cs.rate)}, {"crossings", cs.crossings}});
            rates.push_back(cs.rate);
        }
        const double ratio = rates.front() > 0 ? rates.back() / rates.front() : not_resolved;
        std::string trend = "inconclusive";
        if (std::isfinite(ratio) && ratio < th.degenerate_ratio) trend = "decaying";
        else if (std::isfinite(ratio) && ratio > th.ergodic_ratio) trend = "persistent";
        body["crossing_ladder"] = {{"levels", ladder}, {"ratio", num(ratio)}, {"trend", trend}};
        summary += fmt::format(", crossing trend {} (ratio {:.4g})", trend, ratio);
    }
    w.write_json("walk.json", body);
    return summary;
}

// ---------------------------------------------------------------- excess

std::string run_excess(const ExperimentConfig& cfg, Writer& w)
{
    const auto t = cfg.task_view();
    if (cfg.sets.empty()) throw Error(ErrorKind::config, fmt::format("{}: excess task needs a [set] section", cfg.raw.source));
    const auto sys = assemble(build_weighted(cfg.space, level_of(t)));
    const auto& cx = sys.complex();
    std::vector<const SetDecl*> chosen;
    if (t.has("sets")) {
        for (const auto& name : t.words("sets")) {
            const auto it = std::find_if(cfg.sets.begin(), cfg.sets.end(), [&](const SetDecl& s) { return s.name == name; });
            if (it == cfg.sets.end()) t.fail("sets", fmt::format("unknown set '{}'", name));
            chosen.push_back(&*it);
        }
    } else {
        for (const auto& s : cfg.sets) chosen.push_back(&s);
    }
    auto hs = t.numbers("h");
    for (double h : hs)
        if (!(h > 0)) t.fail("h", "h values must be positive");
    const auto conv_text = t.text("convention", "symmetric");
    ExcessConvention conv;
    if (conv_text == "symmetric") conv = ExcessConvention::symmetric;
    else if (conv_text == "one_sided") conv = ExcessConvention::one_sided;
    else t.fail("convention", "expected symmetric or one_sided");
    const auto substeps = t.count("substeps", excess_substeps);
    const double tol = t.number("tolerance", 0.05);

    std::vector<CellSet> family;
    for (const auto* s : chosen) family.push_back(half_space_cells(cx, s->normal, s->offset, s->piece));

    std::vector<ExcessCurve> curves;
    std::vector<bool> within;
    std::string note = "pointwise limits along fixed sets only; not a Gamma-convergence check";
    if (t.flag("probe", false)) {
        auto probe = gamma_probe(sys, family, hs, conv, tol);
        curves = std::move(probe.curves);
        within = std::move(probe.within);
        note = probe.note;
    } else {
        for (const auto& U : family) {
            curves.push_back(excess_curve(sys, U, hs, conv, substeps));
            const auto& c = curves.back();
            within.push_back(std::isfinite(c.deviation) && c.deviation <= tol);
        }
    }
    json arr = json::array();
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& c = curves[i];
        auto out = w.csv(fmt::format("excess_{}.csv", chosen[i]->name), "h,E_h,E_h_over_sqrt_h,normalized");
        for (const auto& s : c.samples)
            out << g17(s.h) << ',' << g17(s.excess) << ',' << g17(s.scaled) << ',' << g17(s.normalized) << '\n';
        arr.push_back({{"set", chosen[i]->name},
                       {"extrapolated_limit", num(c.extrapolated_limit)},
                       {"normalized_limit", num(c.extrapolated_limit / c.normalization)},
                       {"slope", num(c.slope)},
                       {"fit_residual", num(c.fit_residual)},
                       {"reference_perimeter", num(c.reference_perimeter)},
                       {"deviation", num(c.deviation)},
                       {"within_tolerance", static_cast<bool>(within[i])}});
    }
    json body = {{"convention", to_string(conv)},
                 {"normalization", excess_normalization(conv)},
                 {"generator", "weighted Laplacian of the glued Dirichlet form, S_h = exp(h L)"},
                 {"substeps", substeps},
                 {"tolerance", tol},
                 {"note", note},
                 {"curves", arr}};
    w.write_json("excess.json", body);
    std::size_t ok = std::count(within.begin(), within.end(), true);
    return fmt::format("{} of {} sets within {:.3g} of their perimeter", ok, curves.size(), tol);
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options)
{
    threads_hint = options.threads;
    Writer w(cfg, options);
    const auto started = std::chrono::system_clock::now();
    RunResult result;
    switch (cfg.task) {
    case TaskKind::build: result.summary = run_build(cfg, w); break;
    case TaskKind::check_weights: result.summary = run_check_weights(cfg, w); break;
    case TaskKind::spectrum: result.summary = run_spectrum(cfg, w); break;
    case TaskKind::ergodicity: result.summary = run_ergodicity(cfg, w); break;
    case TaskKind::capacity: result.summary = run_capacity(cfg, w); break;
    case TaskKind::walk: result.summary = run_walk(cfg, w); break;
    case TaskKind::excess: result.summary = run_excess(cfg, w); break;
    }
    const auto finished = std::chrono::system_clock::now();
    auto stamp = [](std::chrono::system_clock::time_point tp) {
        const std::time_t tt = std::chrono::system_clock::to_time_t(tp);
        std::tm tm{};
        gmtime_r(&tt, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return std::string(buf);
    };
    json meta = {{"config_source", cfg.raw.source},
                 {"config_hash", fmt::format("{:016x}", cfg.hash)},
                 {"started", stamp(started)},
                 {"finished", stamp(finished)},
                 {"elapsed_seconds", std::chrono::duration<double>(finished - started).count()},
                 {"threads", options.threads}};
    json files = json::array();
    for (const auto& f : w.files()) files.push_back(f.filename().string());
    meta["files"] = files;
    const auto meta_path = fs::path(options.out_dir) / "meta.json";
    {
        std::ofstream meta_out(meta_path);
        dump17(meta_out, meta);
        meta_out << '\n';
    }
    result.files = w.files();
    result.files.push_back(meta_path);
    return result;
}

int run_config_file(const fs::path& config, const RunOptions& options, std::ostream& out, std::ostream& err)
{
    try {
        const auto cfg = load_experiment(parse_config_file(config), options.seed);
        const auto res = run_experiment(cfg, options);
        out << to_string(cfg.task) << ": " << res.summary << '\n';
        for (const auto& f : res.files) out << "  wrote " << f.string() << '\n';
        return 0;
    } catch (const Error& e) {
        err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error [config]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error [numeric]: " << e.what() << '\n';
        return 4;
    }
}

} // namespace glued

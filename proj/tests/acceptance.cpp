// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "glued/capacity.hpp"
#include "glued/error.hpp"
#include "glued/excess.hpp"
#include "glued/experiment.hpp"
#include "glued/spectral.hpp"
#include "glued/stochastic.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

using namespace glued;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

const std::string junction = "disk:segment";
const std::vector<double> ladder{16, 32, 64, 128};

WeightedComplex disk_segment(std::size_t level, bool weighted)
{
    auto cx = glue({build_disk_piece(1.0, level),
                    build_segment_piece(2.0, 2 * level, Placement::along(Vec3(0, 0, -1), Vec3::UnitZ()))});
    std::vector<WeightSpec> specs;
    if (weighted) specs.push_back(WeightSpec::power("disk", junction, 1.0));
    return WeightedComplex(std::move(cx), specs);
}

DirichletSystem interval(std::size_t cells)
{
    return assemble(WeightedComplex(glue({build_segment_piece(1.0, cells)}), {}));
}

Vector coordinate(const DirichletSystem& sys)
{
    Vector x(static_cast<Eigen::Index>(sys.dof_count()));
    for (Dof d = 0; d < sys.dof_count(); ++d) x[static_cast<Eigen::Index>(d)] = sys.complex().position(d).x();
    return x;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

Outcome spectrum_oracle()
{
    const auto rep = eigen(interval(256), 2);
    const double pi2 = M_PI * M_PI;
    const double l0 = std::abs(rep.eigenvalues[0]), err = rel(rep.eigenvalues[1], pi2);
    return {l0 < 1e-9 && err < 5e-3, fmt::format("lambda0 {:.2e}, lambda1 {:.6f} ({:+.3f}% vs pi^2)", l0,
                                                 rep.eigenvalues[1], 100.0 * (rep.eigenvalues[1] / pi2 - 1.0))};
}

/// Horizontal segments lie on distinct integer y and span half-integer x; verticals likewise.
/// Two segments meet iff each one's line crosses the other's span, always at interior vertices.
Outcome kernel_connectivity()
{
    std::mt19937_64 rng(2024);
    std::size_t matched = 0, connected = 0;
    std::string first_mismatch;
    for (int trial = 0; trial < 20; ++trial) {
        struct Seg {
            bool horizontal;
            int line;
            int lo, hi;  // span is [lo + 0.5, hi + 0.5]
        };
        std::vector<Seg> segs;
        std::vector<int> ys(7), xs(7);
        std::iota(ys.begin(), ys.end(), 0);
        std::iota(xs.begin(), xs.end(), 0);
        std::shuffle(ys.begin(), ys.end(), rng);
        std::shuffle(xs.begin(), xs.end(), rng);
        std::uniform_int_distribution<int> count(1, 4), end(-1, 6), low(-1, 0), high(6, 6);
        std::bernoulli_distribution long_span(0.7);
        auto span = [&] {
            if (long_span(rng)) return std::pair{low(rng), high(rng)};
            int a = end(rng), b = end(rng);
            while (a == b) b = end(rng);
            return std::pair{std::min(a, b), std::max(a, b)};
        };
        const int nh = count(rng), nv = count(rng);
        for (int i = 0; i < nh; ++i) {
            const auto [lo, hi] = span();
            segs.push_back({true, ys[i], lo, hi});
        }
        for (int i = 0; i < nv; ++i) {
            const auto [lo, hi] = span();
            segs.push_back({false, xs[i], lo, hi});
        }

        std::vector<PieceMesh> pieces;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const auto& s = segs[i];
            const double len = s.hi - s.lo;
            const Vec3 origin = s.horizontal ? Vec3(s.lo + 0.5, s.line, 0) : Vec3(s.line, s.lo + 0.5, 0);
            pieces.push_back(build_segment_piece(len, static_cast<std::size_t>(2 * len),
                                                 Placement::along(origin, s.horizontal ? Vec3::UnitX() : Vec3::UnitY()),
                                                 fmt::format("s{}", i)));
        }
        const bool with_disk = trial % 4 == 0;
        if (with_disk) {
            pieces.push_back(build_disk_piece(1.0, 4, Placement::facing(Vec3(0, 0, 5), Vec3::UnitZ()), "disk"));
            pieces.push_back(build_segment_piece(2.0, 4, Placement::along(Vec3(0, 0, 4), Vec3::UnitZ()), "stem"));
        }

        // Independent oracle: union-find on piece adjacency.
        std::vector<std::size_t> parent(pieces.size());
        std::iota(parent.begin(), parent.end(), std::size_t{0});
        std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
            return parent[i] == i ? i : parent[i] = find(parent[i]);
        };
        for (std::size_t i = 0; i < segs.size(); ++i)
            for (std::size_t j = 0; j < segs.size(); ++j) {
                const auto &h = segs[i], &v = segs[j];
                if (!h.horizontal || v.horizontal) continue;
                if (h.lo < v.line && v.line <= h.hi && v.lo < h.line && h.line <= v.hi) parent[find(i)] = find(j);
            }
        if (with_disk) parent[find(segs.size())] = find(segs.size() + 1);
        std::size_t components = 0;
        for (std::size_t i = 0; i < pieces.size(); ++i) components += find(i) == i;

        const auto sys = assemble(WeightedComplex(glue(pieces), {}));
        const auto rep = eigen(sys, pieces.size() + 1);
        if (rep.kernel_dim == components) ++matched;
        else if (first_mismatch.empty())
            first_mismatch = fmt::format(" (trial {}: kernel {} vs oracle {})", trial, rep.kernel_dim, components);
        connected += components == 1;
    }
    return {matched == 20 && connected > 0 && connected < 20,
            fmt::format("{}/20 configs match ({} connected, {} disconnected){}", matched, connected, 20 - connected,
                        first_mismatch)};
}

Outcome ergodicity_dichotomy()
{
    auto verdict = [](bool weighted) {
        return ergodicity_verdict([&](double l) { return assemble(disk_segment(std::size_t(l), weighted)); }, ladder);
    };
    const auto w = verdict(true), u = verdict(false);
    const bool pass = w.verdict == Ergodicity::ergodic && w.ratio > 0.5 && u.verdict == Ergodicity::degenerate &&
                      u.ratio < 0.2;
    return {pass, fmt::format("weighted {} (ratio {:.4f}); unweighted {} (ratio {:.4f}, needs < 0.2)",
                              to_string(w.verdict), w.ratio, to_string(u.verdict), u.ratio)};
}

double point_capacity(std::size_t level, bool weighted, double R)
{
    const auto wc = disk_segment(level, weighted);
    const auto& L = wc.complex().intersection(junction).dofs;
    const auto d = distances_from(wc.complex(), L);
    std::vector<Dof> omega;
    for (Dof x : wc.complex().piece_dofs(0))
        if (d[x] < R * (1 - 1e-9)) omega.push_back(x);
    std::sort(omega.begin(), omega.end());
    return relative_capacity(piece_stiffness(wc, 0), L, omega).value;
}

Outcome capacity_oracles()
{
    const auto disk = assemble(WeightedComplex(glue({build_disk_piece(1.0, 128)}), {}));
    const Dof c[] = {nearest_dof(disk.complex(), Vec3::Zero())};
    const auto d = distances_from(disk.complex(), c);
    const double annulus = relative_capacity(disk, closed_sublevel(d, 0.1), open_sublevel(d, 1.0)).value;
    const double annulus_exact = 2.0 * M_PI / std::log(10.0);

    std::vector<double> weighted, unweighted;
    for (double l : ladder) {
        weighted.push_back(point_capacity(std::size_t(l), true, 0.5));
        unweighted.push_back(point_capacity(std::size_t(l), false, 1.0));
    }
    const bool monotone = std::is_sorted(unweighted.rbegin(), unweighted.rend(), std::less_equal<>());
    const double werr = rel(weighted.back(), 4.0 * M_PI);
    const bool pass = rel(annulus, annulus_exact) < 0.03 && werr < 0.05 && monotone;
    return {pass, fmt::format("annulus {:.5f} ({:+.2f}%), weighted point {:.4f} vs 4pi ({:+.2f}%), unweighted "
                              "{:.4f} -> {:.4f} {}",
                              annulus, 100.0 * (annulus / annulus_exact - 1.0), weighted.back(),
                              100.0 * (weighted.back() / (4.0 * M_PI) - 1.0), unweighted.front(), unweighted.back(),
                              monotone ? "decreasing" : "not monotone")};
}

Outcome bound_thresholds()
{
    const auto disk_case = disk_segment(32, false);
    const auto cross_case = WeightedComplex(
        glue({build_segment_piece(2.0, 64, Placement::along(Vec3(-1, 0, 0), Vec3::UnitX()), "a"),
              build_segment_piece(2.0, 64, Placement::along(Vec3(0, -1, 0), Vec3::UnitY()), "b")}),
        {});
    struct Family {
        const WeightedComplex* wc;
        std::string id;
        double lo, hi;
        int codim;
    };
    const Family families[] = {{&disk_case, junction, -1.75, 1.75, 2}, {&cross_case, "a:b", -2.75, 0.75, 1}};
    std::size_t evaluated = 0, wrong = 0;
    std::string flips;
    for (const auto& f : families) {
        std::vector<double> alphas;
        for (double a = f.lo; a <= f.hi + 1e-9; a += 0.25) alphas.push_back(a);
        std::vector<char> finite(alphas.size());
        parallel_for(alphas.size(), 0, [&](std::size_t i) {
            BoundOptions o;
            o.alpha = alphas[i];
            finite[i] = capacity_bounds(*f.wc, f.id, 0, 0.5, o).finite;
        });
        double flip = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            ++evaluated;
            wrong += bool(finite[i]) != (alphas[i] > f.codim - 2);
            if (i > 0 && finite[i] && !finite[i - 1]) flip = alphas[i - 1];
        }
        flips += fmt::format("{}n-k={}: divergent up to alpha={:g} (expected {})", flips.empty() ? "" : "; ", f.codim,
                             flip, f.codim - 2);
    }
    return {wrong == 0, fmt::format("{}/{} alphas as expected; {}", evaluated - wrong, evaluated, flips)};
}

Outcome heat_structure()
{
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_mass = 0.0;
    bool monotone = true;
    for (const auto& sys : {interval(256), assemble(disk_segment(16, true)), assemble(disk_segment(16, false))}) {
        for (int trial = 0; trial < 3; ++trial) {
            Vector f(static_cast<Eigen::Index>(sys.dof_count()));
            for (auto& x : f) x = u(rng);
            const auto traj = evolve(sys, f, uniform_schedule(0.5, 100));
            for (std::size_t i = 1; i < traj.points.size(); ++i) {
                worst_mass = std::max(worst_mass, rel(traj.points[i].mass, traj.points[i - 1].mass));
                monotone = monotone && traj.points[i].energy <= traj.points[i - 1].energy * (1.0 + 1e-12);
            }
        }
    }
    const auto sys = interval(256);
    const auto rep = eigen(sys, 2);
    const auto fit = decay_fit(sys, rep.eigenvectors.col(1), 1.0, 1e-3);
    const double err = rel(fit.rate, rep.eigenvalues[1]);
    return {worst_mass < 1e-10 && monotone && err < 0.05,
            fmt::format("max mass drift/step {:.2e}, energy {}, decay rate {:.5f} vs lambda1 {:.5f} ({:+.2f}%)",
                        worst_mass, monotone ? "monotone" : "NOT monotone", fit.rate, rep.eigenvalues[1],
                        100.0 * (fit.rate / rep.eigenvalues[1] - 1.0))};
}

Outcome feynman_kac()
{
    const auto sys = interval(64);
    const auto chain = build_chain(sys, 1);
    const Vector x = coordinate(sys);
    const Vector u0 = (M_PI * x).array().cos().matrix() + x;
    const double T = 0.05;
    const Dof x0 = 10;
    const double expected = evolve(sys, u0, uniform_schedule(T, 20000)).final_state.values[x0];
    const std::size_t n = 100000;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = u0[static_cast<Eigen::Index>(sample_path(chain, x0, T, path_seed(7, i), {false, false}).end)];
        s += v;
        s2 += v * v;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / (n - 1));
    const double z = std::abs(mean - expected) / se;
    return {z < 3.0, fmt::format("MC {:.6f} vs evolve {:.6f}, |diff| = {:.2f} SE", mean, expected, z)};
}

std::vector<WalkTrace> walks(const JumpChain& chain, std::optional<Dof> x0, double T, std::size_t n,
                             std::uint64_t seed)
{
    std::vector<WalkTrace> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::mt19937_64 rng(path_seed(seed, 1000 + i));
        const Dof start = x0 ? *x0 : sample_stationary(chain, rng);
        out.push_back(sample_path(chain, start, T, path_seed(seed, i), {false, true}));
    }
    return out;
}

Outcome occupation_crossing()
{
    const auto sys = assemble(disk_segment(16, true));
    const auto chain = build_chain(sys, 1);
    const double T = 10.0 / eigen(sys, 3).gap;
    const auto bins = occupation_bins(sys, 8);
    const double tv = occupation_tv(sys, walks(chain, std::nullopt, T, 200, 8), bins);

    std::vector<double> rates;
    for (double l : ladder) {
        const auto s = assemble(disk_segment(std::size_t(l), false));
        const auto traces = walks(build_chain(s, 1), std::nullopt, 2.0, 100, 9);
        rates.push_back(crossing_statistics(traces, s.complex(), junction, 9).rate);
    }
    const double ratio = rates.back() / rates.front();
    std::string list;
    for (double r : rates) list += fmt::format("{}{:.4g}", list.empty() ? "" : " ", r);
    return {tv < 0.05 && ratio < 0.2,
            fmt::format("weighted TV {:.4f} at T = {:.3f}; unweighted crossing rates [{}], ratio {:.3f} (needs < 0.2)",
                        tv, T, list, ratio)};
}

Outcome excess_oracle()
{
    const auto line = interval(512);
    const double h1[] = {1e-2, 3.16e-3, 1e-3, 3.16e-4, 1e-4};
    const auto c1 = excess_curve(line, half_space_cells(line.complex(), Vec3::UnitX(), 0.5), h1);
    const double limit = c1.extrapolated_limit, target = 2.0 / std::sqrt(M_PI);

    const auto strip = assemble(WeightedComplex(glue({build_rectangle_piece(1.0, 0.25, 512, 128)}), {}));
    const std::vector<CellSet> family{half_space_cells(strip.complex(), Vec3::UnitX(), 0.5)};
    const double h2[] = {5e-2, 1.58e-2, 5e-3, 1.58e-3, 5e-4};
    const auto probe = gamma_probe(strip, family, h2);
    const auto& c2 = probe.curves[0];
    return {rel(limit, target) < 0.03 && probe.within[0],
            fmt::format("1D limit {:.5f} vs 2/sqrt(pi) {:.5f} ({:+.2f}%); 2D perimeter {:.4f} vs {:.4f} ({:+.2f}%)", limit,
                        target, 100.0 * (limit / target - 1.0), c2.extrapolated_limit / c2.normalization,
                        c2.reference_perimeter, 100.0 * c2.deviation)};
}

std::string slurp(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome reproducibility()
{
    const fs::path root = fs::temp_directory_path() / "glued_acceptance_rerun";
    std::size_t configs = 0, files = 0;
    std::vector<std::string> differing;
    std::vector<fs::path> cfgs;
    for (const auto& e : fs::directory_iterator(GLUED_CONFIG_DIR))
        if (e.path().extension() == ".cfg") cfgs.push_back(e.path());
    std::sort(cfgs.begin(), cfgs.end());
    for (const auto& cfg : cfgs) {
        const auto name = cfg.stem().string();
        std::vector<fs::path> outs{root / name / "a", root / name / "b"};
        for (const auto& o : outs) {
            fs::remove_all(o);
            fs::create_directories(o);
            std::ostringstream sink;
            RunOptions opts;
            opts.out_dir = o;
            run_config_file(cfg, opts, sink, sink);
        }
        ++configs;
        for (const auto& f : fs::directory_iterator(outs[0])) {
            if (f.path().filename() == "meta.json") continue;
            ++files;
            if (slurp(f.path()) != slurp(outs[1] / f.path().filename()))
                differing.push_back(name + "/" + f.path().filename().string());
        }
        for (const auto& f : fs::directory_iterator(outs[1]))
            if (!fs::exists(outs[0] / f.path().filename())) differing.push_back(name + "/" + f.path().filename().string());
    }
    fs::remove_all(root);
    std::string detail = fmt::format("{} configs, {} files compared", configs, files);
    if (!differing.empty()) detail += ", differing: " + differing.front();
    return {differing.empty() && files > 0, detail};
}

} // namespace

int main()
{
    const std::pair<const char*, Outcome (*)()> criteria[] = {
        {"spectrum oracle", spectrum_oracle},
        {"kernel dimension equals connectivity", kernel_connectivity},
        {"ergodicity dichotomy", ergodicity_dichotomy},
        {"capacity oracles", capacity_oracles},
        {"bound-integral thresholds", bound_thresholds},
        {"heat-flow structure", heat_structure},
        {"Feynman-Kac consistency", feynman_kac},
        {"occupation and crossing dichotomy", occupation_crossing},
        {"heat-excess oracle", excess_oracle},
        {"reproducibility", reproducibility},
    };
    int failed = 0, index = 0;
    for (const auto& [name, check] : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        fmt::print("[{}] {:2d} {}: {} [{:.1f}s]\n", o.pass ? "PASS" : "FAIL", index, name, o.detail, secs);
        std::fflush(stdout);
    }
    fmt::print("{}/{} criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}

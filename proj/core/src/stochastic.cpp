#include "glued/error.hpp"
#include "glued/stochastic.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace glued {

std::uint64_t path_seed(std::uint64_t master, std::uint64_t index)
{
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double JumpChain::rate(Dof x, Dof y) const
{
    for (const auto& [t, q] : rates(x))
        if (t == y) return q;
    return 0.0;
}

Dof JumpChain::jump_target(Dof x, double u) const
{
    const auto begin = cumulative_.begin() + static_cast<std::ptrdiff_t>(offsets_[x]);
    const auto end = cumulative_.begin() + static_cast<std::ptrdiff_t>(offsets_[x + 1]);
    auto it = std::upper_bound(begin, end, u * total_[x]);
    if (it == end) --it;
    return rates_[static_cast<std::size_t>(it - cumulative_.begin())].first;
}

JumpChain build_chain(const DirichletSystem& sys, std::uint64_t seed)
{
    const auto& K = sys.stiffness();
    const Vector& M = sys.mass();
    const auto n = sys.dof_count();
    double scale = 0.0;
    for (int k = 0; k < K.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(K, k); it; ++it) scale = std::max(scale, std::abs(it.value()));

    if (!sys.compliant()) {
        std::string list;
        const auto& v = sys.violations();
        for (std::size_t i = 0; i < std::min<std::size_t>(v.size(), 5); ++i)
            list += fmt::format(" ({},{})={:.3e}", v[i].row, v[i].col, v[i].value);
        throw Error(ErrorKind::non_compliant_mesh,
                    fmt::format("{} positive off-diagonal stiffness entries:{}{}", v.size(), list,
                                v.size() > 5 ? " ..." : ""));
    }

    JumpChain chain;
    chain.system_ = &sys;
    chain.seed_ = seed;
    chain.offsets_.assign(n + 1, 0);
    chain.total_.assign(n, 0.0);
    // K is symmetric: column x lists the neighbours of x.
    for (Dof x = 0; x < n; ++x) {
        chain.offsets_[x] = chain.rates_.size();
        double acc = 0.0;
        for (SparseMatrix::InnerIterator it(K, static_cast<int>(x)); it; ++it) {
            const auto y = static_cast<Dof>(it.row());
            if (y == x || it.value() >= -1e-12 * scale) continue;
            const double q = -it.value() / M[static_cast<int>(x)];
            acc += q;
            chain.rates_.emplace_back(y, q);
            chain.cumulative_.push_back(acc);
        }
        chain.total_[x] = acc;
    }
    chain.offsets_[n] = chain.rates_.size();
    const double total = M.sum();
    chain.stationary_.resize(n);
    for (Dof x = 0; x < n; ++x) chain.stationary_[x] = M[static_cast<int>(x)] / total;
    return chain;
}

Dof sample_stationary(const JumpChain& chain, std::mt19937_64& rng)
{
    const double u = uniform01(rng);
    double acc = 0.0;
    const auto& p = chain.stationary();
    for (Dof x = 0; x < p.size(); ++x) {
        acc += p[x];
        if (u < acc) return x;
    }
    return p.size() - 1;
}

WalkTrace sample_path(const JumpChain& chain, Dof x0, double T, std::uint64_t seed, const PathOptions& opt)
{
    if (!(T > 0.0)) throw_invalid("path horizon must be positive");
    if (x0 >= chain.size()) throw_invalid(fmt::format("start DOF {} out of range", x0));
    const auto& cx = chain.system().complex();

    // Intersection index of every shared DOF.
    std::vector<std::size_t> inter(cx.dof_count(), static_cast<std::size_t>(-1));
    for (std::size_t g = 0; g < cx.glue_maps().size(); ++g)
        for (Dof d : cx.glue_maps()[g].dofs) inter[d] = g;

    WalkTrace w;
    w.start = x0;
    w.horizon = T;
    if (opt.record_occupation) w.occupation.assign(chain.size(), 0.0);
    std::mt19937_64 rng(seed);
    Dof x = x0;
    double t = 0.0;
    constexpr auto none = static_cast<std::size_t>(-1);
    std::size_t last_piece = cx.is_shared(x) ? none : cx.owners(x)[0].piece;
    std::size_t last_inter = cx.is_shared(x) ? inter[x] : none;
    if (opt.record_path) w.path.emplace_back(0.0, x);
    for (;;) {
        const double q = chain.total_rate(x);
        const double hold = q > 0.0 ? -std::log1p(-uniform01(rng)) / q : T - t;
        if (t + hold >= T) {
            if (opt.record_occupation) w.occupation[x] += T - t;
            break;
        }
        if (opt.record_occupation) w.occupation[x] += hold;
        t += hold;
        x = chain.jump_target(x, uniform01(rng));
        ++w.jumps;
        if (opt.record_path) w.path.emplace_back(t, x);
        if (cx.is_shared(x)) {
            last_inter = inter[x];
        } else {
            const std::size_t p = cx.owners(x)[0].piece;
            if (last_piece != none && p != last_piece && last_inter != none)
                w.crossings.push_back({t, last_piece, p, last_inter});
            last_piece = p;
        }
    }
    w.end = x;
    return w;
}

CrossingStatistics crossing_statistics(const std::vector<WalkTrace>& traces, const GluedComplex& cx,
                                       const std::string& id, std::uint64_t seed, std::size_t resamples)
{
    std::size_t g = cx.glue_maps().size();
    for (std::size_t i = 0; i < cx.glue_maps().size(); ++i)
        if (cx.glue_maps()[i].intersection_id == id) g = i;
    if (g == cx.glue_maps().size()) throw_invalid(fmt::format("unknown intersection '{}'", id));

    CrossingStatistics st;
    st.paths = traces.size();
    if (traces.empty()) return st;
    std::vector<double> count(traces.size()), time(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
        count[i] = static_cast<double>(std::count_if(traces[i].crossings.begin(), traces[i].crossings.end(),
                                                     [&](const Crossing& c) { return c.intersection == g; }));
        time[i] = traces[i].horizon;
    }
    const double C = std::accumulate(count.begin(), count.end(), 0.0);
    st.total_time = std::accumulate(time.begin(), time.end(), 0.0);
    st.crossings = static_cast<std::size_t>(C);
    st.rate = C / st.total_time;

    std::mt19937_64 rng(seed);
    std::vector<double> boot(resamples);
    const auto n = traces.size();
    for (auto& b : boot) {
        double c = 0.0, tt = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
            c += count[j];
            tt += time[j];
        }
        b = c / tt;
    }
    std::sort(boot.begin(), boot.end());
    if (!boot.empty()) {
        auto q = [&](double p) { return boot[std::min(boot.size() - 1, static_cast<std::size_t>(p * boot.size()))]; };
        st.ci = {q(0.025), q(0.975)};
    }
    return st;
}

std::vector<std::size_t> occupation_bins(const DirichletSystem& sys, std::size_t bins)
{
    if (bins == 0) throw_invalid("need at least one bin per piece");
    const auto& cx = sys.complex();
    std::vector<Dof> sources;
    for (const auto& g : cx.glue_maps()) sources.insert(sources.end(), g.dofs.begin(), g.dofs.end());
    std::vector<double> dist(cx.dof_count(), 0.0);
    if (!sources.empty()) dist = distances_from(cx, sources);

    std::vector<std::size_t> bin(cx.dof_count(), 0);
    for (std::size_t p = 0; p < cx.piece_count(); ++p) {
        std::vector<Dof> own;
        for (Dof d = 0; d < cx.dof_count(); ++d)
            if (cx.owners(d)[0].piece == p) own.push_back(d);
        std::stable_sort(own.begin(), own.end(), [&](Dof a, Dof b) { return dist[a] < dist[b]; });
        double total = 0.0;
        for (Dof d : own) total += sys.mass()[static_cast<int>(d)];
        double acc = 0.0;
        for (Dof d : own) {
            const double m = sys.mass()[static_cast<int>(d)];
            const auto b = std::min(bins - 1, static_cast<std::size_t>((acc + 0.5 * m) / total * bins));
            bin[d] = p * bins + b;
            acc += m;
        }
    }
    return bin;
}

namespace {

std::vector<double> binned_mu(const DirichletSystem& sys, std::span<const std::size_t> bins, std::size_t nb)
{
    std::vector<double> q(nb, 0.0);
    for (Dof d = 0; d < sys.dof_count(); ++d) q[bins[d]] += sys.mass()[static_cast<int>(d)];
    const double total = sys.total_mass();
    for (auto& v : q) v /= total;
    return q;
}

} // namespace

double occupation_tv(const DirichletSystem& sys, const std::vector<WalkTrace>& traces,
                     std::span<const std::size_t> bins)
{
    if (bins.size() != sys.dof_count()) throw_invalid("bin map has wrong size");
    const std::size_t nb = *std::max_element(bins.begin(), bins.end()) + 1;
    const auto q = binned_mu(sys, bins, nb);
    std::vector<double> p(nb, 0.0);
    double total = 0.0;
    for (const auto& w : traces) {
        if (w.occupation.size() != sys.dof_count()) throw_invalid("trace carries no occupation");
        for (Dof d = 0; d < w.occupation.size(); ++d) p[bins[d]] += w.occupation[d];
        total += w.horizon;
    }
    double tv = 0.0;
    for (std::size_t b = 0; b < nb; ++b) tv += std::abs(p[b] / total - q[b]);
    return 0.5 * tv;
}

ChiSquare endpoint_chi_square(const DirichletSystem& sys, const std::vector<WalkTrace>& traces,
                              std::span<const std::size_t> bins, double level)
{
    if (bins.size() != sys.dof_count()) throw_invalid("bin map has wrong size");
    if (traces.empty()) throw_invalid("chi-square test needs traces");
    const std::size_t nb = *std::max_element(bins.begin(), bins.end()) + 1;
    const auto q = binned_mu(sys, bins, nb);
    std::vector<double> obs(nb, 0.0);
    for (const auto& w : traces) obs[bins[w.end]] += 1.0;
    const auto n = static_cast<double>(traces.size());
    ChiSquare cs;
    std::size_t used = 0;
    for (std::size_t b = 0; b < nb; ++b) {
        if (q[b] <= 0.0) continue;
        const double e = n * q[b];
        cs.statistic += (obs[b] - e) * (obs[b] - e) / e;
        ++used;
    }
    if (used < 2) throw_invalid("chi-square test needs at least two populated bins");
    cs.dof = used - 1;
    cs.critical = boost::math::quantile(boost::math::chi_squared(static_cast<double>(cs.dof)), level);
    cs.accepted = cs.statistic <= cs.critical;
    return cs;
}

} // namespace glued

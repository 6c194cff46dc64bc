#include "glued/config.hpp"
#include "glued/error.hpp"
#include "glued/mesh_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace glued {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_words(const std::string& s)
{
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

[[noreturn]] void config_error(const std::string& source, std::size_t line, const std::string& msg)
{
    throw Error(ErrorKind::config, fmt::format("{}:{}: {}", source, line, msg));
}

const std::map<std::string, std::set<std::string>>& section_schema()
{
    static const std::map<std::string, std::set<std::string>> schema{
        {"space", {"tolerance"}},
        {"piece",
         {"kind", "radius", "length", "width", "height", "refinement", "cells", "nx", "ny", "level_factor", "origin",
          "direction", "normal", "axis", "angle", "file"}},
        {"weight", {"kind", "value", "alpha", "anchor", "anchor_point", "values", "file"}},
        {"intersection", {"k"}},
        {"set", {"normal", "offset", "piece"}},
        {"task", {}},
    };
    return schema;
}

const std::map<std::string, std::pair<TaskKind, std::set<std::string>>>& task_schema()
{
    static const std::map<std::string, std::pair<TaskKind, std::set<std::string>>> schema{
        {"build", {TaskKind::build, {"level", "export_matrices"}}},
        {"check-weights",
         {TaskKind::check_weights, {"level", "piece", "radii", "center_points", "intersection", "tube_radii", "band"}}},
        {"spectrum",
         {TaskKind::spectrum, {"level", "k", "tol", "export_vectors", "decay_horizon", "decay_tau", "decay_mode"}}},
        {"ergodicity",
         {TaskKind::ergodicity,
          {"levels", "k", "ergodic_ratio", "degenerate_ratio", "support_time", "support_point"}}},
        {"capacity",
         {TaskKind::capacity,
          {"level", "center", "center_point", "inner_radius", "outer_radius", "piece", "export_potential", "levels",
           "equivalence_radius", "stable_ratio", "bound_piece", "bound_radius", "alphas"}}},
        {"walk",
         {TaskKind::walk,
          {"level", "levels", "paths", "horizon", "horizon_gaps", "start_point", "bins", "intersection",
           "export_trace", "ergodic_ratio", "degenerate_ratio", "chi_level"}}},
        {"excess",
         {TaskKind::excess, {"level", "sets", "h", "convention", "substeps", "probe", "tolerance"}}},
    };
    return schema;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::config, fmt::format("cannot open '{}'", p.string()));
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

std::uint64_t fnv1a(std::string_view data)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

const char* to_string(TaskKind t)
{
    switch (t) {
    case TaskKind::build: return "build";
    case TaskKind::check_weights: return "check-weights";
    case TaskKind::spectrum: return "spectrum";
    case TaskKind::ergodicity: return "ergodicity";
    case TaskKind::capacity: return "capacity";
    case TaskKind::walk: return "walk";
    case TaskKind::excess: return "excess";
    }
    return "?";
}

RawConfig parse_config(std::istream& in, const std::string& source, const std::filesystem::path& base_dir)
{
    RawConfig raw;
    raw.source = source;
    raw.base_dir = base_dir;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') config_error(source, lineno, "section header must end with ']'");
            const auto words = split_words(t.substr(1, t.size() - 2));
            if (words.empty() || words.size() > 2) config_error(source, lineno, "expected [type] or [type name]");
            const auto& schema = section_schema();
            if (!schema.count(words[0])) config_error(source, lineno, fmt::format("unknown section '{}'", words[0]));
            const bool named = words[0] != "space" && words[0] != "task";
            if (named != (words.size() == 2))
                config_error(source, lineno,
                             named ? fmt::format("section '{}' needs a name", words[0])
                                   : fmt::format("section '{}' takes no name", words[0]));
            for (const auto& s : raw.sections)
                if (s.type == words[0] && s.name == (named ? words[1] : ""))
                    config_error(source, lineno, fmt::format("duplicate section [{}]", t.substr(1, t.size() - 2)));
            raw.sections.push_back({words[0], named ? words[1] : "", lineno, {}});
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) config_error(source, lineno, "expected 'key = value'");
        if (raw.sections.empty()) config_error(source, lineno, "key outside of a section");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty() || value.empty()) config_error(source, lineno, "empty key or value");
        auto& sec = raw.sections.back();
        if (sec.entries.count(key)) config_error(source, lineno, fmt::format("duplicate key '{}'", key));
        sec.entries[key] = {value, lineno};
    }
    return raw;
}

RawConfig parse_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, fmt::format("cannot open config '{}'", path.string()));
    return parse_config(in, path.string(), path.parent_path());
}

const ConfigEntry& SectionView::entry(const std::string& key) const
{
    const auto it = s_->entries.find(key);
    if (it == s_->entries.end())
        config_error(source_, s_->line, fmt::format("section [{}] is missing '{}'", s_->type, key));
    return it->second;
}

void SectionView::fail(const std::string& key, const std::string& msg) const
{
    const auto it = s_->entries.find(key);
    config_error(source_, it == s_->entries.end() ? s_->line : it->second.line, fmt::format("'{}': {}", key, msg));
}

std::string SectionView::text(const std::string& key) const { return entry(key).value; }

std::string SectionView::text(const std::string& key, const std::string& fallback) const
{
    return has(key) ? text(key) : fallback;
}

double SectionView::number(const std::string& key) const
{
    const auto& v = entry(key).value;
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(x)) fail(key, fmt::format("expected a number, got '{}'", v));
    return x;
}

double SectionView::number(const std::string& key, double fallback) const
{
    return has(key) ? number(key) : fallback;
}

std::size_t SectionView::count(const std::string& key) const
{
    const double x = number(key);
    if (x < 0 || x != std::floor(x) || x > 1e15) fail(key, "expected a non-negative integer");
    return static_cast<std::size_t>(x);
}

std::size_t SectionView::count(const std::string& key, std::size_t fallback) const
{
    return has(key) ? count(key) : fallback;
}

bool SectionView::flag(const std::string& key, bool fallback) const
{
    if (!has(key)) return fallback;
    const auto v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, fmt::format("expected true or false, got '{}'", v));
}

std::vector<double> SectionView::numbers(const std::string& key) const
{
    std::vector<double> out;
    for (const auto& w : split_words(text(key))) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(w, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != w.size() || !std::isfinite(x)) fail(key, fmt::format("'{}' is not a number", w));
        out.push_back(x);
    }
    return out;
}

std::vector<std::string> SectionView::words(const std::string& key) const { return split_words(text(key)); }

Vec3 SectionView::vector(const std::string& key) const
{
    const auto v = numbers(key);
    if (v.size() != 3) fail(key, "expected three numbers");
    return {v[0], v[1], v[2]};
}

namespace {

Placement placement_of(const SectionView& s, PieceKind kind)
{
    const Vec3 origin = s.has("origin") ? s.vector("origin") : Vec3::Zero();
    const int given = s.has("direction") + s.has("normal") + s.has("axis");
    if (given > 1) s.fail("direction", "give at most one of direction, normal, axis");
    if (s.has("angle") && !s.has("axis")) s.fail("angle", "angle needs axis");
    if (s.has("direction")) {
        if (kind != PieceKind::segment) s.fail("direction", "direction applies to segments; use normal or axis");
        return Placement::along(origin, s.vector("direction"));
    }
    if (s.has("normal")) {
        if (kind == PieceKind::segment) s.fail("normal", "segments take direction");
        return Placement::facing(origin, s.vector("normal"));
    }
    if (s.has("axis")) return Placement::axis_angle(origin, s.vector("axis"), s.number("angle", 0.0) * M_PI / 180.0);
    Placement p;
    p.origin = origin;
    return p;
}

std::size_t positive_count(const SectionView& s, const std::string& key)
{
    const auto n = s.count(key);
    if (n == 0) s.fail(key, "must be positive");
    return n;
}

double positive(const SectionView& s, const std::string& key, double fallback)
{
    const double x = s.number(key, fallback);
    if (!(x > 0.0)) s.fail(key, "must be positive");
    return x;
}

PieceDecl piece_of(const SectionView& s, const std::filesystem::path& base)
{
    PieceDecl d;
    d.id = s.section().name;
    const auto kind = s.text("kind");
    auto allow = [&](std::initializer_list<const char*> keys) {
        std::set<std::string> ok{"kind", "origin", "direction", "normal", "axis", "angle", "level_factor"};
        for (auto k : keys) ok.insert(k);
        for (const auto& [k, e] : s.section().entries)
            if (!ok.count(k)) s.fail(k, fmt::format("not a key of {} pieces", kind));
    };
    if (kind == "segment") {
        d.kind = PieceKind::segment;
        allow({"length", "cells"});
        d.length = positive(s, "length", 1.0);
        d.resolution = positive_count(s, "cells");
    } else if (kind == "disk") {
        d.kind = PieceKind::disk;
        allow({"radius", "refinement"});
        d.radius = positive(s, "radius", 1.0);
        d.resolution = positive_count(s, "refinement");
    } else if (kind == "rectangle") {
        d.kind = PieceKind::rectangle;
        allow({"width", "height", "nx", "ny"});
        d.width = positive(s, "width", 1.0);
        d.height = positive(s, "height", 1.0);
        d.resolution = positive_count(s, "nx");
        d.resolution_y = positive_count(s, "ny");
    } else if (kind == "mesh") {
        d.kind = PieceKind::mesh;
        allow({"file"});
        d.file = s.text("file");
        if (d.file.is_relative()) d.file = base / d.file;
    } else {
        s.fail("kind", fmt::format("unknown piece kind '{}' (segment, disk, rectangle, mesh)", kind));
    }
    d.level_factor = positive(s, "level_factor", 1.0);
    d.placement = placement_of(s, d.kind);
    return d;
}

WeightSpec weight_of(const SectionView& s, const std::filesystem::path& base)
{
    const auto& piece = s.section().name;
    const auto kind = s.text("kind");
    auto allow = [&](std::initializer_list<const char*> keys) {
        std::set<std::string> ok{"kind"};
        for (auto k : keys) ok.insert(k);
        for (const auto& [k, e] : s.section().entries)
            if (!ok.count(k)) s.fail(k, fmt::format("not a key of {} weights", kind));
    };
    if (kind == "constant") {
        allow({"value"});
        return WeightSpec::constant(piece, positive(s, "value", 1.0));
    }
    if (kind == "power") {
        allow({"alpha", "anchor", "anchor_point"});
        if (s.has("anchor") == s.has("anchor_point")) s.fail("anchor", "give exactly one of anchor, anchor_point");
        const double alpha = s.number("alpha");
        return s.has("anchor") ? WeightSpec::power(piece, s.text("anchor"), alpha)
                               : WeightSpec::power_at(piece, s.vector("anchor_point"), alpha);
    }
    if (kind == "tabulated") {
        allow({"values", "file"});
        if (s.has("values") == s.has("file")) s.fail("values", "give exactly one of values, file");
        std::vector<double> table;
        if (s.has("values")) {
            table = s.numbers("values");
        } else {
            std::filesystem::path p = s.text("file");
            if (p.is_relative()) p = base / p;
            std::istringstream in(read_file(p));
            for (std::string w; in >> w;) {
                try {
                    table.push_back(std::stod(w));
                } catch (const std::exception&) {
                    s.fail("file", fmt::format("'{}' in '{}' is not a number", w, p.string()));
                }
            }
        }
        for (double v : table)
            if (!(v > 0.0)) s.fail(s.has("values") ? "values" : "file", "tabulated weights must be positive");
        return WeightSpec::tabulated(piece, std::move(table));
    }
    s.fail("kind", fmt::format("unknown weight kind '{}' (constant, power, tabulated)", kind));
}

} // namespace

GluedComplex build_complex(const SpaceConfig& space, std::optional<double> level)
{
    std::vector<PieceMesh> pieces;
    for (const auto& d : space.pieces) {
        auto res = [&](std::size_t base) {
            if (!level) return base;
            return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(d.level_factor * *level)));
        };
        switch (d.kind) {
        case PieceKind::segment: pieces.push_back(build_segment_piece(d.length, res(d.resolution), d.placement, d.id)); break;
        case PieceKind::disk: pieces.push_back(build_disk_piece(d.radius, res(d.resolution), d.placement, d.id)); break;
        case PieceKind::rectangle: {
            const auto nx = res(d.resolution);
            const auto ny = level ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                                 static_cast<double>(nx * d.resolution_y) /
                                                                 static_cast<double>(d.resolution))))
                                  : d.resolution_y;
            pieces.push_back(build_rectangle_piece(d.width, d.height, nx, ny, d.placement, d.id));
            break;
        }
        case PieceKind::mesh: pieces.push_back(read_mesh_file(d.file, d.id, d.placement)); break;
        }
    }
    const double tol = space.tolerance ? *space.tolerance : default_glue_tolerance(pieces);
    return glue(std::move(pieces), tol, space.declared_k);
}

WeightedComplex build_weighted(const SpaceConfig& space, std::optional<double> level, bool enforce)
{
    return WeightedComplex(build_complex(space, level), space.weights, enforce);
}

ExperimentConfig load_experiment(const RawConfig& raw, std::optional<std::uint64_t> seed)
{
    ExperimentConfig cfg;
    cfg.raw = raw;
    const auto& src = raw.source;
    bool have_task = false;
    std::set<std::string> piece_ids;
    for (std::size_t i = 0; i < raw.sections.size(); ++i) {
        const auto& sec = raw.sections[i];
        const SectionView v(sec, src);
        const auto& allowed = section_schema().at(sec.type);
        if (sec.type != "task" && sec.type != "piece" && sec.type != "weight")
            for (const auto& [k, e] : sec.entries)
                if (!allowed.count(k)) config_error(src, e.line, fmt::format("unknown key '{}' in [{}]", k, sec.type));
        if (sec.type == "space") {
            if (v.has("tolerance")) cfg.space.tolerance = positive(v, "tolerance", 1.0);
        } else if (sec.type == "piece") {
            cfg.space.pieces.push_back(piece_of(v, raw.base_dir));
            piece_ids.insert(sec.name);
        } else if (sec.type == "weight") {
            if (!piece_ids.count(sec.name))
                config_error(src, sec.line, fmt::format("weight for undeclared piece '{}'", sec.name));
            cfg.space.weights.push_back(weight_of(v, raw.base_dir));
        } else if (sec.type == "intersection") {
            const auto k = v.count("k");
            if (k > 1) v.fail("k", "intersection dimension must be 0 or 1");
            cfg.space.declared_k[sec.name] = static_cast<int>(k);
        } else if (sec.type == "set") {
            SetDecl s;
            s.name = sec.name;
            s.normal = v.has("normal") ? v.vector("normal") : Vec3::UnitX();
            if (!(s.normal.norm() > 0.0)) v.fail("normal", "must be non-zero");
            s.offset = v.number("offset", 0.0);
            s.piece = v.text("piece", "");
            cfg.sets.push_back(s);
        } else if (sec.type == "task") {
            if (have_task) config_error(src, sec.line, "only one [task] section is allowed");
            have_task = true;
            cfg.task_section = i;
            const auto name = v.text("name");
            const auto it = task_schema().find(name);
            if (it == task_schema().end()) v.fail("name", fmt::format("unknown task '{}'", name));
            cfg.task = it->second.first;
            for (const auto& [k, e] : sec.entries)
                if (k != "name" && k != "seed" && !it->second.second.count(k))
                    config_error(src, e.line, fmt::format("unknown key '{}' for task '{}'", k, name));
            if (v.has("seed")) {
                const auto& t = v.text("seed");
                try {
                    std::size_t used = 0;
                    cfg.seed = std::stoull(t, &used);
                    if (used != t.size() || t.front() == '-') throw std::invalid_argument(t);
                } catch (const std::exception&) {
                    v.fail("seed", "expected a non-negative integer");
                }
            }
        }
    }
    if (!have_task) config_error(src, 0, "config has no [task] section");
    if (cfg.space.pieces.empty()) config_error(src, 0, "config declares no pieces");
    for (const auto& s : cfg.sets)
        if (!s.piece.empty() && !piece_ids.count(s.piece))
            config_error(src, 0, fmt::format("set '{}' names undeclared piece '{}'", s.name, s.piece));
    if (seed) cfg.seed = *seed;

    // Canonical form: sections in file order, keys sorted, effective seed.
    std::string canon;
    for (const auto& sec : raw.sections) {
        canon += sec.name.empty() ? fmt::format("[{}]\n", sec.type) : fmt::format("[{} {}]\n", sec.type, sec.name);
        auto entries = sec.entries;
        if (sec.type == "task") entries["seed"] = {std::to_string(cfg.seed), 0};
        for (const auto& [k, e] : entries) {
            std::string value;
            for (const auto& w : split_words(e.value)) value += (value.empty() ? "" : " ") + w;
            canon += fmt::format("{} = {}\n", k, value);
            if (k == "file") {
                std::filesystem::path p = e.value;
                if (p.is_relative()) p = raw.base_dir / p;
                canon += fmt::format("file_hash = {:016x}\n", fnv1a(read_file(p)));
            }
        }
    }
    cfg.canonical = std::move(canon);
    cfg.hash = fnv1a(cfg.canonical);
    return cfg;
}

} // namespace glued

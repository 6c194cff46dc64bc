#pragma once

/**
 * @file config.hpp
 * @brief Experiment config files: parsing, schema validation and space construction.
 *
 * A config is a sequence of sections with `key = value` lines; `#` starts a
 * comment. Section headers are `[space]`, `[piece ID]`, `[weight PIECE]`,
 * `[intersection ID]`, `[set NAME]` and `[task]`. Lists are whitespace
 * separated; vectors are three numbers. Unknown sections and keys are
 * rejected with their line number. See configs/README.md for the keys.
 */

#include "glued/excess.hpp"
#include "glued/measure.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace glued {

struct ConfigEntry {
    std::string value;
    std::size_t line = 0;
};

struct ConfigSection {
    std::string type;
    std::string name;
    std::size_t line = 0;
    std::map<std::string, ConfigEntry> entries;
};

struct RawConfig {
    std::string source;
    std::filesystem::path base_dir;
    std::vector<ConfigSection> sections;
};

/// Syntax only (headers, `key = value`, duplicates). Throws Error(config).
RawConfig parse_config(std::istream& in, const std::string& source = "<stream>",
                       const std::filesystem::path& base_dir = {});
RawConfig parse_config_file(const std::filesystem::path& path);

/// Typed access to one section with line-numbered errors.
class SectionView {
public:
    SectionView(const ConfigSection& section, std::string source) : s_(&section), source_(std::move(source)) {}

    const ConfigSection& section() const { return *s_; }
    bool has(const std::string& key) const { return s_->entries.count(key) != 0; }
    std::string text(const std::string& key) const;
    std::string text(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key) const;
    double number(const std::string& key, double fallback) const;
    std::size_t count(const std::string& key) const;
    std::size_t count(const std::string& key, std::size_t fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    Vec3 vector(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<std::string> words(const std::string& key) const;

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const;

private:
    const ConfigEntry& entry(const std::string& key) const;
    const ConfigSection* s_;
    std::string source_;
};

enum class PieceKind { segment, disk, rectangle, mesh };

struct PieceDecl {
    std::string id;
    PieceKind kind = PieceKind::segment;
    double radius = 1.0;
    double length = 1.0;
    double width = 1.0;
    double height = 1.0;
    /// Disk refinement, segment cells or rectangle nx.
    std::size_t resolution = 1;
    /// Rectangle ny.
    std::size_t resolution_y = 1;
    /// At ladder level l the resolution becomes level_factor * l.
    double level_factor = 1.0;
    Placement placement;
    std::filesystem::path file;
};

struct SpaceConfig {
    std::vector<PieceDecl> pieces;
    std::vector<WeightSpec> weights;
    std::optional<double> tolerance;
    std::map<std::string, int> declared_k;
};

/// Pieces at their own resolution, or at ladder `level` when given.
GluedComplex build_complex(const SpaceConfig& space, std::optional<double> level = {});
WeightedComplex build_weighted(const SpaceConfig& space, std::optional<double> level = {},
                               bool enforce_admissibility = true);

enum class TaskKind { build, check_weights, spectrum, ergodicity, capacity, walk, excess };
const char* to_string(TaskKind t);

struct SetDecl {
    std::string name;
    Vec3 normal = Vec3::UnitX();
    double offset = 0.0;
    std::string piece;
};

struct ExperimentConfig {
    RawConfig raw;
    SpaceConfig space;
    TaskKind task = TaskKind::build;
    /// Index of the [task] section in raw.sections.
    std::size_t task_section = 0;
    std::vector<SetDecl> sets;
    std::uint64_t seed = 0;
    /// Sorted `[section] key = value` dump with the effective seed.
    std::string canonical;
    std::uint64_t hash = 0;

    SectionView task_view() const { return {raw.sections[task_section], raw.source}; }
};

/// Validates the schema and resolves the space. `seed` overrides the task seed.
ExperimentConfig load_experiment(const RawConfig& raw, std::optional<std::uint64_t> seed = {});

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data);

} // namespace glued

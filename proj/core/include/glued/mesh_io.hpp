#pragma once

/**
 * @file mesh_io.hpp
 * @brief Piece mesh files, complex summaries and sparse-matrix export.
 *
 * Mesh file grammar (whitespace separated, '#' starts a comment):
 *
 *     dim 2
 *     vertices N      followed by N lines "x y z"
 *     cells M         followed by M lines of dim+1 vertex indices
 *     boundary B      optional, followed by B vertex indices
 *     convex 0|1      optional, default 0
 *
 * Without a boundary block the boundary is derived from facet incidence.
 */

#include "glued/geometry.hpp"

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>

namespace glued {

/// Throws Error(config) with the offending line number.
PieceMesh read_mesh(std::istream& in, std::string id, const Placement& placement = {},
                    const std::string& source = "<stream>");
PieceMesh read_mesh_file(const std::filesystem::path& path, std::string id, const Placement& placement = {});

void write_mesh(std::ostream& out, const PieceMesh& piece);

/// DOF count, pieces, components and intersections (with k) of a complex.
nlohmann::json complex_summary(const GluedComplex& complex);

/// "row,col,value" lines with a header, values printed with 17 significant digits.
void write_triplets(std::ostream& out, const Eigen::SparseMatrix<double>& matrix);

} // namespace glued

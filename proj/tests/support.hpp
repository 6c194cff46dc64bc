#pragma once

#include "glued/dirichlet.hpp"

#include <random>

namespace glued::test {

/// Unit disk in the xy-plane; segment of length 2 along z through its center.
inline GluedComplex disk_segment(std::size_t level)
{
    return glue({build_disk_piece(1.0, level),
                 build_segment_piece(2.0, 2 * level, Placement::along(Vec3(0, 0, -1), Vec3::UnitZ()))});
}

inline const std::string junction = "disk:segment";

/// omega = 1/|x| on the disk when `weighted`, 1 elsewhere.
inline WeightedComplex disk_segment_weighted(std::size_t level, bool weighted = true)
{
    std::vector<WeightSpec> specs;
    if (weighted) specs.push_back(WeightSpec::power("disk", junction, 1.0));
    return WeightedComplex(disk_segment(level), specs);
}

inline DirichletSystem interval(std::size_t cells, double length = 1.0)
{
    return assemble(WeightedComplex(glue({build_segment_piece(length, cells)}), {}));
}

/// DOF positions projected on the x axis.
inline Vector coordinate(const DirichletSystem& sys, int axis = 0)
{
    Vector x(static_cast<Eigen::Index>(sys.dof_count()));
    for (Dof d = 0; d < sys.dof_count(); ++d) x[static_cast<Eigen::Index>(d)] = sys.complex().position(d)[axis];
    return x;
}

inline Vector random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = u(rng);
    return v;
}

} // namespace glued::test

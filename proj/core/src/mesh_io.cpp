#include "glued/error.hpp"
#include "glued/mesh_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace glued {

namespace {

// Token stream over a text source that tracks line numbers.
class Tokens {
public:
    Tokens(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    bool next(std::string& tok)
    {
        while (!(line_ >> tok)) {
            std::string raw;
            if (!std::getline(in_, raw)) return false;
            ++lineno_;
            if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
            line_.clear();
            line_.str(raw);
        }
        return true;
    }

    std::string word(const char* what)
    {
        std::string tok;
        if (!next(tok)) fail(fmt::format("unexpected end of file, expected {}", what));
        return tok;
    }

    double number(const char* what)
    {
        const std::string tok = word(what);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) fail(fmt::format("expected {}, got '{}'", what, tok));
        return v;
    }

    std::size_t index(const char* what)
    {
        const std::string tok = word(what);
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            if (!tok.empty() && tok[0] != '-') v = std::stoull(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != tok.size()) fail(fmt::format("expected {}, got '{}'", what, tok));
        return static_cast<std::size_t>(v);
    }

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw Error(ErrorKind::config, fmt::format("{}:{}: {}", source_, lineno_, msg));
    }

private:
    std::istream& in_;
    std::string source_;
    std::istringstream line_;
    std::size_t lineno_ = 0;
};

} // namespace

PieceMesh read_mesh(std::istream& in, std::string id, const Placement& placement, const std::string& source)
{
    Tokens tk(in, source);
    PieceMesh piece;
    piece.id = std::move(id);
    bool have_dim = false, have_vertices = false, have_cells = false, have_boundary = false;
    std::string key;
    while (tk.next(key)) {
        if (key == "dim") {
            const auto d = tk.index("dimension");
            if (d != 1 && d != 2) tk.fail(fmt::format("dimension must be 1 or 2, got {}", d));
            piece.dim = static_cast<int>(d);
            have_dim = true;
        } else if (key == "vertices") {
            const auto n = tk.index("vertex count");
            piece.vertices.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double x = tk.number("x"), y = tk.number("y"), z = tk.number("z");
                piece.vertices.push_back(placement.apply(Vec3(x, y, z)));
            }
            have_vertices = true;
        } else if (key == "cells") {
            if (!have_dim) tk.fail("'dim' must precede 'cells'");
            const auto m = tk.index("cell count");
            piece.cells.reserve(m);
            for (std::size_t c = 0; c < m; ++c) {
                Cell cell{0, 0, 0};
                for (int j = 0; j <= piece.dim; ++j) cell[j] = tk.index("vertex index");
                piece.cells.push_back(cell);
            }
            have_cells = true;
        } else if (key == "boundary") {
            const auto b = tk.index("boundary count");
            piece.boundary.assign(piece.vertices.size(), 0);
            for (std::size_t i = 0; i < b; ++i) {
                const auto v = tk.index("vertex index");
                if (v >= piece.vertices.size()) tk.fail(fmt::format("boundary vertex {} out of range", v));
                piece.boundary[v] = 1;
            }
            have_boundary = true;
        } else if (key == "convex") {
            piece.convex = tk.index("0 or 1") != 0;
        } else {
            tk.fail(fmt::format("unknown keyword '{}'", key));
        }
    }
    if (!have_dim || !have_vertices || !have_cells) tk.fail("mesh needs 'dim', 'vertices' and 'cells'");
    for (const auto& c : piece.cells)
        for (int j = 0; j <= piece.dim; ++j)
            if (c[j] >= piece.vertices.size()) tk.fail(fmt::format("cell vertex {} out of range", c[j]));
    if (!have_boundary) piece.boundary = boundary_from_cells(piece);
    validate(piece);
    return piece;
}

PieceMesh read_mesh_file(const std::filesystem::path& path, std::string id, const Placement& placement)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, fmt::format("cannot open mesh file '{}'", path.string()));
    return read_mesh(in, std::move(id), placement, path.string());
}

void write_mesh(std::ostream& out, const PieceMesh& piece)
{
    out << fmt::format("dim {}\nvertices {}\n", piece.dim, piece.vertices.size());
    for (const auto& v : piece.vertices) out << fmt::format("{:.17g} {:.17g} {:.17g}\n", v.x(), v.y(), v.z());
    out << fmt::format("cells {}\n", piece.cells.size());
    for (std::size_t c = 0; c < piece.cell_count(); ++c) {
        const auto v = piece.cell_vertices(c);
        out << v[0];
        for (std::size_t j = 1; j < v.size(); ++j) out << ' ' << v[j];
        out << '\n';
    }
    std::size_t nb = 0;
    for (auto b : piece.boundary) nb += b != 0;
    out << fmt::format("boundary {}\n", nb);
    for (std::size_t i = 0; i < piece.boundary.size(); ++i)
        if (piece.boundary[i]) out << i << '\n';
    out << fmt::format("convex {}\n", piece.convex ? 1 : 0);
}

nlohmann::json complex_summary(const GluedComplex& cx)
{
    nlohmann::json j;
    j["dof_count"] = cx.dof_count();
    j["edge_count"] = cx.edge_count();
    j["components"] = cx.component_count();
    j["tolerance"] = cx.tolerance();
    auto& pieces = j["pieces"] = nlohmann::json::array();
    for (const auto& p : cx.pieces())
        pieces.push_back({{"id", p.id},
                          {"dim", p.dim},
                          {"vertices", p.vertex_count()},
                          {"cells", p.cell_count()},
                          {"volume", p.total_volume()},
                          {"max_cell_diameter", p.max_cell_diameter()}});
    auto& inter = j["intersections"] = nlohmann::json::array();
    for (const auto& g : cx.glue_maps())
        inter.push_back({{"id", g.intersection_id},
                         {"pieces", {cx.piece(g.piece_a).id, cx.piece(g.piece_b).id}},
                         {"k", g.k},
                         {"dofs", g.dofs.size()}});
    return j;
}

void write_triplets(std::ostream& out, const Eigen::SparseMatrix<double>& m)
{
    out << "row,col,value\n";
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            out << fmt::format("{},{},{:.17g}\n", it.row(), it.col(), it.value());
}

} // namespace glued

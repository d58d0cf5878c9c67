#pragma once

#include <nnest/estimators.hpp>
#include <nnest/mesh.hpp>
#include <nnest/network.hpp>

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nnest {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/**
 * Plain-text mesh format:
 *   nnest-mesh 1
 *   vertices <n>      then n lines "x y"
 *   triangles <m>     then m lines "v0 v1 v2 generation"
 *   facets <k>        then k lines "v0 v1 element" (derived; checked on read)
 * Vertex order inside a triangle carries the refinement edge, so a round trip preserves
 * subsequent refinements.
 */
inline void write_mesh(std::ostream& os, const Mesh& mesh)
{
    os << "nnest-mesh 1\n" << std::setprecision(17);
    os << "vertices " << mesh.num_vertices() << '\n';
    for (const Point& v : mesh.vertices()) os << v.x() << ' ' << v.y() << '\n';
    os << "triangles " << mesh.num_elements() << '\n';
    for (const Triangle& t : mesh.triangles())
        os << t.vertices[0] << ' ' << t.vertices[1] << ' ' << t.vertices[2] << ' ' << t.generation << '\n';
    os << "facets " << mesh.num_boundary_facets() << '\n';
    for (const auto& f : mesh.boundary_facets()) os << f.vertices[0] << ' ' << f.vertices[1] << ' ' << f.element << '\n';
}

inline Mesh read_mesh(std::istream& is)
{
    auto expect = [&](const std::string& word) {
        std::string got;
        long long count = -1;
        if (!(is >> got >> count) || got != word || count < 0)
            throw io_error("mesh file: expected '" + word + " <count>'");
        return count;
    };
    if (expect("nnest-mesh") != 1) throw io_error("mesh file: unsupported version");
    std::vector<Point> vertices(expect("vertices"));
    for (auto& v : vertices)
        if (!(is >> v.x() >> v.y())) throw io_error("mesh file: truncated vertex list");
    std::vector<Triangle> triangles(expect("triangles"));
    for (auto& t : triangles)
        if (!(is >> t.vertices[0] >> t.vertices[1] >> t.vertices[2] >> t.generation))
            throw io_error("mesh file: truncated triangle list");
    Mesh mesh(std::move(vertices), std::move(triangles));
    const long long facets = expect("facets");
    if (facets != mesh.num_boundary_facets()) throw io_error("mesh file: facet count does not match the triangles");
    return mesh;
}

inline void save_mesh(const std::string& path, const Mesh& mesh)
{
    std::ofstream os(path);
    if (!os) throw io_error("cannot write " + path);
    write_mesh(os, mesh);
}

inline Mesh load_mesh(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw io_error("cannot read " + path);
    return read_mesh(is);
}

/// Legacy VTK unstructured grid, for external viewers.
inline void write_mesh_vtk(std::ostream& os, const Mesh& mesh)
{
    os << "# vtk DataFile Version 3.0\nnnest mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n" << std::setprecision(17);
    os << "POINTS " << mesh.num_vertices() << " double\n";
    for (const Point& v : mesh.vertices()) os << v.x() << ' ' << v.y() << " 0\n";
    os << "CELLS " << mesh.num_elements() << ' ' << 4 * mesh.num_elements() << '\n';
    for (const Triangle& t : mesh.triangles()) os << "3 " << t.vertices[0] << ' ' << t.vertices[1] << ' ' << t.vertices[2] << '\n';
    os << "CELL_TYPES " << mesh.num_elements() << '\n';
    for (int e = 0; e < mesh.num_elements(); ++e) os << "5\n";
    os << "CELL_DATA " << mesh.num_elements() << "\nSCALARS generation int 1\nLOOKUP_TABLE default\n";
    for (const Triangle& t : mesh.triangles()) os << t.generation << '\n';
}

/// Network parameters together with the mesh they were trained on.
struct Checkpoint {
    MlpParams params;
    int iteration = 0;
    Mesh mesh;
};

namespace detail {
template <class T>
void write_raw(std::ostream& os, const T* data, std::size_t n)
{
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}
template <class T>
void read_raw(std::istream& is, T* data, std::size_t n)
{
    if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T))))
        throw io_error("checkpoint: truncated binary payload");
}
}  // namespace detail

/**
 * Checkpoint layout: one line of JSON (widths, seed, iteration, counts), then the flat parameter
 * vector as float64, the mesh vertices as float64 pairs and the triangles as int32 quadruples
 * (three vertices and the generation), all little-endian.
 */
inline void write_checkpoint(std::ostream& os, const Checkpoint& c)
{
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
    const nlohmann::json header = {{"format", "nnest-checkpoint"},
                                   {"version", 1},
                                   {"widths", c.params.widths},
                                   {"seed", c.params.seed},
                                   {"iteration", c.iteration},
                                   {"num_params", c.params.size()},
                                   {"num_vertices", c.mesh.num_vertices()},
                                   {"num_triangles", c.mesh.num_elements()}};
    os << header.dump() << '\n';
    detail::write_raw(os, c.params.flat.data(), c.params.flat.size());
    for (const Point& v : c.mesh.vertices()) detail::write_raw(os, v.data(), 2);
    for (const Triangle& t : c.mesh.triangles()) {
        const std::int32_t row[4] = {t.vertices[0], t.vertices[1], t.vertices[2], t.generation};
        detail::write_raw(os, row, 4);
    }
}

inline Checkpoint read_checkpoint(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw io_error("checkpoint: missing header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("checkpoint: bad header: ") + e.what());
    }
    if (h.value("format", "") != "nnest-checkpoint" || h.value("version", 0) != 1)
        throw io_error("checkpoint: unrecognized format");
    Checkpoint c;
    c.params.widths = h.at("widths").get<std::vector<int>>();
    c.params.seed = h.at("seed").get<std::uint64_t>();
    c.iteration = h.at("iteration").get<int>();
    const int n = h.at("num_params").get<int>();
    const auto& w = c.params.widths;
    const int layers = static_cast<int>(w.size()) - 2;
    if (layers < 1 || w != mlp_widths(layers, w[1]) || n != param_count(layers, w[1]))
        throw io_error("checkpoint: widths and parameter count disagree");
    c.params.flat.resize(n);
    detail::read_raw(is, c.params.flat.data(), n);
    std::vector<Point> vertices(h.at("num_vertices").get<int>());
    for (auto& v : vertices) detail::read_raw(is, v.data(), 2);
    std::vector<Triangle> triangles(h.at("num_triangles").get<int>());
    for (auto& t : triangles) {
        std::int32_t row[4];
        detail::read_raw(is, row, 4);
        t.vertices = {row[0], row[1], row[2]};
        t.generation = row[3];
    }
    c.mesh = Mesh(std::move(vertices), std::move(triangles));
    return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    write_checkpoint(os, c);
}

inline Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot read " + path);
    return read_checkpoint(is);
}

/// Estimator report with global parts, the two bounds and per-element squared contributions.
inline nlohmann::json to_json(const EstimatorReport& r)
{
    nlohmann::json per = nlohmann::json::array();
    for (const auto& c : r.per_element)
        per.push_back({{"eta_omega2", c.eta_omega2}, {"rho_omega2", c.rho_omega2}, {"eta_gamma2", c.eta_gamma2},
                       {"rho_gamma2", c.rho_gamma2}});
    return {{"formulation", to_string(r.formulation)},
            {"quadrature", r.quadrature},
            {"num_elements", r.num_elements},
            {"eta_omega", r.eta_omega},
            {"rho_omega", r.rho_omega},
            {"eta_gamma", r.eta_gamma},
            {"rho_gamma", r.rho_gamma},
            {"lower_bound_eta", r.eta()},
            {"upper_bound_eta_plus_rho", r.eta() + r.rho()},
            {"per_element", per}};
}

}  // namespace nnest

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace nnest {

using Point = Eigen::Vector2d;

/**
 * A triangle of a 2D triangulation, stored counter-clockwise.
 *
 * Local edge i is the edge opposite local vertex i. Vertex 0 is the newest vertex, so local edge 0,
 * i.e. (vertices[1], vertices[2]), is the refinement edge used by newest vertex bisection.
 */
struct Triangle {
    std::array<int, 3> vertices{};
    int generation = 0;
};

struct BoundaryFacet {
    std::array<int, 2> vertices{};  // oriented counter-clockwise along the boundary
    int element = -1;
    Point normal = Point::Zero();  // outward unit normal
};

/// Element indices flagged for refinement.
using Marking = std::vector<int>;

class mesh_error : public std::runtime_error {
public:
    explicit mesh_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

inline std::uint64_t edge_key(int a, int b)
{
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}
}  // namespace detail

/**
 * Conforming triangulation with edge and boundary bookkeeping.
 *
 * Meshes are immutable: refinement produces a new mesh. The constructor does not reorder the
 * vertices of the supplied triangles, so the refinement edges of a refined mesh are preserved.
 * Use Mesh::with_longest_edge_refinement() for an initial mesh whose refinement edges are unset.
 */
class Mesh {
public:
    Mesh() = default;

    Mesh(std::vector<Point> vertices, std::vector<Triangle> triangles)
        : _vertices(std::move(vertices)), _triangles(std::move(triangles))
    {
        build();
    }

    /**
     * Rotates every triangle so that its longest edge becomes the refinement edge. Ties are broken by
     * the smallest index of the vertex opposite the edge.
     */
    static Mesh with_longest_edge_refinement(std::vector<Point> vertices, std::vector<Triangle> triangles)
    {
        for (auto& t : triangles) {
            int best = 0;
            double best_len = -1.0;
            for (int i = 0; i < 3; ++i) {
                const auto& a = vertices[t.vertices[(i + 1) % 3]];
                const auto& b = vertices[t.vertices[(i + 2) % 3]];
                const double len = (a - b).norm();
                const bool longer = len > best_len * (1.0 + 1e-12);
                const bool tie = !longer && std::abs(len - best_len) <= 1e-12 * best_len;
                if (longer || (tie && t.vertices[i] < t.vertices[best])) {
                    best = i;
                    best_len = std::max(len, best_len);
                }
            }
            std::rotate(t.vertices.begin(), t.vertices.begin() + best, t.vertices.end());
        }
        return Mesh(std::move(vertices), std::move(triangles));
    }

    const std::vector<Point>& vertices() const { return _vertices; }
    const std::vector<Triangle>& triangles() const { return _triangles; }
    const std::vector<BoundaryFacet>& boundary_facets() const { return _facets; }

    int num_vertices() const { return static_cast<int>(_vertices.size()); }
    int num_elements() const { return static_cast<int>(_triangles.size()); }
    int num_edges() const { return static_cast<int>(_edges.size()); }
    int num_boundary_facets() const { return static_cast<int>(_facets.size()); }

    /// Unique edges, each stored with ascending vertex indices.
    const std::vector<std::array<int, 2>>& edges() const { return _edges; }
    /// Edge index of local edge i (opposite local vertex i) of every element.
    const std::vector<std::array<int, 3>>& element_edges() const { return _element_edges; }
    /// The one or two elements adjacent to each edge; the second entry is -1 on the boundary.
    const std::vector<std::array<int, 2>>& edge_elements() const { return _edge_elements; }
    /// Edge index of each boundary facet.
    const std::vector<int>& facet_edges() const { return _facet_edges; }

    bool is_boundary_vertex(int v) const { return _boundary_vertex[v]; }

    std::array<Point, 3> corners(int element) const
    {
        const auto& t = _triangles[element].vertices;
        return {_vertices[t[0]], _vertices[t[1]], _vertices[t[2]]};
    }

    double area(int element) const
    {
        const auto p = corners(element);
        return 0.5 * detail::cross(p[1] - p[0], p[2] - p[0]);
    }

    double diameter(int element) const
    {
        const auto p = corners(element);
        return std::max({(p[0] - p[1]).norm(), (p[1] - p[2]).norm(), (p[2] - p[0]).norm()});
    }

    Point centroid(int element) const
    {
        const auto p = corners(element);
        return (p[0] + p[1] + p[2]) / 3.0;
    }

    double facet_length(int facet) const
    {
        const auto& f = _facets[facet].vertices;
        return (_vertices[f[1]] - _vertices[f[0]]).norm();
    }

    double domain_area() const
    {
        double sum = 0.0;
        for (int e = 0; e < num_elements(); ++e) sum += area(e);
        return sum;
    }

    int vertex_index(const Point& p, double tol = 1e-12) const
    {
        for (int i = 0; i < num_vertices(); ++i)
            if ((_vertices[i] - p).norm() <= tol) return i;
        return -1;
    }

private:
    void build()
    {
        const int nv = num_vertices();
        std::unordered_map<std::uint64_t, int> edge_ids;
        _element_edges.assign(_triangles.size(), {-1, -1, -1});
        for (int e = 0; e < num_elements(); ++e) {
            const auto& t = _triangles[e].vertices;
            for (int v : t)
                if (v < 0 || v >= nv) throw mesh_error("triangle references invalid vertex index");
            if (!(area(e) > 0.0)) throw mesh_error("triangle " + std::to_string(e) + " has non-positive area");
            for (int i = 0; i < 3; ++i) {
                const int a = t[(i + 1) % 3];
                const int b = t[(i + 2) % 3];
                auto [it, inserted] = edge_ids.emplace(detail::edge_key(a, b), static_cast<int>(_edges.size()));
                if (inserted) {
                    _edges.push_back({std::min(a, b), std::max(a, b)});
                    _edge_elements.push_back({e, -1});
                } else {
                    auto& adj = _edge_elements[it->second];
                    if (adj[1] != -1) throw mesh_error("edge shared by more than two triangles");
                    adj[1] = e;
                }
                _element_edges[e][i] = it->second;
            }
        }

        // Boundary facets are the edges with a single neighbour, oriented as in that neighbour.
        std::vector<BoundaryFacet> unordered;
        std::vector<int> unordered_edges;
        for (int ed = 0; ed < num_edges(); ++ed) {
            if (_edge_elements[ed][1] != -1) continue;
            const int e = _edge_elements[ed][0];
            const auto& t = _triangles[e].vertices;
            int local = 0;
            while (_element_edges[e][local] != ed) ++local;
            BoundaryFacet f;
            f.vertices = {t[(local + 1) % 3], t[(local + 2) % 3]};
            f.element = e;
            const Point d = _vertices[f.vertices[1]] - _vertices[f.vertices[0]];
            f.normal = Point(d.y(), -d.x()).normalized();
            unordered.push_back(f);
            unordered_edges.push_back(ed);
        }

        // Chain the facets into closed loops.
        std::unordered_map<int, int> by_start;
        for (int i = 0; i < static_cast<int>(unordered.size()); ++i) {
            if (!by_start.emplace(unordered[i].vertices[0], i).second)
                throw mesh_error("boundary is not a union of simple closed loops");
        }
        std::vector<char> used(unordered.size(), 0);
        _facets.clear();
        _facet_edges.clear();
        for (int start = 0; start < static_cast<int>(unordered.size()); ++start) {
            if (used[start]) continue;
            int cur = start;
            while (!used[cur]) {
                used[cur] = 1;
                _facets.push_back(unordered[cur]);
                _facet_edges.push_back(unordered_edges[cur]);
                auto it = by_start.find(unordered[cur].vertices[1]);
                if (it == by_start.end()) throw mesh_error("open boundary chain");
                cur = it->second;
            }
            if (cur != start) throw mesh_error("boundary chain does not close");
        }

        _boundary_vertex.assign(nv, false);
        for (const auto& f : _facets) {
            _boundary_vertex[f.vertices[0]] = true;
            _boundary_vertex[f.vertices[1]] = true;
        }
    }

    std::vector<Point> _vertices;
    std::vector<Triangle> _triangles;
    std::vector<BoundaryFacet> _facets;
    std::vector<int> _facet_edges;
    std::vector<std::array<int, 2>> _edges;
    std::vector<std::array<int, 3>> _element_edges;
    std::vector<std::array<int, 2>> _edge_elements;
    std::vector<bool> _boundary_vertex;
};

/// Longest edge of each element.
inline std::vector<double> mesh_size(const Mesh& mesh)
{
    std::vector<double> h(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) h[e] = mesh.diameter(e);
    return h;
}

/**
 * Newest vertex bisection. Every marked element is bisected twice (into 4 children); further
 * bisections are added recursively until the mesh is conforming again. Elements that are not
 * touched by the closure are copied unchanged and keep their position in the element list.
 */
inline Mesh refine_nvb(const Mesh& mesh, std::span<const int> marked)
{
    if (marked.empty()) return mesh;

    std::vector<char> edge_marked(mesh.num_edges(), 0);
    for (int e : marked) {
        if (e < 0 || e >= mesh.num_elements()) throw mesh_error("marked element index out of range");
        for (int ed : mesh.element_edges()[e]) edge_marked[ed] = 1;
    }

    // Closure: an element with any marked edge must also bisect its refinement edge.
    for (bool changed = true; changed;) {
        changed = false;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            const auto& ee = mesh.element_edges()[e];
            if (!edge_marked[ee[0]] && (edge_marked[ee[1]] || edge_marked[ee[2]])) {
                edge_marked[ee[0]] = 1;
                changed = true;
            }
        }
    }

    std::vector<Point> vertices = mesh.vertices();
    std::unordered_map<std::uint64_t, int> midpoint;
    for (int ed = 0; ed < mesh.num_edges(); ++ed) {
        if (!edge_marked[ed]) continue;
        const auto& [a, b] = mesh.edges()[ed];
        midpoint.emplace(detail::edge_key(a, b), static_cast<int>(vertices.size()));
        vertices.push_back(0.5 * (vertices[a] + vertices[b]));
    }

    std::vector<Triangle> triangles;
    triangles.reserve(mesh.num_elements() * 2);
    auto split = [&](auto&& self, const Triangle& t) -> void {
        const auto& [v0, v1, v2] = t.vertices;
        auto it = midpoint.find(detail::edge_key(v1, v2));
        if (it == midpoint.end()) {
            triangles.push_back(t);
            return;
        }
        const int m = it->second;
        self(self, Triangle{{m, v0, v1}, t.generation + 1});
        self(self, Triangle{{m, v2, v0}, t.generation + 1});
    };
    for (const auto& t : mesh.triangles()) split(split, t);

    return Mesh(std::move(vertices), std::move(triangles));
}

inline Mesh refine_uniform(const Mesh& mesh, int times = 1)
{
    Mesh out = mesh;
    for (int i = 0; i < times; ++i) {
        Marking all(out.num_elements());
        for (int e = 0; e < out.num_elements(); ++e) all[e] = e;
        out = refine_nvb(out, all);
    }
    return out;
}

/**
 * n x n squares on the unit square, each split into 4 triangles by its diagonals.
 * The refinement edge of every triangle is the square side.
 */
inline Mesh make_crisscross_unit_square(int n)
{
    if (n < 1) throw mesh_error("crisscross mesh needs n >= 1");
    std::vector<Point> vertices;
    const auto grid = [n](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) vertices.emplace_back(double(i) / n, double(j) / n);
    std::vector<Triangle> triangles;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int c = static_cast<int>(vertices.size());
            vertices.emplace_back((i + 0.5) / n, (j + 0.5) / n);
            const std::array<int, 4> sq = {grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1)};
            for (int k = 0; k < 4; ++k) triangles.push_back({{c, sq[k], sq[(k + 1) % 4]}, 0});
        }
    }
    return Mesh(std::move(vertices), std::move(triangles));
}

/**
 * The L-shape (-1,1)^2 \ [-1,0]^2 rotated 45 degrees clockwise, so that the re-entrant corner sits
 * at the origin and the excluded quadrant is centred on the negative x-axis.
 *
 * Each of the three unit squares is split criss-cross (12 triangles); `uniform_refinements`
 * rounds of 4-way refinement follow. The default of 2 gives 192 elements.
 */
inline Mesh make_lshape_rotated(int uniform_refinements = 2)
{
    std::vector<Point> vertices;
    std::map<std::pair<int, int>, int> corner_ids;  // keyed by doubled coordinates
    auto corner = [&](double x, double y) {
        const auto key = std::make_pair(int(std::lround(2 * x)), int(std::lround(2 * y)));
        auto it = corner_ids.find(key);
        if (it != corner_ids.end()) return it->second;
        const int id = static_cast<int>(vertices.size());
        vertices.emplace_back(x, y);
        corner_ids.emplace(key, id);
        return id;
    };
    std::vector<Triangle> triangles;
    const std::array<Point, 3> origins = {Point(0, -1), Point(0, 0), Point(-1, 0)};
    for (const auto& o : origins) {
        const std::array<int, 4> sq = {corner(o.x(), o.y()), corner(o.x() + 1, o.y()),
                                       corner(o.x() + 1, o.y() + 1), corner(o.x(), o.y() + 1)};
        const int c = corner(o.x() + 0.5, o.y() + 0.5);
        for (int k = 0; k < 4; ++k) triangles.push_back({{c, sq[k], sq[(k + 1) % 4]}, 0});
    }
    const double s = std::numbers::sqrt2 / 2.0;
    for (auto& v : vertices) v = Point(s * v.x() + s * v.y(), -s * v.x() + s * v.y());
    return refine_uniform(Mesh(std::move(vertices), std::move(triangles)), uniform_refinements);
}

/**
 * Unit-square mesh graded towards the edge x = 0: starting from a criss-cross mesh, every element
 * whose centroid lies within `layer_widths[i]` of x = 0 is refined into 4 in round i.
 */
inline Mesh make_layer_graded_unit_square(int n, std::span<const double> layer_widths)
{
    Mesh mesh = make_crisscross_unit_square(n);
    for (double width : layer_widths) {
        Marking marked;
        for (int e = 0; e < mesh.num_elements(); ++e)
            if (mesh.centroid(e).x() < width) marked.push_back(e);
        mesh = refine_nvb(mesh, marked);
    }
    return mesh;
}

/// Layer-resolving mesh for the boundary-layer problem: 12x12 criss-cross, two graded rounds (3636 elements).
inline Mesh make_boundary_layer_mesh()
{
    const std::array<double, 2> widths{0.5625, 0.28125};
    return make_layer_graded_unit_square(12, widths);
}

/**
 * Mesh refined `levels` times towards `center`: in each round, every element having a vertex
 * within distance `radius` of the center is refined into 4.
 */
inline Mesh refine_towards_point(Mesh mesh, const Point& center, int levels, double radius = 1e-12)
{
    for (int l = 0; l < levels; ++l) {
        Marking marked;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            const auto p = mesh.corners(e);
            for (const auto& q : p)
                if ((q - center).norm() <= radius) {
                    marked.push_back(e);
                    break;
                }
        }
        mesh = refine_nvb(mesh, marked);
    }
    return mesh;
}

}  // namespace nnest

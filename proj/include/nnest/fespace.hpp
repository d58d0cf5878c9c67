#pragma once

#include <nnest/quadrature.hpp>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnest {

/// Discrete test spaces.
enum class SpaceKind {
    lagrange_h10_p1,        ///< continuous P1 vanishing on the boundary, norm ||grad v||
    bubble_enriched_p1_b0,  ///< lagrange_h10_p1 plus one cubic bubble per element, norm ||grad v||
    broken_p0,              ///< piecewise constants, broken H1 norm
    broken_p1,              ///< discontinuous P1, broken H1 norm
    rt0,                    ///< lowest-order Raviart-Thomas, H(div) norm
};

inline constexpr std::array all_space_kinds = {SpaceKind::lagrange_h10_p1, SpaceKind::bubble_enriched_p1_b0,
                                               SpaceKind::broken_p0, SpaceKind::broken_p1, SpaceKind::rt0};

inline std::string to_string(SpaceKind k)
{
    switch (k) {
    case SpaceKind::lagrange_h10_p1: return "lagrange_h10_p1";
    case SpaceKind::bubble_enriched_p1_b0: return "bubble_enriched_p1_b0";
    case SpaceKind::broken_p0: return "broken_p0";
    case SpaceKind::broken_p1: return "broken_p1";
    case SpaceKind::rt0: return "rt0";
    }
    return "unknown";
}

class fespace_error : public std::runtime_error {
public:
    explicit fespace_error(const std::string& what) : std::runtime_error(what) {}
};

/**
 * Local-to-global numbering of a test space.
 *
 * Local dofs: P1 spaces use the element's vertices in local order; the bubble space appends the
 * element bubble as local dof 3; rt0 uses local edges (edge i opposite vertex i). Constrained
 * dofs (boundary vertices of H1_0 spaces) are -1.
 */
struct DofMap {
    SpaceKind kind = SpaceKind::lagrange_h10_p1;
    int dim = 0;
    int local_size = 0;
    std::vector<std::array<int, 4>> element_dofs;
    /// rt0 only: +1 when the global normal of local edge i points out of the element.
    std::vector<std::array<double, 3>> element_signs;
};

/// Gradients of the barycentric coordinates of a counter-clockwise triangle.
inline std::array<Eigen::Vector2d, 3> barycentric_gradients(const std::array<Point, 3>& p)
{
    const double two_area = detail::cross(p[1] - p[0], p[2] - p[0]);
    std::array<Eigen::Vector2d, 3> g;
    for (int i = 0; i < 3; ++i) {
        const Eigen::Vector2d d = p[(i + 2) % 3] - p[(i + 1) % 3];
        g[i] = Eigen::Vector2d(-d.y(), d.x()) / two_area;
    }
    return g;
}

/// Global normal of an edge: the ascending-index direction rotated clockwise.
inline Eigen::Vector2d edge_normal(const Mesh& mesh, int edge)
{
    const auto& [a, b] = mesh.edges()[edge];
    const Eigen::Vector2d d = mesh.vertices()[b] - mesh.vertices()[a];
    return Eigen::Vector2d(d.y(), -d.x()).normalized();
}

inline DofMap build_space(const Mesh& mesh, SpaceKind kind)
{
    DofMap map;
    map.kind = kind;
    const int ne = mesh.num_elements();
    map.element_dofs.assign(ne, {-1, -1, -1, -1});
    switch (kind) {
    case SpaceKind::lagrange_h10_p1:
    case SpaceKind::bubble_enriched_p1_b0: {
        std::vector<int> vertex_dof(mesh.num_vertices(), -1);
        for (int v = 0; v < mesh.num_vertices(); ++v)
            if (!mesh.is_boundary_vertex(v)) vertex_dof[v] = map.dim++;
        map.local_size = 3;
        for (int e = 0; e < ne; ++e)
            for (int i = 0; i < 3; ++i) map.element_dofs[e][i] = vertex_dof[mesh.triangles()[e].vertices[i]];
        if (kind == SpaceKind::bubble_enriched_p1_b0) {
            map.local_size = 4;
            for (int e = 0; e < ne; ++e) map.element_dofs[e][3] = map.dim++;
        }
        break;
    }
    case SpaceKind::broken_p0:
        map.local_size = 1;
        for (int e = 0; e < ne; ++e) map.element_dofs[e][0] = map.dim++;
        break;
    case SpaceKind::broken_p1:
        map.local_size = 3;
        for (int e = 0; e < ne; ++e)
            for (int i = 0; i < 3; ++i) map.element_dofs[e][i] = map.dim++;
        break;
    case SpaceKind::rt0:
        map.local_size = 3;
        map.dim = mesh.num_edges();
        map.element_signs.assign(ne, {0.0, 0.0, 0.0});
        for (int e = 0; e < ne; ++e) {
            const Point c = mesh.centroid(e);
            for (int i = 0; i < 3; ++i) {
                const int ed = mesh.element_edges()[e][i];
                map.element_dofs[e][i] = ed;
                const auto& [a, b] = mesh.edges()[ed];
                const Point mid = 0.5 * (mesh.vertices()[a] + mesh.vertices()[b]);
                map.element_signs[e][i] = edge_normal(mesh, ed).dot(mid - c) > 0.0 ? 1.0 : -1.0;
            }
        }
        break;
    }
    return map;
}

/// Values and gradients of the local scalar basis of one element at one point.
struct ScalarBasisValues {
    std::array<double, 4> value{};
    std::array<Eigen::Vector2d, 4> grad{};
};

/**
 * Local scalar basis at barycentric coordinates `bary` of an element with barycentric gradients
 * `dl`. The bubble is 27 l0 l1 l2, so its maximum is 1.
 */
inline ScalarBasisValues scalar_basis(SpaceKind kind, const std::array<Eigen::Vector2d, 3>& dl,
                                      const std::array<double, 3>& bary)
{
    ScalarBasisValues b;
    if (kind == SpaceKind::broken_p0) {
        b.value[0] = 1.0;
        b.grad[0].setZero();
        return b;
    }
    for (int i = 0; i < 3; ++i) {
        b.value[i] = bary[i];
        b.grad[i] = dl[i];
    }
    if (kind == SpaceKind::bubble_enriched_p1_b0) {
        const auto& l = bary;
        b.value[3] = 27.0 * l[0] * l[1] * l[2];
        b.grad[3] = 27.0 * (l[1] * l[2] * dl[0] + l[0] * l[2] * dl[1] + l[0] * l[1] * dl[2]);
    }
    return b;
}

/// Local rt0 basis: tau_i = s_i |e_i| / (2|T|) (x - p_i), unit normal flux on edge i.
struct VectorBasisValues {
    std::array<Eigen::Vector2d, 3> value{};
    std::array<double, 3> div{};
};

inline VectorBasisValues rt0_basis(const std::array<Point, 3>& p, const std::array<double, 3>& signs, const Point& x)
{
    const double area = 0.5 * detail::cross(p[1] - p[0], p[2] - p[0]);
    VectorBasisValues b;
    for (int i = 0; i < 3; ++i) {
        const double len = (p[(i + 2) % 3] - p[(i + 1) % 3]).norm();
        b.value[i] = signs[i] * len / (2.0 * area) * (x - p[i]);
        b.div[i] = signs[i] * len / area;
    }
    return b;
}

/**
 * Local Gram matrix of one element in the test norm of the space. All integrands are
 * polynomials of degree <= 4, integrated exactly with the degree-4 rule.
 */
inline Eigen::MatrixXd element_gram(const Mesh& mesh, const DofMap& map, int e)
{
    static const TriangleRule rule = tri_rule(RuleKind::standard);
    const int n = map.local_size;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    const auto p = mesh.corners(e);
    const double jac = 2.0 * mesh.area(e);
    if (map.kind == SpaceKind::rt0) {
        for (int q = 0; q < rule.size(); ++q) {
            const auto b = rt0_basis(p, map.element_signs[e], map_to_element(p, rule.points[q]));
            const double w = jac * rule.weights[q];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) g(i, j) += w * (b.div[i] * b.div[j] + b.value[i].dot(b.value[j]));
        }
        return g;
    }
    const auto dl = barycentric_gradients(p);
    const bool with_mass = map.kind == SpaceKind::broken_p0 || map.kind == SpaceKind::broken_p1;
    for (int q = 0; q < rule.size(); ++q) {
        const auto b = scalar_basis(map.kind, dl, rule.points[q]);
        const double w = jac * rule.weights[q];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                g(i, j) += w * (b.grad[i].dot(b.grad[j]) + (with_mass ? b.value[i] * b.value[j] : 0.0));
    }
    return g;
}

/**
 * Symmetric positive definite Riesz (Gram) matrix of a test space with its factorization.
 * Immutable after construction; solve() may be called concurrently.
 */
class RieszSystem {
public:
    enum class Structure { global_sparse, element_block_diagonal };

    static RieszSystem global(Eigen::SparseMatrix<double> matrix)
    {
        RieszSystem r;
        r._structure = Structure::global_sparse;
        r._matrix = std::move(matrix);
        r._global = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
        if (r._matrix.rows() > 0) {
            r._global->compute(r._matrix);
            if (r._global->info() != Eigen::Success) throw fespace_error("Riesz matrix is not positive definite");
        }
        return r;
    }

    /// `blocks[e]` acts on the dofs offsets[e] .. offsets[e] + blocks[e].rows().
    static RieszSystem block_diagonal(std::vector<Eigen::MatrixXd> blocks)
    {
        RieszSystem r;
        r._structure = Structure::element_block_diagonal;
        std::vector<Eigen::Triplet<double>> triplets;
        int offset = 0;
        for (const auto& b : blocks) {
            r._offsets.push_back(offset);
            Eigen::LLT<Eigen::MatrixXd> llt(b);
            if (llt.info() != Eigen::Success) throw fespace_error("Riesz block is not positive definite");
            r._blocks.push_back(std::move(llt));
            for (int i = 0; i < b.rows(); ++i)
                for (int j = 0; j < b.cols(); ++j) triplets.emplace_back(offset + i, offset + j, b(i, j));
            offset += static_cast<int>(b.rows());
        }
        r._matrix.resize(offset, offset);
        r._matrix.setFromTriplets(triplets.begin(), triplets.end());
        return r;
    }

    Structure structure() const { return _structure; }
    int dim() const { return static_cast<int>(_matrix.rows()); }
    const Eigen::SparseMatrix<double>& matrix() const { return _matrix; }

    Eigen::VectorXd solve(const Eigen::VectorXd& r) const
    {
        if (r.size() != dim()) throw fespace_error("residual vector has wrong dimension");
        if (dim() == 0) return Eigen::VectorXd();
        if (_structure == Structure::global_sparse) {
            Eigen::VectorXd x = _global->solve(r);
            if (_global->info() != Eigen::Success) throw fespace_error("Riesz solve failed");
            return x;
        }
        Eigen::VectorXd x(r.size());
        for (std::size_t b = 0; b < _blocks.size(); ++b) {
            const int n = static_cast<int>(_blocks[b].rows());
            x.segment(_offsets[b], n) = _blocks[b].solve(r.segment(_offsets[b], n));
        }
        return x;
    }

private:
    Structure _structure = Structure::global_sparse;
    Eigen::SparseMatrix<double> _matrix;
    std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> _global;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> _blocks;
    std::vector<int> _offsets;
};

inline RieszSystem assemble_riesz(const DofMap& map, const Mesh& mesh)
{
    const bool broken = map.kind == SpaceKind::broken_p0 || map.kind == SpaceKind::broken_p1;
    if (broken) {
        std::vector<Eigen::MatrixXd> blocks;
        blocks.reserve(mesh.num_elements());
        for (int e = 0; e < mesh.num_elements(); ++e) blocks.push_back(element_gram(mesh, map, e));
        return RieszSystem::block_diagonal(std::move(blocks));
    }
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.num_elements() * map.local_size * map.local_size);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const Eigen::MatrixXd g = element_gram(mesh, map, e);
        const auto& dofs = map.element_dofs[e];
        for (int i = 0; i < map.local_size; ++i) {
            if (dofs[i] < 0) continue;
            for (int j = 0; j < map.local_size; ++j)
                if (dofs[j] >= 0) triplets.emplace_back(dofs[i], dofs[j], g(i, j));
        }
    }
    Eigen::SparseMatrix<double> p(map.dim, map.dim);
    p.setFromTriplets(triplets.begin(), triplets.end());
    return RieszSystem::global(std::move(p));
}

struct DualNormResult {
    double value = 0.0;
    Eigen::VectorXd representative;  ///< coefficients of the discrete Riesz representative, P^{-1} r
};

/// sqrt(r . P^{-1} r) together with P^{-1} r.
inline DualNormResult dual_norm(const RieszSystem& riesz, const Eigen::VectorXd& r)
{
    DualNormResult out;
    out.representative = riesz.solve(r);
    out.value = std::sqrt(std::max(0.0, r.dot(out.representative)));
    return out;
}

/**
 * A mesh together with its test spaces. Dof maps, element Gram blocks and factorized Riesz
 * systems are built on first use and shared by every rule set on this mesh.
 */
class TestSpaces {
public:
    explicit TestSpaces(Mesh mesh) : _mesh(std::move(mesh)) {}

    TestSpaces(const TestSpaces&) = delete;
    TestSpaces& operator=(const TestSpaces&) = delete;

    const Mesh& mesh() const { return _mesh; }

    const DofMap& dofs(SpaceKind kind) const { return entry(kind).dofs; }
    const RieszSystem& riesz(SpaceKind kind) const { return entry(kind).riesz; }
    const std::vector<Eigen::MatrixXd>& element_grams(SpaceKind kind) const { return entry(kind).grams; }

private:
    struct Entry {
        std::once_flag once;
        DofMap dofs;
        std::vector<Eigen::MatrixXd> grams;
        RieszSystem riesz;
    };

    const Entry& entry(SpaceKind kind) const
    {
        auto& en = _entries[static_cast<int>(kind)];
        std::call_once(en.once, [&] {
            en.dofs = build_space(_mesh, kind);
            en.grams.reserve(_mesh.num_elements());
            for (int e = 0; e < _mesh.num_elements(); ++e) en.grams.push_back(element_gram(_mesh, en.dofs, e));
            en.riesz = assemble_riesz(en.dofs, _mesh);
        });
        return en;
    }

    Mesh _mesh;
    mutable std::array<Entry, all_space_kinds.size()> _entries;
};

/**
 * Element-wise L2 projection onto P^k (k = 0 or 1) of values sampled at volume quadrature
 * points, using the discrete inner product of the rule. Returns the projection at the same points.
 */
inline std::vector<double> project_values(const QuadraturePoints& qp, std::span<const double> values, int k)
{
    if (k != 0 && k != 1) throw std::invalid_argument("projection degree must be 0 or 1");
    const int nq = qp.volume_per_element();
    const int ne = qp.num_volume() / nq;
    std::vector<double> out(values.size());
    const auto& rule = qp.volume_rule;
    Eigen::Matrix3d mass_ref = Eigen::Matrix3d::Zero();
    for (int q = 0; q < nq; ++q)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) mass_ref(i, j) += rule.weights[q] * rule.points[q][i] * rule.points[q][j];
    const Eigen::Matrix3d mass_ref_inv = mass_ref.inverse();
    double ref_area = 0.0;
    for (double w : rule.weights) ref_area += w;
    for (int e = 0; e < ne; ++e) {
        const int base = e * nq;
        if (k == 0) {
            double num = 0.0;
            for (int q = 0; q < nq; ++q) num += rule.weights[q] * values[base + q];
            const double mean = num / ref_area;
            for (int q = 0; q < nq; ++q) out[base + q] = mean;
        } else {
            Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
            for (int q = 0; q < nq; ++q)
                for (int i = 0; i < 3; ++i) rhs[i] += rule.weights[q] * rule.points[q][i] * values[base + q];
            const Eigen::Vector3d c = mass_ref_inv * rhs;
            for (int q = 0; q < nq; ++q) {
                const auto& l = rule.points[q];
                out[base + q] = c[0] * l[0] + c[1] * l[1] + c[2] * l[2];
            }
        }
    }
    return out;
}

/**
 * Element-wise L2 projection of a function onto P^k, stored as coefficients in the barycentric
 * basis (k = 1) or as element constants (k = 0).
 */
struct ElementPolynomials {
    int degree = 0;
    std::vector<std::array<double, 3>> coeffs;

    double evaluate(int e, const std::array<double, 3>& bary) const
    {
        if (degree == 0) return coeffs[e][0];
        return coeffs[e][0] * bary[0] + coeffs[e][1] * bary[1] + coeffs[e][2] * bary[2];
    }
};

inline ElementPolynomials project_pk(const Mesh& mesh, const TriangleRule& rule,
                                     const std::function<double(const Point&)>& f, int k)
{
    if (k != 0 && k != 1) throw std::invalid_argument("projection degree must be 0 or 1");
    ElementPolynomials out;
    out.degree = k;
    out.coeffs.assign(mesh.num_elements(), {0.0, 0.0, 0.0});
    Eigen::Matrix3d mass_ref = Eigen::Matrix3d::Zero();
    double ref_area = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
        ref_area += rule.weights[q];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) mass_ref(i, j) += rule.weights[q] * rule.points[q][i] * rule.points[q][j];
    }
    const Eigen::Matrix3d mass_ref_inv = mass_ref.inverse();
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto p = mesh.corners(e);
        Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
        double mean = 0.0;
        for (int q = 0; q < rule.size(); ++q) {
            const double fv = f(map_to_element(p, rule.points[q]));
            mean += rule.weights[q] * fv;
            for (int i = 0; i < 3; ++i) rhs[i] += rule.weights[q] * rule.points[q][i] * fv;
        }
        if (k == 0) {
            out.coeffs[e][0] = mean / ref_area;
        } else {
            const Eigen::Vector3d c = mass_ref_inv * rhs;
            out.coeffs[e] = {c[0], c[1], c[2]};
        }
    }
    return out;
}

/// Facet means of a boundary function.
inline std::vector<double> project_p0_facet(const Mesh& mesh, const SegmentRule& rule,
                                            const std::function<double(const Point&)>& f)
{
    std::vector<double> out(mesh.num_boundary_facets(), 0.0);
    for (int k = 0; k < mesh.num_boundary_facets(); ++k) {
        const auto& fc = mesh.boundary_facets()[k];
        const Point& a = mesh.vertices()[fc.vertices[0]];
        const Point& b = mesh.vertices()[fc.vertices[1]];
        double s = 0.0, wsum = 0.0;
        for (int q = 0; q < rule.size(); ++q) {
            s += rule.weights[q] * f(a + rule.points[q] * (b - a));
            wsum += rule.weights[q];
        }
        out[k] = s / wsum;
    }
    return out;
}

}  // namespace nnest

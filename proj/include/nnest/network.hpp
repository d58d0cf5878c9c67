#pragma once

#include <nnest/jet.hpp>
#include <nnest/parallel.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace nnest {

/**
 * Fully connected tanh network R^2 -> R with widths [2, N, ..., N, 1]. Parameters live in one
 * flat vector, layer by layer, each layer storing its weight matrix (row-major, out x in)
 * followed by its bias.
 */
struct MlpParams {
    std::vector<int> widths;
    std::uint64_t seed = 0;
    Eigen::VectorXd flat;

    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    int num_affine() const { return static_cast<int>(widths.size()) - 1; }
    int hidden_layers() const { return num_affine() - 1; }

    int offset(int layer) const
    {
        int o = 0;
        for (int l = 0; l < layer; ++l) o += widths[l + 1] * (widths[l] + 1);
        return o;
    }

    Eigen::Map<const RowMatrix> weight(int layer) const
    {
        return {flat.data() + offset(layer), widths[layer + 1], widths[layer]};
    }
    Eigen::Map<const Eigen::VectorXd> bias(int layer) const
    {
        return {flat.data() + offset(layer) + widths[layer + 1] * widths[layer], widths[layer + 1]};
    }
    Eigen::Map<RowMatrix> weight(int layer)
    {
        return {flat.data() + offset(layer), widths[layer + 1], widths[layer]};
    }
    Eigen::Map<Eigen::VectorXd> bias(int layer)
    {
        return {flat.data() + offset(layer) + widths[layer + 1] * widths[layer], widths[layer + 1]};
    }

    int size() const { return static_cast<int>(flat.size()); }
};

inline int param_count(int layers, int width) { return 3 * width + (layers - 1) * (width * width + width) + width + 1; }

inline std::vector<int> mlp_widths(int layers, int width)
{
    std::vector<int> w{2};
    for (int l = 0; l < layers; ++l) w.push_back(width);
    w.push_back(1);
    return w;
}

/// Glorot-uniform weights, zero biases.
inline MlpParams init(int layers, int width, std::uint64_t seed)
{
    if (layers < 1 || width < 1) throw std::invalid_argument("network needs at least one layer of width >= 1");
    MlpParams p;
    p.widths = mlp_widths(layers, width);
    p.seed = seed;
    p.flat = Eigen::VectorXd::Zero(param_count(layers, width));
    std::mt19937_64 rng(seed);
    for (int l = 0; l < p.num_affine(); ++l) {
        const double a = std::sqrt(6.0 / (p.widths[l] + p.widths[l + 1]));
        std::uniform_real_distribution<double> dist(-a, a);
        auto w = p.weight(l);
        for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    }
    return p;
}

namespace detail {
// Six channels per neuron and point: value, d/dx, d/dy, d2/dx2, d2/dxdy, d2/dy2.
struct JetBlock {
    std::array<Eigen::MatrixXd, 6> c;
};

inline JetBlock input_block(std::span<const Eigen::Vector2d> points)
{
    const int n = static_cast<int>(points.size());
    JetBlock b;
    for (auto& m : b.c) m = Eigen::MatrixXd::Zero(2, n);
    for (int i = 0; i < n; ++i) {
        b.c[0].col(i) = points[i];
        b.c[1](0, i) = 1.0;
        b.c[2](1, i) = 1.0;
    }
    return b;
}

inline JetBlock affine(const MlpParams& p, int l, const JetBlock& a)
{
    JetBlock z;
    const auto w = p.weight(l);
    for (int k = 0; k < 6; ++k) z.c[k] = w * a.c[k];
    z.c[0].colwise() += p.bias(l);
    return z;
}

inline JetBlock activate(const JetBlock& z)
{
    JetBlock a;
    const Eigen::ArrayXXd t = z.c[0].array().tanh();
    const Eigen::ArrayXXd s1 = 1.0 - t * t;
    const Eigen::ArrayXXd s2 = -2.0 * t * s1;
    const auto gx = z.c[1].array(), gy = z.c[2].array();
    a.c[0] = t.matrix();
    a.c[1] = (s1 * gx).matrix();
    a.c[2] = (s1 * gy).matrix();
    a.c[3] = (s2 * gx * gx + s1 * z.c[3].array()).matrix();
    a.c[4] = (s2 * gx * gy + s1 * z.c[4].array()).matrix();
    a.c[5] = (s2 * gy * gy + s1 * z.c[5].array()).matrix();
    return a;
}

/// Cotangent of the pre-activation channels given the cotangent of the activation channels.
inline JetBlock activate_pullback(const JetBlock& z, const JetBlock& ca)
{
    const Eigen::ArrayXXd t = z.c[0].array().tanh();
    const Eigen::ArrayXXd s1 = 1.0 - t * t;
    const Eigen::ArrayXXd s2 = -2.0 * t * s1;
    const Eigen::ArrayXXd s3 = (6.0 * t * t - 2.0) * s1;
    const auto gx = z.c[1].array(), gy = z.c[2].array();
    const auto hxx = z.c[3].array(), hxy = z.c[4].array(), hyy = z.c[5].array();
    const auto cv = ca.c[0].array(), cx = ca.c[1].array(), cy = ca.c[2].array();
    const auto cxx = ca.c[3].array(), cxy = ca.c[4].array(), cyy = ca.c[5].array();
    JetBlock cz;
    cz.c[0] = (cv * s1 + (cx * gx + cy * gy + cxx * hxx + cxy * hxy + cyy * hyy) * s2 +
               (cxx * gx * gx + cxy * gx * gy + cyy * gy * gy) * s3)
                  .matrix();
    cz.c[1] = (cx * s1 + (2.0 * cxx * gx + cxy * gy) * s2).matrix();
    cz.c[2] = (cy * s1 + (2.0 * cyy * gy + cxy * gx) * s2).matrix();
    cz.c[3] = (cxx * s1).matrix();
    cz.c[4] = (cxy * s1).matrix();
    cz.c[5] = (cyy * s1).matrix();
    return cz;
}

inline void write_jets(const JetBlock& out, std::span<Jet2> jets)
{
    for (std::size_t i = 0; i < jets.size(); ++i) {
        Jet2& j = jets[i];
        j.value = out.c[0](0, i);
        j.grad = Eigen::Vector2d(out.c[1](0, i), out.c[2](0, i));
        j.hess = {out.c[3](0, i), out.c[4](0, i), out.c[5](0, i)};
    }
}

inline constexpr int chunk_size = 512;

inline int num_chunks(std::size_t n) { return static_cast<int>((n + chunk_size - 1) / chunk_size); }
}  // namespace detail

/// Value, input gradient and input Hessian of the network at many points.
inline std::vector<Jet2> forward_jets(const MlpParams& p, std::span<const Eigen::Vector2d> points)
{
    std::vector<Jet2> out(points.size());
    parallel_chunks(detail::num_chunks(points.size()), [&](int c) {
        const std::size_t begin = std::size_t(c) * detail::chunk_size;
        const std::size_t len = std::min<std::size_t>(detail::chunk_size, points.size() - begin);
        detail::JetBlock a = detail::input_block(points.subspan(begin, len));
        for (int l = 0; l < p.num_affine(); ++l) {
            detail::JetBlock z = detail::affine(p, l, a);
            a = l + 1 < p.num_affine() ? detail::activate(z) : std::move(z);
        }
        detail::write_jets(a, std::span<Jet2>(out).subspan(begin, len));
    });
    return out;
}

inline Jet2 forward_jet(const MlpParams& p, const Eigen::Vector2d& x)
{
    return forward_jets(p, std::span<const Eigen::Vector2d>(&x, 1))[0];
}

/**
 * Gradient with respect to the flat parameters of sum_i <cotangents[i], jet(points[i])>, where
 * the pairing is channel-wise. Chunks are reduced in a fixed order.
 */
inline Eigen::VectorXd jet_vjp(const MlpParams& p, std::span<const Eigen::Vector2d> points,
                               std::span<const Jet2> cotangents)
{
    if (points.size() != cotangents.size()) throw std::invalid_argument("points and cotangents differ in size");
    const int nc = detail::num_chunks(points.size());
    std::vector<Eigen::VectorXd> partial(nc);
    parallel_chunks(nc, [&](int c) {
        const std::size_t begin = std::size_t(c) * detail::chunk_size;
        const std::size_t len = std::min<std::size_t>(detail::chunk_size, points.size() - begin);
        const int L = p.num_affine();
        std::vector<detail::JetBlock> inputs(L), pre(L);
        detail::JetBlock a = detail::input_block(points.subspan(begin, len));
        for (int l = 0; l < L; ++l) {
            inputs[l] = a;
            pre[l] = detail::affine(p, l, a);
            if (l + 1 < L) a = detail::activate(pre[l]);
        }
        detail::JetBlock cz;
        for (auto& m : cz.c) m.resize(1, static_cast<int>(len));
        for (std::size_t i = 0; i < len; ++i) {
            const Jet2& ct = cotangents[begin + i];
            cz.c[0](0, i) = ct.value;
            cz.c[1](0, i) = ct.grad.x();
            cz.c[2](0, i) = ct.grad.y();
            cz.c[3](0, i) = ct.hess[0];
            cz.c[4](0, i) = ct.hess[1];
            cz.c[5](0, i) = ct.hess[2];
        }
        MlpParams g;
        g.widths = p.widths;
        g.flat = Eigen::VectorXd::Zero(p.size());
        for (int l = L - 1; l >= 0; --l) {
            auto gw = g.weight(l);
            for (int k = 0; k < 6; ++k) gw.noalias() += cz.c[k] * inputs[l].c[k].transpose();
            g.bias(l) = cz.c[0].rowwise().sum();
            if (l == 0) break;
            detail::JetBlock ca;
            for (int k = 0; k < 6; ++k) ca.c[k] = p.weight(l).transpose() * cz.c[k];
            cz = detail::activate_pullback(pre[l - 1], ca);
        }
        partial[c] = std::move(g.flat);
    });
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
    for (const auto& v : partial) grad += v;
    return grad;
}

/// The network as a field; the parameters are copied.
inline SmoothField as_field(const MlpParams& p)
{
    return [p](const Eigen::Vector2d& x) { return forward_jet(p, x); };
}

}  // namespace nnest

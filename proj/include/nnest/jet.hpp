#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>

namespace nnest {

/**
 * Value, spatial gradient and spatial Hessian of a scalar field at one point.
 * The Hessian is stored as its three independent entries (xx, xy, yy).
 */
struct Jet2 {
    double value = 0.0;
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    std::array<double, 3> hess{0.0, 0.0, 0.0};

    double laplacian() const { return hess[0] + hess[2]; }

    Eigen::Matrix2d hessian() const
    {
        Eigen::Matrix2d h;
        h << hess[0], hess[1], hess[1], hess[2];
        return h;
    }

    Jet2& operator+=(const Jet2& o)
    {
        value += o.value;
        grad += o.grad;
        for (int i = 0; i < 3; ++i) hess[i] += o.hess[i];
        return *this;
    }

    Jet2& operator*=(double s)
    {
        value *= s;
        grad *= s;
        for (auto& h : hess) h *= s;
        return *this;
    }

    friend Jet2 operator+(Jet2 a, const Jet2& b) { return a += b; }
    friend Jet2 operator-(Jet2 a, const Jet2& b) { return a += (Jet2(b) *= -1.0); }
    friend Jet2 operator*(double s, Jet2 a) { return a *= s; }
};

/// A smooth scalar field evaluated together with its first and second derivatives.
using SmoothField = std::function<Jet2(const Eigen::Vector2d&)>;

/// Product rule for second-order jets.
inline Jet2 multiply(const Jet2& a, const Jet2& b)
{
    Jet2 r;
    r.value = a.value * b.value;
    r.grad = a.value * b.grad + b.value * a.grad;
    r.hess[0] = a.value * b.hess[0] + 2.0 * a.grad.x() * b.grad.x() + b.value * a.hess[0];
    r.hess[1] = a.value * b.hess[1] + a.grad.x() * b.grad.y() + a.grad.y() * b.grad.x() + b.value * a.hess[1];
    r.hess[2] = a.value * b.hess[2] + 2.0 * a.grad.y() * b.grad.y() + b.value * a.hess[2];
    return r;
}

/**
 * Adjoint of multiply() with respect to its second argument: given the cotangent of the product
 * and the (fixed) first factor, returns the cotangent of the second factor.
 */
inline Jet2 multiply_pullback(const Jet2& fixed, const Jet2& product_cotangent)
{
    const auto& c = product_cotangent;
    const auto& a = fixed;
    Jet2 r;
    r.value = c.value * a.value + c.grad.dot(a.grad) + c.hess[0] * a.hess[0] + c.hess[1] * a.hess[1] +
              c.hess[2] * a.hess[2];
    r.grad.x() = c.grad.x() * a.value + 2.0 * c.hess[0] * a.grad.x() + c.hess[1] * a.grad.y();
    r.grad.y() = c.grad.y() * a.value + 2.0 * c.hess[2] * a.grad.y() + c.hess[1] * a.grad.x();
    for (int i = 0; i < 3; ++i) r.hess[i] = c.hess[i] * a.value;
    return r;
}

}  // namespace nnest

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>

#include "nad/types.hpp"

namespace nad {

// Truncated multivariate Taylor arithmetic. Coefficients follow the Taylor
// convention (coefficient at multi-index i is the mixed partial divided by
// prod_j i_j!), so multiplication is a plain truncated convolution and the
// box never exceeds kMaxJetSize entries for any DerivOrder within the cap.
inline constexpr int kMaxJetSize = 32;

struct JetShape {
    std::array<int, kMaxDims> ord{};  // per-axis truncation order
    int dims = 0;

    JetShape() = default;
    explicit JetShape(const DerivOrder& d) : dims(d.dims()) {
        for (int i = 0; i < dims; ++i) ord[i] = d[i];
        if (size() > kMaxJetSize) throw std::invalid_argument("JetShape: box too large");
    }
    int extent(int axis) const { return axis < dims ? ord[axis] + 1 : 1; }
    int size() const {
        int s = 1;
        for (int i = 0; i < dims; ++i) s *= ord[i] + 1;
        return s;
    }
    /// Stride of `axis` in the flattened box (axis 0 fastest).
    int stride(int axis) const {
        int st = 1;
        for (int a = 0; a < axis; ++a) st *= extent(a);
        return st;
    }
    int flat(const DerivOrder& d) const {
        int idx = 0;
        for (int a = 0; a < dims; ++a) {
            if (d[a] > ord[a]) throw std::invalid_argument("JetShape: order outside box");
            idx += d[a] * stride(a);
        }
        return idx;
    }
    int top_index() const { return size() - 1; }
    int total_order() const {
        int t = 0;
        for (int i = 0; i < dims; ++i) t += ord[i];
        return t;
    }
    /// prod_j i_j! for the multi-index at a flat position.
    double factorial_at(int flat_idx) const {
        double f = 1.0;
        for (int a = 0; a < dims; ++a) {
            f *= factorial(flat_idx % extent(a));
            flat_idx /= extent(a);
        }
        return f;
    }
    bool operator==(const JetShape& o) const {
        if (dims != o.dims) return false;
        for (int i = 0; i < dims; ++i)
            if (ord[i] != o.ord[i]) return false;
        return true;
    }
};

namespace detail {

/// r += a (*) b, truncated convolution over the box.
inline void box_mul_acc(const JetShape& s, const double* a, const double* b, double* r) {
    const int e0 = s.extent(0), e1 = s.extent(1), e2 = s.extent(2);
    for (int a2 = 0; a2 < e2; ++a2)
        for (int a1 = 0; a1 < e1; ++a1)
            for (int a0 = 0; a0 < e0; ++a0) {
                const double av = a[a0 + e0 * (a1 + e1 * a2)];
                if (av == 0.0) continue;
                for (int b2 = 0; b2 < e2 - a2; ++b2)
                    for (int b1 = 0; b1 < e1 - a1; ++b1)
                        for (int b0 = 0; b0 < e0 - a0; ++b0)
                            r[(a0 + b0) + e0 * ((a1 + b1) + e1 * (a2 + b2))] +=
                                av * b[b0 + e0 * (b1 + e1 * b2)];
            }
}

/// r = adjoint of truncated multiplication by a: r_j = sum_i a_i * u_{i+j}.
inline void box_mul_transpose(const JetShape& s, const double* a, const double* u,
                              double* r) {
    const int e0 = s.extent(0), e1 = s.extent(1), e2 = s.extent(2);
    for (int b2 = 0; b2 < e2; ++b2)
        for (int b1 = 0; b1 < e1; ++b1)
            for (int b0 = 0; b0 < e0; ++b0) {
                double acc = 0.0;
                for (int a2 = 0; a2 < e2 - b2; ++a2)
                    for (int a1 = 0; a1 < e1 - b1; ++a1)
                        for (int a0 = 0; a0 < e0 - b0; ++a0)
                            acc += a[a0 + e0 * (a1 + e1 * a2)] *
                                   u[(a0 + b0) + e0 * ((a1 + b1) + e1 * (a2 + b2))];
                r[b0 + e0 * (b1 + e1 * b2)] = acc;
            }
}

}  // namespace detail

struct Jet {
    JetShape shape;
    std::array<double, kMaxJetSize> c{};

    Jet() = default;
    explicit Jet(const JetShape& s) : shape(s) {}

    static Jet constant(const JetShape& s, double v) {
        Jet j(s);
        j.c[0] = v;
        return j;
    }
    /// Seed for the coordinate of `axis`: value x, unit first-order coefficient.
    static Jet variable(const JetShape& s, int axis, double x) {
        Jet j(s);
        j.c[0] = x;
        if (s.extent(axis) > 1) j.c[s.stride(axis)] = 1.0;
        return j;
    }

    double value() const { return c[0]; }
    /// Mixed partial for a sub-order within the box (Taylor coeff times factorials).
    double derivative(const DerivOrder& d) const {
        double f = 1.0;
        for (int a = 0; a < shape.dims; ++a) f *= factorial(d[a]);
        return c[shape.flat(d)] * f;
    }

    Jet& operator+=(const Jet& o) {
        for (int i = 0; i < shape.size(); ++i) c[i] += o.c[i];
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        for (int i = 0; i < shape.size(); ++i) c[i] -= o.c[i];
        return *this;
    }
    Jet& operator*=(double s) {
        for (int i = 0; i < shape.size(); ++i) c[i] *= s;
        return *this;
    }
};

inline Jet operator+(Jet a, const Jet& b) { return a += b; }
inline Jet operator-(Jet a, const Jet& b) { return a -= b; }
inline Jet operator*(Jet a, double s) { return a *= s; }

/// Truncated convolution: coefficients of the product within the box.
inline Jet jet_mul(const Jet& a, const Jet& b) {
    Jet r(a.shape);
    detail::box_mul_acc(a.shape, a.c.data(), b.c.data(), r.c.data());
    return r;
}

/// Adjoint of jet_mul in its second argument: given u = d(loss)/d(a*b) and the
/// fixed factor a, returns d(loss)/d(b).
inline Jet jet_mul_transpose(const Jet& a, const Jet& u) {
    Jet r(a.shape);
    detail::box_mul_transpose(a.shape, a.c.data(), u.c.data(), r.c.data());
    return r;
}

/// Composition g(a) for analytic g, given g's derivative values at a's constant
/// term: derivs[j] = g^(j)(a0) for j = 0..shape.total_order().
inline Jet jet_compose(const Jet& a, std::span<const double> derivs) {
    const JetShape& s = a.shape;
    const int order = s.total_order();
    if (static_cast<int>(derivs.size()) < order + 1)
        throw std::invalid_argument("jet_compose: not enough derivative values");
    Jet nil = a;
    nil.c[0] = 0.0;
    Jet r = Jet::constant(s, derivs[0]);
    Jet pw = Jet::constant(s, 1.0);
    double invfact = 1.0;
    for (int j = 1; j <= order; ++j) {
        pw = jet_mul(pw, nil);
        invfact /= j;
        Jet term = pw;
        term *= derivs[j] * invfact;
        r += term;
    }
    return r;
}

/// Jet of the univariate monomial t^p along one axis, evaluated at t = x.
inline Jet jet_axis_monomial(const JetShape& s, int axis, double x, int p) {
    Jet j(s);
    const int step = s.stride(axis);
    const int top = s.extent(axis) - 1;
    for (int i = 0; i <= std::min(p, top); ++i)
        j.c[i * step] = binomial(p, i) * std::pow(x, p - i);
    return j;
}

}  // namespace nad

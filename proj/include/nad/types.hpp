#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>

namespace nad {

inline constexpr int kMaxDims = 3;
inline constexpr int kMaxTotalOrder = 6;

/// Point in the unit domain, up to kMaxDims axes.
struct Coords {
    std::array<double, kMaxDims> v{};
    int n = 0;

    Coords() = default;
    Coords(std::initializer_list<double> xs) {
        if (xs.size() < 1 || xs.size() > kMaxDims)
            throw std::invalid_argument("Coords: dims must be 1..3");
        n = static_cast<int>(xs.size());
        int i = 0;
        for (double x : xs) v[i++] = x;
    }
    static Coords from(std::span<const double> xs) {
        if (xs.size() < 1 || xs.size() > kMaxDims)
            throw std::invalid_argument("Coords: dims must be 1..3");
        Coords c;
        c.n = static_cast<int>(xs.size());
        for (int i = 0; i < c.n; ++i) c.v[i] = xs[i];
        return c;
    }
    int dims() const { return n; }
    double operator[](int i) const { return v[i]; }
    double& operator[](int i) { return v[i]; }
    const double* data() const { return v.data(); }
};

/// Per-axis derivative multi-order. Total order is capped so that the
/// truncated-Taylor machinery stays exact for every supported request.
struct DerivOrder {
    std::array<int, kMaxDims> k{};
    int n = 0;

    DerivOrder() = default;
    DerivOrder(std::initializer_list<int> ks) {
        if (ks.size() < 1 || ks.size() > kMaxDims)
            throw std::invalid_argument("DerivOrder: dims must be 1..3");
        n = static_cast<int>(ks.size());
        int i = 0;
        for (int o : ks) k[i++] = o;
        validate();
    }
    static DerivOrder uniform(int dims, int order) {
        if (dims < 1 || dims > kMaxDims)
            throw std::invalid_argument("DerivOrder: dims must be 1..3");
        DerivOrder d;
        d.n = dims;
        for (int i = 0; i < dims; ++i) d.k[i] = order;
        d.validate();
        return d;
    }
    static DerivOrder zero(int dims) { return uniform(dims, 0); }

    void validate() const {
        int t = 0;
        for (int i = 0; i < n; ++i) {
            if (k[i] < 0) throw std::invalid_argument("DerivOrder: negative order");
            t += k[i];
        }
        if (t > kMaxTotalOrder)
            throw std::invalid_argument("DerivOrder: total order exceeds " +
                                        std::to_string(kMaxTotalOrder));
    }
    int dims() const { return n; }
    int total() const {
        int t = 0;
        for (int i = 0; i < n; ++i) t += k[i];
        return t;
    }
    int operator[](int i) const { return k[i]; }
    bool is_zero() const { return total() == 0; }
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

inline double binomial(int n, int j) {
    double r = 1.0;
    for (int i = 1; i <= j; ++i) r = r * (n - j + i) / i;
    return r;
}

}  // namespace nad

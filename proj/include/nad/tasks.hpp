#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nad/evaluator.hpp"
#include "nad/mc.hpp"
#include "nad/signals.hpp"
#include "nad/training.hpp"
#include "nad/types.hpp"

namespace nad {

// Downstream use of a learned antiderivative: differentiate it back to the
// signal, or filter the signal by differencing it on a B-spline knot stencil.

/// Uniform tensor grid over [margin, 1-margin]^d, endpoints included.
struct EvalGrid {
    int resolution = 256;
    double margin = 0.05;

    void validate() const {
        if (resolution < 2) throw std::invalid_argument("EvalGrid: resolution must be >= 2");
        if (margin < 0.0 || margin >= 0.5)
            throw std::invalid_argument("EvalGrid: margin must be in [0, 0.5)");
    }
    double axis_point(int i) const {
        return margin + (1.0 - 2.0 * margin) * i / (resolution - 1);
    }
    long total_points(int d) const {
        long n = 1;
        for (int a = 0; a < d; ++a) n *= resolution;
        return n;
    }
    Coords point(int d, long flat) const {
        Coords x;
        x.n = d;
        for (int a = 0; a < d; ++a) {
            x.v[static_cast<size_t>(a)] = axis_point(static_cast<int>(flat % resolution));
            flat /= resolution;
        }
        return x;
    }
};

/// Mean over the grid of the squared channel norm of (mixed partial of A - f).
inline double reconstruction_error(const AntiderivativeEvaluator& model, const Signal& sig,
                                   const EvalGrid& grid) {
    grid.validate();
    if (model.d != sig.dims() || model.m != sig.channels())
        throw std::invalid_argument("reconstruction_error: model/signal mismatch");
    const int d = model.d;
    const DerivOrder ord = DerivOrder::uniform(d, model.k);
    const long total = grid.total_points(d);
    std::vector<double> f(static_cast<size_t>(model.m));
    double acc = 0.0;
    for (long i = 0; i < total; ++i) {
        const Coords x = grid.point(d, i);
        const std::vector<double> got = model.mixed(x, ord);
        sig.eval(x.data(), f.data());
        for (int c = 0; c < model.m; ++c) {
            const double r = got[static_cast<size_t>(c)] - f[static_cast<size_t>(c)];
            acc += r * r;
        }
    }
    return acc / static_cast<double>(total);
}

/// Half-width of the order-k B-spline whose variance matches a Gaussian of
/// width sigma: the k-fold convolution of a box of half-width w has variance
/// k w^2 / 3.
inline double gaussian_match_halfwidth(double sigma, int k) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_match_halfwidth: sigma");
    if (k < 1) throw std::invalid_argument("gaussian_match_halfwidth: k");
    return sigma * std::sqrt(3.0 / k);
}

struct FilterKernel {
    int order = 1;        // B-spline order, piecewise degree order-1
    double half_width = 0.1;

    void validate() const {
        if (order < 1) throw std::invalid_argument("FilterKernel: order must be >= 1");
        if (half_width <= 0.0) throw std::invalid_argument("FilterKernel: half_width");
    }
};

/// (f * B_k)(x) from the k-fold antiderivative alone: per axis the k-th
/// distributional derivative of the order-k B-spline is a (k+1)-point Dirac
/// comb, so the convolution collapses to a signed sum of antiderivative
/// values on the knot lattice around x. Knots of wide kernels land outside
/// the unit domain; evaluators are total functions there (closed forms
/// extend exactly, learned fields extrapolate), and clamping instead would
/// break the identity for k >= 2 where the antiderivative keeps growing
/// past the signal support.
inline std::vector<double> spline_filter(const AntiderivativeEvaluator& model, const Coords& x,
                                         const FilterKernel& kern) {
    kern.validate();
    if (kern.order != model.k)
        throw std::invalid_argument("spline_filter: kernel order must match the evaluator");
    const int d = model.d;
    if (x.dims() != d) throw std::invalid_argument("spline_filter: dims mismatch");
    const Stencil st = fd_stencil(kern.order, kern.half_width);
    const int per_axis = kern.order + 1;
    int combos = 1;
    for (int a = 0; a < d; ++a) combos *= per_axis;

    std::vector<double> acc(static_cast<size_t>(model.m), 0.0);
    for (int s = 0; s < combos; ++s) {
        int rem = s;
        double w = 1.0;
        Coords q = x;
        for (int a = 0; a < d; ++a) {
            const int j = rem % per_axis;
            rem /= per_axis;
            w *= st.weights[static_cast<size_t>(j)];
            q.v[static_cast<size_t>(a)] = x[a] + st.offsets[static_cast<size_t>(j)];
        }
        const std::vector<double> v = model.value(q);
        for (int c = 0; c < model.m; ++c) acc[static_cast<size_t>(c)] += w * v[static_cast<size_t>(c)];
    }
    return acc;
}

/// Monte Carlo reference for the same convolution, sampling the kernel and
/// evaluating the raw signal. Signals are total functions (grid signals pin
/// queries beyond the outer cell centers to the edge value themselves).
inline std::vector<double> mc_filter_oracle(const Signal& sig, const Coords& x,
                                            const FilterKernel& kern, int n, McSampler& sampler) {
    kern.validate();
    return mc_convolve(sig.view(), x, KernelSpec::bspline(kern.order, kern.half_width), n,
                       sampler);
}

/// Mean over an interior grid of the squared channel norm of
/// (spline_filter(model) - mc_filter_oracle(sig)). The grid margin grows with
/// the kernel footprint so clamped evaluations stay out of the average.
inline double filter_error(const AntiderivativeEvaluator& model, const Signal& sig,
                           const EvalGrid& grid, const FilterKernel& kern, int n_oracle,
                           uint64_t seed) {
    grid.validate();
    kern.validate();
    if (model.d != sig.dims() || model.m != sig.channels())
        throw std::invalid_argument("filter_error: model/signal mismatch");
    if (n_oracle < 1) throw std::invalid_argument("filter_error: n_oracle must be >= 1");
    EvalGrid inner = grid;
    inner.margin = std::min(std::max(kern.half_width * kern.order, grid.margin), 0.45);
    const int d = model.d;
    const long total = inner.total_points(d);
    double acc = 0.0;
    for (long i = 0; i < total; ++i) {
        const Coords x = inner.point(d, i);
        McSampler sampler(d, RngStream::mix(seed, static_cast<uint64_t>(i)));
        const std::vector<double> want = mc_filter_oracle(sig, x, kern, n_oracle, sampler);
        const std::vector<double> got = spline_filter(model, x, kern);
        for (int c = 0; c < model.m; ++c) {
            const double r = got[static_cast<size_t>(c)] - want[static_cast<size_t>(c)];
            acc += r * r;
        }
    }
    return acc / static_cast<double>(total);
}

}  // namespace nad

#pragma once

#include <Eigen/Dense>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "nad/rng.hpp"
#include "nad/signals.hpp"
#include "nad/types.hpp"

namespace nad {

// ---------------------------------------------------------------------------
// Sobol sequence (direction numbers after Joe and Kuo), Gray-code order.
// Index 0 (the all-zero point) is never emitted.

class SobolSampler {
  public:
    static constexpr int kMaxSobolDims = 8;

    explicit SobolSampler(int dims, uint64_t start_index = 1) : dims_(dims) {
        if (dims < 1 || dims > kMaxSobolDims)
            throw std::invalid_argument("SobolSampler: dims must be 1..8");
        if (start_index < 1) throw std::invalid_argument("SobolSampler: index starts at 1");
        init_directions();
        seek(start_index);
    }

    /// Cranley-Patterson rotation; keeps points equidistributed but decorrelates
    /// independently shifted streams.
    void set_shift(std::span<const double> shift) {
        if (static_cast<int>(shift.size()) != dims_)
            throw std::invalid_argument("SobolSampler: shift dims mismatch");
        for (int a = 0; a < dims_; ++a) shift_[a] = shift[a] - std::floor(shift[a]);
    }

    static SobolSampler shifted(int dims, RngStream& rng) {
        SobolSampler s(dims);
        std::array<double, kMaxSobolDims> sh{};
        for (int a = 0; a < dims; ++a) sh[a] = rng.next_unit();
        s.set_shift(std::span<const double>(sh.data(), dims));
        return s;
    }

    int dims() const { return dims_; }
    uint64_t next_index() const { return idx_; }

    void next(double* out) {
        if (idx_ >= (1ull << 32)) throw std::runtime_error("SobolSampler: sequence exhausted");
        for (int a = 0; a < dims_; ++a) {
            double u = state_[a] * 0x1.0p-32 + shift_[a];
            if (u >= 1.0) u -= 1.0;
            out[a] = u;
        }
        const int bit = std::countr_zero(idx_ + 1);
        for (int a = 0; a < dims_; ++a) state_[a] ^= v_[a][bit];
        ++idx_;
    }

    std::vector<double> next_point() {
        std::vector<double> p(dims_);
        next(p.data());
        return p;
    }

  private:
    struct Poly {
        int s;
        uint32_t a;
        std::array<uint32_t, 5> m;
    };

    void init_directions() {
        // primitive polynomials and initial direction numbers for dims 2..8
        static constexpr Poly table[7] = {
            {1, 0, {1, 0, 0, 0, 0}},   {2, 1, {1, 3, 0, 0, 0}},  {3, 1, {1, 3, 1, 0, 0}},
            {3, 2, {1, 1, 1, 0, 0}},   {4, 1, {1, 1, 3, 3, 0}},  {4, 4, {1, 3, 5, 13, 0}},
            {5, 2, {1, 1, 5, 5, 17}},
        };
        for (int j = 0; j < 32; ++j) v_[0][j] = 1u << (31 - j);
        for (int a = 1; a < dims_; ++a) {
            const Poly& p = table[a - 1];
            for (int j = 0; j < p.s; ++j) v_[a][j] = p.m[j] << (31 - j);
            for (int j = p.s; j < 32; ++j) {
                uint32_t x = v_[a][j - p.s];
                x ^= x >> p.s;
                for (int t = 1; t < p.s; ++t)
                    if ((p.a >> (p.s - 1 - t)) & 1u) x ^= v_[a][j - t];
                v_[a][j] = x;
            }
        }
    }

    void seek(uint64_t index) {
        idx_ = index;
        const uint64_t g = index ^ (index >> 1);
        for (int a = 0; a < dims_; ++a) {
            uint32_t st = 0;
            for (int b = 0; b < 32; ++b)
                if ((g >> b) & 1ull) st ^= v_[a][b];
            state_[a] = st;
        }
    }

    int dims_;
    uint64_t idx_ = 1;
    std::array<double, kMaxSobolDims> shift_{};
    std::array<std::array<uint32_t, 32>, kMaxSobolDims> v_{};
    std::array<uint32_t, kMaxSobolDims> state_{};
};

// ---------------------------------------------------------------------------
// kernels

struct KernelSpec {
    enum class Family { dirac, bspline, gaussian, gaussian_derivative };

    Family family = Family::bspline;
    int order = 1;           // b-spline order, or derivative order
    double half_width = 0.0; // b-spline half-width per fold
    double sigma = 0.0;
    std::vector<double> offsets, weights;  // dirac combs

    static KernelSpec bspline(int order, double half_width) {
        if (order < 1 || half_width <= 0.0) throw std::invalid_argument("bspline kernel");
        KernelSpec k;
        k.family = Family::bspline;
        k.order = order;
        k.half_width = half_width;
        return k;
    }
    static KernelSpec gaussian(double sigma) {
        if (sigma <= 0.0) throw std::invalid_argument("gaussian kernel");
        KernelSpec k;
        k.family = Family::gaussian;
        k.sigma = sigma;
        return k;
    }
    static KernelSpec gaussian_derivative(double sigma, int order) {
        if (sigma <= 0.0 || order < 0) throw std::invalid_argument("gaussian derivative kernel");
        KernelSpec k;
        k.family = Family::gaussian_derivative;
        k.sigma = sigma;
        k.order = order;
        return k;
    }
    static KernelSpec dirac(std::vector<double> offsets, std::vector<double> weights) {
        if (offsets.size() != weights.size() || offsets.empty())
            throw std::invalid_argument("dirac kernel");
        KernelSpec k;
        k.family = Family::dirac;
        k.offsets = std::move(offsets);
        k.weights = std::move(weights);
        return k;
    }
};

/// One draw from the order-k B-spline of per-fold half-width eps: the sum of k
/// independent Uniform(-eps, eps) offsets. Support [-k eps, k eps], variance
/// k eps^2 / 3.
inline double sample_bspline_offset(int k, double eps, RngStream& rng) {
    if (k < 1 || eps <= 0.0) throw std::invalid_argument("sample_bspline_offset");
    double o = 0.0;
    for (int i = 0; i < k; ++i) o += rng.next_uniform(-eps, eps);
    return o;
}

/// Importance weight g^(k)(t)/g(t) for the Gaussian kernel g of width sigma:
/// (-1)^k sigma^-k He_k(t/sigma) with probabilists' Hermite polynomials.
inline double hermite_weight(int k, double sigma, double t) {
    if (k < 0 || sigma <= 0.0) throw std::invalid_argument("hermite_weight");
    const double u = t / sigma;
    double hm1 = 0.0, h = 1.0;  // He_0
    for (int n = 0; n < k; ++n) {
        const double nxt = u * h - n * hm1;
        hm1 = h;
        h = nxt;
    }
    return (k % 2 == 0 ? 1.0 : -1.0) * std::pow(sigma, -k) * h;
}

// ---------------------------------------------------------------------------
// repeated-integral estimator

/// Single-sum estimate of the k-fold-per-axis repeated antiderivative at x:
///   (prod_j x_j) / (n ((k-1)!)^d) * sum_i [prod_j (x_j - x_{j,i})^{k-1}] f(x_i)
/// with x_{j,i} = x_j u_{j,i} and u drawn from `sobol`. Any zero coordinate
/// makes the result exactly zero without consuming samples.
inline std::vector<double> cauchy_estimate(const SignalView& sig, const Coords& x, int k,
                                           int n, SobolSampler& sobol) {
    if (k < 1) throw std::invalid_argument("cauchy_estimate: k must be >= 1");
    if (n < 1) throw std::invalid_argument("cauchy_estimate: n must be >= 1");
    const int d = sig.d;
    if (x.dims() != d || sobol.dims() != d)
        throw std::invalid_argument("cauchy_estimate: dims mismatch");
    std::vector<double> acc(sig.m, 0.0);
    double volume = 1.0;
    for (int a = 0; a < d; ++a) volume *= x[a];
    if (volume == 0.0) return acc;
    double u[kMaxDims], pt[kMaxDims];
    std::vector<double> f(sig.m);
    for (int i = 0; i < n; ++i) {
        sobol.next(u);
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            pt[a] = x[a] * u[a];
            if (k > 1) w *= std::pow(x[a] - pt[a], k - 1);
        }
        sig.eval(pt, f.data());
        for (int c = 0; c < sig.m; ++c) acc[c] += w * f[c];
    }
    const double scale = volume / (n * std::pow(factorial(k - 1), d));
    for (double& v : acc) v *= scale;
    return acc;
}

// ---------------------------------------------------------------------------
// smooth (Gaussian-kernel) derivative estimator

/// Offsets and importance weights for one smooth-estimator evaluation.
/// Offsets are Gaussian via inverse CDF of Sobol points; when any axis order
/// is odd the draws come in antithetic pairs (tau, -tau).
struct SmoothSamples {
    Eigen::MatrixXd tau;          // d x n
    Eigen::VectorXd weight;       // n
};

inline SmoothSamples draw_smooth_samples(const DerivOrder& ord, double sigma, int n,
                                         SobolSampler& sobol) {
    const int d = ord.dims();
    if (sigma <= 0.0) throw std::invalid_argument("draw_smooth_samples: sigma");
    if (n < 1 || n % 2 != 0) throw std::invalid_argument("draw_smooth_samples: n must be even");
    if (sobol.dims() != d) throw std::invalid_argument("draw_smooth_samples: dims mismatch");
    bool any_odd = false;
    for (int a = 0; a < d; ++a)
        if (ord[a] % 2 == 1) any_odd = true;
    SmoothSamples s;
    s.tau.resize(d, n);
    s.weight.resize(n);
    const int base = any_odd ? n / 2 : n;
    double u[kMaxDims];
    for (int i = 0; i < base; ++i) {
        sobol.next(u);
        for (int a = 0; a < d; ++a) {
            double ua = u[a];
            if (ua <= 0.0) ua = 0x1.0p-33;
            if (ua >= 1.0) ua = 1.0 - 0x1.0p-33;
            s.tau(a, i) = sigma * inverse_normal_cdf(ua);
        }
        double w = 1.0;
        for (int a = 0; a < d; ++a) w *= hermite_weight(ord[a], sigma, s.tau(a, i));
        s.weight[i] = w;
        if (any_odd) {
            const int j = base + i;
            double wm = 1.0;
            for (int a = 0; a < d; ++a) {
                s.tau(a, j) = -s.tau(a, i);
                wm *= hermite_weight(ord[a], sigma, s.tau(a, j));
            }
            s.weight[j] = wm;
        }
    }
    return s;
}

/// Monte Carlo estimate of the mixed derivative of (fn convolved with an
/// axis-wise Gaussian of width sigma) at x.
inline std::vector<double> smooth_deriv_estimate(const SignalView& sig, const Coords& x,
                                                 const DerivOrder& ord, double sigma, int n,
                                                 SobolSampler& sobol) {
    const int d = sig.d;
    if (x.dims() != d || ord.dims() != d)
        throw std::invalid_argument("smooth_deriv_estimate: dims mismatch");
    const SmoothSamples s = draw_smooth_samples(ord, sigma, n, sobol);
    bool any_odd = false;
    for (int a = 0; a < d; ++a)
        if (ord[a] % 2 == 1) any_odd = true;
    // Mirrored draws are accumulated as one term per pair; their weights are
    // exact negations, so odd orders cancel to 0.0 on constant signals.
    const int base = any_odd ? n / 2 : n;
    std::vector<double> acc(sig.m, 0.0), f(sig.m), fm(sig.m);
    double pt[kMaxDims];
    for (int i = 0; i < base; ++i) {
        for (int a = 0; a < d; ++a) pt[a] = x[a] - s.tau(a, i);
        sig.eval(pt, f.data());
        if (any_odd) {
            const int j = base + i;
            for (int a = 0; a < d; ++a) pt[a] = x[a] - s.tau(a, j);
            sig.eval(pt, fm.data());
            for (int c = 0; c < sig.m; ++c) acc[c] += s.weight[i] * f[c] + s.weight[j] * fm[c];
        } else {
            for (int c = 0; c < sig.m; ++c) acc[c] += s.weight[i] * f[c];
        }
    }
    for (double& v : acc) v /= n;
    return acc;
}

// ---------------------------------------------------------------------------
// stochastic convolution

struct McSampler {
    SobolSampler sobol;
    RngStream rng;

    McSampler(int dims, uint64_t seed) : sobol(dims), rng(seed) {}
};

/// (1/n) sum_i fn(x - o_i), per-axis offsets drawn from the kernel: B-spline
/// offsets via sample_bspline_offset, Gaussian offsets via inverse CDF of
/// Sobol points.
inline std::vector<double> mc_convolve(const SignalView& sig, const Coords& x,
                                       const KernelSpec& kern, int n, McSampler& sampler) {
    const int d = sig.d;
    if (x.dims() != d) throw std::invalid_argument("mc_convolve: dims mismatch");
    if (n < 1) throw std::invalid_argument("mc_convolve: n must be >= 1");
    if (kern.family != KernelSpec::Family::bspline &&
        kern.family != KernelSpec::Family::gaussian)
        throw std::invalid_argument("mc_convolve: kernel family not sampleable");
    std::vector<double> acc(sig.m, 0.0), f(sig.m);
    double pt[kMaxDims], u[SobolSampler::kMaxSobolDims];
    for (int i = 0; i < n; ++i) {
        if (kern.family == KernelSpec::Family::bspline) {
            for (int a = 0; a < d; ++a)
                pt[a] = x[a] - sample_bspline_offset(kern.order, kern.half_width, sampler.rng);
        } else {
            if (sampler.sobol.dims() != d)
                throw std::invalid_argument("mc_convolve: sampler dims mismatch");
            sampler.sobol.next(u);
            for (int a = 0; a < d; ++a) {
                double ua = u[a];
                if (ua <= 0.0) ua = 0x1.0p-33;
                if (ua >= 1.0) ua = 1.0 - 0x1.0p-33;
                pt[a] = x[a] - kern.sigma * inverse_normal_cdf(ua);
            }
        }
        sig.eval(pt, f.data());
        for (int c = 0; c < sig.m; ++c) acc[c] += f[c];
    }
    for (double& v : acc) v /= n;
    return acc;
}

}  // namespace nad

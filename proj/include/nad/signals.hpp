#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nad/rng.hpp"
#include "nad/types.hpp"

namespace nad {

/// Type-erased view of a sampled function on [0,1]^d with m output channels.
struct SignalView {
    int d = 0;
    int m = 0;
    std::function<void(const double*, double*)> eval;
};

inline SignalView make_signal_view(int d, int m,
                                   std::function<void(const double*, double*)> fn) {
    return SignalView{d, m, std::move(fn)};
}

// ---------------------------------------------------------------------------
// signal kinds

struct GaussianComponent {
    double w = 1.0;
    std::array<double, kMaxDims> mu{};
    double s = 0.1;  // isotropic width
};

struct Box {
    std::array<double, kMaxDims> lo{};
    std::array<double, kMaxDims> hi{};
    double amp = 1.0;
};

/// Uniform grid payload. All cells (padding included) map uniformly onto
/// [0,1]^d; `pad` records how many border cells per side are padding.
struct GridData {
    int d = 1;
    int m = 1;
    std::array<int, kMaxDims> shape{};
    int pad = 0;
    std::vector<float> values;  // row-major over cells, channel-interleaved

    void validate() const {
        if (d < 1 || d > kMaxDims) throw std::invalid_argument("GridData: dims must be 1..3");
        if (m < 1) throw std::invalid_argument("GridData: channels must be >= 1");
        if (pad < 0) throw std::invalid_argument("GridData: negative pad");
        size_t cells = 1;
        for (int a = 0; a < d; ++a) {
            if (shape[a] < 1) throw std::invalid_argument("GridData: empty axis");
            if (shape[a] <= 2 * pad) throw std::invalid_argument("GridData: pad swallows axis");
            cells *= static_cast<size_t>(shape[a]);
        }
        if (values.size() != cells * static_cast<size_t>(m))
            throw std::invalid_argument("GridData: value count does not match shape");
        for (float v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("GridData: non-finite value");
    }
};

class Signal {
  public:
    enum class Kind { gaussian_mixture, rectangle_mixture, ackley, grid };

    static Signal gaussian_mixture(int d, std::vector<GaussianComponent> comps) {
        check_dims(d);
        if (comps.empty()) throw std::invalid_argument("Signal: empty mixture");
        for (const auto& c : comps)
            if (!(c.s > 0.0)) throw std::invalid_argument("Signal: non-positive width");
        Signal s;
        s.kind_ = Kind::gaussian_mixture;
        s.d_ = d;
        s.m_ = 1;
        s.data_ = std::move(comps);
        return s;
    }

    static Signal rectangle_mixture(int d, std::vector<Box> boxes) {
        check_dims(d);
        if (boxes.empty()) throw std::invalid_argument("Signal: empty mixture");
        for (const auto& b : boxes)
            for (int a = 0; a < d; ++a)
                if (!(b.lo[a] <= b.hi[a])) throw std::invalid_argument("Signal: inverted box");
        Signal s;
        s.kind_ = Kind::rectangle_mixture;
        s.d_ = d;
        s.m_ = 1;
        s.data_ = std::move(boxes);
        return s;
    }

    static Signal ackley(int d) {
        check_dims(d);
        Signal s;
        s.kind_ = Kind::ackley;
        s.d_ = d;
        s.m_ = 1;
        s.data_ = std::monostate{};
        return s;
    }

    static Signal grid(GridData g) {
        g.validate();
        Signal s;
        s.kind_ = Kind::grid;
        s.d_ = g.d;
        s.m_ = g.m;
        s.data_ = std::move(g);
        return s;
    }

    Kind kind() const { return kind_; }
    int dims() const { return d_; }
    int channels() const { return m_; }

    void eval(const double* x, double* out) const {
        switch (kind_) {
            case Kind::gaussian_mixture: {
                const auto& comps = std::get<std::vector<GaussianComponent>>(data_);
                double acc = 0.0;
                for (const auto& c : comps) {
                    double q = 0.0;
                    for (int a = 0; a < d_; ++a) {
                        double t = x[a] - c.mu[a];
                        q += t * t;
                    }
                    acc += c.w * std::exp(-q / (2.0 * c.s * c.s));
                }
                out[0] = acc;
                return;
            }
            case Kind::rectangle_mixture: {
                const auto& boxes = std::get<std::vector<Box>>(data_);
                double acc = 0.0;
                for (const auto& b : boxes) {
                    bool in = true;
                    for (int a = 0; a < d_; ++a)
                        if (!(x[a] >= b.lo[a] && x[a] < b.hi[a])) {  // half-open membership
                            in = false;
                            break;
                        }
                    if (in) acc += b.amp;
                }
                out[0] = acc;
                return;
            }
            case Kind::ackley: {
                constexpr double a = 20.0, b = 0.2;
                const double c = 2.0 * std::numbers::pi;
                double sq = 0.0, cs = 0.0;
                for (int ax = 0; ax < d_; ++ax) {
                    double y = 8.0 * x[ax] - 4.0;  // remap [0,1] -> [-4,4]
                    sq += y * y;
                    cs += std::cos(c * y);
                }
                out[0] = -a * std::exp(-b * std::sqrt(sq / d_)) - std::exp(cs / d_) + a +
                         std::numbers::e;
                return;
            }
            case Kind::grid: {
                eval_grid(x, out);
                return;
            }
        }
    }

    std::vector<double> operator()(const Coords& x) const {
        if (x.dims() != d_) throw std::invalid_argument("Signal: dims mismatch");
        std::vector<double> out(m_);
        eval(x.data(), out.data());
        return out;
    }

    SignalView view() const {
        return SignalView{d_, m_, [this](const double* x, double* out) { eval(x, out); }};
    }

    const std::vector<GaussianComponent>& gaussian_components() const {
        return std::get<std::vector<GaussianComponent>>(data_);
    }
    const std::vector<Box>& boxes() const { return std::get<std::vector<Box>>(data_); }
    const GridData& grid_data() const { return std::get<GridData>(data_); }

  private:
    static void check_dims(int d) {
        if (d < 1 || d > kMaxDims) throw std::invalid_argument("Signal: dims must be 1..3");
    }

    // Multilinear interpolation with cell centers at (i+0.5)/shape; queries
    // beyond the outermost centers clamp to the edge value.
    void eval_grid(const double* x, double* out) const {
        const GridData& g = std::get<GridData>(data_);
        int i0[kMaxDims];
        double fr[kMaxDims];
        for (int a = 0; a < d_; ++a) {
            const int sa = g.shape[a];
            double gc = x[a] * sa - 0.5;
            if (gc < 0.0) gc = 0.0;
            if (gc > sa - 1.0) gc = sa - 1.0;
            int i = static_cast<int>(gc);
            if (i > sa - 2) i = std::max(0, sa - 2);
            i0[a] = i;
            fr[a] = (sa == 1) ? 0.0 : gc - i;
        }
        for (int c = 0; c < m_; ++c) out[c] = 0.0;
        const int corners = 1 << d_;
        for (int mask = 0; mask < corners; ++mask) {
            double wgt = 1.0;
            size_t idx = 0;
            for (int a = 0; a < d_; ++a) {  // row-major, last axis fastest
                const int bit = (mask >> a) & 1;
                const int ia = std::min(i0[a] + bit, g.shape[a] - 1);
                wgt *= bit ? fr[a] : 1.0 - fr[a];
                idx = idx * g.shape[a] + ia;
            }
            if (wgt == 0.0) continue;
            const float* cell = g.values.data() + idx * m_;
            for (int c = 0; c < m_; ++c) out[c] += wgt * cell[c];
        }
    }

    Kind kind_ = Kind::gaussian_mixture;
    int d_ = 1;
    int m_ = 1;
    std::variant<std::monostate, std::vector<GaussianComponent>, std::vector<Box>, GridData>
        data_;
};

// ---------------------------------------------------------------------------
// seeded factories

/// Components drawn with w in [0.5,1.5], centers in [0.25,0.75]^d, widths in
/// [0.02,0.15]. Same seed reproduces the same signal.
inline Signal make_gaussian_mixture(int d, int components, uint64_t seed) {
    if (components < 1) throw std::invalid_argument("make_gaussian_mixture: empty");
    RngStream rng(seed);
    std::vector<GaussianComponent> comps(components);
    for (auto& c : comps) {
        c.w = rng.next_uniform(0.5, 1.5);
        for (int a = 0; a < d; ++a) c.mu[a] = rng.next_uniform(0.25, 0.75);
        c.s = rng.next_uniform(0.02, 0.15);
    }
    return Signal::gaussian_mixture(d, std::move(comps));
}

/// Axis-aligned boxes inside [0.1,0.9]^d with amplitudes in [-1,1].
inline Signal make_rectangle_mixture(int d, int components, uint64_t seed) {
    if (components < 1) throw std::invalid_argument("make_rectangle_mixture: empty");
    RngStream rng(seed);
    std::vector<Box> boxes(components);
    for (auto& b : boxes) {
        for (int a = 0; a < d; ++a) {
            double u = rng.next_uniform(0.1, 0.9);
            double v = rng.next_uniform(0.1, 0.9);
            b.lo[a] = std::min(u, v);
            b.hi[a] = std::max(u, v);
        }
        b.amp = rng.next_uniform(-1.0, 1.0);
    }
    return Signal::rectangle_mixture(d, std::move(boxes));
}

inline Signal make_ackley(int d) { return Signal::ackley(d); }

inline Signal load_grid_signal(GridData g) { return Signal::grid(std::move(g)); }

// ---------------------------------------------------------------------------
// NGRD grid file format
//
//   NGRD1\n
//   <d> <m> <s1> [<s2> [<s3>]] <pad>\n
//   little-endian float32 payload, row-major over cells, channel-interleaved

inline void write_ngrd(const std::string& path, const GridData& g) {
    g.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_ngrd: cannot open " + path);
    f << "NGRD1\n" << g.d << ' ' << g.m;
    for (int a = 0; a < g.d; ++a) f << ' ' << g.shape[a];
    f << ' ' << g.pad << '\n';
    static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
    f.write(reinterpret_cast<const char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write_ngrd: short write to " + path);
}

inline GridData read_ngrd(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_ngrd: cannot open " + path);
    std::string magic;
    if (!std::getline(f, magic)) throw std::runtime_error("read_ngrd: empty file");
    if (magic != "NGRD1") throw std::runtime_error("read_ngrd: bad magic '" + magic + "'");
    std::string header;
    if (!std::getline(f, header)) throw std::runtime_error("read_ngrd: missing header");
    GridData g;
    {
        std::vector<long> nums;
        const char* p = header.c_str();
        char* end = nullptr;
        for (long v = std::strtol(p, &end, 10); p != end; v = std::strtol(p, &end, 10)) {
            nums.push_back(v);
            p = end;
        }
        while (*p == ' ') ++p;
        if (*p != '\0') throw std::runtime_error("read_ngrd: malformed header");
        if (nums.size() < 4 || nums.size() > 6)
            throw std::runtime_error("read_ngrd: malformed header");
        g.d = static_cast<int>(nums[0]);
        g.m = static_cast<int>(nums[1]);
        if (g.d < 1 || g.d > kMaxDims) throw std::runtime_error("read_ngrd: bad dims");
        if (static_cast<int>(nums.size()) != g.d + 3)
            throw std::runtime_error("read_ngrd: header/dims mismatch");
        size_t cells = 1;
        for (int a = 0; a < g.d; ++a) {
            g.shape[a] = static_cast<int>(nums[2 + a]);
            if (g.shape[a] < 1) throw std::runtime_error("read_ngrd: bad shape");
            cells *= static_cast<size_t>(g.shape[a]);
        }
        g.pad = static_cast<int>(nums[2 + g.d]);
        g.values.resize(cells * static_cast<size_t>(g.m));
    }
    f.read(reinterpret_cast<char*>(g.values.data()),
           static_cast<std::streamsize>(g.values.size() * sizeof(float)));
    if (static_cast<size_t>(f.gcount()) != g.values.size() * sizeof(float))
        throw std::runtime_error("read_ngrd: truncated payload");
    char extra;
    if (f.read(&extra, 1) && f.gcount() == 1)
        throw std::runtime_error("read_ngrd: trailing bytes");
    g.validate();
    return g;
}

// ---------------------------------------------------------------------------
// repeated-antiderivative oracles
//
// A(x) applies, along every axis in turn, the k-fold running integral with
// lower limit 0. All oracles share that convention.

struct QuadratureOptions {
    int initial_resolution = 64;
    int max_resolution = 0;  // 0: pick by dimension (65536 / 2048 / 160)
    double rel_tol = 1e-6;
    // Convergence is judged against max(|value|, scale_floor) so that values
    // far below the problem's unit scale do not demand absurd grids.
    double scale_floor = 1e-3;
    // When false, exhausting the resolution cap returns the extrapolant at the
    // cap instead of throwing. Diagnostic use only: integrands with jumps have
    // an O(h) grid-alignment error the doubling certificate cannot bound.
    bool require_convergence = true;
};

class QuadratureNonConvergence : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline int default_max_resolution(int d) {
    switch (d) {
        case 1: return 65536;
        case 2: return 2048;
        default: return 160;
    }
}

// k-fold cumulative trapezoid along each axis of a (R+1)^d corner-value grid,
// returning the far-corner value. vals is overwritten.
inline double repeated_cumtrapz_corner(std::vector<double>& vals, int d, int k, int res,
                                       const double* x) {
    const int n = res + 1;
    size_t total = 1;
    for (int a = 0; a < d; ++a) total *= static_cast<size_t>(n);
    for (int a = 0; a < d; ++a) {
        const double h = x[a] / res;
        // stride of axis a in the flattened grid (axis 0 fastest)
        size_t stride = 1;
        for (int b = 0; b < a; ++b) stride *= static_cast<size_t>(n);
        const size_t outer = total / static_cast<size_t>(n);
        for (int rep = 0; rep < k; ++rep) {
            for (size_t o = 0; o < outer; ++o) {
                // base index with axis-a digit zero
                size_t lo = o % stride, hi = o / stride;
                size_t base = lo + hi * stride * static_cast<size_t>(n);
                double prev_f = vals[base];
                double acc = 0.0;
                vals[base] = 0.0;
                for (int i = 1; i < n; ++i) {
                    const size_t idx = base + static_cast<size_t>(i) * stride;
                    const double fi = vals[idx];
                    acc += 0.5 * h * (prev_f + fi);
                    prev_f = fi;
                    vals[idx] = acc;
                }
            }
        }
    }
    return vals[total - 1];
}

inline double quadrature_once(const SignalView& sig, int channel, int k, const Coords& x,
                              int res) {
    const int d = x.dims();
    const int n = res + 1;
    size_t total = 1;
    for (int a = 0; a < d; ++a) total *= static_cast<size_t>(n);
    std::vector<double> vals(total);
    std::vector<double> out(sig.m);
    double pt[kMaxDims];
    for (size_t idx = 0; idx < total; ++idx) {
        size_t rem = idx;
        for (int a = 0; a < d; ++a) {
            const int ia = static_cast<int>(rem % n);
            rem /= n;
            pt[a] = x[a] * ia / res;
        }
        sig.eval(pt, out.data());
        vals[idx] = out[channel];
    }
    return repeated_cumtrapz_corner(vals, d, k, res, x.data());
}

}  // namespace detail

/// Composite-trapezoid repeated antiderivative, doubling the per-axis
/// resolution until two successive results agree to rel_tol.
inline std::vector<double> quadrature_antiderivative(const SignalView& sig, int k,
                                                     const Coords& x,
                                                     const QuadratureOptions& opts = {}) {
    if (k < 1) throw std::invalid_argument("quadrature_antiderivative: k must be >= 1");
    if (x.dims() != sig.d) throw std::invalid_argument("quadrature_antiderivative: dims");
    const int d = x.dims();
    const int cap = opts.max_resolution > 0 ? opts.max_resolution
                                            : detail::default_max_resolution(d);
    std::vector<double> result(sig.m);
    for (int c = 0; c < sig.m; ++c) {
        bool degenerate = false;
        for (int a = 0; a < d; ++a)
            if (x[a] == 0.0) degenerate = true;
        if (degenerate) {
            result[c] = 0.0;
            continue;
        }
        double prev = detail::quadrature_once(sig, c, k, x, opts.initial_resolution);
        bool ok = false;
        bool have_ext = false;
        double prev_ext = 0.0;
        for (int res = opts.initial_resolution * 2; res <= cap; res *= 2) {
            const double cur = detail::quadrature_once(sig, c, k, x, res);
            // Richardson step: cancel the O(h^2) trapezoid term
            const double ext = (4.0 * cur - prev) / 3.0;
            if (have_ext) {
                const double scale =
                    std::max({opts.scale_floor, std::abs(ext), std::abs(prev_ext)});
                if (std::abs(ext - prev_ext) < opts.rel_tol * scale) {
                    result[c] = ext;
                    ok = true;
                    break;
                }
            }
            prev = cur;
            prev_ext = ext;
            have_ext = true;
        }
        if (!ok) {
            if (!opts.require_convergence && have_ext) {
                result[c] = prev_ext;
                continue;
            }
            throw QuadratureNonConvergence(
                "quadrature_antiderivative: not converged at resolution cap " +
                std::to_string(cap));
        }
    }
    return result;
}

namespace detail {

inline double ramp(double t) { return t > 0.0 ? t : 0.0; }

// k-fold running integral of the indicator of [a,b), and its derivatives.
inline double box_axis_integral(double x, double a, double b, int k) {
    return (std::pow(ramp(x - a), k) - std::pow(ramp(x - b), k)) / factorial(k);
}

inline double box_axis_integral_deriv(double x, double a, double b, int k, int j) {
    if (j > k) return 0.0;  // away from edges the indicator is locally constant
    if (j == k) return (x >= a && x < b) ? 1.0 : 0.0;
    const int p = k - j;
    return (std::pow(ramp(x - a), p) - std::pow(ramp(x - b), p)) / factorial(p);
}

}  // namespace detail

/// Closed-form repeated antiderivative of a rectangle mixture (exact).
inline std::vector<double> rectangle_antiderivative(const Signal& sig, int k,
                                                    const Coords& x) {
    if (sig.kind() != Signal::Kind::rectangle_mixture)
        throw std::invalid_argument("rectangle_antiderivative: wrong signal kind");
    if (x.dims() != sig.dims()) throw std::invalid_argument("rectangle_antiderivative: dims");
    double acc = 0.0;
    for (const auto& b : sig.boxes()) {
        double term = b.amp;
        for (int a = 0; a < sig.dims(); ++a)
            term *= detail::box_axis_integral(x[a], b.lo[a], b.hi[a], k);
        acc += term;
    }
    return {acc};
}

/// Mixed partial of the closed-form rectangle antiderivative, per-axis order <= k.
inline std::vector<double> rectangle_antiderivative_partial(const Signal& sig, int k,
                                                            const Coords& x,
                                                            const DerivOrder& ord) {
    if (sig.kind() != Signal::Kind::rectangle_mixture)
        throw std::invalid_argument("rectangle_antiderivative_partial: wrong signal kind");
    double acc = 0.0;
    for (const auto& b : sig.boxes()) {
        double term = b.amp;
        for (int a = 0; a < sig.dims(); ++a)
            term *= detail::box_axis_integral_deriv(x[a], b.lo[a], b.hi[a], k, ord[a]);
        acc += term;
    }
    return {acc};
}

/// Reference repeated antiderivative: exact closed form for rectangle
/// mixtures, adaptive quadrature otherwise.
inline std::vector<double> oracle_antiderivative(const Signal& sig, int k, const Coords& x,
                                                 const QuadratureOptions& opts = {}) {
    if (sig.kind() == Signal::Kind::rectangle_mixture)
        return rectangle_antiderivative(sig, k, x);
    return quadrature_antiderivative(sig.view(), k, x, opts);
}

}  // namespace nad

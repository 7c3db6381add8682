#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nad/jets.hpp"
#include "nad/rng.hpp"
#include "nad/types.hpp"

namespace nad {

// ---------------------------------------------------------------------------
// configuration and parameter layout

struct FieldConfig {
    int d = 1;
    int out = 1;
    int hidden_layers = 4;
    int hidden_width = 256;
    int pe_bands = 6;          // L sin/cos band pairs per axis
    bool pe_normalized = true; // scale band j by (2^j pi)^-pe_norm_order
    int pe_norm_order = 0;     // q, the largest total derivative order the run requests

    int features() const { return d * (1 + 2 * pe_bands); }
    void validate() const {
        if (d < 1 || d > kMaxDims) throw std::invalid_argument("FieldConfig: dims must be 1..3");
        if (out < 1) throw std::invalid_argument("FieldConfig: out must be >= 1");
        if (hidden_layers < 1) throw std::invalid_argument("FieldConfig: layers must be >= 1");
        if (hidden_width < 1) throw std::invalid_argument("FieldConfig: width must be >= 1");
        if (pe_bands < 0) throw std::invalid_argument("FieldConfig: negative bands");
        if (pe_norm_order < 0) throw std::invalid_argument("FieldConfig: negative norm order");
    }
};

/// One affine stage. Weights are stored row-major (out x in), then the bias.
struct LayerSpec {
    int in = 0;
    int out = 0;
    long w_off = 0;
    long b_off = 0;
};

inline std::vector<LayerSpec> layer_specs(const FieldConfig& c) {
    c.validate();
    std::vector<LayerSpec> specs;
    long off = 0;
    int in = c.features();
    for (int l = 0; l <= c.hidden_layers; ++l) {
        const int out = (l == c.hidden_layers) ? c.out : c.hidden_width;
        LayerSpec s;
        s.in = in;
        s.out = out;
        s.w_off = off;
        s.b_off = off + static_cast<long>(in) * out;
        specs.push_back(s);
        off = s.b_off + out;
        in = out;
    }
    return specs;
}

inline long param_count(const FieldConfig& c) {
    const auto specs = layer_specs(c);
    const auto& last = specs.back();
    return last.b_off + last.out;
}

struct NeuralField {
    FieldConfig cfg;
    Eigen::VectorXd theta;
};

/// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases. Draws come
/// from a counter-based stream and are rounded through float so that saved
/// checkpoints reproduce the in-memory parameters exactly.
inline NeuralField field_init(const FieldConfig& cfg, uint64_t seed) {
    cfg.validate();
    NeuralField f;
    f.cfg = cfg;
    f.theta = Eigen::VectorXd::Zero(param_count(cfg));
    RngStream rng(seed);
    for (const auto& s : layer_specs(cfg)) {
        const double bound = std::sqrt(6.0 / s.in);
        for (long i = 0; i < static_cast<long>(s.in) * s.out; ++i)
            f.theta[s.w_off + i] =
                static_cast<double>(static_cast<float>(rng.next_uniform(-bound, bound)));
        // biases stay zero
    }
    return f;
}

// ---------------------------------------------------------------------------
// positional encoding

namespace detail {

inline double pe_band_scale(const FieldConfig& cfg, int band) {
    if (!cfg.pe_normalized || cfg.pe_norm_order == 0) return 1.0;
    const double omega = std::pow(2.0, band) * std::numbers::pi;
    return std::pow(omega, -cfg.pe_norm_order);
}

}  // namespace detail

/// Per axis: [x, n_0 sin(pi x), n_0 cos(pi x), n_1 sin(2 pi x), ...].
inline std::vector<double> positional_encode(const FieldConfig& cfg, const Coords& x) {
    if (x.dims() != cfg.d) throw std::invalid_argument("positional_encode: dims mismatch");
    std::vector<double> feat;
    feat.reserve(cfg.features());
    for (int a = 0; a < cfg.d; ++a) {
        feat.push_back(x[a]);
        for (int j = 0; j < cfg.pe_bands; ++j) {
            const double omega = std::pow(2.0, j) * std::numbers::pi;
            const double n = detail::pe_band_scale(cfg, j);
            feat.push_back(n * std::sin(omega * x[a]));
            feat.push_back(n * std::cos(omega * x[a]));
        }
    }
    return feat;
}

// ---------------------------------------------------------------------------
// Swish activation with derivative values to arbitrary small order

namespace detail {

// sigma^(n) expressed as a polynomial in s = sigma(z); p[n] has degree n+1.
inline const std::vector<std::vector<double>>& sigmoid_deriv_polys() {
    static const std::vector<std::vector<double>> polys = [] {
        std::vector<std::vector<double>> p;
        p.push_back({0.0, 1.0});  // sigma itself
        for (int n = 0; n < 8; ++n) {
            const auto& cur = p.back();
            // derivative w.r.t. s, then multiply by s - s^2
            std::vector<double> ds(cur.size() - 1);
            for (size_t i = 1; i < cur.size(); ++i) ds[i - 1] = cur[i] * static_cast<double>(i);
            std::vector<double> nxt(ds.size() + 2, 0.0);
            for (size_t i = 0; i < ds.size(); ++i) {
                nxt[i + 1] += ds[i];
                nxt[i + 2] -= ds[i];
            }
            p.push_back(std::move(nxt));
        }
        return p;
    }();
    return polys;
}

inline double poly_eval(const std::vector<double>& p, double s) {
    double r = 0.0;
    for (size_t i = p.size(); i-- > 0;) r = r * s + p[i];
    return r;
}

inline double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// out[i] = swish^(i)(z) for i = 0..n (n <= 8).
inline void swish_derivs(double z, int n, double* out) {
    const double s = stable_sigmoid(z);
    const auto& polys = sigmoid_deriv_polys();
    double sig_d[10];
    for (int j = 0; j <= n; ++j) sig_d[j] = poly_eval(polys[j], s);
    out[0] = z * s;
    for (int i = 1; i <= n; ++i) out[i] = i * sig_d[i - 1] + z * sig_d[i];
}

/// Jet transform of Swish: h = g(z), gp = g'(z), both truncated to the box.
inline void swish_jet(const JetShape& s, const double* z, double* h, double* gp) {
    const int B = s.size();
    if (B == 1) {
        double d[2];
        swish_derivs(z[0], 1, d);
        h[0] = d[0];
        gp[0] = d[1];
        return;
    }
    const int J = s.total_order();
    double derivs[kMaxTotalOrder + 2];
    swish_derivs(z[0], J + 1, derivs);
    if (B == 2) {  // single first-order axis
        h[0] = derivs[0];
        h[1] = derivs[1] * z[1];
        gp[0] = derivs[1];
        gp[1] = derivs[2] * z[1];
        return;
    }
    double nil[kMaxJetSize], pw[kMaxJetSize], nxt[kMaxJetSize];
    for (int i = 0; i < B; ++i) {
        nil[i] = z[i];
        pw[i] = 0.0;
        h[i] = 0.0;
        gp[i] = 0.0;
    }
    nil[0] = 0.0;
    pw[0] = 1.0;
    h[0] = derivs[0];
    gp[0] = derivs[1];
    double invfact = 1.0;
    for (int j = 1; j <= J; ++j) {
        for (int i = 0; i < B; ++i) nxt[i] = 0.0;
        box_mul_acc(s, pw, nil, nxt);
        for (int i = 0; i < B; ++i) pw[i] = nxt[i];
        invfact /= j;
        const double ch = derivs[j] * invfact;
        const double cg = derivs[j + 1] * invfact;
        for (int i = 0; i < B; ++i) {
            h[i] += ch * pw[i];
            gp[i] += cg * pw[i];
        }
    }
}

/// Adjoint of swish_jet: dz = gp (*)^T dh.
inline void swish_jet_backward(const JetShape& s, const double* gp, const double* dh,
                               double* dz) {
    const int B = s.size();
    if (B == 1) {
        dz[0] = gp[0] * dh[0];
        return;
    }
    if (B == 2) {
        dz[0] = gp[0] * dh[0] + gp[1] * dh[1];
        dz[1] = gp[0] * dh[1];
        return;
    }
    box_mul_transpose(s, gp, dh, dz);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// batched forward/reverse engine
//
// Activations for a batch are kept as one matrix slab (width x N) per Taylor
// coefficient of the requested derivative box. Affine stages act slab-wise;
// the activation couples slabs pointwise through truncated composition. The
// reverse sweep propagates slab adjoints through the same structure, which
// yields exact parameter gradients of any loss built from jet coefficients.

class FieldBatch {
  public:
    using RowMajorMap =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    FieldBatch(const NeuralField& field, const Eigen::MatrixXd& pts, const DerivOrder& ord)
        : field_(field), shape_(ord) {
        const FieldConfig& cfg = field.cfg;
        cfg.validate();
        if (pts.rows() != cfg.d) throw std::invalid_argument("FieldBatch: point dims mismatch");
        if (ord.dims() != cfg.d) throw std::invalid_argument("FieldBatch: order dims mismatch");
        if (field.theta.size() != param_count(cfg))
            throw std::invalid_argument("FieldBatch: theta size mismatch");
        n_ = static_cast<int>(pts.cols());
        encode(pts);
        forward();
    }

    int box() const { return shape_.size(); }
    int npoints() const { return n_; }
    const JetShape& shape() const { return shape_; }

    const Eigen::MatrixXd& output(int coeff) const { return out_[coeff]; }

    /// Requested mixed-partial values (Taylor coefficient times factorials).
    Eigen::MatrixXd derivative_values(const DerivOrder& sub) const {
        const int idx = shape_.flat(sub);
        return out_[idx] * shape_.factorial_at(idx);
    }
    Eigen::MatrixXd derivative_values() const {
        return out_[shape_.top_index()] * shape_.factorial_at(shape_.top_index());
    }

    Jet output_jet(int row, int point) const {
        Jet j(shape_);
        for (int c = 0; c < box(); ++c) j.c[c] = out_[c](row, point);
        return j;
    }

    /// Accumulate d(loss)/d(theta) into grad given adjoints of the output slabs.
    void backward(const std::vector<Eigen::MatrixXd>& out_adj, Eigen::VectorXd& grad) const {
        const FieldConfig& cfg = field_.cfg;
        const auto specs = layer_specs(cfg);
        if (grad.size() != field_.theta.size())
            throw std::invalid_argument("FieldBatch: grad size mismatch");
        const int B = box();
        std::vector<Eigen::MatrixXd> dz(out_adj);
        std::vector<Eigen::MatrixXd> dh(B);
        for (int l = cfg.hidden_layers; l >= 0; --l) {
            const auto& s = specs[l];
            const std::vector<Eigen::MatrixXd>& x = (l == 0) ? phi_ : tape_[l - 1].h;
            using RowMajorMutable =
                Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
            RowMajorMutable gw(grad.data() + s.w_off, s.out, s.in);
            for (int c = 0; c < B; ++c) gw.noalias() += dz[c] * x[c].transpose();
            Eigen::Map<Eigen::VectorXd> gb(grad.data() + s.b_off, s.out);
            gb.noalias() += dz[0].rowwise().sum();
            if (l == 0) break;
            RowMajorMap w(field_.theta.data() + s.w_off, s.out, s.in);
            for (int c = 0; c < B; ++c) dh[c].noalias() = w.transpose() * dz[c];
            // through the activation of layer l-1
            const auto& gp = tape_[l - 1].gp;
            const int width = specs[l - 1].out;
            for (int c = 0; c < B; ++c) dz[c].resize(width, n_);
            double gpl[kMaxJetSize], dhl[kMaxJetSize], dzl[kMaxJetSize];
            for (int p = 0; p < n_; ++p)
                for (int u = 0; u < width; ++u) {
                    for (int c = 0; c < B; ++c) {
                        gpl[c] = gp[c](u, p);
                        dhl[c] = dh[c](u, p);
                    }
                    detail::swish_jet_backward(shape_, gpl, dhl, dzl);
                    for (int c = 0; c < B; ++c) dz[c](u, p) = dzl[c];
                }
        }
    }

  private:
    void encode(const Eigen::MatrixXd& pts) {
        const FieldConfig& cfg = field_.cfg;
        const int B = box();
        const int nf = cfg.features();
        phi_.assign(B, Eigen::MatrixXd::Zero(nf, n_));
        const int per_axis = 1 + 2 * cfg.pe_bands;
        for (int a = 0; a < cfg.d; ++a) {
            const int step = shape_.stride(a);
            const int top = shape_.extent(a) - 1;
            for (int p = 0; p < n_; ++p) {
                const double xa = pts(a, p);
                int f = a * per_axis;
                // identity feature
                phi_[0](f, p) = xa;
                if (top >= 1) phi_[step](f, p) = 1.0;
                ++f;
                for (int j = 0; j < cfg.pe_bands; ++j) {
                    const double omega = std::pow(2.0, j) * std::numbers::pi;
                    const double nb = detail::pe_band_scale(cfg, j);
                    const double arg = omega * xa;
                    double invfact = 1.0, wpow = 1.0;
                    for (int i = 0; i <= top; ++i) {
                        if (i > 0) {
                            invfact /= i;
                            wpow *= omega;
                        }
                        const double phase = 0.5 * std::numbers::pi * i;
                        phi_[i * step](f, p) = nb * wpow * invfact * std::sin(arg + phase);
                        phi_[i * step](f + 1, p) = nb * wpow * invfact * std::cos(arg + phase);
                    }
                    f += 2;
                }
            }
        }
    }

    void forward() {
        const FieldConfig& cfg = field_.cfg;
        const auto specs = layer_specs(cfg);
        const int B = box();
        tape_.resize(cfg.hidden_layers);
        std::vector<Eigen::MatrixXd> z(B);
        const std::vector<Eigen::MatrixXd>* x = &phi_;
        for (int l = 0; l <= cfg.hidden_layers; ++l) {
            const auto& s = specs[l];
            RowMajorMap w(field_.theta.data() + s.w_off, s.out, s.in);
            Eigen::Map<const Eigen::VectorXd> b(field_.theta.data() + s.b_off, s.out);
            for (int c = 0; c < B; ++c) {
                z[c].resize(s.out, n_);
                z[c].noalias() = w * (*x)[c];
            }
            z[0].colwise() += b;
            if (l == cfg.hidden_layers) {
                out_ = std::move(z);
                break;
            }
            auto& t = tape_[l];
            t.h.assign(B, Eigen::MatrixXd(s.out, n_));
            t.gp.assign(B, Eigen::MatrixXd(s.out, n_));
            double zl[kMaxJetSize], hl[kMaxJetSize], gl[kMaxJetSize];
            for (int p = 0; p < n_; ++p)
                for (int u = 0; u < s.out; ++u) {
                    for (int c = 0; c < B; ++c) zl[c] = z[c](u, p);
                    detail::swish_jet(shape_, zl, hl, gl);
                    for (int c = 0; c < B; ++c) {
                        t.h[c](u, p) = hl[c];
                        t.gp[c](u, p) = gl[c];
                    }
                }
            x = &t.h;
        }
    }

    struct LayerTape {
        std::vector<Eigen::MatrixXd> h, gp;
    };

    const NeuralField& field_;
    JetShape shape_;
    int n_ = 0;
    std::vector<Eigen::MatrixXd> phi_;
    std::vector<LayerTape> tape_;
    std::vector<Eigen::MatrixXd> out_;
};

// ---------------------------------------------------------------------------
// scalar conveniences

inline std::vector<double> field_forward(const NeuralField& f, const Coords& x) {
    Eigen::MatrixXd pts(f.cfg.d, 1);
    for (int a = 0; a < f.cfg.d; ++a) pts(a, 0) = x[a];
    FieldBatch fb(f, pts, DerivOrder::zero(f.cfg.d));
    std::vector<double> out(f.cfg.out);
    for (int r = 0; r < f.cfg.out; ++r) out[r] = fb.output(0)(r, 0);
    return out;
}

inline std::vector<double> field_mixed_partial(const NeuralField& f, const Coords& x,
                                               const DerivOrder& ord) {
    Eigen::MatrixXd pts(f.cfg.d, 1);
    for (int a = 0; a < f.cfg.d; ++a) pts(a, 0) = x[a];
    FieldBatch fb(f, pts, ord);
    Eigen::MatrixXd v = fb.derivative_values();
    std::vector<double> out(f.cfg.out);
    for (int r = 0; r < f.cfg.out; ++r) out[r] = v(r, 0);
    return out;
}

/// Full output jets at one point (one jet per output channel).
inline std::vector<Jet> field_output_jets(const NeuralField& f, const Coords& x,
                                          const DerivOrder& ord) {
    Eigen::MatrixXd pts(f.cfg.d, 1);
    for (int a = 0; a < f.cfg.d; ++a) pts(a, 0) = x[a];
    FieldBatch fb(f, pts, ord);
    std::vector<Jet> jets;
    jets.reserve(f.cfg.out);
    for (int r = 0; r < f.cfg.out; ++r) jets.push_back(fb.output_jet(r, 0));
    return jets;
}

// ---------------------------------------------------------------------------
// parameter gradients of losses over batched field evaluations

/// One homogeneous batch of evaluations: all points share a derivative order.
struct FieldQuery {
    Eigen::MatrixXd points;  // d x N
    DerivOrder ord;
};

/// Receives the requested derivative values per query (out x N each), returns
/// the loss, and fills d(loss)/d(value) into `grads` (same shapes).
using LossFn = std::function<double(const std::vector<Eigen::MatrixXd>& values,
                                    std::vector<Eigen::MatrixXd>& grads)>;

/// Exact d(loss)/d(theta) for a loss over forward values and mixed partials.
inline double loss_param_gradient(const NeuralField& f, const std::vector<FieldQuery>& queries,
                                  const LossFn& loss, Eigen::VectorXd& grad) {
    grad = Eigen::VectorXd::Zero(f.theta.size());
    std::vector<FieldBatch> batches;
    batches.reserve(queries.size());
    std::vector<Eigen::MatrixXd> values;
    for (const auto& q : queries) {
        batches.emplace_back(f, q.points, q.ord);
        values.push_back(batches.back().derivative_values(q.ord));
    }
    std::vector<Eigen::MatrixXd> vgrads(values.size());
    for (size_t i = 0; i < values.size(); ++i)
        vgrads[i] = Eigen::MatrixXd::Zero(values[i].rows(), values[i].cols());
    const double l = loss(values, vgrads);
    for (size_t i = 0; i < batches.size(); ++i) {
        const auto& fb = batches[i];
        const int idx = fb.shape().flat(queries[i].ord);
        std::vector<Eigen::MatrixXd> adj(fb.box());
        for (int c = 0; c < fb.box(); ++c)
            adj[c] = Eigen::MatrixXd::Zero(f.cfg.out, fb.npoints());
        adj[idx] = vgrads[i] * fb.shape().factorial_at(idx);
        fb.backward(adj, grad);
    }
    return l;
}

}  // namespace nad

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nad/field.hpp"
#include "nad/mc.hpp"
#include "nad/reduction.hpp"
#include "nad/rng.hpp"
#include "nad/signals.hpp"
#include "nad/types.hpp"

namespace nad {

// Supervision strategies for learning the k-fold repeated antiderivative A of
// a signal f. Each strategy pins down a different handle on the same model:
//
//   integral          F(x) vs a Monte Carlo estimate of A(x)
//   autodiff          exact mixed partial of F vs f(x)
//   autodiff_reduced  first-order partials of a sub-antiderivative bank vs
//                     monomial-weighted f (see reduction.hpp)
//   fd                central-difference stencil of F vs f(x)
//   fd_comp           same stencil vs f blurred by the matching B-spline
//   smooth            stochastic smoothed-derivative estimate of F vs f(x)
//   smooth_comp       same estimate vs f blurred by the matching Gaussian
enum class Method {
    integral,
    autodiff,
    autodiff_reduced,
    fd,
    fd_comp,
    smooth,
    smooth_comp,
};

inline const char* method_name(Method m) {
    switch (m) {
        case Method::integral: return "integral";
        case Method::autodiff: return "autodiff";
        case Method::autodiff_reduced: return "autodiff_reduced";
        case Method::fd: return "fd";
        case Method::fd_comp: return "fd_comp";
        case Method::smooth: return "smooth";
        case Method::smooth_comp: return "smooth_comp";
    }
    throw std::invalid_argument("method_name: bad tag");
}

inline Method method_from_name(const std::string& s) {
    for (Method m : {Method::integral, Method::autodiff, Method::autodiff_reduced, Method::fd,
                     Method::fd_comp, Method::smooth, Method::smooth_comp})
        if (s == method_name(m)) return m;
    throw std::invalid_argument("method_from_name: unknown method '" + s + "'");
}

/// Methods whose derivative estimate is numerical rather than exact.
inline bool method_is_numerical(Method m) {
    return m == Method::fd || m == Method::fd_comp || m == Method::smooth ||
           m == Method::smooth_comp;
}

/// Methods whose training estimate or target is a stochastic quantity; with
/// debiasing on these force the squared-error loss.
inline bool method_is_stochastic(Method m) {
    return m == Method::integral || m == Method::smooth || m == Method::smooth_comp;
}

/// Largest total derivative order the method requests from the model; feeds
/// the encoding normalization (FieldConfig::pe_norm_order).
inline int method_norm_order(Method m, int d, int k) {
    if (m == Method::autodiff) return d * k;
    if (m == Method::autodiff_reduced) return d;
    return 0;
}

enum class LossKind { l2, huber };

inline const char* loss_name(LossKind l) { return l == LossKind::l2 ? "l2" : "huber"; }

inline LossKind loss_from_name(const std::string& s) {
    if (s == "l2") return LossKind::l2;
    if (s == "huber") return LossKind::huber;
    throw std::invalid_argument("loss_from_name: unknown loss '" + s + "'");
}

struct TrainConfig {
    int k = 1;               // antiderivative order per axis
    int iterations = -1;     // -1: method default
    int batch = 0;           // 0: dimension default
    double lr = 1e-3;
    LossKind loss = LossKind::huber;
    double huber_delta = 1.0;
    uint64_t seed = 0;
    int n_mc = 64;           // samples per Monte Carlo antiderivative estimate
    int n_kernel = 32;       // samples per smoothed estimate / blurred target
    double eps = 1.0 / 128.0;  // finite-difference half step
    double sigma = 0.02;       // smoothing kernel width
    bool debias = false;
    int trace_every = 100;
    double divergence_loss = 1e6;
    int divergence_patience = 500;

    int resolved_iterations(Method m) const {
        if (iterations >= 0) return iterations;
        return method_is_numerical(m) ? 200000 : 100000;
    }
    int resolved_batch(int d) const {
        if (batch > 0) return batch;
        return d == 1 ? 4096 : (d == 2 ? 1024 : 512);
    }
    LossKind effective_loss(Method m) const {
        return (debias && method_is_stochastic(m)) ? LossKind::l2 : loss;
    }
    void validate() const {
        if (k < 1 || k > 4) throw std::invalid_argument("TrainConfig: order must be in [1,4]");
        if (batch < 0) throw std::invalid_argument("TrainConfig: negative batch");
        if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
        if (huber_delta <= 0.0) throw std::invalid_argument("TrainConfig: huber delta");
        if (n_mc < 1 || n_kernel < 1) throw std::invalid_argument("TrainConfig: sample counts");
        if (eps <= 0.0 || sigma <= 0.0) throw std::invalid_argument("TrainConfig: eps/sigma");
        if (trace_every < 1) throw std::invalid_argument("TrainConfig: trace_every");
        if (divergence_patience < 1) throw std::invalid_argument("TrainConfig: patience");
    }
};

// ---------------------------------------------------------------------------
// losses

/// Mean Huber penalty over the residual components.
inline double huber(std::span<const double> r, double delta) {
    if (delta <= 0.0) throw std::invalid_argument("huber: delta must be positive");
    double acc = 0.0;
    for (double v : r) {
        const double a = std::abs(v);
        acc += a <= delta ? 0.5 * v * v : delta * (a - 0.5 * delta);
    }
    return r.empty() ? 0.0 : acc / static_cast<double>(r.size());
}

namespace detail {

inline double loss_value(LossKind kind, double r, double delta) {
    if (kind == LossKind::l2) return r * r;
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

inline double loss_slope(LossKind kind, double r, double delta) {
    if (kind == LossKind::l2) return 2.0 * r;
    if (r > delta) return delta;
    if (r < -delta) return -delta;
    return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// finite-difference stencil

struct Stencil {
    std::vector<double> offsets;
    std::vector<double> weights;
};

/// Central-difference stencil for the k-th derivative at spacing 2*eps:
/// offsets (k-2j)eps, weights (-1)^j binom(k,j) / (2 eps)^k.
inline Stencil fd_stencil(int k, double eps) {
    if (k < 1) throw std::invalid_argument("fd_stencil: k must be >= 1");
    if (eps <= 0.0) throw std::invalid_argument("fd_stencil: eps must be positive");
    Stencil s;
    const double denom = std::pow(2.0 * eps, k);
    for (int j = 0; j <= k; ++j) {
        s.offsets.push_back((k - 2 * j) * eps);
        s.weights.push_back(((j % 2 == 0) ? 1.0 : -1.0) * binomial(k, j) / denom);
    }
    return s;
}

// ---------------------------------------------------------------------------
// optimizer

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(Eigen::Index n)
        : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

inline void adam_step(AdamState& st, Eigen::VectorXd& theta, const Eigen::VectorXd& grad,
                      double lr) {
    if (theta.size() != st.m.size() || grad.size() != st.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    st.t += 1;
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    theta -= (lr / c1) * st.m.cwiseQuotient(((st.v / c2).cwiseSqrt().array() + st.eps).matrix());
}

// ---------------------------------------------------------------------------
// one supervision step

struct StepResult {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

namespace detail {

inline void require_finite(const Eigen::MatrixXd& v, const char* what) {
    if (!v.allFinite()) throw std::runtime_error(std::string("method_step: non-finite ") + what);
}

inline Eigen::MatrixXd draw_batch(int d, int n, RngStream& rng) {
    Eigen::MatrixXd pts(d, n);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) pts(a, i) = rng.next_unit();
    return pts;
}

inline Eigen::MatrixXd signal_values(const SignalView& view, const Eigen::MatrixXd& pts) {
    Eigen::MatrixXd out(view.m, pts.cols());
    std::vector<double> f(static_cast<size_t>(view.m));
    double x[kMaxDims];
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        for (int a = 0; a < view.d; ++a) x[a] = pts(a, i);
        view.eval(x, f.data());
        for (int c = 0; c < view.m; ++c) out(c, i) = f[c];
    }
    return out;
}

inline constexpr int kChunkPoints = 1024;

/// Residual loss between per-point model estimates and targets where each
/// estimate is a fixed linear combination of order-0 field evaluations:
/// est(:, i) = sum_g coeff(g, i) * F(eval_pts(:, i * group + g)). Backward
/// seeds flow through the same combination. `grad_coeff` supplies the
/// combination for the gradient side (debiasing evaluates an independent
/// realization); it defaults to the loss-side coefficients.
inline double linear_combination_loss(const NeuralField& field, const Eigen::MatrixXd& eval_pts,
                                      int group, const Eigen::MatrixXd& coeff,
                                      const Eigen::MatrixXd& targets, LossKind kind, double delta,
                                      Eigen::VectorXd& grad,
                                      const Eigen::MatrixXd* grad_pts = nullptr,
                                      const Eigen::MatrixXd* grad_coeff = nullptr) {
    const int d = field.cfg.d;
    const int m = field.cfg.out;
    const int npts = static_cast<int>(targets.cols());
    const DerivOrder ord = DerivOrder::zero(d);
    const int per_chunk = std::max(1, kChunkPoints / group);
    const double denom = static_cast<double>(npts) * m;

    double loss = 0.0;
    for (int base = 0; base < npts; base += per_chunk) {
        const int cnt = std::min(per_chunk, npts - base);
        FieldBatch fb(field, eval_pts.middleCols(base * group, cnt * group), ord);
        const Eigen::MatrixXd& v = fb.output(0);
        Eigen::MatrixXd slope(m, cnt);
        for (int i = 0; i < cnt; ++i) {
            Eigen::VectorXd est = Eigen::VectorXd::Zero(m);
            for (int g = 0; g < group; ++g)
                est += coeff(g, base + i) * v.col(i * group + g);
            for (int c = 0; c < m; ++c) {
                const double r = est[c] - targets(c, base + i);
                loss += loss_value(kind, r, delta) / denom;
                slope(c, i) = loss_slope(kind, r, delta) / denom;
            }
        }
        // adjoints flow through the gradient-side realization (the loss-side
        // one unless a debiasing pair was supplied)
        const FieldBatch* back = &fb;
        std::optional<FieldBatch> fb_grad;
        if (grad_pts) {
            fb_grad.emplace(field, grad_pts->middleCols(base * group, cnt * group), ord);
            back = &*fb_grad;
        }
        const Eigen::MatrixXd& gcoef = grad_coeff ? *grad_coeff : coeff;
        std::vector<Eigen::MatrixXd> adj(static_cast<size_t>(back->box()));
        for (int c = 0; c < back->box(); ++c)
            adj[static_cast<size_t>(c)] = Eigen::MatrixXd::Zero(m, cnt * group);
        for (int i = 0; i < cnt; ++i)
            for (int g = 0; g < group; ++g)
                adj[0].col(i * group + g) = gcoef(g, base + i) * slope.col(i);
        back->backward(adj, grad);
    }
    return loss;
}

/// Residual loss between one requested mixed partial of the field and a
/// target matrix, chunked over points.
inline double derivative_loss(const NeuralField& field, const Eigen::MatrixXd& pts,
                              const DerivOrder& ord, const Eigen::MatrixXd& targets,
                              LossKind kind, double delta, Eigen::VectorXd& grad) {
    const int m = field.cfg.out;
    const int npts = static_cast<int>(pts.cols());
    const double denom = static_cast<double>(npts) * m;
    double loss = 0.0;
    for (int base = 0; base < npts; base += kChunkPoints) {
        const int cnt = std::min(kChunkPoints, npts - base);
        FieldBatch fb(field, pts.middleCols(base, cnt), ord);
        const int idx = fb.shape().flat(ord);
        const double fact = fb.shape().factorial_at(idx);
        const Eigen::MatrixXd vals = fb.output(idx) * fact;
        std::vector<Eigen::MatrixXd> adj(static_cast<size_t>(fb.box()));
        for (int c = 0; c < fb.box(); ++c)
            adj[static_cast<size_t>(c)] = Eigen::MatrixXd::Zero(m, cnt);
        for (int i = 0; i < cnt; ++i)
            for (int c = 0; c < m; ++c) {
                const double r = vals(c, i) - targets(c, base + i);
                loss += loss_value(kind, r, delta) / denom;
                adj[static_cast<size_t>(idx)](c, i) =
                    loss_slope(kind, r, delta) / denom * fact;
            }
        fb.backward(adj, grad);
    }
    return loss;
}

}  // namespace detail

/// One supervision step: draws a uniform batch, assembles the method's
/// residual against the signal, and returns the loss with the exact parameter
/// gradient. Deterministic given (field, sig, cfg, step_rng).
inline StepResult method_step(Method method, const NeuralField& field, const Signal& sig,
                              const TrainConfig& cfg, const RngStream& step_rng) {
    cfg.validate();
    const SignalView view = sig.view();
    const int d = view.d;
    const int m = view.m;
    const int k = cfg.k;
    if (field.cfg.d != d) throw std::invalid_argument("method_step: field dims mismatch");
    const int want_out =
        method == Method::autodiff_reduced ? m * reduction_block_count(d, k) : m;
    if (field.cfg.out != want_out)
        throw std::invalid_argument("method_step: model output does not match method");

    RngStream batch_rng = step_rng.fork(1);
    RngStream kernel_rng = step_rng.fork(2);
    RngStream shift_rng = step_rng.fork(3);

    const int B = cfg.resolved_batch(d);
    const Eigen::MatrixXd pts = detail::draw_batch(d, B, batch_rng);
    const LossKind kind = cfg.effective_loss(method);
    const double delta = cfg.huber_delta;

    StepResult out;
    out.grad = Eigen::VectorXd::Zero(field.theta.size());

    switch (method) {
        case Method::integral: {
            // F(x) supervised on a fresh antiderivative estimate per point.
            Eigen::MatrixXd targets(m, B);
            for (int i = 0; i < B; ++i) {
                SobolSampler sob = SobolSampler::shifted(d, shift_rng);
                Coords x = Coords::from(std::span<const double>(pts.col(i).data(), d));
                const std::vector<double> est = cauchy_estimate(view, x, k, cfg.n_mc, sob);
                for (int c = 0; c < m; ++c) targets(c, i) = est[static_cast<size_t>(c)];
            }
            detail::require_finite(targets, "antiderivative estimate");
            const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, B);
            out.loss = detail::linear_combination_loss(field, pts, 1, ones, targets, kind,
                                                       delta, out.grad);
            return out;
        }
        case Method::autodiff: {
            const Eigen::MatrixXd targets = detail::signal_values(view, pts);
            detail::require_finite(targets, "signal value");
            out.loss = detail::derivative_loss(field, pts, DerivOrder::uniform(d, k), targets,
                                               kind, delta, out.grad);
            return out;
        }
        case Method::autodiff_reduced: {
            const Eigen::MatrixXd f = detail::signal_values(view, pts);
            detail::require_finite(f, "signal value");
            const int blocks = reduction_block_count(d, k);
            Eigen::MatrixXd targets(m * blocks, B);
            for (int b = 0; b < blocks; ++b) {
                const auto e = reduction_exponents(d, k, b);
                for (int i = 0; i < B; ++i) {
                    double scale = 1.0;
                    for (int a = 0; a < d; ++a)
                        for (int p = 0; p < e[static_cast<size_t>(a)]; ++p) scale *= pts(a, i);
                    for (int c = 0; c < m; ++c)
                        targets(reduction_row(m, b, c), i) = scale * f(c, i);
                }
            }
            out.loss = detail::derivative_loss(field, pts, DerivOrder::uniform(d, 1), targets,
                                               kind, delta, out.grad);
            return out;
        }
        case Method::fd:
        case Method::fd_comp: {
            Eigen::MatrixXd targets;
            if (method == Method::fd) {
                targets = detail::signal_values(view, pts);
            } else {
                const KernelSpec kern = KernelSpec::bspline(k, cfg.eps);
                targets.resize(m, B);
                for (int i = 0; i < B; ++i) {
                    McSampler ms(d, kernel_rng.next_u64());
                    Coords x = Coords::from(std::span<const double>(pts.col(i).data(), d));
                    const std::vector<double> t = mc_convolve(view, x, kern, cfg.n_kernel, ms);
                    for (int c = 0; c < m; ++c) targets(c, i) = t[static_cast<size_t>(c)];
                }
            }
            detail::require_finite(targets, "signal value");

            const Stencil st = fd_stencil(k, cfg.eps);
            int group = 1;
            for (int a = 0; a < d; ++a) group *= k + 1;
            Eigen::MatrixXd eval_pts(d, B * group);
            Eigen::MatrixXd coeff(group, B);
            for (int i = 0; i < B; ++i)
                for (int g = 0; g < group; ++g) {
                    int rem = g;
                    double w = 1.0;
                    for (int a = 0; a < d; ++a) {
                        const int ja = rem % (k + 1);
                        rem /= k + 1;
                        eval_pts(a, i * group + g) =
                            pts(a, i) + st.offsets[static_cast<size_t>(ja)];
                        w *= st.weights[static_cast<size_t>(ja)];
                    }
                    coeff(g, i) = w;
                }
            out.loss = detail::linear_combination_loss(field, eval_pts, group, coeff, targets,
                                                       kind, delta, out.grad);
            return out;
        }
        case Method::smooth:
        case Method::smooth_comp: {
            Eigen::MatrixXd targets;
            if (method == Method::smooth) {
                targets = detail::signal_values(view, pts);
            } else {
                const KernelSpec kern = KernelSpec::gaussian(cfg.sigma);
                targets.resize(m, B);
                for (int i = 0; i < B; ++i) {
                    McSampler ms(d, kernel_rng.next_u64());
                    ms.sobol = SobolSampler::shifted(d, kernel_rng);
                    Coords x = Coords::from(std::span<const double>(pts.col(i).data(), d));
                    const std::vector<double> t = mc_convolve(view, x, kern, cfg.n_kernel, ms);
                    for (int c = 0; c < m; ++c) targets(c, i) = t[static_cast<size_t>(c)];
                }
            }
            detail::require_finite(targets, "signal value");

            const DerivOrder ord = DerivOrder::uniform(d, k);
            int n = cfg.n_kernel;
            if (n % 2 != 0) n += 1;  // estimator draws come in antithetic pairs

            const auto fill = [&](Eigen::MatrixXd& eval_pts, Eigen::MatrixXd& coeff) {
                eval_pts.resize(d, B * n);
                coeff.resize(n, B);
                for (int i = 0; i < B; ++i) {
                    SobolSampler sob = SobolSampler::shifted(d, shift_rng);
                    const SmoothSamples ss = draw_smooth_samples(ord, cfg.sigma, n, sob);
                    for (int t = 0; t < n; ++t) {
                        for (int a = 0; a < d; ++a)
                            eval_pts(a, i * n + t) = pts(a, i) - ss.tau(a, t);
                        coeff(t, i) = ss.weight[t] / n;
                    }
                }
            };
            Eigen::MatrixXd eval_a, coeff_a;
            fill(eval_a, coeff_a);
            if (cfg.debias) {
                // loss side and gradient side use independent realizations
                Eigen::MatrixXd eval_b, coeff_b;
                fill(eval_b, coeff_b);
                out.loss = detail::linear_combination_loss(field, eval_a, n, coeff_a, targets,
                                                           kind, delta, out.grad, &eval_b,
                                                           &coeff_b);
            } else {
                out.loss = detail::linear_combination_loss(field, eval_a, n, coeff_a, targets,
                                                           kind, delta, out.grad);
            }
            return out;
        }
    }
    throw std::invalid_argument("method_step: bad method tag");
}

// ---------------------------------------------------------------------------
// training loop

struct TraceEntry {
    int iteration = 0;
    double loss = 0.0;
};

struct TrainResult {
    Method method = Method::autodiff;
    int k = 1;
    int channels = 1;
    NeuralField field;
    bool converged = true;
    std::string diagnostic;
    std::vector<TraceEntry> trace;
};

/// Initialize a field for the method and run the supervision loop with Adam.
/// The field config's out and pe_norm_order are derived from the method; a
/// divergent run stops early and is reported, not thrown.
inline TrainResult train_run(Method method, const Signal& sig, FieldConfig field_cfg,
                             const TrainConfig& cfg) {
    cfg.validate();
    const int d = sig.dims();
    const int m = sig.channels();
    field_cfg.d = d;
    field_cfg.out = method == Method::autodiff_reduced
                        ? m * reduction_block_count(d, cfg.k)
                        : m;
    field_cfg.pe_norm_order =
        field_cfg.pe_normalized ? method_norm_order(method, d, cfg.k) : 0;

    TrainResult res;
    res.method = method;
    res.k = cfg.k;
    res.channels = m;
    res.field = field_init(field_cfg, cfg.seed);

    const int iters = cfg.resolved_iterations(method);
    if (iters == 0) return res;

    AdamState adam(res.field.theta.size());
    RngStream master(cfg.seed);
    int over_threshold = 0;
    for (int it = 1; it <= iters; ++it) {
        StepResult sr;
        try {
            sr = method_step(method, res.field, sig, cfg, master.fork(static_cast<uint64_t>(it)));
        } catch (const std::runtime_error& e) {
            res.converged = false;
            res.diagnostic = std::string(e.what()) + " at iteration " + std::to_string(it);
            return res;
        }
        if (it == 1 || it % cfg.trace_every == 0 || it == iters)
            res.trace.push_back({it, sr.loss});
        if (!std::isfinite(sr.loss)) {
            res.converged = false;
            res.diagnostic = "non-finite loss at iteration " + std::to_string(it);
            return res;
        }
        if (sr.loss > cfg.divergence_loss) {
            if (++over_threshold >= cfg.divergence_patience) {
                res.converged = false;
                res.diagnostic = "loss above " + std::to_string(cfg.divergence_loss) + " for " +
                                 std::to_string(over_threshold) + " consecutive iterations";
                return res;
            }
        } else {
            over_threshold = 0;
        }
        adam_step(adam, res.field.theta, sr.grad, cfg.lr);
    }
    return res;
}

}  // namespace nad

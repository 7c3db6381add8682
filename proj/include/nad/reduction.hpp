#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "nad/field.hpp"
#include "nad/jets.hpp"
#include "nad/types.hpp"

namespace nad {

// Reduction of a k-fold repeated antiderivative to first-order pieces:
//
//   A_k(x) = sum_{l=1..k} c_{k,l} x^{l-1} B_l(x),   B_l = 1-fold antiderivative
//                                                         of t^{k-l} f(t),
//
// applied per axis in d dimensions, so a bank of k^d sub-antiderivatives
// recombines into A_k with one forward pass. The (power, integrand-exponent)
// pairing is the one that satisfies the monomial identity
// A_k[x^p] = p!/(p+k)! x^{p+k}; the coefficient formula alone does not pin it.

/// c_{k,l} = (-1)^{k-l} / ((l-1)!(k-l)!) for l = 1..k.
inline std::vector<double> haddad_coeffs(int k) {
    if (k < 1 || k > 4) throw std::invalid_argument("haddad_coeffs: order must be in [1,4]");
    std::vector<double> c(static_cast<size_t>(k));
    for (int l = 1; l <= k; ++l) {
        const double sign = ((k - l) % 2 == 0) ? 1.0 : -1.0;
        c[static_cast<size_t>(l - 1)] = sign / (factorial(l - 1) * factorial(k - l));
    }
    return c;
}

/// Exponent on the supervision integrand paired with coefficient slot l.
inline int haddad_integrand_exponent(int k, int l) { return k - l; }

/// Power on the recombination monomial paired with coefficient slot l.
inline int haddad_monomial_power(int l) { return l - 1; }

/// Blocks in a reduced bank: one per multi-index in {1..k}^d.
inline int reduction_block_count(int d, int k) {
    int n = 1;
    for (int j = 0; j < d; ++j) n *= k;
    return n;
}

/// Multi-index l of a block, entries in 1..k, axis 0 varying fastest.
inline std::array<int, kMaxDims> reduction_multi_index(int d, int k, int block) {
    std::array<int, kMaxDims> l{};
    for (int j = 0; j < d; ++j) {
        l[static_cast<size_t>(j)] = 1 + block % k;
        block /= k;
    }
    return l;
}

/// Row of (block, channel) in the bank's stacked output of m * k^d values.
inline int reduction_row(int m, int block, int channel) { return block * m + channel; }

/// Supervision target for one block: fx scaled by prod_j x_j^{e_j}.
inline std::vector<double> reduc_target(std::span<const int> exponents, const Coords& x,
                                        std::span<const double> fx) {
    if (static_cast<int>(exponents.size()) != x.dims())
        throw std::invalid_argument("reduc_target: exponent count must match dims");
    double scale = 1.0;
    for (int j = 0; j < x.dims(); ++j) {
        const int e = exponents[static_cast<size_t>(j)];
        if (e < 0) throw std::invalid_argument("reduc_target: negative exponent");
        for (int i = 0; i < e; ++i) scale *= x[j];
    }
    std::vector<double> out(fx.begin(), fx.end());
    for (double& v : out) v *= scale;
    return out;
}

/// Exponent vector for a block's supervision target, e_j = k - l_j.
inline std::array<int, kMaxDims> reduction_exponents(int d, int k, int block) {
    const auto l = reduction_multi_index(d, k, block);
    std::array<int, kMaxDims> e{};
    for (int j = 0; j < d; ++j)
        e[static_cast<size_t>(j)] = haddad_integrand_exponent(k, l[static_cast<size_t>(j)]);
    return e;
}

/// Recombine bank outputs (k^d * m values, rows per reduction_row) into the
/// m-channel repeated antiderivative at x.
inline std::vector<double> haddad_combine_values(int d, int k, int m, const Coords& x,
                                                 std::span<const double> bank_values) {
    const int blocks = reduction_block_count(d, k);
    if (static_cast<int>(bank_values.size()) != blocks * m)
        throw std::invalid_argument("haddad_combine_values: bank size mismatch");
    const std::vector<double> c = haddad_coeffs(k);
    std::vector<double> out(static_cast<size_t>(m), 0.0);
    for (int b = 0; b < blocks; ++b) {
        const auto l = reduction_multi_index(d, k, b);
        double w = 1.0;
        for (int j = 0; j < d; ++j) {
            const int lj = l[static_cast<size_t>(j)];
            w *= c[static_cast<size_t>(lj - 1)];
            for (int i = 0; i < haddad_monomial_power(lj); ++i) w *= x[j];
        }
        for (int ch = 0; ch < m; ++ch)
            out[static_cast<size_t>(ch)] +=
                w * bank_values[static_cast<size_t>(reduction_row(m, b, ch))];
    }
    return out;
}

/// Jet-level recombination: bank_jets holds one jet per bank row (all on the
/// same shape, expanded at x); returns m jets of the repeated antiderivative.
inline std::vector<Jet> haddad_combine_jets(int d, int k, int m, const Coords& x,
                                            std::span<const Jet> bank_jets) {
    const int blocks = reduction_block_count(d, k);
    if (static_cast<int>(bank_jets.size()) != blocks * m)
        throw std::invalid_argument("haddad_combine_jets: bank size mismatch");
    const std::vector<double> c = haddad_coeffs(k);
    const JetShape shape = bank_jets.empty() ? JetShape() : bank_jets[0].shape;
    std::vector<Jet> out(static_cast<size_t>(m), Jet(shape));
    for (int b = 0; b < blocks; ++b) {
        const auto l = reduction_multi_index(d, k, b);
        double cw = 1.0;
        Jet monom = Jet::constant(shape, 1.0);
        for (int j = 0; j < d; ++j) {
            const int lj = l[static_cast<size_t>(j)];
            cw *= c[static_cast<size_t>(lj - 1)];
            monom = jet_mul(monom, jet_axis_monomial(shape, j, x[j], haddad_monomial_power(lj)));
        }
        monom *= cw;
        for (int ch = 0; ch < m; ++ch) {
            const Jet& bj = bank_jets[static_cast<size_t>(reduction_row(m, b, ch))];
            if (!(bj.shape == shape))
                throw std::invalid_argument("haddad_combine_jets: mixed jet shapes");
            out[static_cast<size_t>(ch)] += jet_mul(monom, bj);
        }
    }
    return out;
}

/// A field whose k^d * m outputs are the sub-antiderivative blocks of an
/// m-channel signal. Evaluation cost of the recombined antiderivative is one
/// forward pass regardless of k.
struct ReducedFieldBank {
    NeuralField field;
    int k = 1;
    int m = 1;

    ReducedFieldBank(NeuralField f, int order, int channels)
        : field(std::move(f)), k(order), m(channels) {
        if (k < 1 || k > 4) throw std::invalid_argument("ReducedFieldBank: order must be in [1,4]");
        if (m < 1) throw std::invalid_argument("ReducedFieldBank: channels must be positive");
        if (field.cfg.out != reduction_block_count(field.cfg.d, k) * m)
            throw std::invalid_argument("ReducedFieldBank: field output must be m * k^d");
    }

    int dims() const { return field.cfg.d; }
    int blocks() const { return reduction_block_count(field.cfg.d, k); }
};

/// Recombined antiderivative values at x (m channels).
inline std::vector<double> haddad_combine(const ReducedFieldBank& bank, const Coords& x) {
    const std::vector<double> raw = field_forward(bank.field, x);
    return haddad_combine_values(bank.dims(), bank.k, bank.m, x, raw);
}

/// Mixed partial of the recombined antiderivative, one value per channel.
inline std::vector<double> haddad_combine_partial(const ReducedFieldBank& bank, const Coords& x,
                                                  const DerivOrder& ord) {
    const std::vector<Jet> raw = field_output_jets(bank.field, x, ord);
    const std::vector<Jet> combined = haddad_combine_jets(bank.dims(), bank.k, bank.m, x, raw);
    std::vector<double> out(static_cast<size_t>(bank.m));
    for (int ch = 0; ch < bank.m; ++ch) out[static_cast<size_t>(ch)] = combined[static_cast<size_t>(ch)].derivative(ord);
    return out;
}

}  // namespace nad

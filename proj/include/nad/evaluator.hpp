#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nad/field.hpp"
#include "nad/reduction.hpp"
#include "nad/signals.hpp"
#include "nad/training.hpp"
#include "nad/types.hpp"

namespace nad {

/// Uniform handle on a learned or exact k-fold repeated antiderivative:
/// values A(x) and mixed partials of A, m channels each.
struct AntiderivativeEvaluator {
    int d = 1;
    int m = 1;
    int k = 1;
    std::function<std::vector<double>(const Coords&)> value;
    std::function<std::vector<double>(const Coords&, const DerivOrder&)> mixed;
};

inline AntiderivativeEvaluator make_field_evaluator(NeuralField field, int k) {
    auto f = std::make_shared<NeuralField>(std::move(field));
    AntiderivativeEvaluator ev;
    ev.d = f->cfg.d;
    ev.m = f->cfg.out;
    ev.k = k;
    ev.value = [f](const Coords& x) { return field_forward(*f, x); };
    ev.mixed = [f](const Coords& x, const DerivOrder& ord) {
        return field_mixed_partial(*f, x, ord);
    };
    return ev;
}

inline AntiderivativeEvaluator make_bank_evaluator(ReducedFieldBank bank) {
    auto b = std::make_shared<ReducedFieldBank>(std::move(bank));
    AntiderivativeEvaluator ev;
    ev.d = b->dims();
    ev.m = b->m;
    ev.k = b->k;
    ev.value = [b](const Coords& x) { return haddad_combine(*b, x); };
    ev.mixed = [b](const Coords& x, const DerivOrder& ord) {
        return haddad_combine_partial(*b, x, ord);
    };
    return ev;
}

/// Exact evaluator from the closed-form rectangle-mixture antiderivative.
inline AntiderivativeEvaluator make_rectangle_oracle_evaluator(Signal sig, int k) {
    if (sig.kind() != Signal::Kind::rectangle_mixture)
        throw std::invalid_argument("make_rectangle_oracle_evaluator: wrong signal kind");
    auto s = std::make_shared<Signal>(std::move(sig));
    AntiderivativeEvaluator ev;
    ev.d = s->dims();
    ev.m = s->channels();
    ev.k = k;
    ev.value = [s, k](const Coords& x) { return rectangle_antiderivative(*s, k, x); };
    ev.mixed = [s, k](const Coords& x, const DerivOrder& ord) {
        return rectangle_antiderivative_partial(*s, k, x, ord);
    };
    return ev;
}

/// Exact evaluator for any signal kind. Rectangle mixtures use the closed
/// form throughout; other kinds integrate values by adaptive quadrature and
/// serve only the full order-(k,..,k) mixed partial, which equals the signal
/// itself.
inline AntiderivativeEvaluator make_oracle_evaluator(Signal sig, int k,
                                                     QuadratureOptions opts = {}) {
    if (sig.kind() == Signal::Kind::rectangle_mixture)
        return make_rectangle_oracle_evaluator(std::move(sig), k);
    auto s = std::make_shared<Signal>(std::move(sig));
    AntiderivativeEvaluator ev;
    ev.d = s->dims();
    ev.m = s->channels();
    ev.k = k;
    ev.value = [s, k, opts](const Coords& x) {
        return quadrature_antiderivative(s->view(), k, x, opts);
    };
    const int d = ev.d, m = ev.m;
    ev.mixed = [s, k, d, m](const Coords& x, const DerivOrder& ord) {
        for (int a = 0; a < d; ++a)
            if (ord[a] != k)
                throw std::invalid_argument(
                    "make_oracle_evaluator: only the full-order partial is available");
        std::vector<double> out(static_cast<size_t>(m));
        s->eval(x.v.data(), out.data());
        return out;
    };
    return ev;
}

/// Wrap a finished training run: reduced banks recombine, fields evaluate
/// directly.
inline AntiderivativeEvaluator make_train_result_evaluator(const TrainResult& res) {
    if (res.method == Method::autodiff_reduced)
        return make_bank_evaluator(ReducedFieldBank(res.field, res.k, res.channels));
    return make_field_evaluator(res.field, res.k);
}

}  // namespace nad

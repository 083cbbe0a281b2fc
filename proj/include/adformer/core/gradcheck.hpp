#pragma once

#include <functional>

#include "adformer/core/array.hpp"
#include "adformer/core/ops.hpp"

namespace adformer {

/// Compares tape gradients of a scalar-valued function against central finite
/// differences. `f` must be deterministic and must rebuild its graph from the
/// current parameter values on every call. Returns the maximum over all
/// parameter coordinates of |analytic − numeric| / max(1, |analytic|, |numeric|).
template <typename S>
S grad_check(const std::function<ArrayT<S>()> &f, std::vector<ArrayT<S>> params,
             S step = S(1e-5)) {
    if (step <= S(0)) throw std::invalid_argument("grad_check: step must be positive");
    std::vector<std::vector<S>> analytic;
    {
        for (auto &p : params) {
            p.set_requires_grad(true);
            p.ensure_grad();
            p.zero_grad();
        }
        TapeT<S> tape;
        typename TapeT<S>::Scope scope(tape);
        ArrayT<S> loss = f();
        if (!std::isfinite(static_cast<double>(loss.scalar()))) {
            throw std::runtime_error("grad_check: non-finite loss");
        }
        tape.backward(loss);
        for (auto &p : params) {
            analytic.emplace_back(p.grad().begin(), p.grad().end());
        }
    }
    S worst = S(0);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ArrayT<S> &p = params[pi];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const S saved = p.data()[i];
            p.data()[i] = saved + step;
            const S up = f().scalar();
            p.data()[i] = saved - step;
            const S down = f().scalar();
            p.data()[i] = saved;
            if (!std::isfinite(static_cast<double>(up)) ||
                !std::isfinite(static_cast<double>(down))) {
                throw std::runtime_error("grad_check: non-finite loss during perturbation");
            }
            const S numeric = (up - down) / (S(2) * step);
            const S a = analytic[pi][i];
            const S denom = std::max(S(1), std::max(std::fabs(a), std::fabs(numeric)));
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace adformer

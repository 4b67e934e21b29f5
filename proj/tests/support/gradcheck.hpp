#pragma once

// Central finite-difference gradient oracle for test use. Evaluates the loss
// through fresh forward passes only, so it stays independent of the backward
// implementation it checks.

#include <algorithm>
#include <cmath>
#include <functional>

#include "hiercls/tensor.hpp"

namespace testsupport {

/// d loss / d param via central differences, perturbing one element at a
/// time. `loss` must re-run the forward pass reading the current contents of
/// `param`.
inline hiercls::Tensor finite_diff_grad(hiercls::Tensor& param,
                                        const std::function<double()>& loss,
                                        double step = 1e-5) {
    hiercls::Tensor g(param.shape);
    for (std::size_t j = 0; j < param.size(); ++j) {
        const double orig = param.data[j];
        param.data[j] = orig + step;
        const double up = loss();
        param.data[j] = orig - step;
        const double down = loss();
        param.data[j] = orig;
        g.data[j] = (up - down) / (2.0 * step);
    }
    return g;
}

/// max_j |a_j - b_j| / max(1, |a_j|, |b_j|): relative for large entries,
/// absolute near zero, which matches what a 1e-5 central difference in
/// double precision can resolve.
inline double max_rel_err(const hiercls::Tensor& a, const hiercls::Tensor& b) {
    if (!a.same_shape(b)) return HUGE_VAL;
    double worst = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double denom =
            std::max({1.0, std::fabs(a.data[j]), std::fabs(b.data[j])});
        worst = std::max(worst, std::fabs(a.data[j] - b.data[j]) / denom);
    }
    return worst;
}

} // namespace testsupport

#pragma once

#include "bggan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace bggan {

/// Compare the reverse-mode gradient of a scalar-valued function against
/// central finite differences, in double precision. Returns the maximum
/// relative error over all input elements.
inline double gradcheck_max_rel_error(
    const std::function<Var<double>(const Var<double>&)>& f, const Tensor4d& x0,
    double step = 1e-3) {
    Var<double> x = make_leaf(x0, true);
    Var<double> y = f(x);
    if (y.value().numel() != 1) throw InvalidInputError("gradcheck: f must return a scalar");
    GradMap<double> grads = backward(y);
    auto it = grads.find(x.node());
    Tensor4d analytic = it != grads.end() ? it->second.value() : Tensor4d::zeros(x0.shape);

    NoGradGuard ng;
    double max_rel = 0;
    Tensor4d xp = x0;
    for (Index i = 0; i < x0.numel(); ++i) {
        const double orig = xp.data[i];
        xp.data[i] = orig + step;
        const double up = f(make_constant(xp)).value().data[0];
        xp.data[i] = orig - step;
        const double dn = f(make_constant(xp)).value().data[0];
        xp.data[i] = orig;
        const double numeric = (up - dn) / (2 * step);
        const double a = analytic.data[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

}  // namespace bggan

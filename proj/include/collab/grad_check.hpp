#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "collab/param_store.hpp"
#include "collab/rng.hpp"

namespace collab {

// Scalar loss over the current ParamStore contents. When with_grads is true
// the callee must also accumulate analytic gradients into the store.
using LossFn = std::function<double(bool with_grads)>;

// Central-difference check of analytic gradients:
//   numeric = (f(p + eps) - f(p - eps)) / (2 eps)
//   rel err = |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// Returns the max relative error over the sampled coordinates.
// max_coords_per_param == 0 checks every coordinate.
inline double finite_diff_check(ParamStore& params, const LossFn& loss, double eps, Rng& rng,
                                std::size_t max_coords_per_param = 0) {
    if (eps < 1e-7 || eps > 1e-3)
        throw ConfigError("finite_diff_check: eps must be in [1e-7, 1e-3]");
    params.zero_grads();
    loss(true);
    double worst = 0.0;
    for (auto& [name, p] : params.values()) {
        const Tensor& g = params.grad(name);
        std::vector<std::size_t> coords(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) coords[i] = i;
        if (max_coords_per_param > 0 && coords.size() > max_coords_per_param) {
            for (std::size_t i = 0; i < max_coords_per_param; ++i)
                std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
            coords.resize(max_coords_per_param);
        }
        for (std::size_t c : coords) {
            const double orig = p[c];
            p[c] = orig + eps;
            const double fp = loss(false);
            p[c] = orig - eps;
            const double fm = loss(false);
            p[c] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = g[c];
            const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace collab

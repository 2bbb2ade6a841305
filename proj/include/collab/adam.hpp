#pragma once

#include <cmath>
#include <map>
#include <string>

#include "collab/param_store.hpp"

namespace collab {

// Adam with bias correction. Defaults are the toy-scale choices; moments are
// created lazily, shaped after their parameters.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

inline void adam_step(ParamStore& params, AdamState& st) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (auto& [name, p] : params.values()) {
        const Tensor& g = params.grad(name);
        auto mi = st.m.find(name);
        if (mi == st.m.end()) {
            mi = st.m.emplace(name, Tensor(p.shape())).first;
            st.v.emplace(name, Tensor(p.shape()));
        }
        Tensor& m = mi->second;
        Tensor& v = st.v.at(name);
        m.require_same_shape(p, "adam_step moment");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace collab

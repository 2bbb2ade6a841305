#pragma once

#include <map>
#include <string>

#include "collab/rng.hpp"
#include "collab/tensor.hpp"

namespace collab {

// Named parameter tensors plus matching gradient accumulators. Ordered map so
// iteration (optimizer, checkpoints) is deterministic.
class ParamStore {
public:
    Tensor& create(const std::string& name, Shape shape) {
        if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        auto [it, _] = params_.emplace(name, Tensor(shape));
        grads_.emplace(name, Tensor(std::move(shape)));
        return it->second;
    }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    Tensor& value(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const Tensor& value(const std::string& name) const {
        return const_cast<ParamStore*>(this)->value(name);
    }

    Tensor& grad(const std::string& name) {
        auto it = grads_.find(name);
        if (it == grads_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    void accumulate_grad(const std::string& name, const Tensor& g) {
        Tensor& dst = grad(name);
        dst.require_same_shape(g, "accumulate_grad");
        dst += g;
    }

    void zero_grads() {
        for (auto& [_, g] : grads_) g.fill(0.0);
    }

    std::size_t tensor_count() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : params_) n += t.size();
        return n;
    }

    std::map<std::string, Tensor>& values() { return params_; }
    const std::map<std::string, Tensor>& values() const { return params_; }

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> grads_;
};

// Uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
inline void glorot_init(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-s, s);
}

}  // namespace collab

#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stylemill/graph.hpp"
#include "stylemill/tensor.hpp"

namespace sm {

// Named parameter tensor. Names are hierarchical ("dit.block0.ffn.w1")
// and double as checkpoint keys.
struct Param {
    std::string name;
    Tensor value;
};

using ParamRefs = std::vector<Param*>;

// Binds parameters into a graph as leaves, one leaf per parameter, with
// requires_grad set for members of the trainable set. Forward code calls
// the binder instead of creating leaves so gradients can be read back.
class Binder {
public:
    explicit Binder(ag::Graph& g) : g_(g) {}
    Binder(ag::Graph& g, const std::unordered_set<const Param*>& trainable)
        : g_(g), trainable_(&trainable) {}

    ag::Var operator()(const Param& p) {
        auto it = cache_.find(&p);
        if (it != cache_.end()) return it->second;
        const bool rg = trainable_ && trainable_->count(&p) > 0;
        ag::Var v = g_.leaf(p.value, rg);
        cache_.emplace(&p, v);
        return v;
    }

    // Gradient of a bound trainable param (zeros if never bound).
    const Tensor* grad(const Param& p) const {
        auto it = cache_.find(&p);
        if (it == cache_.end() || !it->second->requires_grad) return nullptr;
        return &it->second->grad;
    }

private:
    ag::Graph& g_;
    const std::unordered_set<const Param*>* trainable_ = nullptr;
    std::unordered_map<const Param*, ag::Var> cache_;
};

std::unordered_set<const Param*> to_set(const ParamRefs& refs);

// Params whose name starts with any of the given prefixes.
ParamRefs filter_by_prefix(const ParamRefs& all, const std::vector<std::string>& prefixes);
// Params whose name contains any of the given substrings.
ParamRefs filter_by_substring(const ParamRefs& all, const std::vector<std::string>& needles);

int64_t total_numel(const ParamRefs& refs);

// Deterministic Adam. Gradients are pulled from the binder; parameters
// not bound in this step (or bound without a gradient path) are skipped.
class Adam {
public:
    Adam(ParamRefs params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(const Binder& binder);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    const ParamRefs& params() const { return params_; }

private:
    ParamRefs params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace sm

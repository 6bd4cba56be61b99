#pragma once

#include <string>
#include <vector>

#include "stylemill/params.hpp"

namespace sm {

class Rng;

// Linear layer parameters. Weights init N(0, 1/sqrt(in)); bias zero.
struct LinearParams {
    Param w;  // [in, out]
    Param b;  // [out]

    static LinearParams init(const std::string& name, int64_t in, int64_t out, Rng& rng,
                             bool zero_weights = false);
    void collect(ParamRefs& out);

    Tensor forward(const Tensor& x) const;  // [..., in] -> [..., out]
    ag::Var forward(ag::Graph& g, Binder& bind, ag::Var x) const;
};

// MLP with GELU between layers. zero_final zero-initializes the last
// layer so a fresh head outputs exactly zero.
struct MlpParams {
    std::vector<LinearParams> layers;

    static MlpParams init(const std::string& name, int64_t in, const std::vector<int64_t>& hidden,
                          int64_t out, Rng& rng, bool zero_final = false);
    void collect(ParamRefs& out);

    Tensor forward(const Tensor& x) const;
    ag::Var forward(ag::Graph& g, Binder& bind, ag::Var x) const;
};

}  // namespace sm

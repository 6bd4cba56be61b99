#include "stylemill/nn.hpp"

#include <cmath>

#include "stylemill/error.hpp"
#include "stylemill/rng.hpp"

namespace sm {

LinearParams LinearParams::init(const std::string& name, int64_t in, int64_t out, Rng& rng,
                                bool zero_weights) {
    LinearParams p;
    p.w.name = name + ".w";
    p.b.name = name + ".b";
    p.w.value = zero_weights ? Tensor::zeros({in, out})
                             : randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    p.b.value = Tensor::zeros({out});
    return p;
}

void LinearParams::collect(ParamRefs& out) {
    out.push_back(&w);
    out.push_back(&b);
}

Tensor LinearParams::forward(const Tensor& x) const {
    const int64_t in = w.value.dim(0), out_dim = w.value.dim(1);
    SM_CHECK(x.cols() == in, "linear '", w.name, "': input width ", x.cols(), " != ", in);
    Shape shape = x.shape();
    shape.back() = out_dim;
    Tensor y(shape);
    matmul_into(y, x, w.value);
    for (int64_t r = 0; r < y.rows(); ++r)
        for (int64_t c = 0; c < out_dim; ++c) y[r * out_dim + c] += b.value[c];
    return y;
}

ag::Var LinearParams::forward(ag::Graph& g, Binder& bind, ag::Var x) const {
    return ag::linear(g, x, bind(w), bind(b));
}

MlpParams MlpParams::init(const std::string& name, int64_t in, const std::vector<int64_t>& hidden,
                          int64_t out, Rng& rng, bool zero_final) {
    MlpParams mlp;
    std::vector<int64_t> dims;
    dims.push_back(in);
    for (int64_t h : hidden) dims.push_back(h);
    dims.push_back(out);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = i + 2 == dims.size();
        mlp.layers.push_back(LinearParams::init(name + ".l" + std::to_string(i), dims[i], dims[i + 1],
                                                rng, zero_final && last));
    }
    return mlp;
}

void MlpParams::collect(ParamRefs& out) {
    for (auto& l : layers) l.collect(out);
}

Tensor MlpParams::forward(const Tensor& x) const {
    Tensor y = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        y = layers[i].forward(y);
        if (i + 1 < layers.size())
            for (int64_t j = 0; j < y.numel(); ++j)
                y[j] = 0.5 * y[j] * (1.0 + std::erf(y[j] * 0.70710678118654752440));
    }
    return y;
}

ag::Var MlpParams::forward(ag::Graph& g, Binder& bind, ag::Var x) const {
    ag::Var y = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        y = layers[i].forward(g, bind, y);
        if (i + 1 < layers.size()) y = ag::gelu(g, y);
    }
    return y;
}

}  // namespace sm

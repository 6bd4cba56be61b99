#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "stylemill/tensor.hpp"

namespace sm::ag {

// Reverse-mode tape. Each op appends a node holding its value and a
// closure that scatters the node's gradient into its parents. A graph is
// built per forward pass and discarded afterwards; parameters enter as
// leaves and their gradients are read back off the leaf nodes.
struct Node {
    Tensor value;
    Tensor grad;  // allocated only when requires_grad
    bool requires_grad = false;
    std::function<void(Node&)> backward;

    void accum(const Tensor& g) { grad.add_(g); }
};

using Var = Node*;

class Graph {
public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

    // Seeds d(root)/d(root) = 1 and walks the tape in reverse. root must
    // be scalar.
    void backward(Var root);

    size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;
};

// ---- elementwise / shape ----
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double c);
Var add_scalar(Graph& g, Var a, double c);
Var relu(Graph& g, Var a);
Var gelu(Graph& g, Var a);
Var reshape(Graph& g, Var a, Shape shape);
Var transpose(Graph& g, Var a);  // 2D
Var concat_rows(Graph& g, const std::vector<Var>& parts);
Var concat_cols(Graph& g, Var a, Var b);  // same row count
Var slice_rows(Graph& g, Var a, int64_t r0, int64_t r1);
Var take_row(Graph& g, Var table, int64_t row);
Var repeat_rows(Graph& g, Var row, int64_t count);
// out[i] = a[idx[i]]; idx need not be a bijection.
Var reindex(Graph& g, Var a, std::vector<int64_t> idx, Shape out_shape);

// ---- linear algebra ----
Var matmul(Graph& g, Var a, Var b);
// x: [..., K] -> [..., N]; leading dims preserved. bias may be nullptr.
Var linear(Graph& g, Var x, Var w, Var bias);
// y[r, c] = x[r, c] * s[c], s broadcast over rows.
Var row_scale(Graph& g, Var x, Var s);
Var rmsnorm(Graph& g, Var x, Var gain, double eps = 1e-6);

// ---- reductions ----
Var sum_all(Graph& g, Var a);
Var mean_all(Graph& g, Var a);
Var sqrt_scalar(Graph& g, Var a);
Var mse(Graph& g, Var a, Var b);
// sqrt(sum(x^2)); backward treats the zero vector as having zero slope.
Var l2norm(Graph& g, Var a);

// ---- attention ----
enum class AttnAxis {
    Spatial,   // tokens [T, S, C]: attend across S within each frame
    Temporal,  // tokens [T, S, C]: attend across T at each spatial site
};

// Multi-head self-attention over already-projected q/k/v token grids.
// identity_probs replaces the softmax matrix with the identity (each
// position keeps its own value row); used to ablate attention mixing.
Var mha_self(Graph& g, Var q, Var k, Var v, int64_t frames, int64_t sites, int heads,
             AttnAxis axis, bool identity_probs = false);

// Every row of q attends over the rows of k/v.
Var cross_attn(Graph& g, Var q, Var k, Var v, int heads);

}  // namespace sm::ag

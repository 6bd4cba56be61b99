#include "stylemill/graph.hpp"

#include <Eigen/Core>
#include <cmath>

#include "stylemill/error.hpp"

namespace sm::ag {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

Var Graph::leaf(Tensor value, bool requires_grad) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad = Tensor::zeros(n.value.shape());
    return &n;
}

Var Graph::make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    bool rg = false;
    for (Var p : parents) rg = rg || p->requires_grad;
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.requires_grad = rg;
    if (rg) {
        n.grad = Tensor::zeros(n.value.shape());
        n.backward = std::move(backward);
    }
    return &n;
}

void Graph::backward(Var root) {
    SM_CHECK(root->value.numel() == 1, "backward: root must be scalar");
    SM_CHECK(root->requires_grad, "backward: root does not depend on any trainable leaf");
    root->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->requires_grad && it->backward) it->backward(*it);
    }
}

// ---- elementwise ----

Var add(Graph& g, Var a, Var b) {
    SM_CHECK(a->value.same_shape(b->value), "add: shape mismatch ", shape_str(a->value.shape()),
             " vs ", shape_str(b->value.shape()));
    Tensor out = a->value;
    out.add_(b->value);
    return g.make(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accum(n.grad);
        if (b->requires_grad) b->accum(n.grad);
    });
}

Var sub(Graph& g, Var a, Var b) {
    SM_CHECK(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor out = a->value;
    out.add_scaled_(b->value, -1.0);
    return g.make(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accum(n.grad);
        if (b->requires_grad) b->grad.add_scaled_(n.grad, -1.0);
    });
}

Var mul(Graph& g, Var a, Var b) {
    SM_CHECK(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return g.make(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * b->value[i];
        if (b->requires_grad)
            for (int64_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i] * a->value[i];
    });
}

Var scale(Graph& g, Var a, double c) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return g.make(std::move(out), {a}, [a, c](Node& n) {
        if (a->requires_grad) a->grad.add_scaled_(n.grad, c);
    });
}

Var add_scalar(Graph& g, Var a, double c) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return g.make(std::move(out), {a}, [a](Node& n) {
        if (a->requires_grad) a->accum(n.grad);
    });
}

Var relu(Graph& g, Var a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return g.make(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (a->value[i] > 0.0) a->grad[i] += n.grad[i];
    });
}

Var gelu(Graph& g, Var a) {
    const double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 0.39894228040143267794;
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double x = a->value[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return g.make(std::move(out), {a}, [a, inv_sqrt2, inv_sqrt_2pi](Node& n) {
        if (!a->requires_grad) return;
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            const double x = a->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            a->grad[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

Var reshape(Graph& g, Var a, Shape shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return g.make(std::move(out), {a}, [a](Node& n) {
        if (a->requires_grad) a->grad.add_scaled_(n.grad, 1.0);
    });
}

Var transpose(Graph& g, Var a) {
    const int64_t r = a->value.rows(), c = a->value.cols();
    Tensor out({c, r});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
    return g.make(std::move(out), {a}, [a, r, c](Node& n) {
        if (!a->requires_grad) return;
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) a->grad.at(i, j) += n.grad.at(j, i);
    });
}

Var concat_rows(Graph& g, const std::vector<Var>& parts) {
    SM_CHECK(!parts.empty(), "concat_rows: no inputs");
    const int64_t c = parts[0]->value.cols();
    int64_t total = 0;
    for (Var p : parts) {
        SM_CHECK(p->value.cols() == c, "concat_rows: column mismatch");
        total += p->value.rows();
    }
    Tensor out({total, c});
    int64_t r = 0;
    for (Var p : parts) {
        for (int64_t i = 0; i < p->value.numel(); ++i) out[r * c + i] = p->value[i];
        r += p->value.rows();
    }
    std::vector<Var> parents = parts;
    return g.make(std::move(out), parents, [parts, c](Node& n) {
        int64_t r = 0;
        for (Var p : parts) {
            if (p->requires_grad)
                for (int64_t i = 0; i < p->value.numel(); ++i) p->grad[i] += n.grad[r * c + i];
            r += p->value.rows();
        }
    });
}

Var concat_cols(Graph& g, Var a, Var b) {
    const int64_t r = a->value.rows(), ca = a->value.cols(), cb = b->value.cols();
    SM_CHECK(b->value.rows() == r, "concat_cols: row mismatch ", r, " vs ", b->value.rows());
    Tensor out({r, ca + cb});
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < ca; ++j) out.at(i, j) = a->value[i * ca + j];
        for (int64_t j = 0; j < cb; ++j) out.at(i, ca + j) = b->value[i * cb + j];
    }
    return g.make(std::move(out), {a, b}, [a, b, r, ca, cb](Node& n) {
        for (int64_t i = 0; i < r; ++i) {
            if (a->requires_grad)
                for (int64_t j = 0; j < ca; ++j) a->grad[i * ca + j] += n.grad.at(i, j);
            if (b->requires_grad)
                for (int64_t j = 0; j < cb; ++j) b->grad[i * cb + j] += n.grad.at(i, ca + j);
        }
    });
}

Var slice_rows(Graph& g, Var a, int64_t r0, int64_t r1) {
    const int64_t c = a->value.cols();
    SM_CHECK(0 <= r0 && r0 < r1 && r1 <= a->value.rows(), "slice_rows: bad range [", r0, ", ", r1,
             ") for ", a->value.rows(), " rows");
    Tensor out({r1 - r0, c});
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[r0 * c + i];
    return g.make(std::move(out), {a}, [a, r0, c](Node& n) {
        if (!a->requires_grad) return;
        for (int64_t i = 0; i < n.grad.numel(); ++i) a->grad[r0 * c + i] += n.grad[i];
    });
}

Var take_row(Graph& g, Var table, int64_t row) {
    const int64_t c = table->value.cols();
    SM_CHECK(0 <= row && row < table->value.rows(), "take_row: row ", row, " out of range");
    Tensor out({1, c});
    for (int64_t j = 0; j < c; ++j) out[j] = table->value.at(row, j);
    return g.make(std::move(out), {table}, [table, row, c](Node& n) {
        if (!table->requires_grad) return;
        for (int64_t j = 0; j < c; ++j) table->grad.at(row, j) += n.grad[j];
    });
}

Var repeat_rows(Graph& g, Var row, int64_t count) {
    SM_CHECK(row->value.rows() == 1, "repeat_rows: input must be a single row");
    const int64_t c = row->value.cols();
    Tensor out({count, c});
    for (int64_t r = 0; r < count; ++r)
        for (int64_t j = 0; j < c; ++j) out.at(r, j) = row->value[j];
    return g.make(std::move(out), {row}, [row, count, c](Node& n) {
        if (!row->requires_grad) return;
        for (int64_t r = 0; r < count; ++r)
            for (int64_t j = 0; j < c; ++j) row->grad[j] += n.grad.at(r, j);
    });
}

Var reindex(Graph& g, Var a, std::vector<int64_t> idx, Shape out_shape) {
    SM_CHECK(shape_numel(out_shape) == static_cast<int64_t>(idx.size()),
             "reindex: index count does not match output shape");
    Tensor out(std::move(out_shape));
    for (size_t i = 0; i < idx.size(); ++i) {
        SM_CHECK(idx[i] >= 0 && idx[i] < a->value.numel(), "reindex: index out of range");
        out[static_cast<int64_t>(i)] = a->value[idx[i]];
    }
    return g.make(std::move(out), {a}, [a, idx = std::move(idx)](Node& n) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < idx.size(); ++i) a->grad[idx[i]] += n.grad[static_cast<int64_t>(i)];
    });
}

// ---- linear algebra ----

Var matmul(Graph& g, Var a, Var b) {
    const int64_t m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
    SM_CHECK(b->value.rows() == k, "matmul: inner dims differ");
    Tensor out({m, n});
    matmul_into(out, a->value, b->value);
    return g.make(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
        CMap gmap(nd.grad.data(), m, n);
        if (a->requires_grad) {
            CMap bm(b->value.data(), k, n);
            MMap ga(a->grad.data(), m, k);
            ga.noalias() += gmap * bm.transpose();
        }
        if (b->requires_grad) {
            CMap am(a->value.data(), m, k);
            MMap gb(b->grad.data(), k, n);
            gb.noalias() += am.transpose() * gmap;
        }
    });
}

Var linear(Graph& g, Var x, Var w, Var bias) {
    const int64_t r = x->value.rows(), k = x->value.cols();
    const int64_t n = w->value.cols();
    SM_CHECK(w->value.rows() == k, "linear: weight rows ", w->value.rows(), " != input cols ", k);
    Shape out_shape = x->value.shape();
    out_shape.back() = n;
    Tensor out(std::move(out_shape));
    matmul_into(out, x->value, w->value);
    if (bias) {
        SM_CHECK(bias->value.numel() == n, "linear: bias size mismatch");
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < n; ++j) out[i * n + j] += bias->value[j];
    }
    std::vector<Var> parents = bias ? std::vector<Var>{x, w, bias} : std::vector<Var>{x, w};
    return g.make(std::move(out), parents, [x, w, bias, r, k, n](Node& nd) {
        CMap gmap(nd.grad.data(), r, n);
        if (x->requires_grad) {
            CMap wm(w->value.data(), k, n);
            MMap gx(x->grad.data(), r, k);
            gx.noalias() += gmap * wm.transpose();
        }
        if (w->requires_grad) {
            CMap xm(x->value.data(), r, k);
            MMap gw(w->grad.data(), k, n);
            gw.noalias() += xm.transpose() * gmap;
        }
        if (bias && bias->requires_grad) {
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < n; ++j) bias->grad[j] += nd.grad[i * n + j];
        }
    });
}

Var row_scale(Graph& g, Var x, Var s) {
    const int64_t r = x->value.rows(), c = x->value.cols();
    SM_CHECK(s->value.numel() == c, "row_scale: scale size ", s->value.numel(), " != cols ", c);
    Tensor out = x->value;
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[i * c + j] *= s->value[j];
    return g.make(std::move(out), {x, s}, [x, s, r, c](Node& n) {
        if (x->requires_grad)
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) x->grad[i * c + j] += n.grad[i * c + j] * s->value[j];
        if (s->requires_grad)
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) s->grad[j] += n.grad[i * c + j] * x->value[i * c + j];
    });
}

Var rmsnorm(Graph& g, Var x, Var gain, double eps) {
    const int64_t r = x->value.rows(), c = x->value.cols();
    SM_CHECK(gain->value.numel() == c, "rmsnorm: gain size mismatch");
    Tensor out(x->value.shape());
    Tensor inv_rms({r});
    for (int64_t i = 0; i < r; ++i) {
        double ms = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double v = x->value[i * c + j];
            ms += v * v;
        }
        const double inv = 1.0 / std::sqrt(ms / static_cast<double>(c) + eps);
        inv_rms[i] = inv;
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = x->value[i * c + j] * inv * gain->value[j];
    }
    return g.make(std::move(out), {x, gain},
                  [x, gain, r, c, inv_rms = std::move(inv_rms)](Node& n) {
                      for (int64_t i = 0; i < r; ++i) {
                          const double inv = inv_rms[i];
                          if (x->requires_grad) {
                              double corr = 0.0;  // sum_k g_k * gain_k * x_k
                              for (int64_t j = 0; j < c; ++j)
                                  corr += n.grad[i * c + j] * gain->value[j] * x->value[i * c + j];
                              corr *= inv * inv * inv / static_cast<double>(c);
                              for (int64_t j = 0; j < c; ++j)
                                  x->grad[i * c + j] += n.grad[i * c + j] * gain->value[j] * inv -
                                                        x->value[i * c + j] * corr;
                          }
                          if (gain->requires_grad)
                              for (int64_t j = 0; j < c; ++j)
                                  gain->grad[j] += n.grad[i * c + j] * x->value[i * c + j] * inv;
                      }
                  });
}

// ---- reductions ----

Var sum_all(Graph& g, Var a) {
    double s = 0.0;
    for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return g.make(Tensor::scalar(s), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += n.grad[0];
    });
}

Var mean_all(Graph& g, Var a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    double s = 0.0;
    for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return g.make(Tensor::scalar(s * inv), {a}, [a, inv](Node& n) {
        if (!a->requires_grad) return;
        for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += n.grad[0] * inv;
    });
}

Var sqrt_scalar(Graph& g, Var a) {
    SM_CHECK(a->value.numel() == 1, "sqrt_scalar: input must be scalar");
    const double v = a->value[0];
    SM_CHECK(v >= 0.0, "sqrt_scalar: negative input ", v);
    return g.make(Tensor::scalar(std::sqrt(v)), {a}, [a, v](Node& n) {
        if (!a->requires_grad) return;
        if (v > 1e-30) a->grad[0] += n.grad[0] * 0.5 / std::sqrt(v);
        // at v == 0 the subgradient 0 is used
    });
}

Var mse(Graph& g, Var a, Var b) {
    SM_CHECK(a->value.numel() == b->value.numel(), "mse: size mismatch");
    const int64_t n = a->value.numel();
    const double inv = 1.0 / static_cast<double>(n);
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = a->value[i] - b->value[i];
        s += d * d;
    }
    return g.make(Tensor::scalar(s * inv), {a, b}, [a, b, n, inv](Node& nd) {
        const double c = 2.0 * inv * nd.grad[0];
        for (int64_t i = 0; i < n; ++i) {
            const double d = a->value[i] - b->value[i];
            if (a->requires_grad) a->grad[i] += c * d;
            if (b->requires_grad) b->grad[i] -= c * d;
        }
    });
}

Var l2norm(Graph& g, Var a) {
    return sqrt_scalar(g, sum_all(g, mul(g, a, a)));
}

// ---- attention ----

namespace {

// Generic scaled-dot-product attention over G groups of (Lq queries, Lk
// keys). qrow/krow map (group, position) to a row index into the flat
// [rows, C] q/k/v tensors. Probs are saved for the backward pass.
struct AttnIndex {
    int64_t groups, lq, lk;
    std::function<int64_t(int64_t, int64_t)> qrow;
    std::function<int64_t(int64_t, int64_t)> krow;
};

Var attn_core(Graph& g, Var q, Var k, Var v, int heads, const AttnIndex& ix, bool identity_probs,
              Shape out_shape) {
    const int64_t c = q->value.cols();
    SM_CHECK(c == k->value.cols() && c == v->value.cols(), "attention: width mismatch");
    SM_CHECK(heads > 0 && c % heads == 0, "attention: heads ", heads, " must divide width ", c);
    const int64_t dh = c / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor out(out_shape);
    Tensor probs;
    if (!identity_probs) probs = Tensor({ix.groups, static_cast<int64_t>(heads), ix.lq, ix.lk});

    for (int64_t grp = 0; grp < ix.groups; ++grp) {
        for (int h = 0; h < heads; ++h) {
            const int64_t off = h * dh;
            for (int64_t i = 0; i < ix.lq; ++i) {
                const int64_t qi = ix.qrow(grp, i);
                double* orow = out.data() + qi * c + off;
                if (identity_probs) {
                    SM_CHECK(ix.lq == ix.lk, "identity attention requires square layout");
                    const int64_t kj = ix.krow(grp, i);
                    for (int64_t d = 0; d < dh; ++d) orow[d] = v->value[kj * c + off + d];
                    continue;
                }
                double* prow = probs.data() +
                               ((grp * heads + h) * ix.lq + i) * ix.lk;
                double mx = -1e300;
                for (int64_t j = 0; j < ix.lk; ++j) {
                    const int64_t kj = ix.krow(grp, j);
                    double s = 0.0;
                    const double* qr = q->value.data() + qi * c + off;
                    const double* kr = k->value.data() + kj * c + off;
                    for (int64_t d = 0; d < dh; ++d) s += qr[d] * kr[d];
                    s *= inv_sqrt_dh;
                    prow[j] = s;
                    mx = std::max(mx, s);
                }
                double z = 0.0;
                for (int64_t j = 0; j < ix.lk; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    z += prow[j];
                }
                const double invz = 1.0 / z;
                for (int64_t d = 0; d < dh; ++d) orow[d] = 0.0;
                for (int64_t j = 0; j < ix.lk; ++j) {
                    prow[j] *= invz;
                    const double p = prow[j];
                    const double* vr = v->value.data() + ix.krow(grp, j) * c + off;
                    for (int64_t d = 0; d < dh; ++d) orow[d] += p * vr[d];
                }
            }
        }
    }

    auto bw = [q, k, v, heads, ix, identity_probs, dh, c, inv_sqrt_dh,
               probs = std::move(probs)](Node& n) {
        std::vector<double> dprobs(static_cast<size_t>(ix.lk));
        for (int64_t grp = 0; grp < ix.groups; ++grp) {
            for (int h = 0; h < heads; ++h) {
                const int64_t off = h * dh;
                for (int64_t i = 0; i < ix.lq; ++i) {
                    const int64_t qi = ix.qrow(grp, i);
                    const double* grow = n.grad.data() + qi * c + off;
                    if (identity_probs) {
                        if (v->requires_grad) {
                            const int64_t kj = ix.krow(grp, i);
                            for (int64_t d = 0; d < dh; ++d) v->grad[kj * c + off + d] += grow[d];
                        }
                        continue;
                    }
                    const double* prow = probs.data() + ((grp * heads + h) * ix.lq + i) * ix.lk;
                    double pdot = 0.0;
                    for (int64_t j = 0; j < ix.lk; ++j) {
                        const int64_t kj = ix.krow(grp, j);
                        const double* vr = v->value.data() + kj * c + off;
                        double dp = 0.0;
                        for (int64_t d = 0; d < dh; ++d) dp += grow[d] * vr[d];
                        dprobs[static_cast<size_t>(j)] = dp;
                        pdot += dp * prow[j];
                        if (v->requires_grad) {
                            double* vg = v->grad.data() + kj * c + off;
                            for (int64_t d = 0; d < dh; ++d) vg[d] += prow[j] * grow[d];
                        }
                    }
                    if (!q->requires_grad && !k->requires_grad) continue;
                    const double* qr = q->value.data() + qi * c + off;
                    for (int64_t j = 0; j < ix.lk; ++j) {
                        const double ds = prow[j] * (dprobs[static_cast<size_t>(j)] - pdot) * inv_sqrt_dh;
                        if (ds == 0.0) continue;
                        const int64_t kj = ix.krow(grp, j);
                        if (q->requires_grad) {
                            const double* kr = k->value.data() + kj * c + off;
                            double* qg = q->grad.data() + qi * c + off;
                            for (int64_t d = 0; d < dh; ++d) qg[d] += ds * kr[d];
                        }
                        if (k->requires_grad) {
                            double* kg = k->grad.data() + kj * c + off;
                            for (int64_t d = 0; d < dh; ++d) kg[d] += ds * qr[d];
                        }
                    }
                }
            }
        }
    };
    return g.make(std::move(out), {q, k, v}, std::move(bw));
}

}  // namespace

Var mha_self(Graph& g, Var q, Var k, Var v, int64_t frames, int64_t sites, int heads, AttnAxis axis,
             bool identity_probs) {
    SM_CHECK(q->value.rows() == frames * sites, "mha_self: rows ", q->value.rows(),
             " != frames*sites ", frames * sites);
    AttnIndex ix;
    if (axis == AttnAxis::Spatial) {
        ix.groups = frames;
        ix.lq = ix.lk = sites;
        ix.qrow = ix.krow = [sites](int64_t grp, int64_t i) { return grp * sites + i; };
    } else {
        ix.groups = sites;
        ix.lq = ix.lk = frames;
        ix.qrow = ix.krow = [sites](int64_t grp, int64_t i) { return i * sites + grp; };
    }
    return attn_core(g, q, k, v, heads, ix, identity_probs, q->value.shape());
}

Var cross_attn(Graph& g, Var q, Var k, Var v, int heads) {
    SM_CHECK(k->value.rows() >= 1, "cross_attn: key/value set must contain at least one row");
    SM_CHECK(k->value.rows() == v->value.rows(), "cross_attn: key/value row mismatch");
    AttnIndex ix;
    ix.groups = 1;
    ix.lq = q->value.rows();
    ix.lk = k->value.rows();
    ix.qrow = [](int64_t, int64_t i) { return i; };
    ix.krow = [](int64_t, int64_t j) { return j; };
    return attn_core(g, q, k, v, heads, ix, false, q->value.shape());
}

}  // namespace sm::ag

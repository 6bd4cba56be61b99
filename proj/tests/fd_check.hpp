#pragma once

// Central finite-difference gradient oracle used by the unit tests and
// the acceptance audit. Independent of the tape's backward pass: it only
// re-evaluates forward losses at perturbed inputs.

#include <cmath>
#include <functional>
#include <vector>

#include "stylemill/graph.hpp"

namespace sm::testing {

// Builds a scalar loss from leaf variables created from `inputs`.
using LossBuilder = std::function<ag::Var(ag::Graph&, std::vector<ag::Var>&)>;

struct FdReport {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

inline double fd_rel_err(double analytic, double numeric) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / denom;
}

// Compares tape gradients of `build` against central differences for every
// entry of every input (capped per tensor via `stride over entries` when
// max_entries_per_input > 0).
inline FdReport fd_check(std::vector<Tensor> inputs, const LossBuilder& build, double h = 1e-5,
                         int64_t max_entries_per_input = 0) {
    FdReport report;

    ag::Graph g;
    std::vector<ag::Var> vars;
    for (const Tensor& t : inputs) vars.push_back(g.leaf(t, true));
    ag::Var loss = build(g, vars);
    g.backward(loss);
    std::vector<Tensor> grads;
    for (ag::Var v : vars) grads.push_back(v->grad);

    auto eval = [&](const std::vector<Tensor>& pts) {
        ag::Graph gg;
        std::vector<ag::Var> vv;
        for (const Tensor& t : pts) vv.push_back(gg.leaf(t, true));
        return build(gg, vv)->value[0];
    };

    for (size_t i = 0; i < inputs.size(); ++i) {
        const int64_t n = inputs[i].numel();
        int64_t stride = 1;
        if (max_entries_per_input > 0 && n > max_entries_per_input)
            stride = (n + max_entries_per_input - 1) / max_entries_per_input;
        for (int64_t j = 0; j < n; j += stride) {
            std::vector<Tensor> pts = inputs;
            pts[i][j] = inputs[i][j] + h;
            const double lp = eval(pts);
            pts[i][j] = inputs[i][j] - h;
            const double lm = eval(pts);
            const double numeric = (lp - lm) / (2.0 * h);
            report.max_rel_err = std::max(report.max_rel_err, fd_rel_err(grads[i][j], numeric));
            ++report.checked;
        }
    }
    return report;
}

}  // namespace sm::testing

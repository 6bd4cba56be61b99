#include "stylemill/params.hpp"

#include <cmath>

#include "stylemill/error.hpp"

namespace sm {

std::unordered_set<const Param*> to_set(const ParamRefs& refs) {
    std::unordered_set<const Param*> s;
    for (Param* p : refs) s.insert(p);
    return s;
}

ParamRefs filter_by_prefix(const ParamRefs& all, const std::vector<std::string>& prefixes) {
    ParamRefs out;
    for (Param* p : all)
        for (const auto& pre : prefixes)
            if (p->name.rfind(pre, 0) == 0) {
                out.push_back(p);
                break;
            }
    return out;
}

ParamRefs filter_by_substring(const ParamRefs& all, const std::vector<std::string>& needles) {
    ParamRefs out;
    for (Param* p : all)
        for (const auto& nd : needles)
            if (p->name.find(nd) != std::string::npos) {
                out.push_back(p);
                break;
            }
    return out;
}

int64_t total_numel(const ParamRefs& refs) {
    int64_t n = 0;
    for (const Param* p : refs) n += p->value.numel();
    return n;
}

Adam::Adam(ParamRefs params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step(const Binder& binder) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        const Tensor* grad = binder.grad(*params_[i]);
        if (!grad) continue;
        Tensor& w = params_[i]->value;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < w.numel(); ++j) {
            const double gj = (*grad)[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            w[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

}  // namespace sm

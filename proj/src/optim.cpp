#include "vidmem/optim.hpp"

#include <cmath>

namespace vidmem {

double clip_grad_norm(const std::vector<Param*>& params, double max_norm) {
    double sq = 0.0;
    for (Param* p : params)
        for (double g : p->grad.data) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (Param* p : params)
            for (double& g : p->grad.data) g *= s;
    }
    return norm;
}

void Adam::step(const std::vector<Param*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (Param* p : params) {
        Moments& mo = state_[p];
        if (mo.m.empty()) {
            mo.m.assign(p->value.numel(), 0.0);
            mo.v.assign(p->value.numel(), 0.0);
        }
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad.data[i];
            mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
            mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
            const double mhat = mo.m[i] / bc1;
            const double vhat = mo.v[i] / bc2;
            p->value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace vidmem

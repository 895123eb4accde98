#pragma once

#include <cstddef>
#include <unordered_map>
#include <vector>

#include "vidmem/tensor.hpp"

namespace vidmem {

// Clips the concatenated gradient of all params to the given L2 norm.
// Returns the pre-clip norm.
double clip_grad_norm(const std::vector<Param*>& params, double max_norm);

class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Param*>& params);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::unordered_map<Param*, Moments> state_;
};

}  // namespace vidmem

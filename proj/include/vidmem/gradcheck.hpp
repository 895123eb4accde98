#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vidmem/tensor.hpp"

namespace vidmem {

struct GradCheckReport {
    bool pass = false;
    double max_error = 0.0;        // max over coordinates of min(abs, rel) error
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t coords_checked = 0;
};

// f builds a fresh graph over the given params and returns the scalar loss.
// Analytic gradients are compared against central differences coordinate by
// coordinate; error per coordinate is min(absolute, relative).
GradCheckReport grad_check(const std::function<double(bool with_grad)>& eval_loss,
                           std::vector<Param*> params, double step, double tol);

}  // namespace vidmem

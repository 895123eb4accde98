#include "vidmem/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace vidmem {

GradCheckReport grad_check(const std::function<double(bool with_grad)>& eval_loss,
                           std::vector<Param*> params, double step, double tol) {
    for (Param* p : params) p->zero_grad();
    (void)eval_loss(true);

    GradCheckReport rep;
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Param* p : params) analytic.push_back(p->grad);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double saved = p.value.data[i];
            p.value.data[i] = saved + step;
            const double fp = eval_loss(false);
            p.value.data[i] = saved - step;
            const double fm = eval_loss(false);
            p.value.data[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("grad_check: non-finite loss while perturbing " +
                                         p.name + "[" + std::to_string(i) + "]");
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[pi].data[i];
            const double abs_err = std::fabs(a - numeric);
            const double rel_err =
                abs_err / std::max(std::fabs(a) + std::fabs(numeric), 1e-12);
            const double err = std::min(abs_err, rel_err);
            ++rep.coords_checked;
            if (err > rep.max_error) {
                rep.max_error = err;
                rep.worst_param = p.name;
                rep.worst_index = i;
            }
        }
    }
    rep.pass = rep.max_error <= tol;
    return rep;
}

}  // namespace vidmem

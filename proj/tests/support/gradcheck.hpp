#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ragseco/tensor.hpp"

namespace testsupport {

// Central finite differences against reverse-mode gradients.
//
// `forward` must rebuild the whole computation from scratch on every call
// (fresh tape, fresh intermediate tensors, identical rng seeding) and return
// the scalar loss value. `backward_grads` runs the reverse pass once and
// returns the analytic gradient for every checked parameter.
struct GradCheckResult {
    double max_err = 0.0;       // max |ad - fd| / max(|ad|, |fd|, 1)
    std::size_t checked = 0;
};

inline GradCheckResult grad_check(const std::vector<ragseco::ad::Tensor>& params,
                                  const std::function<double()>& forward,
                                  const std::function<void()>& run_backward,
                                  double eps = 1e-5,
                                  std::size_t max_coords_per_tensor = 0) {
    using ragseco::ad::Tensor;
    run_backward();
    std::vector<std::vector<double>> analytic;
    for (const Tensor& p : params)
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0));

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi]; // non-const alias of the same node
        const std::size_t count = p.numel();
        const std::size_t step =
            max_coords_per_tensor == 0 || count <= max_coords_per_tensor
                ? 1
                : count / max_coords_per_tensor;
        for (std::size_t i = 0; i < count; i += step) {
            const double orig = p.values()[i];
            p.values()[i] = orig + eps;
            const double up = forward();
            p.values()[i] = orig - eps;
            const double down = forward();
            p.values()[i] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double ad = analytic[pi][i];
            const double denom = std::max({std::fabs(ad), std::fabs(fd), 1.0});
            result.max_err = std::max(result.max_err, std::fabs(ad - fd) / denom);
            ++result.checked;
        }
    }
    return result;
}

} // namespace testsupport

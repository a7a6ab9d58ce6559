#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ragseco/tensor.hpp"

namespace ragseco::optim {

// Rectified Adam. While the variance-rectification term rho_t <= 4 the update
// degrades to a plain momentum-SGD step on the bias-corrected first moment;
// afterwards the adaptive step with the rectification factor r_t applies.
class RAdam {
public:
    RAdam(std::vector<std::pair<std::string, ad::Tensor>> params, double lr,
          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& [name, t] : params_) {
            m_.emplace_back(t.numel(), 0.0);
            v_.emplace_back(t.numel(), 0.0);
        }
        rho_inf_ = 2.0 / (1.0 - beta2_) - 1.0;
    }

    std::size_t step_count() const { return step_; }
    double rho_infinity() const { return rho_inf_; }

    double rho_at(std::size_t t) const {
        const double b2t = std::pow(beta2_, static_cast<double>(t));
        return rho_inf_ - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
    }

    // One update over all parameters; a parameter without an allocated
    // gradient buffer is treated as having zero gradient.
    void step() {
        ++step_;
        const double t = static_cast<double>(step_);
        const double b1t = std::pow(beta1_, t);
        const double b2t = std::pow(beta2_, t);
        const double rho_t = rho_inf_ - 2.0 * t * b2t / (1.0 - b2t);
        double rect = 0.0;
        const bool adaptive = rho_t > 4.0;
        if (adaptive)
            rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf_) /
                             ((rho_inf_ - 4.0) * (rho_inf_ - 2.0) * rho_t));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            ad::Tensor& param = params_[p].second;
            if (!param.has_grad()) continue;
            auto& values = param.values();
            const auto& grad = param.grad();
            auto& m = m_[p];
            auto& v = v_[p];
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = grad[i];
                if (!std::isfinite(g))
                    throw NumericalError("non-finite gradient in parameter '" + params_[p].first +
                                         "' at element " + std::to_string(i));
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double m_hat = m[i] / (1.0 - b1t);
                if (adaptive) {
                    const double v_hat = std::sqrt(v[i] / (1.0 - b2t));
                    values[i] -= lr_ * rect * m_hat / (v_hat + eps_);
                } else {
                    values[i] -= lr_ * m_hat;
                }
            }
        }
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

private:
    std::vector<std::pair<std::string, ad::Tensor>> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    double rho_inf_;
    std::size_t step_ = 0;
};

} // namespace ragseco::optim

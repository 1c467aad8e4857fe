#pragma once

// Adam with bias correction. Moment buffers live in the optimizer, keyed by
// registration order; the step count is shared across all parameters.

#include "timeformer/tensor.hpp"

#include <cmath>
#include <vector>

namespace timeformer {

struct AdamConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamConfig config = {})
        : params_(std::move(params)), config_(config) {
        slots_m_.resize(params_.size());
        slots_v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            slots_m_[i].assign(params_[i].numel(), 0.0);
            slots_v_[i].assign(params_[i].numel(), 0.0);
        }
    }

    /// Applies one update from the gradients currently stored on the
    /// parameters, then zeroes those gradients. Every parameter must have a
    /// gradient buffer; a missing one means backward() never reached it.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i];
            if (!p.has_grad()) {
                throw ContractError("Adam step with no gradient on parameter " +
                                    std::to_string(i) + " of shape " + shape_str(p.shape()));
            }
            auto& vals = p.values();
            auto& grad = p.node()->grad;
            auto& m = slots_m_[i];
            auto& v = slots_v_[i];
            for (std::size_t j = 0; j < vals.size(); ++j) {
                const double g = grad[j];
                m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
                v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                vals[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
            }
            p.zero_grad();
        }
    }

    void zero_grad() {
        for (Tensor& p : params_) {
            if (p.has_grad()) p.zero_grad();
        }
    }

    std::size_t step_count() const { return t_; }
    double lr() const { return config_.lr; }
    void set_lr(double lr) { config_.lr = lr; }
    const AdamConfig& config() const { return config_; }
    std::size_t parameter_count() const { return params_.size(); }

private:
    std::vector<Tensor> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> slots_m_;
    std::vector<std::vector<double>> slots_v_;
    std::size_t t_ = 0;
};

} // namespace timeformer

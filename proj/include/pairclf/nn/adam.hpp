#ifndef PAIRCLF_NN_ADAM_HPP
#define PAIRCLF_NN_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/nn/layers.hpp"

namespace pairclf::nn {

struct AdamConfig {
    double lr0 = 1e-3;
    double decay = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

/// Adam with inverse-time learning-rate decay.
///
/// The step applied by the (t+1)-th call uses lr0 / (1 + decay * t), where t
/// counts the updates already applied, and the usual bias-corrected moments
/// m_hat = m / (1 - beta1^(t+1)), v_hat = v / (1 - beta2^(t+1)).
template <class T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }

    double effective_lr(std::uint64_t t) const { return cfg_.lr0 / (1.0 + cfg_.decay * static_cast<double>(t)); }
    double current_lr() const { return effective_lr(t_); }

    /// Moment buffers are created on first use and must keep shape-matching the
    /// parameter list afterwards.
    void step(std::span<Param<T>* const> params) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.emplace_back(p->value.shape());
                v_.emplace_back(p->value.shape());
            }
        }
        if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
        for (std::size_t k = 0; k < params.size(); ++k)
            if (params[k]->value.shape() != m_[k].shape() || params[k]->grad.shape() != m_[k].shape())
                throw ShapeError("adam: shape mismatch for parameter " + params[k]->name);

        const double lr = current_lr();
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T one_b1 = static_cast<T>(1.0 - cfg_.beta1), one_b2 = static_cast<T>(1.0 - cfg_.beta2);
        const T step = static_cast<T>(lr / bc1);
        const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
        const T eps = static_cast<T>(cfg_.epsilon);
        for (std::size_t k = 0; k < params.size(); ++k) {
            T* __restrict w = params[k]->value.ptr();
            const T* __restrict g = params[k]->grad_acc().ptr();
            T* __restrict m = m_[k].ptr();
            T* __restrict v = v_[k].ptr();
            const std::size_t n = m_[k].size();
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                w[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
            }
        }
    }

    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    void set_step_count(std::uint64_t t) { t_ = t; }

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

} // namespace pairclf::nn

#endif // PAIRCLF_NN_ADAM_HPP

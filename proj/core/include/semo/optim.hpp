#pragma once

#include <cmath>
#include <vector>

#include "semo/graph.hpp"
#include "semo/tensor.hpp"

namespace semo {

// Adam with the usual defaults; no weight decay, no schedule.
template <typename T>
class Adam {
public:
    Adam(std::vector<Parameter<T>*> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
         T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    void step() {
        ++t_;
        T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i];
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::int64_t j = 0; j < p.value.size(); ++j) {
                T g = p.grad.data[j];
                m.data[j] = beta1_ * m.data[j] + (T(1) - beta1_) * g;
                v.data[j] = beta2_ * v.data[j] + (T(1) - beta2_) * g * g;
                T mhat = m.data[j] / bc1;
                T vhat = v.data[j] / bc2;
                p.value.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void set_lr(T lr) { lr_ = lr; }
    int step_count() const { return t_; }
    void set_step_count(int t) { t_ = t; }
    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    const std::vector<Parameter<T>*>& params() const { return params_; }

private:
    std::vector<Parameter<T>*> params_;
    std::vector<Tensor<T>> m_, v_;
    T lr_;
    T beta1_, beta2_, eps_;
    int t_ = 0;
};

}  // namespace semo

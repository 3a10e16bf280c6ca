#pragma once

#include <cmath>

#include "pdvmrnn/tensor.hpp"

namespace pdvmrnn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers for one parameter tensor. The step counter
// lives with the owner (one per optimizer instance) so grouped parameters
// share bias correction.
template <typename S>
struct AdamSlotT {
    TensorT<S> m;
    TensorT<S> v;

    explicit AdamSlotT(const std::vector<int>& shape = {1}) : m(shape), v(shape) {}
};

using AdamSlot = AdamSlotT<float>;

// In-place update, t is the 1-based step count after increment.
template <typename S>
void adam_step(TensorT<S>& param, const TensorT<S>& grad, AdamSlotT<S>& slot,
               long t, const AdamConfig& cfg) {
    check_same_shape(param, grad, "adam_step");
    check_same_shape(param, slot.m, "adam_step m");
    const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
    const S corr1 = S(1) / S(1 - std::pow(cfg.beta1, double(t)));
    const S corr2 = S(1) / S(1 - std::pow(cfg.beta2, double(t)));
    const S lr = S(cfg.lr), eps = S(cfg.eps);
    for (size_t i = 0; i < param.numel(); ++i) {
        const S g = grad.data[i];
        slot.m.data[i] = b1 * slot.m.data[i] + (S(1) - b1) * g;
        slot.v.data[i] = b2 * slot.v.data[i] + (S(1) - b2) * g * g;
        const S mhat = slot.m.data[i] * corr1;
        const S vhat = slot.v.data[i] * corr2;
        param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace pdvmrnn

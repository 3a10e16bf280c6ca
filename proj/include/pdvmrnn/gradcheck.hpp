#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pdvmrnn/model.hpp"
#include "pdvmrnn/rng.hpp"

// Finite-difference verification of every analytic gradient: each kernel,
// both cell types, and a closed-loop rollout of a scaled-down model. All in
// 64-bit with fixed seeds, so results are identical run to run. Dense
// layers, losses, and cells get every element probed; the full-model row
// samples a spread of indices per tensor to stay fast.

namespace pdvmrnn {

struct GradSuiteRow {
    std::string name;
    double max_rel = 0.0;
    double tol = 0.0;
    bool ok = false;
};

namespace gradcheck_detail {

using TD = TensorT<double>;

inline double dot(const TD& a, const TD& b) {
    double s = 0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline TD rand_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    TD t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

inline double fd_partial(TD& x, size_t i, const std::function<double()>& loss, double eps) {
    const double orig = x.data[i];
    x.data[i] = orig + eps;
    const double lp = loss();
    x.data[i] = orig - eps;
    const double lm = loss();
    x.data[i] = orig;
    return (lp - lm) / (2.0 * eps);
}

// Max relative error between analytic and finite differences over up to
// `probes` evenly spread elements (0 = all).
inline double max_rel(TD& x, const TD& analytic, const std::function<double()>& loss,
                      double eps = 1e-5, int probes = 0) {
    double worst = 0.0;
    const size_t n = x.numel();
    const size_t count = probes > 0 && size_t(probes) < n ? size_t(probes) : n;
    for (size_t k = 0; k < count; ++k) {
        const size_t i = k * n / count;
        const double fd = fd_partial(x, i, loss, eps);
        const double a = analytic.data[i];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
        worst = std::max(worst, rel);
    }
    return worst;
}

inline GradSuiteRow row_conv2d() {
    Rng rng(101);
    TD x = rand_tensor({6, 6, 2}, rng);
    TD w = rand_tensor({4, 4, 2, 3}, rng, 0.5);
    TD b = rand_tensor({3}, rng, 0.1);
    TD proj = rand_tensor({3, 3, 3}, rng);
    auto loss = [&]() { return dot(conv2d(x, w, b, 4, 2, 1), proj); };
    TD dx(x.shape), dw(w.shape), db(b.shape);
    conv2d_backward(x, w, proj, 4, 2, 1, &dx, &dw, &db);
    double m = max_rel(x, dx, loss);
    m = std::max(m, max_rel(w, dw, loss));
    m = std::max(m, max_rel(b, db, loss));
    return {"conv2d", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_transposed_conv2d() {
    Rng rng(103);
    TD x = rand_tensor({3, 3, 4}, rng);
    TD w = rand_tensor({4, 4, 2, 4}, rng, 0.5);
    TD b = rand_tensor({2}, rng, 0.1);
    TD y = transposed_conv2d(x, w, b, 4, 2, 1);
    TD proj = rand_tensor(y.shape, rng);
    auto loss = [&]() { return dot(transposed_conv2d(x, w, b, 4, 2, 1), proj); };
    TD dx(x.shape), dw(w.shape), db(b.shape);
    transposed_conv2d_backward(x, w, proj, 4, 2, 1, &dx, &dw, &db);
    double m = max_rel(x, dx, loss);
    m = std::max(m, max_rel(w, dw, loss));
    m = std::max(m, max_rel(b, db, loss));
    return {"transposed_conv2d", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_maxpool2() {
    Rng rng(105);
    TD x = rand_tensor({4, 4, 2}, rng);
    TD proj = rand_tensor({2, 2, 2}, rng);
    auto loss = [&]() { return dot(maxpool2(x, nullptr), proj); };
    std::vector<int32_t> arg;
    maxpool2(x, &arg);
    TD dx(x.shape);
    maxpool2_backward(arg, proj, dx);
    const double m = max_rel(x, dx, loss);
    return {"maxpool2", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_dense() {
    Rng rng(107);
    TD x = rand_tensor({10}, rng);
    TD w = rand_tensor({10, 7}, rng, 0.4);
    TD b = rand_tensor({7}, rng, 0.1);
    TD proj = rand_tensor({7}, rng);
    auto loss = [&]() { return dot(dense(x, w, b), proj); };
    TD dx(x.shape), dw(w.shape), db(b.shape);
    dense_backward(x, w, proj, &dx, &dw, &db);
    double m = max_rel(x, dx, loss);
    m = std::max(m, max_rel(w, dw, loss));
    m = std::max(m, max_rel(b, db, loss));
    return {"dense", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_tanh() {
    Rng rng(109);
    TD x = rand_tensor({12}, rng, 1.5);
    TD proj = rand_tensor({12}, rng);
    auto loss = [&]() { return dot(tanh_forward(x), proj); };
    TD dx = tanh_backward(tanh_forward(x), proj);
    const double m = max_rel(x, dx, loss);
    return {"tanh", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_sigmoid() {
    Rng rng(111);
    TD x = rand_tensor({12}, rng, 1.5);
    TD proj = rand_tensor({12}, rng);
    auto loss = [&]() { return dot(sigmoid_forward(x), proj); };
    TD dx = sigmoid_backward(sigmoid_forward(x), proj);
    const double m = max_rel(x, dx, loss);
    return {"sigmoid", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_softmax_block() {
    Rng rng(113);
    TD x = rand_tensor({10}, rng, 1.5);
    TD proj = rand_tensor({10}, rng);
    auto loss = [&]() { return dot(softmax_block(x, 5), proj); };
    TD dx = softmax_block_backward(softmax_block(x, 5), proj, 5);
    const double m = max_rel(x, dx, loss);
    return {"softmax_block", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_spatial_mean() {
    Rng rng(115);
    TD x = rand_tensor({4, 4, 3}, rng);
    TD proj = rand_tensor({3}, rng);
    auto loss = [&]() { return dot(spatial_mean(x), proj); };
    TD dx(x.shape);
    spatial_mean_backward(proj, 4, 4, dx);
    const double m = max_rel(x, dx, loss);
    return {"spatial_mean", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_mse_loss() {
    Rng rng(117);
    TD x = rand_tensor({4, 4, 1}, rng);
    TD target = rand_tensor({4, 4, 1}, rng);
    auto loss = [&]() { return double(mse_loss(x, target)); };
    TD dx = mse_loss_grad(x, target);
    const double m = max_rel(x, dx, loss);
    return {"mse_loss", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_kl_loss() {
    Rng rng(119);
    TD logits = rand_tensor({10}, rng, 1.5);
    TD target = softmax_block(rand_tensor({10}, rng, 1.5), 5);
    auto loss = [&]() { return double(kl_loss(softmax_block(logits, 5), target, 5)); };
    TD y = softmax_block(logits, 5);
    TD dx = softmax_block_backward(y, kl_loss_grad(y, target, 5), 5);
    const double m = max_rel(logits, dx, loss);
    return {"kl_loss", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_lstm_cell() {
    Rng rng(121);
    CellT<double> cell = make_lstm_cell<double>("m", 3, 4);
    init_cell(cell, rng);
    std::vector<TD> xs;
    for (int t = 0; t < 3; ++t) xs.push_back(rand_tensor({3}, rng));
    CellStateT<double> s0(1, 1, 4);
    s0.h = rand_tensor({1, 1, 4}, rng, 0.5);
    s0.c = rand_tensor({1, 1, 4}, rng, 0.5);
    TD target = rand_tensor({1, 1, 4}, rng, 0.5);
    auto loss = [&]() {
        CellStateT<double> s = s0;
        for (int t = 0; t < 3; ++t) s = lstm_step(cell, xs[t], s);
        return double(mse_loss(s.h, target));
    };
    std::vector<CellStateT<double>> states{s0};
    std::vector<CellCacheT<double>> caches(3);
    for (int t = 0; t < 3; ++t) states.push_back(lstm_step(cell, xs[t], states.back(), &caches[t]));
    CellT<double> dcell = cell.grad_shape();
    std::vector<TD> dxs{TD({3}), TD({3}), TD({3})};
    TD dh = mse_loss_grad(states[3].h, target);
    TD dc({1, 1, 4});
    for (int t = 2; t >= 0; --t) {
        TD dh_prev({1, 1, 4}), dc_prev({1, 1, 4});
        cell_backward(cell, caches[t], states[t], {&xs[t], &states[t].h}, dh, dc,
                      {&dxs[t], &dh_prev}, &dcell, &dc_prev);
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
    double m = max_rel(s0.h, dh, loss);
    m = std::max(m, max_rel(s0.c, dc, loss));
    m = std::max(m, max_rel(xs[0], dxs[0], loss));
    m = std::max(m, max_rel(cell.streams[0].w, dcell.streams[0].w, loss));
    m = std::max(m, max_rel(cell.streams[1].w, dcell.streams[1].w, loss));
    m = std::max(m, max_rel(cell.bias, dcell.bias, loss));
    return {"lstm_cell", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_convlstm_cell() {
    Rng rng(123);
    CellT<double> cell = make_convlstm_cell<double>("v", 4, 4, 2, 3);
    init_cell(cell, rng);
    TD x0 = rand_tensor({4, 4, 2}, rng);
    TD x1 = rand_tensor({4, 4, 2}, rng);
    CellStateT<double> s0(4, 4, 3);
    s0.h = rand_tensor({4, 4, 3}, rng, 0.3);
    s0.c = rand_tensor({4, 4, 3}, rng, 0.3);
    TD target = rand_tensor({4, 4, 3}, rng, 0.5);
    auto loss = [&]() {
        auto s = convlstm_step(cell, x0, s0);
        s = convlstm_step(cell, x1, s);
        return double(mse_loss(s.h, target));
    };
    CellCacheT<double> c0, c1;
    auto s1 = convlstm_step(cell, x0, s0, &c0);
    auto s2 = convlstm_step(cell, x1, s1, &c1);
    CellT<double> dcell = cell.grad_shape();
    TD dx0({4, 4, 2}), dx1({4, 4, 2});
    TD dh1({4, 4, 3}), dc1({4, 4, 3});
    cell_backward(cell, c1, s1, {&x1, &s1.h}, mse_loss_grad(s2.h, target), TD({4, 4, 3}),
                  {&dx1, &dh1}, &dcell, &dc1);
    TD dh0({4, 4, 3}), dc0({4, 4, 3});
    cell_backward(cell, c0, s0, {&x0, &s0.h}, dh1, dc1, {&dx0, &dh0}, &dcell, &dc0);
    double m = max_rel(s0.h, dh0, loss);
    m = std::max(m, max_rel(s0.c, dc0, loss));
    m = std::max(m, max_rel(x0, dx0, loss, 1e-5, 16));
    m = std::max(m, max_rel(cell.streams[0].w, dcell.streams[0].w, loss, 1e-5, 16));
    m = std::max(m, max_rel(cell.streams[1].w, dcell.streams[1].w, loss, 1e-5, 16));
    m = std::max(m, max_rel(cell.bias, dcell.bias, loss));
    return {"convlstm_cell", m, 1e-4, m < 1e-4};
}

inline GradSuiteRow row_full_model() {
    ModelConfig cfg;
    cfg.frame_size = 8;
    cfg.vision_channels = {3, 4};
    cfg.shared_hw = 1;
    cfg.shared_channels = 5;
    cfg.motor_widths = {6, 5};
    cfg.joints = 2;
    cfg.block = 5;
    Rng rng(125);
    auto model = ModelT<double>::build(cfg);
    model.init(rng);
    auto is = ModelStateT<double>::zeros(cfg);
    is.for_each([&](const std::string&, TD& t) {
        for (auto& v : t.data) v = rng.uniform(-0.3, 0.3);
    });
    const int T = 3;
    std::vector<TD> tv, tm;
    for (int t = 0; t < T; ++t) {
        tv.push_back(rand_tensor({8, 8, 1}, rng, 0.8));
        tm.push_back(softmax_block(rand_tensor({10}, rng, 1.2), 5));
    }
    auto loss = [&]() {
        auto r = rollout_forward(model, is, T, LoopMode::Closed, tv, tm);
        double l = 0;
        for (int t = 0; t < T; ++t) {
            l += double(mse_loss(r.steps[t].pred_v, tv[t]));
            l += double(kl_loss(r.steps[t].pred_m, tm[t], cfg.block));
        }
        return l;
    };
    auto r = rollout_forward(model, is, T, LoopMode::Closed, tv, tm);
    std::vector<TD> dpv, dpm;
    for (int t = 0; t < T; ++t) {
        dpv.push_back(mse_loss_grad(r.steps[t].pred_v, tv[t]));
        dpm.push_back(kl_loss_grad(r.steps[t].pred_m, tm[t], cfg.block));
    }
    auto dmodel = model.grad_shape();
    auto dis = ModelStateT<double>::zeros(cfg);
    rollout_backward(model, r, dpv, dpm, &dmodel, &dis);

    double m = 0;
    std::vector<TD*> params, grads;
    model.for_each_param([&](const std::string&, TD& t) { params.push_back(&t); });
    dmodel.for_each_param([&](const std::string&, TD& t) { grads.push_back(&t); });
    for (size_t i = 0; i < params.size(); ++i) {
        m = std::max(m, max_rel(*params[i], *grads[i], loss, 1e-5, 6));
    }
    std::vector<TD*> isp, isg;
    is.for_each([&](const std::string&, TD& t) { isp.push_back(&t); });
    dis.for_each([&](const std::string&, TD& t) { isg.push_back(&t); });
    for (size_t i = 0; i < isp.size(); ++i) {
        m = std::max(m, max_rel(*isp[i], *isg[i], loss, 1e-5, 6));
    }
    return {"full_model_closed_T3", m, 1e-3, m < 1e-3};
}

} // namespace gradcheck_detail

inline std::vector<GradSuiteRow> run_gradient_suite() {
    using namespace gradcheck_detail;
    return {row_conv2d(),        row_transposed_conv2d(), row_maxpool2(),
            row_dense(),         row_tanh(),              row_sigmoid(),
            row_softmax_block(), row_spatial_mean(),      row_mse_loss(),
            row_kl_loss(),       row_lstm_cell(),         row_convlstm_cell(),
            row_full_model()};
}

inline bool gradient_suite_ok(const std::vector<GradSuiteRow>& rows) {
    for (const auto& r : rows) {
        if (!r.ok) return false;
    }
    return true;
}

} // namespace pdvmrnn

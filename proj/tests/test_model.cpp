#include <doctest.h>

#include <cmath>

#include "pdvmrnn/model.hpp"
#include "testutil.hpp"

using namespace pdvmrnn;
using testutil::check_grad;
using testutil::rand_tensor;
using TD = TensorT<double>;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.frame_size = 8;
    cfg.vision_channels = {3, 4};
    cfg.shared_hw = 1;
    cfg.shared_channels = 5;
    cfg.motor_widths = {6, 5};
    cfg.joints = 2;
    cfg.block = 5;
    return cfg;
}

struct TinyProblem {
    ModelT<double> model;
    ModelStateT<double> is;
    std::vector<TD> tv, tm; // per-step targets; tv doubles as open-loop inputs
    int T = 3;

    explicit TinyProblem(uint64_t seed) {
        Rng rng(seed);
        model = ModelT<double>::build(tiny_config());
        model.init(rng);
        is = ModelStateT<double>::zeros(model.cfg);
        is.for_each([&](const std::string&, TD& t) {
            for (auto& v : t.data) v = rng.uniform(-0.3, 0.3);
        });
        for (int i = 0; i < T; ++i) {
            TD v = rand_tensor({8, 8, 1}, rng, 0.8);
            tv.push_back(tanh_forward(v));
            tm.push_back(softmax_block(rand_tensor({10}, rng, 1.5), 5));
        }
    }

    double loss(LoopMode mode) const {
        auto r = rollout_forward(model, is, T, mode, tv, tm);
        double acc = 0;
        for (int i = 0; i < T; ++i) {
            acc += mse_loss(r.steps[i].pred_v, tv[i]);
            acc += kl_loss(r.steps[i].pred_m, tm[i], model.cfg.block);
        }
        return acc;
    }

    void grads(LoopMode mode, ModelT<double>& dmodel, ModelStateT<double>& dis) const {
        auto r = rollout_forward(model, is, T, mode, tv, tm);
        std::vector<TD> dpv, dpm;
        for (int i = 0; i < T; ++i) {
            dpv.push_back(mse_loss_grad(r.steps[i].pred_v, tv[i]));
            dpm.push_back(kl_loss_grad(r.steps[i].pred_m, tm[i], model.cfg.block));
        }
        rollout_backward(model, r, dpv, dpm, &dmodel, &dis);
    }
};

} // namespace

TEST_CASE("default and desk configurations produce the documented ladders") {
    ModelConfig full; // defaults
    full.validate();
    auto m = ModelT<float>::build(full);
    auto st = ModelStateT<float>::zeros(full);
    CHECK(st.vision[0].h.shape == std::vector<int>{32, 32, 40});
    CHECK(st.vision[1].h.shape == std::vector<int>{16, 16, 80});
    CHECK(st.vision[2].h.shape == std::vector<int>{8, 8, 80});
    CHECK(st.shared.h.shape == std::vector<int>{4, 4, 12});
    CHECK(st.motor[0].h.numel() == 1024);
    CHECK(st.motor[1].h.numel() == 1024);
    CHECK(st.motor[2].h.numel() == 16);
    CHECK(full.motor_io() == 40);

    Rng rng(1);
    m.init(rng);
    TensorT<float> in_v({64, 64, 1});
    TensorT<float> in_m({40});
    for (int j = 0; j < 4; ++j) in_m.data[j * 10] = 1.0f;
    StepIOT<float> io;
    auto next = forward_step(m, st, in_v, in_m, &io);
    CHECK(io.pred_v.shape == std::vector<int>{64, 64, 1});
    CHECK(io.pred_m.shape == std::vector<int>{40});
    float sum = 0;
    for (int i = 0; i < 10; ++i) sum += io.pred_m.data[i];
    CHECK(sum == doctest::Approx(1.0));

    ModelConfig desk = ModelConfig::desk();
    desk.validate();
    auto dst = ModelStateT<float>::zeros(desk);
    CHECK(dst.vision[0].h.shape == std::vector<int>{8, 8, 8});
    CHECK(dst.vision[1].h.shape == std::vector<int>{4, 4, 16});
    CHECK(dst.vision[2].h.shape == std::vector<int>{2, 2, 16});
    CHECK(dst.shared.h.shape == std::vector<int>{2, 2, 8});
    CHECK(dst.motor[2].h.numel() == 8);
}

TEST_CASE("config validation rejects impossible geometries") {
    ModelConfig bad = ModelConfig::desk();
    bad.frame_size = 20; // not divisible through 3 halvings
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    ModelConfig bad2 = ModelConfig::desk();
    bad2.shared_hw = 4; // top vision grid is 2
    CHECK_THROWS_AS(bad2.validate(), ValidationError);
    ModelConfig bad3 = ModelConfig::desk();
    bad3.motor_widths = {64, 64};
    CHECK_THROWS_AS(bad3.validate(), ValidationError);
}

TEST_CASE("model init is deterministic per seed") {
    auto cfg = tiny_config();
    auto a = ModelT<float>::build(cfg);
    auto b = ModelT<float>::build(cfg);
    Rng ra(99), rb(99);
    a.init(ra);
    b.init(rb);
    bool equal = true;
    a.for_each_param([&](const std::string& name, TensorT<float>& t) {
        b.for_each_param([&](const std::string& name2, TensorT<float>& t2) {
            if (name == name2) equal = equal && t.data == t2.data;
        });
    });
    CHECK(equal);
    CHECK(a.param_count() > 5000);
}

TEST_CASE("closed-loop rollout needs only the first percept") {
    TinyProblem p(5);
    std::vector<TD> first_v{p.tv[0]};
    std::vector<TD> first_m{p.tm[0]};
    auto r = rollout_forward(p.model, p.is, 4, LoopMode::Closed, first_v, first_m);
    CHECK(r.steps.size() == 4);
    CHECK(r.states.size() == 5);
    // Step inputs beyond the first are the model's own previous predictions.
    for (size_t i = 0; i < r.steps[2].in_v.numel(); ++i) {
        CHECK(r.steps[2].in_v.data[i] == r.steps[1].pred_v.data[i]);
    }
    CHECK_THROWS_AS(rollout_forward(p.model, p.is, 4, LoopMode::Open, first_v, first_m),
                    ValidationError);
}

TEST_CASE("full BPTT gradients match finite differences (closed loop)") {
    TinyProblem p(7);
    auto loss = [&]() { return p.loss(LoopMode::Closed); };
    ModelT<double> dmodel = p.model.grad_shape();
    ModelStateT<double> dis = ModelStateT<double>::zeros(p.model.cfg);
    p.grads(LoopMode::Closed, dmodel, dis);

    // Every parameter tensor of every cell plus both heads.
    std::vector<std::pair<TD*, TD*>> pairs;
    p.model.for_each_param([&](const std::string& name, TD& t) {
        dmodel.for_each_param([&](const std::string& name2, TD& g) {
            if (name == name2) pairs.emplace_back(&t, &g);
        });
    });
    REQUIRE(pairs.size() == 28);
    for (auto& [param, grad] : pairs) {
        CHECK(check_grad(*param, *grad, loss, 1e-3).ok);
    }
    // Intention-state gradients: the latent that training and regression tune.
    std::vector<std::pair<TD*, TD*>> is_pairs;
    p.is.for_each([&](const std::string& name, TD& t) {
        dis.for_each([&](const std::string& name2, TD& g) {
            if (name == name2) is_pairs.emplace_back(&t, &g);
        });
    });
    REQUIRE(is_pairs.size() == 10);
    for (auto& [param, grad] : is_pairs) {
        CHECK(check_grad(*param, *grad, loss, 1e-3).ok);
    }
}

TEST_CASE("full BPTT gradients match finite differences (open loop)") {
    TinyProblem p(11);
    auto loss = [&]() { return p.loss(LoopMode::Open); };
    ModelT<double> dmodel = p.model.grad_shape();
    ModelStateT<double> dis = ModelStateT<double>::zeros(p.model.cfg);
    p.grads(LoopMode::Open, dmodel, dis);

    CHECK(check_grad(p.model.vision[0].streams[STREAM_BU].w,
                     dmodel.vision[0].streams[STREAM_BU].w, loss, 1e-3).ok);
    CHECK(check_grad(p.model.motor[1].streams[STREAM_TD].w,
                     dmodel.motor[1].streams[STREAM_TD].w, loss, 1e-3).ok);
    CHECK(check_grad(p.model.shared.streams[SHARED_BU_M].w,
                     dmodel.shared.streams[SHARED_BU_M].w, loss, 1e-3).ok);
    CHECK(check_grad(p.model.vhead_w, dmodel.vhead_w, loss, 1e-3).ok);
    CHECK(check_grad(p.model.mhead_w, dmodel.mhead_w, loss, 1e-3).ok);
    CHECK(check_grad(p.is.shared.h, dis.shared.h, loss, 1e-3).ok);
    CHECK(check_grad(p.is.vision[1].c, dis.vision[1].c, loss, 1e-3).ok);
    CHECK(check_grad(p.is.motor[0].h, dis.motor[0].h, loss, 1e-3).ok);
}

TEST_CASE("rollout rejects mismatched gradient lists") {
    TinyProblem p(13);
    auto r = rollout_forward(p.model, p.is, p.T, LoopMode::Open, p.tv, p.tm);
    std::vector<TD> short_list(1);
    CHECK_THROWS_AS(rollout_backward(p.model, r, short_list, short_list,
                                     (ModelT<double>*)nullptr, (ModelStateT<double>*)nullptr),
                    ShapeError);
}

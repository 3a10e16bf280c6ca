#include <doctest.h>

#include <cmath>
#include <limits>

#include "pdvmrnn/error_regression.hpp"
#include "synthdata.hpp"
#include "testutil.hpp"

using namespace pdvmrnn;
using testutil::synthetic_data;
using testutil::tiny_config;

namespace {

struct TrainedTiny {
    std::vector<EncodedSeqT<float>> data;
    TrainStateT<float> st;
    std::vector<double> final_seq_loss; // closed-loop, per sequence
};

// One shared short training run for every regression test in this file.
const TrainedTiny& trained_tiny() {
    static TrainedTiny fixture = [] {
        TrainedTiny f;
        f.data = synthetic_data(8);
        TrainConfig cfg;
        cfg.epochs = 300;
        cfg.seed = 7;
        f.st = make_train_state<float>(tiny_config(), f.data.size(), cfg.seed);
        for (int e = 0; e < cfg.epochs; ++e) train_epoch(f.st, f.data, cfg);
        for (size_t i = 0; i < f.data.size(); ++i) {
            f.final_seq_loss.push_back(
                sequence_loss(f.st.model, f.st.is_table[i], f.data[i], LoopMode::Closed)
                    .total(1.0, 1.0));
        }
        return f;
    }();
    return fixture;
}

std::vector<float> param_snapshot(const ModelT<float>& m) {
    std::vector<float> out;
    const_cast<ModelT<float>&>(m).for_each_param([&](const std::string&, Tensor& t) {
        out.insert(out.end(), t.data.begin(), t.data.end());
    });
    return out;
}

std::vector<float> is_snapshot(IntentionStateT<float>& is) {
    std::vector<float> out;
    is.for_each([&](const std::string&, Tensor& t) {
        out.insert(out.end(), t.data.begin(), t.data.end());
    });
    return out;
}

} // namespace

TEST_CASE("compensated goal step selection follows e_t * c^t with 1-based exponent") {
    std::vector<double> comp;
    CHECK(select_goal_step({0.5, 0.2, 0.19, 0.25}, 1.01, &comp) == 3);
    CHECK(comp[0] == doctest::Approx(0.505));
    CHECK(comp[1] == doctest::Approx(0.20402));
    CHECK(comp[2] == doctest::Approx(0.19575719));
    CHECK(comp[3] == doctest::Approx(0.2601505025));

    // identical errors: compensation strictly increases, so the first step wins
    CHECK(select_goal_step({0.3, 0.3, 0.3, 0.3, 0.3}, 1.01) == 1);
    // degenerate base: plain argmin
    CHECK(select_goal_step({0.4, 0.1, 0.2}, 1.0) == 2);
    // ties resolve to the earliest step
    CHECK(select_goal_step({0.2, 0.2}, 1.0) == 1);
    CHECK_THROWS_AS(select_goal_step({}, 1.01), ValidationError);
    CHECK_THROWS_AS(select_goal_step({0.1}, 0.0), ValidationError);
}

TEST_CASE("goal step selection matches a brute-force argmin on random error vectors") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + int(rng.below(40));
        std::vector<double> e(n);
        for (auto& v : e) v = rng.uniform(0.0, 2.0);
        const double c = 1.0 + rng.uniform(0.0, 0.05);
        int best = 0;
        double best_v = std::numeric_limits<double>::infinity();
        for (int t = 1; t <= n; ++t) {
            const double v = e[t - 1] * std::pow(c, t);
            if (v < best_v) {
                best_v = v;
                best = t;
            }
        }
        CHECK(select_goal_step(e, c) == best);
    }
}

TEST_CASE("frame overload selects by squared distance to the goal frame") {
    Rng rng(5);
    std::vector<Tensor> frames;
    for (int i = 0; i < 6; ++i) frames.push_back(testutil::rand_tensor({4, 4, 1}, rng).cast<float>());
    Tensor goal = frames[4]; // exact match at step 5
    CHECK(select_goal_step(frames, goal, 1.01) == 5);
}

TEST_CASE("recognition recovers a trained sequence within twice its training loss") {
    const auto& f = trained_tiny();
    const auto before = param_snapshot(f.st.model);

    ErConfig cfg;
    cfg.iterations = 150;
    cfg.restarts = 2;
    cfg.lr = 0.05;
    cfg.seed = 21;
    auto res = recognize(f.st.model, f.data[0], cfg);

    CHECK(res.loss <= 2.0 * f.final_seq_loss[0]);
    CHECK(res.loss <= res.curve.front()); // never worse than the random init
    CHECK(res.best_restart >= 0);
    CHECK(param_snapshot(f.st.model) == before); // weights untouched

    // running minimum over the log is non-increasing by construction
    double run = std::numeric_limits<double>::infinity();
    for (double v : res.curve) {
        run = std::min(run, v);
        CHECK(run <= v + 1e-12);
    }
}

TEST_CASE("zero-iteration recognition returns the random init unchanged") {
    const auto& f = trained_tiny();
    ErConfig cfg;
    cfg.iterations = 0;
    cfg.restarts = 1;
    cfg.seed = 17;
    auto res = recognize(f.st.model, f.data[0], cfg);
    REQUIRE(res.curve.size() == 1);
    CHECK(res.loss == res.curve[0]);

    Rng rng(mix_seed(cfg.seed, 0));
    auto expected = detail::random_is<float>(f.st.model.cfg, cfg.init_std, rng);
    CHECK(is_snapshot(res.is) == is_snapshot(expected));
}

TEST_CASE("recognition reports divergence with the iteration index") {
    const auto& f = trained_tiny();
    auto broken = f.st.model;
    broken.mhead_w.fill(std::numeric_limits<float>::quiet_NaN());
    ErConfig cfg;
    cfg.iterations = 3;
    cfg.restarts = 1;
    try {
        recognize(broken, f.data[0], cfg);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("planning toward a trained end frame reaches it with frozen weights") {
    const auto& f = trained_tiny();
    const auto before = param_snapshot(f.st.model);
    const auto& seq = f.data[0];

    PlanGoalT<float> goal;
    goal.start_frame = seq.v.front();
    goal.start_code = seq.m.front();
    goal.goal_frame = seq.v.back();
    goal.goal_code = seq.m.back();

    PlanConfig pc;
    pc.t_max = 12; // 1.5x the training length
    pc.er.iterations = 150;
    pc.er.restarts = 2;
    pc.er.seed = 31;
    auto res = plan(f.st.model, goal, pc);

    CHECK(res.goal_step >= 1);
    CHECK(res.goal_step <= pc.t_max);
    REQUIRE(int(res.pred_v.size()) == res.goal_step);
    REQUIRE(int(res.pred_m.size()) == res.goal_step);
    CHECK(std::isfinite(res.loss));
    CHECK(param_snapshot(f.st.model) == before);

    // final planned frame close to the goal frame (per-pixel scale)
    const double end_err = mse_loss(res.pred_v.back(), goal.goal_frame) / 64.0;
    CHECK(end_err < 0.02);

    // iteration log: globally increasing indices, non-increasing running best
    double run = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < res.curve.size(); ++i) {
        if (i) CHECK(res.curve[i].iter > res.curve[i - 1].iter);
        CHECK(res.curve[i].goal_step >= 1);
        CHECK(res.curve[i].goal_step <= pc.t_max);
        run = std::min(run, res.curve[i].loss);
    }
    CHECK(run == doctest::Approx(res.loss));
}

TEST_CASE("planning toward the start percept picks an early goal step") {
    const auto& f = trained_tiny();
    const auto& seq = f.data[0];
    PlanGoalT<float> goal;
    goal.start_frame = seq.v.front();
    goal.start_code = seq.m.front();
    goal.goal_frame = seq.v.front();
    goal.goal_code = seq.m.front();
    PlanConfig pc;
    pc.t_max = 12;
    pc.er.iterations = 80;
    pc.er.restarts = 1;
    pc.er.seed = 41;
    auto res = plan(f.st.model, goal, pc);
    CHECK(res.goal_step <= 3);
}

TEST_CASE("dropping the motor goal removes exactly the goal-step code term") {
    const auto& f = trained_tiny();
    const auto& seq = f.data[0];

    PlanGoalT<float> with;
    with.start_frame = seq.v.front();
    with.start_code = seq.m.front();
    with.goal_frame = seq.v.back();
    with.goal_code = seq.m.back();
    PlanGoalT<float> without = with;
    without.goal_code.reset();

    Rng rng(mix_seed(3, 0));
    auto is = detail::random_is<float>(f.st.model.cfg, 0.1, rng);
    auto r = rollout_forward(f.st.model, is, 10, LoopMode::Closed,
                             std::vector<Tensor>{with.start_frame},
                             std::vector<Tensor>{with.start_code});
    for (int t_hat : {1, 4, 10}) {
        const double a = plan_loss(r, with, t_hat, f.st.model.cfg.block, 1.0, 1.0,
                                   (std::vector<Tensor>*)nullptr, (std::vector<Tensor>*)nullptr);
        const double b = plan_loss(r, without, t_hat, f.st.model.cfg.block, 1.0, 1.0,
                                   (std::vector<Tensor>*)nullptr, (std::vector<Tensor>*)nullptr);
        const double kl = kl_loss(r.steps[t_hat - 1].pred_m, *with.goal_code, f.st.model.cfg.block);
        CHECK(a - b == doctest::Approx(kl).epsilon(1e-6));
    }
}

TEST_CASE("vision-scoped planning leaves the motor intention at its init") {
    const auto& f = trained_tiny();
    const auto& seq = f.data[0];
    PlanGoalT<float> goal;
    goal.start_frame = seq.v.front();
    goal.start_code = seq.m.front();
    goal.goal_frame = seq.v.back();

    PlanConfig pc;
    pc.t_max = 12;
    pc.scope = IsScope::Vision;
    pc.er.iterations = 5;
    pc.er.restarts = 1;
    pc.er.seed = 51;
    auto res = plan(f.st.model, goal, pc);

    Rng rng(mix_seed(pc.er.seed, 0));
    auto init = detail::random_is<float>(f.st.model.cfg, pc.er.init_std, rng);
    for (size_t l = 0; l < res.is.motor.size(); ++l) {
        CHECK(res.is.motor[l].h.data == init.motor[l].h.data);
        CHECK(res.is.motor[l].c.data == init.motor[l].c.data);
    }
    // the vision intention did move
    bool moved = false;
    for (size_t l = 0; l < res.is.vision.size() && !moved; ++l) {
        moved = res.is.vision[l].h.data != init.vision[l].h.data;
    }
    CHECK(moved);
}

TEST_CASE("plan validation rejects bad horizons and bases") {
    const auto& f = trained_tiny();
    const auto& seq = f.data[0];
    PlanGoalT<float> goal;
    goal.start_frame = seq.v.front();
    goal.start_code = seq.m.front();
    goal.goal_frame = seq.v.back();
    PlanConfig pc;
    pc.t_max = 1;
    CHECK_THROWS_AS(plan(f.st.model, goal, pc), ValidationError);
    pc.t_max = 8;
    pc.compensation = 0.99;
    CHECK_THROWS_AS(plan(f.st.model, goal, pc), ValidationError);
    pc.compensation = 1.01;
    pc.er.restarts = 0;
    CHECK_THROWS_AS(plan(f.st.model, goal, pc), ValidationError);
    CHECK(is_scope_from_string("vision") == IsScope::Vision);
    CHECK_THROWS_AS(is_scope_from_string("everything"), ValidationError);
}

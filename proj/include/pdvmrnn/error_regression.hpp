#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pdvmrnn/adam.hpp"
#include "pdvmrnn/trainer.hpp"

// Error regression: with network weights frozen, search the intention state
// so that the closed-loop generation matches a target. Two flavors:
//   - recognize(): the target is a complete observed sequence
//   - plan(): the target is a goal frame (plus optional goal joint code) and
//     the current percept; the step at which the goal should be met is chosen
//     by compensated error minimization and re-chosen every iteration.

namespace pdvmrnn {

struct ErConfig {
    int iterations = 200; // update steps per restart; 0 returns the init unchanged
    int restarts = 3;
    double lr = 0.05;
    double init_std = 0.1;
    uint64_t seed = 1;
    double alpha_vision = 1.0;
    double alpha_motor = 1.0;
};

// argmin_t of errors[t] * c^t with 1-based t; ties resolve to the earliest
// step. Exposing the compensated values keeps the selection testable against
// an independent argmin.
inline int select_goal_step(const std::vector<double>& errors, double c,
                            std::vector<double>* compensated = nullptr) {
    if (errors.empty()) throw ValidationError("select_goal_step: empty error sequence");
    if (!(c > 0.0)) throw ValidationError("select_goal_step: compensation must be positive");
    int best = 0;
    double best_v = std::numeric_limits<double>::infinity();
    if (compensated) compensated->assign(errors.size(), 0.0);
    for (size_t i = 0; i < errors.size(); ++i) {
        const double v = errors[i] * std::pow(c, double(i + 1));
        if (compensated) (*compensated)[i] = v;
        if (v < best_v) {
            best_v = v;
            best = int(i);
        }
    }
    return best + 1;
}

// Frame-level overload: squared distance of each generated frame to the goal
// frame, then compensated argmin.
template <typename S>
int select_goal_step(const std::vector<TensorT<S>>& frames, const TensorT<S>& goal_frame,
                     double c, std::vector<double>* compensated = nullptr) {
    std::vector<double> err;
    err.reserve(frames.size());
    for (const auto& f : frames) err.push_back(double(mse_loss(f, goal_frame)));
    return select_goal_step(err, c, compensated);
}

template <typename S>
struct RecognitionResultT {
    IntentionStateT<S> is;
    double loss = std::numeric_limits<double>::infinity();
    int best_restart = -1;
    std::vector<double> curve; // loss per evaluation, restarts concatenated
};

namespace detail {

template <typename S>
IntentionStateT<S> random_is(const ModelConfig& cfg, double std, Rng& rng) {
    auto is = ModelStateT<S>::zeros(cfg);
    is.for_each([&](const std::string&, TensorT<S>& t) {
        for (auto& v : t.data) v = S(rng.normal(0.0, std));
    });
    return is;
}

template <typename S>
struct IsOptimizer {
    std::vector<AdamSlotT<S>> slots;
    long step = 0;
    AdamConfig adam;

    IsOptimizer(IntentionStateT<S>& is, double lr) {
        adam.lr = lr;
        is.for_each([&](const std::string&, TensorT<S>& t) { slots.emplace_back(t.shape); });
    }

    void apply(IntentionStateT<S>& is, IntentionStateT<S>& grad) {
        ++step;
        std::vector<TensorT<S>*> ps, gs;
        is.for_each([&](const std::string&, TensorT<S>& t) { ps.push_back(&t); });
        grad.for_each([&](const std::string&, TensorT<S>& t) { gs.push_back(&t); });
        for (size_t i = 0; i < ps.size(); ++i) adam_step(*ps[i], *gs[i], slots[i], step, adam);
    }
};

} // namespace detail

// Infer the intention state that regenerates an observed sequence
// (closed-loop, frozen weights). Runs `iterations` updates per restart and
// returns the best IS over every evaluation, so the result is never worse
// than the initial random guess. Divergence to NaN raises NumericalError
// naming the failing iteration.
template <typename S>
RecognitionResultT<S> recognize(const ModelT<S>& model, const EncodedSeqT<S>& target,
                                const ErConfig& cfg) {
    if (cfg.iterations < 0 || cfg.restarts < 1) {
        throw ValidationError("recognize: iterations must be >= 0, restarts >= 1");
    }
    RecognitionResultT<S> result;
    result.is = ModelStateT<S>::zeros(model.cfg);
    const int T = target.steps();
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        Rng rng(mix_seed(cfg.seed, uint64_t(restart)));
        auto is = detail::random_is<S>(model.cfg, cfg.init_std, rng);
        detail::IsOptimizer<S> opt(is, cfg.lr);
        for (int iter = 0; iter <= cfg.iterations; ++iter) {
            auto r = rollout_forward(model, is, T, LoopMode::Closed, target.v, target.m);
            std::vector<TensorT<S>> dpv(target.v.size());
            std::vector<TensorT<S>> dpm(target.v.size());
            double loss = 0;
            for (int i = 0; i < T; ++i) {
                loss += cfg.alpha_vision * double(mse_loss(r.steps[i].pred_v, target.v[i]));
                loss += cfg.alpha_motor * double(kl_loss(r.steps[i].pred_m, target.m[i], model.cfg.block));
                dpv[i] = mse_loss_grad(r.steps[i].pred_v, target.v[i]);
                for (auto& g : dpv[i].data) g *= S(cfg.alpha_vision);
                dpm[i] = kl_loss_grad(r.steps[i].pred_m, target.m[i], model.cfg.block);
                for (auto& g : dpm[i].data) g *= S(cfg.alpha_motor);
            }
            if (!std::isfinite(loss)) {
                throw NumericalError("recognition diverged: non-finite loss at restart " +
                                     std::to_string(restart) + ", iteration " + std::to_string(iter));
            }
            if (loss < result.loss) {
                result.loss = loss;
                result.is = is;
                result.best_restart = restart;
            }
            result.curve.push_back(loss);
            if (iter == cfg.iterations) break; // final evaluation only
            IntentionStateT<S> dis = ModelStateT<S>::zeros(model.cfg);
            rollout_backward(model, r, std::move(dpv), std::move(dpm), (ModelT<S>*)nullptr, &dis);
            opt.apply(is, dis);
        }
    }
    return result;
}

enum class IsScope { All, Vision, Motor };

inline IsScope is_scope_from_string(const std::string& s) {
    if (s == "all") return IsScope::All;
    if (s == "vision") return IsScope::Vision;
    if (s == "motor") return IsScope::Motor;
    throw ValidationError("unknown intention scope '" + s + "' (all|vision|motor)");
}

// The goal frame is mandatory; the goal joint code is optional and its loss
// terms are simply dropped when absent. The start percept anchors step 1 in
// both modalities so generation departs from where the world actually is.
template <typename S>
struct PlanGoalT {
    TensorT<S> start_frame;
    TensorT<S> start_code;
    TensorT<S> goal_frame;
    std::optional<TensorT<S>> goal_code;
};

struct PlanConfig {
    int t_max = 0;             // horizon; must be >= 2
    double compensation = 1.01; // per-step penalty base, >= 1
    IsScope scope = IsScope::All;
    ErConfig er;
};

struct PlanIterRow {
    int iter = 0;
    double loss = 0.0;
    int goal_step = 0;
};

template <typename S>
struct PlanResultT {
    IntentionStateT<S> is;
    int goal_step = 0;
    double loss = std::numeric_limits<double>::infinity();
    bool converged = false;
    int best_restart = -1;
    std::vector<PlanIterRow> curve;
    std::vector<TensorT<S>> pred_v; // closed-loop generation under the best plan, steps 1..goal_step
    std::vector<TensorT<S>> pred_m;
};

namespace detail {

template <typename S>
void mask_scope(IntentionStateT<S>& grad, IsScope scope) {
    if (scope == IsScope::All) return;
    auto& off = (scope == IsScope::Vision) ? grad.motor : grad.vision;
    for (auto& st : off) {
        st.h.zero();
        st.c.zero();
    }
}

} // namespace detail

// Plan loss at a fixed goal step: step-1 anchors in both modalities, the
// vision goal at t_hat, and the motor goal at t_hat when present. Gradients
// are written into dpv/dpm when sinks are given (other steps stay empty,
// which the rollout backward treats as zero).
template <typename S>
double plan_loss(const RolloutT<S>& r, const PlanGoalT<S>& goal, int t_hat, int block,
                 double alpha_v, double alpha_m,
                 std::vector<TensorT<S>>* dpv, std::vector<TensorT<S>>* dpm) {
    auto add = [](std::vector<TensorT<S>>& sink, int idx, TensorT<S> g, double alpha) {
        for (auto& v : g.data) v *= S(alpha);
        if (sink[size_t(idx)].numel() == 0) sink[size_t(idx)] = std::move(g);
        else accumulate(sink[size_t(idx)], g);
    };
    double loss = 0;
    loss += alpha_v * double(mse_loss(r.steps[0].pred_v, goal.start_frame));
    loss += alpha_m * double(kl_loss(r.steps[0].pred_m, goal.start_code, block));
    loss += alpha_v * double(mse_loss(r.steps[size_t(t_hat) - 1].pred_v, goal.goal_frame));
    if (goal.goal_code) {
        loss += alpha_m * double(kl_loss(r.steps[size_t(t_hat) - 1].pred_m, *goal.goal_code, block));
    }
    if (dpv && dpm) {
        add(*dpv, 0, mse_loss_grad(r.steps[0].pred_v, goal.start_frame), alpha_v);
        add(*dpm, 0, kl_loss_grad(r.steps[0].pred_m, goal.start_code, block), alpha_m);
        add(*dpv, t_hat - 1, mse_loss_grad(r.steps[size_t(t_hat) - 1].pred_v, goal.goal_frame), alpha_v);
        if (goal.goal_code) {
            add(*dpm, t_hat - 1,
                kl_loss_grad(r.steps[size_t(t_hat) - 1].pred_m, *goal.goal_code, block), alpha_m);
        }
    }
    return loss;
}

// Goal-directed plan generation. Every iteration regenerates closed-loop to
// the horizon, re-selects the goal step by compensated vision error against
// the goal frame, and descends the partial-target loss on the intention
// state alone. Plateau of the per-restart running best (relative change
// < 1% over the trailing max(10, iterations/10) evaluations) counts as
// convergence; `converged` reports it for the restart that won.
template <typename S>
PlanResultT<S> plan(const ModelT<S>& model, const PlanGoalT<S>& goal, const PlanConfig& cfg) {
    if (cfg.t_max < 2) throw ValidationError("plan: t_max must be >= 2");
    if (!(cfg.compensation >= 1.0)) throw ValidationError("plan: compensation must be >= 1");
    const auto& er = cfg.er;
    if (er.iterations < 0 || er.restarts < 1) {
        throw ValidationError("plan: iterations must be >= 0, restarts >= 1");
    }
    const std::vector<TensorT<S>> first_v{goal.start_frame};
    const std::vector<TensorT<S>> first_m{goal.start_code};
    const int window = std::max(10, er.iterations / 10);

    PlanResultT<S> result;
    result.is = ModelStateT<S>::zeros(model.cfg);
    std::vector<char> restart_converged(size_t(er.restarts), 0);
    int global_iter = 0;
    for (int restart = 0; restart < er.restarts; ++restart) {
        Rng rng(mix_seed(er.seed, uint64_t(restart)));
        auto is = detail::random_is<S>(model.cfg, er.init_std, rng);
        detail::IsOptimizer<S> opt(is, er.lr);
        std::vector<double> best_history;
        double restart_best = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter <= er.iterations; ++iter) {
            auto r = rollout_forward(model, is, cfg.t_max, LoopMode::Closed, first_v, first_m);
            std::vector<TensorT<S>> frames;
            frames.reserve(size_t(cfg.t_max));
            for (const auto& s : r.steps) frames.push_back(s.pred_v);
            const int t_hat = select_goal_step(frames, goal.goal_frame, cfg.compensation);
            std::vector<TensorT<S>> dpv(frames.size());
            std::vector<TensorT<S>> dpm(frames.size());
            const double loss = plan_loss(r, goal, t_hat, model.cfg.block,
                                          er.alpha_vision, er.alpha_motor, &dpv, &dpm);
            if (!std::isfinite(loss)) break; // restart failed, keep best-so-far
            if (loss < result.loss) {
                result.loss = loss;
                result.is = is;
                result.goal_step = t_hat;
                result.best_restart = restart;
                result.pred_v.clear();
                result.pred_m.clear();
                for (int i = 0; i < t_hat; ++i) {
                    result.pred_v.push_back(r.steps[size_t(i)].pred_v);
                    result.pred_m.push_back(r.steps[size_t(i)].pred_m);
                }
            }
            result.curve.push_back({global_iter++, loss, t_hat});
            restart_best = std::min(restart_best, loss);
            best_history.push_back(restart_best);
            if (int(best_history.size()) > window) {
                const double then = best_history[best_history.size() - 1 - size_t(window)];
                if (std::abs(restart_best - then) / std::max(then, 1e-12) < 0.01) {
                    restart_converged[size_t(restart)] = 1;
                    break;
                }
            }
            if (iter == er.iterations) break; // final evaluation only
            IntentionStateT<S> dis = ModelStateT<S>::zeros(model.cfg);
            rollout_backward(model, r, std::move(dpv), std::move(dpm), (ModelT<S>*)nullptr, &dis);
            detail::mask_scope(dis, cfg.scope);
            opt.apply(is, dis);
        }
    }
    if (result.best_restart < 0) {
        throw NumericalError("plan diverged: no restart produced a finite loss");
    }
    result.converged = restart_converged[size_t(result.best_restart)] != 0;
    return result;
}

} // namespace pdvmrnn

#include "pdvmrnn/evaluation.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <thread>

#include "pdvmrnn/json.hpp"
#include "pdvmrnn/trainer.hpp"

namespace pdvmrnn {

namespace {

std::string num(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string range_str(uint64_t first, uint64_t count) {
    return "[" + std::to_string(first) + ", " + std::to_string(first + count) + ")";
}

} // namespace

int EvaluationReport::successes() const {
    int n = 0;
    for (const auto& t : trials) n += t.success ? 1 : 0;
    return n;
}

double EvaluationReport::success_rate() const {
    return trials.empty() ? 0.0 : double(successes()) / double(trials.size());
}

double EvaluationReport::mean_deviation_px() const {
    if (trials.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : trials) s += t.deviation_px;
    return s / double(trials.size());
}

double EvaluationReport::max_deviation_px() const {
    double m = 0.0;
    for (const auto& t : trials) m = std::max(m, t.deviation_px);
    return m;
}

double EvaluationReport::mean_deviation_world() const {
    if (trials.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : trials) s += t.deviation_world;
    return s / double(trials.size());
}

double EvaluationReport::max_deviation_world() const {
    double m = 0.0;
    for (const auto& t : trials) m = std::max(m, t.deviation_world);
    return m;
}

double EvaluationReport::mean_goal_step() const {
    if (trials.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : trials) s += double(t.goal_step);
    return s / double(trials.size());
}

std::string EvaluationReport::csv() const {
    std::string out =
        "index,goal_x,goal_y,goal_step,converged,plan_loss,"
        "deviation_world,deviation_px,touched,grasped,placed,success\n";
    for (const auto& t : trials) {
        out += std::to_string(t.index) + ',' + num(t.goal[0]) + ',' + num(t.goal[1]) + ',' +
               std::to_string(t.goal_step) + ',' + (t.converged ? "1," : "0,") +
               num(t.plan_loss) + ',' + num(t.deviation_world) + ',' + num(t.deviation_px) + ',' +
               (t.touched ? "1," : "0,") + (t.grasped ? "1," : "0,") +
               (t.placed ? "1," : "0,") + (t.success ? "1\n" : "0\n");
    }
    return out;
}

std::string EvaluationReport::summary_json() const {
    Json j = Json::object();
    j.obj["task"] = Json::str(task);
    j.obj["mode"] = Json::str(open_loop ? "open" : "closed");
    j.obj["threshold_px"] = Json::number(threshold_px);
    j.obj["grasp_tolerance_px"] = Json::number(grasp_tolerance_px);
    j.obj["trials"] = Json::integer(int64_t(trials.size()));
    j.obj["successes"] = Json::integer(successes());
    j.obj["success_rate"] = Json::number(success_rate());
    j.obj["mean_deviation_px"] = Json::number(mean_deviation_px());
    j.obj["max_deviation_px"] = Json::number(max_deviation_px());
    j.obj["mean_deviation_world"] = Json::number(mean_deviation_world());
    j.obj["max_deviation_world"] = Json::number(max_deviation_world());
    j.obj["mean_goal_step"] = Json::number(mean_goal_step());
    j.obj["checkpoint_seed"] = Json::uinteger(checkpoint_seed);
    j.obj["test_seed"] = Json::uinteger(test_seed);
    return j.dump();
}

PlanGoalT<float> goal_from_sequence(const VisuomotorSequence& seq, const JointCoder& coder) {
    seq.validate();
    PlanGoalT<float> g;
    g.start_frame = normalize_frame<float>(seq.frames.front(), seq.frame_size);
    const std::vector<double> first(seq.joint_angles.front().begin(), seq.joint_angles.front().end());
    g.start_code = coder.encode<float>(first);
    g.goal_frame = normalize_frame<float>(seq.frames.back(), seq.frame_size);
    const std::vector<double> last(seq.joint_angles.back().begin(), seq.joint_angles.back().end());
    g.goal_code = coder.encode<float>(last);
    return g;
}

std::vector<std::vector<float>> decode_rows(const std::vector<TensorT<float>>& codes,
                                            const JointCoder& coder) {
    std::vector<std::vector<float>> rows;
    rows.reserve(codes.size());
    for (const auto& c : codes) {
        const std::vector<double> angles = coder.decode(c);
        rows.emplace_back(angles.begin(), angles.end());
    }
    return rows;
}

OneStepRun run_one_step_controller(const ModelT<float>& model, const IntentionStateT<float>& is,
                                   const PlanGoalT<float>& goal, int steps,
                                   const JointCoder& coder, const ArmModel& arm,
                                   const SceneInfo& scene, int frame_size,
                                   double grasp_tolerance) {
    if (steps < 1) throw ValidationError("one-step controller: steps must be >= 1");
    EpisodeStepper world(arm, scene, frame_size, grasp_tolerance);
    OneStepRun out;
    ModelStateT<float> state = is;
    TensorT<float> in_v = goal.start_frame;
    TensorT<float> in_m = goal.start_code;
    for (int t = 0; t < steps; ++t) {
        StepIOT<float> io;
        state = forward_step(model, state, in_v, in_m, &io);
        const std::vector<double> angles = coder.decode(io.pred_m);
        std::vector<float> row(angles.begin(), angles.end());
        std::vector<uint8_t> frame = world.step(row);
        in_v = normalize_frame<float>(frame, frame_size);
        in_m = coder.encode<float>(angles);
        out.rows.push_back(std::move(row));
        out.frames.push_back(std::move(frame));
    }
    out.final_ee = world.ee();
    if (world.object()) out.final_object = *world.object();
    out.touched = world.touched();
    out.grasped = world.grasped();
    return out;
}

EvaluationReport evaluate(const ArmModel& arm, const CheckpointData& ck, const Dataset& test,
                          const PlanConfig& plan_cfg, const EvalFlags& flags) {
    test.validate();
    const ModelT<float>& model = ck.state.model;
    const ModelConfig& cfg = model.cfg;
    if (test.frame_size != cfg.frame_size || test.joints != cfg.joints) {
        throw ValidationError("evaluate: test set is " + std::to_string(test.frame_size) + "px/" +
                              std::to_string(test.joints) + " joints, checkpoint expects " +
                              std::to_string(cfg.frame_size) + "px/" + std::to_string(cfg.joints));
    }
    if (test.task != ck.task) {
        throw ValidationError("evaluate: test task '" + test.task + "' vs checkpoint task '" +
                              ck.task + "'");
    }
    if (test.joint_ranges != ck.joint_ranges) {
        throw ValidationError("evaluate: joint coding ranges differ from the checkpoint's");
    }
    if (test.base_seed == ck.data_seed && ck.data_count > 0 && !test.sequences.empty()) {
        const uint64_t t0 = test.first_index;
        const uint64_t t1 = t0 + test.sequences.size();
        const uint64_t c0 = ck.data_first;
        const uint64_t c1 = c0 + ck.data_count;
        if (c0 < t1 && t0 < c1) {
            throw ValidationError("evaluate: test goals overlap the training data (seed " +
                                  std::to_string(test.base_seed) + ", train indices " +
                                  range_str(c0, ck.data_count) + ", test indices " +
                                  range_str(t0, test.sequences.size()) + ")");
        }
    }
    PlanConfig base = plan_cfg;
    if (base.t_max == 0) base.t_max = ck.t_max_hint;
    if (base.t_max < 2) {
        throw ValidationError("evaluate: plan horizon unset (no t_max and no checkpoint hint)");
    }

    const JointCoder coder = coder_for(test, cfg.block);
    const double grasp_tol_world = flags.grasp_tolerance_px / 64.0;
    const bool object_task = test.task == "object";
    const bool two_point_task = test.task == "two_point";

    EvaluationReport rep;
    rep.task = test.task;
    rep.open_loop = flags.open_loop;
    rep.threshold_px = flags.threshold_px;
    rep.grasp_tolerance_px = flags.grasp_tolerance_px;
    rep.checkpoint_seed = ck.seed;
    rep.test_seed = test.base_seed;
    rep.trials.assign(test.sequences.size(), TrialRow{});

    auto run_trial = [&](int i) {
        const auto& seq = test.sequences[size_t(i)];
        const auto& scene = test.scenes[size_t(i)];
        const PlanGoalT<float> goal = goal_from_sequence(seq, coder);
        PlanConfig trial_cfg = base;
        trial_cfg.er.seed = mix_seed(base.er.seed, uint64_t(i));
        const auto res = plan(model, goal, trial_cfg);

        TrialRow row;
        row.index = i;
        row.goal = scene.goal;
        row.goal_step = res.goal_step;
        row.converged = res.converged;
        row.plan_loss = res.loss;

        std::array<double, 2> ee{0.0, 0.0}, object{0.0, 0.0};
        if (flags.open_loop) {
            const auto run = run_one_step_controller(model, res.is, goal, res.goal_step, coder,
                                                     arm, scene, cfg.frame_size, grasp_tol_world);
            ee = run.final_ee;
            object = run.final_object;
            row.touched = run.touched;
            row.grasped = run.grasped;
        } else {
            const auto rows = decode_rows(res.pred_m, coder);
            const auto ep = run_episode(arm, scene, rows, cfg.frame_size, grasp_tol_world);
            ee = ep.final_ee;
            object = ep.final_object;
            row.touched = ep.touched;
            row.grasped = ep.grasped;
        }
        const std::array<double, 2>& scored = object_task ? object : ee;
        row.deviation_world = std::hypot(scored[0] - scene.goal[0], scored[1] - scene.goal[1]);
        row.deviation_px = row.deviation_world * 64.0;
        const bool near = row.deviation_px < flags.threshold_px;
        row.placed = object_task && near;
        if (object_task) {
            row.success = near && row.grasped;
        } else if (two_point_task) {
            row.success = near && row.touched;
        } else {
            row.success = near;
        }
        rep.trials[size_t(i)] = row;
    };

    const int n = int(test.sequences.size());
    const int workers = std::min(std::max(flags.threads, 1), std::max(n, 1));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) run_trial(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(size_t(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_trial(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    return rep;
}

} // namespace pdvmrnn

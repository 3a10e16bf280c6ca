#pragma once

#include <array>
#include <string>
#include <vector>

#include "pdvmrnn/arm_sim.hpp"
#include "pdvmrnn/error_regression.hpp"
#include "pdvmrnn/persistence.hpp"

// Scores a trained checkpoint against a held-out goal set: each trial plans
// toward the test sequence's final state, executes the plan in the world,
// and measures where things actually ended up. The success rule here is the
// single source of truth for every experiment: final deviation strictly
// under the pixel threshold, plus the task's own sub-predicates (two_point
// must touch the marker, object must grasp). Deviations are reported in
// world units and in 64-grid pixels (the threshold's native scale),
// regardless of the camera resolution the model was trained at.

namespace pdvmrnn {

struct EvalFlags {
    bool open_loop = false;        // execution feedback mode, see below
    double threshold_px = 3.0;     // success radius on the 64px grid, strict <
    double grasp_tolerance_px = 0.0;
    int threads = 1;               // trial worker pool; results merge in index order
};

struct TrialRow {
    int index = 0;
    std::array<double, 2> goal{0.0, 0.0};
    int goal_step = 0;
    bool converged = false;
    double plan_loss = 0.0;
    double deviation_world = 0.0;
    double deviation_px = 0.0;
    bool touched = false;
    bool grasped = false;
    bool placed = false;
    bool success = false;
};

struct EvaluationReport {
    std::string task;
    bool open_loop = false;
    double threshold_px = 3.0;
    double grasp_tolerance_px = 0.0;
    uint64_t checkpoint_seed = 0;
    uint64_t test_seed = 0;
    std::vector<TrialRow> trials;

    int successes() const;
    double success_rate() const; // successes / trials, 0 when empty
    double mean_deviation_px() const;
    double max_deviation_px() const;
    double mean_deviation_world() const;
    double max_deviation_world() const;
    double mean_goal_step() const;

    std::string csv() const;          // header + one row per trial
    std::string summary_json() const; // canonical JSON aggregate block
};

// Plan target taken from a demonstration exactly as the protocol demands:
// only its initial state (both modalities) and final state (both
// modalities) are used, never the path between.
PlanGoalT<float> goal_from_sequence(const VisuomotorSequence& seq, const JointCoder& coder);

// Population codes decoded back to executable joint rows.
std::vector<std::vector<float>> decode_rows(const std::vector<TensorT<float>>& codes,
                                            const JointCoder& coder);

// Closed-loop generation followed by feedback execution: each step the model
// commands one joint row, the world executes it, and the model's next input
// is the frame the camera actually saw plus the code of the pose actually
// taken (one-step prediction). Contrast with executing the imagined rollout
// blindly.
struct OneStepRun {
    std::vector<std::vector<float>> rows;
    std::vector<std::vector<uint8_t>> frames;
    std::array<double, 2> final_ee{0.0, 0.0};
    std::array<double, 2> final_object{0.0, 0.0};
    bool touched = false;
    bool grasped = false;
};
OneStepRun run_one_step_controller(const ModelT<float>& model, const IntentionStateT<float>& is,
                                   const PlanGoalT<float>& goal, int steps,
                                   const JointCoder& coder, const ArmModel& arm,
                                   const SceneInfo& scene, int frame_size,
                                   double grasp_tolerance);

// Full protocol over a test set. plan_cfg.t_max of 0 falls back to the
// checkpoint's horizon hint. Throws ValidationError when the test set could
// share generator seeds with the training data (same base seed, overlapping
// index ranges), or when the test geometry does not match the checkpoint.
EvaluationReport evaluate(const ArmModel& arm, const CheckpointData& ck, const Dataset& test,
                          const PlanConfig& plan_cfg, const EvalFlags& flags);

} // namespace pdvmrnn

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pdvmrnn/dataset.hpp"
#include "pdvmrnn/rng.hpp"

// Deterministic 2D world standing in for the physical robot: a planar arm
// anchored near the bottom of a unit square, viewed from a fixed camera.
// Angles are radians; angle 0 points straight up (+y) and positive rotation
// is counter-clockwise. The object task adds a gripper channel after the
// revolute joints: a scalar that reads closed above 0.5.

namespace pdvmrnn {

struct ArmModel {
    std::array<double, 2> base{0.5, 0.04};
    std::vector<double> link_lengths;   // sums to 1.0 for the standard arm
    double joint_limit = 1.9;           // hard symmetric limit, radians

    static ArmModel standard(); // 4 links of 0.25

    int joints() const { return int(link_lengths.size()); }
    double reach() const;
    void validate() const;
};

// Scene geometry (world units; the square is 1.0 x 1.0).
inline constexpr double kMarkerRadius = 0.06;   // touch disc, diameter 0.12
inline constexpr double kObjectRadius = 0.025;  // object footprint, diameter 0.05
inline constexpr double kArmHalfWidth = 0.04;
inline constexpr double kGripperRadius = 0.05;
inline constexpr double kGripperOpen = 0.15;
inline constexpr double kGripperClosed = 0.85;
inline constexpr double kGripperThreshold = 0.5;
inline constexpr double kIkMargin = 0.3; // ik works inside limit-margin to keep codes off range edges

// Success radius: the hardware rule "3 pixels at 64x64" expressed in world
// units, independent of the configured frame size.
inline double success_radius(double threshold_px = 3.0) { return threshold_px / 64.0; }

std::vector<double> home_posture(); // canonical raised elbow-bent pose

// Joint positions along the chain: base first, end effector last (J+1 points).
std::vector<std::array<double, 2>> fk_points(const ArmModel& arm, const std::vector<double>& angles);
std::array<double, 2> fk(const ArmModel& arm, const std::vector<double>& angles);

// Damped-least-squares inverse kinematics from `start`. Joint angles stay
// within limit - margin. Throws ValidationError when the target is outside
// the reachable region or the iteration fails to close below tolerance.
std::vector<double> ik(const ArmModel& arm, std::array<double, 2> target,
                       std::vector<double> start, double tol = 1e-8);

// Rasterization (anti-aliased signed-distance coverage, painter's order:
// marker, object, arm, gripper glyph). Row 0 is the top of the image.
struct RenderScene {
    const ArmModel* arm = nullptr; // optional: scenes without an arm render props only
    std::vector<double> angles;
    bool show_gripper = false;
    bool gripper_closed = false;
    std::optional<std::array<double, 2>> marker;
    std::optional<std::array<double, 2>> object;
};
std::vector<uint8_t> render(const RenderScene& scene, int frame_size);

// Where goals, markers and objects are sampled: an annulus sector in front
// of the arm, clipped to the workspace with a margin.
std::array<double, 2> sample_goal(Rng& rng);

// Replays a joint-row script in the world and renders every step; shared by
// the tutoring generator and plan execution so stored frames are bit-exact
// reproducible from stored joints. Joint rows carry the revolute angles plus
// the gripper channel when the scene's task uses one.
struct EpisodeResult {
    std::vector<std::vector<uint8_t>> frames;
    std::array<double, 2> final_ee{0.0, 0.0};
    std::array<double, 2> final_object{0.0, 0.0}; // where the object ended (object task)
    bool touched = false;       // entered the marker disc at some step (two_point)
    bool grasped = false;       // a close transition happened near the object
    bool attached_at_end = false;
};
EpisodeResult run_episode(const ArmModel& arm, const SceneInfo& scene,
                          const std::vector<std::vector<float>>& joint_rows, int frame_size,
                          double grasp_tolerance = 0.0);

// Incremental form of run_episode: feed one joint row at a time, read the
// rendered frame and world state back. Lets a controller close the loop on
// what actually happened (one-step prediction) instead of replaying a fixed
// script.
class EpisodeStepper {
public:
    EpisodeStepper(const ArmModel& arm, const SceneInfo& scene, int frame_size,
                   double grasp_tolerance = 0.0);
    std::vector<uint8_t> step(const std::vector<float>& row);
    const std::array<double, 2>& ee() const { return ee_; }
    const std::optional<std::array<double, 2>>& object() const { return object_; }
    bool touched() const { return touched_; }
    bool grasped() const { return grasped_; }
    bool attached() const { return attached_; }

private:
    const ArmModel& arm_;
    SceneInfo scene_;
    int frame_size_;
    double grasp_tolerance_;
    bool object_task_;
    int want_;
    std::optional<std::array<double, 2>> object_;
    std::array<double, 2> ee_{0.0, 0.0};
    bool attached_ = false;
    bool prev_closed_ = false;
    bool touched_ = false;
    bool grasped_ = false;
};

// One tutoring demonstration with human-like noise: per-segment speed
// jitter of +-30%, up to two inserted pauses of 1-3 frames, and sigma=0.01
// perturbation of intermediate waypoints. The final waypoint is exact so
// every sequence satisfies its task predicate by construction.
VisuomotorSequence generate_tutoring_sequence(const ArmModel& arm, const std::string& task,
                                              int frame_size, uint64_t seed, SceneInfo& scene);

// count sequences with seeds mix_seed(base_seed, first_index + i).
Dataset generate_dataset(const std::string& task, int count, int frame_size,
                         uint64_t base_seed, uint64_t first_index = 0);

// Drives the arm through planner-decoded joints (clamped to the hard
// limits) in the scene and reports what happened.
struct ExecutionResult {
    VisuomotorSequence executed;
    std::array<double, 2> final_ee{0.0, 0.0};
    std::array<double, 2> final_object{0.0, 0.0};
    double deviation = 0.0; // final ee (reach/two_point) or object center (object) vs scene goal
    bool touched = false;
    bool grasped = false;
};
ExecutionResult execute_plan(const ArmModel& arm, const SceneInfo& scene,
                             const std::vector<std::vector<float>>& joint_rows, int frame_size,
                             double grasp_tolerance = 0.0);

} // namespace pdvmrnn

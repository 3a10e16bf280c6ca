#include <doctest.h>

#include <cmath>

#include "pdvmrnn/arm_sim.hpp"
#include "testutil.hpp"

using namespace pdvmrnn;

namespace {

double dist2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

} // namespace

TEST_CASE("forward kinematics composes the planar chain") {
    const auto arm = ArmModel::standard();
    // zero posture: straight up, end effector one reach away from the base
    auto ee = fk(arm, {0, 0, 0, 0});
    CHECK(ee[0] == doctest::Approx(arm.base[0]));
    CHECK(ee[1] == doctest::Approx(arm.base[1] + arm.reach()));
    // rotating only the first joint by 90 degrees rigidly rotates the arm
    auto left = fk(arm, {M_PI / 2, 0, 0, 0});
    CHECK(left[0] == doctest::Approx(arm.base[0] - arm.reach()));
    CHECK(left[1] == doctest::Approx(arm.base[1]));
    CHECK(dist2(left, arm.base) == doctest::Approx(arm.reach()));
    // chain returns every joint position
    auto pts = fk_points(arm, home_posture());
    REQUIRE(pts.size() == 5);
    CHECK(pts[0] == arm.base);
    for (size_t i = 1; i < pts.size(); ++i) {
        CHECK(dist2(pts[i], pts[i - 1]) == doctest::Approx(0.25));
    }
    CHECK_THROWS_AS(fk(arm, {0, 0}), ValidationError);
}

TEST_CASE("inverse kinematics closes the loop on sampled targets") {
    const auto arm = ArmModel::standard();
    Rng rng(2024);
    const auto home = home_posture();
    for (int i = 0; i < 100; ++i) {
        const auto target = sample_goal(rng);
        const auto angles = ik(arm, target, home);
        REQUIRE(angles.size() == 4);
        for (double a : angles) CHECK(std::abs(a) <= arm.joint_limit - kIkMargin + 1e-12);
        CHECK(dist2(fk(arm, angles), target) < 1e-6);
    }
}

TEST_CASE("inverse kinematics handles boundary targets") {
    const auto arm = ArmModel::standard();
    // a point near full extension straight up needs a nearly straight arm
    const std::array<double, 2> high{arm.base[0], arm.base[1] + arm.reach() * 0.985};
    const auto angles = ik(arm, high, home_posture());
    for (double a : angles) CHECK(std::abs(a) < 0.5);
    CHECK(dist2(fk(arm, angles), high) < 1e-6);
    // beyond full extension is rejected
    CHECK_THROWS_AS(ik(arm, {arm.base[0], arm.base[1] + arm.reach() * 1.001}, home_posture()),
                    ValidationError);
    CHECK_THROWS_AS(ik(arm, {arm.base[0] + 0.9, arm.base[1] + 0.9}, home_posture()),
                    ValidationError);
}

TEST_CASE("rendering is deterministic with a black background") {
    RenderScene empty;
    auto f = render(empty, 16);
    REQUIRE(f.size() == 256);
    for (auto v : f) CHECK(v == 0);

    const auto arm = ArmModel::standard();
    RenderScene s;
    s.arm = &arm;
    s.angles = home_posture();
    s.marker = std::array<double, 2>{0.7, 0.5};
    auto a = render(s, 32);
    auto b = render(s, 32);
    CHECK(a == b);
    CHECK_THROWS_AS(render(s, 2), ValidationError);
}

TEST_CASE("disc coverage matches its area within ten percent") {
    RenderScene s;
    s.marker = std::array<double, 2>{0.5, 0.5}; // radius 0.06 world
    const int N = 128;       // diameter ~15px
    auto f = render(s, N);
    int filled = 0;
    for (auto v : f) filled += v > 45; // more than half the marker gray
    const double expect = M_PI * (kMarkerRadius * N) * (kMarkerRadius * N);
    CHECK(filled > expect * 0.9);
    CHECK(filled < expect * 1.1);
}

TEST_CASE("image rows run top to bottom and props use their gray levels") {
    RenderScene s;
    s.marker = std::array<double, 2>{0.5, 0.85};
    s.object = std::array<double, 2>{0.5, 0.15};
    const int N = 32;
    auto f = render(s, N);
    // marker sits high in the world, so in the top rows of the image
    int top = 0, bottom = 0;
    for (int r = 0; r < N / 2; ++r)
        for (int c = 0; c < N; ++c) top += f[size_t(r) * N + c] > 0;
    for (int r = N / 2; r < N; ++r)
        for (int c = 0; c < N; ++c) bottom += f[size_t(r) * N + c] > 0;
    CHECK(top > 0);
    CHECK(bottom > 0);
    // gray levels at the centers: marker 90, object 170; the object disc is
    // under a pixel wide at N=32, so sample it at a finer resolution
    CHECK(int(f[size_t(int((1.0 - 0.85) * N)) * N + N / 2]) == 90);
    const int M = 128;
    auto g = render(s, M);
    CHECK(int(g[size_t(int((1.0 - 0.15) * M)) * M + M / 2]) == 170);
}

TEST_CASE("tutoring generation is bitwise reproducible per seed") {
    const auto arm = ArmModel::standard();
    for (const char* task : {"reach", "two_point", "object"}) {
        SceneInfo s1, s2;
        auto a = generate_tutoring_sequence(arm, task, 16, 77, s1);
        auto b = generate_tutoring_sequence(arm, task, 16, 77, s2);
        CHECK(a.frames == b.frames);
        CHECK(a.joint_angles == b.joint_angles);
        CHECK(s1.goal == s2.goal);
        SceneInfo s3;
        auto c = generate_tutoring_sequence(arm, task, 16, 78, s3);
        CHECK(s3.goal != s1.goal);
    }
    SceneInfo bad;
    CHECK_THROWS_AS(generate_tutoring_sequence(arm, "fly", 16, 1, bad), ValidationError);
}

TEST_CASE("reaching demonstrations end on the sampled goal") {
    const auto arm = ArmModel::standard();
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        SceneInfo scene;
        auto seq = generate_tutoring_sequence(arm, "reach", 16, seed, scene);
        REQUIRE(seq.joints == 4);
        REQUIRE(seq.steps() >= 5);
        CHECK(seq.steps() <= 80);
        std::vector<double> last(seq.joint_angles.back().begin(), seq.joint_angles.back().end());
        CHECK(dist2(fk(arm, last), scene.goal) < 1e-5);
        // starts from the home posture
        for (int j = 0; j < 4; ++j) {
            CHECK(double(seq.joint_angles[0][j]) == doctest::Approx(home_posture()[j]));
        }
    }
}

TEST_CASE("two-point demonstrations pass through the marker disc") {
    const auto arm = ArmModel::standard();
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        SceneInfo scene;
        auto seq = generate_tutoring_sequence(arm, "two_point", 16, seed, scene);
        REQUIRE(scene.marker.has_value());
        CHECK(dist2(*scene.marker, scene.goal) >= 0.18);
        bool touched = false;
        for (const auto& row : seq.joint_angles) {
            std::vector<double> a(row.begin(), row.end());
            touched = touched || dist2(fk(arm, a), *scene.marker) <= kMarkerRadius;
        }
        CHECK(touched);
        std::vector<double> last(seq.joint_angles.back().begin(), seq.joint_angles.back().end());
        CHECK(dist2(fk(arm, last), scene.goal) < 1e-5);
    }
}

TEST_CASE("object demonstrations grasp, carry and release on the sheet") {
    const auto arm = ArmModel::standard();
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        SceneInfo scene;
        auto seq = generate_tutoring_sequence(arm, "object", 16, seed, scene);
        REQUIRE(seq.joints == 5);
        REQUIRE(scene.object.has_value());
        auto ep = run_episode(arm, scene, seq.joint_angles, 16, 0.0);
        CHECK(ep.grasped);
        CHECK_FALSE(ep.attached_at_end);
        CHECK(dist2(ep.final_object, scene.goal) < 1e-5);
        // gripper channel uses the coded open/closed levels
        bool sawOpen = false, sawClosed = false;
        for (const auto& row : seq.joint_angles) {
            sawOpen = sawOpen || double(row[4]) == doctest::Approx(kGripperOpen);
            sawClosed = sawClosed || double(row[4]) == doctest::Approx(kGripperClosed);
        }
        CHECK(sawOpen);
        CHECK(sawClosed);
    }
}

TEST_CASE("stored frames are bit-exact re-renderable from stored joints") {
    const auto arm = ArmModel::standard();
    for (const char* task : {"reach", "two_point", "object"}) {
        SceneInfo scene;
        auto seq = generate_tutoring_sequence(arm, task, 16, 5, scene);
        auto ep = run_episode(arm, scene, seq.joint_angles, 16, 0.0);
        CHECK(ep.frames == seq.frames);
    }
}

TEST_CASE("executing a tutoring trajectory reproduces its outcome") {
    const auto arm = ArmModel::standard();
    SceneInfo scene;
    auto seq = generate_tutoring_sequence(arm, "reach", 16, 9, scene);
    auto res = execute_plan(arm, scene, seq.joint_angles, 16);
    CHECK(res.executed.frames == seq.frames);
    CHECK(res.deviation < 1e-5);

    SceneInfo oscene;
    auto oseq = generate_tutoring_sequence(arm, "object", 16, 9, oscene);
    auto ores = execute_plan(arm, oscene, oseq.joint_angles, 16);
    CHECK(ores.executed.frames == oseq.frames);
    CHECK(ores.grasped);
    CHECK(ores.deviation < 1e-5);
}

TEST_CASE("grasping requires a close transition within the attach radius") {
    const auto arm = ArmModel::standard();
    SceneInfo scene;
    scene.task = "object";
    scene.goal = {0.7, 0.5};
    scene.marker = scene.goal;
    scene.object = std::array<double, 2>{0.5, 0.55};

    auto posture_at = [&](std::array<double, 2> p) {
        auto a = ik(arm, p, home_posture());
        return std::vector<float>(a.begin(), a.end());
    };
    auto with_grip = [](std::vector<float> row, double g) {
        row.push_back(float(g));
        return row;
    };

    // closing 0.03 away from the center: outside the bare radius (0.025),
    // inside radius + tolerance 0.01
    auto near = posture_at({0.53, 0.55});
    std::vector<std::vector<float>> rows{with_grip(near, kGripperOpen),
                                         with_grip(near, kGripperClosed)};
    auto strict = run_episode(arm, scene, rows, 16, 0.0);
    CHECK_FALSE(strict.grasped);
    auto loose = run_episode(arm, scene, rows, 16, 0.01);
    CHECK(loose.grasped);
    CHECK(loose.attached_at_end);
    // the attached object tracks the end effector exactly
    CHECK(dist2(loose.final_object, loose.final_ee) == doctest::Approx(0.0));

    // grasp dead on the object, carry to the sheet, release: object stays
    auto at_obj = posture_at(*scene.object);
    auto at_goal = posture_at(scene.goal);
    std::vector<std::vector<float>> carry{
        with_grip(at_obj, kGripperOpen), with_grip(at_obj, kGripperClosed),
        with_grip(at_goal, kGripperClosed), with_grip(at_goal, kGripperOpen)};
    auto placed = run_episode(arm, scene, carry, 16, 0.0);
    CHECK(placed.grasped);
    CHECK_FALSE(placed.attached_at_end);
    CHECK(dist2(placed.final_object, scene.goal) < 1e-6);

    // closing while already closed must not re-attach after release
    std::vector<std::vector<float>> stay{with_grip(at_obj, kGripperOpen),
                                         with_grip(at_obj, kGripperClosed),
                                         with_grip(at_obj, kGripperClosed)};
    auto held = run_episode(arm, scene, stay, 16, 0.0);
    CHECK(held.grasped);
    CHECK(held.attached_at_end);
}

TEST_CASE("dataset generation carries scenes, ranges and reproducible seeds") {
    auto ds = generate_dataset("reach", 3, 16, 42);
    REQUIRE(ds.sequences.size() == 3);
    REQUIRE(ds.scenes.size() == 3);
    CHECK(ds.joints == 4);
    REQUIRE(ds.joint_ranges.size() == 4);
    for (const auto& r : ds.joint_ranges) {
        CHECK(r[0] == doctest::Approx(-1.9));
        CHECK(r[1] == doctest::Approx(1.9));
    }
    auto again = generate_dataset("reach", 3, 16, 42);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(ds.sequences[i].frames == again.sequences[i].frames);
    }
    // first_index shifts the per-sequence seeds
    auto tail = generate_dataset("reach", 1, 16, 42, 2);
    CHECK(tail.sequences[0].frames == ds.sequences[2].frames);

    auto obj = generate_dataset("object", 1, 16, 7);
    CHECK(obj.joints == 5);
    REQUIRE(obj.joint_ranges.size() == 5);
    CHECK(obj.joint_ranges[4][0] == doctest::Approx(0.0));
    CHECK(obj.joint_ranges[4][1] == doctest::Approx(1.0));

    auto empty = generate_dataset("reach", 0, 16, 1);
    CHECK(empty.sequences.empty());
    empty.validate();
}

TEST_CASE("goal samples stay inside the reachable sector") {
    Rng rng(31337);
    const auto arm = ArmModel::standard();
    for (int i = 0; i < 200; ++i) {
        auto g = sample_goal(rng);
        CHECK(g[0] >= 0.10);
        CHECK(g[0] <= 0.90);
        CHECK(g[1] >= 0.18);
        CHECK(g[1] <= 0.90);
        const double r = dist2(g, arm.base);
        CHECK(r >= 0.40 - 1e-12);
        CHECK(r <= 0.80 + 1e-12);
    }
}

#include "pdvmrnn/arm_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pdvmrnn/errors.hpp"

namespace pdvmrnn {

namespace {

using Vec2 = std::array<double, 2>;

double dist(const Vec2& a, const Vec2& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

constexpr double kNominalJointSpeed = 0.09; // rad per frame along the slowest joint
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kMaxIkStep = 0.15;
constexpr double kIkDamping = 1e-6; // lambda^2 floor; err^2 is added on top

} // namespace

ArmModel ArmModel::standard() {
    ArmModel m;
    m.link_lengths = {0.25, 0.25, 0.25, 0.25};
    return m;
}

double ArmModel::reach() const {
    double s = 0;
    for (double l : link_lengths) s += l;
    return s;
}

void ArmModel::validate() const {
    if (link_lengths.empty()) throw ValidationError("arm: no links");
    for (double l : link_lengths) {
        if (!(l > 0)) throw ValidationError("arm: non-positive link length");
    }
    if (!(joint_limit > kIkMargin)) throw ValidationError("arm: joint limit too tight");
}

std::vector<double> home_posture() { return {0.9, -1.4, 1.2, -0.7}; }

std::vector<std::array<double, 2>> fk_points(const ArmModel& arm, const std::vector<double>& angles) {
    if (int(angles.size()) != arm.joints()) {
        throw ValidationError("fk: " + std::to_string(angles.size()) + " angles for " +
                              std::to_string(arm.joints()) + " joints");
    }
    std::vector<Vec2> pts;
    pts.reserve(angles.size() + 1);
    pts.push_back(arm.base);
    double alpha = kPi / 2.0; // zero posture points straight up
    for (size_t j = 0; j < angles.size(); ++j) {
        alpha += angles[j];
        const Vec2& p = pts.back();
        pts.push_back({p[0] + arm.link_lengths[j] * std::cos(alpha),
                       p[1] + arm.link_lengths[j] * std::sin(alpha)});
    }
    return pts;
}

std::array<double, 2> fk(const ArmModel& arm, const std::vector<double>& angles) {
    return fk_points(arm, angles).back();
}

namespace {

double target_error(const ArmModel& arm, const Vec2& target, const std::vector<double>& theta) {
    const auto ee = fk(arm, theta);
    return std::hypot(target[0] - ee[0], target[1] - ee[1]);
}

// Damped-least-squares descent with a backtracking line search. Joints resting
// on the working bound are frozen out of the solve when the step would push
// them further out, so the remaining joints still get a descent direction.
double ik_descend(const ArmModel& arm, const Vec2& target, double working, double tol,
                  std::vector<double>& theta) {
    const int n = arm.joints();
    std::vector<double> best = theta;
    double best_err = std::numeric_limits<double>::infinity();
    std::vector<double> cx(n, 0.0);
    std::vector<double> cy(n, 0.0);
    std::vector<double> dtheta(n, 0.0);
    std::vector<char> frozen(n, 0);
    std::vector<double> cand(n, 0.0);
    for (int iter = 0; iter < 200; ++iter) {
        const auto pts = fk_points(arm, theta);
        const Vec2& ee = pts.back();
        const double ex = target[0] - ee[0];
        const double ey = target[1] - ee[1];
        const double err = std::hypot(ex, ey);
        if (err < best_err) {
            best_err = err;
            best = theta;
        }
        if (err < tol) break;
        // planar jacobian column j: rotate (ee - joint_j) by 90 degrees
        for (int j = 0; j < n; ++j) {
            cx[j] = -(ee[1] - pts[j][1]);
            cy[j] = ee[0] - pts[j][0];
            frozen[j] = 0;
        }
        const double lam2 = kIkDamping + err * err;
        for (int pass = 0; pass <= n; ++pass) {
            double axx = lam2, axy = 0.0, ayy = lam2;
            for (int j = 0; j < n; ++j) {
                if (frozen[j]) continue;
                axx += cx[j] * cx[j];
                axy += cx[j] * cy[j];
                ayy += cy[j] * cy[j];
            }
            const double det = axx * ayy - axy * axy;
            const double yx = (ex * ayy - ey * axy) / det;
            const double yy = (ey * axx - ex * axy) / det;
            bool refreeze = false;
            for (int j = 0; j < n; ++j) {
                dtheta[j] = frozen[j] ? 0.0 : cx[j] * yx + cy[j] * yy;
                if (!frozen[j] && std::abs(theta[j]) >= working - 1e-9 &&
                    theta[j] * dtheta[j] > 0) {
                    frozen[j] = 1;
                    refreeze = true;
                }
            }
            if (!refreeze) break;
        }
        double m = 0;
        for (int j = 0; j < n; ++j) m = std::max(m, std::abs(dtheta[j]));
        if (m == 0.0) break;
        double scale = m > kMaxIkStep ? kMaxIkStep / m : 1.0;
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            for (int j = 0; j < n; ++j) {
                cand[j] = clampd(theta[j] + scale * dtheta[j], -working, working);
            }
            if (target_error(arm, target, cand) < err) {
                theta = cand;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) break; // stalled; caller tries another seed
    }
    theta = best;
    return best_err;
}

// Uniform-curvature posture reaching distance |target - base|: every joint past
// the first bends by the same angle b, the first joint aims the chord at the
// target. Lands near-exact for equal-length links, which makes it a strong
// deterministic seed for the descent.
std::vector<double> arc_seed(const ArmModel& arm, const Vec2& target, double working,
                             double bend_sign) {
    const int n = arm.joints();
    const double d = dist(target, arm.base);
    auto chord = [&](double b) {
        std::vector<double> th(size_t(n), b * bend_sign);
        th[0] = 0.0;
        const auto ee = fk(arm, th);
        return std::array<double, 3>{ee[0] - arm.base[0], ee[1] - arm.base[1],
                                     std::hypot(ee[0] - arm.base[0], ee[1] - arm.base[1])};
    };
    double lo = 0.0;
    double hi = std::min(working, n > 1 ? 2.0 * kPi / double(n) * 0.999 : working);
    double b = hi;
    if (chord(hi)[2] <= d) {
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (chord(mid)[2] > d) lo = mid; else hi = mid;
        }
        b = 0.5 * (lo + hi);
    }
    const auto c = chord(b);
    const double phi = std::atan2(target[1] - arm.base[1], target[0] - arm.base[0]);
    double a = phi - std::atan2(c[1], c[0]);
    while (a > kPi) a -= 2.0 * kPi;
    while (a < -kPi) a += 2.0 * kPi;
    std::vector<double> th(size_t(n), b * bend_sign);
    th[0] = clampd(a, -working, working);
    return th;
}

} // namespace

std::vector<double> ik(const ArmModel& arm, std::array<double, 2> target,
                       std::vector<double> start, double tol) {
    arm.validate();
    if (int(start.size()) != arm.joints()) {
        throw ValidationError("ik: start posture has " + std::to_string(start.size()) +
                              " angles for " + std::to_string(arm.joints()) + " joints");
    }
    const double rt = dist(target, arm.base);
    if (rt > arm.reach() * 0.99) {
        throw ValidationError("ik: target (" + std::to_string(target[0]) + ", " +
                              std::to_string(target[1]) + ") out of reach");
    }
    const double working = arm.joint_limit - kIkMargin;
    for (auto& a : start) a = clampd(a, -working, working);
    std::vector<std::vector<double>> seeds;
    seeds.push_back(start);
    seeds.push_back(arc_seed(arm, target, working, 1.0));
    seeds.push_back(arc_seed(arm, target, working, -1.0));
    if (int(home_posture().size()) == arm.joints()) {
        auto home = home_posture();
        auto mirrored = home;
        for (auto& a : mirrored) a = -a;
        for (auto& a : home) a = clampd(a, -working, working);
        for (auto& a : mirrored) a = clampd(a, -working, working);
        seeds.push_back(home);
        seeds.push_back(mirrored);
    }
    std::vector<double> best;
    double best_err = std::numeric_limits<double>::infinity();
    for (auto& seed : seeds) {
        const double err = ik_descend(arm, target, working, tol, seed);
        if (err < best_err) {
            best_err = err;
            best = seed;
        }
        if (best_err < tol) break;
    }
    if (best_err > 1e-6) {
        throw ValidationError("ik: no solution within tolerance for (" +
                              std::to_string(target[0]) + ", " + std::to_string(target[1]) + ")");
    }
    return best;
}

namespace {

struct Shape {
    bool capsule = false;
    Vec2 a{0, 0}, b{0, 0};
    double radius = 0;
    double gray = 0;
};

double shape_distance(const Shape& s, const Vec2& p) {
    if (!s.capsule) return dist(p, s.a) - s.radius;
    const double vx = s.b[0] - s.a[0], vy = s.b[1] - s.a[1];
    const double len2 = vx * vx + vy * vy;
    double t = 0;
    if (len2 > 0) t = clampd(((p[0] - s.a[0]) * vx + (p[1] - s.a[1]) * vy) / len2, 0.0, 1.0);
    const Vec2 c{s.a[0] + t * vx, s.a[1] + t * vy};
    return dist(p, c) - s.radius;
}

void paint(std::vector<double>& canvas, int N, const Shape& s) {
    const double feather = 1.0 / N;
    const double x0 = std::min(s.a[0], s.b[0]) - s.radius - feather;
    const double x1 = std::max(s.a[0], s.b[0]) + s.radius + feather;
    const double y0 = std::min(s.a[1], s.b[1]) - s.radius - feather;
    const double y1 = std::max(s.a[1], s.b[1]) + s.radius + feather;
    const int c0 = std::max(0, int(std::floor(x0 * N)));
    const int c1 = std::min(N - 1, int(std::ceil(x1 * N)));
    const int r0 = std::max(0, int(std::floor((1.0 - y1) * N)));
    const int r1 = std::min(N - 1, int(std::ceil((1.0 - y0) * N)));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const Vec2 p{(c + 0.5) / N, 1.0 - (r + 0.5) / N};
            const double d = shape_distance(s, p);
            const double alpha = clampd(0.5 - d * N, 0.0, 1.0);
            if (alpha <= 0) continue;
            double& v = canvas[size_t(r) * N + c];
            v = v * (1.0 - alpha) + s.gray * alpha;
        }
    }
}

} // namespace

std::vector<uint8_t> render(const RenderScene& scene, int frame_size) {
    if (frame_size < 4) throw ValidationError("render: frame size must be >= 4");
    const int N = frame_size;
    std::vector<double> canvas(size_t(N) * N, 0.0);
    std::vector<Shape> shapes;
    if (scene.marker) shapes.push_back({false, *scene.marker, *scene.marker, kMarkerRadius, 90.0});
    if (scene.object) shapes.push_back({false, *scene.object, *scene.object, kObjectRadius, 170.0});
    if (scene.arm) {
        const auto pts = fk_points(*scene.arm, scene.angles);
        for (size_t j = 0; j + 1 < pts.size(); ++j) {
            shapes.push_back({true, pts[j], pts[j + 1], kArmHalfWidth, 255.0});
        }
        if (scene.show_gripper) {
            shapes.push_back({false, pts.back(), pts.back(), kGripperRadius,
                              scene.gripper_closed ? 255.0 : 120.0});
        }
    }
    for (const auto& s : shapes) paint(canvas, N, s);
    std::vector<uint8_t> out(canvas.size());
    for (size_t i = 0; i < canvas.size(); ++i) {
        out[i] = uint8_t(std::lround(clampd(canvas[i], 0.0, 255.0)));
    }
    return out;
}

std::array<double, 2> sample_goal(Rng& rng) {
    for (;;) {
        const double r = rng.uniform(0.40, 0.80);
        const double phi = rng.uniform(0.61, 2.53); // 35..145 degrees
        const double x = 0.5 + r * std::cos(phi);
        const double y = 0.04 + r * std::sin(phi);
        if (x >= 0.10 && x <= 0.90 && y >= 0.18 && y <= 0.90) return {x, y};
    }
}

EpisodeStepper::EpisodeStepper(const ArmModel& arm, const SceneInfo& scene, int frame_size,
                               double grasp_tolerance)
    : arm_(arm), scene_(scene), frame_size_(frame_size), grasp_tolerance_(grasp_tolerance),
      object_task_(scene.task == "object"), want_(arm.joints() + (object_task_ ? 1 : 0)),
      object_(object_task_ ? scene.object : std::nullopt) {
    if (object_task_ && !object_) throw ValidationError("episode: object task without an object");
}

std::vector<uint8_t> EpisodeStepper::step(const std::vector<float>& row) {
    if (int(row.size()) != want_) {
        throw ValidationError("episode: joint row has " + std::to_string(row.size()) +
                              " values, expected " + std::to_string(want_));
    }
    const int n = arm_.joints();
    std::vector<double> angles(size_t(n), 0.0);
    for (int j = 0; j < n; ++j) angles[size_t(j)] = double(row[size_t(j)]);
    const bool closed = object_task_ && double(row[size_t(n)]) > kGripperThreshold;
    ee_ = fk(arm_, angles);
    if (object_task_) {
        if (!attached_ && closed && !prev_closed_ &&
            dist(ee_, *object_) < kObjectRadius + grasp_tolerance_) {
            attached_ = true;
            grasped_ = true;
        }
        if (attached_ && !closed) attached_ = false; // released: object stays put
        if (attached_) *object_ = ee_;               // tracks the end effector exactly
    }
    if (scene_.marker && scene_.task == "two_point" && dist(ee_, *scene_.marker) <= kMarkerRadius) {
        touched_ = true;
    }
    RenderScene rs;
    rs.arm = &arm_;
    rs.angles = angles;
    rs.show_gripper = object_task_;
    rs.gripper_closed = closed;
    rs.marker = scene_.marker;
    rs.object = object_;
    prev_closed_ = closed;
    return render(rs, frame_size_);
}

EpisodeResult run_episode(const ArmModel& arm, const SceneInfo& scene,
                          const std::vector<std::vector<float>>& joint_rows, int frame_size,
                          double grasp_tolerance) {
    if (joint_rows.empty()) throw ValidationError("episode: no joint rows");
    EpisodeStepper stepper(arm, scene, frame_size, grasp_tolerance);
    EpisodeResult out;
    for (const auto& row : joint_rows) {
        out.frames.push_back(stepper.step(row));
    }
    out.final_ee = stepper.ee();
    if (stepper.object()) out.final_object = *stepper.object();
    out.touched = stepper.touched();
    out.grasped = stepper.grasped();
    out.attached_at_end = stepper.attached();
    return out;
}

namespace {

// Joint-space path through the waypoint postures with eased interpolation
// and per-segment speed jitter; `grips` holds the gripper value while
// traveling toward each waypoint (ignored without a gripper channel).
std::vector<std::vector<float>> synthesize_rows(const std::vector<std::vector<double>>& postures,
                                                const std::vector<double>& grips, bool with_grip,
                                                Rng& rng) {
    std::vector<std::vector<float>> rows;
    auto push = [&](const std::vector<double>& theta, double g) {
        std::vector<float> row(theta.begin(), theta.end());
        if (with_grip) row.push_back(float(g));
        rows.push_back(std::move(row));
    };
    push(postures[0], grips[0]);
    for (size_t seg = 0; seg + 1 < postures.size(); ++seg) {
        const auto& a = postures[seg];
        const auto& b = postures[seg + 1];
        double d = 0;
        for (size_t j = 0; j < a.size(); ++j) d = std::max(d, std::abs(b[j] - a[j]));
        const double jitter = rng.uniform(0.7, 1.3);
        const int steps = std::max(2, int(std::lround(d / (kNominalJointSpeed * jitter))));
        for (int k = 1; k <= steps; ++k) {
            const double s = double(k) / steps;
            const double e = s * s * (3.0 - 2.0 * s);
            std::vector<double> theta(a.size());
            for (size_t j = 0; j < a.size(); ++j) theta[j] = a[j] + (b[j] - a[j]) * e;
            push(theta, grips[seg + 1]);
        }
    }
    return rows;
}

void insert_pauses(std::vector<std::vector<float>>& rows, Rng& rng) {
    const int pauses = int(rng.below(3)); // 0..2
    for (int p = 0; p < pauses; ++p) {
        const size_t pos = 1 + size_t(rng.below(rows.size() - 1));
        const int dur = 1 + int(rng.below(3)); // 1..3 held frames
        const std::vector<float> held = rows[pos];
        rows.insert(rows.begin() + long(pos), size_t(dur), held);
    }
}

// Intermediate waypoint perturbation, clipped so the point stays in a disc
// of `max_len` around the unperturbed position.
Vec2 perturb(const Vec2& p, double sigma, double max_len, Rng& rng) {
    double ox = rng.normal(0.0, sigma);
    double oy = rng.normal(0.0, sigma);
    const double l = std::hypot(ox, oy);
    if (l > max_len) {
        ox *= max_len / l;
        oy *= max_len / l;
    }
    return {p[0] + ox, p[1] + oy};
}

// A via point partway along the straight line with a sideways bow, kept in
// the workspace.
Vec2 via_point(const Vec2& from, const Vec2& to, Rng& rng) {
    const double u = rng.uniform(0.4, 0.6);
    const double off = rng.uniform(-0.08, 0.08);
    const double dx = to[0] - from[0], dy = to[1] - from[1];
    const double len = std::hypot(dx, dy);
    Vec2 v{from[0] + u * dx, from[1] + u * dy};
    if (len > 1e-9) {
        v[0] += -dy / len * off;
        v[1] += dx / len * off;
    }
    v = perturb(v, 0.01, 0.04, rng);
    v[0] = clampd(v[0], 0.10, 0.90);
    v[1] = clampd(v[1], 0.18, 0.90);
    return v;
}

} // namespace

VisuomotorSequence generate_tutoring_sequence(const ArmModel& arm, const std::string& task,
                                              int frame_size, uint64_t seed, SceneInfo& scene) {
    if (task != "reach" && task != "two_point" && task != "object") {
        throw ValidationError("unknown task '" + task + "' (reach|two_point|object)");
    }
    Rng rng(seed);
    const bool with_grip = task == "object";
    const auto home = home_posture();
    const Vec2 home_ee = fk(arm, home);

    scene = SceneInfo{};
    scene.task = task;
    std::vector<std::vector<double>> postures{home};
    std::vector<double> grips{kGripperOpen};
    auto add = [&](const Vec2& target, double grip) {
        postures.push_back(ik(arm, target, postures.back()));
        grips.push_back(grip);
    };

    if (task == "reach") {
        const Vec2 goal = sample_goal(rng);
        scene.goal = goal;
        add(via_point(home_ee, goal, rng), kGripperOpen);
        add(goal, kGripperOpen);
    } else if (task == "two_point") {
        const Vec2 marker = sample_goal(rng);
        Vec2 goal = sample_goal(rng);
        while (dist(goal, marker) < 0.18) goal = sample_goal(rng);
        scene.goal = goal;
        scene.marker = marker;
        add(perturb(marker, 0.01, 0.04, rng), kGripperOpen); // still inside the disc
        add(goal, kGripperOpen);
    } else {
        const Vec2 object = sample_goal(rng);
        Vec2 sheet = sample_goal(rng);
        while (dist(sheet, object) < 0.18) sheet = sample_goal(rng);
        scene.goal = sheet;
        scene.marker = sheet; // the target sheet is visible
        scene.object = object;
        add(via_point(home_ee, object, rng), kGripperOpen);
        add(object, kGripperOpen);
        postures.push_back(postures.back()); // close the gripper on the object
        grips.push_back(kGripperClosed);
        add(via_point(object, sheet, rng), kGripperClosed);
        add(sheet, kGripperClosed);
        postures.push_back(postures.back()); // release
        grips.push_back(kGripperOpen);
    }

    auto rows = synthesize_rows(postures, grips, with_grip, rng);
    insert_pauses(rows, rng);

    const auto episode = run_episode(arm, scene, rows, frame_size, 0.0);
    // generator self-checks: every demonstration must satisfy its task
    if (task == "reach" || task == "two_point") {
        if (dist(episode.final_ee, scene.goal) > 1e-5) {
            throw NumericalError("tutoring generator: final posture missed the goal");
        }
    }
    if (task == "two_point" && !episode.touched) {
        throw NumericalError("tutoring generator: marker never touched");
    }
    if (task == "object") {
        if (!episode.grasped || episode.attached_at_end ||
            dist(episode.final_object, scene.goal) > 1e-5) {
            throw NumericalError("tutoring generator: object not placed on the sheet");
        }
    }

    VisuomotorSequence seq;
    seq.frame_size = frame_size;
    seq.joints = int(rows[0].size());
    seq.frames = episode.frames;
    seq.joint_angles = rows;
    seq.validate();
    return seq;
}

Dataset generate_dataset(const std::string& task, int count, int frame_size,
                         uint64_t base_seed, uint64_t first_index) {
    if (count < 0) throw ValidationError("gen-data: negative count");
    const ArmModel arm = ArmModel::standard();
    Dataset ds;
    ds.task = task;
    ds.frame_size = frame_size;
    ds.joints = arm.joints() + (task == "object" ? 1 : 0);
    ds.base_seed = base_seed;
    ds.first_index = first_index;
    for (int j = 0; j < arm.joints(); ++j) {
        ds.joint_ranges.push_back({-arm.joint_limit, arm.joint_limit});
    }
    if (task == "object") ds.joint_ranges.push_back({0.0, 1.0});
    for (int i = 0; i < count; ++i) {
        SceneInfo scene;
        auto seq = generate_tutoring_sequence(arm, task, frame_size,
                                              mix_seed(base_seed, first_index + uint64_t(i)), scene);
        ds.sequences.push_back(std::move(seq));
        ds.scenes.push_back(scene);
    }
    ds.validate();
    return ds;
}

ExecutionResult execute_plan(const ArmModel& arm, const SceneInfo& scene,
                             const std::vector<std::vector<float>>& joint_rows, int frame_size,
                             double grasp_tolerance) {
    const bool with_grip = scene.task == "object";
    const int n = arm.joints();
    std::vector<std::vector<float>> clamped = joint_rows;
    for (auto& row : clamped) {
        if (int(row.size()) != n + (with_grip ? 1 : 0)) {
            throw ValidationError("execute: joint row width mismatch");
        }
        for (int j = 0; j < n; ++j) {
            row[j] = float(clampd(double(row[j]), -arm.joint_limit, arm.joint_limit));
        }
        if (with_grip) row[n] = float(clampd(double(row[n]), 0.0, 1.0));
    }
    auto episode = run_episode(arm, scene, clamped, frame_size, grasp_tolerance);
    ExecutionResult out;
    out.executed.frame_size = frame_size;
    out.executed.joints = n + (with_grip ? 1 : 0);
    out.executed.frames = std::move(episode.frames);
    out.executed.joint_angles = std::move(clamped);
    out.final_ee = episode.final_ee;
    out.final_object = episode.final_object;
    out.touched = episode.touched;
    out.grasped = episode.grasped;
    const Vec2 ref = with_grip ? episode.final_object : episode.final_ee;
    out.deviation = dist(ref, scene.goal);
    return out;
}

} // namespace pdvmrnn

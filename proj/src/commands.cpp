#include "pdvmrnn/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "pdvmrnn/arm_sim.hpp"
#include "pdvmrnn/evaluation.hpp"
#include "pdvmrnn/gradcheck.hpp"
#include "pdvmrnn/image_io.hpp"
#include "pdvmrnn/json.hpp"
#include "pdvmrnn/persistence.hpp"
#include "pdvmrnn/run_config.hpp"
#include "pdvmrnn/trainer.hpp"

namespace pdvmrnn {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

const char* kUsage =
    "usage: pdvmrnn <command> [flags]\n"
    "commands:\n"
    "  gen-data       synthesize a tutoring dataset        --count N --out DIR [--task T]\n"
    "                 [--seed S] [--first I] [--config F] [--set k=v]\n"
    "  train          fit a model                          --data FILE --out DIR\n"
    "                 [--resume CKPT] [--config F] [--set k=v]\n"
    "  plan           infer an actuation plan for a goal   --checkpoint CKPT --test FILE\n"
    "                 --index I --out DIR [--tmax N] [--restarts N] [--iterations N]\n"
    "                 [--scope all|vision|motor] [--config F] [--set k=v]\n"
    "  execute        replay planned joints in the world   --joints CSV --test FILE\n"
    "                 --index I --out DIR [--grasp-tolerance PX] [--threshold PX]\n"
    "  evaluate       score a checkpoint on a test set     --checkpoint CKPT --test FILE\n"
    "                 --out DIR [--mode closed|open] [--threshold PX]\n"
    "                 [--grasp-tolerance PX] [--threads N] [--tmax N] [--restarts N]\n"
    "                 [--iterations N] [--scope S] [--config F] [--set k=v]\n"
    "  gradcheck      finite-difference check of every gradient\n"
    "  export-frames  tile frames into one image           --out IMG [--dataset FILE\n"
    "                 --index I] [--frames DIR]... [--stride K]\n"
    "  plot           polyline chart from CSV columns      --csv FILE --out IMG\n"
    "                 [--cols a,b] [--width W] [--height H]\n"
    "exit codes: 0 ok, 1 usage, 2 validation/io, 3 numerical\n";

class Args {
public:
    static Args parse(const std::vector<std::string>& rest, const std::set<std::string>& allowed,
                      const std::string& cmd) {
        Args a;
        for (size_t i = 0; i < rest.size(); ++i) {
            const std::string& flag = rest[i];
            if (flag.rfind("--", 0) != 0) {
                throw UsageError(cmd + ": expected a flag, got '" + flag + "'");
            }
            if (!allowed.count(flag)) {
                throw UsageError(cmd + ": unknown flag '" + flag + "'");
            }
            if (i + 1 >= rest.size()) {
                throw UsageError(cmd + ": flag '" + flag + "' needs a value");
            }
            a.kv_[flag].push_back(rest[++i]);
        }
        a.cmd_ = cmd;
        return a;
    }

    bool has(const std::string& flag) const { return kv_.count(flag) != 0; }

    const std::string& need(const std::string& flag) const {
        auto it = kv_.find(flag);
        if (it == kv_.end()) throw UsageError(cmd_ + ": missing required flag '" + flag + "'");
        return it->second.back();
    }

    std::string get(const std::string& flag, const std::string& dflt) const {
        auto it = kv_.find(flag);
        return it == kv_.end() ? dflt : it->second.back();
    }

    std::vector<std::string> all(const std::string& flag) const {
        auto it = kv_.find(flag);
        return it == kv_.end() ? std::vector<std::string>{} : it->second;
    }

private:
    std::map<std::string, std::vector<std::string>> kv_;
    std::string cmd_;
};

long long parse_ll(const std::string& v, const std::string& what) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw UsageError(what + " needs an integer, got '" + v + "'");
    }
    return out;
}

uint64_t parse_u64(const std::string& v, const std::string& what) {
    uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw UsageError(what + " needs a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_num(const std::string& v, const std::string& what) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw UsageError(what + " needs a number, got '" + v + "'");
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string numf(float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

RunConfig config_from(const Args& a) {
    RunConfig cfg;
    if (a.has("--config")) cfg = load_run_config(a.need("--config"));
    for (const auto& kv : a.all("--set")) cfg.apply_line(kv);
    return cfg;
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

const char* mode_name(LoopMode m) { return m == LoopMode::Open ? "open" : "closed"; }

std::string step_name(int t) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "step_%04d.pgm", t);
    return buf;
}

void write_frame(const std::string& path, const std::vector<uint8_t>& px, int frame_size) {
    GrayImage img;
    img.w = frame_size;
    img.h = frame_size;
    img.px = px;
    write_pgm(path, img);
}

void write_frames_dir(const std::string& dir, const std::vector<std::vector<uint8_t>>& frames,
                      int frame_size) {
    ensure_dir(dir);
    for (size_t t = 0; t < frames.size(); ++t) {
        write_frame(dir + "/" + step_name(int(t) + 1), frames[t], frame_size);
    }
}

std::string joints_csv(const std::vector<std::vector<float>>& rows) {
    std::string out;
    const size_t width = rows.empty() ? 0 : rows.front().size();
    for (size_t j = 0; j < width; ++j) out += (j ? ",j" : "j") + std::to_string(j);
    out += '\n';
    for (const auto& row : rows) {
        for (size_t j = 0; j < row.size(); ++j) out += (j ? "," : "") + numf(row[j]);
        out += '\n';
    }
    return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        if (end > pos) {
            std::vector<std::string> cells;
            size_t c = pos;
            while (c <= end) {
                size_t comma = text.find(',', c);
                if (comma == std::string::npos || comma > end) comma = end;
                cells.push_back(text.substr(c, comma - c));
                c = comma + 1;
            }
            rows.push_back(std::move(cells));
        }
        pos = end + 1;
    }
    if (rows.empty()) throw ValidationError("csv '" + path + "': empty");
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) {
            throw ValidationError("csv '" + path + "': ragged row widths");
        }
    }
    return rows;
}

std::vector<std::vector<float>> read_joint_rows(const std::string& path) {
    const auto cells = parse_csv(slurp(path), path);
    std::vector<std::vector<float>> rows;
    rows.reserve(cells.size() - 1);
    for (size_t i = 1; i < cells.size(); ++i) {
        std::vector<float> row;
        row.reserve(cells[i].size());
        for (const auto& cell : cells[i]) {
            float v = 0.0f;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
                throw ValidationError("csv '" + path + "': bad number '" + cell + "'");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("csv '" + path + "': no joint rows");
    return rows;
}

Json point_json(const std::array<double, 2>& p) {
    Json j = Json::array();
    j.push(Json::number(p[0]));
    j.push(Json::number(p[1]));
    return j;
}

void write_image_by_ext(const std::string& path, const GrayImage& img) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0) {
        write_png(path, img);
    } else if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0) {
        write_pgm(path, img);
    } else {
        throw ValidationError("output image '" + path + "' must end in .png or .pgm");
    }
}

// Shared by plan/evaluate: apply planner flag overrides onto the config.
void apply_plan_flags(RunConfig& cfg, const Args& a) {
    if (a.has("--tmax")) cfg.plan.t_max = int(parse_ll(a.need("--tmax"), "--tmax"));
    if (a.has("--restarts")) cfg.plan.er.restarts = int(parse_ll(a.need("--restarts"), "--restarts"));
    if (a.has("--iterations")) {
        cfg.plan.er.iterations = int(parse_ll(a.need("--iterations"), "--iterations"));
    }
    if (a.has("--scope")) cfg.plan.scope = is_scope_from_string(a.need("--scope"));
}

std::string scope_word(IsScope s) {
    return s == IsScope::All ? "all" : (s == IsScope::Vision ? "vision" : "motor");
}

void check_test_against_checkpoint(const CheckpointData& ck, const Dataset& test) {
    const ModelConfig& cfg = ck.state.model.cfg;
    if (test.frame_size != cfg.frame_size || test.joints != cfg.joints) {
        throw ValidationError("test set is " + std::to_string(test.frame_size) + "px/" +
                              std::to_string(test.joints) + " joints, checkpoint expects " +
                              std::to_string(cfg.frame_size) + "px/" + std::to_string(cfg.joints));
    }
    if (test.task != ck.task) {
        throw ValidationError("test task '" + test.task + "' vs checkpoint task '" + ck.task + "'");
    }
    if (test.joint_ranges != ck.joint_ranges) {
        throw ValidationError("joint coding ranges differ from the checkpoint's");
    }
}

int resolve_t_max(int configured, const CheckpointData& ck) {
    const int t = configured == 0 ? ck.t_max_hint : configured;
    if (t < 2) throw ValidationError("plan horizon unset (no t_max and no checkpoint hint)");
    return t;
}

int cmd_gen_data(const std::vector<std::string>& rest) {
    const Args a = Args::parse(
        rest, {"--config", "--set", "--task", "--count", "--seed", "--first", "--out"}, "gen-data");
    RunConfig cfg = config_from(a);
    if (a.has("--task")) cfg.apply("task", a.need("--task"));
    if (a.has("--seed")) cfg.data_seed = parse_u64(a.need("--seed"), "--seed");
    const int count = int(parse_ll(a.need("--count"), "--count"));
    const uint64_t first = parse_u64(a.get("--first", "0"), "--first");
    const std::string out = a.need("--out");
    if (count < 0) throw UsageError("--count must be >= 0");
    // only the world-facing settings matter here; the model ladder is
    // validated by train, which re-derives geometry from the data anyway
    if (cfg.model.frame_size < 8) throw ValidationError("gen-data: frame size must be >= 8");
    if (cfg.model.block < 2) throw ValidationError("gen-data: block must be >= 2");

    Dataset ds = generate_dataset(cfg.task, count, cfg.model.frame_size, cfg.data_seed, first);
    ds.block = cfg.model.block;
    if (count == 0) std::fprintf(stderr, "warning: wrote an empty dataset\n");

    ensure_dir(out);
    save_dataset(out + "/dataset.bin", ds);
    write_text(out + "/run_config.txt", cfg.to_text());
    std::printf("wrote %s/dataset.bin: %d %s sequence(s), seed %s, indices [%s, %s)\n",
                out.c_str(), count, ds.task.c_str(), std::to_string(ds.base_seed).c_str(),
                std::to_string(first).c_str(), std::to_string(first + uint64_t(count)).c_str());
    return 0;
}

bool same_model_config(const ModelConfig& a, const ModelConfig& b) {
    return a.frame_size == b.frame_size && a.vision_channels == b.vision_channels &&
           a.shared_hw == b.shared_hw && a.shared_channels == b.shared_channels &&
           a.motor_widths == b.motor_widths && a.joints == b.joints && a.block == b.block;
}

int cmd_train(const std::vector<std::string>& rest) {
    const Args a = Args::parse(rest, {"--config", "--set", "--data", "--out", "--resume"}, "train");
    RunConfig cfg = config_from(a);
    const std::string out = a.need("--out");
    const Dataset ds = load_dataset(a.need("--data"));

    // the dataset is authoritative for world-facing geometry
    cfg.task = ds.task;
    cfg.model.frame_size = ds.frame_size;
    cfg.model.joints = ds.joints;
    cfg.data_seed = ds.base_seed;
    if (ds.block != cfg.model.block) {
        throw ValidationError("train: dataset coding block " + std::to_string(ds.block) +
                              " vs configured model.block " + std::to_string(cfg.model.block));
    }
    cfg.validate();
    if (ds.sequences.empty()) throw ValidationError("train: dataset has no sequences");

    const JointCoder coder = coder_for(ds, cfg.model.block);
    const auto enc = encode_dataset<float>(ds, coder);

    CheckpointData ck;
    if (a.has("--resume")) {
        ck = load_checkpoint(a.need("--resume"));
        if (!same_model_config(ck.state.model.cfg, cfg.model)) {
            throw ValidationError("resume: checkpoint model config differs from the resolved config");
        }
        if (ck.task != ds.task || ck.joint_ranges != ds.joint_ranges ||
            ck.data_seed != ds.base_seed || ck.data_first != ds.first_index ||
            ck.data_count != ds.sequences.size()) {
            throw ValidationError("resume: checkpoint was trained on different data");
        }
        if (cfg.train.epochs < ck.state.epochs_done) {
            throw ValidationError("resume: target epochs " + std::to_string(cfg.train.epochs) +
                                  " below the checkpoint's " + std::to_string(ck.state.epochs_done));
        }
    } else {
        ck.state = make_train_state<float>(cfg.model, enc.size(), cfg.train.seed);
        ck.seed = cfg.train.seed;
        ck.task = ds.task;
        ck.joint_ranges = ds.joint_ranges;
        ck.t_max_hint = int(std::ceil(1.5 * double(ds.longest())));
        ck.data_seed = ds.base_seed;
        ck.data_first = ds.first_index;
        ck.data_count = ds.sequences.size();
    }

    ensure_dir(out);
    write_text(out + "/run_config.txt", cfg.to_text());

    std::string loss_csv = "epoch,mode,total,vision,motor\n";
    const int first_epoch = ck.state.epochs_done;
    const int report_every = std::max(1, (cfg.train.epochs - first_epoch) / 10);
    for (int e = first_epoch; e < cfg.train.epochs; ++e) {
        const EpochStats st = train_epoch(ck.state, enc, cfg.train);
        loss_csv += std::to_string(st.epoch) + ',' + mode_name(st.mode) + ',' + num(st.total) +
                    ',' + num(st.vision) + ',' + num(st.motor) + '\n';
        if ((e - first_epoch) % report_every == 0 || e + 1 == cfg.train.epochs) {
            std::printf("epoch %d/%d (%s) total=%.6g vision=%.6g motor=%.6g\n", e + 1,
                        cfg.train.epochs, mode_name(st.mode), st.total, st.vision, st.motor);
        }
    }
    save_checkpoint(out + "/checkpoint.bin", ck);
    write_text(out + "/loss.csv", loss_csv);
    std::printf("wrote %s/checkpoint.bin after %d epoch(s) on %d sequence(s)\n", out.c_str(),
                ck.state.epochs_done, int(enc.size()));
    return 0;
}

int cmd_plan(const std::vector<std::string>& rest) {
    const Args a = Args::parse(rest,
                               {"--config", "--set", "--checkpoint", "--test", "--index", "--out",
                                "--tmax", "--restarts", "--iterations", "--scope"},
                               "plan");
    RunConfig cfg = config_from(a);
    apply_plan_flags(cfg, a);
    const std::string out = a.need("--out");
    const CheckpointData ck = load_checkpoint(a.need("--checkpoint"));
    const Dataset test = load_dataset(a.need("--test"));
    const int index = int(parse_ll(a.need("--index"), "--index"));
    test.validate();
    check_test_against_checkpoint(ck, test);
    if (index < 0 || size_t(index) >= test.sequences.size()) {
        throw ValidationError("plan: index " + std::to_string(index) + " outside test set of " +
                              std::to_string(test.sequences.size()));
    }
    cfg.plan.t_max = resolve_t_max(cfg.plan.t_max, ck);
    cfg.validate();

    const ModelConfig& mc = ck.state.model.cfg;
    const JointCoder coder = coder_for(test, mc.block);
    const PlanGoalT<float> goal = goal_from_sequence(test.sequences[size_t(index)], coder);
    PlanConfig trial_cfg = cfg.plan;
    trial_cfg.er.seed = mix_seed(cfg.plan.er.seed, uint64_t(index)); // same stream evaluate uses
    const auto res = plan(ck.state.model, goal, trial_cfg);

    ensure_dir(out);
    write_text(out + "/run_config.txt", cfg.to_text());

    Json j = Json::object();
    j.obj["index"] = Json::integer(index);
    j.obj["goal"] = point_json(test.scenes[size_t(index)].goal);
    j.obj["goal_step"] = Json::integer(res.goal_step);
    j.obj["loss"] = Json::number(res.loss);
    j.obj["converged"] = Json::boolean(res.converged);
    j.obj["best_restart"] = Json::integer(res.best_restart);
    j.obj["t_max"] = Json::integer(cfg.plan.t_max);
    j.obj["compensation"] = Json::number(cfg.plan.compensation);
    j.obj["scope"] = Json::str(scope_word(cfg.plan.scope));
    j.obj["er_seed"] = Json::uinteger(trial_cfg.er.seed);
    write_text(out + "/plan.json", j.dump() + "\n");

    std::string iters = "iter,loss,goal_step\n";
    for (const auto& row : res.curve) {
        iters += std::to_string(row.iter) + ',' + num(row.loss) + ',' +
                 std::to_string(row.goal_step) + '\n';
    }
    write_text(out + "/iterations.csv", iters);
    write_text(out + "/joints.csv", joints_csv(decode_rows(res.pred_m, coder)));

    std::vector<std::vector<uint8_t>> frames;
    frames.reserve(res.pred_v.size());
    for (const auto& v : res.pred_v) frames.push_back(denormalize_frame(v));
    write_frames_dir(out + "/frames", frames, mc.frame_size);
    write_frame(out + "/start.pgm", denormalize_frame(goal.start_frame), mc.frame_size);
    write_frame(out + "/target.pgm", denormalize_frame(goal.goal_frame), mc.frame_size);

    std::printf("plan for goal %d: %d step(s), loss %.6g, %s\n", index, res.goal_step, res.loss,
                res.converged ? "converged" : "iteration limit");
    return 0;
}

int cmd_execute(const std::vector<std::string>& rest) {
    const Args a = Args::parse(rest,
                               {"--config", "--set", "--joints", "--test", "--index", "--out",
                                "--grasp-tolerance", "--threshold"},
                               "execute");
    const RunConfig cfg = config_from(a);
    const std::string out = a.need("--out");
    const Dataset test = load_dataset(a.need("--test"));
    test.validate();
    const int index = int(parse_ll(a.need("--index"), "--index"));
    if (index < 0 || size_t(index) >= test.scenes.size()) {
        throw ValidationError("execute: index " + std::to_string(index) + " outside test set of " +
                              std::to_string(test.scenes.size()));
    }
    const auto rows = read_joint_rows(a.need("--joints"));
    const double threshold_px = parse_num(a.get("--threshold", "3"), "--threshold");
    const double grasp_px = parse_num(a.get("--grasp-tolerance", "0"), "--grasp-tolerance");

    const ArmModel arm = ArmModel::standard();
    const SceneInfo& scene = test.scenes[size_t(index)];
    const auto result = execute_plan(arm, scene, rows, test.frame_size, grasp_px / 64.0);

    const double deviation_px = result.deviation * 64.0;
    const bool near = deviation_px < threshold_px;
    bool success = near;
    if (scene.task == "two_point") success = near && result.touched;
    if (scene.task == "object") success = near && result.grasped;

    ensure_dir(out);
    write_text(out + "/run_config.txt", cfg.to_text());
    write_frames_dir(out + "/frames", result.executed.frames, test.frame_size);
    write_text(out + "/executed_joints.csv", joints_csv(result.executed.joint_angles));

    Json j = Json::object();
    j.obj["task"] = Json::str(scene.task);
    j.obj["index"] = Json::integer(index);
    j.obj["steps"] = Json::integer(int64_t(rows.size()));
    j.obj["goal"] = point_json(scene.goal);
    j.obj["final_ee"] = point_json(result.final_ee);
    j.obj["final_object"] = point_json(result.final_object);
    j.obj["deviation_world"] = Json::number(result.deviation);
    j.obj["deviation_px"] = Json::number(deviation_px);
    j.obj["threshold_px"] = Json::number(threshold_px);
    j.obj["grasp_tolerance_px"] = Json::number(grasp_px);
    j.obj["touched"] = Json::boolean(result.touched);
    j.obj["grasped"] = Json::boolean(result.grasped);
    j.obj["success"] = Json::boolean(success);
    write_text(out + "/outcome.json", j.dump() + "\n");

    std::printf("executed %d step(s): deviation %.3g px, %s\n", int(rows.size()), deviation_px,
                success ? "success" : "failure");
    return 0;
}

int cmd_evaluate(const std::vector<std::string>& rest) {
    const Args a = Args::parse(rest,
                               {"--config", "--set", "--checkpoint", "--test", "--out", "--mode",
                                "--threshold", "--grasp-tolerance", "--threads", "--tmax",
                                "--restarts", "--iterations", "--scope"},
                               "evaluate");
    RunConfig cfg = config_from(a);
    apply_plan_flags(cfg, a);
    const std::string out = a.need("--out");
    const CheckpointData ck = load_checkpoint(a.need("--checkpoint"));
    const Dataset test = load_dataset(a.need("--test"));
    cfg.plan.t_max = resolve_t_max(cfg.plan.t_max, ck);
    cfg.validate();

    EvalFlags flags;
    const std::string mode = a.get("--mode", "closed");
    if (mode == "open") {
        flags.open_loop = true;
    } else if (mode != "closed") {
        throw UsageError("--mode must be closed or open, got '" + mode + "'");
    }
    flags.threshold_px = parse_num(a.get("--threshold", "3"), "--threshold");
    flags.grasp_tolerance_px = parse_num(a.get("--grasp-tolerance", "0"), "--grasp-tolerance");
    flags.threads = int(parse_ll(a.get("--threads", "1"), "--threads"));

    const ArmModel arm = ArmModel::standard();
    const EvaluationReport rep = evaluate(arm, ck, test, cfg.plan, flags);

    ensure_dir(out);
    write_text(out + "/run_config.txt", cfg.to_text());
    write_text(out + "/report.csv", rep.csv());
    write_text(out + "/summary.json", rep.summary_json() + "\n");

    std::printf("provenance disjoint: train seed %s indices [%s, %s), test seed %s indices "
                "[%s, %s)\n",
                std::to_string(ck.data_seed).c_str(), std::to_string(ck.data_first).c_str(),
                std::to_string(ck.data_first + ck.data_count).c_str(),
                std::to_string(test.base_seed).c_str(), std::to_string(test.first_index).c_str(),
                std::to_string(test.first_index + test.sequences.size()).c_str());
    std::printf("%s\n", rep.summary_json().c_str());
    std::printf("success rate %.1f%% (%d/%d), mean deviation %.3g px, max %.3g px\n",
                rep.success_rate() * 100.0, rep.successes(), int(rep.trials.size()),
                rep.mean_deviation_px(), rep.max_deviation_px());
    return 0;
}

int cmd_gradcheck(const std::vector<std::string>& rest) {
    Args::parse(rest, {}, "gradcheck");
    const auto rows = run_gradient_suite();
    bool ok = true;
    for (const auto& r : rows) {
        std::printf("%-22s max_rel %.3e tol %.0e %s\n", r.name.c_str(), r.max_rel, r.tol,
                    r.ok ? "ok" : "FAIL");
        ok = ok && r.ok;
    }
    if (!ok) {
        std::fprintf(stderr, "gradient suite failed\n");
        return 3;
    }
    std::printf("all %d gradient checks passed\n", int(rows.size()));
    return 0;
}

int cmd_export_frames(const std::vector<std::string>& rest) {
    const Args a = Args::parse(rest, {"--dataset", "--index", "--frames", "--out", "--stride"},
                               "export-frames");
    const std::string out = a.need("--out");
    const int stride = int(parse_ll(a.get("--stride", "1"), "--stride"));
    if (stride < 1) throw UsageError("--stride must be >= 1");

    std::vector<std::vector<std::vector<uint8_t>>> rows;
    int frame_size = 0;
    auto add_row = [&](std::vector<std::vector<uint8_t>> frames, int size, const std::string& from) {
        if (frames.empty()) throw ValidationError("no frames in " + from);
        if (frame_size == 0) frame_size = size;
        if (size != frame_size) {
            throw ValidationError(from + " has " + std::to_string(size) + "px frames, other rows " +
                                  std::to_string(frame_size) + "px");
        }
        std::vector<std::vector<uint8_t>> kept;
        for (size_t i = 0; i < frames.size(); i += size_t(stride)) kept.push_back(frames[i]);
        rows.push_back(std::move(kept));
    };

    if (a.has("--dataset")) {
        const Dataset ds = load_dataset(a.need("--dataset"));
        const int index = int(parse_ll(a.need("--index"), "--index"));
        if (index < 0 || size_t(index) >= ds.sequences.size()) {
            throw ValidationError("export-frames: index " + std::to_string(index) +
                                  " outside dataset of " + std::to_string(ds.sequences.size()));
        }
        add_row(ds.sequences[size_t(index)].frames, ds.frame_size,
                "dataset sequence " + std::to_string(index));
    }
    for (const auto& dir : a.all("--frames")) {
        std::vector<std::string> names;
        std::error_code ec;
        for (const auto& entry : fs::directory_iterator(dir, ec)) {
            if (entry.path().extension() == ".pgm") names.push_back(entry.path().string());
        }
        if (ec) throw IoError("cannot list '" + dir + "': " + ec.message());
        std::sort(names.begin(), names.end());
        std::vector<std::vector<uint8_t>> frames;
        int size = 0;
        for (const auto& name : names) {
            const GrayImage img = read_pgm(name);
            if (img.w != img.h) throw ValidationError("'" + name + "' is not square");
            if (size == 0) size = img.w;
            if (img.w != size) throw ValidationError("mixed frame sizes under '" + dir + "'");
            frames.push_back(img.px);
        }
        add_row(std::move(frames), size, "'" + dir + "'");
    }
    if (rows.empty()) throw UsageError("export-frames: give --dataset and/or --frames sources");

    const GrayImage grid = frame_grid(rows, frame_size);
    write_image_by_ext(out, grid);
    size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    std::printf("wrote %s: %d row(s) x %d frame(s) at %dpx\n", out.c_str(), int(rows.size()),
                int(cols), frame_size);
    return 0;
}

int cmd_plot(const std::vector<std::string>& rest) {
    const Args a = Args::parse(rest, {"--csv", "--cols", "--out", "--width", "--height"}, "plot");
    const std::string path = a.need("--csv");
    const std::string out = a.need("--out");
    const int width = int(parse_ll(a.get("--width", "640"), "--width"));
    const int height = int(parse_ll(a.get("--height", "360"), "--height"));

    const auto cells = parse_csv(slurp(path), path);
    const auto& header = cells.front();
    auto numeric = [&](size_t col) {
        for (size_t r = 1; r < cells.size(); ++r) {
            double v = 0.0;
            const std::string& cell = cells[r][col];
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) return false;
        }
        return cells.size() > 1;
    };

    std::vector<size_t> picked;
    if (a.has("--cols")) {
        std::string spec = a.need("--cols");
        size_t pos = 0;
        while (pos <= spec.size()) {
            size_t comma = spec.find(',', pos);
            if (comma == std::string::npos) comma = spec.size();
            const std::string name = spec.substr(pos, comma - pos);
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) {
                throw ValidationError("plot: no column '" + name + "' in '" + path + "'");
            }
            const size_t col = size_t(it - header.begin());
            if (!numeric(col)) throw ValidationError("plot: column '" + name + "' is not numeric");
            picked.push_back(col);
            pos = comma + 1;
        }
    } else {
        for (size_t col = 1; col < header.size(); ++col) {
            if (numeric(col)) picked.push_back(col);
        }
        if (picked.empty()) throw ValidationError("plot: no numeric columns after the first");
    }

    std::vector<std::vector<double>> series;
    for (size_t col : picked) {
        std::vector<double> s;
        for (size_t r = 1; r < cells.size(); ++r) {
            double v = 0.0;
            const std::string& cell = cells[r][col];
            std::from_chars(cell.data(), cell.data() + cell.size(), v);
            s.push_back(v);
        }
        series.push_back(std::move(s));
    }
    write_image_by_ext(out, plot_series(series, width, height));
    std::printf("wrote %s: %d series, %d point(s)\n", out.c_str(), int(series.size()),
                int(cells.size() - 1));
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    try {
        if (args.empty() || args[0] == "help" || args[0] == "--help") {
            std::fputs(kUsage, args.empty() ? stderr : stdout);
            return args.empty() ? 1 : 0;
        }
        const std::string& cmd = args[0];
        const std::vector<std::string> rest(args.begin() + 1, args.end());
        if (cmd == "gen-data") return cmd_gen_data(rest);
        if (cmd == "train") return cmd_train(rest);
        if (cmd == "plan") return cmd_plan(rest);
        if (cmd == "execute") return cmd_execute(rest);
        if (cmd == "evaluate") return cmd_evaluate(rest);
        if (cmd == "gradcheck") return cmd_gradcheck(rest);
        if (cmd == "export-frames") return cmd_export_frames(rest);
        if (cmd == "plot") return cmd_plot(rest);
        throw UsageError("unknown command '" + cmd + "'");
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n%s", e.what(), kUsage);
        return 1;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

int run_cli(int argc, char** argv) {
    return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

} // namespace pdvmrnn

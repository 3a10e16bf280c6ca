#include "doctest.h"

#include "pdvmrnn/commands.hpp"
#include "pdvmrnn/json.hpp"
#include "testutil.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

using namespace pdvmrnn;
namespace fs = std::filesystem;

namespace {

int cli(std::initializer_list<std::string> args) { return run_cli(std::vector<std::string>(args)); }

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(f), "missing file: ", path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

size_t count_lines(const std::string& text) {
    size_t n = 0;
    for (char c : text) n += c == '\n' ? 1 : 0;
    return n;
}

// Small-but-real pipeline fixture shared by the CLI cases: one world, one
// scaled-down model, built once per binary run.
struct Pipeline {
    testutil::TempDir dir{"cli"};
    std::string base = dir.path.string();
    std::string train_data = base + "/data_train/dataset.bin";
    std::string test_data = base + "/data_test/dataset.bin";
    std::string ckpt = base + "/run/checkpoint.bin";

    Pipeline() {
        REQUIRE(cli({"gen-data", "--task", "reach", "--count", "3", "--seed", "11", "--out",
                     base + "/data_train", "--set", "model.frame_size=16"}) == 0);
        REQUIRE(cli({"gen-data", "--task", "reach", "--count", "2", "--seed", "11", "--first",
                     "1000", "--out", base + "/data_test", "--set", "model.frame_size=16"}) == 0);
        REQUIRE(train(base + "/run", 3) == 0);
    }

    int train(const std::string& out, int epochs, const std::string& resume = "",
              const std::vector<std::string>& extra = {}) {
        std::vector<std::string> args{
            "train",  "--data", train_data,
            "--out",  out,      "--set",
            "model.vision_channels=6,8", "--set", "model.shared_hw=2",
            "--set",  "model.shared_channels=6", "--set",
            "model.motor_widths=24,16", "--set", "train.epochs=" + std::to_string(epochs)};
        for (const std::string& e : extra) {
            args.push_back("--set");
            args.push_back(e);
        }
        if (!resume.empty()) {
            args.push_back("--resume");
            args.push_back(resume);
        }
        return run_cli(args);
    }
};

Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

} // namespace

TEST_CASE("cli maps argument problems to exit code 1") {
    CHECK(cli({}) == 1);
    CHECK(cli({"bogus"}) == 1);
    CHECK(cli({"help"}) == 0);
    CHECK(cli({"gen-data", "--out"}) == 1);                                   // missing value
    CHECK(cli({"gen-data", "--count", "2"}) == 1);                            // missing --out
    CHECK(cli({"gen-data", "--count", "2", "--out", "x", "--what", "y"}) == 1); // unknown flag
    CHECK(cli({"gen-data", "--count", "two", "--out", "x"}) == 1);            // bad number
    CHECK(cli({"train", "stray"}) == 1);                                      // not a flag
}

TEST_CASE("cli maps validation and io problems to exit code 2") {
    testutil::TempDir dir("cli_err");
    const std::string base = dir.path.string();
    CHECK(cli({"train", "--data", base + "/absent.bin", "--out", base + "/r"}) == 2);
    CHECK(cli({"gen-data", "--task", "fly", "--count", "1", "--out", base + "/d"}) == 2);
    CHECK(cli({"gen-data", "--count", "1", "--out", base + "/d2", "--set", "nope=1"}) == 2);
    CHECK(cli({"plot", "--csv", base + "/absent.csv", "--out", base + "/x.png"}) == 2);
}

TEST_CASE("gen-data writes a reproducible dataset and echoes its config") {
    const Pipeline& p = pipeline();
    const std::string bytes = slurp(p.train_data);
    CHECK(bytes.size() > 1000);
    CHECK(slurp(p.base + "/data_train/run_config.txt").find("task = reach") != std::string::npos);

    testutil::TempDir dir("cli_gen");
    const std::string base = dir.path.string();
    REQUIRE(cli({"gen-data", "--task", "reach", "--count", "3", "--seed", "11", "--out",
                 base + "/again", "--set", "model.frame_size=16"}) == 0);
    CHECK(slurp(base + "/again/dataset.bin") == bytes); // same seed, same bytes

    REQUIRE(cli({"gen-data", "--task", "reach", "--count", "3", "--seed", "11", "--first", "7",
                 "--out", base + "/shifted", "--set", "model.frame_size=16"}) == 0);
    CHECK(slurp(base + "/shifted/dataset.bin") != bytes); // different index range

    REQUIRE(cli({"gen-data", "--task", "reach", "--count", "0", "--out", base + "/empty",
                 "--set", "model.frame_size=16"}) == 0); // empty is valid, warns
    CHECK(fs::exists(base + "/empty/dataset.bin"));
}

TEST_CASE("train writes one loss row per epoch and resolves geometry from the data") {
    const Pipeline& p = pipeline();
    const std::string loss = slurp(p.base + "/run/loss.csv");
    CHECK(count_lines(loss) == 4); // header + 3 epochs
    CHECK(loss.substr(0, 23) == "epoch,mode,total,vision");

    const std::string echo = slurp(p.base + "/run/run_config.txt");
    CHECK(echo.find("model.frame_size = 16") != std::string::npos); // from the dataset
    CHECK(echo.find("model.joints = 4") != std::string::npos);
    CHECK(echo.find("data_seed = 11") != std::string::npos);
}

TEST_CASE("train is byte-deterministic and resume continues exactly") {
    Pipeline& p = pipeline();
    testutil::TempDir dir("cli_train");
    const std::string base = dir.path.string();

    REQUIRE(p.train(base + "/full", 5) == 0);
    REQUIRE(p.train(base + "/again", 5) == 0);
    CHECK(slurp(base + "/full/checkpoint.bin") == slurp(base + "/again/checkpoint.bin"));
    CHECK(slurp(base + "/full/loss.csv") == slurp(base + "/again/loss.csv"));

    // the open->closed switchover is a fraction of the target epoch count, so
    // pin the mode to keep the interrupted curriculum identical
    const std::vector<std::string> closed{"train.closed_loop_frac=1"};
    REQUIRE(p.train(base + "/full", 5, "", closed) == 0);
    REQUIRE(p.train(base + "/half", 2, "", closed) == 0);
    REQUIRE(p.train(base + "/rest", 5, base + "/half/checkpoint.bin", closed) == 0);
    CHECK(slurp(base + "/rest/checkpoint.bin") == slurp(base + "/full/checkpoint.bin"));

    // the two loss logs stitch into the uninterrupted one
    const std::string half = slurp(base + "/half/loss.csv");
    const std::string rest = slurp(base + "/rest/loss.csv");
    const std::string stitched = half + rest.substr(rest.find('\n') + 1);
    CHECK(stitched == slurp(base + "/full/loss.csv"));

    // resuming onto fewer target epochs is rejected
    CHECK(p.train(base + "/back", 1, base + "/full/checkpoint.bin") == 2);
}

TEST_CASE("plan and execute produce consistent, rerunnable artifacts") {
    const Pipeline& p = pipeline();
    testutil::TempDir dir("cli_plan");
    const std::string base = dir.path.string();

    REQUIRE(cli({"plan", "--checkpoint", p.ckpt, "--test", p.test_data, "--index", "0", "--out",
                 base + "/plan0", "--iterations", "8", "--restarts", "1", "--tmax", "10"}) == 0);
    const Json pj = Json::parse(slurp(base + "/plan0/plan.json"));
    const int goal_step = int(pj.at("goal_step").as_int());
    CHECK(goal_step >= 1);
    CHECK(goal_step <= 10);
    CHECK(count_lines(slurp(base + "/plan0/joints.csv")) == size_t(goal_step) + 1);
    CHECK(count_lines(slurp(base + "/plan0/iterations.csv")) == 10); // header + 9 evaluations
    CHECK(fs::exists(base + "/plan0/frames/step_0001.pgm"));
    CHECK(fs::exists(base + "/plan0/start.pgm"));
    CHECK(fs::exists(base + "/plan0/target.pgm"));

    REQUIRE(cli({"plan", "--checkpoint", p.ckpt, "--test", p.test_data, "--index", "0", "--out",
                 base + "/plan0b", "--iterations", "8", "--restarts", "1", "--tmax", "10"}) == 0);
    CHECK(slurp(base + "/plan0b/plan.json") == slurp(base + "/plan0/plan.json"));
    CHECK(slurp(base + "/plan0b/joints.csv") == slurp(base + "/plan0/joints.csv"));
    CHECK(slurp(base + "/plan0b/frames/step_0001.pgm") ==
          slurp(base + "/plan0/frames/step_0001.pgm"));

    REQUIRE(cli({"execute", "--joints", base + "/plan0/joints.csv", "--test", p.test_data,
                 "--index", "0", "--out", base + "/exec0"}) == 0);
    const Json oj = Json::parse(slurp(base + "/exec0/outcome.json"));
    CHECK(oj.at("steps").as_int() == goal_step);
    CHECK(oj.at("task").as_str() == "reach");
    CHECK(oj.at("deviation_px").as_double() >= 0.0);
    CHECK(count_lines(slurp(base + "/exec0/executed_joints.csv")) == size_t(goal_step) + 1);
    CHECK(fs::exists(base + "/exec0/frames/step_0001.pgm"));

    // out-of-range goal index is a validation error
    CHECK(cli({"plan", "--checkpoint", p.ckpt, "--test", p.test_data, "--index", "9", "--out",
               base + "/plan9", "--iterations", "1", "--restarts", "1", "--tmax", "10"}) == 2);
}

TEST_CASE("evaluate scores every goal and matches a single plan+execute run") {
    const Pipeline& p = pipeline();
    testutil::TempDir dir("cli_eval");
    const std::string base = dir.path.string();

    REQUIRE(cli({"evaluate", "--checkpoint", p.ckpt, "--test", p.test_data, "--out",
                 base + "/eval", "--iterations", "8", "--restarts", "1", "--tmax", "10"}) == 0);
    const std::string report = slurp(base + "/eval/report.csv");
    CHECK(count_lines(report) == 3); // header + 2 goals
    const Json summary = Json::parse(slurp(base + "/eval/summary.json"));
    CHECK(summary.at("trials").as_int() == 2);
    CHECK(summary.at("mode").as_str() == "closed");
    CHECK(summary.at("threshold_px").as_double() == 3.0);

    // trial 0 of evaluate equals the dedicated plan+execute of goal 0
    REQUIRE(cli({"plan", "--checkpoint", p.ckpt, "--test", p.test_data, "--index", "0", "--out",
                 base + "/p0", "--iterations", "8", "--restarts", "1", "--tmax", "10"}) == 0);
    REQUIRE(cli({"execute", "--joints", base + "/p0/joints.csv", "--test", p.test_data, "--index",
                 "0", "--out", base + "/x0"}) == 0);
    const Json oj = Json::parse(slurp(base + "/x0/outcome.json"));
    const size_t row = report.find('\n') + 1;
    const std::string first_row = report.substr(row, report.find('\n', row) - row);
    std::vector<std::string> cols;
    for (size_t at = 0;;) {
        const size_t comma = first_row.find(',', at);
        cols.push_back(first_row.substr(at, comma - at));
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    REQUIRE(cols.size() == 12);
    CHECK(cols[0] == "0");
    CHECK(std::stoll(cols[3]) == Json::parse(slurp(base + "/p0/plan.json")).at("goal_step").as_int());
    CHECK(std::stod(cols[7]) == doctest::Approx(oj.at("deviation_px").as_double()).epsilon(1e-12));

    // rerun with a worker pool: identical report
    REQUIRE(cli({"evaluate", "--checkpoint", p.ckpt, "--test", p.test_data, "--out",
                 base + "/eval2", "--iterations", "8", "--restarts", "1", "--tmax", "10",
                 "--threads", "2"}) == 0);
    CHECK(slurp(base + "/eval2/report.csv") == report);
    CHECK(slurp(base + "/eval2/summary.json") == slurp(base + "/eval/summary.json"));

    // open mode (one-step prediction) runs and labels itself
    REQUIRE(cli({"evaluate", "--checkpoint", p.ckpt, "--test", p.test_data, "--out",
                 base + "/evalo", "--mode", "open", "--iterations", "8", "--restarts", "1",
                 "--tmax", "10"}) == 0);
    CHECK(Json::parse(slurp(base + "/evalo/summary.json")).at("mode").as_str() == "open");

    // evaluating on the training goals is refused
    CHECK(cli({"evaluate", "--checkpoint", p.ckpt, "--test", p.train_data, "--out",
               base + "/leak", "--iterations", "1", "--restarts", "1", "--tmax", "10"}) == 2);
}

TEST_CASE("export-frames and plot emit images from pipeline artifacts") {
    const Pipeline& p = pipeline();
    testutil::TempDir dir("cli_img");
    const std::string base = dir.path.string();

    REQUIRE(cli({"plan", "--checkpoint", p.ckpt, "--test", p.test_data, "--index", "0", "--out",
                 base + "/plan", "--iterations", "4", "--restarts", "1", "--tmax", "6"}) == 0);
    REQUIRE(cli({"export-frames", "--dataset", p.test_data, "--index", "0", "--frames",
                 base + "/plan/frames", "--out", base + "/grid.png", "--stride", "2"}) == 0);
    const std::string png = slurp(base + "/grid.png");
    CHECK(png.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));

    REQUIRE(cli({"export-frames", "--frames", base + "/plan/frames", "--out",
                 base + "/grid.pgm"}) == 0);
    CHECK(slurp(base + "/grid.pgm").substr(0, 2) == "P5");

    CHECK(cli({"export-frames", "--out", base + "/none.png"}) == 1); // no sources
    CHECK(cli({"export-frames", "--frames", base + "/plan/frames", "--out",
               base + "/grid.bmp"}) == 2); // unsupported extension

    REQUIRE(cli({"plot", "--csv", p.base + "/run/loss.csv", "--out", base + "/loss.png"}) == 0);
    CHECK(slurp(base + "/loss.png").substr(1, 3) == "PNG");
    REQUIRE(cli({"plot", "--csv", base + "/plan/iterations.csv", "--cols", "loss", "--out",
                 base + "/iter.png"}) == 0);
    CHECK(cli({"plot", "--csv", p.base + "/run/loss.csv", "--cols", "nope", "--out",
               base + "/bad.png"}) == 2);
}

#include <doctest.h>

#include <cmath>

#include "pdvmrnn/trainer.hpp"
#include "synthdata.hpp"
#include "testutil.hpp"

using namespace pdvmrnn;
using testutil::synthetic_data;
using testutil::tiny_config;

TEST_CASE("loop mode schedule splits epochs by the closed-loop fraction") {
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.closed_loop_frac = 0.5;
    CHECK(cfg.mode_for_epoch(0) == LoopMode::Open);
    CHECK(cfg.mode_for_epoch(4) == LoopMode::Open);
    CHECK(cfg.mode_for_epoch(5) == LoopMode::Closed);
    CHECK(cfg.mode_for_epoch(9) == LoopMode::Closed);
    cfg.closed_loop_frac = 0.0;
    CHECK(cfg.mode_for_epoch(9) == LoopMode::Open);
    cfg.closed_loop_frac = 1.0;
    CHECK(cfg.mode_for_epoch(0) == LoopMode::Closed);
}

TEST_CASE("dataset encoding produces normalized frames and valid code blocks") {
    Dataset ds;
    ds.task = "reach";
    ds.frame_size = 8;
    ds.joints = 2;
    ds.joint_ranges = {{-1.0, 1.0}, {-0.5, 0.5}};
    VisuomotorSequence seq;
    seq.frame_size = 8;
    seq.joints = 2;
    for (int t = 0; t < 3; ++t) {
        std::vector<uint8_t> f(64);
        for (int i = 0; i < 64; ++i) f[i] = uint8_t((i * 4 + t * 17) % 256);
        seq.frames.push_back(f);
        seq.joint_angles.push_back({float(-0.9 + 0.3 * t), float(0.4 - 0.2 * t)});
    }
    ds.sequences.push_back(seq);
    ds.scenes.push_back({"reach", {0.1, 0.2}, std::nullopt, std::nullopt});
    ds.validate();

    auto coder = coder_for(ds, 5);
    auto data = encode_dataset<float>(ds, coder);
    REQUIRE(data.size() == 1);
    REQUIRE(data[0].steps() == 3);
    CHECK(data[0].v[0].shape == std::vector<int>{8, 8, 1});
    CHECK(data[0].m[0].shape == std::vector<int>{10});
    for (int t = 0; t < 3; ++t) {
        check_distribution_blocks(data[0].m[t], 5, "encoded joints");
        for (float v : data[0].v[t].data) {
            CHECK(v >= -1.0f);
            CHECK(v <= 1.0f);
        }
    }
    // decoding the encoded angles comes back close to the originals
    auto back = coder.decode(data[0].m[1].cast<double>());
    CHECK(back[0] == doctest::Approx(-0.6).epsilon(0.05));
    CHECK(back[1] == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("training overfits a small synthetic set and improves closed-loop generation") {
    auto data = synthetic_data(8);
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.seed = 7;
    auto st = make_train_state<float>(tiny_config(), data.size(), cfg.seed);

    std::vector<EpochStats> history;
    for (int e = 0; e < cfg.epochs; ++e) history.push_back(train_epoch(st, data, cfg));

    CHECK(history.front().mode == LoopMode::Open);
    CHECK(history.back().mode == LoopMode::Closed);
    // large overall reduction, and further progress within the closed phase
    CHECK(history.back().total < 0.2 * history.front().total);
    const auto& first_closed = history[history.size() / 2];
    CHECK(history.back().total < first_closed.total);
    CHECK(st.epochs_done == cfg.epochs);
    CHECK(st.w_step == cfg.epochs);

    // per-sequence losses under the final parameters agree with the last stats
    double replay = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        replay += sequence_loss(st.model, st.is_table[i], data[i], LoopMode::Closed)
                      .total(cfg.alpha_vision, cfg.alpha_motor);
    }
    CHECK(replay < history.back().total * 1.05 + 1e-6); // one more optimizer step was taken
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
    auto data = synthetic_data(6);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 11;

    auto run = [&]() {
        auto st = make_train_state<float>(tiny_config(), data.size(), cfg.seed);
        std::vector<double> totals;
        for (int e = 0; e < cfg.epochs; ++e) totals.push_back(train_epoch(st, data, cfg).total);
        return std::make_pair(std::move(st), std::move(totals));
    };
    auto [a, ta] = run();
    auto [b, tb] = run();
    CHECK(ta == tb);

    std::vector<float> pa, pb;
    a.model.for_each_param([&](const std::string&, Tensor& t) {
        pa.insert(pa.end(), t.data.begin(), t.data.end());
    });
    b.model.for_each_param([&](const std::string&, Tensor& t) {
        pb.insert(pb.end(), t.data.begin(), t.data.end());
    });
    CHECK(pa == pb);

    pa.clear();
    pb.clear();
    for (auto& is : a.is_table) {
        is.for_each([&](const std::string&, Tensor& t) {
            pa.insert(pa.end(), t.data.begin(), t.data.end());
        });
    }
    for (auto& is : b.is_table) {
        is.for_each([&](const std::string&, Tensor& t) {
            pb.insert(pb.end(), t.data.begin(), t.data.end());
        });
    }
    CHECK(pa == pb);
}

TEST_CASE("non-finite loss aborts with the epoch and sequence in the message") {
    auto data = synthetic_data(6);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 3;
    auto st = make_train_state<float>(tiny_config(), data.size(), cfg.seed);
    train_epoch(st, data, cfg);
    st.model.vhead_b[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        train_epoch(st, data, cfg);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch 1") != std::string::npos);
        CHECK(msg.find("sequence 0") != std::string::npos);
    }
}

TEST_CASE("sequence count mismatch with the intention table is rejected") {
    auto data = synthetic_data(4);
    TrainConfig cfg;
    auto st = make_train_state<float>(tiny_config(), 1, cfg.seed);
    CHECK_THROWS_AS(train_epoch(st, data, cfg), ValidationError);
}

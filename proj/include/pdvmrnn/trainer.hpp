#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pdvmrnn/adam.hpp"
#include "pdvmrnn/coding.hpp"
#include "pdvmrnn/dataset.hpp"
#include "pdvmrnn/model.hpp"

// Training: full-batch BPTT over all tutoring sequences. Two parameter
// groups learn together with separate Adam optimizers:
//   - the shared network weights (summed gradient over the whole dataset,
//     one step per epoch, fixed sequence order)
//   - one intention state per sequence (its own gradient and step)
// The first part of the schedule runs open loop (teacher forcing); the
// remainder re-feeds the model's own predictions (closed loop).

namespace pdvmrnn {

struct TrainConfig {
    int epochs = 500;
    double lr_weights = 1e-3;
    double lr_is = 1e-2; // 10x the weight rate
    double alpha_vision = 1.0;
    double alpha_motor = 1.0;
    double closed_loop_frac = 0.5; // fraction of epochs at the end run closed loop
    uint64_t seed = 1;

    LoopMode mode_for_epoch(int epoch) const {
        const int open_epochs = int(std::lround(double(epochs) * (1.0 - closed_loop_frac)));
        return epoch < open_epochs ? LoopMode::Open : LoopMode::Closed;
    }
};

template <typename S>
struct EncodedSeqT {
    std::vector<TensorT<S>> v; // normalized frames, step-indexed from 0
    std::vector<TensorT<S>> m; // joint population codes

    int steps() const { return int(v.size()); }
};

inline JointCoder coder_for(const Dataset& ds, int block) {
    std::vector<JointRange> ranges;
    for (const auto& r : ds.joint_ranges) ranges.push_back({r[0], r[1]});
    return JointCoder(std::move(ranges), block);
}

template <typename S>
EncodedSeqT<S> encode_sequence(const VisuomotorSequence& seq, const JointCoder& coder) {
    EncodedSeqT<S> enc;
    enc.v.reserve(seq.frames.size());
    enc.m.reserve(seq.frames.size());
    for (int t = 0; t < seq.steps(); ++t) {
        enc.v.push_back(normalize_frame<S>(seq.frames[t], seq.frame_size));
        std::vector<double> angles(seq.joint_angles[t].begin(), seq.joint_angles[t].end());
        enc.m.push_back(coder.encode<S>(angles));
    }
    return enc;
}

template <typename S>
std::vector<EncodedSeqT<S>> encode_dataset(const Dataset& ds, const JointCoder& coder) {
    std::vector<EncodedSeqT<S>> out;
    out.reserve(ds.sequences.size());
    for (const auto& s : ds.sequences) out.push_back(encode_sequence<S>(s, coder));
    return out;
}

struct SeqLoss {
    double vision = 0.0; // summed squared error over all steps and pixels
    double motor = 0.0;  // summed KL over all steps and joints
    int steps = 0;
    int pixels = 0;

    double total(double alpha_v, double alpha_m) const {
        return alpha_v * vision + alpha_m * motor;
    }
    double vision_per_pixel() const {
        return steps > 0 ? vision / (double(steps) * pixels) : 0.0;
    }
};

// Forward-only loss of one sequence under the given loop mode.
template <typename S>
SeqLoss sequence_loss(const ModelT<S>& model, const IntentionStateT<S>& is,
                      const EncodedSeqT<S>& enc, LoopMode mode) {
    auto r = rollout_forward(model, is, enc.steps(), mode, enc.v, enc.m);
    SeqLoss out;
    out.steps = enc.steps();
    out.pixels = model.cfg.frame_size * model.cfg.frame_size;
    for (int i = 0; i < enc.steps(); ++i) {
        out.vision += double(mse_loss(r.steps[i].pred_v, enc.v[i]));
        out.motor += double(kl_loss(r.steps[i].pred_m, enc.m[i], model.cfg.block));
    }
    return out;
}

template <typename S>
struct TrainStateT {
    ModelT<S> model;
    std::vector<IntentionStateT<S>> is_table;
    std::vector<AdamSlotT<S>> w_slots; // aligned with for_each_param order
    long w_step = 0;
    std::vector<std::vector<AdamSlotT<S>>> is_slots; // [seq][tensor]
    std::vector<long> is_steps;
    int epochs_done = 0;
};

template <typename S>
TrainStateT<S> make_train_state(const ModelConfig& cfg, size_t n_sequences, uint64_t seed) {
    TrainStateT<S> st;
    st.model = ModelT<S>::build(cfg);
    Rng rng(seed);
    st.model.init(rng);
    st.model.for_each_param([&](const std::string&, TensorT<S>& t) {
        st.w_slots.emplace_back(t.shape);
    });
    st.is_table.assign(n_sequences, ModelStateT<S>::zeros(cfg));
    st.is_slots.resize(n_sequences);
    st.is_steps.assign(n_sequences, 0);
    for (size_t i = 0; i < n_sequences; ++i) {
        st.is_table[i].for_each([&](const std::string&, TensorT<S>& t) {
            st.is_slots[i].emplace_back(t.shape);
        });
    }
    return st;
}

struct EpochStats {
    int epoch = 0;
    double total = 0.0;
    double vision = 0.0;
    double motor = 0.0;
    LoopMode mode = LoopMode::Open;
};

// One pass over the dataset: accumulate weight gradients across sequences in
// order, update each sequence's intention state right after its backward
// pass, then take one Adam step on the weights.
template <typename S>
EpochStats train_epoch(TrainStateT<S>& st, const std::vector<EncodedSeqT<S>>& data,
                       const TrainConfig& cfg) {
    if (data.size() != st.is_table.size()) {
        throw ValidationError("train_epoch: " + std::to_string(data.size()) + " sequences vs " +
                              std::to_string(st.is_table.size()) + " intention states");
    }
    EpochStats stats;
    stats.epoch = st.epochs_done;
    stats.mode = cfg.mode_for_epoch(st.epochs_done);

    ModelT<S> dmodel = st.model.grad_shape();
    AdamConfig is_adam;
    is_adam.lr = cfg.lr_is;

    for (size_t si = 0; si < data.size(); ++si) {
        const auto& enc = data[si];
        auto r = rollout_forward(st.model, st.is_table[si], enc.steps(), stats.mode, enc.v, enc.m);
        std::vector<TensorT<S>> dpv(enc.steps()), dpm(enc.steps());
        double lv = 0, lm = 0;
        for (int i = 0; i < enc.steps(); ++i) {
            lv += double(mse_loss(r.steps[i].pred_v, enc.v[i]));
            lm += double(kl_loss(r.steps[i].pred_m, enc.m[i], st.model.cfg.block));
            dpv[i] = mse_loss_grad(r.steps[i].pred_v, enc.v[i]);
            for (auto& g : dpv[i].data) g *= S(cfg.alpha_vision);
            dpm[i] = kl_loss_grad(r.steps[i].pred_m, enc.m[i], st.model.cfg.block);
            for (auto& g : dpm[i].data) g *= S(cfg.alpha_motor);
        }
        const double seq_total = cfg.alpha_vision * lv + cfg.alpha_motor * lm;
        if (!std::isfinite(seq_total)) {
            throw NumericalError("training diverged: non-finite loss at epoch " +
                                 std::to_string(st.epochs_done) + ", sequence " +
                                 std::to_string(si));
        }
        stats.vision += lv;
        stats.motor += lm;
        stats.total += seq_total;

        IntentionStateT<S> dis = ModelStateT<S>::zeros(st.model.cfg);
        rollout_backward(st.model, r, std::move(dpv), std::move(dpm), &dmodel, &dis);

        ++st.is_steps[si];
        size_t slot = 0;
        auto& slots = st.is_slots[si];
        IntentionStateT<S>& is = st.is_table[si];
        std::vector<TensorT<S>*> is_params, is_grads;
        is.for_each([&](const std::string&, TensorT<S>& t) { is_params.push_back(&t); });
        dis.for_each([&](const std::string&, TensorT<S>& t) { is_grads.push_back(&t); });
        for (; slot < is_params.size(); ++slot) {
            adam_step(*is_params[slot], *is_grads[slot], slots[slot], st.is_steps[si], is_adam);
        }
    }

    AdamConfig w_adam;
    w_adam.lr = cfg.lr_weights;
    ++st.w_step;
    std::vector<TensorT<S>*> params, grads;
    st.model.for_each_param([&](const std::string&, TensorT<S>& t) { params.push_back(&t); });
    dmodel.for_each_param([&](const std::string&, TensorT<S>& t) { grads.push_back(&t); });
    for (size_t i = 0; i < params.size(); ++i) {
        adam_step(*params[i], *grads[i], st.w_slots[i], st.w_step, w_adam);
    }

    ++st.epochs_done;
    return stats;
}

} // namespace pdvmrnn

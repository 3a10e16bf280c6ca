#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pdvmrnn/cells.hpp"
#include "pdvmrnn/kernels.hpp"
#include "pdvmrnn/rng.hpp"
#include "pdvmrnn/tensor.hpp"

// Two recurrent pathways joined at the top:
//   vision: frame -> ConvLSTM L1 -> L2 -> L3 \
//                                             > shared ConvLSTM (level 4)
//   motor:  joint code -> LSTM M1 -> M2 -> M3 /
// Each level receives bottom-up input from the level below (updated this
// step), top-down input from the level above (previous step), a lateral
// input from the counterpart pathway at the same level (previous step), and
// its own recurrence. Predictions are generated from the lowest level of
// each pathway: a transposed-conv + tanh head for the next frame, a dense +
// blockwise-softmax head for the next joint population code.
//
// The per-sequence initial states (h0, c0 of every cell) are trainable; they
// are the latent that error regression later searches over.

namespace pdvmrnn {

struct ModelConfig {
    int frame_size = 64;
    std::vector<int> vision_channels = {40, 80, 80};
    int shared_hw = 4;
    int shared_channels = 12;
    std::vector<int> motor_widths = {1024, 1024, 16};
    int joints = 4;
    int block = 10;

    int levels() const { return int(vision_channels.size()); }
    int motor_io() const { return joints * block; }
    int vision_hw(int level) const { return frame_size >> (level + 1); }

    static ModelConfig desk() {
        ModelConfig c;
        c.frame_size = 16;
        c.vision_channels = {8, 16, 16};
        c.shared_hw = 2;
        c.shared_channels = 8;
        c.motor_widths = {64, 64, 8};
        return c;
    }

    void validate() const {
        if (vision_channels.empty() || vision_channels.size() != motor_widths.size()) {
            throw ValidationError("model config: vision_channels and motor_widths must list the "
                                  "same non-zero number of levels");
        }
        const int L = levels();
        if (frame_size < (1 << (L + 1)) || frame_size % (1 << L) != 0) {
            throw ValidationError("model config: frame_size " + std::to_string(frame_size) +
                                  " cannot be halved " + std::to_string(L) + " times");
        }
        for (int c : vision_channels) {
            if (c <= 0) throw ValidationError("model config: vision channel counts must be positive");
        }
        for (int m : motor_widths) {
            if (m <= 0) throw ValidationError("model config: motor widths must be positive");
        }
        const int top = vision_hw(L - 1);
        if (shared_hw != top && 2 * shared_hw != top) {
            throw ValidationError("model config: shared grid " + std::to_string(shared_hw) +
                                  " must equal the top vision grid " + std::to_string(top) +
                                  " or half of it");
        }
        if (shared_channels <= 0 || joints <= 0 || block < 2) {
            throw ValidationError("model config: shared_channels/joints/block out of range");
        }
    }
};

// Full recurrent state of the network: one (h, c) pair per cell. Also serves
// as the per-sequence intention state (t = 0) and as the gradient container
// for state tensors.
template <typename S>
struct ModelStateT {
    std::vector<CellStateT<S>> vision;
    std::vector<CellStateT<S>> motor;
    CellStateT<S> shared;

    static ModelStateT zeros(const ModelConfig& cfg) {
        ModelStateT st;
        for (int l = 0; l < cfg.levels(); ++l) {
            st.vision.emplace_back(cfg.vision_hw(l), cfg.vision_hw(l), cfg.vision_channels[l]);
            st.motor.emplace_back(1, 1, cfg.motor_widths[l]);
        }
        st.shared = CellStateT<S>(cfg.shared_hw, cfg.shared_hw, cfg.shared_channels);
        return st;
    }

    void for_each(const std::function<void(const std::string&, TensorT<S>&)>& fn) {
        for (size_t l = 0; l < vision.size(); ++l) {
            fn("vision" + std::to_string(l + 1) + ".h0", vision[l].h);
            fn("vision" + std::to_string(l + 1) + ".c0", vision[l].c);
        }
        for (size_t l = 0; l < motor.size(); ++l) {
            fn("motor" + std::to_string(l + 1) + ".h0", motor[l].h);
            fn("motor" + std::to_string(l + 1) + ".c0", motor[l].c);
        }
        fn("shared.h0", shared.h);
        fn("shared.c0", shared.c);
    }

    void accumulate_scaled(const ModelStateT& o, S scale) {
        for (size_t l = 0; l < vision.size(); ++l) {
            for (size_t i = 0; i < vision[l].h.numel(); ++i) vision[l].h.data[i] += scale * o.vision[l].h.data[i];
            for (size_t i = 0; i < vision[l].c.numel(); ++i) vision[l].c.data[i] += scale * o.vision[l].c.data[i];
        }
        for (size_t l = 0; l < motor.size(); ++l) {
            for (size_t i = 0; i < motor[l].h.numel(); ++i) motor[l].h.data[i] += scale * o.motor[l].h.data[i];
            for (size_t i = 0; i < motor[l].c.numel(); ++i) motor[l].c.data[i] += scale * o.motor[l].c.data[i];
        }
        for (size_t i = 0; i < shared.h.numel(); ++i) shared.h.data[i] += scale * o.shared.h.data[i];
        for (size_t i = 0; i < shared.c.numel(); ++i) shared.c.data[i] += scale * o.shared.c.data[i];
    }
};

template <typename S>
using IntentionStateT = ModelStateT<S>;

// Stream order inside every pathway cell; the shared cell uses its own.
enum : size_t { STREAM_BU = 0, STREAM_TD = 1, STREAM_LAT = 2, STREAM_REC = 3 };
enum : size_t { SHARED_BU_V = 0, SHARED_BU_M = 1, SHARED_REC = 2 };

template <typename S>
struct ModelT {
    ModelConfig cfg;
    std::vector<CellT<S>> vision;
    std::vector<CellT<S>> motor;
    CellT<S> shared;
    TensorT<S> vhead_w; // transposed conv [4,4,1,C_v1]
    TensorT<S> vhead_b; // [1]
    TensorT<S> mhead_w; // [M1, joints*block]
    TensorT<S> mhead_b; // [joints*block]

    static ModelT build(const ModelConfig& cfg) {
        cfg.validate();
        ModelT m;
        m.cfg = cfg;
        const int L = cfg.levels();
        for (int l = 0; l < L; ++l) {
            const int hw = cfg.vision_hw(l);
            const int C = cfg.vision_channels[l];
            CellT<S> cell;
            cell.name = "vision" + std::to_string(l + 1);
            cell.H = hw;
            cell.W = hw;
            cell.C = C;
            StreamT<S> bu;
            bu.op = StreamOp::Conv;
            bu.k = 4; bu.s = 2; bu.p = 1;
            bu.w = TensorT<S>({4, 4, l == 0 ? 1 : cfg.vision_channels[l - 1], 4 * C});
            StreamT<S> td;
            td.op = StreamOp::TConv;
            if (l == L - 1) {
                if (cfg.shared_hw == hw) {
                    td.k = 3; td.s = 1; td.p = 1;
                } else {
                    td.k = 4; td.s = 2; td.p = 1;
                }
                td.w = TensorT<S>({td.k, td.k, 4 * C, cfg.shared_channels});
            } else {
                td.k = 4; td.s = 2; td.p = 1;
                td.w = TensorT<S>({4, 4, 4 * C, cfg.vision_channels[l + 1]});
            }
            StreamT<S> lat;
            lat.op = StreamOp::DenseVec;
            lat.w = TensorT<S>({cfg.motor_widths[l], 4 * C});
            StreamT<S> rec;
            rec.op = StreamOp::Conv;
            rec.k = 3; rec.s = 1; rec.p = 1;
            rec.w = TensorT<S>({3, 3, C, 4 * C});
            cell.streams = {std::move(bu), std::move(td), std::move(lat), std::move(rec)};
            cell.bias = TensorT<S>({4 * C});
            m.vision.push_back(std::move(cell));
        }
        for (int l = 0; l < L; ++l) {
            const int M = cfg.motor_widths[l];
            CellT<S> cell;
            cell.name = "motor" + std::to_string(l + 1);
            cell.H = 1;
            cell.W = 1;
            cell.C = M;
            StreamT<S> bu;
            bu.op = StreamOp::DenseVec;
            bu.w = TensorT<S>({l == 0 ? cfg.motor_io() : cfg.motor_widths[l - 1], 4 * M});
            StreamT<S> td;
            td.op = StreamOp::DenseVec;
            const int above = (l == L - 1) ? cfg.shared_hw * cfg.shared_hw * cfg.shared_channels
                                           : cfg.motor_widths[l + 1];
            td.w = TensorT<S>({above, 4 * M});
            StreamT<S> lat;
            lat.op = StreamOp::PooledDense;
            lat.w = TensorT<S>({cfg.vision_channels[l], 4 * M});
            StreamT<S> rec;
            rec.op = StreamOp::DenseVec;
            rec.w = TensorT<S>({M, 4 * M});
            cell.streams = {std::move(bu), std::move(td), std::move(lat), std::move(rec)};
            cell.bias = TensorT<S>({4 * M});
            m.motor.push_back(std::move(cell));
        }
        {
            const int SC = cfg.shared_channels;
            CellT<S> cell;
            cell.name = "shared";
            cell.H = cfg.shared_hw;
            cell.W = cfg.shared_hw;
            cell.C = SC;
            StreamT<S> buv;
            buv.op = StreamOp::Conv;
            if (cfg.shared_hw == cfg.vision_hw(L - 1)) {
                buv.k = 3; buv.s = 1; buv.p = 1;
            } else {
                buv.k = 4; buv.s = 2; buv.p = 1;
            }
            buv.w = TensorT<S>({buv.k, buv.k, cfg.vision_channels[L - 1], 4 * SC});
            StreamT<S> bum;
            bum.op = StreamOp::DenseGrid;
            bum.w = TensorT<S>({cfg.motor_widths[L - 1], cfg.shared_hw * cfg.shared_hw * 4 * SC});
            StreamT<S> rec;
            rec.op = StreamOp::Conv;
            rec.k = 3; rec.s = 1; rec.p = 1;
            rec.w = TensorT<S>({3, 3, SC, 4 * SC});
            cell.streams = {std::move(buv), std::move(bum), std::move(rec)};
            cell.bias = TensorT<S>({4 * SC});
            m.shared = std::move(cell);
        }
        m.vhead_w = TensorT<S>({4, 4, 1, cfg.vision_channels[0]});
        m.vhead_b = TensorT<S>({1});
        m.mhead_w = TensorT<S>({cfg.motor_widths[0], cfg.motor_io()});
        m.mhead_b = TensorT<S>({cfg.motor_io()});
        return m;
    }

    void init(Rng& rng) {
        for (auto& c : vision) init_cell(c, rng);
        for (auto& c : motor) init_cell(c, rng);
        init_cell(shared, rng);
        const double vb = 1.0 / std::sqrt(4.0 * cfg.vision_channels[0]);
        for (auto& v : vhead_w.data) v = S(rng.uniform(-vb, vb));
        vhead_b.zero();
        const double mb = 1.0 / std::sqrt(double(cfg.motor_widths[0]));
        for (auto& v : mhead_w.data) v = S(rng.uniform(-mb, mb));
        mhead_b.zero();
    }

    ModelT grad_shape() const {
        ModelT g;
        g.cfg = cfg;
        for (const auto& c : vision) g.vision.push_back(c.grad_shape());
        for (const auto& c : motor) g.motor.push_back(c.grad_shape());
        g.shared = shared.grad_shape();
        g.vhead_w = TensorT<S>(vhead_w.shape);
        g.vhead_b = TensorT<S>(vhead_b.shape);
        g.mhead_w = TensorT<S>(mhead_w.shape);
        g.mhead_b = TensorT<S>(mhead_b.shape);
        return g;
    }

    void for_each_param(const std::function<void(const std::string&, TensorT<S>&)>& fn) {
        static const char* pathway_streams[4] = {"bu", "td", "lat", "rec"};
        static const char* shared_streams[3] = {"bu_v", "bu_m", "rec"};
        for (auto& c : vision) {
            for (size_t si = 0; si < c.streams.size(); ++si) {
                fn(c.name + "." + pathway_streams[si] + ".w", c.streams[si].w);
            }
            fn(c.name + ".bias", c.bias);
        }
        for (auto& c : motor) {
            for (size_t si = 0; si < c.streams.size(); ++si) {
                fn(c.name + "." + pathway_streams[si] + ".w", c.streams[si].w);
            }
            fn(c.name + ".bias", c.bias);
        }
        for (size_t si = 0; si < shared.streams.size(); ++si) {
            fn(shared.name + "." + shared_streams[si] + ".w", shared.streams[si].w);
        }
        fn("shared.bias", shared.bias);
        fn("vision_head.w", vhead_w);
        fn("vision_head.b", vhead_b);
        fn("motor_head.w", mhead_w);
        fn("motor_head.b", mhead_b);
    }

    size_t param_count() {
        size_t n = 0;
        for_each_param([&](const std::string&, TensorT<S>& t) { n += t.numel(); });
        return n;
    }
};

enum class LoopMode { Open, Closed };

// Everything the backward pass needs about one forward step.
template <typename S>
struct StepIOT {
    TensorT<S> in_v, in_m;     // inputs actually consumed this step
    TensorT<S> pred_v, pred_m; // head outputs (post tanh / post softmax)
    std::vector<CellCacheT<S>> vcache, mcache;
    CellCacheT<S> scache;
};

template <typename S>
struct RolloutT {
    LoopMode mode = LoopMode::Open;
    std::vector<ModelStateT<S>> states; // [0..T], states[0] is the intention state
    std::vector<StepIOT<S>> steps;      // [0..T-1], step index i is model step t=i+1
};

// One model step. prev is the state after step t-1, in_v/in_m the step inputs.
template <typename S>
ModelStateT<S> forward_step(const ModelT<S>& m, const ModelStateT<S>& prev,
                            const TensorT<S>& in_v, const TensorT<S>& in_m,
                            StepIOT<S>* io) {
    const int L = m.cfg.levels();
    ModelStateT<S> next;
    next.vision.resize(L);
    next.motor.resize(L);
    if (io) {
        io->vcache.resize(L);
        io->mcache.resize(L);
    }
    for (int l = 0; l < L; ++l) {
        const TensorT<S>& bu_v = (l == 0) ? in_v : next.vision[l - 1].h;
        const TensorT<S>& td_v = (l == L - 1) ? prev.shared.h : prev.vision[l + 1].h;
        next.vision[l] = cell_step(m.vision[l], prev.vision[l],
                                   {&bu_v, &td_v, &prev.motor[l].h, &prev.vision[l].h},
                                   io ? &io->vcache[l] : nullptr);
        const TensorT<S>& bu_m = (l == 0) ? in_m : next.motor[l - 1].h;
        const TensorT<S>& td_m = (l == L - 1) ? prev.shared.h : prev.motor[l + 1].h;
        next.motor[l] = cell_step(m.motor[l], prev.motor[l],
                                  {&bu_m, &td_m, &prev.vision[l].h, &prev.motor[l].h},
                                  io ? &io->mcache[l] : nullptr);
    }
    next.shared = cell_step(m.shared, prev.shared,
                            {&next.vision[L - 1].h, &next.motor[L - 1].h, &prev.shared.h},
                            io ? &io->scache : nullptr);
    if (io) {
        io->in_v = in_v;
        io->in_m = in_m;
        io->pred_v = tanh_forward(transposed_conv2d(next.vision[0].h, m.vhead_w, m.vhead_b, 4, 2, 1));
        io->pred_m = softmax_block(dense(next.motor[0].h, m.mhead_w, m.mhead_b), m.cfg.block);
    }
    return next;
}

// Unrolls T steps from the given intention state. percepts_v/percepts_m hold
// the ground-truth percept sequence 0-indexed by step (percepts_*[i] is the
// percept the model should predict at step i+1). Index 0 doubles as the
// external first input. Open mode feeds ground truth (needs at least T-1
// entries); closed mode feeds the model its own predictions and only needs
// index 0.
template <typename S>
RolloutT<S> rollout_forward(const ModelT<S>& m, const ModelStateT<S>& is, int T, LoopMode mode,
                            const std::vector<TensorT<S>>& percepts_v,
                            const std::vector<TensorT<S>>& percepts_m) {
    if (T < 1) throw ValidationError("rollout: T must be >= 1");
    const size_t need = (mode == LoopMode::Open) ? size_t(std::max(1, T - 1)) : 1;
    if (percepts_v.size() < need || percepts_m.size() < need) {
        throw ValidationError("rollout: " + std::to_string(percepts_v.size()) + "/" +
                              std::to_string(percepts_m.size()) + " percepts for T=" +
                              std::to_string(T) + " (" + std::to_string(need) + " required)");
    }
    RolloutT<S> r;
    r.mode = mode;
    r.states.reserve(size_t(T) + 1);
    r.steps.resize(size_t(T));
    r.states.push_back(is);
    for (int i = 0; i < T; ++i) {
        const TensorT<S>& in_v = (i == 0) ? percepts_v[0]
                                 : (mode == LoopMode::Open ? percepts_v[i - 1] : r.steps[i - 1].pred_v);
        const TensorT<S>& in_m = (i == 0) ? percepts_m[0]
                                 : (mode == LoopMode::Open ? percepts_m[i - 1] : r.steps[i - 1].pred_m);
        r.states.push_back(forward_step(m, r.states[i], in_v, in_m, &r.steps[i]));
    }
    return r;
}

// Backward through a rollout. dpred_v/dpred_m are per-step loss gradients wrt
// the head outputs (same indexing as rollout steps; tensors may be empty when
// a step carries no loss). Accumulates parameter gradients into dmodel
// (nullable to freeze weights) and intention-state gradients into dis
// (nullable). In closed-loop mode the chain through re-fed predictions is
// followed automatically.
template <typename S>
void rollout_backward(const ModelT<S>& m, const RolloutT<S>& r,
                      std::vector<TensorT<S>> dpred_v, std::vector<TensorT<S>> dpred_m,
                      ModelT<S>* dmodel, ModelStateT<S>* dis) {
    const int L = m.cfg.levels();
    const int T = int(r.steps.size());
    if (int(dpred_v.size()) != T || int(dpred_m.size()) != T) {
        throw ShapeError("rollout_backward: gradient lists must match rollout length " +
                         std::to_string(T));
    }
    std::vector<ModelStateT<S>> dstates;
    dstates.reserve(size_t(T) + 1);
    for (int t = 0; t <= T; ++t) dstates.push_back(ModelStateT<S>::zeros(m.cfg));

    for (int i = T - 1; i >= 0; --i) {
        const int t = i + 1;
        const StepIOT<S>& io = r.steps[i];
        // Heads feed gradient into the lowest-level hiddens of step t.
        if (dpred_v[i].numel() > 0) {
            TensorT<S> dv = tanh_backward(io.pred_v, dpred_v[i]);
            transposed_conv2d_backward(r.states[t].vision[0].h, m.vhead_w, dv, 4, 2, 1,
                                       &dstates[t].vision[0].h,
                                       dmodel ? &dmodel->vhead_w : nullptr,
                                       dmodel ? &dmodel->vhead_b : nullptr);
        }
        if (dpred_m[i].numel() > 0) {
            TensorT<S> dm = softmax_block_backward(io.pred_m, dpred_m[i], m.cfg.block);
            dense_backward(r.states[t].motor[0].h, m.mhead_w, dm,
                           &dstates[t].motor[0].h,
                           dmodel ? &dmodel->mhead_w : nullptr,
                           dmodel ? &dmodel->mhead_b : nullptr);
        }
        // Shared cell consumed this step's top-level hiddens.
        cell_backward(m.shared, io.scache, r.states[i].shared,
                      {&r.states[t].vision[L - 1].h, &r.states[t].motor[L - 1].h, &r.states[i].shared.h},
                      dstates[t].shared.h, dstates[t].shared.c,
                      {&dstates[t].vision[L - 1].h, &dstates[t].motor[L - 1].h, &dstates[i].shared.h},
                      dmodel ? &dmodel->shared : nullptr, &dstates[i].shared.c);
        TensorT<S> din_v, din_m;
        const bool chain_inputs = (r.mode == LoopMode::Closed && i > 0);
        if (chain_inputs) {
            din_v = TensorT<S>(io.in_v.shape);
            din_m = TensorT<S>(io.in_m.shape);
        }
        for (int l = L - 1; l >= 0; --l) {
            {
                const TensorT<S>& bu_m = (l == 0) ? io.in_m : r.states[t].motor[l - 1].h;
                const TensorT<S>& td_m = (l == L - 1) ? r.states[i].shared.h : r.states[i].motor[l + 1].h;
                TensorT<S>* dbu = (l == 0) ? (chain_inputs ? &din_m : nullptr)
                                           : &dstates[t].motor[l - 1].h;
                TensorT<S>* dtd = (l == L - 1) ? &dstates[i].shared.h : &dstates[i].motor[l + 1].h;
                cell_backward(m.motor[l], io.mcache[l], r.states[i].motor[l],
                              {&bu_m, &td_m, &r.states[i].vision[l].h, &r.states[i].motor[l].h},
                              dstates[t].motor[l].h, dstates[t].motor[l].c,
                              {dbu, dtd, &dstates[i].vision[l].h, &dstates[i].motor[l].h},
                              dmodel ? &dmodel->motor[l] : nullptr, &dstates[i].motor[l].c);
            }
            {
                const TensorT<S>& bu_v = (l == 0) ? io.in_v : r.states[t].vision[l - 1].h;
                const TensorT<S>& td_v = (l == L - 1) ? r.states[i].shared.h : r.states[i].vision[l + 1].h;
                TensorT<S>* dbu = (l == 0) ? (chain_inputs ? &din_v : nullptr)
                                           : &dstates[t].vision[l - 1].h;
                TensorT<S>* dtd = (l == L - 1) ? &dstates[i].shared.h : &dstates[i].vision[l + 1].h;
                cell_backward(m.vision[l], io.vcache[l], r.states[i].vision[l],
                              {&bu_v, &td_v, &r.states[i].motor[l].h, &r.states[i].vision[l].h},
                              dstates[t].vision[l].h, dstates[t].vision[l].c,
                              {dbu, dtd, &dstates[i].motor[l].h, &dstates[i].vision[l].h},
                              dmodel ? &dmodel->vision[l] : nullptr, &dstates[i].vision[l].c);
            }
        }
        if (chain_inputs) {
            // Step t consumed step t-1's predictions; push gradient into them.
            if (dpred_v[i - 1].numel() == 0) dpred_v[i - 1] = TensorT<S>(din_v.shape);
            accumulate(dpred_v[i - 1], din_v);
            if (dpred_m[i - 1].numel() == 0) dpred_m[i - 1] = TensorT<S>(din_m.shape);
            accumulate(dpred_m[i - 1], din_m);
        }
    }
    if (dis) dis->accumulate_scaled(dstates[0], S(1));
}

} // namespace pdvmrnn

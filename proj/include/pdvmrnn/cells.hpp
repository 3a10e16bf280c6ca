#pragma once

#include <string>
#include <vector>

#include "pdvmrnn/kernels.hpp"
#include "pdvmrnn/rng.hpp"
#include "pdvmrnn/tensor.hpp"

// Recurrent cells. Every cell keeps a gated state (h, c) over an H x W x C
// grid; motor cells are the degenerate 1 x 1 x C case. All incoming
// connections ("streams") map their source directly to stacked gate
// pre-activations [i | f | o | g] of width 4C, which are summed with the cell
// bias before the nonlinearities:
//   i, f, o = sigmoid(...), g = tanh(...)
//   c' = f * c + i * g,  h' = o * tanh(c')
// The recurrent h -> gates path is itself one stream whose input is the
// previous h, so BPTT falls out of the generic stream backward.

namespace pdvmrnn {

enum class StreamOp {
    Conv,        // map -> conv(k,s,p) -> [H,W,4C]
    TConv,       // map -> transposed conv(k,s,p) -> [H,W,4C]
    DenseVec,    // any tensor, flattened -> dense -> [4C], broadcast over H,W
    PooledDense, // map -> spatial mean -> dense -> [4C], broadcast
    DenseGrid,   // any tensor, flattened -> dense -> [H*W*4C]
};

template <typename S>
struct StreamT {
    StreamOp op = StreamOp::DenseVec;
    int k = 0, s = 0, p = 0; // conv geometry, unused for dense ops
    TensorT<S> w;
    // Conv:        [k,k,Cin,4C]
    // TConv:       [k,k,4C,Cin]
    // DenseVec:    [N,4C]
    // PooledDense: [Cin,4C]
    // DenseGrid:   [N,H*W*4C]
};

template <typename S>
struct CellStateT {
    TensorT<S> h, c;

    CellStateT() = default;
    CellStateT(int H, int W, int C) : h({H, W, C}), c({H, W, C}) {}
};

template <typename S>
struct CellT {
    std::string name;
    int H = 1, W = 1, C = 1;
    std::vector<StreamT<S>> streams;
    TensorT<S> bias; // [4C]

    CellStateT<S> zero_state() const { return CellStateT<S>(H, W, C); }

    // Same-structure cell with zeroed tensors, used as a gradient sink.
    CellT grad_shape() const {
        CellT g;
        g.name = name;
        g.H = H;
        g.W = W;
        g.C = C;
        g.bias = TensorT<S>(bias.shape);
        g.streams.reserve(streams.size());
        for (const auto& st : streams) {
            StreamT<S> gs;
            gs.op = st.op;
            gs.k = st.k;
            gs.s = st.s;
            gs.p = st.p;
            gs.w = TensorT<S>(st.w.shape);
            g.streams.push_back(std::move(gs));
        }
        return g;
    }
};

template <typename S>
struct CellCacheT {
    TensorT<S> i, f, o, g;    // post-activation gates
    TensorT<S> tanh_c;        // tanh of the new cell state
    std::vector<TensorT<S>> pooled; // PooledDense intermediates, indexed by stream
};

namespace detail {

template <typename S>
TensorT<S> stream_forward(const StreamT<S>& st, const TensorT<S>& x, int H, int W, int C4,
                          TensorT<S>* pooled_out) {
    switch (st.op) {
        case StreamOp::Conv: {
            TensorT<S> zb({C4});
            return conv2d(x, st.w, zb, st.k, st.s, st.p);
        }
        case StreamOp::TConv: {
            TensorT<S> zb({C4});
            return transposed_conv2d(x, st.w, zb, st.k, st.s, st.p);
        }
        case StreamOp::DenseVec: {
            TensorT<S> zb({C4});
            return dense(x, st.w, zb);
        }
        case StreamOp::PooledDense: {
            TensorT<S> pool = spatial_mean(x);
            TensorT<S> zb({C4});
            TensorT<S> v = dense(pool, st.w, zb);
            if (pooled_out) *pooled_out = std::move(pool);
            return v;
        }
        case StreamOp::DenseGrid: {
            TensorT<S> zb({H * W * C4});
            return dense(x, st.w, zb);
        }
    }
    throw ValidationError("stream_forward: unknown op");
}

} // namespace detail

// One recurrent update. inputs[i] feeds streams[i]; the previous hidden must
// be passed as the input of its recurrent stream by the caller. cache is
// required for the backward pass.
template <typename S>
CellStateT<S> cell_step(const CellT<S>& cell, const CellStateT<S>& prev,
                        const std::vector<const TensorT<S>*>& inputs,
                        CellCacheT<S>* cache = nullptr) {
    const int H = cell.H, W = cell.W, C = cell.C;
    const int C4 = 4 * C;
    if (inputs.size() != cell.streams.size()) {
        throw ShapeError("cell_step(" + cell.name + "): " + std::to_string(inputs.size()) +
                         " inputs for " + std::to_string(cell.streams.size()) + " streams");
    }

    TensorT<S> pre({H, W, C4});
    for (size_t pix = 0; pix < size_t(H) * W; ++pix) {
        for (int j = 0; j < C4; ++j) pre.data[pix * C4 + j] = cell.bias.data[j];
    }
    if (cache) cache->pooled.assign(cell.streams.size(), TensorT<S>());
    for (size_t si = 0; si < cell.streams.size(); ++si) {
        const auto& st = cell.streams[si];
        TensorT<S>* pooled = cache ? &cache->pooled[si] : nullptr;
        TensorT<S> y = detail::stream_forward(st, *inputs[si], H, W, C4, pooled);
        if (st.op == StreamOp::DenseVec || st.op == StreamOp::PooledDense) {
            for (size_t pix = 0; pix < size_t(H) * W; ++pix) {
                for (int j = 0; j < C4; ++j) pre.data[pix * C4 + j] += y.data[j];
            }
        } else {
            if (y.numel() != pre.numel()) {
                throw ShapeError("cell_step(" + cell.name + "): stream " + std::to_string(si) +
                                 " produced " + y.shape_str() + ", cell expects " + pre.shape_str());
            }
            for (size_t i = 0; i < pre.numel(); ++i) pre.data[i] += y.data[i];
        }
    }

    CellStateT<S> next(H, W, C);
    TensorT<S> gi({H, W, C}), gf({H, W, C}), go({H, W, C}), gg({H, W, C}), tc({H, W, C});
    for (size_t pix = 0; pix < size_t(H) * W; ++pix) {
        const S* pp = pre.ptr() + pix * C4;
        for (int c = 0; c < C; ++c) {
            const S iv = sigmoid_scalar(pp[c]);
            const S fv = sigmoid_scalar(pp[C + c]);
            const S ov = sigmoid_scalar(pp[2 * C + c]);
            const S gv = std::tanh(pp[3 * C + c]);
            const size_t idx = pix * C + c;
            const S cn = fv * prev.c.data[idx] + iv * gv;
            const S tcv = std::tanh(cn);
            next.c.data[idx] = cn;
            next.h.data[idx] = ov * tcv;
            gi.data[idx] = iv;
            gf.data[idx] = fv;
            go.data[idx] = ov;
            gg.data[idx] = gv;
            tc.data[idx] = tcv;
        }
    }
    if (cache) {
        cache->i = std::move(gi);
        cache->f = std::move(gf);
        cache->o = std::move(go);
        cache->g = std::move(gg);
        cache->tanh_c = std::move(tc);
    }
    return next;
}

// Backward through one update. dh/dc_in are gradients wrt the produced h and
// c. Accumulates: per-stream input grads into dinputs (nullable entries),
// weight/bias grads into dcell (nullable when weights are frozen), and the
// gradient wrt the previous cell state into dc_prev.
template <typename S>
void cell_backward(const CellT<S>& cell, const CellCacheT<S>& cache,
                   const CellStateT<S>& prev,
                   const std::vector<const TensorT<S>*>& inputs,
                   const TensorT<S>& dh, const TensorT<S>& dc_in,
                   const std::vector<TensorT<S>*>& dinputs,
                   CellT<S>* dcell, TensorT<S>* dc_prev) {
    const int H = cell.H, W = cell.W, C = cell.C;
    const int C4 = 4 * C;
    TensorT<S> dpre({H, W, C4});
    for (size_t pix = 0; pix < size_t(H) * W; ++pix) {
        for (int c = 0; c < C; ++c) {
            const size_t idx = pix * C + c;
            const S iv = cache.i.data[idx], fv = cache.f.data[idx];
            const S ov = cache.o.data[idx], gv = cache.g.data[idx];
            const S tcv = cache.tanh_c.data[idx];
            const S dhv = dh.data[idx];
            const S dov = dhv * tcv;
            const S dct = dc_in.data[idx] + dhv * ov * (S(1) - tcv * tcv);
            const S div = dct * gv;
            const S dfv = dct * prev.c.data[idx];
            const S dgv = dct * iv;
            if (dc_prev) dc_prev->data[idx] += dct * fv;
            S* pp = dpre.ptr() + pix * C4;
            pp[c] = div * iv * (S(1) - iv);
            pp[C + c] = dfv * fv * (S(1) - fv);
            pp[2 * C + c] = dov * ov * (S(1) - ov);
            pp[3 * C + c] = dgv * (S(1) - gv * gv);
        }
    }

    // Broadcast-sum of dpre over pixels serves both the bias grad and the
    // vector-valued streams.
    TensorT<S> dpre_sum({C4});
    for (size_t pix = 0; pix < size_t(H) * W; ++pix) {
        for (int j = 0; j < C4; ++j) dpre_sum.data[j] += dpre.data[pix * C4 + j];
    }
    if (dcell) accumulate(dcell->bias, dpre_sum);

    for (size_t si = 0; si < cell.streams.size(); ++si) {
        const auto& st = cell.streams[si];
        TensorT<S>* dw = dcell ? &dcell->streams[si].w : nullptr;
        TensorT<S>* dx = dinputs[si];
        switch (st.op) {
            case StreamOp::Conv:
                conv2d_backward(*inputs[si], st.w, dpre, st.k, st.s, st.p, dx, dw, (TensorT<S>*)nullptr);
                break;
            case StreamOp::TConv:
                transposed_conv2d_backward(*inputs[si], st.w, dpre, st.k, st.s, st.p, dx, dw, (TensorT<S>*)nullptr);
                break;
            case StreamOp::DenseVec:
                dense_backward(*inputs[si], st.w, dpre_sum, dx, dw, (TensorT<S>*)nullptr);
                break;
            case StreamOp::PooledDense: {
                const auto& x = *inputs[si];
                TensorT<S> dpool({x.shape[2]});
                dense_backward(cache.pooled[si], st.w, dpre_sum, dx ? &dpool : nullptr, dw, (TensorT<S>*)nullptr);
                if (dx) spatial_mean_backward(dpool, x.shape[0], x.shape[1], *dx);
                break;
            }
            case StreamOp::DenseGrid: {
                TensorT<S> gflat = dpre.reshaped({H * W * C4});
                dense_backward(*inputs[si], st.w, gflat, dx, dw, (TensorT<S>*)nullptr);
                break;
            }
        }
    }
}

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero bias except the
// forget gate block which starts at +1 so memories persist early in training.
template <typename S>
void init_cell(CellT<S>& cell, Rng& rng) {
    for (auto& st : cell.streams) {
        size_t fan_in = 1;
        switch (st.op) {
            case StreamOp::Conv:
                fan_in = size_t(st.k) * st.k * st.w.shape[2];
                break;
            case StreamOp::TConv:
                fan_in = std::max<size_t>(1, size_t(st.k) * st.k * st.w.shape[3] / size_t(st.s * st.s));
                break;
            case StreamOp::DenseVec:
            case StreamOp::PooledDense:
            case StreamOp::DenseGrid:
                fan_in = size_t(st.w.shape[0]);
                break;
        }
        const double bound = 1.0 / std::sqrt(double(fan_in));
        for (auto& v : st.w.data) v = S(rng.uniform(-bound, bound));
    }
    cell.bias.zero();
    for (int c = 0; c < cell.C; ++c) cell.bias.data[cell.C + c] = S(1);
}

// Classic dense LSTM presented as vectors; hidden lives on a 1x1 grid.
template <typename S>
CellT<S> make_lstm_cell(const std::string& name, int in_dim, int hidden) {
    CellT<S> cell;
    cell.name = name;
    cell.H = 1;
    cell.W = 1;
    cell.C = hidden;
    StreamT<S> in;
    in.op = StreamOp::DenseVec;
    in.w = TensorT<S>({in_dim, 4 * hidden});
    StreamT<S> rec;
    rec.op = StreamOp::DenseVec;
    rec.w = TensorT<S>({hidden, 4 * hidden});
    cell.streams = {std::move(in), std::move(rec)};
    cell.bias = TensorT<S>({4 * hidden});
    return cell;
}

// x: input vector, prev: (h, c) vectors. Returns the updated state.
template <typename S>
CellStateT<S> lstm_step(const CellT<S>& cell, const TensorT<S>& x, const CellStateT<S>& prev,
                        CellCacheT<S>* cache = nullptr) {
    return cell_step(cell, prev, {&x, &prev.h}, cache);
}

// ConvLSTM over an H x W grid: input and recurrent transforms are same-size
// convolutions (k=3, s=1, p=1).
template <typename S>
CellT<S> make_convlstm_cell(const std::string& name, int H, int W, int in_ch, int hidden_ch) {
    CellT<S> cell;
    cell.name = name;
    cell.H = H;
    cell.W = W;
    cell.C = hidden_ch;
    StreamT<S> in;
    in.op = StreamOp::Conv;
    in.k = 3;
    in.s = 1;
    in.p = 1;
    in.w = TensorT<S>({3, 3, in_ch, 4 * hidden_ch});
    StreamT<S> rec;
    rec.op = StreamOp::Conv;
    rec.k = 3;
    rec.s = 1;
    rec.p = 1;
    rec.w = TensorT<S>({3, 3, hidden_ch, 4 * hidden_ch});
    cell.streams = {std::move(in), std::move(rec)};
    cell.bias = TensorT<S>({4 * hidden_ch});
    return cell;
}

template <typename S>
CellStateT<S> convlstm_step(const CellT<S>& cell, const TensorT<S>& x, const CellStateT<S>& prev,
                            CellCacheT<S>* cache = nullptr) {
    return cell_step(cell, prev, {&x, &prev.h}, cache);
}

} // namespace pdvmrnn

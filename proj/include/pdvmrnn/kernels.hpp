#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pdvmrnn/errors.hpp"
#include "pdvmrnn/tensor.hpp"

// Neural net primitives with explicit backward passes. No autodiff: every
// forward has a matching *_backward that chains gradients by hand.
//
// Conventions:
//  - images are H x W x C, conv weights k x k x Cin x Cout, dense weights N x M
//  - backward functions ACCUMULATE (+=) into their output-gradient tensors so
//    multi-consumer / multi-step sums fall out naturally; callers zero-init.
//  - any of dx/dw/db may be nullptr to skip that gradient (frozen weights,
//    external inputs).

namespace pdvmrnn {

template <typename S>
inline int conv_out_extent(int in, int k, int s, int p, const char* op) {
    int span = in + 2 * p - k;
    if (span < 0 || span % s != 0) {
        throw ShapeError(std::string(op) + ": extent " + std::to_string(in) + " with k=" +
                         std::to_string(k) + " s=" + std::to_string(s) + " p=" + std::to_string(p) +
                         " does not tile (need (in+2p-k) divisible by s and non-negative)");
    }
    return span / s + 1;
}

template <typename S>
inline void check_conv_args(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>* b,
                            int k, int s, int p, const char* op) {
    if (x.rank() != 3) throw ShapeError(std::string(op) + ": input must be HxWxC, got " + x.shape_str());
    if (w.rank() != 4 || w.shape[0] != k || w.shape[1] != k) {
        throw ShapeError(std::string(op) + ": weights must be " + std::to_string(k) + "x" +
                         std::to_string(k) + "xCinxCout, got " + w.shape_str());
    }
    if (k <= 0 || s <= 0 || p < 0) throw ValidationError(std::string(op) + ": bad k/s/p");
    if (b && b->rank() != 1) throw ShapeError(std::string(op) + ": bias must be rank 1, got " + b->shape_str());
}

// y[oh,ow,co] = b[co] + sum_{kh,kw,ci} x[oh*s-p+kh, ow*s-p+kw, ci] * w[kh,kw,ci,co]
// Zero padding outside the input.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                  int k, int s, int p) {
    check_conv_args(x, w, &b, k, s, p, "conv2d");
    const int H = x.shape[0], W = x.shape[1], Ci = x.shape[2];
    if (w.shape[2] != Ci) {
        throw ShapeError("conv2d: input channels " + x.shape_str() + " vs weights " + w.shape_str());
    }
    const int Co = w.shape[3];
    if (b.shape[0] != Co) throw ShapeError("conv2d: bias " + b.shape_str() + " vs Cout " + std::to_string(Co));
    const int Ho = conv_out_extent<S>(H, k, s, p, "conv2d");
    const int Wo = conv_out_extent<S>(W, k, s, p, "conv2d");

    TensorT<S> y({Ho, Wo, Co});
    const S* xd = x.ptr();
    const S* wd = w.ptr();
    S* yd = y.ptr();
    for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
            S* yp = yd + (size_t(oh) * Wo + ow) * Co;
            for (int co = 0; co < Co; ++co) yp[co] = b.data[co];
            for (int kh = 0; kh < k; ++kh) {
                const int ih = oh * s - p + kh;
                if (ih < 0 || ih >= H) continue;
                for (int kw = 0; kw < k; ++kw) {
                    const int iw = ow * s - p + kw;
                    if (iw < 0 || iw >= W) continue;
                    const S* xp = xd + (size_t(ih) * W + iw) * Ci;
                    const S* wp = wd + (size_t(kh) * k + kw) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const S xv = xp[ci];
                        const S* wrow = wp + size_t(ci) * Co;
                        for (int co = 0; co < Co; ++co) yp[co] += xv * wrow[co];
                    }
                }
            }
        }
    }
    return y;
}

template <typename S>
void conv2d_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& g,
                     int k, int s, int p,
                     TensorT<S>* dx, TensorT<S>* dw, TensorT<S>* db) {
    check_conv_args(x, w, (const TensorT<S>*)nullptr, k, s, p, "conv2d_backward");
    const int H = x.shape[0], W = x.shape[1], Ci = x.shape[2];
    const int Co = w.shape[3];
    const int Ho = conv_out_extent<S>(H, k, s, p, "conv2d_backward");
    const int Wo = conv_out_extent<S>(W, k, s, p, "conv2d_backward");
    if (g.rank() != 3 || g.shape[0] != Ho || g.shape[1] != Wo || g.shape[2] != Co) {
        throw ShapeError("conv2d_backward: grad " + g.shape_str() + " vs expected [" +
                         std::to_string(Ho) + "x" + std::to_string(Wo) + "x" + std::to_string(Co) + "]");
    }
    if (dx) check_same_shape(*dx, x, "conv2d_backward dx");
    if (dw) check_same_shape(*dw, w, "conv2d_backward dw");

    const S* xd = x.ptr();
    const S* wd = w.ptr();
    const S* gd = g.ptr();
    S* dxd = dx ? dx->ptr() : nullptr;
    S* dwd = dw ? dw->ptr() : nullptr;
    for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
            const S* gp = gd + (size_t(oh) * Wo + ow) * Co;
            if (db) {
                for (int co = 0; co < Co; ++co) db->data[co] += gp[co];
            }
            for (int kh = 0; kh < k; ++kh) {
                const int ih = oh * s - p + kh;
                if (ih < 0 || ih >= H) continue;
                for (int kw = 0; kw < k; ++kw) {
                    const int iw = ow * s - p + kw;
                    if (iw < 0 || iw >= W) continue;
                    const size_t xoff = (size_t(ih) * W + iw) * Ci;
                    const size_t woff = (size_t(kh) * k + kw) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const S xv = xd[xoff + ci];
                        S acc = 0;
                        const S* wrow = wd + woff + size_t(ci) * Co;
                        if (dwd) {
                            S* dwrow = dwd + woff + size_t(ci) * Co;
                            for (int co = 0; co < Co; ++co) {
                                dwrow[co] += xv * gp[co];
                                acc += wrow[co] * gp[co];
                            }
                        } else {
                            for (int co = 0; co < Co; ++co) acc += wrow[co] * gp[co];
                        }
                        if (dxd) dxd[xoff + ci] += acc;
                    }
                }
            }
        }
    }
}

// Adjoint of conv2d with the same k/s/p. Input x is H x W x Cy, weights are
// k x k x Cx x Cy (the conv layout with roles swapped), output is
// [s(H-1)+k-2p] x [s(W-1)+k-2p] x Cx. Satisfies, for zero biases,
//   <conv2d(a, w), g> == <a, transposed_conv2d(g, w)>.
template <typename S>
TensorT<S> transposed_conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                             int k, int s, int p) {
    check_conv_args(x, w, &b, k, s, p, "transposed_conv2d");
    const int H = x.shape[0], W = x.shape[1], Cy = x.shape[2];
    if (w.shape[3] != Cy) {
        throw ShapeError("transposed_conv2d: input channels " + x.shape_str() + " vs weights " +
                         w.shape_str() + " (expect kxkxCoutxCin)");
    }
    const int Cx = w.shape[2];
    if (b.shape[0] != Cx) {
        throw ShapeError("transposed_conv2d: bias " + b.shape_str() + " vs Cout " + std::to_string(Cx));
    }
    const int Ho = s * (H - 1) + k - 2 * p;
    const int Wo = s * (W - 1) + k - 2 * p;
    if (Ho <= 0 || Wo <= 0) {
        throw ShapeError("transposed_conv2d: output extent non-positive for input " + x.shape_str());
    }

    TensorT<S> y({Ho, Wo, Cx});
    S* yd = y.ptr();
    for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
            S* yp = yd + (size_t(oh) * Wo + ow) * Cx;
            for (int cx = 0; cx < Cx; ++cx) yp[cx] = b.data[cx];
        }
    }
    const S* xd = x.ptr();
    const S* wd = w.ptr();
    for (int ih = 0; ih < H; ++ih) {
        for (int iw = 0; iw < W; ++iw) {
            const S* xp = xd + (size_t(ih) * W + iw) * Cy;
            for (int kh = 0; kh < k; ++kh) {
                const int oh = ih * s - p + kh;
                if (oh < 0 || oh >= Ho) continue;
                for (int kw = 0; kw < k; ++kw) {
                    const int ow = iw * s - p + kw;
                    if (ow < 0 || ow >= Wo) continue;
                    S* yp = yd + (size_t(oh) * Wo + ow) * Cx;
                    const S* wp = wd + (size_t(kh) * k + kw) * Cx * Cy;
                    for (int cx = 0; cx < Cx; ++cx) {
                        const S* wrow = wp + size_t(cx) * Cy;
                        S acc = 0;
                        for (int cy = 0; cy < Cy; ++cy) acc += xp[cy] * wrow[cy];
                        yp[cx] += acc;
                    }
                }
            }
        }
    }
    return y;
}

template <typename S>
void transposed_conv2d_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& g,
                                int k, int s, int p,
                                TensorT<S>* dx, TensorT<S>* dw, TensorT<S>* db) {
    check_conv_args(x, w, (const TensorT<S>*)nullptr, k, s, p, "transposed_conv2d_backward");
    const int H = x.shape[0], W = x.shape[1], Cy = x.shape[2];
    const int Cx = w.shape[2];
    const int Ho = s * (H - 1) + k - 2 * p;
    const int Wo = s * (W - 1) + k - 2 * p;
    if (g.rank() != 3 || g.shape[0] != Ho || g.shape[1] != Wo || g.shape[2] != Cx) {
        throw ShapeError("transposed_conv2d_backward: grad " + g.shape_str() + " vs expected [" +
                         std::to_string(Ho) + "x" + std::to_string(Wo) + "x" + std::to_string(Cx) + "]");
    }
    if (dx) check_same_shape(*dx, x, "transposed_conv2d_backward dx");
    if (dw) check_same_shape(*dw, w, "transposed_conv2d_backward dw");
    if (db) {
        const S* gd = g.ptr();
        for (size_t pix = 0; pix < size_t(Ho) * Wo; ++pix) {
            for (int cx = 0; cx < Cx; ++cx) db->data[cx] += gd[pix * Cx + cx];
        }
    }
    const S* xd = x.ptr();
    const S* wd = w.ptr();
    const S* gd = g.ptr();
    S* dxd = dx ? dx->ptr() : nullptr;
    S* dwd = dw ? dw->ptr() : nullptr;
    for (int ih = 0; ih < H; ++ih) {
        for (int iw = 0; iw < W; ++iw) {
            const size_t xoff = (size_t(ih) * W + iw) * Cy;
            for (int kh = 0; kh < k; ++kh) {
                const int oh = ih * s - p + kh;
                if (oh < 0 || oh >= Ho) continue;
                for (int kw = 0; kw < k; ++kw) {
                    const int ow = iw * s - p + kw;
                    if (ow < 0 || ow >= Wo) continue;
                    const S* gp = gd + (size_t(oh) * Wo + ow) * Cx;
                    const size_t woff = (size_t(kh) * k + kw) * Cx * Cy;
                    for (int cx = 0; cx < Cx; ++cx) {
                        const S gv = gp[cx];
                        const S* wrow = wd + woff + size_t(cx) * Cy;
                        if (dwd) {
                            S* dwrow = dwd + woff + size_t(cx) * Cy;
                            for (int cy = 0; cy < Cy; ++cy) {
                                if (dxd) dxd[xoff + cy] += gv * wrow[cy];
                                dwrow[cy] += gv * xd[xoff + cy];
                            }
                        } else if (dxd) {
                            for (int cy = 0; cy < Cy; ++cy) dxd[xoff + cy] += gv * wrow[cy];
                        }
                    }
                }
            }
        }
    }
}

// 2x2 max pool, stride 2. Ties resolve to the smallest flat input index.
// argmax (flat indices into x) is returned for the backward pass.
template <typename S>
TensorT<S> maxpool2(const TensorT<S>& x, std::vector<int32_t>* argmax) {
    if (x.rank() != 3) throw ShapeError("maxpool2: input must be HxWxC, got " + x.shape_str());
    const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
    if (H % 2 != 0 || W % 2 != 0) {
        throw ShapeError("maxpool2: extents must be even, got " + x.shape_str());
    }
    TensorT<S> y({H / 2, W / 2, C});
    if (argmax) argmax->assign(y.numel(), 0);
    for (int oh = 0; oh < H / 2; ++oh) {
        for (int ow = 0; ow < W / 2; ++ow) {
            for (int c = 0; c < C; ++c) {
                size_t best_idx = (size_t(2 * oh) * W + 2 * ow) * C + c;
                S best = x.data[best_idx];
                for (int dh = 0; dh < 2; ++dh) {
                    for (int dw = 0; dw < 2; ++dw) {
                        size_t idx = (size_t(2 * oh + dh) * W + (2 * ow + dw)) * C + c;
                        if (x.data[idx] > best) {
                            best = x.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                size_t oidx = (size_t(oh) * (W / 2) + ow) * C + c;
                y.data[oidx] = best;
                if (argmax) (*argmax)[oidx] = int32_t(best_idx);
            }
        }
    }
    return y;
}

template <typename S>
void maxpool2_backward(const std::vector<int32_t>& argmax, const TensorT<S>& g, TensorT<S>& dx) {
    if (argmax.size() != g.numel()) {
        throw ShapeError("maxpool2_backward: argmax size " + std::to_string(argmax.size()) +
                         " vs grad " + g.shape_str());
    }
    for (size_t i = 0; i < argmax.size(); ++i) dx.data[size_t(argmax[i])] += g.data[i];
}

// y[m] = b[m] + sum_n x[n] * w[n,m]. x is used flattened.
template <typename S>
TensorT<S> dense(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    if (w.rank() != 2) throw ShapeError("dense: weights must be NxM, got " + w.shape_str());
    const int N = w.shape[0], M = w.shape[1];
    if (int(x.numel()) != N) {
        throw ShapeError("dense: input " + x.shape_str() + " (numel " + std::to_string(x.numel()) +
                         ") vs weights " + w.shape_str());
    }
    if (b.numel() != size_t(M)) throw ShapeError("dense: bias " + b.shape_str() + " vs M " + std::to_string(M));
    TensorT<S> y({M});
    for (int m = 0; m < M; ++m) y.data[m] = b.data[m];
    const S* xd = x.ptr();
    const S* wd = w.ptr();
    S* yd = y.ptr();
    for (int n = 0; n < N; ++n) {
        const S xv = xd[n];
        if (xv == S(0)) continue;
        const S* wrow = wd + size_t(n) * M;
        for (int m = 0; m < M; ++m) yd[m] += xv * wrow[m];
    }
    return y;
}

template <typename S>
void dense_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& g,
                    TensorT<S>* dx, TensorT<S>* dw, TensorT<S>* db) {
    const int N = w.shape[0], M = w.shape[1];
    if (int(g.numel()) != M) throw ShapeError("dense_backward: grad " + g.shape_str() + " vs M " + std::to_string(M));
    if (dx && int(dx->numel()) != N) throw ShapeError("dense_backward: dx " + dx->shape_str() + " vs N " + std::to_string(N));
    if (dw) check_same_shape(*dw, w, "dense_backward dw");
    if (db) {
        for (int m = 0; m < M; ++m) db->data[m] += g.data[m];
    }
    const S* xd = x.ptr();
    const S* wd = w.ptr();
    const S* gd = g.ptr();
    for (int n = 0; n < N; ++n) {
        const S* wrow = wd + size_t(n) * M;
        S acc = 0;
        if (dw) {
            S* dwrow = dw->ptr() + size_t(n) * M;
            const S xv = xd[n];
            for (int m = 0; m < M; ++m) {
                dwrow[m] += xv * gd[m];
                acc += wrow[m] * gd[m];
            }
        } else {
            for (int m = 0; m < M; ++m) acc += wrow[m] * gd[m];
        }
        if (dx) dx->data[n] += acc;
    }
}

template <typename S>
TensorT<S> tanh_forward(const TensorT<S>& x) {
    TensorT<S> y = x;
    for (auto& v : y.data) v = std::tanh(v);
    return y;
}

// dx from the cached output y = tanh(x).
template <typename S>
TensorT<S> tanh_backward(const TensorT<S>& y, const TensorT<S>& dy) {
    check_same_shape(y, dy, "tanh_backward");
    TensorT<S> dx(y.shape);
    for (size_t i = 0; i < y.numel(); ++i) dx.data[i] = dy.data[i] * (S(1) - y.data[i] * y.data[i]);
    return dx;
}

template <typename S>
inline S sigmoid_scalar(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
TensorT<S> sigmoid_forward(const TensorT<S>& x) {
    TensorT<S> y = x;
    for (auto& v : y.data) v = sigmoid_scalar(v);
    return y;
}

template <typename S>
TensorT<S> sigmoid_backward(const TensorT<S>& y, const TensorT<S>& dy) {
    check_same_shape(y, dy, "sigmoid_backward");
    TensorT<S> dx(y.shape);
    for (size_t i = 0; i < y.numel(); ++i) dx.data[i] = dy.data[i] * y.data[i] * (S(1) - y.data[i]);
    return dx;
}

// Softmax over consecutive blocks of size block (max-subtracted for stability).
template <typename S>
TensorT<S> softmax_block(const TensorT<S>& x, int block) {
    if (block <= 0 || x.numel() % size_t(block) != 0) {
        throw ShapeError("softmax_block: input " + x.shape_str() + " not divisible into blocks of " +
                         std::to_string(block));
    }
    TensorT<S> y = x;
    const size_t nblocks = x.numel() / size_t(block);
    for (size_t bidx = 0; bidx < nblocks; ++bidx) {
        S* v = y.ptr() + bidx * block;
        S mx = v[0];
        for (int i = 1; i < block; ++i) mx = std::max(mx, v[i]);
        S sum = 0;
        for (int i = 0; i < block; ++i) {
            v[i] = std::exp(v[i] - mx);
            sum += v[i];
        }
        for (int i = 0; i < block; ++i) v[i] /= sum;
    }
    return y;
}

template <typename S>
TensorT<S> softmax_block_backward(const TensorT<S>& y, const TensorT<S>& dy, int block) {
    check_same_shape(y, dy, "softmax_block_backward");
    TensorT<S> dx(y.shape);
    const size_t nblocks = y.numel() / size_t(block);
    for (size_t bidx = 0; bidx < nblocks; ++bidx) {
        const S* yv = y.ptr() + bidx * block;
        const S* gv = dy.ptr() + bidx * block;
        S dot = 0;
        for (int i = 0; i < block; ++i) dot += yv[i] * gv[i];
        S* dv = dx.ptr() + bidx * block;
        for (int i = 0; i < block; ++i) dv[i] = yv[i] * (gv[i] - dot);
    }
    return dx;
}

// Sum of elementwise squared differences (no mean).
template <typename S>
S mse_loss(const TensorT<S>& out, const TensorT<S>& target) {
    check_same_shape(out, target, "mse_loss");
    S acc = 0;
    for (size_t i = 0; i < out.numel(); ++i) {
        const S d = out.data[i] - target.data[i];
        acc += d * d;
    }
    return acc;
}

template <typename S>
TensorT<S> mse_loss_grad(const TensorT<S>& out, const TensorT<S>& target) {
    check_same_shape(out, target, "mse_loss_grad");
    TensorT<S> g(out.shape);
    for (size_t i = 0; i < out.numel(); ++i) g.data[i] = S(2) * (out.data[i] - target.data[i]);
    return g;
}

template <typename S>
inline void check_distribution_blocks(const TensorT<S>& t, int block, const char* name) {
    const size_t nblocks = t.numel() / size_t(block);
    for (size_t bidx = 0; bidx < nblocks; ++bidx) {
        S sum = 0;
        for (int i = 0; i < block; ++i) {
            const S v = t.data[bidx * block + i];
            if (v < S(0)) {
                throw ValidationError(std::string("kl_loss: ") + name + " block " + std::to_string(bidx) +
                                      " has negative entry " + std::to_string(double(v)));
            }
            sum += v;
        }
        if (std::abs(double(sum) - 1.0) > 1e-5) {
            throw ValidationError(std::string("kl_loss: ") + name + " block " + std::to_string(bidx) +
                                  " sums to " + std::to_string(double(sum)) + ", expected 1 +- 1e-5");
        }
    }
}

// KL(out || target) summed over blocks, with eps inside both logs' arguments:
//   sum_i out_i * ln((out_i + eps) / (target_i + eps))
template <typename S>
S kl_loss(const TensorT<S>& out, const TensorT<S>& target, int block, S eps = S(1e-7)) {
    check_same_shape(out, target, "kl_loss");
    if (block <= 0 || out.numel() % size_t(block) != 0) {
        throw ShapeError("kl_loss: input " + out.shape_str() + " not divisible into blocks of " +
                         std::to_string(block));
    }
    check_distribution_blocks(out, block, "out");
    check_distribution_blocks(target, block, "target");
    S acc = 0;
    for (size_t i = 0; i < out.numel(); ++i) {
        acc += out.data[i] * std::log((out.data[i] + eps) / (target.data[i] + eps));
    }
    return acc;
}

// Unconstrained partial derivative wrt out:
//   d/dout_i = ln((out_i + eps)/(target_i + eps)) + out_i / (out_i + eps)
template <typename S>
TensorT<S> kl_loss_grad(const TensorT<S>& out, const TensorT<S>& target, int block, S eps = S(1e-7)) {
    check_same_shape(out, target, "kl_loss_grad");
    (void)block;
    TensorT<S> g(out.shape);
    for (size_t i = 0; i < out.numel(); ++i) {
        g.data[i] = std::log((out.data[i] + eps) / (target.data[i] + eps)) +
                    out.data[i] / (out.data[i] + eps);
    }
    return g;
}

// Spatial mean over H x W, one value per channel.
template <typename S>
TensorT<S> spatial_mean(const TensorT<S>& x) {
    if (x.rank() != 3) throw ShapeError("spatial_mean: input must be HxWxC, got " + x.shape_str());
    const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
    TensorT<S> y({C});
    for (size_t pix = 0; pix < size_t(H) * W; ++pix) {
        for (int c = 0; c < C; ++c) y.data[c] += x.data[pix * C + c];
    }
    const S inv = S(1) / S(H * W);
    for (int c = 0; c < C; ++c) y.data[c] *= inv;
    return y;
}

template <typename S>
void spatial_mean_backward(const TensorT<S>& g, int H, int W, TensorT<S>& dx) {
    const int C = int(g.numel());
    const S inv = S(1) / S(H * W);
    for (size_t pix = 0; pix < size_t(H) * W; ++pix) {
        for (int c = 0; c < C; ++c) dx.data[pix * C + c] += g.data[c] * inv;
    }
}

} // namespace pdvmrnn

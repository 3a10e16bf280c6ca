#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pdvmrnn/errors.hpp"
#include "pdvmrnn/tensor.hpp"

// Sparse population coding of joint angles. Each joint angle becomes a
// B-bin discrete distribution: Gaussian bumps centered on B preference
// values spread endpoint-inclusive across the joint's range, normalized to
// sum 1. Decoding takes the distribution's expectation over the centers.
// The bump width is range/B, which keeps the worst-case encode->decode bias
// (at the range limits) under half a bin spacing.

namespace pdvmrnn {

struct JointRange {
    double lo = -1.0;
    double hi = 1.0;
};

class JointCoder {
public:
    JointCoder(std::vector<JointRange> ranges, int block)
        : ranges_(std::move(ranges)), block_(block) {
        if (block_ < 2) throw ValidationError("joint coder: block size must be >= 2");
        for (const auto& r : ranges_) {
            if (!(r.hi > r.lo)) {
                throw ValidationError("joint coder: empty joint range [" + std::to_string(r.lo) +
                                      ", " + std::to_string(r.hi) + "]");
            }
        }
    }

    int joints() const { return int(ranges_.size()); }
    int block() const { return block_; }
    int dim() const { return joints() * block_; }

    double center(int joint, int bin) const {
        const auto& r = ranges_[joint];
        return r.lo + (r.hi - r.lo) * double(bin) / double(block_ - 1);
    }

    double sigma(int joint) const {
        return (ranges_[joint].hi - ranges_[joint].lo) / double(block_);
    }

    // One angle -> B-bin distribution appended to out.
    template <typename S>
    void encode_joint(int joint, double angle, S* out) const {
        const auto& r = ranges_[joint];
        const double slop = 1e-9 * (r.hi - r.lo);
        if (angle < r.lo - slop || angle > r.hi + slop) {
            throw ValidationError("joint coder: angle " + std::to_string(angle) +
                                  " outside joint " + std::to_string(joint) + " range [" +
                                  std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
        }
        const double a = std::min(std::max(angle, r.lo), r.hi);
        const double sg = sigma(joint);
        double sum = 0.0;
        std::vector<double> w(static_cast<size_t>(block_));
        for (int i = 0; i < block_; ++i) {
            const double d = (a - center(joint, i)) / sg;
            w[i] = std::exp(-0.5 * d * d);
            sum += w[i];
        }
        for (int i = 0; i < block_; ++i) out[i] = S(w[i] / sum);
    }

    template <typename S>
    TensorT<S> encode(const std::vector<double>& angles) const {
        if (int(angles.size()) != joints()) {
            throw ShapeError("joint coder: " + std::to_string(angles.size()) + " angles for " +
                             std::to_string(joints()) + " joints");
        }
        TensorT<S> out({dim()});
        for (int j = 0; j < joints(); ++j) encode_joint(j, angles[j], out.ptr() + j * block_);
        return out;
    }

    // Expectation of the centers under each block's (re-normalized)
    // distribution. Tolerates network outputs that are not exactly
    // normalized.
    template <typename S>
    std::vector<double> decode(const TensorT<S>& code) const {
        if (int(code.numel()) != dim()) {
            throw ShapeError("joint coder: code " + code.shape_str() + " vs expected length " +
                             std::to_string(dim()));
        }
        std::vector<double> angles(static_cast<size_t>(joints()));
        for (int j = 0; j < joints(); ++j) {
            double sum = 0.0, acc = 0.0;
            for (int i = 0; i < block_; ++i) {
                const double v = double(code.data[size_t(j) * block_ + i]);
                sum += v;
                acc += v * center(j, i);
            }
            if (sum <= 0.0) {
                throw ValidationError("joint coder: block " + std::to_string(j) +
                                      " has non-positive mass " + std::to_string(sum));
            }
            angles[j] = acc / sum;
        }
        return angles;
    }

private:
    std::vector<JointRange> ranges_;
    int block_;
};

// Grayscale frames are stored as bytes and presented to the network in
// [-1, 1].
template <typename S>
inline TensorT<S> normalize_frame(const std::vector<uint8_t>& pixels, int size) {
    if (int(pixels.size()) != size * size) {
        throw ShapeError("normalize_frame: " + std::to_string(pixels.size()) + " pixels for " +
                         std::to_string(size) + "x" + std::to_string(size));
    }
    TensorT<S> out({size, size, 1});
    for (size_t i = 0; i < pixels.size(); ++i) out.data[i] = S(double(pixels[i]) * (2.0 / 255.0) - 1.0);
    return out;
}

template <typename S>
inline std::vector<uint8_t> denormalize_frame(const TensorT<S>& t) {
    std::vector<uint8_t> out(t.numel());
    for (size_t i = 0; i < t.numel(); ++i) {
        const double v = (double(t.data[i]) + 1.0) * 127.5;
        out[i] = uint8_t(std::min(255.0, std::max(0.0, std::round(v))));
    }
    return out;
}

} // namespace pdvmrnn

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pdvmrnn/dataset.hpp"
#include "pdvmrnn/trainer.hpp"

// On-disk formats. Both files share one container layout: an 8-byte magic,
// a little-endian u64 header length, a canonical JSON header, then a raw
// binary blob the header indexes byte for byte. Saves are canonical, so
// save -> load -> save reproduces the file exactly.
//
// Dataset blob: per sequence, frames as raw u8 (N*N per step), then joints
// as little-endian f32 (J per step). Header offsets must tile the blob
// exactly; loaders reject gaps, overlaps, and truncation.
//
// Checkpoint blob: every named tensor as little-endian f32 in header index
// order: model parameters, their Adam moments, per-sequence intention
// states, their Adam moments. Scalars (epoch, step counts, seed, joint
// coding ranges) live in the header, so a load resumes training bitwise.

namespace pdvmrnn {

struct CheckpointData {
    TrainStateT<float> state;
    uint64_t seed = 0;
    std::vector<std::array<double, 2>> joint_ranges;
    std::string task;
    int t_max_hint = 0;        // default planning horizon: 1.5x longest training sequence
    uint64_t data_seed = 0;    // training data provenance, for test-overlap checks
    uint64_t data_first = 0;
    uint64_t data_count = 0;
};

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

void save_checkpoint(const std::string& path, const CheckpointData& ck);
CheckpointData load_checkpoint(const std::string& path);

} // namespace pdvmrnn

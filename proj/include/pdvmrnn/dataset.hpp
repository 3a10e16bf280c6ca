#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdvmrnn/errors.hpp"

namespace pdvmrnn {

// One tutoring demonstration: grayscale frames plus joint angles, step for
// step. Frames are row-major with row 0 at the top of the image.
struct VisuomotorSequence {
    int frame_size = 0;
    int joints = 0;
    std::vector<std::vector<uint8_t>> frames;      // T x (frame_size*frame_size)
    std::vector<std::vector<float>> joint_angles;  // T x joints

    int steps() const { return int(frames.size()); }

    void validate() const {
        if (frames.size() != joint_angles.size()) {
            throw ValidationError("sequence: " + std::to_string(frames.size()) + " frames vs " +
                                  std::to_string(joint_angles.size()) + " joint vectors");
        }
        if (frames.empty()) throw ValidationError("sequence: empty");
        for (const auto& f : frames) {
            if (int(f.size()) != frame_size * frame_size) {
                throw ValidationError("sequence: frame byte count " + std::to_string(f.size()) +
                                      " vs size " + std::to_string(frame_size));
            }
        }
        for (const auto& j : joint_angles) {
            if (int(j.size()) != joints) {
                throw ValidationError("sequence: joint vector length " + std::to_string(j.size()) +
                                      " vs " + std::to_string(joints));
            }
        }
    }
};

// What the world looked like for one sequence; enough to re-create the scene
// for plan execution and scoring.
struct SceneInfo {
    std::string task;                              // reach | two_point | object
    std::array<double, 2> goal{0.0, 0.0};          // final end-effector / placement target
    std::optional<std::array<double, 2>> marker;   // touch disc (two_point)
    std::optional<std::array<double, 2>> object;   // object start (object task)
};

struct Dataset {
    std::string task;
    int frame_size = 0;
    int joints = 0;
    int block = 10;                // coding resolution the data targets (metadata)
    double sample_rate_hz = 10.0;  // nominal capture rate (metadata)
    uint64_t base_seed = 0;
    uint64_t first_index = 0; // sequence i was generated with seed mix_seed(base_seed, first_index + i)
    std::vector<std::array<double, 2>> joint_ranges; // coding range per joint
    std::vector<VisuomotorSequence> sequences;
    std::vector<SceneInfo> scenes;

    void validate() const {
        if (block < 2 || sample_rate_hz <= 0.0) {
            throw ValidationError("dataset: block/sample rate out of range");
        }
        if (sequences.size() != scenes.size()) {
            throw ValidationError("dataset: " + std::to_string(sequences.size()) + " sequences vs " +
                                  std::to_string(scenes.size()) + " scenes");
        }
        if (int(joint_ranges.size()) != joints) {
            throw ValidationError("dataset: " + std::to_string(joint_ranges.size()) +
                                  " joint ranges for " + std::to_string(joints) + " joints");
        }
        for (const auto& s : sequences) {
            s.validate();
            if (s.frame_size != frame_size || s.joints != joints) {
                throw ValidationError("dataset: sequence geometry mismatch");
            }
        }
    }

    int longest() const {
        int t = 0;
        for (const auto& s : sequences) t = std::max(t, s.steps());
        return t;
    }
};

} // namespace pdvmrnn

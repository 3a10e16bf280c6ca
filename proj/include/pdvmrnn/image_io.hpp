#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Grayscale image output: binary PGM (P5) and 8-bit PNG, plus two builders
// used by the CLI: frame grids (one labeled row of frames per source, e.g.
// target / predicted / executed) and polyline plots for CSV curves. Both
// writers are byte-deterministic for identical inputs.

namespace pdvmrnn {

struct GrayImage {
    int w = 0;
    int h = 0;
    std::vector<uint8_t> px; // row-major, row 0 on top

    uint8_t& at(int r, int c) { return px[size_t(r) * size_t(w) + size_t(c)]; }
    uint8_t at(int r, int c) const { return px[size_t(r) * size_t(w) + size_t(c)]; }
};

void write_pgm(const std::string& path, const GrayImage& img);
void write_png(const std::string& path, const GrayImage& img);

// Binary 8-bit PGM only (the dialect write_pgm emits, comments allowed).
GrayImage read_pgm(const std::string& path);

// rows[r] is a list of frame_size^2 frames laid out left to right; shorter
// rows are padded with blank cells. A light gutter separates cells.
GrayImage frame_grid(const std::vector<std::vector<std::vector<uint8_t>>>& rows, int frame_size,
                     int gutter = 2);

// Polyline chart of the series over their index, autoscaled to the data
// range, each series in its own gray level.
GrayImage plot_series(const std::vector<std::vector<double>>& series, int w = 640, int h = 360);

} // namespace pdvmrnn

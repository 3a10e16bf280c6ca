#include "pdvmrnn/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "pdvmrnn/errors.hpp"

namespace pdvmrnn {

namespace {

void check_image(const GrayImage& img, const char* who) {
    if (img.w <= 0 || img.h <= 0 || img.px.size() != size_t(img.w) * size_t(img.h)) {
        throw ValidationError(std::string(who) + ": image geometry does not match pixel count");
    }
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), std::streamsize(bytes.size()));
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

void put_u32_be(std::string& out, uint32_t v) {
    out += char((v >> 24) & 0xff);
    out += char((v >> 16) & 0xff);
    out += char((v >> 8) & 0xff);
    out += char(v & 0xff);
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32_be(out, uint32_t(payload.size()));
    const size_t start = out.size();
    out.append(type, 4);
    out += payload;
    const auto* p = reinterpret_cast<const Bytef*>(out.data() + start);
    const uint32_t crc = uint32_t(crc32(0L, p, uInt(out.size() - start)));
    put_u32_be(out, crc);
}

} // namespace

void write_pgm(const std::string& path, const GrayImage& img) {
    check_image(img, "pgm");
    std::string out = "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.px.data()), img.px.size());
    write_file(path, out);
}

GrayImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw ValidationError("pgm '" + path + "': truncated header");
        return bytes.substr(start, pos - start);
    };
    if (token() != "P5") throw ValidationError("pgm '" + path + "': not binary P5");
    GrayImage img;
    try {
        img.w = std::stoi(token());
        img.h = std::stoi(token());
        if (std::stoi(token()) != 255) throw ValidationError("pgm '" + path + "': maxval must be 255");
    } catch (const std::logic_error&) {
        throw ValidationError("pgm '" + path + "': malformed header");
    }
    if (img.w <= 0 || img.h <= 0) throw ValidationError("pgm '" + path + "': bad dimensions");
    ++pos; // single whitespace after maxval
    const size_t need = size_t(img.w) * size_t(img.h);
    if (bytes.size() - pos < need) throw ValidationError("pgm '" + path + "': pixel data truncated");
    img.px.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + need));
    return img;
}

void write_png(const std::string& path, const GrayImage& img) {
    check_image(img, "png");
    // filter byte 0 (None) in front of every scanline
    std::string raw;
    raw.reserve(size_t(img.h) * (size_t(img.w) + 1));
    for (int r = 0; r < img.h; ++r) {
        raw += '\0';
        raw.append(reinterpret_cast<const char*>(img.px.data() + size_t(r) * size_t(img.w)),
                   size_t(img.w));
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::string idat(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(idat.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()),
                  Z_BEST_COMPRESSION) != Z_OK) {
        throw IoError("png: compression failed for '" + path + "'");
    }
    idat.resize(bound);

    std::string ihdr;
    put_u32_be(ihdr, uint32_t(img.w));
    put_u32_be(ihdr, uint32_t(img.h));
    ihdr += char(8);  // bit depth
    ihdr += char(0);  // grayscale
    ihdr += char(0);  // deflate
    ihdr += char(0);  // filter method
    ihdr += char(0);  // no interlace

    std::string out("\x89PNG\r\n\x1a\n", 8);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", idat);
    put_chunk(out, "IEND", "");
    write_file(path, out);
}

GrayImage frame_grid(const std::vector<std::vector<std::vector<uint8_t>>>& rows, int frame_size,
                     int gutter) {
    if (frame_size <= 0 || gutter < 0) throw ValidationError("frame grid: bad geometry");
    size_t cols = 0;
    for (const auto& row : rows) cols = std::max(cols, row.size());
    if (rows.empty() || cols == 0) throw ValidationError("frame grid: no frames");
    const int n = frame_size;
    GrayImage img;
    img.w = int(cols) * (n + gutter) + gutter;
    img.h = int(rows.size()) * (n + gutter) + gutter;
    img.px.assign(size_t(img.w) * size_t(img.h), 235); // light gutter
    for (size_t r = 0; r < rows.size(); ++r) {
        for (size_t c = 0; c < rows[r].size(); ++c) {
            const auto& frame = rows[r][c];
            if (int(frame.size()) != n * n) {
                throw ValidationError("frame grid: frame byte count " + std::to_string(frame.size()) +
                                      " vs size " + std::to_string(n));
            }
            const int y0 = int(r) * (n + gutter) + gutter;
            const int x0 = int(c) * (n + gutter) + gutter;
            for (int y = 0; y < n; ++y) {
                std::memcpy(img.px.data() + size_t(y0 + y) * size_t(img.w) + size_t(x0),
                            frame.data() + size_t(y) * size_t(n), size_t(n));
            }
        }
    }
    return img;
}

GrayImage plot_series(const std::vector<std::vector<double>>& series, int w, int h) {
    if (w < 64 || h < 64) throw ValidationError("plot: image too small");
    size_t steps = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) {
        steps = std::max(steps, s.size());
        for (double v : s) {
            if (!std::isfinite(v)) throw ValidationError("plot: non-finite value");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (steps < 2) throw ValidationError("plot: need at least two points");
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    GrayImage img;
    img.w = w;
    img.h = h;
    img.px.assign(size_t(w) * size_t(h), 255);
    const int left = 8, right = 8, top = 8, bottom = 8;
    const int px0 = left, px1 = w - 1 - right;
    const int py0 = top, py1 = h - 1 - bottom;
    for (int x = px0; x <= px1; ++x) img.at(py1, x) = 150;
    for (int y = py0; y <= py1; ++y) img.at(y, px0) = 150;

    const uint8_t shades[] = {0, 100, 170, 60, 130};
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.size() < 2) continue;
        const uint8_t shade = shades[si % 5];
        auto to_px = [&](size_t i, double v) {
            const int x = px0 + int(std::lround(double(i) / double(s.size() - 1) * (px1 - px0)));
            const int y = py1 - int(std::lround((v - lo) / (hi - lo) * (py1 - py0)));
            return std::pair<int, int>(x, y);
        };
        auto [xp, yp] = to_px(0, s[0]);
        for (size_t i = 1; i < s.size(); ++i) {
            auto [x, y] = to_px(i, s[i]);
            int dx = std::abs(x - xp), dy = -std::abs(y - yp);
            int sx = xp < x ? 1 : -1, sy = yp < y ? 1 : -1;
            int err = dx + dy;
            int cx = xp, cy = yp;
            while (true) {
                img.at(cy, cx) = shade;
                if (cx == x && cy == y) break;
                const int e2 = 2 * err;
                if (e2 >= dy) { err += dy; cx += sx; }
                if (e2 <= dx) { err += dx; cy += sy; }
            }
            xp = x;
            yp = y;
        }
    }
    return img;
}

} // namespace pdvmrnn

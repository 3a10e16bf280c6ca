#include "doctest.h"

#include "pdvmrnn/errors.hpp"
#include "pdvmrnn/image_io.hpp"
#include "testutil.hpp"

#include <fstream>

using namespace pdvmrnn;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    return std::string(std::istreambuf_iterator<char>(f), {});
}

} // namespace

TEST_CASE("pgm files carry the exact pixel bytes") {
    testutil::TempDir dir("pgm");
    GrayImage img;
    img.w = 3;
    img.h = 2;
    img.px = {0, 128, 255, 10, 20, 30};
    const std::string path = (dir.path / "a.pgm").string();
    write_pgm(path, img);
    const std::string bytes = slurp(path);
    CHECK(bytes == std::string("P5\n3 2\n255\n") + std::string("\x00\x80\xff\x0a\x14\x1e", 6));
}

TEST_CASE("png files are valid and deterministic") {
    testutil::TempDir dir("png");
    GrayImage img;
    img.w = 5;
    img.h = 4;
    img.px.assign(20, 0);
    for (int i = 0; i < 20; ++i) img.px[size_t(i)] = uint8_t(i * 12);
    const std::string p1 = (dir.path / "a.png").string();
    const std::string p2 = (dir.path / "b.png").string();
    write_png(p1, img);
    write_png(p2, img);
    const std::string b1 = slurp(p1);
    CHECK(b1 == slurp(p2));
    CHECK(b1.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
    CHECK(b1.find("IHDR") == 12);
    CHECK(b1.find("IDAT") != std::string::npos);
    CHECK(b1.substr(b1.size() - 8, 4) == "IEND");
}

TEST_CASE("frame grids tile frames with gutters and pad short rows") {
    std::vector<uint8_t> dark(16, 40), light(16, 200);
    auto g = frame_grid({{dark, light}, {light}}, 4, 2);
    CHECK(g.w == 2 + 4 + 2 + 4 + 2);
    CHECK(g.h == 2 + 4 + 2 + 4 + 2);
    CHECK(g.at(2, 2) == 40);
    CHECK(g.at(2, 8) == 200);
    CHECK(g.at(8, 2) == 200);
    CHECK(g.at(0, 0) == 235);
    CHECK(g.at(8, 8) == 235);

    CHECK_THROWS_AS(frame_grid({}, 4), ValidationError);
    CHECK_THROWS_AS(frame_grid({{std::vector<uint8_t>(9, 0)}}, 4), ValidationError);
}

TEST_CASE("series plots draw axes and reject bad input") {
    std::vector<double> a{3.0, 1.0, 4.0, 1.5, 5.0};
    std::vector<double> b{0.5, 0.6, 0.7, 0.8, 0.9};
    GrayImage g = plot_series({a, b}, 120, 90);
    CHECK(g.w == 120);
    CHECK(g.h == 90);
    bool has_curve = false, has_axis = false;
    for (uint8_t v : g.px) {
        if (v == 0 || v == 100) has_curve = true;
        if (v == 150) has_axis = true;
    }
    CHECK(has_curve);
    CHECK(has_axis);

    CHECK_THROWS_AS(plot_series({}, 120, 90), ValidationError);
    CHECK_THROWS_AS(plot_series({{1.0}}, 120, 90), ValidationError);
    CHECK_THROWS_AS(plot_series({a}, 10, 10), ValidationError);
    std::vector<double> nan_series{1.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(plot_series({nan_series}, 120, 90), ValidationError);
}

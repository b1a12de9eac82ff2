#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sst/errors.hpp"
#include "sst/hsi.hpp"
#include "sst/optim.hpp"

namespace fs = std::filesystem;
using sst::HsiCube;

namespace {

HsiCube random_cube(std::int64_t h, std::int64_t w, std::int64_t b,
                    std::uint64_t seed) {
    HsiCube c = HsiCube::zeros(h, w, b);
    sst::Rng rng(seed);
    for (auto& v : c.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    return c;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sst_hsi_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("save/load round trip is bit-exact") {
    TempDir tmp;
    HsiCube c = random_cube(7, 5, 3, 1);
    c.value_range = {-4.0, 17.5};
    const std::string p = (tmp.path / "c.hsic").string();
    sst::save_cube(c, p);
    HsiCube d = sst::load_cube(p);
    CHECK(d.height == c.height);
    CHECK(d.width == c.width);
    CHECK(d.bands == c.bands);
    CHECK(d.value_range == c.value_range);
    CHECK(d.data == c.data);
}

TEST_CASE("degenerate 1x1x1 cube loads") {
    TempDir tmp;
    HsiCube c = HsiCube::zeros(1, 1, 1);
    c.data[0] = 0.25f;
    const std::string p = (tmp.path / "tiny.hsic").string();
    sst::save_cube(c, p);
    CHECK(sst::load_cube(p).data[0] == 0.25f);
}

TEST_CASE("missing file and truncated payload") {
    TempDir tmp;
    CHECK_THROWS_AS(sst::load_cube((tmp.path / "missing.hsic").string()),
                    sst::IoError);

    HsiCube c = random_cube(4, 4, 2, 2);
    const std::string p = (tmp.path / "t.hsic").string();
    sst::save_cube(c, p);
    // Chop the payload.
    const auto full = fs::file_size(p);
    fs::resize_file(p, full - 7);
    CHECK_THROWS_AS(sst::load_cube(p), sst::FormatError);

    // Garbage magic.
    const std::string q = (tmp.path / "bad.hsic").string();
    std::ofstream(q, std::ios::binary) << "NOPE-not-a-cube";
    CHECK_THROWS_AS(sst::load_cube(q), sst::FormatError);
}

TEST_CASE("text import") {
    TempDir tmp;
    const std::string p = (tmp.path / "c.txt").string();
    std::ofstream(p) << "2 2 1 0 255\n10 20\n30 40\n";
    HsiCube c = sst::load_cube_text(p);
    CHECK(c.height == 2);
    CHECK(c.value_range == std::pair<double, double>{0.0, 255.0});
    CHECK(c.at(1, 0, 0) == 30.0f);

    std::ofstream(p) << "2 2 1 0 255\n10 20 30\n";  // one short
    CHECK_THROWS_AS(sst::load_cube_text(p), sst::FormatError);
}

TEST_CASE("normalize maps value_range onto [0,1]") {
    HsiCube c = HsiCube::zeros(1, 3, 1);
    c.value_range = {0.0, 255.0};
    c.data = {255.0f, 51.0f, 0.0f};
    HsiCube n = sst::normalize(c);
    CHECK(n.data[0] == doctest::Approx(1.0));
    CHECK(n.data[1] == doctest::Approx(0.2));
    CHECK(n.data[2] == doctest::Approx(0.0));
    CHECK(n.value_range == std::pair<double, double>{0.0, 1.0});

    // Idempotent on already-normalized cubes.
    HsiCube nn = sst::normalize(n);
    CHECK(nn.data == n.data);

    c.value_range = {3.0, 3.0};
    CHECK_THROWS_AS(sst::normalize(c), sst::ParameterError);
}

TEST_CASE("center_crop index arithmetic") {
    HsiCube c = HsiCube::zeros(6, 6, 1);
    for (std::int64_t y = 0; y < 6; ++y)
        for (std::int64_t x = 0; x < 6; ++x)
            c.at(y, x, 0) = static_cast<float>(y * 10 + x);

    HsiCube full = sst::center_crop(c, 6, 6);
    CHECK(full.data == c.data);

    HsiCube q = sst::center_crop(c, 2, 2);  // rows/cols 2..3
    CHECK(q.at(0, 0, 0) == 22.0f);
    CHECK(q.at(1, 1, 0) == 33.0f);

    HsiCube odd = sst::center_crop(sst::center_crop(c, 5, 5), 2, 2);
    // 5x5 crop of 6 starts at 0; then 2x2 of 5 starts at 1 -> rows 1..2.
    CHECK(odd.at(0, 0, 0) == 11.0f);

    // Idempotence at the same size.
    HsiCube again = sst::center_crop(q, 2, 2);
    CHECK(again.data == q.data);

    CHECK_THROWS_AS(sst::center_crop(c, 7, 2), sst::ParameterError);
}

TEST_CASE("extract_patches counts follow the closed form") {
    HsiCube c64 = random_cube(64, 64, 2, 3);
    auto one = sst::extract_patches(c64, 64, {1.0}, {64});
    CHECK(one.patches.size() == 1);
    CHECK(one.patches[0].data == c64.data);

    HsiCube big = random_cube(256, 256, 2, 4);
    auto p = sst::extract_patches(big, 64, {1.0}, {64});
    CHECK(p.patches.size() == 16);  // (floor((256-64)/64)+1)^2

    HsiCube c128 = random_cube(128, 128, 2, 5);
    auto multi = sst::extract_patches(c128, 64, {1.0, 0.5}, {64, 32});
    CHECK(multi.patches.size() == 5);  // 4 at scale 1, 1 at 64x64 downsample
    CHECK(multi.warnings.empty());

    // Too-small scale is skipped with a warning.
    auto skip = sst::extract_patches(c128, 64, {1.0, 0.25}, {64, 32});
    CHECK(skip.patches.size() == 4);
    CHECK(skip.warnings.size() == 1);
}

TEST_CASE("extract_patches ordering is scale-major then row-major") {
    HsiCube c = HsiCube::zeros(128, 128, 1);
    for (std::int64_t y = 0; y < 128; ++y)
        for (std::int64_t x = 0; x < 128; ++x)
            c.at(y, x, 0) = static_cast<float>(y * 128 + x);
    auto set = sst::extract_patches(c, 64, {1.0}, {64});
    REQUIRE(set.patches.size() == 4);
    CHECK(set.patches[0].at(0, 0, 0) == 0.0f);
    CHECK(set.patches[1].at(0, 0, 0) == 64.0f);           // row-major: x first
    CHECK(set.patches[2].at(0, 0, 0) == 64.0f * 128.0f);  // then y
}

TEST_CASE("pseudo_color channel isolation") {
    HsiCube black = HsiCube::zeros(2, 2, 30);
    auto rgb = sst::pseudo_color(black, 9, 15, 28);
    for (auto v : rgb) CHECK(v == 0);

    HsiCube white = HsiCube::zeros(2, 2, 30);
    for (auto& v : white.data) v = 1.0f;
    for (auto v : sst::pseudo_color(white, 9, 15, 28)) CHECK(v == 255);

    HsiCube red = HsiCube::zeros(2, 2, 30);
    for (std::int64_t y = 0; y < 2; ++y)
        for (std::int64_t x = 0; x < 2; ++x) red.at(y, x, 9) = 1.0f;
    auto r = sst::pseudo_color(red, 9, 15, 28);
    for (std::size_t i = 0; i < r.size(); i += 3) {
        CHECK(r[i] == 255);
        CHECK(r[i + 1] == 0);
        CHECK(r[i + 2] == 0);
    }

    CHECK_THROWS_AS(sst::pseudo_color(black, 9, 15, 30), sst::ParameterError);
}

TEST_CASE("ppm output is deterministic") {
    TempDir tmp;
    HsiCube c = random_cube(3, 4, 30, 9);
    auto rgb = sst::pseudo_color(c, 9, 15, 28);
    const std::string a = (tmp.path / "a.ppm").string();
    const std::string b = (tmp.path / "b.ppm").string();
    sst::write_ppm(a, rgb, c.width, c.height);
    sst::write_ppm(b, rgb, c.width, c.height);
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), {});
    std::string sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
    CHECK(sa.substr(0, 2) == "P6");
}

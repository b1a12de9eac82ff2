#pragma once

// Hyperspectral cube container, file I/O and the data-preparation steps of
// the training pipeline: normalization, center crop, multi-stride patch
// extraction and pseudo-color rendering.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sst {

// H x W x B cube, band-planar row-major: data[b*H*W + y*W + x].
struct HsiCube {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t bands = 0;
    std::vector<float> data;
    std::pair<double, double> value_range{0.0, 1.0};

    static HsiCube zeros(std::int64_t h, std::int64_t w, std::int64_t b);

    float& at(std::int64_t y, std::int64_t x, std::int64_t b) {
        return data[b * height * width + y * width + x];
    }
    float at(std::int64_t y, std::int64_t x, std::int64_t b) const {
        return data[b * height * width + y * width + x];
    }
    std::int64_t size() const { return height * width * bands; }
};

struct PatchSet {
    std::vector<HsiCube> patches;
    std::string source_id;
    std::int64_t patch_size = 64;
    std::vector<double> scales;
    std::vector<std::int64_t> strides;
    std::vector<std::string> warnings;  // skipped scales, with reasons
};

// Self-describing binary cube file (little-endian): "HSIC", u32 version,
// u32 H, W, B, u32 dtype tag (0 = float32), f64 range min/max, then raw
// float32 payload band-planar.
void save_cube(const HsiCube& cube, const std::string& path);
HsiCube load_cube(const std::string& path);

// Plain-header text import: first line "H W B min max", then H*W*B
// whitespace-separated values in band-planar order.
HsiCube load_cube_text(const std::string& path);

// Affine map of value_range onto [0, 1].
HsiCube normalize(const HsiCube& cube);

// Spatially centered crop; odd remainders leave the extra pixel bottom/right.
HsiCube center_crop(const HsiCube& cube, std::int64_t h, std::int64_t w);

// Bilinear spatial downsample to round(H*s) x round(W*s), all bands.
HsiCube downsample_bilinear(const HsiCube& cube, double scale);

// Tiles the cube at each scale with the matching stride; patches pooled
// scale-major then row-major. Scales whose downsampled size is below the
// patch size are skipped with a warning record.
PatchSet extract_patches(const HsiCube& cube, std::int64_t patch,
                         const std::vector<double>& scales,
                         const std::vector<std::int64_t>& strides,
                         const std::string& source_id = "");

// Three band planes clipped to [0,1] and scaled to 8-bit RGB.
std::vector<std::uint8_t> pseudo_color(const HsiCube& cube, std::int64_t r,
                                       std::int64_t g, std::int64_t b);

// Binary PPM (P6).
void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb,
               std::int64_t width, std::int64_t height);

}  // namespace sst

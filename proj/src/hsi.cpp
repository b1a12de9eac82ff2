#include "sst/hsi.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sst/errors.hpp"

namespace sst {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'I', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 0;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, std::size_t offset) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is)
        throw FormatError("truncated header", offset);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

HsiCube HsiCube::zeros(std::int64_t h, std::int64_t w, std::int64_t b) {
    HsiCube c;
    c.height = h;
    c.width = w;
    c.bands = b;
    c.data.assign(static_cast<std::size_t>(h * w * b), 0.0f);
    return c;
}

void save_cube(const HsiCube& cube, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(cube.height));
    put_u32(os, static_cast<std::uint32_t>(cube.width));
    put_u32(os, static_cast<std::uint32_t>(cube.bands));
    put_u32(os, kDtypeF32);
    const double mn = cube.value_range.first, mx = cube.value_range.second;
    os.write(reinterpret_cast<const char*>(&mn), 8);
    os.write(reinterpret_cast<const char*>(&mx), 8);
    os.write(reinterpret_cast<const char*>(cube.data.data()),
             static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
    if (!os) throw IoError("write failed: " + path);
}

HsiCube load_cube(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad magic, not an HSIC cube file", 0);
    const std::uint32_t version = get_u32(is, 4);
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version), 4);
    HsiCube c;
    c.height = get_u32(is, 8);
    c.width = get_u32(is, 12);
    c.bands = get_u32(is, 16);
    const std::uint32_t dtype = get_u32(is, 20);
    if (dtype != kDtypeF32)
        throw FormatError("unknown dtype tag " + std::to_string(dtype), 20);
    if (c.height < 1 || c.width < 1 || c.bands < 1)
        throw FormatError("degenerate dimensions in header", 8);
    double mn = 0, mx = 1;
    is.read(reinterpret_cast<char*>(&mn), 8);
    is.read(reinterpret_cast<char*>(&mx), 8);
    if (!is) throw FormatError("truncated header", 24);
    c.value_range = {mn, mx};
    c.data.resize(static_cast<std::size_t>(c.size()));
    is.read(reinterpret_cast<char*>(c.data.data()),
            static_cast<std::streamsize>(c.data.size() * sizeof(float)));
    if (!is)
        throw FormatError("truncated payload, expected " +
                              std::to_string(c.data.size() * sizeof(float)) +
                              " bytes",
                          40 + static_cast<std::size_t>(is.gcount()));
    return c;
}

HsiCube load_cube_text(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    HsiCube c;
    double mn, mx;
    if (!(is >> c.height >> c.width >> c.bands >> mn >> mx))
        throw FormatError("text cube header must be 'H W B min max'", 0);
    if (c.height < 1 || c.width < 1 || c.bands < 1)
        throw FormatError("degenerate dimensions in text header", 0);
    c.value_range = {mn, mx};
    c.data.resize(static_cast<std::size_t>(c.size()));
    for (auto& v : c.data)
        if (!(is >> v))
            throw FormatError("truncated text payload",
                              static_cast<std::size_t>(is.tellg()));
    return c;
}

HsiCube normalize(const HsiCube& cube) {
    const double mn = cube.value_range.first, mx = cube.value_range.second;
    if (!(mx > mn))
        throw ParameterError("normalize needs value_range max > min, got (" +
                             std::to_string(mn) + ", " + std::to_string(mx) + ")");
    HsiCube out = cube;
    const float scale = static_cast<float>(1.0 / (mx - mn));
    const float off = static_cast<float>(mn);
    for (auto& v : out.data) v = (v - off) * scale;
    out.value_range = {0.0, 1.0};
    return out;
}

HsiCube center_crop(const HsiCube& cube, std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1 || h > cube.height || w > cube.width)
        throw ParameterError("center_crop " + std::to_string(h) + "x" +
                             std::to_string(w) + " does not fit " +
                             std::to_string(cube.height) + "x" +
                             std::to_string(cube.width));
    const std::int64_t y0 = (cube.height - h) / 2;
    const std::int64_t x0 = (cube.width - w) / 2;
    HsiCube out = HsiCube::zeros(h, w, cube.bands);
    out.value_range = cube.value_range;
    for (std::int64_t b = 0; b < cube.bands; ++b)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                out.at(y, x, b) = cube.at(y0 + y, x0 + x, b);
    return out;
}

HsiCube downsample_bilinear(const HsiCube& cube, double scale) {
    if (scale <= 0.0 || scale > 1.0)
        throw ParameterError("downsample scale must be in (0, 1]");
    if (scale == 1.0) return cube;
    const std::int64_t oh = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(cube.height * scale)));
    const std::int64_t ow = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(cube.width * scale)));
    HsiCube out = HsiCube::zeros(oh, ow, cube.bands);
    out.value_range = cube.value_range;
    const double sy = static_cast<double>(cube.height) / oh;
    const double sx = static_cast<double>(cube.width) / ow;
    for (std::int64_t b = 0; b < cube.bands; ++b) {
        for (std::int64_t y = 0; y < oh; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::min(std::max(fy, 0.0), static_cast<double>(cube.height - 1));
            const std::int64_t y0 = static_cast<std::int64_t>(fy);
            const std::int64_t y1 = std::min(y0 + 1, cube.height - 1);
            const double wy = fy - y0;
            for (std::int64_t x = 0; x < ow; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                fx = std::min(std::max(fx, 0.0), static_cast<double>(cube.width - 1));
                const std::int64_t x0 = static_cast<std::int64_t>(fx);
                const std::int64_t x1 = std::min(x0 + 1, cube.width - 1);
                const double wx = fx - x0;
                const double v =
                    (1 - wy) * ((1 - wx) * cube.at(y0, x0, b) + wx * cube.at(y0, x1, b)) +
                    wy * ((1 - wx) * cube.at(y1, x0, b) + wx * cube.at(y1, x1, b));
                out.at(y, x, b) = static_cast<float>(v);
            }
        }
    }
    return out;
}

PatchSet extract_patches(const HsiCube& cube, std::int64_t patch,
                         const std::vector<double>& scales,
                         const std::vector<std::int64_t>& strides,
                         const std::string& source_id) {
    if (scales.size() != strides.size())
        throw ParameterError("extract_patches needs one stride per scale");
    PatchSet set;
    set.source_id = source_id;
    set.patch_size = patch;
    set.scales = scales;
    set.strides = strides;
    for (std::size_t k = 0; k < scales.size(); ++k) {
        const HsiCube scaled = downsample_bilinear(cube, scales[k]);
        if (scaled.height < patch || scaled.width < patch) {
            std::ostringstream os;
            os << "scale " << scales[k] << " skipped: downsampled size "
               << scaled.height << "x" << scaled.width << " below patch size "
               << patch;
            set.warnings.push_back(os.str());
            continue;
        }
        const std::int64_t stride = strides[k];
        for (std::int64_t y = 0; y + patch <= scaled.height; y += stride) {
            for (std::int64_t x = 0; x + patch <= scaled.width; x += stride) {
                HsiCube p = HsiCube::zeros(patch, patch, scaled.bands);
                p.value_range = scaled.value_range;
                for (std::int64_t b = 0; b < scaled.bands; ++b)
                    for (std::int64_t yy = 0; yy < patch; ++yy)
                        for (std::int64_t xx = 0; xx < patch; ++xx)
                            p.at(yy, xx, b) = scaled.at(y + yy, x + xx, b);
                set.patches.push_back(std::move(p));
            }
        }
    }
    return set;
}

std::vector<std::uint8_t> pseudo_color(const HsiCube& cube, std::int64_t r,
                                       std::int64_t g, std::int64_t b) {
    for (std::int64_t idx : {r, g, b})
        if (idx < 0 || idx >= cube.bands)
            throw ParameterError("pseudo_color band index " +
                                 std::to_string(idx) + " out of range for " +
                                 std::to_string(cube.bands) + " bands");
    std::vector<std::uint8_t> rgb(
        static_cast<std::size_t>(cube.height * cube.width * 3));
    const std::int64_t triplet[3] = {r, g, b};
    for (std::int64_t y = 0; y < cube.height; ++y) {
        for (std::int64_t x = 0; x < cube.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = cube.at(y, x, triplet[c]);
                v = std::min(std::max(v, 0.0), 1.0);
                rgb[(y * cube.width + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return rgb;
}

void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb,
               std::int64_t width, std::int64_t height) {
    if (static_cast<std::int64_t>(rgb.size()) != width * height * 3)
        throw DimensionError("write_ppm: buffer size does not match dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P6\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(rgb.data()),
             static_cast<std::streamsize>(rgb.size()));
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace sst

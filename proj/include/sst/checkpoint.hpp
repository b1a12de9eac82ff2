#pragma once

// Model checkpoints: a small binary container holding the architecture
// config and every named parameter as a float32 blob (little-endian).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sst/errors.hpp"
#include "sst/net.hpp"

namespace sst {

namespace detail {

constexpr char kCkptMagic[4] = {'S', 'S', 'T', 'W'};
constexpr std::uint32_t kCkptVersion = 1;

inline void ckpt_write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t ckpt_read_u32(std::istream& is, const std::string& what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw FormatError("checkpoint truncated reading " + what,
                          static_cast<std::int64_t>(is.tellg()));
    return v;
}

inline void ckpt_write_str(std::ostream& os, const std::string& s) {
    ckpt_write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string ckpt_read_str(std::istream& is, const std::string& what) {
    const std::uint32_t n = ckpt_read_u32(is, what + " length");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n))
        throw FormatError("checkpoint truncated reading " + what,
                          static_cast<std::int64_t>(is.tellg()));
    return s;
}

}  // namespace detail

template <typename S>
void save_model(const SstModel<S>& model, const std::string& path) {
    // Write to a sibling temp file and rename, so a crash never leaves a
    // half-written checkpoint at the destination.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        os.write(detail::kCkptMagic, 4);
        detail::ckpt_write_u32(os, detail::kCkptVersion);
        detail::ckpt_write_str(os, model.config.to_text());
        detail::ckpt_write_u32(os,
                               static_cast<std::uint32_t>(model.params.size()));
        for (const auto& [name, t] : model.params) {
            detail::ckpt_write_str(os, name);
            detail::ckpt_write_u32(os, static_cast<std::uint32_t>(t.rank()));
            for (std::int64_t i = 0; i < t.rank(); ++i)
                detail::ckpt_write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
            std::vector<float> blob(t.data().begin(), t.data().end());
            os.write(reinterpret_cast<const char*>(blob.data()),
                     static_cast<std::streamsize>(blob.size() * 4));
        }
        if (!os) throw IoError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

template <typename S>
SstModel<S> load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, detail::kCkptMagic, 4) != 0)
        throw FormatError("not a checkpoint file: " + path, 0);
    const std::uint32_t version = detail::ckpt_read_u32(is, "version");
    if (version != detail::kCkptVersion)
        throw FormatError("unsupported checkpoint version " +
                          std::to_string(version), 4);
    SstModel<S> model;
    model.config = SstConfig::from_text(detail::ckpt_read_str(is, "config"));
    const auto expected = parameter_shapes(model.config);
    const std::uint32_t count = detail::ckpt_read_u32(is, "tensor count");
    if (count != expected.size())
        throw FormatError("checkpoint holds " + std::to_string(count) +
                              " tensors, config implies " +
                              std::to_string(expected.size()),
                          static_cast<std::int64_t>(is.tellg()));
    for (const auto& [name, shape] : expected) {
        const std::string got = detail::ckpt_read_str(is, "tensor name");
        if (got != name)
            throw FormatError("unexpected tensor '" + got + "', wanted '" +
                                  name + "'",
                              static_cast<std::int64_t>(is.tellg()));
        const std::uint32_t rank = detail::ckpt_read_u32(is, name + " rank");
        Shape dims(rank);
        for (auto& d : dims)
            d = detail::ckpt_read_u32(is, name + " dim");
        if (dims != shape)
            throw FormatError("tensor '" + name + "' has shape " +
                                  shape_str(dims) + ", config implies " +
                                  shape_str(shape),
                              static_cast<std::int64_t>(is.tellg()));
        std::vector<float> blob(shape_numel(shape));
        if (!is.read(reinterpret_cast<char*>(blob.data()),
                     static_cast<std::streamsize>(blob.size() * 4)))
            throw FormatError("checkpoint truncated in tensor '" + name + "'",
                              static_cast<std::int64_t>(is.tellg()));
        std::vector<S> data(blob.begin(), blob.end());
        model.params.emplace_back(
            name, Tensor<S>(shape, std::move(data), /*requires_grad=*/true));
    }
    return model;
}

}  // namespace sst

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "osdg/errors.hpp"
#include "osdg/io.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

// Named-tensor checkpoint:
//
//   magic   "OSDGCKPT" (8 bytes)
//   version u32 LE (currently 1)
//   count   u32 LE
//   per tensor:
//     name_len u32 LE, name bytes
//     rank u32 LE, dims u32 LE each
//     payload f64 LE, row-major
//
// Doubles are stored bit-for-bit, so save followed by load reproduces the
// exact parameter values.
using StateDict = std::vector<std::pair<std::string, Tensor>>;

inline void save_checkpoint(const std::string& path, const StateDict& state) {
    auto os = open_output(path);
    os.write("OSDGCKPT", 8);
    write_u32_le(os, 1);
    write_u32_le(os, static_cast<std::uint32_t>(state.size()));
    for (const auto& [name, tensor] : state) {
        write_u32_le(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32_le(os, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape)
            write_u32_le(os, static_cast<std::uint32_t>(d));
        for (double v : tensor.data) write_f64_le(os, v);
    }
    if (!os) throw FormatError("checkpoint: write to '" + path + "' failed");
}

inline StateDict load_checkpoint(const std::string& path) {
    auto is = open_input(path);
    char magic[8];
    if (!is.read(magic, 8) || std::string(magic, 8) != "OSDGCKPT")
        throw FormatError("checkpoint '" + path + "': bad magic, expected OSDGCKPT");
    const std::uint32_t version = read_u32_le(is, "checkpoint version");
    if (version != 1)
        throw FormatError("checkpoint '" + path + "': unsupported version " +
                          std::to_string(version));
    const std::uint32_t count = read_u32_le(is, "checkpoint tensor count");
    StateDict state;
    state.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32_le(is, "tensor name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw FormatError("checkpoint '" + path + "': truncated tensor name");
        const std::uint32_t rank = read_u32_le(is, "tensor rank");
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d)
            shape[d] = read_u32_le(is, "tensor dim");
        Tensor t(shape);
        for (std::size_t k = 0; k < t.numel(); ++k)
            t.data[k] = read_f64_le(is, "tensor payload");
        state.emplace_back(std::move(name), std::move(t));
    }
    return state;
}

} // namespace osdg

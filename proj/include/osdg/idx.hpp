#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "osdg/errors.hpp"
#include "osdg/io.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

// Grayscale digit images with labels, pixel values scaled to [0, 1].
struct RawDigitSet {
    std::vector<Tensor> images; // each [28 x 28]
    std::vector<int> labels;    // 0..9

    std::size_t size() const { return images.size(); }
};

// IDX image/label pair as distributed for MNIST. Both headers are big-endian:
//
//   images: u32 magic 0x00000803, u32 count, u32 rows, u32 cols, then
//           count*rows*cols unsigned bytes, row-major
//   labels: u32 magic 0x00000801, u32 count, then count unsigned bytes
inline RawDigitSet load_idx(const std::string& images_path,
                            const std::string& labels_path) {
    auto imgs = open_input(images_path);
    auto lbls = open_input(labels_path);

    const std::uint32_t image_magic = read_u32_be(imgs, "image magic");
    if (image_magic != 0x00000803u) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "expected 0x00000803, got 0x%08X", image_magic);
        throw FormatError("idx: bad image magic in '" + images_path + "': " + buf);
    }
    const std::uint32_t n_images = read_u32_be(imgs, "image count");
    const std::uint32_t rows = read_u32_be(imgs, "image rows");
    const std::uint32_t cols = read_u32_be(imgs, "image cols");
    if (rows != 28 || cols != 28)
        throw FormatError("idx: expected 28x28 images, got " + std::to_string(rows) +
                          "x" + std::to_string(cols));

    const std::uint32_t label_magic = read_u32_be(lbls, "label magic");
    if (label_magic != 0x00000801u) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "expected 0x00000801, got 0x%08X", label_magic);
        throw FormatError("idx: bad label magic in '" + labels_path + "': " + buf);
    }
    const std::uint32_t n_labels = read_u32_be(lbls, "label count");
    if (n_labels != n_images)
        throw FormatError("idx: label count " + std::to_string(n_labels) +
                          " != image count " + std::to_string(n_images));

    RawDigitSet out;
    out.images.reserve(n_images);
    out.labels.reserve(n_images);
    std::vector<unsigned char> pixel_buf(784);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(pixel_buf.data()), 784))
            throw FormatError("idx: truncated image payload at image " +
                              std::to_string(i) + " of " + std::to_string(n_images));
        Tensor img({28, 28});
        for (std::size_t p = 0; p < 784; ++p)
            img.data[p] = static_cast<double>(pixel_buf[p]) / 255.0;
        out.images.push_back(std::move(img));
        unsigned char label;
        if (!lbls.read(reinterpret_cast<char*>(&label), 1))
            throw FormatError("idx: truncated label payload at label " +
                              std::to_string(i) + " of " + std::to_string(n_images));
        out.labels.push_back(static_cast<int>(label));
    }
    return out;
}

} // namespace osdg

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "osdg/errors.hpp"
#include "osdg/idx.hpp"
#include "osdg/rng.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

// Procedural stand-in for MNIST: each digit class is a fixed set of stroke
// segments on a 28x28 grid, rendered with a random rotation, scale, shift,
// stroke width and intensity per sample. Geometry depends only on the class
// and the per-sample draw, never on any domain, so downstream colorization is
// pure covariate shift.
namespace glyphs {

struct Segment {
    double x0, y0, x1, y1;
};

inline void ring(std::vector<Segment>& out, double cx, double cy, double rx,
                 double ry, int sides) {
    const double two_pi = 2.0 * 3.141592653589793;
    for (int i = 0; i < sides; ++i) {
        const double a0 = two_pi * i / sides;
        const double a1 = two_pi * (i + 1) / sides;
        out.push_back({cx + rx * std::cos(a0), cy + ry * std::sin(a0),
                       cx + rx * std::cos(a1), cy + ry * std::sin(a1)});
    }
}

// Stroke templates in pixel coordinates (x right, y down).
inline const std::vector<Segment>& strokes(int digit) {
    static const std::array<std::vector<Segment>, 10> all = [] {
        std::array<std::vector<Segment>, 10> t;
        ring(t[0], 14, 14, 5.5, 8.0, 12);

        t[1] = {{15, 6, 15, 22}, {12, 9, 15, 6}};

        t[2] = {{9.5, 9.5, 10.5, 6.8}, {10.5, 6.8, 14, 5.5}, {14, 5.5, 17.5, 6.8},
                {17.5, 6.8, 18.5, 9.5}, {18.5, 9.5, 9.5, 22}, {9.5, 22, 18.5, 22}};

        t[3] = {{10, 6, 16, 6},    {16, 6, 18.5, 9},   {18.5, 9, 16, 12.5},
                {16, 12.5, 12.5, 13}, {12.5, 13, 16.5, 13.8}, {16.5, 13.8, 18.8, 17.5},
                {18.8, 17.5, 16, 21.5}, {16, 21.5, 10, 22}};

        t[4] = {{15.5, 5, 9, 16}, {9, 16, 20, 16}, {17, 10, 17, 23}};

        t[5] = {{18, 6, 10, 6},     {10, 6, 10, 13},      {10, 13, 15, 12.2},
                {15, 12.2, 18.3, 14.5}, {18.3, 14.5, 18.6, 18}, {18.6, 18, 15.5, 21.3},
                {15.5, 21.3, 9.5, 21}};

        t[6] = {{16.5, 5, 12, 10.5}, {12, 10.5, 9.8, 15.5}};
        ring(t[6], 14, 17.5, 4.6, 4.8, 10);

        t[7] = {{9, 6, 19, 6}, {19, 6, 12, 23}};

        t[8] = {};
        ring(t[8], 14, 9.7, 3.9, 4.0, 10);
        ring(t[8], 14, 18.3, 4.7, 4.4, 10);

        t[9] = {{18.3, 10.5, 17.8, 17}, {17.8, 17, 14.5, 22.5}};
        ring(t[9], 14, 10, 4.4, 4.6, 10);
        return t;
    }();
    if (digit < 0 || digit > 9)
        throw IndexError("glyphs: digit " + std::to_string(digit) + " out of range");
    return all[static_cast<std::size_t>(digit)];
}

inline double dist_to_segment(double px, double py, const Segment& s) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    const double qx = s.x0 + t * dx - px, qy = s.y0 + t * dy - py;
    return std::sqrt(qx * qx + qy * qy);
}

// One 28x28 grayscale glyph. The jitter draws happen in a fixed order so a
// sample is a pure function of (digit, rng state).
inline Tensor render(int digit, RngStream& rng) {
    const double angle = rng.uniform(-0.12, 0.12);
    const double scale = rng.uniform(0.88, 1.1);
    const double tx = rng.uniform(-1.6, 1.6);
    const double ty = rng.uniform(-1.6, 1.6);
    const double half_width = rng.uniform(1.0, 1.45);
    const double intensity = rng.uniform(0.7, 1.0);

    const double ca = std::cos(angle), sa = std::sin(angle);
    std::vector<Segment> segs = strokes(digit);
    for (Segment& s : segs) {
        const auto map = [&](double& x, double& y) {
            const double rx = x - 14.0, ry = y - 14.0;
            x = 14.0 + scale * (ca * rx - sa * ry) + tx;
            y = 14.0 + scale * (sa * rx + ca * ry) + ty;
        };
        map(s.x0, s.y0);
        map(s.x1, s.y1);
    }

    const double aa = 0.7; // anti-aliasing band in pixels
    Tensor img({28, 28});
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) {
            double d = 1e9;
            for (const Segment& s : segs)
                d = std::min(d, dist_to_segment(x + 0.5, y + 0.5, s));
            const double v = (half_width + aa - d) / aa;
            img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                intensity * std::min(1.0, std::max(0.0, v));
        }
    return img;
}

} // namespace glyphs

// Synthetic digit set with uniformly random classes.
inline RawDigitSet make_synthetic_digits(std::size_t count, std::uint64_t seed,
                                         int num_classes = 10) {
    if (num_classes < 1 || num_classes > 10)
        throw ConfigError("make_synthetic_digits: num_classes must be in [1, 10]");
    RngStream rng(seed);
    RawDigitSet out;
    out.images.reserve(count);
    out.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int digit = static_cast<int>(rng.uniform_index(
            static_cast<std::size_t>(num_classes)));
        out.images.push_back(glyphs::render(digit, rng));
        out.labels.push_back(digit);
    }
    return out;
}

} // namespace osdg

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "osdg/errors.hpp"
#include "osdg/idx.hpp"
#include "osdg/io.hpp"
#include "osdg/rng.hpp"
#include "osdg/tensor.hpp"

namespace osdg {

// Test-time marker for samples whose class is outside the training label set.
constexpr int kOodLabel = -1;

// A domain is a foreground palette applied multiplicatively to the glyph.
struct DomainSpec {
    int domain_id = 0;
    std::array<double, 3> palette{1.0, 1.0, 1.0};

    void validate() const {
        double mx = 0.0;
        for (double c : palette) {
            if (c < 0.0 || c > 1.0)
                throw ConfigError("domain " + std::to_string(domain_id) +
                                  ": palette components must lie in [0, 1]");
            mx = std::max(mx, c);
        }
        if (mx == 0.0)
            throw ConfigError("domain " + std::to_string(domain_id) +
                              ": palette must not be (0, 0, 0)");
    }
};

// An RGB sample: label is a compact index into the training label set, or
// kOodLabel for test-only classes.
struct ColoredSample {
    Tensor image; // [3 x 28 x 28]
    int label = kOodLabel;
    int domain_id = 0;
};

struct SplitSpec {
    std::vector<DomainSpec> train_domains;
    DomainSpec test_domain;
    std::vector<int> id_classes;  // raw digit values forming Y_tr
    std::vector<int> ood_classes; // raw digit values held out for test
    std::size_t train_cap = 0;
    std::size_t test_cap = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (train_domains.empty())
            throw ConfigError("split: at least one training domain required");
        for (const DomainSpec& d : train_domains) d.validate();
        test_domain.validate();
        if (id_classes.empty())
            throw ConfigError("split: id_classes must be nonempty");
        std::set<int> id(id_classes.begin(), id_classes.end());
        for (int c : ood_classes)
            if (id.count(c))
                throw ConfigError("split: class " + std::to_string(c) +
                                  " is in both id_classes and ood_classes");
        if (train_cap == 0 || test_cap == 0)
            throw ConfigError("split: per-split sample caps must be positive");
    }
};

struct Split {
    std::vector<ColoredSample> train;
    std::vector<ColoredSample> test;
    std::vector<int> id_class_order; // sorted; label k corresponds to digit order[k]
};

// gray [28 x 28] -> [3 x 28 x 28] with channel c = gray * palette[c]. The
// glyph geometry is untouched, so domains differ only in the input marginal.
inline Tensor colorize(const Tensor& gray, const DomainSpec& spec) {
    if (gray.shape != std::vector<std::size_t>{28, 28})
        throw ShapeError("colorize: expected [28x28] image, got " + gray.shape_str());
    Tensor out({3, 28, 28});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 784; ++p)
            out.data[c * 784 + p] = gray.data[p] * spec.palette[c];
    return out;
}

// Seeded split construction. Samples are shuffled once; training walks the
// order from the front taking id-class samples colored by a per-sample
// random training domain, testing walks from the back taking untaken id+ood
// samples colored by the held-out domain. Filling the two splits from
// opposite ends keeps id samples available to the test split even when the
// training cap reaches deep into the shuffle.
inline Split make_split(const RawDigitSet& raw, const SplitSpec& spec) {
    spec.validate();

    std::set<int> id(spec.id_classes.begin(), spec.id_classes.end());
    std::set<int> ood(spec.ood_classes.begin(), spec.ood_classes.end());

    Split out;
    out.id_class_order.assign(id.begin(), id.end());
    const auto compact_label = [&](int digit) {
        const auto it = std::lower_bound(out.id_class_order.begin(),
                                         out.id_class_order.end(), digit);
        return static_cast<int>(it - out.id_class_order.begin());
    };

    std::vector<std::size_t> order(raw.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream rng(spec.seed);
    shuffle(order, rng);

    std::vector<bool> taken(raw.size(), false);
    for (std::size_t idx : order) {
        if (out.train.size() >= spec.train_cap) break;
        const int digit = raw.labels[idx];
        if (!id.count(digit)) continue;
        const std::size_t d = rng.uniform_index(spec.train_domains.size());
        out.train.push_back({colorize(raw.images[idx], spec.train_domains[d]),
                             compact_label(digit), spec.train_domains[d].domain_id});
        taken[idx] = true;
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (out.test.size() >= spec.test_cap) break;
        const std::size_t idx = *it;
        if (taken[idx]) continue;
        const int digit = raw.labels[idx];
        const bool is_id = id.count(digit) > 0;
        if (!is_id && !ood.count(digit)) continue;
        out.test.push_back({colorize(raw.images[idx], spec.test_domain),
                            is_id ? compact_label(digit) : kOodLabel,
                            spec.test_domain.domain_id});
    }

    bool has_id = false, has_ood = false;
    for (const ColoredSample& s : out.test)
        (s.label == kOodLabel ? has_ood : has_id) = true;
    if (!has_id || !has_ood)
        throw ConfigError("split: test split must contain both id and ood samples "
                          "(raw set too small for the requested caps)");
    return out;
}

// Deterministic schedule of held-out class sets, each paired with trial
// indices 0..trials_per_selection-1. Blocks of three classes are taken from
// the top of the range downward until their union covers at least
// min_fraction of all classes.
inline std::vector<std::pair<std::vector<int>, int>>
enumerate_ood_selections(int num_classes = 10, double min_fraction = 0.5,
                         int trials_per_selection = 3) {
    if (min_fraction > 1.0)
        throw ConfigError("enumerate_ood_selections: min_fraction must be <= 1");
    if (num_classes < 2)
        throw ConfigError("enumerate_ood_selections: need at least 2 classes");
    if (trials_per_selection < 1)
        throw ConfigError("enumerate_ood_selections: trials_per_selection must be >= 1");

    std::vector<std::vector<int>> selections;
    std::set<int> covered;
    int hi = num_classes;
    while (static_cast<double>(covered.size()) <
           min_fraction * static_cast<double>(num_classes)) {
        if (hi <= 0)
            throw ConfigError("enumerate_ood_selections: cannot cover the requested "
                              "fraction");
        const int lo = std::max(0, hi - 3);
        std::vector<int> block;
        for (int c = lo; c < hi; ++c) {
            block.push_back(c);
            covered.insert(c);
        }
        selections.push_back(std::move(block));
        hi = lo;
    }

    std::vector<std::pair<std::vector<int>, int>> schedule;
    for (const auto& sel : selections)
        for (int t = 0; t < trials_per_selection; ++t) schedule.emplace_back(sel, t);
    return schedule;
}

// Raw binary dataset dump:
//
//   magic   "OSDGDATA" (8 bytes)
//   version u32 LE (currently 1)
//   count   u32 LE
//   per sample: label u8 (255 for ood), domain u8, 3*28*28 f32 LE pixels
inline void write_dataset(const std::string& path,
                          const std::vector<ColoredSample>& samples) {
    auto os = open_output(path);
    os.write("OSDGDATA", 8);
    write_u32_le(os, 1);
    write_u32_le(os, static_cast<std::uint32_t>(samples.size()));
    for (const ColoredSample& s : samples) {
        if (s.image.numel() != 3 * 784)
            throw ShapeError("write_dataset: image shape " + s.image.shape_str());
        const unsigned char label =
            s.label == kOodLabel ? 255 : static_cast<unsigned char>(s.label);
        const unsigned char domain = static_cast<unsigned char>(s.domain_id);
        os.put(static_cast<char>(label));
        os.put(static_cast<char>(domain));
        for (double v : s.image.data) write_f32_le(os, static_cast<float>(v));
    }
    if (!os) throw FormatError("write_dataset: write to '" + path + "' failed");
}

inline std::vector<ColoredSample> read_dataset(const std::string& path) {
    auto is = open_input(path);
    char magic[8];
    if (!is.read(magic, 8) || std::string(magic, 8) != "OSDGDATA")
        throw FormatError("dataset '" + path + "': bad magic, expected OSDGDATA");
    const std::uint32_t version = read_u32_le(is, "dataset version");
    if (version != 1)
        throw FormatError("dataset '" + path + "': unsupported version " +
                          std::to_string(version));
    const std::uint32_t count = read_u32_le(is, "dataset count");
    std::vector<ColoredSample> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        int label = is.get();
        int domain = is.get();
        if (label == EOF || domain == EOF)
            throw FormatError("dataset '" + path + "': truncated at sample " +
                              std::to_string(i));
        ColoredSample s;
        s.label = label == 255 ? kOodLabel : label;
        s.domain_id = domain;
        s.image = Tensor({3, 28, 28});
        for (std::size_t p = 0; p < s.image.numel(); ++p)
            s.image.data[p] = static_cast<double>(read_f32_le(is, "pixel"));
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace osdg

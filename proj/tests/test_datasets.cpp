#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "osdg/datasets.hpp"
#include "osdg/glyphs.hpp"
#include "osdg/idx.hpp"

using namespace osdg;

namespace {

void put_u32_be(std::ofstream& os, std::uint32_t v) {
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(bytes), 4);
}

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "osdg_dataset_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

void write_idx_pair(const std::filesystem::path& images,
                    const std::filesystem::path& labels,
                    const std::vector<std::vector<unsigned char>>& pixels,
                    const std::vector<unsigned char>& digits,
                    std::uint32_t image_magic = 0x00000803u,
                    std::uint32_t label_magic = 0x00000801u,
                    int label_count_delta = 0) {
    std::ofstream im(images, std::ios::binary);
    put_u32_be(im, image_magic);
    put_u32_be(im, static_cast<std::uint32_t>(pixels.size()));
    put_u32_be(im, 28);
    put_u32_be(im, 28);
    for (const auto& img : pixels)
        im.write(reinterpret_cast<const char*>(img.data()),
                 static_cast<std::streamsize>(img.size()));
    std::ofstream lb(labels, std::ios::binary);
    put_u32_be(lb, label_magic);
    put_u32_be(lb, static_cast<std::uint32_t>(
                       static_cast<int>(digits.size()) + label_count_delta));
    lb.write(reinterpret_cast<const char*>(digits.data()),
             static_cast<std::streamsize>(digits.size()));
}

// Raw set with machine-readable provenance: pixel 0 encodes the digit,
// pixel 1 encodes the sample index.
RawDigitSet tagged_digits(std::size_t count) {
    RawDigitSet raw;
    for (std::size_t i = 0; i < count; ++i) {
        Tensor img({28, 28});
        const int digit = static_cast<int>(i % 10);
        img.data[0] = digit / 10.0;
        img.data[1] = static_cast<double>(i) / 100.0;
        raw.images.push_back(std::move(img));
        raw.labels.push_back(digit);
    }
    return raw;
}

} // namespace

TEST_CASE("idx loading") {
    const auto dir = temp_dir();
    const auto images = dir / "imgs.idx";
    const auto labels = dir / "lbls.idx";

    SECTION("well-formed pair with pixel scaling") {
        std::vector<std::vector<unsigned char>> pix(2,
                                                    std::vector<unsigned char>(784, 0));
        pix[0][0] = 255;
        pix[0][1] = 51;
        pix[1][783] = 128;
        write_idx_pair(images, labels, pix, {7, 2});
        const RawDigitSet raw = load_idx(images.string(), labels.string());
        REQUIRE(raw.size() == 2);
        CHECK(raw.labels == std::vector<int>{7, 2});
        CHECK(raw.images[0].data[0] == 1.0);
        CHECK(raw.images[0].data[1] == Catch::Approx(0.2).margin(1e-12));
        CHECK(raw.images[1].data[783] == Catch::Approx(128.0 / 255.0).margin(1e-15));
        CHECK(raw.images[1].data[0] == 0.0);
    }
    SECTION("bad image magic") {
        write_idx_pair(images, labels, {std::vector<unsigned char>(784, 0)}, {1},
                       0xDEADBEEFu);
        CHECK_THROWS_AS(load_idx(images.string(), labels.string()), FormatError);
    }
    SECTION("bad label magic") {
        write_idx_pair(images, labels, {std::vector<unsigned char>(784, 0)}, {1},
                       0x00000803u, 0x00000999u);
        CHECK_THROWS_AS(load_idx(images.string(), labels.string()), FormatError);
    }
    SECTION("label and image counts must agree") {
        write_idx_pair(images, labels, {std::vector<unsigned char>(784, 0)}, {1},
                       0x00000803u, 0x00000801u, 5);
        CHECK_THROWS_AS(load_idx(images.string(), labels.string()), FormatError);
    }
    SECTION("truncated image payload") {
        std::ofstream im(images, std::ios::binary);
        put_u32_be(im, 0x00000803u);
        put_u32_be(im, 2);
        put_u32_be(im, 28);
        put_u32_be(im, 28);
        const std::vector<unsigned char> one(784, 3);
        im.write(reinterpret_cast<const char*>(one.data()), 784);
        im.close();
        std::ofstream lb(labels, std::ios::binary);
        put_u32_be(lb, 0x00000801u);
        put_u32_be(lb, 2);
        lb.put(1);
        lb.put(2);
        lb.close();
        CHECK_THROWS_AS(load_idx(images.string(), labels.string()), FormatError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_idx((dir / "nope.idx").string(), labels.string()),
                        FormatError);
    }
}

TEST_CASE("colorize applies the palette multiplicatively") {
    Tensor gray({28, 28});
    gray.data[0] = 0.5;
    gray.data[100] = 1.0;
    const DomainSpec spec{0, {1.0, 0.5, 0.0}};
    const Tensor rgb = colorize(gray, spec);
    REQUIRE(rgb.shape == std::vector<std::size_t>{3, 28, 28});
    CHECK(rgb.data[0] == 0.5);
    CHECK(rgb.data[784] == 0.25);
    CHECK(rgb.data[2 * 784] == 0.0);
    CHECK(rgb.data[100] == 1.0);
    CHECK(rgb.data[784 + 100] == 0.5);

    // Background stays black in every channel.
    for (std::size_t p = 0; p < 784; ++p) {
        if (p == 0 || p == 100) continue;
        CHECK(rgb.data[p] == 0.0);
        CHECK(rgb.data[784 + p] == 0.0);
        CHECK(rgb.data[2 * 784 + p] == 0.0);
    }

    CHECK_THROWS_AS(colorize(Tensor({27, 28}), spec), ShapeError);
    CHECK_THROWS_AS(colorize(Tensor({784}), spec), ShapeError);
}

TEST_CASE("colorize is invertible channel-wise where the palette is positive") {
    RngStream rng(12);
    Tensor gray({28, 28});
    for (double& v : gray.data) v = rng.uniform();
    const DomainSpec spec{1, {0.9, 0.35, 0.05}};
    const Tensor rgb = colorize(gray, spec);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 784; ++p)
            CHECK(rgb.data[c * 784 + p] / spec.palette[c] ==
                  Catch::Approx(gray.data[p]).margin(1e-12));
}

TEST_CASE("domain and split validation") {
    CHECK_THROWS_AS((DomainSpec{0, {1.2, 0.0, 0.0}}.validate()), ConfigError);
    CHECK_THROWS_AS((DomainSpec{0, {-0.1, 0.5, 0.5}}.validate()), ConfigError);
    CHECK_THROWS_AS((DomainSpec{0, {0.0, 0.0, 0.0}}.validate()), ConfigError);
    CHECK_NOTHROW((DomainSpec{0, {0.0, 1.0, 0.0}}.validate()));

    SplitSpec ok;
    ok.train_domains = {DomainSpec{0, {1.0, 0.0, 0.0}}};
    ok.test_domain = DomainSpec{9, {0.0, 0.0, 1.0}};
    ok.id_classes = {0, 1};
    ok.ood_classes = {2};
    ok.train_cap = 4;
    ok.test_cap = 4;
    CHECK_NOTHROW(ok.validate());

    SplitSpec bad = ok;
    bad.train_domains.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.id_classes.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.ood_classes = {1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.train_cap = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = ok;
    bad.test_cap = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("make_split honors exclusion, caps and determinism") {
    const RawDigitSet raw = tagged_digits(60);
    SplitSpec spec;
    spec.train_domains = {DomainSpec{0, {1.0, 1.0, 1.0}},
                          DomainSpec{1, {1.0, 0.2, 0.2}}};
    spec.test_domain = DomainSpec{7, {0.9, 0.6, 0.3}};
    spec.id_classes = {3, 1, 5};
    spec.ood_classes = {9};
    spec.train_cap = 10;
    spec.test_cap = 20;
    spec.seed = 77;

    const Split a = make_split(raw, spec);
    const Split b = make_split(raw, spec);

    CHECK(a.id_class_order == std::vector<int>{1, 3, 5});
    CHECK(a.train.size() == 10);
    REQUIRE(a.train.size() == b.train.size());
    REQUIRE(a.test.size() == b.test.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].label == b.train[i].label);
        CHECK(a.train[i].domain_id == b.train[i].domain_id);
        CHECK(a.train[i].image.data == b.train[i].image.data);
    }

    std::set<int> train_domains;
    std::set<int> train_indices, test_indices;
    for (const ColoredSample& s : a.train) {
        REQUIRE(s.label >= 0);
        REQUIRE(s.label < 3);
        train_domains.insert(s.domain_id);
        // Pixel 0 carries the digit (train palettes have red component 1).
        const int digit = static_cast<int>(std::lround(10.0 * s.image.data[0]));
        CHECK(digit == a.id_class_order[static_cast<std::size_t>(s.label)]);
        train_indices.insert(static_cast<int>(std::lround(100.0 * s.image.data[1])));
    }
    for (int d : train_domains) CHECK((d == 0 || d == 1));

    bool saw_id = false, saw_ood = false;
    for (const ColoredSample& s : a.test) {
        CHECK(s.domain_id == 7);
        const int digit =
            static_cast<int>(std::lround(10.0 * s.image.data[0] / 0.9));
        if (s.label == kOodLabel) {
            saw_ood = true;
            CHECK(digit == 9);
        } else {
            saw_id = true;
            CHECK(digit == a.id_class_order[static_cast<std::size_t>(s.label)]);
        }
        test_indices.insert(
            static_cast<int>(std::lround(100.0 * s.image.data[1] / 0.9)));
    }
    CHECK(saw_id);
    CHECK(saw_ood);

    // No raw sample may appear in both splits.
    for (int idx : train_indices) CHECK(test_indices.count(idx) == 0);

    SplitSpec reseeded = spec;
    reseeded.seed = 78;
    const Split c = make_split(raw, reseeded);
    bool any_difference = c.train.size() != a.train.size();
    for (std::size_t i = 0; !any_difference && i < a.train.size(); ++i)
        any_difference = a.train[i].image.data != c.train[i].image.data;
    CHECK(any_difference);
}

TEST_CASE("make_split requires both id and ood test samples") {
    RawDigitSet raw = tagged_digits(40);
    SplitSpec spec;
    spec.train_domains = {DomainSpec{0, {1.0, 1.0, 1.0}}};
    spec.test_domain = DomainSpec{1, {0.5, 0.5, 0.5}};
    spec.id_classes = {0, 1, 2, 3};
    spec.ood_classes = {9};
    spec.train_cap = 16; // consumes every id sample, leaving no id for test
    spec.test_cap = 12;
    spec.seed = 5;
    CHECK_THROWS_AS(make_split(raw, spec), ConfigError);

    spec.train_cap = 8;
    CHECK_NOTHROW(make_split(raw, spec));
}

TEST_CASE("ood selection schedule") {
    SECTION("default half coverage in blocks of three") {
        const auto sched = enumerate_ood_selections(10, 0.5, 3);
        REQUIRE(sched.size() == 6);
        for (int t = 0; t < 3; ++t) {
            CHECK(sched[static_cast<std::size_t>(t)].first ==
                  std::vector<int>{7, 8, 9});
            CHECK(sched[static_cast<std::size_t>(t)].second == t);
            CHECK(sched[static_cast<std::size_t>(3 + t)].first ==
                  std::vector<int>{4, 5, 6});
            CHECK(sched[static_cast<std::size_t>(3 + t)].second == t);
        }
    }
    SECTION("full coverage ends with a short block") {
        const auto sched = enumerate_ood_selections(10, 1.0, 2);
        REQUIRE(sched.size() == 8);
        CHECK(sched[0].first == std::vector<int>{7, 8, 9});
        CHECK(sched[2].first == std::vector<int>{4, 5, 6});
        CHECK(sched[4].first == std::vector<int>{1, 2, 3});
        CHECK(sched[6].first == std::vector<int>{0});
    }
    SECTION("zero fraction needs no selections") {
        CHECK(enumerate_ood_selections(10, 0.0, 3).empty());
    }
    SECTION("invalid arguments") {
        CHECK_THROWS_AS(enumerate_ood_selections(10, 1.5, 3), ConfigError);
        CHECK_THROWS_AS(enumerate_ood_selections(1, 0.5, 3), ConfigError);
        CHECK_THROWS_AS(enumerate_ood_selections(10, 0.5, 0), ConfigError);
    }
}

TEST_CASE("dataset binary round trip") {
    const auto dir = temp_dir();
    const auto path = (dir / "split.bin").string();

    RngStream rng(21);
    std::vector<ColoredSample> samples;
    for (int i = 0; i < 5; ++i) {
        ColoredSample s;
        s.image = Tensor({3, 28, 28});
        for (double& v : s.image.data) v = rng.uniform();
        s.label = i == 0 ? kOodLabel : i;
        s.domain_id = i % 3;
        samples.push_back(std::move(s));
    }
    write_dataset(path, samples);
    const auto back = read_dataset(path);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(back[i].label == samples[i].label);
        CHECK(back[i].domain_id == samples[i].domain_id);
        REQUIRE(back[i].image.shape == samples[i].image.shape);
        for (std::size_t p = 0; p < samples[i].image.numel(); ++p)
            CHECK(back[i].image.data[p] ==
                  static_cast<double>(static_cast<float>(samples[i].image.data[p])));
    }

    SECTION("bad magic is rejected") {
        const auto bad = (dir / "bad.bin").string();
        std::ofstream os(bad, std::ios::binary);
        os.write("NOTOSDGD", 8);
        os.close();
        CHECK_THROWS_AS(read_dataset(bad), FormatError);
    }
    SECTION("truncated payload is rejected") {
        std::ifstream is(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() - 100);
        const auto cut = (dir / "cut.bin").string();
        std::ofstream os(cut, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        os.close();
        CHECK_THROWS_AS(read_dataset(cut), FormatError);
    }
}

TEST_CASE("synthetic glyphs are plausible digit stand-ins") {
    const RawDigitSet raw = make_synthetic_digits(120, 99);
    REQUIRE(raw.size() == 120);
    std::set<int> seen;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(raw.images[i].shape == std::vector<std::size_t>{28, 28});
        CHECK(raw.labels[i] >= 0);
        CHECK(raw.labels[i] <= 9);
        seen.insert(raw.labels[i]);
        double mx = 0.0, mn = 1.0, sum = 0.0;
        for (double v : raw.images[i].data) {
            mx = std::max(mx, v);
            mn = std::min(mn, v);
            sum += v;
        }
        CHECK(mx <= 1.0);
        CHECK(mn >= 0.0);
        CHECK(mx > 0.5);           // a visible stroke
        CHECK(sum < 784.0 * 0.6);  // mostly background
    }
    CHECK(seen.size() == 10);

    const RawDigitSet again = make_synthetic_digits(120, 99);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(raw.labels[i] == again.labels[i]);
        CHECK(raw.images[i].data == again.images[i].data);
    }

    // Same class, different draws: jitter makes instances distinct.
    const RawDigitSet many = make_synthetic_digits(30, 4);
    bool found_pair = false;
    for (std::size_t i = 0; i < many.size() && !found_pair; ++i)
        for (std::size_t j = i + 1; j < many.size() && !found_pair; ++j)
            if (many.labels[i] == many.labels[j] &&
                many.images[i].data != many.images[j].data)
                found_pair = true;
    CHECK(found_pair);
}

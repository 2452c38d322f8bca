#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "osdg/datasets.hpp"
#include "osdg/generator.hpp"
#include "osdg/glyphs.hpp"

using namespace osdg;

namespace {

const std::vector<std::array<double, 3>> kPalettes{
    {1.0, 1.0, 1.0}, {0.6, 0.3, 0.15}, {0.2, 0.8, 0.4}};

Tensor glyph(int digit, std::uint64_t seed) {
    RngStream rng(seed);
    return glyphs::render(digit, rng);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

} // namespace

TEST_CASE("blend coefficient law") {
    SECTION("spec validation") {
        CHECK_THROWS_AS((BlendSpec{0.0, 4.0, -100.0, 100.0}.validate()), ConfigError);
        CHECK_THROWS_AS((BlendSpec{2.0, 1.0, -100.0, 100.0}.validate()), ConfigError);
        CHECK_THROWS_AS((BlendSpec{0.25, 4.0, 5.0, 5.0}.validate()), ConfigError);
        CHECK_NOTHROW(BlendSpec{}.validate());
    }
    SECTION("magnitudes are log-uniform in [0.25, 4] with fair signs") {
        RngStream rng(31);
        int negatives = 0, below_one = 0;
        const int n = 2000;
        for (int i = 0; i < n; ++i) {
            const BlendCoeffs c = sample_blend(rng);
            for (double v : {c.alpha, c.beta}) {
                CHECK(std::abs(v) >= 0.25);
                CHECK(std::abs(v) <= 4.0);
            }
            if (c.alpha < 0.0) ++negatives;
            if (std::abs(c.alpha) < 1.0) ++below_one;
        }
        CHECK(negatives > n * 44 / 100);
        CHECK(negatives < n * 56 / 100);
        // log-uniform over [1/4, 4] puts half the mass below 1
        CHECK(below_one > n * 44 / 100);
        CHECK(below_one < n * 56 / 100);
    }
    SECTION("coefficients are clipped to the admissible range") {
        BlendSpec wide;
        wide.magnitude_min = 50.0;
        wide.magnitude_max = 500.0;
        RngStream rng(32);
        bool clipped = false;
        for (int i = 0; i < 200; ++i) {
            const BlendCoeffs c = sample_blend(rng, wide);
            CHECK(c.alpha >= wide.coeff_min);
            CHECK(c.alpha <= wide.coeff_max);
            CHECK(c.beta >= wide.coeff_min);
            CHECK(c.beta <= wide.coeff_max);
            if (std::abs(c.alpha) == 100.0) clipped = true;
        }
        CHECK(clipped);
    }
}

TEST_CASE("blend_semantics is the stated linear combination") {
    const Tensor s1({2}, {1.0, 2.0});
    const Tensor s2({2}, {3.0, -1.0});
    const Tensor out = blend_semantics(s1, s2, 2.0, -1.0);
    CHECK(out.data == std::vector<double>{-1.0, 5.0});

    SECTION("identity coefficients reproduce the first code") {
        const Tensor same = blend_semantics(s1, s2, 1.0, 0.0);
        CHECK(same.data == s1.data);
    }
    SECTION("linearity in the coefficients") {
        RngStream rng(33);
        Tensor a({16}), b({16});
        for (double& v : a.data) v = rng.uniform(-2.0, 2.0);
        for (double& v : b.data) v = rng.uniform(-2.0, 2.0);
        const Tensor lhs1 = blend_semantics(a, b, 0.3, 1.1);
        const Tensor lhs2 = blend_semantics(a, b, -0.9, 0.4);
        const Tensor rhs = blend_semantics(a, b, 0.3 - 0.9, 1.1 + 0.4);
        for (std::size_t i = 0; i < rhs.numel(); ++i)
            CHECK(lhs1.data[i] + lhs2.data[i] ==
                  Catch::Approx(rhs.data[i]).margin(1e-12));
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(blend_semantics(s1, Tensor({3}), 1.0, 1.0), ShapeError);
    }
}

TEST_CASE("oracle codec round trips colorized glyphs") {
    const OracleGenerator gen(kPalettes);
    for (int digit : {0, 3, 7}) {
        const Tensor gray = glyph(digit, 100 + static_cast<std::uint64_t>(digit));
        for (const auto& pal : kPalettes) {
            const Tensor x = colorize(gray, DomainSpec{0, pal});
            const Tensor s = gen.encode_semantic(x);
            const Tensor v = gen.encode_variation(x);
            const Tensor back = gen.decode(s, v);
            CHECK(max_abs_diff(back, x) <= 1e-12);
            // The semantic code is the glyph itself.
            CHECK(max_abs_diff(s, gray) <= 1e-12);
        }
    }
}

TEST_CASE("oracle semantic code ignores the palette") {
    const OracleGenerator gen(kPalettes);
    const Tensor gray = glyph(5, 7);
    const Tensor xa = colorize(gray, DomainSpec{0, {1.0, 1.0, 1.0}});
    const Tensor xb = colorize(gray, DomainSpec{1, {0.2, 0.8, 0.4}});
    const Tensor sa = gen.encode_semantic(xa);
    const Tensor sb = gen.encode_semantic(xb);
    CHECK(max_abs_diff(sa, sb) <= 1e-12);
}

TEST_CASE("oracle variation code recovers the palette") {
    const OracleGenerator gen(kPalettes);
    const Tensor gray = glyph(2, 8);

    SECTION("a known palette is returned at its stored scale") {
        const Tensor x = colorize(gray, DomainSpec{0, {0.6, 0.3, 0.15}});
        const Tensor v = gen.encode_variation(x);
        REQUIRE(v.numel() == 3);
        CHECK(v.data[0] == 0.6);
        CHECK(v.data[1] == 0.3);
        CHECK(v.data[2] == 0.15);
    }
    SECTION("an unknown palette comes back max-normalized") {
        const Tensor x = colorize(gray, DomainSpec{0, {0.5, 1.0, 0.25}});
        const Tensor v = gen.encode_variation(x);
        CHECK(v.data[0] == Catch::Approx(0.5).margin(1e-9));
        CHECK(v.data[1] == Catch::Approx(1.0).margin(1e-9));
        CHECK(v.data[2] == Catch::Approx(0.25).margin(1e-9));
    }
    SECTION("an all-black image has no palette") {
        CHECK_THROWS_AS(gen.encode_variation(Tensor({3, 28, 28})), ContractError);
        // but its semantic code is simply the zero glyph
        const Tensor s = gen.encode_semantic(Tensor({3, 28, 28}));
        for (double p : s.data) CHECK(p == 0.0);
    }
}

TEST_CASE("oracle decode clamps to the unit interval") {
    const OracleGenerator gen(kPalettes);
    Tensor s({28, 28});
    s.data[0] = 0.0;
    s.data[1] = 0.5;
    s.data[2] = 1.0;
    const Tensor v({3}, {1.0, 0.5, 2.0});
    const Tensor out = gen.decode(s, v);
    CHECK(out.data[0] == 0.0);
    CHECK(out.data[1] == 0.5);
    CHECK(out.data[2] == 1.0);
    CHECK(out.data[784 + 1] == 0.25);
    CHECK(out.data[2 * 784 + 1] == 1.0); // 0.5 * 2 clamped
    CHECK(out.data[2 * 784 + 2] == 1.0); // 1.0 * 2 clamped

    CHECK_THROWS_AS(gen.decode(Tensor({10}), v), ShapeError);
    CHECK_THROWS_AS(gen.decode(s, Tensor({4})), ShapeError);
}

TEST_CASE("oracle sampled variations are max-normalized") {
    const OracleGenerator gen(kPalettes);
    RngStream rng(41);
    for (int i = 0; i < 50; ++i) {
        const Tensor v = gen.sample_variation(rng);
        REQUIRE(v.numel() == 3);
        double top = 0.0;
        for (double c : v.data) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
            top = std::max(top, c);
        }
        CHECK(top == 1.0);
    }
    RngStream r1(42), r2(42);
    CHECK(gen.sample_variation(r1).data == gen.sample_variation(r2).data);
}

TEST_CASE("domain transfer preserves the semantic code exactly") {
    const OracleGenerator gen(kPalettes);
    RngStream rng(43);
    for (int digit : {1, 4, 9}) {
        const Tensor gray = glyph(digit, 50 + static_cast<std::uint64_t>(digit));
        const Tensor x = colorize(gray, DomainSpec{0, {1.0, 1.0, 1.0}});
        const Tensor moved = gen.domain_transfer(x, rng);
        CHECK(moved.shape == x.shape);
        CHECK(max_abs_diff(gen.encode_semantic(moved), gen.encode_semantic(x)) <=
              1e-12);

        // The transferred image carries the freshly sampled palette.
        const Tensor v = gen.encode_variation(moved);
        const Tensor redone = gen.decode(gen.encode_semantic(moved), v);
        CHECK(max_abs_diff(redone, moved) <= 1e-12);
    }
}

TEST_CASE("synthetic outliers blend distinct classes") {
    const OracleGenerator gen(kPalettes);
    const Tensor a = colorize(glyph(3, 61), DomainSpec{0, {1.0, 1.0, 1.0}});
    const Tensor b = colorize(glyph(8, 62), DomainSpec{0, {0.2, 0.8, 0.4}});

    SECTION("same labels are rejected") {
        RngStream rng(44);
        CHECK_THROWS_AS(gen.synth_ood(a, 2, b, 2, rng), ContractError);
    }
    SECTION("outputs are valid images distinct from both parents") {
        RngStream rng(45);
        for (int i = 0; i < 10; ++i) {
            const Tensor o = gen.synth_ood(a, 0, b, 1, rng);
            REQUIRE(o.shape == std::vector<std::size_t>{3, 28, 28});
            for (double p : o.data) {
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
            }
            CHECK(max_abs_diff(o, a) > 1e-6);
            CHECK(max_abs_diff(o, b) > 1e-6);
        }
    }
    SECTION("seeded determinism") {
        RngStream r1(46), r2(46);
        const Tensor o1 = gen.synth_ood(a, 0, b, 1, r1);
        const Tensor o2 = gen.synth_ood(a, 0, b, 1, r2);
        CHECK(o1.data == o2.data);
    }
}

TEST_CASE("oracle generator rejects degenerate known palettes") {
    CHECK_THROWS_AS(OracleGenerator({{0.0, 0.0, 0.0}}), ConfigError);
    CHECK_NOTHROW(OracleGenerator({}));
}

TEST_CASE("learned generator codec plumbing") {
    LearnedGenerator::Dims dims;
    dims.semantic_dim = 8;
    dims.variation_dim = 4;
    dims.hidden_dim = 32;
    RngStream init(71);
    LearnedGenerator gen(dims, init);

    const Tensor x = colorize(glyph(6, 72), DomainSpec{0, {1.0, 0.5, 0.5}});
    const Tensor s = gen.encode_semantic(x);
    const Tensor v = gen.encode_variation(x);
    CHECK(s.numel() == 8);
    CHECK(v.numel() == 4);
    const Tensor y = gen.decode(s, v);
    REQUIRE(y.shape == std::vector<std::size_t>{3, 28, 28});
    for (double p : y.data) {
        CHECK(p > 0.0);
        CHECK(p < 1.0); // sigmoid output
    }

    RngStream rng(73);
    CHECK(gen.sample_variation(rng).numel() == 4);
    CHECK(gen.domain_transfer(x, rng).shape == x.shape);
    CHECK(gen.mode() == GeneratorMode::Learned);

    CHECK_THROWS_AS(gen.decode(Tensor({9}), v), ShapeError);
    CHECK_THROWS_AS(gen.encode_semantic(Tensor({28, 28})), ShapeError);
}

TEST_CASE("learned generator save and load round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "osdg_gen_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "gen.bin").string();

    LearnedGenerator::Dims dims;
    dims.semantic_dim = 8;
    dims.variation_dim = 4;
    dims.hidden_dim = 32;
    RngStream init(81);
    LearnedGenerator gen(dims, init);
    gen.save(path);

    LearnedGenerator back = LearnedGenerator::load(path);
    CHECK(back.dims().semantic_dim == 8);
    CHECK(back.dims().variation_dim == 4);
    CHECK(back.dims().hidden_dim == 32);

    const Tensor x = colorize(glyph(1, 82), DomainSpec{0, {1.0, 1.0, 1.0}});
    CHECK(gen.encode_semantic(x).data == back.encode_semantic(x).data);
    CHECK(gen.encode_variation(x).data == back.encode_variation(x).data);
    const Tensor s = gen.encode_semantic(x);
    const Tensor v = gen.encode_variation(x);
    CHECK(gen.decode(s, v).data == back.decode(s, v).data);

    SECTION("a plain network checkpoint is rejected") {
        StateDict junk;
        junk.emplace_back("h.W", Tensor({2, 2}));
        save_checkpoint(path, junk);
        CHECK_THROWS_AS(LearnedGenerator::load(path), FormatError);
    }
}

TEST_CASE("generator training reduces the codec loss") {
    RngStream data_rng(91);
    std::vector<ColoredSample> data;
    const std::vector<std::array<double, 3>> pals{{1.0, 1.0, 1.0}, {1.0, 0.3, 0.3}};
    for (int i = 0; i < 16; ++i) {
        ColoredSample s;
        s.image = colorize(glyphs::render(i % 4, data_rng),
                           DomainSpec{i % 2, pals[static_cast<std::size_t>(i % 2)]});
        s.label = i % 4;
        s.domain_id = i % 2;
        data.push_back(std::move(s));
    }

    LearnedGenerator::Dims dims;
    dims.semantic_dim = 8;
    dims.variation_dim = 4;
    dims.hidden_dim = 48;
    RngStream init(92);
    LearnedGenerator gen(dims, init);

    TrainGeneratorConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.lr = 0.05;
    cfg.seed = 93;
    const std::vector<double> losses = train_generator(gen, data, cfg);
    REQUIRE(losses.size() == 4);
    for (double l : losses) CHECK(std::isfinite(l));
    CHECK(losses.back() < losses.front());

    SECTION("degenerate inputs are rejected") {
        CHECK_THROWS_AS(train_generator(gen, {}, cfg), ContractError);
        TrainGeneratorConfig bad = cfg;
        bad.batch_size = 1;
        CHECK_THROWS_AS(train_generator(gen, data, bad), ConfigError);
    }
    SECTION("a poisoned parameter aborts with a diagnostic") {
        gen.parameters()[0]->value.data[0] = std::nan("");
        CHECK_THROWS_AS(train_generator(gen, data, cfg), TrainingError);
    }
}

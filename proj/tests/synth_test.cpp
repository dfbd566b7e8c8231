#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cats/pgm.hpp"
#include "cats/synth.hpp"

using namespace cats;

namespace {

bool has_full_2x2_block(const Grid& mask) {
    for (int y = 0; y + 1 < mask.height(); ++y) {
        for (int x = 0; x + 1 < mask.width(); ++x) {
            if (mask.at(y, x) > 0 && mask.at(y, x + 1) > 0 && mask.at(y + 1, x) > 0 &&
                mask.at(y + 1, x + 1) > 0) {
                return true;
            }
        }
    }
    return false;
}

}  // namespace

TEST_SUITE("synth-data") {

TEST_CASE("generation is a pure function of the spec") {
    SynthSpec spec;
    spec.num_images = 4;
    spec.seed = 99;
    auto a = generate(spec);
    auto b = generate(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a[i].image.size(); ++j) {
            CHECK(a[i].image[j] == b[i].image[j]);
            CHECK(a[i].consensus[j] == b[i].consensus[j]);
        }
    }
}

TEST_CASE("single exact annotator reproduces the binary boundary") {
    SynthSpec spec;
    spec.num_images = 6;
    spec.annotators = 1;
    spec.annotator_jitter = 0;
    spec.seed = 5;
    for (const auto& sample : generate(spec)) {
        for (double v : sample.consensus.values()) {
            CHECK((v == 0.0 || v == 1.0));
        }
        CHECK(sample.consensus.sum() > 0.0);
    }
}

TEST_CASE("ground-truth boundaries are 1 px thin under the 2x2 test") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 11ull, 31ull}) {
        SynthSpec spec;
        spec.num_images = 4;
        spec.annotators = 1;
        spec.annotator_jitter = 0;
        spec.seed = seed;
        for (const auto& sample : generate(spec)) {
            CHECK_FALSE(has_full_2x2_block(sample.consensus));
        }
    }
}

TEST_CASE("consensus is confined to the jitter band around the true boundary") {
    SynthSpec truth_spec;
    truth_spec.num_images = 5;
    truth_spec.annotators = 1;
    truth_spec.annotator_jitter = 0;
    truth_spec.seed = 21;
    SynthSpec jitter_spec = truth_spec;
    jitter_spec.annotators = 5;
    jitter_spec.annotator_jitter = 1;

    // Annotator draws happen after scene draws, so both specs see the same
    // shapes at equal seeds.
    auto truth = generate(truth_spec);
    auto jittered = generate(jitter_spec);
    REQUIRE(truth.size() == jittered.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const Grid& b = truth[i].consensus;
        const Grid& c = jittered[i].consensus;
        const int size = b.height();
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                if (c.at(y, x) == 0.0) continue;
                bool near = false;
                for (int dy = -1; dy <= 1 && !near; ++dy) {
                    for (int dx = -1; dx <= 1 && !near; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        near = yy >= 0 && yy < size && xx >= 0 && xx < size &&
                               b.at(yy, xx) == 1.0;
                    }
                }
                CHECK(near);
            }
        }
        // Quantized consensus steps of 1/annotators.
        for (double v : c.values()) {
            const double scaled = v * jitter_spec.annotators;
            CHECK(std::abs(scaled - std::round(scaled)) < 1e-12);
        }
    }
}

TEST_CASE("edge fraction stays in (0, 0.25) and images stay in range") {
    SynthSpec spec;
    spec.num_images = 12;
    spec.seed = 8;
    for (const auto& sample : generate(spec)) {
        long marked = 0;
        for (double v : sample.consensus.values()) {
            if (v > 0.0) ++marked;
        }
        const double fraction = static_cast<double>(marked) /
                                static_cast<double>(sample.consensus.size());
        CHECK(fraction > 0.0);
        CHECK(fraction < 0.25);
        CHECK(sample.image.min_value() >= 0.0);
        CHECK(sample.image.max_value() <= 1.0);
    }
}

TEST_CASE("a spec whose shapes cannot fit is rejected") {
    SynthSpec spec;
    spec.image_size = 8;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("dataset round-trips through the directory layout") {
    SynthSpec spec;
    spec.num_images = 3;
    spec.seed = 77;
    auto samples = generate(spec);
    const auto dir = std::filesystem::temp_directory_path() / "cats_synth_test";
    std::filesystem::remove_all(dir);
    write_dataset(samples, spec, dir);
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(list_pgm_files(dir / "images").size() == 3);

    auto loaded = load_dataset(dir);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = 0; j < samples[i].image.size(); ++j) {
            CHECK(std::abs(loaded[i].image[j] - samples[i].image[j]) <= 1.0 / 510.0);
            // Fifth-steps survive 8-bit quantization exactly.
            CHECK(loaded[i].consensus[j] == samples[i].consensus[j]);
        }
    }
    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE

TEST_SUITE("pgm") {

TEST_CASE("write/read round-trip stays within the quantization bound") {
    Grid g(9, 7, 1);
    std::uint64_t s = 1;
    for (double& v : g.values()) {
        s = s * 6364136223846793005ULL + 1442695040888963407ULL;
        v = static_cast<double>(s >> 11) / 9007199254740992.0;
    }
    const auto path = std::filesystem::temp_directory_path() / "cats_pgm_test.pgm";
    write_pgm(g, path);
    Grid back = read_pgm(path);
    REQUIRE(back.same_shape(g));
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(std::abs(back[i] - g[i]) <= 1.0 / 510.0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("quantization rounds half up") {
    Grid g = Grid::from_rows(2, 2, {0.0, 1.0, 0.5, 0.5});
    const auto path = std::filesystem::temp_directory_path() / "cats_pgm_round.pgm";
    write_pgm(g, path);
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() >= 4);
    const std::string payload = bytes.substr(bytes.size() - 4);
    CHECK(static_cast<unsigned char>(payload[0]) == 0);
    CHECK(static_cast<unsigned char>(payload[1]) == 255);
    CHECK(static_cast<unsigned char>(payload[2]) == 128);
    CHECK(static_cast<unsigned char>(payload[3]) == 128);
    std::filesystem::remove(path);
}

TEST_CASE("reader accepts P5 and P2 with comments") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto p5 = dir / "cats_p5.pgm";
    {
        std::ofstream os(p5, std::ios::binary);
        os << "P5\n2 2\n255\n";
        const unsigned char payload[4] = {0, 64, 128, 255};
        os.write(reinterpret_cast<const char*>(payload), 4);
    }
    Grid g5 = read_pgm(p5);
    CHECK(g5.height() == 2);
    CHECK(g5.width() == 2);
    CHECK(g5.at(0, 1) == doctest::Approx(64.0 / 255.0));

    const auto p2 = dir / "cats_p2.pgm";
    {
        std::ofstream os(p2);
        os << "P2\n# a comment\n2 2\n255\n0 64\n128 255\n";
    }
    Grid g2 = read_pgm(p2);
    for (std::size_t i = 0; i < g5.size(); ++i) CHECK(g2[i] == g5[i]);
    std::filesystem::remove(p5);
    std::filesystem::remove(p2);
}

TEST_CASE("malformed input is rejected with a byte offset") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto bad_magic = dir / "cats_bad_magic.pgm";
    {
        std::ofstream os(bad_magic, std::ios::binary);
        os << "P7\n2 2\n255\n....";
    }
    CHECK_THROWS_WITH_AS(read_pgm(bad_magic), doctest::Contains("byte"),
                         std::runtime_error);

    const auto truncated = dir / "cats_truncated.pgm";
    {
        std::ofstream os(truncated, std::ios::binary);
        os << "P5\n4 4\n255\n";
        os << "abc";  // 3 of 16 payload bytes
    }
    CHECK_THROWS_WITH_AS(read_pgm(truncated), doctest::Contains("truncated"),
                         std::runtime_error);
    std::filesystem::remove(bad_magic);
    std::filesystem::remove(truncated);
}

TEST_CASE("writer validates its input") {
    Grid multi(2, 2, 3, 0.5);
    const auto path = std::filesystem::temp_directory_path() / "cats_pgm_bad.pgm";
    CHECK_THROWS_AS(write_pgm(multi, path), std::invalid_argument);
    Grid out_of_range(2, 2, 1, 1.5);
    CHECK_THROWS_AS(write_pgm(out_of_range, path), std::invalid_argument);
}

}  // TEST_SUITE

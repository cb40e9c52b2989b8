#include <cstdio>
#include <string>

#include "core/errors.hpp"
#include "core/image.hpp"
#include "core/rng.hpp"
#include "core/util.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace fuseformer;
using testutil::TempDir;

TEST_CASE("P2 parse with header arithmetic") {
    const std::string p2 = "P2\n2 2\n255\n0 255 128 64\n";
    GrayImage img = parse_pgm(p2, "inline");
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.pixels[0] == 0.0);
    CHECK(img.pixels[1] == 1.0);
    CHECK(img.pixels[2] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(img.pixels[3] == doctest::Approx(64.0 / 255.0).epsilon(1e-15));
}

TEST_CASE("header comments are skipped") {
    TempDir tmp;
    const std::string p2 =
        "P2\n# a comment\n2 # trailing\n# another\n2\n255\n# before data\n10 20 30 40\n";
    const std::string path = tmp.file("comments.pgm");
    write_file_atomic(path, p2);
    GrayImage img = load_pgm(path);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.pixels[0] == doctest::Approx(10.0 / 255.0));
    CHECK(img.pixels[3] == doctest::Approx(40.0 / 255.0));
}

TEST_CASE("P5 round-trip is the identity for 8-bit data") {
    TempDir tmp;
    Rng rng(21);
    GrayImage img(9, 7);
    for (auto& p : img.pixels) p = static_cast<double>(rng.uniform_int(256)) / 255.0;
    const std::string path = tmp.file("rt.pgm");
    save_pgm(img, path, 255);
    GrayImage back = load_pgm(path);
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (size_t i = 0; i < img.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
}

TEST_CASE("16-bit round-trip stays within the quantization bound") {
    TempDir tmp;
    Rng rng(22);
    GrayImage img(8, 8);
    for (auto& p : img.pixels) p = rng.uniform();
    const std::string path = tmp.file("rt16.pgm");
    save_pgm(img, path, 65535);
    GrayImage back = load_pgm(path);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(std::fabs(back.pixels[i] - img.pixels[i]) <= 0.5 / 65535.0 + 1e-12);
}

TEST_CASE("golden bytes for a fixed 4x4 image") {
    // expected bytes assembled independently from the documented layout
    GrayImage img(4, 4);
    for (int i = 0; i < 16; ++i) img.pixels[static_cast<size_t>(i)] = static_cast<double>(i) / 15.0;
    const std::string got = encode_pgm(img, 255);
    std::string want = "P5\n4 4\n255\n";
    for (int i = 0; i < 16; ++i)
        want.push_back(static_cast<char>(std::lround(static_cast<double>(i) / 15.0 * 255.0)));
    CHECK(got == want);
}

TEST_CASE("all-zero image encodes to zero bytes") {
    GrayImage img(3, 2);
    const std::string bytes = encode_pgm(img, 255);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 6);
    for (size_t i = header.size(); i < bytes.size(); ++i) CHECK(bytes[i] == '\0');
}

TEST_CASE("malformed inputs are rejected") {
    CHECK_THROWS_AS(parse_pgm("P6\n1 1\n255\nx", "inline"), IoError);          // wrong magic
    CHECK_THROWS_AS(parse_pgm("P5\n2 2\n0\n", "inline"), IoError);             // zero maxval
    CHECK_THROWS_AS(parse_pgm("P5\n2 2\n255\nab", "inline"), IoError);         // truncated payload
    CHECK_THROWS_AS(parse_pgm("P5\nx 2\n255\nabcd", "inline"), IoError);       // bad dimension
    CHECK_THROWS_AS(parse_pgm("P2\n2 2\n255\n1 2 3", "inline"), IoError);      // short ASCII payload
    CHECK_THROWS_AS(parse_pgm("P5\n2 2\n70000\n....", "inline"), IoError);     // maxval too large
    CHECK_THROWS_AS(load_pgm("/nonexistent/file.pgm"), IoError);
    GrayImage img(2, 2);
    CHECK_THROWS_AS(save_pgm(img, "/nonexistent-dir/file.pgm", 255), IoError); // unwritable
    CHECK_THROWS_AS(encode_pgm(img, 128), IoError);                            // bad maxval
}

TEST_CASE("quantization error is bounded for random images") {
    Rng rng(23);
    for (int it = 0; it < 20; ++it) {
        GrayImage img(8, 8);
        for (auto& p : img.pixels) p = rng.uniform();
        GrayImage back = parse_pgm(encode_pgm(img, 255), "inline");
        for (size_t i = 0; i < img.size(); ++i)
            CHECK(std::fabs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
    }
}

#include <doctest.h>
#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "ntc/representation.hpp"

using namespace ntc;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// Minimal PNG reader for the writer's own output: single IDAT, filter 0,
// 8-bit grayscale. Independent decode path via zlib inflate.
struct DecodedPng {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};

DecodedPng decode_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() > 8);
    auto u32 = [&](std::size_t off) {
        return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
               (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
    };

    DecodedPng png;
    std::vector<std::uint8_t> idat;
    std::size_t off = 8;
    while (off + 8 <= bytes.size()) {
        const std::size_t len = u32(off);
        const std::string type(bytes.begin() + off + 4, bytes.begin() + off + 8);
        const std::size_t payload = off + 8;
        if (type == "IHDR") {
            png.width = u32(payload);
            png.height = u32(payload + 4);
            CHECK(bytes[payload + 8] == 8);  // bit depth
            CHECK(bytes[payload + 9] == 0);  // grayscale
        } else if (type == "IDAT") {
            idat.insert(idat.end(), bytes.begin() + payload, bytes.begin() + payload + len);
        }
        off = payload + len + 4;
    }
    std::vector<std::uint8_t> raw((png.width + 1) * png.height);
    uLongf raw_len = raw.size();
    REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) == Z_OK);
    REQUIRE(raw_len == raw.size());
    for (std::size_t y = 0; y < png.height; ++y) {
        CHECK(raw[y * (png.width + 1)] == 0);  // filter byte
        png.pixels.insert(png.pixels.end(), raw.begin() + y * (png.width + 1) + 1,
                          raw.begin() + (y + 1) * (png.width + 1));
    }
    return png;
}

}  // namespace

TEST_CASE("choose_factors picks the squarest pair with K >= W") {
    auto p = choose_factors(48);
    CHECK(p.k == 8);
    CHECK(p.w == 6);
    CHECK_FALSE(p.degenerate);

    p = choose_factors(16);
    CHECK(p.k == 4);
    CHECK(p.w == 4);

    // Brute-force oracle for 36: scan every factor pair, keep K>=W minimizing K-W.
    std::size_t best_k = 36, best_w = 1;
    for (std::size_t w = 1; w * w <= 36; ++w)
        if (36 % w == 0 && (36 / w) - w < best_k - best_w) {
            best_k = 36 / w;
            best_w = w;
        }
    p = choose_factors(36);
    CHECK(p.k == best_k);
    CHECK(p.w == best_w);
}

TEST_CASE("choose_factors flags prime feature counts as degenerate strips") {
    auto p = choose_factors(47);
    CHECK(p.k == 47);
    CHECK(p.w == 1);
    CHECK(p.degenerate);
    CHECK_FALSE(choose_factors(2).degenerate);
    CHECK_FALSE(choose_factors(3).degenerate);
    CHECK_THROWS_AS(choose_factors(0), ArgumentError);
}

TEST_CASE("choose_factors product property over [1, 4096]") {
    for (std::size_t f = 1; f <= 4096; ++f) {
        auto p = choose_factors(f);
        CHECK(p.k * p.w == f);
        CHECK(p.k >= p.w);
    }
}

TEST_CASE("reshape_flow is row-major and lossless") {
    FlowImage img = reshape_flow({1, 2, 3, 4, 5, 6}, 2, 3);
    CHECK(img.at(0, 0) == 1);
    CHECK(img.at(0, 2) == 3);
    CHECK(img.at(1, 0) == 4);
    CHECK(img.at(1, 2) == 6);

    CHECK_THROWS_AS(reshape_flow(std::vector<float>(48), 7, 6), ShapeError);

    std::mt19937 rng(5);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> x(48);
        for (auto& v : x) v = dist(rng);
        FlowImage im = reshape_flow(x, 8, 6);
        std::vector<float> flat;
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t c = 0; c < 6; ++c) flat.push_back(im.at(r, c));
        CHECK(flat == x);  // bitwise round trip
    }
}

TEST_CASE("pack_video stacks frames in order") {
    std::vector<FlowRecord> recs(3);
    for (int i = 0; i < 3; ++i) {
        recs[std::size_t(i)].features.assign(48, float(i));
        recs[std::size_t(i)].label_id = i;
    }
    FlowVideo v = pack_video(recs, 8, 6);
    CHECK(v.n == 3);
    CHECK(v.k == 8);
    CHECK(v.w == 6);
    CHECK(v.frames.size() == 3 * 48);
    CHECK(v.frames[2 * 48] == 2.0f);

    FlowVideo empty = pack_video({}, 8, 6);
    CHECK(empty.n == 0);
    CHECK(empty.frames.empty());

    recs[1].features.resize(47);
    try {
        pack_video(recs, 8, 6);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("record 1") != std::string::npos);
    }
}

TEST_CASE("pack_video frames equal per-record reshapes") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    std::vector<FlowRecord> recs(500);
    for (auto& r : recs) {
        r.features.resize(48);
        for (auto& v : r.features) v = dist(rng);
    }
    FlowVideo video = pack_video(recs, 8, 6);
    CHECK(video.n == 500);
    FlowImage frame17 = reshape_flow(recs[17].features, 8, 6);
    for (std::size_t i = 0; i < 48; ++i) CHECK(video.frames[17 * 48 + i] == frame17.pixels[i]);

    // Permuting records permutes frames identically.
    std::vector<FlowRecord> reversed(recs.rbegin(), recs.rend());
    FlowVideo rv = pack_video(reversed, 8, 6);
    for (std::size_t i = 0; i < 48; ++i) CHECK(rv.frames[i] == video.frames[499 * 48 + i]);
}

TEST_CASE("export_png gray levels") {
    FlowImage img;
    img.k = 8;
    img.w = 6;

    img.pixels.assign(48, 0.0f);
    const std::string black = temp_path("flow_black.png");
    export_png(img, black);
    DecodedPng d = decode_png(black);
    CHECK(d.width == 6);
    CHECK(d.height == 8);
    for (auto p : d.pixels) CHECK(p == 0);

    img.pixels.assign(48, 1.0f);
    const std::string white = temp_path("flow_white.png");
    export_png(img, white);
    for (auto p : decode_png(white).pixels) CHECK(p == 255);

    img.pixels.assign(48, 0.5f);
    const std::string gray = temp_path("flow_gray.png");
    export_png(img, gray);
    for (auto p : decode_png(gray).pixels) CHECK(p == 128);  // round half up

    CHECK_THROWS_AS(export_png(img, "/nonexistent-dir/x.png"), IoError);
}

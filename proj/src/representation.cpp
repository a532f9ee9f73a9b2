#include "ntc/representation.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ntc/errors.hpp"

namespace ntc {

FactorPair choose_factors(std::size_t feature_count) {
    if (feature_count < 1) throw ArgumentError("choose_factors: feature count must be >= 1");
    for (std::size_t w = std::size_t(std::sqrt(double(feature_count))); w >= 1; --w) {
        if (feature_count % w == 0) {
            FactorPair p;
            p.k = feature_count / w;
            p.w = w;
            p.degenerate = (p.w == 1 && feature_count > 3);
            return p;
        }
    }
    return {feature_count, 1, feature_count > 3};
}

FlowImage reshape_flow(const std::vector<float>& x, std::size_t k, std::size_t w) {
    if (k * w != x.size())
        throw ShapeError("reshape_flow: " + std::to_string(k) + "x" + std::to_string(w) + " = " +
                         std::to_string(k * w) + " cells cannot hold " +
                         std::to_string(x.size()) + " features");
    FlowImage img;
    img.k = k;
    img.w = w;
    img.pixels = x;  // row-major fill is exactly the flat layout
    return img;
}

FlowVideo pack_video(const std::vector<FlowRecord>& records, std::size_t k, std::size_t w) {
    FlowVideo video;
    video.n = records.size();
    video.k = k;
    video.w = w;
    video.frames.reserve(records.size() * k * w);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].features.size() != k * w)
            throw ShapeError("pack_video: record " + std::to_string(i) + " has " +
                             std::to_string(records[i].features.size()) + " features, expected " +
                             std::to_string(k * w));
        video.frames.insert(video.frames.end(), records[i].features.begin(),
                            records[i].features.end());
    }
    return video;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    put_u32(out, std::uint32_t(payload.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc =
        crc32(0, reinterpret_cast<const Bytef*>(out.data() + start), uInt(out.size() - start));
    put_u32(out, std::uint32_t(crc));
}

}  // namespace

void export_png(const FlowImage& image, const std::string& path) {
    const std::size_t h = image.k, w = image.w;

    // One filter byte (0 = none) per scanline, then the 8-bit gray pixels.
    std::vector<std::uint8_t> raw((w + 1) * h);
    for (std::size_t y = 0; y < h; ++y) {
        raw[y * (w + 1)] = 0;
        for (std::size_t x = 0; x < w; ++x)
            raw[y * (w + 1) + 1 + x] =
                std::uint8_t(std::floor(double(image.at(y, x)) * 255.0 + 0.5));
    }

    uLongf zlen = compressBound(uLong(raw.size()));
    std::vector<std::uint8_t> zdata(zlen);
    if (compress(zdata.data(), &zlen, raw.data(), uLong(raw.size())) != Z_OK)
        throw IoError("export_png: deflate failed for " + path);
    zdata.resize(zlen);

    std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, std::uint32_t(w));
    put_u32(ihdr, std::uint32_t(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", zdata);
    put_chunk(png, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("export_png: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(png.data()), std::streamsize(png.size()));
    if (!out) throw IoError("export_png: write failed for " + path);
}

}  // namespace ntc

#pragma once

#include <string>
#include <vector>

#include "ntc/flowdata.hpp"

namespace ntc {

// K x W grayscale image form of one flow, row-major, values in [0,1].
struct FlowImage {
    std::size_t k = 0;
    std::size_t w = 0;
    std::vector<float> pixels;  // k * w, row-major

    float at(std::size_t row, std::size_t col) const { return pixels[row * w + col]; }
};

// Batch of flow images as a (N, 1, K, W) grayscale frame stack.
struct FlowVideo {
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t w = 0;
    std::vector<float> frames;  // n * 1 * k * w
};

struct FactorPair {
    std::size_t k = 0;
    std::size_t w = 0;
    bool degenerate = false;  // prime feature count forced a (F, 1) strip
};

// Factor pair K >= W of feature_count minimizing K - W.
FactorPair choose_factors(std::size_t feature_count);

FlowImage reshape_flow(const std::vector<float>& x, std::size_t k, std::size_t w);

FlowVideo pack_video(const std::vector<FlowRecord>& records, std::size_t k, std::size_t w);

// 8-bit grayscale PNG of size W x K; pixel = round-half-up(value * 255).
void export_png(const FlowImage& image, const std::string& path);

}  // namespace ntc

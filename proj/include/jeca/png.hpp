#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace jeca::png {

// Minimal PNG codec: 8-bit grayscale (color type 0) and RGB (color type 2).
// The encoder emits stored deflate blocks; the decoder handles stored, fixed
// and dynamic Huffman blocks plus all five scanline filters, so files from
// ordinary encoders load too.

struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<uint8_t> pixels;  // row-major, interleaved
};

Raster read_png(const std::string& path);
void write_png(const std::string& path, const Raster& raster);

}  // namespace jeca::png

#include "jeca/morphology.hpp"

#include <stdexcept>

namespace jeca {

namespace {

void check_kernel(int kernel) {
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("morphology: kernel must be odd and positive");
}

}  // namespace

TamperMask dilate(const TamperMask& mask, int kernel) {
    check_kernel(kernel);
    const int r = kernel / 2;
    TamperMask out(mask.height, mask.width, mask.source);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            uint8_t hit = 0;
            for (int dy = -r; dy <= r && !hit; ++dy) {
                int yy = y + dy;
                if (yy < 0 || yy >= mask.height) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    int xx = x + dx;
                    if (xx < 0 || xx >= mask.width) continue;
                    if (mask.at(yy, xx)) {
                        hit = 1;
                        break;
                    }
                }
            }
            out.at(y, x) = hit;
        }
    }
    return out;
}

TamperMask erode(const TamperMask& mask, int kernel) {
    check_kernel(kernel);
    const int r = kernel / 2;
    TamperMask out(mask.height, mask.width, mask.source);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            uint8_t all = 1;
            for (int dy = -r; dy <= r && all; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    // Out-of-image neighborhood counts as background.
                    if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width || !mask.at(yy, xx)) {
                        all = 0;
                        break;
                    }
                }
            }
            out.at(y, x) = all;
        }
    }
    return out;
}

TamperMask morphological_close(const TamperMask& mask, int kernel) {
    return erode(dilate(mask, kernel), kernel);
}

TamperMask boundary_band(const TamperMask& mask, int kernel, int iterations) {
    TamperMask grown = mask;
    for (int i = 0; i < iterations; ++i) grown = dilate(grown, kernel);
    TamperMask band(mask.height, mask.width, mask.source);
    for (size_t i = 0; i < band.v.size(); ++i) band.v[i] = grown.v[i] && !mask.v[i] ? 1 : 0;
    return band;
}

}  // namespace jeca

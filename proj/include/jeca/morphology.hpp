#pragma once

#include "jeca/core.hpp"

namespace jeca {

// Binary morphology with square structuring elements (odd kernel sizes).
TamperMask dilate(const TamperMask& mask, int kernel);
TamperMask erode(const TamperMask& mask, int kernel);
TamperMask morphological_close(const TamperMask& mask, int kernel);

// dilate^iterations(mask) - mask; the region L_hide targets. A single 5x5
// dilation widens by 2 px, so 5 iterations realize the 10 px band.
TamperMask boundary_band(const TamperMask& mask, int kernel = 5, int iterations = 5);

}  // namespace jeca

#pragma once

#include <string>

#include "xvseg/image.hpp"

namespace xvseg {

// Mask raster contract: single-channel 8-bit PNG, 0 = background,
// 255 = foreground. Round trips are lossless bit-for-bit.
//
// Failure modes are distinct: IoError (unreadable/unwritable path),
// FormatError (not a PNG / corrupt stream), ValueError ("non-binary mask"
// for multi-channel input or gray values other than {0,255}).
MaskGrid read_mask(const std::string& path);
void write_mask(const MaskGrid& mask, const std::string& path);

// Images are 8-bit RGB PNG, normalized to [0,1] on load (gray is expanded,
// alpha is dropped). Writing quantizes with round(v*255).
Image read_image(const std::string& path);
void write_image(const Image& image, const std::string& path);

}  // namespace xvseg

#pragma once

#include "xvseg/image.hpp"

namespace xvseg {

// Alpha-blends a tint over the mask's foreground.
Image overlay_mask(const Image& im, const MaskGrid& mask, double r, double g, double b,
                   double alpha = 0.45);

// Draws filled discs at the given points.
void draw_points(Image& im, const PointSet& pts, double r, double g, double b,
                 int radius = 2);

}  // namespace xvseg

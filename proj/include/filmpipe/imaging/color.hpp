#pragma once

#include "filmpipe/core/tensor.hpp"

namespace filmpipe::imaging {

/// sRGB (D65, [0,1]) to CIELAB. Channel 0 is L in [0,100]; a and b are unbounded.
ImageTensor rgb_to_lab(const ImageTensor& rgb);

/// Inverse of rgb_to_lab. Output is not clipped; out-of-gamut colors leave [0,1].
ImageTensor lab_to_rgb(const ImageTensor& lab);

/// Rec.601 luma weights; used only to feed the keypoint detector.
ImageTensor rgb_to_gray(const ImageTensor& rgb);

namespace color {

double srgb_to_linear(double c);
double linear_to_srgb(double c);

}  // namespace color

}  // namespace filmpipe::imaging

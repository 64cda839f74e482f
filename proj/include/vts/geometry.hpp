#pragma once

#include <array>

#include "vts/graph.hpp"
#include "vts/tensor.hpp"

namespace vts::geom {

// Axis-aligned attention window. `size` is the window extent as a fraction
// of the frame per axis, in (0, 1] (1 covers the whole frame). `pos` is the
// window center in normalized frame coordinates [-1, 1], where -1 maps to
// the center of the first pixel and +1 to the center of the last (this makes
// the identity transform exact). Component order is (x, y).
struct BoxParams {
  std::array<double, 2> size;
  std::array<double, 2> pos;
};

// Crop-and-resize with bilinear sampling onto a g x g glimpse. Sample points
// outside the frame read as zero.
Tensor st_extract(const Tensor& frame, const BoxParams& box, int g);

// Inverse warp: the glimpse occupies the box window on an otherwise-zero
// H x W canvas.
Tensor st_paste(const Tensor& glimpse, const BoxParams& box, int h, int w);

// Differentiable versions. `size` and `pos` are 2-vectors (x, y) on the
// graph; gradients flow into the frame/glimpse and into both box parameters.
ad::Var st_extract(ad::Var frame, ad::Var size, ad::Var pos, int g);
ad::Var st_paste(ad::Var glimpse, ad::Var size, ad::Var pos, int h, int w);

// Position-regularization mask: isotropic zero-mean Gaussian with scale
// sigma_k evaluated on a uniform g x g grid over [-1,1]^2, divided by its
// maximum, then flattened as (k + p) / (1 + p). Values lie in (0, 1] with
// the max exactly 1.
Tensor regularization_kernel(int g, double sigma_k, double flatten_p);

}  // namespace vts::geom

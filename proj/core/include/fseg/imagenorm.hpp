#pragma once

#include "fseg/image.hpp"

namespace fseg {

/// Default side of the square background-estimation window.
inline constexpr int kDefaultNormWindow = 69;

/// sRGB in [0,1] (D65) to CIE 1976 L*u*v*. L lands in [0,100].
Image rgb_to_luv(const Image& rgb);

/// Inverse of rgb_to_luv; out-of-gamut results are clamped to [0,1].
Image luv_to_rgb(const Image& luv);

/// Flattens slow illumination changes in a single channel.
///
/// The background at each effective pixel is the mean of the channel over the
/// window x window neighbourhood intersected with the mask and the image
/// bounds. Effective pixels become value - background + masked mean; all other
/// pixels pass through unchanged. `window` must be odd, at least 3 and at most
/// twice the shorter image side.
Image normalize_background(const Image& channel, const Mask& mask, int window);

/// Masked z-score: zero mean and unit population deviation over the mask,
/// zero elsewhere. Throws DegenerateInput for fewer than two effective points
/// or zero variance.
Image standardize_channel(const Image& channel, const Mask& mask);

/// Background normalization of the luminance of a colour fundus image. Pixels
/// outside the mask are returned untouched.
Image normalize_fundus(const Image& rgb, const Mask& mask, int window = kDefaultNormWindow);

}  // namespace fseg

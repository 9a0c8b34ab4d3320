#pragma once

#include "xvseg/geometry.hpp"
#include "xvseg/image.hpp"
#include "xvseg/rng.hpp"
#include "xvseg/tracker.hpp"

namespace xvseg {

// Two augmentation families: `adaptive` transforms are gentle enough that a
// tracker can still map points across views (mild scale/rotation/crop);
// `non_adaptive` transforms break cross-view alignment on purpose (large
// rotations, flips), so prompts are synthesized from perturbed ground truth.
enum class AugFamily { adaptive, non_adaptive };

struct AugmentedPair {
  Image src, tgt;
  MaskGrid m_src, m_tgt;
  Affine2d transform;  // source pixel -> target pixel
  AugFamily family = AugFamily::adaptive;
};

// Inverse-warp I'(q) = I(T^-1 q), bilinear with edge clamping.
Image warp_image(const Image& im, const Affine2d& fwd);
// Same warp rule on the mask, thresholded at 0.5; out-of-frame = background.
MaskGrid warp_mask(const MaskGrid& m, const Affine2d& fwd);

// Generates the augmented view and the exactly-transformed mask. Pairs whose
// transformed mask becomes empty are resampled; after `kAugmentRetries`
// failures this throws ValueError("object lost under augmentation").
inline constexpr int kAugmentRetries = 20;
AugmentedPair augment(const Image& image, const MaskGrid& mask, AugFamily family, Rng& rng);

// Prompt synthesis per family. Adaptive pairs are tracked; non-adaptive
// pairs transform the source points exactly and add Gaussian noise with
// sigma = noise_frac * image diagonal (clamped in bounds).
inline constexpr double kPromptNoiseFrac = 0.02;
std::pair<PointSet, PointSet> synthesize_prompts(const AugmentedPair& pair,
                                                 const Tracker& adaptive_tracker,
                                                 const RunConfig& cfg, Rng& rng,
                                                 double noise_frac = kPromptNoiseFrac);

}  // namespace xvseg

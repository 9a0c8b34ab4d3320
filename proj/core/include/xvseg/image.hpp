#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xvseg/tensor.hpp"

namespace xvseg {

enum class FrameId { source, target };

// RGB image, values in [0,1], channels-last raster.
struct Image {
  int h = 0, w = 0;
  std::vector<double> rgb;  // h*w*3

  static Image filled(int h, int w, double r, double g, double b);
  double& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  double at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  bool valid() const;  // finite, in [0,1]
};

// Single-channel mask, values in [0,1]; `binary` marks {0,1}-valued masks.
struct MaskGrid {
  int h = 0, w = 0;
  std::vector<double> v;  // h*w
  bool binary = false;

  static MaskGrid zeros(int h, int w, bool binary = true);
  static MaskGrid from_values(int h, int w, std::vector<double> vals);  // infers binary

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  std::size_t foreground_count() const;
  bool check_binary() const;
  bool empty_mask() const { return foreground_count() == 0; }
  Tensor as_grid_tensor() const;  // (h, w, 1)
  static MaskGrid from_grid_tensor(const Tensor& t, bool binary);
};

struct Point2d {
  double x = 0, y = 0;
};

// Ordered point list in pixel coordinates of one frame; index order is
// meaningful (source index i corresponds to target index i).
struct PointSet {
  std::vector<Point2d> pts;
  FrameId frame = FrameId::source;

  std::size_t size() const { return pts.size(); }
  bool in_bounds(int w, int h) const;
};

// All run-level knobs. Defaults are the full-scale settings; toy() is the
// small profile used throughout the tests.
struct RunConfig {
  int patch_size = 14;
  int image_size = 518;
  int channels = 64;
  int k_points = 5;
  int fusion_ratio = 7;
  int decoder_blocks = 2;
  int refine_iters = 2;
  int attn_heads = 8;
  int encoder_blocks = 4;  // alternating frame-wise / global

  double focal_weight = 20.0;
  double dice_weight = 1.0;

  double lr = 5e-5;
  double weight_decay = 1e-4;
  int epochs = 12;
  std::vector<int> lr_decay_epochs{8, 11};
  double lr_decay_factor = 0.1;
  double clip_norm = 1.0;
  int batch_size = 8;

  std::uint64_t seed = 0;

  // Component toggles (ablation axes).
  bool use_bottleneck_fusion = true;
  bool use_point_guidance = true;
  bool use_refinement = true;

  // Resolved open readings, each behind a flag.
  bool separate_refine_weights = false;   // own weights for the refinement decoder
  bool null_mask_embed_target = false;    // learned null-mask embedding added to F_t
  bool prompts_from_injected = false;     // sample point features from F_s' instead of F_s
  bool logit_upsample = false;            // upsample logits instead of probabilities

  std::string tracker = "ground_truth";   // ground_truth | feature_correlation
  std::string encoder_provider = "toy";   // toy | external
  std::string external_dir;               // for encoder_provider == external

  int token_size() const { return image_size / patch_size; }
  int feat_size() const { return image_size / 2; }
  int bottleneck_size() const { return feat_size() / fusion_ratio; }
  int query_len() const { return use_point_guidance ? 3 * k_points + 1 : 1; }

  void validate() const;  // throws ConfigError on violated invariants

  static RunConfig toy();

  std::map<std::string, std::string> to_kv() const;
  static RunConfig from_kv(const std::map<std::string, std::string>& kv);
};

}  // namespace xvseg

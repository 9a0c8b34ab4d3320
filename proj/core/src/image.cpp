#include "xvseg/image.hpp"

#include <cmath>
#include <sstream>

#include "xvseg/errors.hpp"

namespace xvseg {

Image Image::filled(int h, int w, double r, double g, double b) {
  Image im;
  im.h = h;
  im.w = w;
  im.rgb.resize(static_cast<size_t>(h) * w * 3);
  for (size_t i = 0; i < im.rgb.size(); i += 3) {
    im.rgb[i] = r;
    im.rgb[i + 1] = g;
    im.rgb[i + 2] = b;
  }
  return im;
}

bool Image::valid() const {
  if (h <= 0 || w <= 0 || rgb.size() != static_cast<size_t>(h) * w * 3) return false;
  for (double v : rgb)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
  return true;
}

MaskGrid MaskGrid::zeros(int h, int w, bool binary) {
  MaskGrid m;
  m.h = h;
  m.w = w;
  m.v.assign(static_cast<size_t>(h) * w, 0.0);
  m.binary = binary;
  return m;
}

MaskGrid MaskGrid::from_values(int h, int w, std::vector<double> vals) {
  if (vals.size() != static_cast<size_t>(h) * w)
    throw ShapeError("MaskGrid: value count != h*w");
  MaskGrid m;
  m.h = h;
  m.w = w;
  m.v = std::move(vals);
  for (double x : m.v)
    if (!std::isfinite(x) || x < 0.0 || x > 1.0)
      throw ValueError("MaskGrid: values must lie in [0,1]");
  m.binary = m.check_binary();
  return m;
}

std::size_t MaskGrid::foreground_count() const {
  std::size_t n = 0;
  for (double x : v)
    if (x >= 0.5) ++n;
  return n;
}

bool MaskGrid::check_binary() const {
  for (double x : v)
    if (x != 0.0 && x != 1.0) return false;
  return true;
}

Tensor MaskGrid::as_grid_tensor() const {
  Tensor t = Tensor::grid(h, w, 1);
  for (int i = 0; i < h * w; ++i) t.m(i, 0) = v[i];
  return t;
}

MaskGrid MaskGrid::from_grid_tensor(const Tensor& t, bool binary) {
  MaskGrid m;
  m.h = t.h;
  m.w = t.w;
  m.binary = binary;
  m.v.resize(static_cast<size_t>(t.h) * t.w);
  for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = t.m(static_cast<Eigen::Index>(i), 0);
  return m;
}

bool PointSet::in_bounds(int w, int h) const {
  for (const auto& p : pts)
    if (p.x < 0 || p.y < 0 || p.x >= w || p.y >= h) return false;
  return true;
}

void RunConfig::validate() const {
  if (patch_size <= 0 || image_size <= 0) throw ConfigError("sizes must be positive");
  if (image_size % patch_size != 0)
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " not divisible by patch_size " + std::to_string(patch_size));
  if (image_size % 2 != 0) throw ConfigError("image_size must be even");
  if (feat_size() % fusion_ratio != 0)
    throw ConfigError("feature resolution " + std::to_string(feat_size()) +
                      " not divisible by fusion_ratio " + std::to_string(fusion_ratio));
  if (k_points < 1) throw ConfigError("k_points must be >= 1");
  if (decoder_blocks < 1) throw ConfigError("decoder_blocks must be >= 1");
  if (refine_iters < 0) throw ConfigError("refine_iters must be >= 0");
  if (channels % 2 != 0) throw ConfigError("channels must be even");
  if (channels % attn_heads != 0) throw ConfigError("channels not divisible by attn_heads");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (tracker != "ground_truth" && tracker != "feature_correlation" && tracker != "external")
    throw ConfigError("unknown tracker: " + tracker);
  if (encoder_provider != "toy" && encoder_provider != "external")
    throw ConfigError("unknown encoder_provider: " + encoder_provider);
}

RunConfig RunConfig::toy() {
  RunConfig c;
  c.image_size = 70;
  c.channels = 64;
  c.attn_heads = 1;
  return c;
}

namespace {
std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace

std::map<std::string, std::string> RunConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["patch_size"] = std::to_string(patch_size);
  kv["image_size"] = std::to_string(image_size);
  kv["channels"] = std::to_string(channels);
  kv["k_points"] = std::to_string(k_points);
  kv["fusion_ratio"] = std::to_string(fusion_ratio);
  kv["decoder_blocks"] = std::to_string(decoder_blocks);
  kv["refine_iters"] = std::to_string(refine_iters);
  kv["attn_heads"] = std::to_string(attn_heads);
  kv["encoder_blocks"] = std::to_string(encoder_blocks);
  kv["focal_weight"] = fmt_double(focal_weight);
  kv["dice_weight"] = fmt_double(dice_weight);
  kv["lr"] = fmt_double(lr);
  kv["weight_decay"] = fmt_double(weight_decay);
  kv["epochs"] = std::to_string(epochs);
  {
    std::string s;
    for (size_t i = 0; i < lr_decay_epochs.size(); ++i)
      s += (i ? "," : "") + std::to_string(lr_decay_epochs[i]);
    kv["lr_decay_epochs"] = s;
  }
  kv["lr_decay_factor"] = fmt_double(lr_decay_factor);
  kv["clip_norm"] = fmt_double(clip_norm);
  kv["batch_size"] = std::to_string(batch_size);
  kv["seed"] = std::to_string(seed);
  kv["use_bottleneck_fusion"] = use_bottleneck_fusion ? "1" : "0";
  kv["use_point_guidance"] = use_point_guidance ? "1" : "0";
  kv["use_refinement"] = use_refinement ? "1" : "0";
  kv["separate_refine_weights"] = separate_refine_weights ? "1" : "0";
  kv["null_mask_embed_target"] = null_mask_embed_target ? "1" : "0";
  kv["prompts_from_injected"] = prompts_from_injected ? "1" : "0";
  kv["logit_upsample"] = logit_upsample ? "1" : "0";
  kv["tracker"] = tracker;
  kv["encoder_provider"] = encoder_provider;
  kv["external_dir"] = external_dir;
  return kv;
}

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  auto geti = [&kv](const char* k, int d) {
    auto it = kv.find(k);
    return it == kv.end() ? d : std::stoi(it->second);
  };
  auto getd = [&kv](const char* k, double d) {
    auto it = kv.find(k);
    return it == kv.end() ? d : std::stod(it->second);
  };
  auto getb = [&kv](const char* k, bool d) {
    auto it = kv.find(k);
    return it == kv.end() ? d : (it->second == "1" || it->second == "true");
  };
  auto gets = [&kv](const char* k, const std::string& d) {
    auto it = kv.find(k);
    return it == kv.end() ? d : it->second;
  };
  c.patch_size = geti("patch_size", c.patch_size);
  c.image_size = geti("image_size", c.image_size);
  c.channels = geti("channels", c.channels);
  c.k_points = geti("k_points", c.k_points);
  c.fusion_ratio = geti("fusion_ratio", c.fusion_ratio);
  c.decoder_blocks = geti("decoder_blocks", c.decoder_blocks);
  c.refine_iters = geti("refine_iters", c.refine_iters);
  c.attn_heads = geti("attn_heads", c.attn_heads);
  c.encoder_blocks = geti("encoder_blocks", c.encoder_blocks);
  c.focal_weight = getd("focal_weight", c.focal_weight);
  c.dice_weight = getd("dice_weight", c.dice_weight);
  c.lr = getd("lr", c.lr);
  c.weight_decay = getd("weight_decay", c.weight_decay);
  c.epochs = geti("epochs", c.epochs);
  if (auto it = kv.find("lr_decay_epochs"); it != kv.end()) {
    c.lr_decay_epochs.clear();
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) c.lr_decay_epochs.push_back(std::stoi(tok));
  }
  c.lr_decay_factor = getd("lr_decay_factor", c.lr_decay_factor);
  c.clip_norm = getd("clip_norm", c.clip_norm);
  c.batch_size = geti("batch_size", c.batch_size);
  if (auto it = kv.find("seed"); it != kv.end()) c.seed = std::stoull(it->second);
  c.use_bottleneck_fusion = getb("use_bottleneck_fusion", c.use_bottleneck_fusion);
  c.use_point_guidance = getb("use_point_guidance", c.use_point_guidance);
  c.use_refinement = getb("use_refinement", c.use_refinement);
  c.separate_refine_weights = getb("separate_refine_weights", c.separate_refine_weights);
  c.null_mask_embed_target = getb("null_mask_embed_target", c.null_mask_embed_target);
  c.prompts_from_injected = getb("prompts_from_injected", c.prompts_from_injected);
  c.logit_upsample = getb("logit_upsample", c.logit_upsample);
  c.tracker = gets("tracker", c.tracker);
  c.encoder_provider = gets("encoder_provider", c.encoder_provider);
  c.external_dir = gets("external_dir", c.external_dir);
  return c;
}

}  // namespace xvseg

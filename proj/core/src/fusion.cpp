#include "xvseg/fusion.hpp"

#include "xvseg/errors.hpp"

namespace xvseg {

MaskEmbedP make_mask_embed(ParamStore& ps, const std::string& prefix,
                           const std::string& group, int channels, Rng& rng) {
  MaskEmbedP p;
  p.conv_w = &ps.add(prefix + ".conv.w", group, randn_init(rng, 16, channels, 0.25));
  p.conv_b = &ps.add(prefix + ".conv.b", group, zeros_init(1, channels));
  p.proj = make_linear(ps, prefix + ".proj", group, channels, channels, rng);
  return p;
}

FusionBlockP make_fusion_block(ParamStore& ps, const std::string& prefix,
                               const std::string& group, const RunConfig& cfg, Rng& rng) {
  const int c = cfg.channels;
  const int nb = cfg.bottleneck_size();
  FusionBlockP p;
  p.pos_embed = &ps.add(prefix + ".pos_embed", group, randn_init(rng, nb * nb, c, 0.02));
  p.frame_embed = &ps.add(prefix + ".frame_embed", group, randn_init(rng, 2, c, 0.02));
  p.ln1 = make_layer_norm(ps, prefix + ".ln1", group, c);
  p.attn = make_attn(ps, prefix + ".attn", group, c, rng);
  p.ln2 = make_layer_norm(ps, prefix + ".ln2", group, c);
  p.ffn = make_ffn(ps, prefix + ".ffn", group, c, 4 * c, rng);
  return p;
}

Value embed_mask(Tape& tp, const MaskEmbedP& p, const Value& mask_grid, const RunConfig& cfg) {
  const Tensor& m = mask_grid.t();
  if (!m.is_grid() || m.cols() != 1)
    throw ShapeError("embed_mask: expected a (h, w, 1) mask grid");
  if (m.h != cfg.image_size || m.w != cfg.image_size)
    throw ShapeError("embed_mask: mask is " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                     ", config expects " + std::to_string(cfg.image_size) + "x" +
                     std::to_string(cfg.image_size));
  Value conv = conv2d(mask_grid, tp.param(*p.conv_w), tp.param(*p.conv_b),
                      ops::Conv2dSpec{4, 2, 1});
  return linear(tp, p.proj, conv);
}

Value embed_mask(Tape& tp, const MaskEmbedP& p, const MaskGrid& mask, const RunConfig& cfg) {
  return embed_mask(tp, p, tp.constant(mask.as_grid_tensor()), cfg);
}

Value inject_mask(const Value& features, const Value& mask_embedding) {
  const Tensor& f = features.t();
  const Tensor& e = mask_embedding.t();
  if (f.h != e.h || f.w != e.w || f.cols() != e.cols())
    throw ShapeError("inject_mask: feature " + f.shape_str() + " vs embedding " +
                     e.shape_str());
  return add(features, mask_embedding);
}

std::pair<Value, Value> bottleneck_fuse(Tape& tp, const FusionBlockP& p, const Value& f_s,
                                        const Value& f_t, const RunConfig& cfg) {
  const Tensor& fs = f_s.t();
  const Tensor& ft = f_t.t();
  if (!fs.is_grid() || !ft.is_grid())
    throw ShapeError("bottleneck_fuse: inputs must be spatial grids");
  if (fs.h % cfg.fusion_ratio != 0 || fs.w % cfg.fusion_ratio != 0)
    throw ShapeError("bottleneck_fuse: resolution " + fs.shape_str() +
                     " not divisible by ratio " + std::to_string(cfg.fusion_ratio));
  const int h = fs.h, w = fs.w;
  const int r = cfg.fusion_ratio;
  const int nb_tokens = (h / r) * (w / r);

  Value pos = tp.param(*p.pos_embed);
  Value frame = tp.param(*p.frame_embed);
  Value ds = add(avg_pool(f_s, r), pos);
  Value dt = add(avg_pool(f_t, r), pos);
  ds = add_bias(ds, slice_rows(frame, 0, 1));
  dt = add_bias(dt, slice_rows(frame, 1, 1));

  // Joint sequence is [source tokens, target tokens]; splitting is exact.
  Value joint = concat_rows({ds, dt});
  Value n1 = layer_norm(tp, p.ln1, joint);
  joint = add(joint, mha(tp, p.attn, n1, n1, n1, cfg.attn_heads));
  joint = add(joint, ffn(tp, p.ffn, layer_norm(tp, p.ln2, joint)));

  Value us = tag_grid(slice_rows(joint, 0, nb_tokens), h / r, w / r);
  Value ut = tag_grid(slice_rows(joint, nb_tokens, nb_tokens), h / r, w / r);
  return {bilinear_resize(us, h, w), bilinear_resize(ut, h, w)};
}

}  // namespace xvseg

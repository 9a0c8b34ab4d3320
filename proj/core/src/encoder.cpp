#include "xvseg/encoder.hpp"

#include <filesystem>

#include "xvseg/errors.hpp"
#include "xvseg/tensor_store.hpp"

namespace xvseg {

EncoderParams make_encoder_params(ParamStore& ps, const RunConfig& cfg, Rng& rng) {
  const std::string g = "encoder";
  const int c = cfg.channels;
  const int patch_dim = cfg.patch_size * cfg.patch_size * 3;
  const int tokens = cfg.token_size() * cfg.token_size();
  EncoderParams p;
  // Frozen throughout: trainable = false on every tensor.
  p.stem.w = &ps.add("enc.stem.w", g, randn_init(rng, patch_dim, c, 1.0 / std::sqrt(patch_dim)), false);
  p.stem.b = &ps.add("enc.stem.b", g, zeros_init(1, c), false);
  p.pos_embed = &ps.add("enc.pos_embed", g, randn_init(rng, tokens, c, 0.02), false);
  p.frame_embed = &ps.add("enc.frame_embed", g, randn_init(rng, 2, c, 0.02), false);
  for (int i = 0; i < cfg.encoder_blocks; ++i) {
    EncoderBlockP b;
    std::string pre = "enc.block" + std::to_string(i);
    b.ln1.gamma = &ps.add(pre + ".ln1.gamma", g, ones_init(1, c), false);
    b.ln1.beta = &ps.add(pre + ".ln1.beta", g, zeros_init(1, c), false);
    b.attn.q.w = &ps.add(pre + ".attn.q.w", g, randn_init(rng, c, c, 1.0 / std::sqrt(c)), false);
    b.attn.q.b = &ps.add(pre + ".attn.q.b", g, zeros_init(1, c), false);
    b.attn.k.w = &ps.add(pre + ".attn.k.w", g, randn_init(rng, c, c, 1.0 / std::sqrt(c)), false);
    b.attn.k.b = &ps.add(pre + ".attn.k.b", g, zeros_init(1, c), false);
    b.attn.v.w = &ps.add(pre + ".attn.v.w", g, randn_init(rng, c, c, 0.02), false);
    b.attn.v.b = &ps.add(pre + ".attn.v.b", g, zeros_init(1, c), false);
    b.attn.o.w = &ps.add(pre + ".attn.o.w", g, randn_init(rng, c, c, 0.02), false);
    b.attn.o.b = &ps.add(pre + ".attn.o.b", g, zeros_init(1, c), false);
    b.ln2.gamma = &ps.add(pre + ".ln2.gamma", g, ones_init(1, c), false);
    b.ln2.beta = &ps.add(pre + ".ln2.beta", g, zeros_init(1, c), false);
    b.ffn.fc1.w = &ps.add(pre + ".ffn.fc1.w", g, randn_init(rng, c, 4 * c, 1.0 / std::sqrt(c)), false);
    b.ffn.fc1.b = &ps.add(pre + ".ffn.fc1.b", g, zeros_init(1, 4 * c), false);
    b.ffn.fc2.w = &ps.add(pre + ".ffn.fc2.w", g, randn_init(rng, 4 * c, c, 0.02), false);
    b.ffn.fc2.b = &ps.add(pre + ".ffn.fc2.b", g, zeros_init(1, c), false);
    b.global = (i % 2) == 1;  // frame, global, frame, global, ...
    p.blocks.push_back(b);
  }
  p.dense_proj.w = &ps.add("enc.dense.proj.w", g, randn_init(rng, c, c, 1.0 / std::sqrt(c)), false);
  p.dense_proj.b = &ps.add("enc.dense.proj.b", g, zeros_init(1, c), false);
  p.dense_conv_w = &ps.add("enc.dense.conv.w", g, randn_init(rng, 9 * c, c, 1.0 / std::sqrt(9.0 * c)), false);
  p.dense_conv_b = &ps.add("enc.dense.conv.b", g, zeros_init(1, c), false);
  return p;
}

TokenGrid patchify_stem(const Image& image, const EncoderParams& p, const RunConfig& cfg,
                        FrameId frame) {
  const int ps = cfg.patch_size;
  if (image.h % ps != 0 || image.w % ps != 0)
    throw ShapeError("patchify_stem: image " + std::to_string(image.h) + "x" +
                     std::to_string(image.w) + " not divisible by patch size " +
                     std::to_string(ps));
  const int gh = image.h / ps, gw = image.w / ps;
  const int patch_dim = ps * ps * 3;
  Tensor patches = Tensor::matrix(gh * gw, patch_dim);
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      Eigen::Index row = static_cast<Eigen::Index>(py) * gw + px;
      int k = 0;
      for (int dy = 0; dy < ps; ++dy)
        for (int dx = 0; dx < ps; ++dx)
          for (int ch = 0; ch < 3; ++ch)
            patches.m(row, k++) = image.at(py * ps + dy, px * ps + dx, ch);
    }
  if (p.pos_embed->value.rows() != gh * gw)
    throw ShapeError("patchify_stem: encoder built for a different image size");
  Tape tp(false);
  Value tok = add_bias(matmul(tp.constant(std::move(patches)), tp.param(*p.stem.w)),
                       tp.param(*p.stem.b));
  Tensor out = tok.t();
  out.m += p.pos_embed->value.m;
  out.m.rowwise() += p.frame_embed->value.m.row(frame == FrameId::source ? 0 : 1);
  TokenGrid gridv;
  gridv.gh = gh;
  gridv.gw = gw;
  gridv.t = std::move(out);
  gridv.t.tag_grid(gh, gw);
  gridv.frame = frame;
  return gridv;
}

namespace {

Value encoder_block_tail(Tape& tp, const EncoderBlockP& b, const Value& x) {
  return add(x, ffn(tp, b.ffn, layer_norm(tp, b.ln2, x)));
}

}  // namespace

std::pair<TokenGrid, TokenGrid> joint_encode(const TokenGrid& x_s, const TokenGrid& x_t,
                                             const EncoderParams& p, const RunConfig& cfg,
                                             bool joint) {
  if (x_s.t.cols() != x_t.t.cols())
    throw ShapeError("joint_encode: channel mismatch");
  Tape tp(false);
  Value s = tp.constant(x_s.t);
  Value t = tp.constant(x_t.t);
  const int ns = x_s.t.rows();
  for (const auto& b : p.blocks) {
    if (b.global && joint) {
      Value cat = concat_rows({s, t});
      Value normed = layer_norm(tp, b.ln1, cat);
      Value y = add(cat, mha(tp, b.attn, normed, normed, normed, cfg.attn_heads));
      y = encoder_block_tail(tp, b, y);
      s = slice_rows(y, 0, ns);
      t = slice_rows(y, ns, x_t.t.rows());
    } else {
      Value ns_ = layer_norm(tp, b.ln1, s);
      s = encoder_block_tail(tp, b, add(s, mha(tp, b.attn, ns_, ns_, ns_, cfg.attn_heads)));
      Value nt_ = layer_norm(tp, b.ln1, t);
      t = encoder_block_tail(tp, b, add(t, mha(tp, b.attn, nt_, nt_, nt_, cfg.attn_heads)));
    }
  }
  TokenGrid hs = x_s, ht = x_t;
  hs.t = s.t();
  hs.t.tag_grid(x_s.gh, x_s.gw);
  ht.t = t.t();
  ht.t.tag_grid(x_t.gh, x_t.gw);
  return {hs, ht};
}

FeatureMap dense_decode(const TokenGrid& h, const EncoderParams& p, const RunConfig& cfg) {
  if (h.t.rows() != h.gh * h.gw) throw ShapeError("dense_decode: bad token grid");
  Tape tp(false);
  Value tok = add_bias(matmul(tp.constant(h.t), tp.param(*p.dense_proj.w)),
                       tp.param(*p.dense_proj.b));
  Value grid = tag_grid(tok, h.gh, h.gw);
  const int feat_h = h.gh * cfg.patch_size / 2;
  const int feat_w = h.gw * cfg.patch_size / 2;
  Value up = bilinear_resize(grid, feat_h, feat_w);
  Value out = conv2d(up, tp.param(*p.dense_conv_w), tp.param(*p.dense_conv_b),
                     ops::Conv2dSpec{3, 1, 1});
  FeatureMap f;
  f.h = feat_h;
  f.w = feat_w;
  f.t = out.t();
  f.frame = h.frame;
  return f;
}

EncodedPair ToyEncoderProvider::encode(const Image& s, const Image& t, bool joint,
                                       const std::string&) const {
  TokenGrid xs = patchify_stem(s, p_, cfg_, FrameId::source);
  TokenGrid xt = patchify_stem(t, p_, cfg_, FrameId::target);
  auto [hs, ht] = joint_encode(xs, xt, p_, cfg_, joint);
  EncodedPair out;
  out.f_s = dense_decode(hs, p_, cfg_);
  out.f_t = dense_decode(ht, p_, cfg_);
  return out;
}

EncodedPair ExternalEncoderProvider::encode(const Image&, const Image&, bool,
                                            const std::string& pair_id) const {
  if (pair_id.empty())
    throw ConfigError("external encoder provider needs a pair id");
  std::string dir = (std::filesystem::path(dir_) / pair_id).string();
  auto ts = load_tensor_store(dir);
  EncodedPair out;
  bool have_s = false, have_t = false;
  for (auto& st : ts) {
    if (st.name == "f_s" || st.name == "f_t") {
      FeatureMap f;
      f.h = st.t.h;
      f.w = st.t.w;
      f.t = st.t;
      f.frame = st.name == "f_s" ? FrameId::source : FrameId::target;
      if (f.h != cfg_.feat_size() || f.w != cfg_.feat_size() || f.t.cols() != cfg_.channels)
        throw ShapeError("external features " + st.name + " have shape " + st.t.shape_str() +
                         ", config expects " + std::to_string(cfg_.feat_size()) + "x" +
                         std::to_string(cfg_.feat_size()) + "x" + std::to_string(cfg_.channels));
      (st.name == "f_s" ? out.f_s : out.f_t) = std::move(f);
      (st.name == "f_s" ? have_s : have_t) = true;
    } else if (st.name == "tracked_points") {
      PointSet pts;
      pts.frame = FrameId::target;
      for (int r = 0; r < st.t.rows(); ++r)
        pts.pts.push_back({st.t.m(r, 0), st.t.m(r, 1)});
      out.tracked_points = std::move(pts);
    }
  }
  if (!have_s || !have_t)
    throw FormatError("external pair " + pair_id + " is missing f_s/f_t");
  return out;
}

void write_external_pair(const std::string& dir, const std::string& pair_id,
                         const FeatureMap& f_s, const FeatureMap& f_t,
                         const PointSet* tracked_points) {
  std::vector<StoredTensor> ts;
  ts.push_back({"f_s", "external", false, f_s.t});
  ts.push_back({"f_t", "external", false, f_t.t});
  if (tracked_points) {
    Tensor t = Tensor::matrix(static_cast<int>(tracked_points->size()), 2);
    for (size_t i = 0; i < tracked_points->size(); ++i) {
      t.m(static_cast<Eigen::Index>(i), 0) = tracked_points->pts[i].x;
      t.m(static_cast<Eigen::Index>(i), 1) = tracked_points->pts[i].y;
    }
    ts.push_back({"tracked_points", "external", false, std::move(t)});
  }
  save_tensor_store((std::filesystem::path(dir) / pair_id).string(), ts);
}

}  // namespace xvseg

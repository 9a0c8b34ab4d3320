#include "xvseg/decoder.hpp"

#include <cmath>

#include "xvseg/errors.hpp"

namespace xvseg {

PromptEncoderP make_prompt_encoder(ParamStore& ps, const std::string& prefix,
                                   const std::string& group, int channels, Rng& rng) {
  PromptEncoderP p;
  // Fixed Gaussian frequency matrix; checkpointed but never updated.
  p.fourier = &ps.add(prefix + ".fourier", group, randn_init(rng, 2, channels / 2, 1.0), false);
  p.proj = make_linear(ps, prefix + ".proj", group, channels, channels, rng);
  p.role_s = &ps.add(prefix + ".role_s", group, randn_init(rng, 1, channels, 0.02));
  p.role_t = &ps.add(prefix + ".role_t", group, randn_init(rng, 1, channels, 0.02));
  p.output_token = &ps.add(prefix + ".output_token", group, randn_init(rng, 1, channels, 0.02));
  return p;
}

DecoderBlockP make_decoder_block(ParamStore& ps, const std::string& prefix,
                                 const std::string& group, int channels, Rng& rng) {
  DecoderBlockP p;
  p.ln_q1 = make_layer_norm(ps, prefix + ".ln_q1", group, channels);
  p.self_attn = make_attn(ps, prefix + ".self_attn", group, channels, rng);
  p.ln_q2 = make_layer_norm(ps, prefix + ".ln_q2", group, channels);
  p.cross_pi = make_attn(ps, prefix + ".cross_pi", group, channels, rng);
  p.ln_q3 = make_layer_norm(ps, prefix + ".ln_q3", group, channels);
  p.ffn_q = make_ffn(ps, prefix + ".ffn_q", group, channels, 4 * channels, rng);
  p.ln_i = make_layer_norm(ps, prefix + ".ln_i", group, channels);
  p.cross_ip = make_attn(ps, prefix + ".cross_ip", group, channels, rng);
  return p;
}

PredictP make_predict(ParamStore& ps, const std::string& prefix, const std::string& group,
                      int channels, Rng& rng) {
  PredictP p;
  p.ln_o = make_layer_norm(ps, prefix + ".ln_o", group, channels);
  p.cross_o = make_attn(ps, prefix + ".cross_o", group, channels, rng);
  p.mlp1 = make_linear(ps, prefix + ".mlp1", group, channels, channels, rng);
  // Small final projection so untrained logits stay near zero.
  p.mlp2 = make_linear(ps, prefix + ".mlp2", group, channels, channels, rng, 0.02);
  return p;
}

Tensor fourier_features(const std::vector<Point2d>& pts_norm, const Tensor& b) {
  const int half = b.cols();
  Tensor out = Tensor::matrix(static_cast<int>(pts_norm.size()), 2 * half);
  for (size_t i = 0; i < pts_norm.size(); ++i) {
    for (int j = 0; j < half; ++j) {
      double phase = 2.0 * M_PI * (b.m(0, j) * pts_norm[i].x + b.m(1, j) * pts_norm[i].y);
      out.m(static_cast<Eigen::Index>(i), j) = std::sin(phase);
      out.m(static_cast<Eigen::Index>(i), half + j) = std::cos(phase);
    }
  }
  return out;
}

Value sample_point_features(Tape& tp, const Value& fmap, const PointSet& pts, int img_w,
                            int img_h) {
  const Tensor& f = fmap.t();
  if (!f.is_grid()) throw ShapeError("sample_point_features: feature map must be a grid");
  const double sx = static_cast<double>(f.w) / img_w;
  const double sy = static_cast<double>(f.h) / img_h;
  std::vector<std::array<double, 2>> feat_pts;
  feat_pts.reserve(pts.size());
  for (const auto& p : pts.pts)
    feat_pts.push_back({(p.x + 0.5) * sx - 0.5, (p.y + 0.5) * sy - 0.5});
  return bilinear_sample(fmap, feat_pts);
}

namespace {
Value psi_embed(Tape& tp, const PromptEncoderP& p, const PointSet& pts, Param& role,
                const RunConfig& cfg) {
  std::vector<Point2d> norm;
  norm.reserve(pts.size());
  for (const auto& q : pts.pts)
    norm.push_back({(q.x + 0.5) / cfg.image_size, (q.y + 0.5) / cfg.image_size});
  Value ff = tp.constant(fourier_features(norm, p.fourier->value));
  return add_bias(linear(tp, p.proj, ff), tp.param(role));
}
}  // namespace

Value encode_prompts(Tape& tp, const PromptEncoderP& p, const PointSet& p_s,
                     const PointSet& p_t, const Value& f_src_sample, const RunConfig& cfg) {
  if (p_s.size() != p_t.size() ||
      static_cast<int>(p_s.size()) != cfg.k_points)
    throw ShapeError("encode_prompts: need exactly k_points source and target points");
  if (f_src_sample.t().rows() != cfg.k_points)
    throw ShapeError("encode_prompts: E_p cardinality mismatch");
  Value e_s = psi_embed(tp, p, p_s, *p.role_s, cfg);
  Value e_t = psi_embed(tp, p, p_t, *p.role_t, cfg);
  return concat_rows({f_src_sample, e_s, e_t, tp.param(*p.output_token)});
}

std::pair<Value, Value> decode_block(Tape& tp, const DecoderBlockP& p, const Value& q,
                                     const Value& f_star, const Value& pe,
                                     const RunConfig& cfg) {
  // Prompt self-attention.
  Value n1 = layer_norm(tp, p.ln_q1, q);
  Value qb = add(q, mha(tp, p.self_attn, n1, n1, n1, cfg.attn_heads));
  // Point -> image cross-attention; image keys carry positional encodings.
  Value keys = add(f_star, pe);
  Value q2 = add(qb, mha(tp, p.cross_pi, layer_norm(tp, p.ln_q2, qb), keys, f_star,
                         cfg.attn_heads));
  Value q3 = add(q2, ffn(tp, p.ffn_q, layer_norm(tp, p.ln_q3, q2)));
  // Image -> point cross-attention (no image-side FFN).
  Value iq = add(layer_norm(tp, p.ln_i, f_star), pe);
  Value h = add(f_star, mha(tp, p.cross_ip, iq, q3, q3, cfg.attn_heads));
  return {q3, h};
}

MaskPrediction predict_mask(Tape& tp, const PredictP& p, const Value& o_last,
                            const Value& h_t, const Value& pe_t, const RunConfig& cfg) {
  if (!h_t.t().is_grid())
    throw ShapeError("predict_mask: h_t must be the grid-tagged target slice");
  Value keys = add(h_t, pe_t);
  Value o_tilde = add(o_last, mha(tp, p.cross_o, layer_norm(tp, p.ln_o, o_last), keys, h_t,
                                  cfg.attn_heads));
  Value e = linear(tp, p.mlp2, gelu(linear(tp, p.mlp1, o_tilde)));  // 1 x C
  Value z = matmul_nt(h_t, e);  // per-pixel dot products, (feat^2) x 1
  z = tag_grid(z, h_t.t().h, h_t.t().w);
  MaskPrediction out;
  out.logits = z;
  if (cfg.logit_upsample) {
    Value zu = bilinear_resize(z, cfg.image_size, cfg.image_size);
    out.prob_full = sigmoid(zu);
  } else {
    Value prob = sigmoid(z);
    out.prob_full = bilinear_resize(prob, cfg.image_size, cfg.image_size);
  }
  return out;
}

}  // namespace xvseg

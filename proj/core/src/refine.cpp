#include "xvseg/refine.hpp"

#include "xvseg/errors.hpp"

namespace xvseg {

Value refine_once(Tape& tp, const RunConfig& cfg, const HeadParams& psi, const Value& f_s,
                  const MaskGrid& m_s, const Value& f_t, const Value& m_prev,
                  const Value& q_carried) {
  const int feat = cfg.feat_size();
  const Tensor& mp = m_prev.t();
  if (mp.h != cfg.image_size || mp.w != cfg.image_size || mp.cols() != 1)
    throw ShapeError("refine_once: previous mask must be (image, image, 1)");

  // Source mask into source features, previous prediction into target
  // features (it lives in the target frame).
  Value fs_in = inject_mask(f_s, embed_mask(tp, psi.mask_embed, m_s, cfg));
  Value ft_in = inject_mask(f_t, embed_mask(tp, psi.mask_embed, m_prev, cfg));

  ImagePe pe = image_pe(tp, psi, cfg);
  const int n = feat * feat;
  Value queries = q_carried;
  Value cur_s = fs_in, cur_t = ft_in;
  for (int l = 0; l < cfg.decoder_blocks; ++l) {
    Value fss = cur_s, fst = cur_t;
    if (cfg.use_bottleneck_fusion)
      std::tie(fss, fst) = bottleneck_fuse(tp, psi.fusion[l], cur_s, cur_t, cfg);
    Value f_star = concat_rows({fss, fst});
    auto [q2, h] = decode_block(tp, psi.blocks[l], queries, f_star, pe.joint, cfg);
    queries = q2;
    cur_s = tag_grid(slice_rows(h, 0, n), feat, feat);
    cur_t = tag_grid(slice_rows(h, n, n), feat, feat);
  }
  Value o_last = slice_rows(queries, queries.t().rows() - 1, 1);
  MaskPrediction pred = predict_mask(tp, psi.predict, o_last, cur_t, pe.target, cfg);
  return pred.prob_full;
}

MaskGrid refine(const Model& m, const FeatureMap& f_s, const MaskGrid& m_s,
                const FeatureMap& f_t, const MaskGrid& m_hat_k, const Tensor& queries) {
  for (double v : m_hat_k.v)
    if (v < 0.0 || v > 1.0) throw ValueError("refine: mask values must lie in [0,1]");
  Tape tp(false);
  Value out = refine_once(tp, m.cfg, m.psi(), tp.constant(f_s.t), m_s, tp.constant(f_t.t),
                          tp.constant(m_hat_k.as_grid_tensor()), tp.constant(queries));
  return MaskGrid::from_grid_tensor(out.t(), false);
}

RefinePlan refine_schedule(int batch_size, int refine_iters, bool training, Rng& rng) {
  if (batch_size < 1) throw ValueError("refine_schedule: empty batch");
  RefinePlan plan;
  plan.iters = refine_iters;
  plan.refined.resize(batch_size);
  for (int i = 0; i < batch_size; ++i)
    plan.refined[i] = training ? (refine_iters > 0 && rng.bernoulli(0.5)) : refine_iters > 0;
  return plan;
}

}  // namespace xvseg

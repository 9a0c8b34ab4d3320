#include "xvseg/head.hpp"

#include "xvseg/errors.hpp"
#include "xvseg/kmeans.hpp"
#include "xvseg/metrics.hpp"
#include "xvseg/refine.hpp"
#include "xvseg/tensor_store.hpp"

namespace xvseg {

HeadParams make_head_params(ParamStore& ps, const RunConfig& cfg, Rng& rng,
                            const std::string& prefix, const std::string& fusion_group,
                            const std::string& pgp_group) {
  const int c = cfg.channels;
  HeadParams hp;
  hp.mask_embed = make_mask_embed(ps, prefix + ".mask_embed", fusion_group, c, rng);
  for (int l = 0; l < cfg.decoder_blocks; ++l) {
    hp.fusion.push_back(
        make_fusion_block(ps, prefix + ".fusion" + std::to_string(l), fusion_group, cfg, rng));
    hp.blocks.push_back(
        make_decoder_block(ps, prefix + ".block" + std::to_string(l), pgp_group, c, rng));
  }
  hp.prompts = make_prompt_encoder(ps, prefix + ".prompts", pgp_group, c, rng);
  hp.predict = make_predict(ps, prefix + ".predict", pgp_group, c, rng);
  hp.img_pe_proj = make_linear(ps, prefix + ".img_pe_proj", pgp_group, c, c, rng);
  hp.img_frame_embed = &ps.add(prefix + ".img_frame_embed", pgp_group, randn_init(rng, 2, c, 0.02));
  hp.null_mask_embed = &ps.add(prefix + ".null_mask_embed", fusion_group, randn_init(rng, 1, c, 0.02));
  return hp;
}

Model make_model(const RunConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.store = std::make_unique<ParamStore>();
  Rng rng(Rng::mix(cfg.seed, 0x6d6f64656cull));  // model-init stream
  m.enc = make_encoder_params(*m.store, cfg, rng);
  m.head = make_head_params(*m.store, cfg, rng, "head", "mask_prompt_fusion",
                            "point_guided_prediction");
  if (cfg.separate_refine_weights)
    m.refine_head = make_head_params(*m.store, cfg, rng, "refine", "mask_refinement",
                                     "mask_refinement");
  if (cfg.encoder_provider == "external")
    m.provider = std::make_unique<ExternalEncoderProvider>(cfg.external_dir, cfg);
  else
    m.provider = std::make_unique<ToyEncoderProvider>(m.enc, m.cfg);
  return m;
}

void save_checkpoint(const Model& m, const std::string& dir,
                     const std::map<std::string, std::string>& extra) {
  save_params(*m.store, dir);
  auto kv = m.cfg.to_kv();
  for (const auto& [k, v] : extra) kv["x_" + k] = v;
  write_kv_file(dir + "/config.txt", kv);
}

Model load_checkpoint(const std::string& dir) {
  RunConfig cfg = RunConfig::from_kv(read_kv_file(dir + "/config.txt"));
  Model m = make_model(cfg);
  load_params(*m.store, dir);
  return m;
}

ImagePe image_pe(Tape& tp, const HeadParams& hp, const RunConfig& cfg) {
  const int feat = cfg.feat_size();
  std::vector<Point2d> centers;
  centers.reserve(static_cast<size_t>(feat) * feat);
  for (int y = 0; y < feat; ++y)
    for (int x = 0; x < feat; ++x)
      centers.push_back({(x + 0.5) / feat, (y + 0.5) / feat});
  Value ff = tp.constant(fourier_features(centers, hp.prompts.fourier->value));
  Value pe = linear(tp, hp.img_pe_proj, ff);
  Value frame = tp.param(*hp.img_frame_embed);
  ImagePe out;
  out.target = add_bias(pe, slice_rows(frame, 1, 1));
  out.joint = concat_rows({add_bias(pe, slice_rows(frame, 0, 1)), out.target});
  return out;
}

HeadForwardOut head_forward(Tape& tp, const RunConfig& cfg, const HeadParams& hp,
                            const Value& f_s, const Value& f_t, const MaskGrid& m_s,
                            const PointSet* p_s, const PointSet* p_t) {
  const int feat = cfg.feat_size();
  if (f_s.t().h != feat || f_t.t().h != feat)
    throw ShapeError("head_forward: features must be at feature resolution");

  Value e_m = embed_mask(tp, hp.mask_embed, m_s, cfg);
  Value fs_inj = inject_mask(f_s, e_m);
  Value ft_in = f_t;
  if (cfg.null_mask_embed_target)
    ft_in = add_bias(f_t, tp.param(*hp.null_mask_embed));

  Value queries;
  if (cfg.use_point_guidance) {
    if (!p_s || !p_t) throw ValueError("head_forward: point guidance needs prompt points");
    Value e_p = sample_point_features(tp, cfg.prompts_from_injected ? fs_inj : f_s, *p_s,
                                      cfg.image_size, cfg.image_size);
    queries = encode_prompts(tp, hp.prompts, *p_s, *p_t, e_p, cfg);
  } else {
    queries = tp.param(*hp.prompts.output_token);
  }

  ImagePe pe = image_pe(tp, hp, cfg);
  const int n = feat * feat;
  Value cur_s = fs_inj, cur_t = ft_in;
  for (int l = 0; l < cfg.decoder_blocks; ++l) {
    Value fss = cur_s, fst = cur_t;
    if (cfg.use_bottleneck_fusion)
      std::tie(fss, fst) = bottleneck_fuse(tp, hp.fusion[l], cur_s, cur_t, cfg);
    Value f_star = concat_rows({fss, fst});
    auto [q2, h] = decode_block(tp, hp.blocks[l], queries, f_star, pe.joint, cfg);
    queries = q2;
    cur_s = tag_grid(slice_rows(h, 0, n), feat, feat);
    cur_t = tag_grid(slice_rows(h, n, n), feat, feat);
  }

  Value o_last = slice_rows(queries, queries.t().rows() - 1, 1);
  MaskPrediction pred = predict_mask(tp, hp.predict, o_last, cur_t, pe.target, cfg);

  HeadForwardOut out;
  out.mask_prob = pred.prob_full;
  out.logits = pred.logits;
  out.queries = queries;
  out.h_s = cur_s;
  out.h_t = cur_t;
  return out;
}

PipelineResult run_pipeline_encoded(const Model& m, const EncodedPair& enc,
                                    const MaskGrid& m_s, const Image& i_s, const Image& i_t,
                                    const Tracker& tracker, const PipelineOptions& opt) {
  const RunConfig& cfg = m.cfg;
  if (m_s.empty_mask()) throw ValueError("empty source mask");
  Rng rng(Rng::mix(cfg.seed, Rng::mix(opt.point_seed, 0x706f696e7473ull)));

  PipelineResult res;
  SampledPoints sp = sample_points(m_s, cfg.k_points, rng);
  res.p_s = sp.points;
  res.p_t = track_points(res.p_s, i_s, i_t, tracker);

  Tape tp(false);
  Value f_s = tp.constant(enc.f_s.t);
  Value f_t = tp.constant(enc.f_t.t);
  HeadForwardOut fwd = head_forward(tp, cfg, m.head, f_s, f_t, m_s, &res.p_s, &res.p_t);

  Value mask = fwd.mask_prob;
  res.logits = fwd.logits.t();
  res.queries = fwd.queries.t();
  int iters = opt.refine_iters >= 0 ? opt.refine_iters
                                    : (cfg.use_refinement ? cfg.refine_iters : 0);
  Value q_carried = tp.constant(fwd.queries.t());
  for (int k = 0; k < iters; ++k) {
    mask = refine_once(tp, cfg, m.psi(), f_s, m_s, f_t, mask, q_carried);
    ++res.psi_applications;
  }

  res.prob = MaskGrid::from_grid_tensor(mask.t(), false);
  res.binary = binarize(res.prob, 0.5);
  return res;
}

PipelineResult run_pipeline(const Model& m, const Image& i_s, const MaskGrid& m_s,
                            const Image& i_t, const Tracker& tracker,
                            const PipelineOptions& opt) {
  EncodedPair enc = m.provider->encode(i_s, i_t, /*joint=*/true, opt.pair_id);
  return run_pipeline_encoded(m, enc, m_s, i_s, i_t, tracker, opt);
}

}  // namespace xvseg

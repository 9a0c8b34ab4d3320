#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xvseg/errors.hpp"
#include "xvseg/head.hpp"
#include "xvseg/kmeans.hpp"
#include "xvseg/synth.hpp"

using namespace xvseg;

namespace {
RunConfig toy32(int k_points = 5) {
  RunConfig c = RunConfig::toy();
  c.channels = 32;
  c.seed = 23;
  c.k_points = k_points;
  return c;
}

Tensor rand_grid(Rng& rng, int h, int w, int c, double s = 1.0) {
  Tensor t = Tensor::grid(h, w, c);
  for (Eigen::Index i = 0; i < t.m.size(); ++i) t.m.data()[i] = rng.normal(0, s);
  return t;
}
}  // namespace

TEST_CASE("sample_point_features: constant map, grid node, midpoint") {
  Tape tp(false);
  // constant feature map -> every token equals the constant
  Tensor cmap = Tensor::grid(4, 4, 3);
  for (int i = 0; i < 16; ++i) {
    cmap.m(i, 0) = 1.5;
    cmap.m(i, 1) = -2.0;
    cmap.m(i, 2) = 0.25;
  }
  PointSet pts;
  pts.pts = {{1.2, 3.7}, {5.0, 0.4}, {7.9, 7.9}};
  Value out = sample_point_features(tp, tp.constant(cmap), pts, 8, 8);
  for (int i = 0; i < 3; ++i) {
    CHECK(out.t().m(i, 0) == doctest::Approx(1.5));
    CHECK(out.t().m(i, 2) == doctest::Approx(0.25));
  }

  // exact grid node: pf = (p + 0.5) * feat/img - 0.5 is integral for
  // p = 2k + 0.5 at stride 2
  Rng rng(1);
  Tensor fmap = rand_grid(rng, 4, 4, 3);
  PointSet node;
  node.pts = {{2.5, 4.5}};  // feature coords (1, 2)
  Value v = sample_point_features(tp, tp.constant(fmap), node, 8, 8);
  CHECK((v.t().m.row(0) - fmap.m.row(2 * 4 + 1)).cwiseAbs().maxCoeff() < 1e-12);

  // midpoint between two nodes on one axis -> average of the two rows
  PointSet mid;
  mid.pts = {{3.5, 4.5}};  // feature coords (1.5, 2)
  Value vm = sample_point_features(tp, tp.constant(fmap), mid, 8, 8);
  Mat want = 0.5 * fmap.m.row(2 * 4 + 1) + 0.5 * fmap.m.row(2 * 4 + 2);
  CHECK((vm.t().m.row(0) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode_prompts: query lengths 3K+1 and role embedding difference") {
  for (int k : {1, 5, 9}) {
    RunConfig cfg = toy32(k);
    Model m = make_model(cfg);
    Tape tp(false);
    Rng rng(2);
    Tensor fmap = rand_grid(rng, 35, 35, 32);
    PointSet p_s, p_t;
    for (int i = 0; i < k; ++i) {
      p_s.pts.push_back({10.0 + i, 20.0});
      p_t.pts.push_back({30.0, 12.0 + 2 * i});
    }
    Value e_p = sample_point_features(tp, tp.constant(fmap), p_s, 70, 70);
    Value q0 = encode_prompts(tp, m.head.prompts, p_s, p_t, e_p, cfg);
    CHECK(q0.t().rows() == 3 * k + 1);
    CHECK(q0.t().cols() == 32);
  }

  // same point in source and target roles differs by exactly the roles
  RunConfig cfg = toy32(1);
  Model m = make_model(cfg);
  Tape tp(false);
  Rng rng(3);
  Tensor fmap = rand_grid(rng, 35, 35, 32);
  PointSet p;
  p.pts = {{22.0, 41.0}};
  Value e_p = sample_point_features(tp, tp.constant(fmap), p, 70, 70);
  Value q0 = encode_prompts(tp, m.head.prompts, p, p, e_p, cfg);
  Mat e_s = q0.t().m.row(1), e_t = q0.t().m.row(2);
  Mat role_diff = m.head.prompts.role_s->value.m - m.head.prompts.role_t->value.m;
  CHECK((e_s - e_t - role_diff).cwiseAbs().maxCoeff() < 1e-12);

  // cardinality mismatch
  PointSet two;
  two.pts = {{1, 1}, {2, 2}};
  CHECK_THROWS_AS(encode_prompts(tp, m.head.prompts, p, two, e_p, cfg), ShapeError);
}

TEST_CASE("decode_block with zeroed value projections is a pure residual") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  DecoderBlockP& blk = m.head.blocks[0];
  for (AttnP* a : {&blk.self_attn, &blk.cross_pi, &blk.cross_ip}) {
    a->v.w->value.m.setZero();
    a->v.b->value.m.setZero();
    a->o.w->value.m.setZero();
    a->o.b->value.m.setZero();
  }
  Rng rng(5);
  Tape tp(false);
  Tensor q0 = Tensor::matrix(16, 32);
  for (int i = 0; i < q0.m.size(); ++i) q0.m.data()[i] = rng.normal();
  Tensor fstar = Tensor::matrix(2 * 35 * 35, 32);
  for (Eigen::Index i = 0; i < fstar.m.size(); ++i) fstar.m.data()[i] = rng.normal();
  Tensor pe = Tensor::matrix(2 * 35 * 35, 32);

  Value qv = tp.constant(q0);
  auto [q2, h] = decode_block(tp, blk, qv, tp.constant(fstar), tp.constant(pe), cfg);
  CHECK((h.t().m - fstar.m).cwiseAbs().maxCoeff() == 0.0);  // image side untouched

  // prompt side: q' = q + FFN(LN(q)) computed independently
  Value want = add(qv, ffn(tp, blk.ffn_q, layer_norm(tp, blk.ln_q3, qv)));
  CHECK((q2.t().m - want.t().m).cwiseAbs().maxCoeff() < 1e-12);

  // token counts preserved: h spans both frames
  CHECK(h.t().rows() == 2 * 35 * 35);
  CHECK(q2.t().rows() == 16);
}

TEST_CASE("query length is conserved through every block (L=2 default)") {
  RunConfig cfg = toy32();
  CHECK(cfg.decoder_blocks == 2);
  Model m = make_model(cfg);
  SynthPair pair = generate_pair(31, 0, Difficulty::easy, 70);
  GroundTruthTracker tr(pair.transform);
  PipelineResult res = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, {});
  CHECK(res.queries.rows() == 3 * cfg.k_points + 1);
  CHECK(res.queries.cols() == 32);
}

TEST_CASE("predict_mask: zero MLP output gives logits 0 and probability 0.5") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  m.head.predict.mlp2.w->value.m.setZero();
  m.head.predict.mlp2.b->value.m.setZero();
  Rng rng(7);
  Tape tp(false);
  Value h_t = tp.constant(rand_grid(rng, 35, 35, 32));
  Value pe_t = tp.constant(Tensor::grid(35, 35, 32));
  Tensor o = Tensor::matrix(1, 32);
  for (int i = 0; i < 32; ++i) o.m(0, i) = rng.normal();
  MaskPrediction pred = predict_mask(tp, m.head.predict, tp.constant(o), h_t, pe_t, cfg);
  CHECK(pred.logits.t().m.cwiseAbs().maxCoeff() == 0.0);
  CHECK((pred.prob_full.t().m.array() - 0.5).abs().maxCoeff() < 1e-12);
  CHECK(pred.prob_full.t().h == 70);
}

TEST_CASE("predict_mask: constant features give a constant mask") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  Rng rng(9);
  Tensor h = Tensor::grid(35, 35, 32);
  Eigen::RowVectorXd row(32);
  for (int i = 0; i < 32; ++i) row(i) = rng.normal();
  for (int r = 0; r < h.m.rows(); ++r) h.m.row(r) = row;
  Tape tp(false);
  Tensor o = Tensor::matrix(1, 32);
  for (int i = 0; i < 32; ++i) o.m(0, i) = rng.normal();
  MaskPrediction pred = predict_mask(tp, m.head.predict, tp.constant(o), tp.constant(h),
                                     tp.constant(Tensor::grid(35, 35, 32)), cfg);
  double v0 = pred.prob_full.t().m(0, 0);
  CHECK((pred.prob_full.t().m.array() - v0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("predict_mask matches an explicit scalar-loop oracle (5x5, C=4)") {
  RunConfig cfg;
  cfg.image_size = 14;  // upsample target (any even size works here)
  cfg.channels = 4;
  cfg.attn_heads = 1;
  cfg.k_points = 1;
  cfg.seed = 3;
  ParamStore ps;
  Rng rng(13);
  PredictP pp = make_predict(ps, "p", "t", 4, rng);
  Tensor h = rand_grid(rng, 5, 5, 4);
  Tensor o = Tensor::matrix(1, 4);
  for (int i = 0; i < 4; ++i) o.m(0, i) = rng.normal();
  Tensor pe = rand_grid(rng, 5, 5, 4, 0.3);

  Tape tp(false);
  MaskPrediction pred =
      predict_mask(tp, pp, tp.constant(o), tp.constant(h), tp.constant(pe), cfg);

  // --- independent scalar-loop recomputation ---
  auto linear1 = [](const Eigen::RowVectorXd& x, const Mat& w, const Mat& b) {
    Eigen::RowVectorXd y = Eigen::RowVectorXd::Zero(w.cols());
    for (int j = 0; j < w.cols(); ++j) {
      double acc = b(0, j);
      for (int i = 0; i < w.rows(); ++i) acc += x(i) * w(i, j);
      y(j) = acc;
    }
    return y;
  };
  // LN(o)
  Eigen::RowVectorXd x = o.m.row(0);
  double mean = x.mean();
  double var = (x.array() - mean).square().mean();
  Eigen::RowVectorXd xhat = ((x.array() - mean) / std::sqrt(var + 1e-5)).matrix();
  Eigen::RowVectorXd ln = xhat.cwiseProduct(pp.ln_o.gamma->value.m.row(0)) +
                          pp.ln_o.beta->value.m.row(0);
  // single-query attention over 25 keys
  Eigen::RowVectorXd q = linear1(ln, pp.cross_o.q.w->value.m, pp.cross_o.q.b->value.m);
  std::vector<double> logits(25);
  double mx = -1e300;
  for (int i = 0; i < 25; ++i) {
    Eigen::RowVectorXd key = h.m.row(i) + pe.m.row(i);
    Eigen::RowVectorXd kk = linear1(key, pp.cross_o.k.w->value.m, pp.cross_o.k.b->value.m);
    logits[i] = q.dot(kk) / 2.0;  // sqrt(4)
    mx = std::max(mx, logits[i]);
  }
  double denom = 0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    denom += l;
  }
  Eigen::RowVectorXd attn_out = Eigen::RowVectorXd::Zero(4);
  for (int i = 0; i < 25; ++i) {
    Eigen::RowVectorXd vv = linear1(h.m.row(i), pp.cross_o.v.w->value.m, pp.cross_o.v.b->value.m);
    attn_out += (logits[i] / denom) * vv;
  }
  Eigen::RowVectorXd o_tilde =
      x + linear1(attn_out, pp.cross_o.o.w->value.m, pp.cross_o.o.b->value.m);
  // MLP with exact GELU
  Eigen::RowVectorXd hmid = linear1(o_tilde, pp.mlp1.w->value.m, pp.mlp1.b->value.m);
  for (int i = 0; i < hmid.size(); ++i)
    hmid(i) = 0.5 * hmid(i) * (1.0 + std::erf(hmid(i) / std::sqrt(2.0)));
  Eigen::RowVectorXd e = linear1(hmid, pp.mlp2.w->value.m, pp.mlp2.b->value.m);
  // per-pixel dot products
  for (int i = 0; i < 25; ++i) {
    double z = 0;
    for (int c = 0; c < 4; ++c) z += e(c) * h.m(i, c);
    CHECK(pred.logits.t().m(i, 0) == doctest::Approx(z).epsilon(1e-6));
  }
}

TEST_CASE("run_head end to end: toy shape law and near-0.5 untrained output") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  SynthPair pair = generate_pair(17, 1, Difficulty::easy, 70);
  GroundTruthTracker tr(pair.transform);
  PipelineOptions opt;
  opt.refine_iters = 0;  // run_head without refinement
  PipelineResult res = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, opt);
  CHECK(res.prob.h == 70);
  CHECK(res.prob.w == 70);
  CHECK(res.psi_applications == 0);
  double mean_dev = 0;
  for (double v : res.prob.v) mean_dev += std::abs(v - 0.5);
  mean_dev /= res.prob.v.size();
  CHECK(mean_dev < 0.2);  // untrained logits stay near init scale
}

TEST_CASE("moving the target prompts changes the mask (prompts are consumed)") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  Rng rng(19);
  Tensor fs = rand_grid(rng, 35, 35, 32);
  Tensor ft = rand_grid(rng, 35, 35, 32);
  MaskGrid ms = MaskGrid::zeros(70, 70);
  for (int y = 20; y < 34; ++y)
    for (int x = 20; x < 34; ++x) ms.at(y, x) = 1;
  PointSet p_s;
  p_s.pts = {{22, 22}, {30, 30}, {25, 28}, {28, 25}, {24, 31}};
  PointSet near = p_s, far;
  far.pts = {{60, 60}, {65, 62}, {58, 64}, {62, 58}, {64, 65}};

  Tape t1(false), t2(false);
  HeadForwardOut o1 = head_forward(t1, cfg, m.head, t1.constant(fs), t1.constant(ft), ms,
                                   &p_s, &near);
  HeadForwardOut o2 = head_forward(t2, cfg, m.head, t2.constant(fs), t2.constant(ft), ms,
                                   &p_s, &far);
  CHECK((o1.mask_prob.t().m - o2.mask_prob.t().m).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("sigmoid outputs are strictly inside (0,1)") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  SynthPair pair = generate_pair(23, 2, Difficulty::medium, 70);
  GroundTruthTracker tr(pair.transform);
  PipelineResult res = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, {});
  for (double v : res.prob.v) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

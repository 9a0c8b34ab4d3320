#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "xvseg/errors.hpp"
#include "xvseg/head.hpp"
#include "xvseg/kmeans.hpp"
#include "xvseg/synth.hpp"

using namespace xvseg;

namespace {
RunConfig toy32() {
  RunConfig c = RunConfig::toy();
  c.channels = 32;
  c.seed = 11;
  return c;
}

Image noise_image(Rng& rng, int n) {
  Image im = Image::filled(n, n, 0, 0, 0);
  for (double& v : im.rgb) v = rng.uniform();
  return im;
}
}  // namespace

TEST_CASE("patchify shapes: 70->25 tokens, 518->1369 tokens") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  Rng rng(1);
  Image im = noise_image(rng, 70);
  TokenGrid t = patchify_stem(im, m.enc, cfg, FrameId::source);
  CHECK(t.gh == 5);
  CHECK(t.gw == 5);
  CHECK(t.t.rows() == 25);
  CHECK(t.t.cols() == 32);

  RunConfig big;
  big.seed = 2;
  Model mb = make_model(big);
  Image im2 = noise_image(rng, 518);
  TokenGrid t2 = patchify_stem(im2, mb.enc, big, FrameId::source);
  CHECK(t2.t.rows() == 37 * 37);

  Image bad = noise_image(rng, 69);
  CHECK_THROWS_AS(patchify_stem(bad, m.enc, cfg, FrameId::source), ShapeError);
}

TEST_CASE("zero image yields positional terms only") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  Image zero = Image::filled(70, 70, 0, 0, 0);
  TokenGrid t = patchify_stem(zero, m.enc, cfg, FrameId::source);
  // stem bias is zero at init, so tokens == pos_embed + frame_embed row 0
  Mat want = m.enc.pos_embed->value.m;
  want.rowwise() += m.enc.frame_embed->value.m.row(0);
  CHECK((t.t.m - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("joint encode: shape preservation and identical-input symmetry") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  Rng rng(3);
  Image im = noise_image(rng, 70);
  TokenGrid xs = patchify_stem(im, m.enc, cfg, FrameId::source);
  TokenGrid xt = xs;
  xt.frame = FrameId::target;
  // zero the frame embeddings so both frames carry identical tokens
  m.enc.frame_embed->value.m.setZero();
  TokenGrid xs0 = patchify_stem(im, m.enc, cfg, FrameId::source);
  TokenGrid xt0 = patchify_stem(im, m.enc, cfg, FrameId::target);
  auto [hs, ht] = joint_encode(xs0, xt0, m.enc, cfg);
  CHECK(hs.t.rows() == 25);
  CHECK(ht.t.rows() == 25);
  CHECK((hs.t.m - ht.t.m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("swapping inputs swaps outputs exactly (frame embeddings zeroed)") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  m.enc.frame_embed->value.m.setZero();
  Rng rng(5);
  Image a = noise_image(rng, 70), b = noise_image(rng, 70);
  TokenGrid xa = patchify_stem(a, m.enc, cfg, FrameId::source);
  TokenGrid xb = patchify_stem(b, m.enc, cfg, FrameId::target);
  auto [ha, hb] = joint_encode(xa, xb, m.enc, cfg);
  TokenGrid xb2 = patchify_stem(b, m.enc, cfg, FrameId::source);
  TokenGrid xa2 = patchify_stem(a, m.enc, cfg, FrameId::target);
  auto [hb2, ha2] = joint_encode(xb2, xa2, m.enc, cfg);
  CHECK((ha.t.m - ha2.t.m).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((hb.t.m - hb2.t.m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("no cross-frame leakage before a global layer") {
  RunConfig cfg = toy32();
  cfg.encoder_blocks = 1;  // single frame-wise block
  Model m = make_model(cfg);
  Rng rng(7);
  Image a = noise_image(rng, 70);
  Image b1 = noise_image(rng, 70);
  Image b2 = noise_image(rng, 70);
  TokenGrid xa = patchify_stem(a, m.enc, cfg, FrameId::source);
  TokenGrid xb1 = patchify_stem(b1, m.enc, cfg, FrameId::target);
  TokenGrid xb2 = patchify_stem(b2, m.enc, cfg, FrameId::target);
  auto [h1, u1] = joint_encode(xa, xb1, m.enc, cfg);
  auto [h2, u2] = joint_encode(xa, xb2, m.enc, cfg);
  CHECK((h1.t.m - h2.t.m).cwiseAbs().maxCoeff() == 0.0);  // source untouched

  // ... and with joint=false even global layers stay frame-local
  RunConfig cfg4 = toy32();
  Model m4 = make_model(cfg4);
  TokenGrid ya = patchify_stem(a, m4.enc, cfg4, FrameId::source);
  TokenGrid yb1 = patchify_stem(b1, m4.enc, cfg4, FrameId::target);
  TokenGrid yb2 = patchify_stem(b2, m4.enc, cfg4, FrameId::target);
  auto [g1, v1] = joint_encode(ya, yb1, m4.enc, cfg4, /*joint=*/false);
  auto [g2, v2] = joint_encode(ya, yb2, m4.enc, cfg4, /*joint=*/false);
  CHECK((g1.t.m - g2.t.m).cwiseAbs().maxCoeff() == 0.0);
  // whereas the joint pass does couple them
  auto [j1, w1] = joint_encode(ya, yb1, m4.enc, cfg4, /*joint=*/true);
  auto [j2, w2] = joint_encode(ya, yb2, m4.enc, cfg4, /*joint=*/true);
  CHECK((j1.t.m - j2.t.m).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("dense decode: stride-2 contract and determinism") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  Rng rng(9);
  Image im = noise_image(rng, 70);
  TokenGrid x = patchify_stem(im, m.enc, cfg, FrameId::source);
  FeatureMap f1 = dense_decode(x, m.enc, cfg);
  CHECK(f1.h == 35);
  CHECK(f1.w == 35);
  CHECK(f1.t.cols() == 32);
  FeatureMap f2 = dense_decode(x, m.enc, cfg);
  CHECK(f1.t.m == f2.t.m);  // bit-identical
}

TEST_CASE("full shape law across sizes via provider") {
  for (int size : {70, 140}) {
    RunConfig cfg = toy32();
    cfg.image_size = size;
    cfg.fusion_ratio = size == 70 ? 7 : 7;  // 35 % 7, 70 % 7
    Model m = make_model(cfg);
    Rng rng(11);
    Image a = noise_image(rng, size), b = noise_image(rng, size);
    EncodedPair e = m.provider->encode(a, b, true);
    CHECK(e.f_s.h == size / 2);
    CHECK(e.f_t.w == size / 2);
  }
}

TEST_CASE("ground-truth tracker applies the transform; identity keeps points") {
  Affine2d t = Affine2d::similarity(1.2, 0.3, {34.5, 34.5}, 3.0, -2.0);
  GroundTruthTracker gt(t);
  Image a = Image::filled(70, 70, 0.5, 0.5, 0.5), b = a;
  PointSet ps;
  ps.pts = {{10, 20}, {40, 50}, {69, 0}};
  PointSet pt = track_points(ps, a, b, gt);
  REQUIRE(pt.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    Point2d want = t.apply(ps.pts[i]);
    want.x = std::clamp(want.x, 0.0, 69.0);
    want.y = std::clamp(want.y, 0.0, 69.0);
    CHECK(pt.pts[i].x == doctest::Approx(want.x));
    CHECK(pt.pts[i].y == doctest::Approx(want.y));
  }

  GroundTruthTracker ident(Affine2d::identity());
  PointSet same = track_points(ps, a, b, ident);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(same.pts[i].x == ps.pts[i].x);
    CHECK(same.pts[i].y == ps.pts[i].y);
  }

  PointSet empty;
  CHECK_THROWS_AS(track_points(empty, a, b, ident), ValueError);
}

TEST_CASE("feature-correlation tracker lands near ground truth on a translation pair") {
  RunConfig cfg = RunConfig::toy();
  cfg.seed = 21;
  Model m = make_model(cfg);
  // one textured instance, pure translation
  Rng rng(31);
  Scene scene = generate_scene(rng, Difficulty::easy, 70);
  scene.shapes.resize(1);
  scene.query_index = 0;
  ViewTransform vt;
  vt.fwd = Affine2d::translation(8, -5);
  vt.jitter_seed = 99;
  SynthPair pair = render_pair(scene, vt, 0);

  Rng prng(41);
  SampledPoints sp = sample_points(pair.m_s, 12, prng);
  FeatureCorrelationTracker fc(*m.provider, cfg);
  PointSet tracked = track_points(sp.points, pair.i_s, pair.i_t, fc);
  int close = 0;
  for (size_t i = 0; i < tracked.size(); ++i) {
    Point2d want = vt.fwd.apply(sp.points.pts[i]);
    double d = std::hypot(tracked.pts[i].x - want.x, tracked.pts[i].y - want.y);
    if (d <= 2.0 * cfg.patch_size) ++close;
  }
  CHECK(close >= static_cast<int>(0.8 * tracked.size()));
}

TEST_CASE("external provider round trip with tracked points") {
  RunConfig cfg = toy32();
  Model toy = make_model(cfg);
  Rng rng(13);
  Image a = noise_image(rng, 70), b = noise_image(rng, 70);
  EncodedPair e = toy.provider->encode(a, b, true);
  PointSet pts;
  pts.frame = FrameId::target;
  pts.pts = {{1.5, 2.5}, {30, 40}};

  auto dir = std::filesystem::temp_directory_path() / "xvseg_tests" / "external";
  std::filesystem::remove_all(dir);
  write_external_pair(dir.string(), "pair0", e.f_s, e.f_t, &pts);

  RunConfig ext = cfg;
  ext.encoder_provider = "external";
  ext.external_dir = dir.string();
  Model me = make_model(ext);
  EncodedPair back = me.provider->encode(a, b, true, "pair0");
  CHECK(back.f_s.t.m == e.f_s.t.m);
  CHECK(back.f_t.t.m == e.f_t.t.m);
  REQUIRE(back.tracked_points.has_value());
  CHECK(back.tracked_points->pts[1].x == 30.0);
  CHECK_THROWS_AS(me.provider->encode(a, b, true, ""), ConfigError);
  CHECK_THROWS(me.provider->encode(a, b, true, "nonexistent"));
}

TEST_CASE("encoder params carry the frozen flag") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  for (const auto& p : m.store->all())
    if (p->group == "encoder") CHECK(!p->trainable);
}

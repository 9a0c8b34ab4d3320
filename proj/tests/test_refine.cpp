#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xvseg/errors.hpp"
#include "xvseg/gradcheck.hpp"
#include "xvseg/kmeans.hpp"
#include "xvseg/synth.hpp"

using namespace xvseg;

namespace {
RunConfig toy32() {
  RunConfig c = RunConfig::toy();
  c.channels = 32;
  c.seed = 41;
  return c;
}
}  // namespace

TEST_CASE("psi application count equals refine_iters exactly") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  SynthPair pair = generate_pair(7, 0, Difficulty::easy, 70);
  GroundTruthTracker tr(pair.transform);
  for (int iters : {0, 1, 2, 3}) {
    PipelineOptions opt;
    opt.refine_iters = iters;
    PipelineResult res = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, opt);
    CHECK(res.psi_applications == iters);
  }
}

TEST_CASE("refine_iters=0 returns the initial prediction unchanged") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  SynthPair pair = generate_pair(9, 0, Difficulty::easy, 70);
  GroundTruthTracker tr(pair.transform);
  PipelineOptions o0;
  o0.refine_iters = 0;
  PipelineResult a = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, o0);
  PipelineOptions o2;
  o2.refine_iters = 2;
  PipelineResult b = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, o2);
  // the refined mask generally differs from the initial one
  double diff = 0;
  for (size_t i = 0; i < a.prob.v.size(); ++i) diff += std::abs(a.prob.v[i] - b.prob.v[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("refine output stays in (0,1) and is deterministic / stateless") {
  RunConfig cfg = toy32();
  Model m = make_model(cfg);
  SynthPair pair = generate_pair(11, 0, Difficulty::medium, 70);
  EncodedPair enc = m.provider->encode(pair.i_s, pair.i_t, true);
  GroundTruthTracker tr(pair.transform);
  PipelineResult base = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, {});

  MaskGrid m_hat = base.prob;
  FeatureMap fs = enc.f_s, ft = enc.f_t;
  MaskGrid r1 = refine(m, fs, pair.m_s, ft, m_hat, base.queries);
  MaskGrid r2 = refine(m, fs, pair.m_s, ft, m_hat, base.queries);
  CHECK(r1.v == r2.v);  // stateless: identical inputs, identical outputs
  for (double v : r1.v) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // inputs not mutated
  CHECK(m_hat.v == base.prob.v);

  // full pipeline determinism across runs
  PipelineResult again = run_pipeline(m, pair.i_s, pair.m_s, pair.i_t, tr, {});
  CHECK(again.prob.v == base.prob.v);
}

TEST_CASE("refine_schedule: seeded reproducibility and inference behavior") {
  Rng a(5), b(5);
  RefinePlan p1 = refine_schedule(8, 2, true, a);
  RefinePlan p2 = refine_schedule(8, 2, true, b);
  CHECK(p1.refined == p2.refined);
  bool any_refined = false, any_plain = false;
  Rng c(123);
  for (int trial = 0; trial < 20; ++trial) {
    RefinePlan p = refine_schedule(8, 2, true, c);
    for (bool r : p.refined) (r ? any_refined : any_plain) = true;
  }
  CHECK(any_refined);
  CHECK(any_plain);

  Rng d(7);
  RefinePlan inf = refine_schedule(4, 2, false, d);
  for (bool r : inf.refined) CHECK(r);
  RefinePlan zero = refine_schedule(4, 0, false, d);
  for (bool r : zero.refined) CHECK(!r);
  CHECK_THROWS_AS(refine_schedule(0, 2, true, d), ValueError);
}

TEST_CASE("gradients reach only the final refinement iteration") {
  // Separate refinement weights so the initial-prediction head and the
  // refinement decoder are disjoint parameter sets.
  RunConfig cfg = toy32();
  cfg.separate_refine_weights = true;
  Model m = make_model(cfg);

  auto inputs = make_gradcheck_inputs(m, 99);
  // keep only the refined sample: every gradient must come through psi
  std::vector<SampleForwardInputs> refined_only{inputs[1]};
  REQUIRE(refined_only[0].refined);

  GradMap grads = analytic_gradients(m, refined_only);
  double main_norm = 0, psi_norm = 0;
  for (const auto& [p, g] : grads) {
    if (p->group == "mask_refinement")
      psi_norm += g.m.squaredNorm();
    else
      main_norm += g.m.squaredNorm();
  }
  CHECK(psi_norm > 0.0);
  CHECK(main_norm == 0.0);  // severed prefix: exactly zero

  // Finite differences with the severed prefix held fixed: perturbing a
  // main-head parameter cannot change the loss.
  auto loss0 = gradcheck_loss(m, refined_only);
  Param* main_param = m.store->find("head.predict.mlp2.w");
  REQUIRE(main_param != nullptr);
  double theta = main_param->value.m(0, 0);
  main_param->value.m(0, 0) = theta + 1e-3;
  double up = gradcheck_loss(m, refined_only);
  main_param->value.m(0, 0) = theta - 1e-3;
  double dn = gradcheck_loss(m, refined_only);
  main_param->value.m(0, 0) = theta;
  CHECK(std::abs(up - dn) / 2e-3 < 1e-8);
  CHECK(std::abs(up - loss0) < 1e-12);

  // positive control: a psi parameter does move the loss
  Param* psi_param = m.store->find("refine.predict.mlp2.w");
  REQUIRE(psi_param != nullptr);
  double t2 = psi_param->value.m(0, 0);
  psi_param->value.m(0, 0) = t2 + 1e-3;
  double up2 = gradcheck_loss(m, refined_only);
  psi_param->value.m(0, 0) = t2 - 1e-3;
  double dn2 = gradcheck_loss(m, refined_only);
  psi_param->value.m(0, 0) = t2;
  CHECK(std::abs(up2 - dn2) / 2e-3 > 1e-8);
}

TEST_CASE("shared-weight refinement trains the shared decoder through psi") {
  RunConfig cfg = toy32();
  CHECK(!cfg.separate_refine_weights);
  Model m = make_model(cfg);
  auto inputs = make_gradcheck_inputs(m, 101);
  std::vector<SampleForwardInputs> refined_only{inputs[1]};
  GradMap grads = analytic_gradients(m, refined_only);
  double fusion_norm = 0, pgp_norm = 0;
  for (const auto& [p, g] : grads) {
    if (p->group == "mask_prompt_fusion") fusion_norm += g.m.squaredNorm();
    if (p->group == "point_guided_prediction") pgp_norm += g.m.squaredNorm();
  }
  CHECK(fusion_norm > 0.0);
  CHECK(pgp_norm > 0.0);
}

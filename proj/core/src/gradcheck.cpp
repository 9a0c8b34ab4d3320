#include "xvseg/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "xvseg/errors.hpp"
#include "xvseg/kmeans.hpp"
#include "xvseg/synth.hpp"

namespace xvseg {

bool GradCheckReport::pass(double min_fraction) const {
  for (const auto& m : modules) {
    if (m.checked == 0) return false;
    if (static_cast<double>(m.passed) / m.checked < min_fraction) return false;
  }
  return !modules.empty();
}

double gradcheck_loss(const Model& m, const std::vector<SampleForwardInputs>& inputs) {
  double total = 0;
  for (const auto& in : inputs) {
    Tape tp(false);
    total += sample_loss(tp, m, in).total.t().item();
  }
  return total;
}

GradMap analytic_gradients(const Model& m, const std::vector<SampleForwardInputs>& inputs) {
  GradMap grads;
  for (const auto& in : inputs) {
    Tape tp(true);
    LossValues lv = sample_loss(tp, m, in);
    tp.backward(lv.total);
    tp.for_each_param_grad([&grads](Param& p, const Tensor& g) {
      auto [it, fresh] = grads.emplace(&p, g);
      if (!fresh) it->second.m += g.m;
    });
  }
  return grads;
}

GradCheckReport compare_with_fd(Model& m, const std::vector<SampleForwardInputs>& inputs,
                                const GradMap& analytic, int per_module, double tol,
                                Rng& rng) {
  auto t0 = std::chrono::steady_clock::now();
  // Module -> trainable params.
  std::map<std::string, std::vector<Param*>> by_module;
  for (const auto& p : m.store->all())
    if (p->trainable) by_module[p->group].push_back(p.get());

  GradCheckReport report;
  for (auto& [module, params] : by_module) {
    GradCheckModuleStat stat;
    stat.module = module;
    for (int i = 0; i < per_module; ++i) {
      Param* p = params[rng.uniform_int(static_cast<int>(params.size()))];
      int flat = rng.uniform_int(static_cast<int>(p->value.size()));
      double* slot = p->value.m.data() + flat;
      const double theta = *slot;
      const double h = 1e-3 * std::max(std::abs(theta), 1e-2);
      *slot = theta + h;
      double up = gradcheck_loss(m, inputs);
      *slot = theta - h;
      double down = gradcheck_loss(m, inputs);
      *slot = theta;
      double fd = (up - down) / (2.0 * h);
      double an = 0;
      if (auto it = analytic.find(p); it != analytic.end())
        an = it->second.m.data()[flat];
      double err = std::abs(fd - an);
      double rel = err / std::max({std::abs(fd), std::abs(an), 1e-8});
      bool ok = rel <= tol || err <= 1e-10;
      ++stat.checked;
      if (ok) ++stat.passed;
      if (rel > stat.max_rel_err && err > 1e-10) {
        stat.max_rel_err = rel;
        stat.worst_analytic = an;
        stat.worst_fd = fd;
        stat.worst_param = p->name + "[" + std::to_string(flat) + "]";
      }
    }
    report.modules.push_back(std::move(stat));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

GradCheckReport grad_check(Model& m, const std::vector<SampleForwardInputs>& inputs,
                           int per_module, double tol, Rng& rng) {
  GradMap grads = analytic_gradients(m, inputs);
  return compare_with_fd(m, inputs, grads, per_module, tol, rng);
}

std::vector<SampleForwardInputs> make_gradcheck_inputs(const Model& m, std::uint64_t seed) {
  const RunConfig& cfg = m.cfg;
  std::vector<SampleForwardInputs> inputs;
  for (int i = 0; i < 2; ++i) {
    SynthPair pair = generate_pair(seed, static_cast<std::uint64_t>(i), Difficulty::easy,
                                   cfg.image_size);
    EncodedPair enc = m.provider->encode(pair.i_s, pair.i_t, true);
    Rng rng(Rng::mix(seed, 0x6763ull + i));
    PointSet p_s = sample_points(pair.m_s, cfg.k_points, rng).points;
    GroundTruthTracker gt(pair.transform);
    PointSet p_t = track_points(p_s, pair.i_s, pair.i_t, gt);
    // Sample 0 exercises the plain head path, sample 1 the refinement path.
    inputs.push_back(
        prepare_sample_inputs(m, enc, pair.m_s, pair.m_t, p_s, p_t, /*refined=*/i == 1));
  }
  return inputs;
}

}  // namespace xvseg

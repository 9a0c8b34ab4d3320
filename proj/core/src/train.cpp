#include "xvseg/train.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "xvseg/errors.hpp"
#include "xvseg/kmeans.hpp"

namespace xvseg {

GradAccum::GradAccum(const ParamStore& ps)
    : g_(ps.all().size()), live_(ps.all().size(), 0) {}

void GradAccum::add(const Param& p, const Tensor& g, double scale) {
  Tensor& slot = g_[p.index];
  if (!live_[p.index]) {
    slot.m = scale * g.m;
    live_[p.index] = 1;
  } else {
    slot.m += scale * g.m;
  }
}

void GradAccum::add_scaled(const GradAccum& other, double scale) {
  for (size_t i = 0; i < g_.size(); ++i) {
    if (!other.live_[i]) continue;
    if (!live_[i]) {
      g_[i].m = scale * other.g_[i].m;
      live_[i] = 1;
    } else {
      g_[i].m += scale * other.g_[i].m;
    }
  }
}

double GradAccum::global_norm() const {
  double sq = 0;
  for (size_t i = 0; i < g_.size(); ++i)
    if (live_[i]) sq += g_[i].m.squaredNorm();
  return std::sqrt(sq);
}

double GradAccum::clip(double max_norm) {
  double norm = global_norm();
  if (norm > max_norm && norm > 0) {
    double s = max_norm / norm;
    for (size_t i = 0; i < g_.size(); ++i)
      if (live_[i]) g_[i].m *= s;
  }
  return norm;
}

const Tensor* GradAccum::grad(const Param& p) const {
  return live_[p.index] ? &g_[p.index] : nullptr;
}

bool GradAccum::finite() const {
  for (size_t i = 0; i < g_.size(); ++i)
    if (live_[i] && !g_[i].m.allFinite()) return false;
  return true;
}

AdamW::AdamW(ParamStore& ps, double beta1, double beta2, double eps)
    : ps_(ps), b1_(beta1), b2_(beta2), eps_(eps) {
  m_.resize(ps.all().size());
  v_.resize(ps.all().size());
  for (const auto& p : ps.all()) {
    if (!p->trainable) continue;
    m_[p->index] = Tensor::matrix(p->value.rows(), p->value.cols());
    v_[p->index] = Tensor::matrix(p->value.rows(), p->value.cols());
  }
}

void AdamW::step(const GradAccum& grads, double lr, double weight_decay) {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  for (const auto& p : ps_.all()) {
    if (!p->trainable) continue;
    const Tensor* g = grads.grad(*p);
    if (!g) {
      // Untouched this step (e.g. ablated component): no decay, no moments.
      continue;
    }
    Mat& m = m_[p->index].m;
    Mat& v = v_[p->index].m;
    m = b1_ * m + (1.0 - b1_) * g->m;
    v = b2_ * v + (1.0 - b2_) * g->m.cwiseProduct(g->m);
    Mat mhat = m / bc1;
    Mat vhat = v / bc2;
    p->value.m -= lr * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
    p->value.m -= lr * weight_decay * p->value.m;
  }
}

double lr_for_epoch(const RunConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int de : cfg.lr_decay_epochs)
    if (epoch > de) lr *= cfg.lr_decay_factor;
  return lr;
}

SampleForwardInputs prepare_sample_inputs(const Model& m, const EncodedPair& enc,
                                          const MaskGrid& m_s, const MaskGrid& gt,
                                          const PointSet& p_s, const PointSet& p_t,
                                          bool refined) {
  SampleForwardInputs in;
  in.f_s = enc.f_s.t;
  in.f_t = enc.f_t.t;
  in.m_s = m_s;
  in.gt = gt;
  in.p_s = p_s;
  in.p_t = p_t;
  in.refined = refined && m.cfg.use_refinement && m.cfg.refine_iters > 0;
  if (!in.refined) return in;

  // Gradients flow only through the final iteration: run the initial
  // prediction and all earlier iterations without recording.
  Tape tp(false);
  Value f_s = tp.constant(in.f_s);
  Value f_t = tp.constant(in.f_t);
  HeadForwardOut fwd = head_forward(tp, m.cfg, m.head, f_s, f_t, m_s, &in.p_s, &in.p_t);
  in.carried_q = fwd.queries.t();
  Value mask = fwd.mask_prob;
  Value q = tp.constant(in.carried_q);
  for (int k = 0; k < m.cfg.refine_iters - 1; ++k)
    mask = refine_once(tp, m.cfg, m.psi(), f_s, m_s, f_t, mask, q);
  in.m_prev = MaskGrid::from_grid_tensor(mask.t(), false);
  return in;
}

LossValues sample_loss(Tape& tp, const Model& m, const SampleForwardInputs& in) {
  Value f_s = tp.constant(in.f_s);
  Value f_t = tp.constant(in.f_t);
  Value mask;
  if (in.refined) {
    Value m_prev = tp.constant(in.m_prev.as_grid_tensor());
    Value q = tp.constant(in.carried_q);
    mask = refine_once(tp, m.cfg, m.psi(), f_s, in.m_s, f_t, m_prev, q);
  } else {
    HeadForwardOut fwd = head_forward(tp, m.cfg, m.head, f_s, f_t, in.m_s, &in.p_s, &in.p_t);
    mask = fwd.mask_prob;
  }
  return total_loss(tp, mask, in.gt, m.cfg.focal_weight, m.cfg.dice_weight);
}

namespace {

struct WorkerOut {
  GradAccum grads;
  double loss = 0, focal = 0, dice = 0;
  explicit WorkerOut(const ParamStore& ps) : grads(ps) {}
};

// Full per-sample training computation: augment, encode, prompt, forward,
// backward. Deterministic given (cfg.seed, epoch, sample.id).
WorkerOut run_training_sample(const Model& m, const TrainSample& sample, int epoch,
                              bool refined) {
  const RunConfig& cfg = m.cfg;
  Rng rng(Rng::mix(Rng::mix(cfg.seed, 0x73616d706c65ull + static_cast<std::uint64_t>(epoch)),
                   sample.id));
  AugFamily family = rng.bernoulli(0.5) ? AugFamily::adaptive : AugFamily::non_adaptive;
  AugmentedPair pair = augment(sample.image, sample.mask, family, rng);

  // Non-adaptive views are encoded independently (no cross-frame attention).
  EncodedPair enc = m.provider->encode(pair.src, pair.tgt,
                                       /*joint=*/family == AugFamily::adaptive);

  SampledPoints sp = sample_points(pair.m_src, cfg.k_points, rng);
  PointSet p_s = sp.points;
  PointSet p_t;
  if (family == AugFamily::adaptive) {
    if (cfg.tracker == "feature_correlation") {
      FeatureCorrelationTracker fc(enc.f_s, enc.f_t, cfg);
      p_t = track_points(p_s, pair.src, pair.tgt, fc);
    } else {
      GroundTruthTracker gt(pair.transform);
      p_t = track_points(p_s, pair.src, pair.tgt, gt);
    }
  } else {
    double diag = std::hypot(static_cast<double>(pair.tgt.w), static_cast<double>(pair.tgt.h));
    p_t.frame = FrameId::target;
    for (const auto& p : p_s.pts) {
      Point2d q = pair.transform.apply(p);
      q.x = std::clamp(q.x + rng.normal(0.0, kPromptNoiseFrac * diag), 0.0,
                       static_cast<double>(pair.tgt.w - 1));
      q.y = std::clamp(q.y + rng.normal(0.0, kPromptNoiseFrac * diag), 0.0,
                       static_cast<double>(pair.tgt.h - 1));
      p_t.pts.push_back(q);
    }
  }

  SampleForwardInputs in =
      prepare_sample_inputs(m, enc, pair.m_src, pair.m_tgt, p_s, p_t, refined);
  Tape tp(true);
  LossValues lv = sample_loss(tp, m, in);
  tp.backward(lv.total);

  WorkerOut out(*m.store);
  out.loss = lv.total.t().item();
  out.focal = lv.focal.t().item();
  out.dice = lv.dice.t().item();
  tp.for_each_param_grad([&out](Param& p, const Tensor& g) { out.grads.add(p, g); });
  return out;
}

}  // namespace

TrainResult train(Model& m, const std::vector<TrainSample>& data, const TrainOptions& opt) {
  const RunConfig& cfg = m.cfg;
  if (data.empty()) throw ValueError("train: empty dataset");
  if (m.provider->id() != "toy")
    throw ConfigError("train: self-supervised training needs the toy encoder provider "
                      "(augmented views cannot be precomputed)");

  TrainResult res;
  res.encoder_checksum_before = m.store->checksum("encoder");

  std::ofstream metrics;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    metrics.open(std::filesystem::path(opt.out_dir) / "metrics.log", std::ios::app);
  }

  AdamW optim(*m.store);
  const int epochs = opt.epochs_override >= 0 ? opt.epochs_override : cfg.epochs;
  const int threads = std::max(1, opt.threads);
  int global_step = 0;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const double lr = lr_for_epoch(cfg, epoch);
    res.epoch_lr.push_back(lr);

    // Deterministic shuffle per epoch.
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::mix(cfg.seed, 0x736875666cull + static_cast<std::uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const int bs = static_cast<int>(std::min<size_t>(cfg.batch_size, order.size() - b0));
      Rng plan_rng(Rng::mix(Rng::mix(cfg.seed, 0x726566696e65ull),
                            static_cast<std::uint64_t>(epoch) * 1000003ull + b0));
      RefinePlan plan = refine_schedule(bs, cfg.use_refinement ? cfg.refine_iters : 0,
                                        /*training=*/true, plan_rng);

      std::vector<std::unique_ptr<WorkerOut>> outs(bs);
      std::atomic<int> next{0};
      auto worker = [&]() {
        for (int i = next.fetch_add(1); i < bs; i = next.fetch_add(1))
          outs[i] = std::make_unique<WorkerOut>(
              run_training_sample(m, data[order[b0 + i]], epoch, plan.refined[i]));
      };
      if (threads == 1 || bs == 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < std::min(threads, bs); ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
      }

      // Reduce in sample order so results are bit-stable across thread
      // schedules.
      GradAccum total(*m.store);
      double loss = 0, focal = 0, dice = 0;
      for (int i = 0; i < bs; ++i) {
        total.add_scaled(outs[i]->grads, 1.0 / bs);
        loss += outs[i]->loss / bs;
        focal += outs[i]->focal / bs;
        dice += outs[i]->dice / bs;
      }
      if (!std::isfinite(loss) || !total.finite()) {
        if (!opt.out_dir.empty()) {
          std::ofstream dump(std::filesystem::path(opt.out_dir) / "diverged_batch.txt");
          dump << "epoch=" << epoch << " step=" << global_step + 1 << " loss=" << loss << "\n";
          for (int i = 0; i < bs; ++i)
            dump << "sample_id=" << data[order[b0 + i]].id << " loss=" << outs[i]->loss
                 << "\n";
        }
        throw ValueError("train: non-finite loss at epoch " + std::to_string(epoch));
      }

      double pre = total.clip(cfg.clip_norm);
      double post = total.global_norm();
      optim.step(total, lr, cfg.weight_decay);
      ++global_step;

      StepMetrics sm;
      sm.epoch = epoch;
      sm.step = global_step;
      sm.loss = loss;
      sm.focal = focal;
      sm.dice = dice;
      sm.lr = lr;
      sm.grad_norm_pre = pre;
      sm.grad_norm_post = post;
      res.steps.push_back(sm);
      if (metrics.is_open()) {
        metrics << "step=" << sm.step << " epoch=" << sm.epoch << " loss=" << sm.loss
                << " focal=" << sm.focal << " dice=" << sm.dice << " lr=" << sm.lr
                << " grad_norm_pre=" << sm.grad_norm_pre
                << " grad_norm_post=" << sm.grad_norm_post << "\n";
        metrics.flush();
      }
    }

    if (!opt.out_dir.empty() && opt.epoch_checkpoints)
      save_checkpoint(m, (std::filesystem::path(opt.out_dir) /
                          ("ckpt_epoch_" + std::to_string(epoch))).string());
  }

  if (!opt.out_dir.empty())
    save_checkpoint(m, (std::filesystem::path(opt.out_dir) / "ckpt_final").string());
  res.total_steps = global_step;
  res.encoder_checksum_after = m.store->checksum("encoder");
  return res;
}

}  // namespace xvseg

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include "cli_common.hpp"
#include "xvseg/dataset.hpp"
#include "xvseg/errors.hpp"
#include "xvseg/metrics.hpp"
#include "xvseg/train.hpp"

namespace {

struct EvalOpts {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string direction = "s2t";  // s2t | t2s | both
  std::string out;
  std::string tracker;  // empty: checkpoint config
  int refine_iters = -1;
  int threads = 2;
  int limit = 0;
};

struct DirectionResult {
  std::vector<double> ious;
  xvseg::BootstrapCi ci;
};

DirectionResult eval_direction(const xvseg::Model& model, const xvseg::DatasetManifest& man,
                               const EvalOpts& o, bool reverse) {
  using namespace xvseg;
  auto entries = man.split_entries(o.split);
  if (o.limit > 0 && static_cast<int>(entries.size()) > o.limit)
    entries.resize(o.limit);
  if (entries.empty()) throw ValueError("eval: split '" + o.split + "' is empty");

  std::string tracker_kind = o.tracker.empty() ? model.cfg.tracker : o.tracker;
  std::vector<double> ious(entries.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < entries.size(); i = next.fetch_add(1)) {
      const DatasetEntry& e = *entries[i];
      LoadedPair p = load_pair(e);
      const Image& i_s = reverse ? p.i_t : p.i_s;
      const Image& i_t = reverse ? p.i_s : p.i_t;
      const MaskGrid& m_s = reverse ? p.m_t : p.m_s;
      const MaskGrid& m_gt = reverse ? p.m_s : p.m_t;
      Affine2d fwd = reverse ? e.transform.inverse() : e.transform;

      std::unique_ptr<Tracker> tracker;
      if (tracker_kind == "feature_correlation")
        tracker = std::make_unique<FeatureCorrelationTracker>(*model.provider, model.cfg);
      else
        tracker = std::make_unique<GroundTruthTracker>(fwd);

      PipelineOptions opt;
      opt.refine_iters = o.refine_iters;
      opt.point_seed = e.id;
      opt.pair_id = std::to_string(e.id);
      PipelineResult res = run_pipeline(model, i_s, m_s, i_t, *tracker, opt);
      ious[i] = iou(res.binary, m_gt);
    }
  };
  if (o.threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < o.threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  DirectionResult r;
  r.ious = std::move(ious);
  r.ci = bootstrap_mean_ci(r.ious, 1000, 0.95, model.cfg.seed ^ 0xC1);
  return r;
}

void run_eval(const EvalOpts& o) {
  using namespace xvseg;
  Model model = load_checkpoint(o.checkpoint);
  DatasetManifest man = load_dataset(o.data);
  cli::RunManifest manifest("eval", model.cfg);

  std::ostringstream report;
  report.precision(6);
  auto emit = [&](const char* tag, const DirectionResult& r) {
    report << "direction=" << tag << " split=" << o.split << " n=" << r.ious.size()
           << " mean_iou=" << r.ci.mean << " ci95_lo=" << r.ci.lo << " ci95_hi=" << r.ci.hi
           << "\n";
    std::cout << tag << ": mean IoU " << r.ci.mean << " [" << r.ci.lo << ", " << r.ci.hi
              << "] over " << r.ious.size() << " pairs\n";
    manifest.set(std::string("mean_iou_") + tag, r.ci.mean);
  };

  if (o.direction == "s2t" || o.direction == "both")
    emit("s2t", eval_direction(model, man, o, false));
  if (o.direction == "t2s" || o.direction == "both")
    emit("t2s", eval_direction(model, man, o, true));

  if (!o.out.empty()) {
    std::filesystem::create_directories(std::filesystem::path(o.out).parent_path().empty()
                                            ? "."
                                            : std::filesystem::path(o.out).parent_path().string());
    std::ofstream f(o.out);
    f << report.str();
    manifest.add_artifact(o.out);
    manifest.write(std::filesystem::path(o.out).parent_path().string().empty()
                       ? "."
                       : std::filesystem::path(o.out).parent_path().string());
  }
}

}  // namespace

void register_eval(CLI::App& app) {
  auto opts = std::make_shared<EvalOpts>();
  CLI::App* sub = app.add_subcommand("eval", "mean IoU of a checkpoint on a dataset");
  sub->add_option("--checkpoint", opts->checkpoint, "checkpoint directory")->required();
  sub->add_option("--data", opts->data, "dataset directory")->required();
  sub->add_option("--split", opts->split, "train | val");
  sub->add_option("--direction", opts->direction, "s2t | t2s | both")
      ->check(CLI::IsMember({"s2t", "t2s", "both"}));
  sub->add_option("--out", opts->out, "report file path");
  sub->add_option("--tracker", opts->tracker, "override tracker");
  sub->add_option("--refine-iters", opts->refine_iters, "override refinement iterations");
  sub->add_option("--threads", opts->threads, "worker threads");
  sub->add_option("--limit", opts->limit, "evaluate at most this many pairs");
  sub->callback([opts]() { run_eval(*opts); });
}

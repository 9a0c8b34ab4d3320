#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "cli_common.hpp"
#include "xvseg/errors.hpp"
#include "xvseg/mask_io.hpp"
#include "xvseg/metrics.hpp"
#include "xvseg/train.hpp"
#include "xvseg/viz.hpp"

namespace {

struct InferOpts {
  std::string checkpoint;
  std::string source, source_mask, target;
  std::string out;
  std::string tracker = "feature_correlation";
  std::string transform;  // a11,a12,a21,a22,tx,ty for ground_truth tracking
  int refine_iters = -1;
  std::uint64_t point_seed = 0;
};

xvseg::Affine2d parse_transform(const std::string& s) {
  std::istringstream ss(s);
  double v[6];
  char comma;
  for (int i = 0; i < 6; ++i) {
    if (!(ss >> v[i])) throw xvseg::ConfigError("--transform needs 6 comma-separated values");
    if (i < 5) ss >> comma;
  }
  return xvseg::Affine2d{v[0], v[1], v[2], v[3], v[4], v[5]};
}

void run_infer(const InferOpts& o) {
  using namespace xvseg;
  namespace fs = std::filesystem;
  Model model = load_checkpoint(o.checkpoint);
  cli::RunManifest manifest("infer", model.cfg);

  Image i_s = read_image(o.source);
  Image i_t = read_image(o.target);
  MaskGrid m_s = read_mask(o.source_mask);
  if (m_s.empty_mask()) throw ValueError("empty source mask");

  std::unique_ptr<Tracker> tracker;
  if (o.tracker == "ground_truth") {
    if (o.transform.empty())
      throw ConfigError("--tracker ground_truth needs --transform a11,a12,a21,a22,tx,ty");
    tracker = std::make_unique<GroundTruthTracker>(parse_transform(o.transform));
  } else {
    tracker = std::make_unique<FeatureCorrelationTracker>(*model.provider, model.cfg);
  }

  PipelineOptions opt;
  opt.refine_iters = o.refine_iters;
  opt.point_seed = o.point_seed;
  PipelineResult res = run_pipeline(model, i_s, m_s, i_t, *tracker, opt);

  fs::create_directories(o.out);
  std::string mask_path = (fs::path(o.out) / "pred_mask.png").string();
  std::string ovl_s_path = (fs::path(o.out) / "overlay_source.png").string();
  std::string ovl_t_path = (fs::path(o.out) / "overlay_target.png").string();
  write_mask(res.binary, mask_path);

  Image ovl_s = overlay_mask(i_s, m_s, 0.9, 0.15, 0.15);
  draw_points(ovl_s, res.p_s, 1.0, 1.0, 0.1);
  write_image(ovl_s, ovl_s_path);

  Image ovl_t = overlay_mask(i_t, res.binary, 0.1, 0.85, 0.2);
  draw_points(ovl_t, res.p_t, 1.0, 1.0, 0.1);
  write_image(ovl_t, ovl_t_path);

  if (m_s.h == res.binary.h && m_s.w == res.binary.w)
    std::cout << "iou_vs_source_mask=" << iou(res.binary, m_s) << "\n";
  std::cout << "pred_mask=" << mask_path << "\noverlay_source=" << ovl_s_path
            << "\noverlay_target=" << ovl_t_path
            << "\nrefine_applications=" << res.psi_applications << "\n";

  manifest.add_artifact(mask_path);
  manifest.add_artifact(ovl_s_path);
  manifest.add_artifact(ovl_t_path);
  manifest.write(o.out);
}

}  // namespace

void register_infer(CLI::App& app) {
  auto opts = std::make_shared<InferOpts>();
  CLI::App* sub = app.add_subcommand("infer", "predict a target mask for one pair");
  sub->add_option("--checkpoint", opts->checkpoint, "checkpoint directory")->required();
  sub->add_option("--source", opts->source, "source image PNG")->required();
  sub->add_option("--source-mask", opts->source_mask, "source mask PNG")->required();
  sub->add_option("--target", opts->target, "target image PNG")->required();
  sub->add_option("--out", opts->out, "output directory")->required();
  sub->add_option("--tracker", opts->tracker, "feature_correlation | ground_truth");
  sub->add_option("--transform", opts->transform, "a11,a12,a21,a22,tx,ty (ground_truth)");
  sub->add_option("--refine-iters", opts->refine_iters, "override refinement iterations");
  sub->add_option("--point-seed", opts->point_seed, "prompt sampling seed");
  sub->callback([opts]() { run_infer(*opts); });
}

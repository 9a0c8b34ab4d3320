#include <iostream>
#include <memory>

#include "cli_common.hpp"
#include "xvseg/dataset.hpp"
#include "xvseg/errors.hpp"
#include "xvseg/mask_io.hpp"
#include "xvseg/train.hpp"

namespace {

struct TrainOpts {
  xvseg::cli::ConfigFlags flags;
  std::string data;
  std::string out;
  int threads = 2;
  bool no_epoch_checkpoints = false;
};

void run_train(const TrainOpts& o) {
  using namespace xvseg;
  RunConfig cfg = o.flags.resolve();
  cli::RunManifest manifest("train", cfg);

  DatasetManifest man = load_dataset(o.data);
  if (man.canvas != cfg.image_size)
    throw ConfigError("dataset canvas " + std::to_string(man.canvas) +
                      " != configured image size " + std::to_string(cfg.image_size));
  // Self-supervised training consumes single images: the source side of each
  // train pair, with its mask as the pseudo label.
  std::vector<TrainSample> samples;
  for (const DatasetEntry* e : man.split_entries("train")) {
    TrainSample s;
    s.image = read_image(e->img_s);
    s.mask = read_mask(e->mask_s);
    s.id = e->id;
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ValueError("train: dataset has no train split");
  std::cout << "training on " << samples.size() << " images, " << cfg.epochs << " epochs"
            << (o.flags.ablate.empty() ? "" : ", ablate=" + o.flags.ablate) << "\n";

  Model model = make_model(cfg);
  TrainOptions topt;
  topt.out_dir = o.out;
  topt.threads = o.threads;
  topt.epoch_checkpoints = !o.no_epoch_checkpoints;
  TrainResult res = train(model, samples, topt);

  manifest.set("steps", static_cast<double>(res.total_steps));
  if (!res.steps.empty()) manifest.set("final_loss", res.steps.back().loss);
  manifest.set("encoder_frozen",
               res.encoder_checksum_before == res.encoder_checksum_after ? "true" : "false");
  manifest.add_artifact(o.out + "/ckpt_final");
  manifest.add_artifact(o.out + "/metrics.log");
  manifest.write(o.out);
  std::cout << "done: " << res.total_steps << " steps, final loss "
            << (res.steps.empty() ? 0.0 : res.steps.back().loss) << ", checkpoint at "
            << o.out << "/ckpt_final\n";
}

}  // namespace

void register_train(CLI::App& app) {
  auto opts = std::make_shared<TrainOpts>();
  CLI::App* sub = app.add_subcommand("train", "self-supervised training of the head");
  sub->add_option("--data", opts->data, "dataset directory (from `gen`)")->required();
  sub->add_option("--out", opts->out, "output directory")->required();
  sub->add_option("--threads", opts->threads, "worker threads");
  sub->add_flag("--no-epoch-checkpoints", opts->no_epoch_checkpoints,
                "only write the final checkpoint");
  opts->flags.cfg = xvseg::RunConfig::toy();
  opts->flags.attach(*sub, /*training_flags=*/true);
  sub->callback([opts]() { run_train(*opts); });
}

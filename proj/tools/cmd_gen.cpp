#include <iostream>
#include <memory>

#include "cli_common.hpp"
#include "xvseg/dataset.hpp"

namespace {

struct GenOpts {
  int n = 0;
  std::string difficulty = "medium";
  std::string out;
  double split = 0.9;
  int image_size = 70;
  std::uint64_t seed = 0;
};

void run_gen(const GenOpts& o) {
  using namespace xvseg;
  RunConfig cfg;
  cfg.image_size = o.image_size;
  cfg.seed = o.seed;
  cli::RunManifest manifest("gen", cfg);
  DatasetManifest man = export_dataset(o.n, o.out, o.split, parse_difficulty(o.difficulty),
                                       o.image_size, o.seed);
  int train_n = static_cast<int>(man.split_entries("train").size());
  int val_n = static_cast<int>(man.split_entries("val").size());
  manifest.set("pairs", static_cast<double>(o.n));
  manifest.set("train", static_cast<double>(train_n));
  manifest.set("val", static_cast<double>(val_n));
  manifest.add_artifact(o.out + "/manifest.txt");
  manifest.write(o.out);
  std::cout << "wrote " << o.n << " pairs (" << train_n << " train / " << val_n
            << " val) to " << o.out << "\n";
}

}  // namespace

void register_gen(CLI::App& app) {
  auto opts = std::make_shared<GenOpts>();
  CLI::App* sub = app.add_subcommand("gen", "generate a synthetic cross-view dataset");
  sub->add_option("--n", opts->n, "number of pairs")->required()->check(CLI::PositiveNumber);
  sub->add_option("--difficulty", opts->difficulty, "easy | medium | hard")
      ->check(CLI::IsMember({"easy", "medium", "hard"}));
  sub->add_option("--out", opts->out, "output directory")->required();
  sub->add_option("--split", opts->split, "train fraction (default 0.9)");
  sub->add_option("--image-size", opts->image_size, "canvas side length");
  sub->add_option("--seed", opts->seed, "generator seed");
  sub->callback([opts]() { run_gen(*opts); });
}

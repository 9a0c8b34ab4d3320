#include <iostream>

#include "cli_common.hpp"
#include "xvseg/tensor_store.hpp"

namespace xvseg::cli {

void ConfigFlags::attach(CLI::App& app, bool training_flags) {
  app.set_config("--config", "", "INI config file (key = value); flags win");
  app.add_option("--image-size", cfg.image_size, "input side length (e.g. 70, 420, 518, 700)");
  app.add_option("--patch-size", cfg.patch_size, "encoder patch size");
  app.add_option("--channels", cfg.channels, "feature channels C");
  app.add_option("--points", cfg.k_points, "number of prompt points K");
  app.add_option("--fusion-ratio", cfg.fusion_ratio, "bottleneck down/upsampling ratio r");
  app.add_option("--fusion-size", fusion_size,
                 "bottleneck grid side; alternative to --fusion-ratio");
  app.add_option("--blocks", cfg.decoder_blocks, "decoder block count L");
  app.add_option("--refine-iters", cfg.refine_iters, "mask refinement iterations");
  app.add_option("--heads", cfg.attn_heads, "attention heads");
  app.add_option("--encoder-blocks", cfg.encoder_blocks, "encoder depth");
  app.add_option("--seed", cfg.seed, "run seed");
  app.add_option("--tracker", cfg.tracker, "ground_truth | feature_correlation");
  app.add_option("--encoder-provider", cfg.encoder_provider, "toy | external");
  app.add_option("--external-dir", cfg.external_dir, "feature dir for external provider");
  app.add_flag("--separate-refine-weights", cfg.separate_refine_weights,
               "refinement decoder gets its own weights");
  app.add_flag("--null-mask-embed-target", cfg.null_mask_embed_target,
               "add a learned null-mask embedding to target features");
  app.add_flag("--prompts-from-injected", cfg.prompts_from_injected,
               "sample point features from mask-injected source features");
  app.add_flag("--logit-upsample", cfg.logit_upsample,
               "upsample logits instead of probabilities");
  if (training_flags) {
    app.add_option("--lr", cfg.lr, "initial learning rate");
    app.add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
    app.add_option("--epochs", cfg.epochs, "training epochs");
    app.add_option("--batch", cfg.batch_size, "batch size");
    app.add_option("--clip-norm", cfg.clip_norm, "global gradient norm clip");
    app.add_option("--focal-weight", cfg.focal_weight, "focal loss weight");
    app.add_option("--dice-weight", cfg.dice_weight, "dice loss weight");
    app.add_option("--ablate", ablate,
                   "component subset: plain (mask+token only), bf (+fusion), "
                   "pgp (+points), mr (full)")
        ->check(CLI::IsMember({"plain", "bf", "pgp", "mr"}));
  }
}

RunConfig ConfigFlags::resolve() const {
  RunConfig out = cfg;
  if (fusion_size > 0) {
    if (out.feat_size() % fusion_size != 0)
      throw CLI::ValidationError("--fusion-size",
                                 "feature resolution " + std::to_string(out.feat_size()) +
                                     " is not divisible by " + std::to_string(fusion_size));
    out.fusion_ratio = out.feat_size() / fusion_size;
  }
  if (ablate == "plain") {
    out.use_bottleneck_fusion = false;
    out.use_point_guidance = false;
    out.use_refinement = false;
  } else if (ablate == "bf") {
    out.use_bottleneck_fusion = true;
    out.use_point_guidance = false;
    out.use_refinement = false;
  } else if (ablate == "pgp") {
    out.use_bottleneck_fusion = true;
    out.use_point_guidance = true;
    out.use_refinement = false;
  }  // "mr" and "" keep everything on
  out.validate();
  return out;
}

std::string iso_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  return buf;
}

RunManifest::RunManifest(std::string command, const RunConfig& cfg) {
  kv_["command"] = std::move(command);
  kv_["git_describe"] = XVSEG_GIT_DESCRIBE;
  kv_["start_time"] = iso_now();
  for (const auto& [k, v] : cfg.to_kv()) kv_["config." + k] = v;
}

void RunManifest::set(const std::string& key, const std::string& value) { kv_[key] = value; }
void RunManifest::set(const std::string& key, double value) {
  kv_[key] = std::to_string(value);
}
void RunManifest::add_artifact(const std::string& path) {
  kv_["artifact." + std::to_string(artifacts_++)] = path;
}

void RunManifest::write(const std::string& out_dir) {
  kv_["end_time"] = iso_now();
  write_kv_file(out_dir + "/run_manifest.txt", kv_);
}

}  // namespace xvseg::cli

int main(int argc, char** argv) {
  CLI::App app{"cross-view instance segmentation: dataset generation, "
               "self-supervised training, evaluation, inference, timing"};
  app.require_subcommand(1);
  register_gen(app);
  register_train(app);
  register_eval(app);
  register_infer(app);
  register_bench(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // stable contract: usage errors exit 1
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#pragma once

#include <CLI11.hpp>
#include <map>
#include <memory>
#include <string>

#include "xvseg/image.hpp"

namespace xvseg::cli {

// Shared model flags mirroring the RunConfig field names. Precedence is
// CLI flag > config file (--config, INI key = value) > built-in default.
struct ConfigFlags {
  RunConfig cfg;
  int fusion_size = 0;  // alternative to --fusion-ratio: bottleneck grid side
  std::string ablate;   // plain | bf | pgp | mr

  void attach(CLI::App& app, bool training_flags);
  RunConfig resolve() const;  // applies fusion_size/ablate, validates
};

std::string iso_now();

// Run manifest: config snapshot, seed, build stamp, timestamps, metrics and
// artifact paths; written atomically at the end of a command.
class RunManifest {
 public:
  RunManifest(std::string command, const RunConfig& cfg);
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void add_artifact(const std::string& path);
  void write(const std::string& out_dir);

 private:
  std::map<std::string, std::string> kv_;
  int artifacts_ = 0;
};

}  // namespace xvseg::cli

void register_gen(CLI::App& app);
void register_train(CLI::App& app);
void register_eval(CLI::App& app);
void register_infer(CLI::App& app);
void register_bench(CLI::App& app);

// mecd command-line interface. Links the C API only.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mecd.h"

namespace {

struct ConfigDeleter {
  void operator()(mecd_config* c) const { mecd_config_free(c); }
};
using ConfigPtr = std::unique_ptr<mecd_config, ConfigDeleter>;

int fail_status(mecd_status st, const char* what) {
  std::fprintf(stderr, "error: %s: %s (%s)\n", what, mecd_last_error(), mecd_status_name(st));
  return st == MECD_E_USAGE ? 1 : 2;
}

std::string resolve(const std::string& workdir, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(workdir) / p).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mecd: multi-event video causal discovery toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string workdir = ".";
  std::string config_file;
  std::vector<std::string> overrides;
  app.add_option("--workdir", workdir, "Root directory for relative paths");
  app.add_option("--config", config_file, "Configuration file (key = value lines)");
  app.add_option("--set", overrides, "Override a configuration key, e.g. --set train.epochs=5");

  std::string data_dir, out_dir, checkpoint;
  std::string mode, split;
  double p_value = -1.0, param = -1.0, epsilon = -1.0;
  long long seed_flag = -1;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  synth->add_option("--out", out_dir, "Output dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "Train a VGCM checkpoint");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Run directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint (accuracy, Ave SHD)");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  eval->add_option("--out", out_dir, "Report directory")->required();
  eval->add_option("--split", split, "Dataset split (train|test)");

  CLI::App* diagram = app.add_subcommand("diagram", "Emit complete causal diagrams (JSON + DOT)");
  diagram->add_option("--data", data_dir, "Dataset directory")->required();
  diagram->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  diagram->add_option("--out", out_dir, "Output directory")->required();
  diagram->add_option("--split", split, "Dataset split (train|test)");

  CLI::App* baseline = app.add_subcommand("baseline", "Guess-all / random baseline metrics");
  baseline->add_option("--data", data_dir, "Dataset directory")->required();
  baseline->add_option("--out", out_dir, "Report directory")->required();
  baseline->add_option("--mode", mode, "all_causal|all_noncausal|random");
  baseline->add_option("--p", p_value, "Bernoulli rate for random mode");
  baseline->add_option("--seed", seed_flag, "Seed for random mode");
  baseline->add_option("--split", split, "Dataset split (train|test)");

  CLI::App* perturb = app.add_subcommand("perturb", "Write a perturbed dataset copy");
  perturb->add_option("--data", data_dir, "Dataset directory")->required();
  perturb->add_option("--out", out_dir, "Output dataset directory")->required();
  perturb->add_option("--mode", mode, "flip_labels|mask_words|mask_frames");
  perturb->add_option("--param", param, "Flip ratio or per-event mask count");
  perturb->add_option("--seed", seed_flag, "Perturbation seed");
  perturb->add_option("--split", split, "Split to perturb (train|test|both)");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gradcheck->add_option("--epsilon", epsilon, "Central-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  ConfigPtr cfg;
  {
    mecd_config* raw = nullptr;
    if (mecd_status st = mecd_config_create(&raw); st != MECD_OK)
      return fail_status(st, "config");
    cfg.reset(raw);
  }
  if (!config_file.empty()) {
    if (mecd_status st = mecd_config_load_file(cfg.get(), resolve(workdir, config_file).c_str());
        st != MECD_OK)
      return fail_status(st, "config file");
  }
  // MECD_SEED sits between the config file and explicit flags.
  if (const char* env_seed = std::getenv("MECD_SEED")) {
    if (mecd_status st = mecd_config_set(cfg.get(), "train.seed", env_seed); st != MECD_OK)
      return fail_status(st, "MECD_SEED");
  }
  for (const std::string& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got \"%s\"\n", kv.c_str());
      return 1;
    }
    if (mecd_status st =
            mecd_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        st != MECD_OK)
      return fail_status(st, "--set");
  }

  auto set_if = [&](const char* key, const std::string& value) -> int {
    if (value.empty()) return 0;
    if (mecd_status st = mecd_config_set(cfg.get(), key, value.c_str()); st != MECD_OK)
      return fail_status(st, key);
    return 0;
  };

  const std::string data = resolve(workdir, data_dir);
  const std::string out = resolve(workdir, out_dir);
  const std::string ckpt = resolve(workdir, checkpoint);

  if (synth->parsed()) {
    if (mecd_status st = mecd_synth(cfg.get(), out.c_str()); st != MECD_OK)
      return fail_status(st, "synth");
    std::printf("dataset written to %s\n", out.c_str());
    return 0;
  }
  if (train->parsed()) {
    if (mecd_status st = mecd_train(cfg.get(), data.c_str(), out.c_str()); st != MECD_OK)
      return fail_status(st, "train");
    std::printf("checkpoint and metrics written to %s\n", out.c_str());
    return 0;
  }
  if (eval->parsed()) {
    if (int rc = set_if("eval.split", split)) return rc;
    if (mecd_status st = mecd_eval(cfg.get(), data.c_str(), ckpt.c_str(), out.c_str());
        st != MECD_OK)
      return fail_status(st, "eval");
    std::printf("report written to %s\n", out.c_str());
    return 0;
  }
  if (diagram->parsed()) {
    if (int rc = set_if("eval.split", split)) return rc;
    if (mecd_status st = mecd_diagram(cfg.get(), data.c_str(), ckpt.c_str(), out.c_str());
        st != MECD_OK)
      return fail_status(st, "diagram");
    std::printf("diagrams written to %s\n", out.c_str());
    return 0;
  }
  if (baseline->parsed()) {
    if (int rc = set_if("baseline.mode", mode)) return rc;
    if (int rc = set_if("eval.split", split)) return rc;
    if (p_value >= 0.0)
      if (int rc = set_if("baseline.p", std::to_string(p_value))) return rc;
    if (seed_flag >= 0)
      if (int rc = set_if("baseline.seed", std::to_string(seed_flag))) return rc;
    if (mecd_status st = mecd_baseline(cfg.get(), data.c_str(), out.c_str()); st != MECD_OK)
      return fail_status(st, "baseline");
    std::printf("report written to %s\n", out.c_str());
    return 0;
  }
  if (perturb->parsed()) {
    if (int rc = set_if("perturb.mode", mode)) return rc;
    if (int rc = set_if("perturb.split", split)) return rc;
    if (param >= 0.0)
      if (int rc = set_if("perturb.param", std::to_string(param))) return rc;
    if (seed_flag >= 0)
      if (int rc = set_if("perturb.seed", std::to_string(seed_flag))) return rc;
    if (mecd_status st = mecd_perturb(cfg.get(), data.c_str(), out.c_str()); st != MECD_OK)
      return fail_status(st, "perturb");
    std::printf("perturbed dataset written to %s\n", out.c_str());
    return 0;
  }
  if (gradcheck->parsed()) {
    if (epsilon > 0.0)
      if (int rc = set_if("gradcheck.epsilon", std::to_string(epsilon))) return rc;
    double err = 0.0;
    if (mecd_status st = mecd_gradcheck(cfg.get(), &err); st != MECD_OK)
      return fail_status(st, "gradcheck");
    std::printf("max relative error: %.9g\n", err);
    return 0;
  }
  return 1;
}

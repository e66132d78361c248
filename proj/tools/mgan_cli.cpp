// mgan: command-line driver for data generation, training, evaluation and
// reference sampling. Talks to the library through the C API only.
#include "mgan/mgan.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

namespace {

struct ConfigDeleter
{
  void operator()(mgan_config* c) const { mgan_config_free(c); }
};
using ConfigPtr = std::unique_ptr<mgan_config, ConfigDeleter>;

struct Options
{
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string dataset;
  std::string checkpoint;
  bool quiet = false;
};

int report(mgan_status st)
{
  if (st != MGAN_OK)
    std::fprintf(stderr, "mgan: %s: %s\n", mgan_status_name(st), mgan_last_error());
  return mgan_exit_code(st);
}

void print_progress(const char* msg, void* user)
{
  if (!*static_cast<bool*>(user))
    std::fprintf(stderr, "%s\n", msg);
}

void take_string(char* s, const char* label)
{
  if (s) {
    std::printf("%s %s\n", label, s);
    mgan_string_free(s);
  }
}

int run(const std::string& command, const Options& opt)
{
  mgan_config* raw = nullptr;
  mgan_status st = mgan_config_load(opt.config.c_str(), &raw);
  if (st != MGAN_OK)
    return report(st);
  ConfigPtr cfg(raw);
  if (opt.seed && (st = mgan_config_set_seed(cfg.get(), *opt.seed)) != MGAN_OK)
    return report(st);
  if (!opt.out.empty() && (st = mgan_config_set_output_dir(cfg.get(), opt.out.c_str())) != MGAN_OK)
    return report(st);

  bool quiet = opt.quiet;
  char* path = nullptr;
  if (command == "generate") {
    st = mgan_cmd_generate(cfg.get(), &path);
    take_string(path, "dataset");
  } else if (command == "train") {
    st = mgan_cmd_train(cfg.get(), opt.dataset.c_str(), print_progress, &quiet, &path);
    take_string(path, "checkpoint");
  } else if (command == "evaluate") {
    st = mgan_cmd_evaluate(cfg.get(), opt.checkpoint.c_str(), print_progress, &quiet);
  } else if (command == "mcmc") {
    st = mgan_cmd_mcmc(cfg.get(), print_progress, &quiet);
  } else {
    st = mgan_cmd_kr_oracle(cfg.get(), opt.checkpoint.empty() ? nullptr : opt.checkpoint.c_str(), &path);
    take_string(path, "grid");
  }
  return report(st);
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Monotone generative adversarial transport maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mgan_version()));

  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Experiment config (JSON)")->required();
    sub->add_option("--out", opt.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", opt.seed, "Seed for every stage (overrides the config)");
    sub->add_flag("-q,--quiet", opt.quiet, "Suppress progress output");
  };

  auto* gen = app.add_subcommand("generate", "Generate a training dataset");
  common(gen);
  auto* train = app.add_subcommand("train", "Train a transport map");
  common(train);
  train->add_option("--dataset", opt.dataset, "Dataset file")->required();
  auto* eval = app.add_subcommand("evaluate", "Evaluate checkpoints against reference distributions");
  common(eval);
  eval->add_option("--checkpoint", opt.checkpoint, "Checkpoint file or training directory")->required();
  auto* mcmc = app.add_subcommand("mcmc", "Run reference MCMC chains");
  common(mcmc);
  auto* kr = app.add_subcommand("kr-oracle", "Dump the analytic KR map on a grid");
  common(kr);
  kr->add_option("--checkpoint", opt.checkpoint, "Trained map to tabulate alongside");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run(app.get_subcommands().front()->get_name(), opt);
}

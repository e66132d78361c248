#pragma once

#include "mgan/problems.hpp"
#include "mgan/trainer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mgan::experiment {

struct DatasetSettings
{
  std::size_t N = 10000;
  std::uint64_t seed = 0;
  std::string format = "csv"; // csv or binary
  int darcy_grid = 63;        // interior nodes per axis
  bool banana_reverse = false; // store (y2, y1) instead of (y1, y2)

  bool operator==(const DatasetSettings&) const = default;
};

struct EvaluateSettings
{
  /// Conditioning points. For BOD and Darcy, `x_star_parameters` lists
  /// parameters whose noiseless observations are appended as extra points.
  std::vector<std::vector<double>> x_star;
  std::vector<std::vector<double>> x_star_parameters;
  std::vector<std::string> metrics; // empty: every metric the problem supports
  std::size_t samples = 50000;
  int grid_points = 200;
  std::string bandwidth = "scott"; // "scott", "cv-5fold" or a factor of the sample std
  std::uint64_t seed = 0;
  std::vector<std::string> reference_chains; // one MCMC chain CSV per x*, else run MCMC
  bool dump_samples = true;

  bool operator==(const EvaluateSettings&) const = default;
};

struct McmcSettings
{
  std::size_t length = 30000;
  std::size_t burn_in = 5000;
  std::size_t thin = 1;
  std::vector<double> initial;      // empty: problem default
  std::vector<double> proposal_std; // empty: problem default
  bool tune = true;
  std::size_t pilot_length = 2000;
  std::uint64_t seed = 0;

  bool operator==(const McmcSettings&) const = default;
};

struct ExperimentConfig
{
  std::string problem = "synthetic-4";
  std::string output_dir = "run";
  DatasetSettings dataset;
  trainer::TrainConfig train;
  EvaluateSettings evaluate;
  McmcSettings mcmc;

  problems::ProblemId problem_id() const;
  void validate() const;
  /// Overrides every stage seed.
  void set_seed(std::uint64_t seed);

  bool operator==(const ExperimentConfig&) const = default;
};

/// Strict JSON: unknown keys and wrong types are configuration errors.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// (n, m) of the joint samples a problem produces.
std::pair<int, int> problem_dims(problems::ProblemId id);

/// Conditioning points named by the evaluation settings, or the problem
/// defaults when none are given.
std::vector<Vector> conditioning_points(const ExperimentConfig& cfg);

/// Worker count honouring MGAN_THREADS.
int worker_threads();

using ProgressFn = std::function<void(const std::string&)>;

struct MetricRow
{
  std::string metric;
  double value = 0.0;
  double std = 0.0;
  double scale_factor = 1.0;
};

/// Writes the dataset and a manifest under <output_dir>/data; returns the
/// dataset path.
std::string cmd_generate(const ExperimentConfig& cfg);

/// Trains on the dataset and writes <output_dir>/train: history.csv,
/// checkpoints/epoch_NNNN.mgtm for the saved epochs, final.mgtm,
/// discriminator.mgan and a manifest. Returns the final checkpoint path.
std::string cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path,
                      const ProgressFn& progress = {});

/// Evaluates one checkpoint file or every epoch checkpoint in a directory;
/// writes <output_dir>/evaluate/metrics.csv, sample dumps and a manifest.
std::vector<MetricRow> cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                                    const ProgressFn& progress = {});

/// Reference chains for BOD or Darcy at each conditioning point, written to
/// <output_dir>/mcmc/chain_K.csv with a manifest. Returns the chain paths.
std::vector<std::string> cmd_mcmc(const ExperimentConfig& cfg, const ProgressFn& progress = {});

/// KR map of a synthetic problem on a (x, u) grid, optionally next to a
/// trained map, written to <output_dir>/kr/kr_map.csv.
std::string cmd_kr_oracle(const ExperimentConfig& cfg, const std::string& checkpoint_path = {});

/// FNV-1a 64 of a file's bytes.
std::uint64_t fnv1a_file(const std::string& path);

} // namespace mgan::experiment

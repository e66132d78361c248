#pragma once

#include "mgan/dataset.hpp"
#include "mgan/losses.hpp"
#include "mgan/nn.hpp"
#include "mgan/random.hpp"
#include "mgan/transport.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace mgan::trainer {

enum class MapKind
{
  block,
  triangular
};

struct TrainConfig
{
  losses::LossConfig loss;
  double lambda = 0.01; // monotonicity weight; 0 gives the plain conditional GAN
  int batch_size = 100;
  int epochs = 300;
  nn::AdamConfig adam;
  int critic_updates = 0; // 0: 1 for LSGAN, 5 for WGAN-GP
  std::uint64_t seed = 0;
  MapKind map = MapKind::block;
  bool reverse_order = false; // triangular maps only
  std::vector<int> generator_hidden{256, 512, 128};
  std::vector<int> discriminator_hidden{256, 512, 128};
  double leaky_slope = 0.2;
  bool standardize = false;
  std::size_t monotonicity_pairs = 10000;
  int keep_last = 10;

  int critic_ratio() const;
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord
{
  int epoch = 0;
  double gen_loss = 0.0;  // epoch mean of the GAN generator loss
  double disc_loss = 0.0; // epoch mean of the discriminator loss
  double penalty = 0.0;   // epoch mean of the monotonicity penalty
  double mono_prob = 0.0;
  double wall_seconds = 0.0;
};

struct TrainingHistory
{
  std::vector<EpochRecord> epochs;
  std::uint64_t generator_updates = 0;
  std::uint64_t discriminator_updates = 0;
};

struct Snapshot
{
  int epoch = 0;
  transport::MapCheckpoint checkpoint;
};

struct TrainResult
{
  transport::MapCheckpoint generator;
  nn::DenseNetwork discriminator;
  TrainingHistory history;
  std::vector<Snapshot> snapshots; // final keep_last epochs, oldest first
};

/// Alternating optimisation of the penalised min-max objective. Owns both
/// networks, their Adam states and a single RNG stream.
class Trainer
{
public:
  Trainer(TrainConfig config, const JointDataset& data);

  /// One discriminator update on a fresh data minibatch and reference batch.
  double discriminator_step();

  /// One generator update on two fresh reference batches. Returns the
  /// GAN generator loss; the penalty value is written to `penalty`.
  double generator_step(double* penalty = nullptr);

  /// critic_ratio() discriminator updates followed by one generator update.
  void step(double& gen_loss, double& disc_loss, double& penalty);

  EpochRecord run_epoch();

  const transport::TransportMap& map() const { return map_; }
  transport::TransportMap& map() { return map_; }
  const nn::DenseNetwork& discriminator() const { return critic_; }
  const transport::Standardizer& scaling() const { return scaling_; }
  const transport::ReferenceSampler& sampler() const { return *sampler_; }
  const TrainingHistory& history() const { return history_; }
  const TrainConfig& config() const { return config_; }
  std::size_t updates_per_epoch() const { return updates_per_epoch_; }

  transport::MapCheckpoint checkpoint() const { return {map_, scaling_}; }

private:
  Matrix next_data_batch();
  std::vector<nn::Parameters> zero_map_grads() const;

  TrainConfig config_;
  transport::Standardizer scaling_;
  Matrix data_;                       // standardised (x, y)
  std::shared_ptr<const Matrix> x_;   // standardised x column
  std::unique_ptr<transport::ReferenceSampler> sampler_;
  transport::TransportMap map_;
  nn::DenseNetwork critic_;
  std::vector<nn::AdamState> map_opt_;
  nn::AdamState critic_opt_;
  Rng rng_;
  Rng diag_rng_;
  std::vector<Eigen::Index> perm_;
  std::size_t cursor_ = 0;
  std::size_t updates_per_epoch_ = 0;
  int epoch_ = 0;
  TrainingHistory history_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const JointDataset& data,
                  const EpochCallback& on_epoch = {});

/// Monotonicity-probability diagnostic for one epoch.
double evaluate_epoch(const transport::TransportMap& map, const transport::ReferenceSampler& sampler,
                      std::size_t num_pairs, Rng& rng);

} // namespace mgan::trainer

#include "mgan/trainer.hpp"

#include "mgan/error.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>

namespace mgan::trainer {

int TrainConfig::critic_ratio() const
{
  if (critic_updates > 0)
    return critic_updates;
  return loss.kind == losses::LossKind::wgan_gp ? 5 : 1;
}

void TrainConfig::validate() const
{
  loss.validate();
  require(lambda >= 0.0, ErrorKind::config, "monotonicity weight lambda must be >= 0");
  require(batch_size >= 2, ErrorKind::config, "batch size must be >= 2");
  require(epochs >= 1, ErrorKind::config, "epochs must be >= 1");
  require(critic_updates >= 0, ErrorKind::config, "critic_updates must be >= 0");
  require(adam.learning_rate > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 &&
            adam.beta2 < 1.0 && adam.epsilon > 0.0,
          ErrorKind::config, "invalid Adam hyperparameters");
  require(monotonicity_pairs >= 1, ErrorKind::config, "monotonicity_pairs must be >= 1");
  require(keep_last >= 1, ErrorKind::config, "keep_last must be >= 1");
  for (int h : generator_hidden)
    require(h > 0, ErrorKind::config, "hidden sizes must be positive");
  for (int h : discriminator_hidden)
    require(h > 0, ErrorKind::config, "hidden sizes must be positive");
}

Trainer::Trainer(TrainConfig config, const JointDataset& data)
  : config_(std::move(config)), rng_(config_.seed), diag_rng_(mix_seed(config_.seed, 0xd1a9))
{
  config_.validate();
  data.validate();
  require(static_cast<int>(data.size()) >= config_.batch_size, ErrorKind::config,
          "dataset has fewer rows than one minibatch");
  const int n = data.n(), m = data.m();

  scaling_ = config_.standardize ? transport::Standardizer::fit(data.x, data.y)
                                 : transport::Standardizer::identity(n, m);
  Matrix x = n > 0 ? scaling_.encode_x(data.x) : data.x;
  Matrix y = scaling_.encode_y(data.y);
  data_.resize(y.rows(), n + m);
  data_.leftCols(n) = x;
  data_.rightCols(m) = y;
  x_ = std::make_shared<const Matrix>(std::move(x));
  sampler_ = std::make_unique<transport::ReferenceSampler>(x_, m);

  const std::uint64_t gen_seed = mix_seed(config_.seed, 1);
  if (config_.map == MapKind::block)
    map_ = transport::BlockTriangularMap::initialized(n, m, config_.generator_hidden, gen_seed,
                                                      config_.leaky_slope);
  else
    map_ = transport::FullyTriangularMap::initialized(n, m, config_.generator_hidden, gen_seed,
                                                      config_.reverse_order, config_.leaky_slope);

  std::vector<int> critic_sizes{n + m};
  critic_sizes.insert(critic_sizes.end(), config_.discriminator_hidden.begin(),
                      config_.discriminator_hidden.end());
  critic_sizes.push_back(1);
  critic_ = nn::init_network(critic_sizes, mix_seed(config_.seed, 2), config_.leaky_slope);

  for (const auto* net : std::visit([](const auto& t) { return t.networks(); }, map_))
    map_opt_.emplace_back(net->parameters(), config_.adam);
  critic_opt_ = nn::AdamState(critic_.parameters(), config_.adam);

  perm_.resize(static_cast<std::size_t>(data_.rows()));
  std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
  cursor_ = perm_.size(); // forces a shuffle on first use
  updates_per_epoch_ = data.size() / static_cast<std::size_t>(config_.batch_size);
}

Matrix Trainer::next_data_batch()
{
  const auto k = static_cast<std::size_t>(config_.batch_size);
  if (cursor_ + k > perm_.size()) {
    std::shuffle(perm_.begin(), perm_.end(), rng_.engine());
    cursor_ = 0;
  }
  Matrix batch(static_cast<Eigen::Index>(k), data_.cols());
  for (std::size_t i = 0; i < k; ++i)
    batch.row(static_cast<Eigen::Index>(i)) = data_.row(perm_[cursor_ + i]);
  cursor_ += k;
  return batch;
}

std::vector<nn::Parameters> Trainer::zero_map_grads() const
{
  std::vector<nn::Parameters> grads;
  for (const auto* net : std::visit([](const auto& t) { return t.networks(); }, map_))
    grads.push_back(nn::zeros_like(net->parameters()));
  return grads;
}

namespace {

// LSGAN objective carries the 1/2 of D_GAN = (D_f + D_T) / 2.
double gan_weight(const losses::LossConfig& cfg)
{
  return cfg.kind == losses::LossKind::lsgan ? 0.5 : 1.0;
}

} // namespace

double Trainer::discriminator_step()
{
  const auto k = static_cast<std::size_t>(config_.batch_size);
  Matrix real = next_data_batch();
  Matrix w = sampler_->sample(k, rng_);
  Matrix fake = w;
  fake.rightCols(sampler_->m()) = transport::map_output(map_, w);
  auto step = losses::discriminator_loss_grad(config_.loss, critic_, real, fake, rng_);
  nn::scale(step.grads, gan_weight(config_.loss));
  critic_opt_.step(critic_.parameters(), step.grads);
  if (!nn::all_finite(critic_.parameters()))
    fail(ErrorKind::numerical, "discriminator parameters became non-finite");
  ++history_.discriminator_updates;
  return step.loss;
}

double Trainer::generator_step(double* penalty)
{
  const auto k = static_cast<std::size_t>(config_.batch_size);
  const int m = sampler_->m();
  Matrix w = sampler_->sample(k, rng_);
  Matrix wp = sampler_->sample(k, rng_);

  return std::visit(
    [&](auto& T) {
      using MapT = std::decay_t<decltype(T)>;
      typename MapT::Tape tape_w, tape_wp;
      Matrix out_w = T.output(w, tape_w);
      Matrix out_wp = T.output(wp, tape_wp);

      Matrix fake = w;
      fake.rightCols(m) = out_w;
      auto signal = losses::generator_loss_grad(config_.loss, critic_, fake);

      // <T(w) - T(w'), w - w'> = |x - x'|^2 + <F(w) - F(w'), y - y'>
      const double kk = static_cast<double>(k);
      Matrix dy = w.rightCols(m) - wp.rightCols(m);
      Matrix dx = w.leftCols(sampler_->n()) - wp.leftCols(sampler_->n());
      const double pen = (dx.squaredNorm() + (out_w - out_wp).cwiseProduct(dy).sum()) / kk;
      if (penalty)
        *penalty = pen;

      const double gw = gan_weight(config_.loss);
      Matrix grad_w = gw * signal.grad_fake.rightCols(m) - (config_.lambda / kk) * dy;
      Matrix grad_wp = (config_.lambda / kk) * dy;

      auto grads = zero_map_grads();
      T.backward(tape_w, grad_w, grads);
      if (config_.lambda != 0.0)
        T.backward(tape_wp, grad_wp, grads);
      auto nets = T.networks();
      for (std::size_t i = 0; i < nets.size(); ++i) {
        map_opt_[i].step(nets[i]->parameters(), grads[i]);
        if (!nn::all_finite(nets[i]->parameters()))
          fail(ErrorKind::numerical, "generator parameters became non-finite");
      }
      ++history_.generator_updates;
      return signal.loss;
    },
    map_);
}

void Trainer::step(double& gen_loss, double& disc_loss, double& penalty)
{
  disc_loss = 0.0;
  const int ratio = config_.critic_ratio();
  for (int c = 0; c < ratio; ++c)
    disc_loss += discriminator_step();
  disc_loss /= ratio;
  gen_loss = generator_step(&penalty);
}

EpochRecord Trainer::run_epoch()
{
  const auto start = std::chrono::steady_clock::now();
  ++epoch_;
  EpochRecord rec;
  rec.epoch = epoch_;
  for (std::size_t s = 0; s < updates_per_epoch_; ++s) {
    double g = 0, d = 0, p = 0;
    try {
      step(g, d, p);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numerical)
        throw;
      fail(ErrorKind::numerical, "training aborted at epoch " + std::to_string(epoch_) + ", step " +
                                   std::to_string(s + 1) + ": " + e.what());
    }
    if (!std::isfinite(g) || !std::isfinite(d) || !std::isfinite(p))
      fail(ErrorKind::numerical, "training aborted at epoch " + std::to_string(epoch_) + ", step " +
                                   std::to_string(s + 1) + ": non-finite loss");
    rec.gen_loss += g;
    rec.disc_loss += d;
    rec.penalty += p;
  }
  const double steps = static_cast<double>(std::max<std::size_t>(1, updates_per_epoch_));
  rec.gen_loss /= steps;
  rec.disc_loss /= steps;
  rec.penalty /= steps;
  rec.mono_prob = evaluate_epoch(map_, *sampler_, config_.monotonicity_pairs, diag_rng_);
  rec.wall_seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.epochs.push_back(rec);
  return rec;
}

double evaluate_epoch(const transport::TransportMap& map, const transport::ReferenceSampler& sampler,
                      std::size_t num_pairs, Rng& rng)
{
  return transport::monotonicity_probability(map, sampler, num_pairs, rng);
}

TrainResult train(const TrainConfig& config, const JointDataset& data, const EpochCallback& on_epoch)
{
  Trainer trainer(config, data);
  TrainResult result;
  for (int e = 0; e < config.epochs; ++e) {
    const EpochRecord rec = trainer.run_epoch();
    if (config.epochs - rec.epoch < config.keep_last)
      result.snapshots.push_back({rec.epoch, trainer.checkpoint()});
    if (on_epoch)
      on_epoch(rec);
  }
  result.generator = trainer.checkpoint();
  result.discriminator = trainer.discriminator();
  result.history = trainer.history();
  return result;
}

} // namespace mgan::trainer

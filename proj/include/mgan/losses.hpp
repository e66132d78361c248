#pragma once

#include "mgan/linalg.hpp"
#include "mgan/nn.hpp"
#include "mgan/random.hpp"

namespace mgan::losses {

enum class LossKind
{
  lsgan,
  wgan_gp
};

struct LossConfig
{
  LossKind kind = LossKind::lsgan;
  double gp_weight = 10.0; // gamma, WGAN-GP only

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

// Loss values. Rows of `real` are data samples z, rows of `fake` are T(w);
// both are treated as constants here.

/// mean (f(z) - 1)^2 + mean f(T(w))^2
double lsgan_discriminator_loss(const nn::DenseNetwork& f, const Matrix& real, const Matrix& fake);

/// mean (f(T(w)) - 1)^2
double lsgan_generator_loss(const nn::DenseNetwork& f, const Matrix& fake);

/// mean f(T(w)) - mean f(z) + gp_weight * mean (||grad f(z^)|| - 1)^2 with
/// z^_j = a_j z_j + (1 - a_j) T(w_j), a_j ~ U[0, 1].
double wgan_gp_critic_loss(const nn::DenseNetwork& f, const Matrix& real, const Matrix& fake,
                           Rng& rng, double gp_weight = 10.0);

/// -mean f(T(w)). The critic minimises the functional above, so the
/// generator minimises the negated fake score.
double wgan_generator_loss(const nn::DenseNetwork& f, const Matrix& fake);

// Gradient forms used by the trainer.

struct DiscriminatorStep
{
  double loss = 0.0;
  nn::Parameters grads; // d(loss)/d(f parameters)
};

/// Discriminator-side loss and its gradient with respect to f only.
/// `rng` is consumed by WGAN-GP interpolation weights.
DiscriminatorStep discriminator_loss_grad(const LossConfig& config, const nn::DenseNetwork& f,
                                          const Matrix& real, const Matrix& fake, Rng& rng);

struct GeneratorSignal
{
  double loss = 0.0;
  Matrix grad_fake; // d(loss)/d(fake rows); f is held fixed
};

/// Generator-side loss and its gradient with respect to the fake samples.
GeneratorSignal generator_loss_grad(const LossConfig& config, const nn::DenseNetwork& f,
                                    const Matrix& fake);

} // namespace mgan::losses

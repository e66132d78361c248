#include "mgan/losses.hpp"

#include "mgan/error.hpp"

#include <string>

namespace mgan::losses {

namespace {

void check_critic(const nn::DenseNetwork& f, const Matrix& batch)
{
  require(f.output_dim() == 1, ErrorKind::contract, "discriminator must have scalar output");
  require(batch.rows() > 0, ErrorKind::contract, "empty batch");
  require(batch.cols() == f.input_dim(), ErrorKind::shape,
          "discriminator expects " + std::to_string(f.input_dim()) + " columns, got " +
            std::to_string(batch.cols()));
}

Matrix interpolate(const Matrix& real, const Matrix& fake, Rng& rng)
{
  Matrix mixed(real.rows(), real.cols());
  for (Eigen::Index j = 0; j < real.rows(); ++j) {
    const double a = rng.uniform();
    mixed.row(j) = a * real.row(j) + (1.0 - a) * fake.row(j);
  }
  return mixed;
}

} // namespace

void LossConfig::validate() const
{
  if (kind == LossKind::wgan_gp)
    require(gp_weight > 0.0, ErrorKind::config, "gradient-penalty weight must be positive");
}

double lsgan_discriminator_loss(const nn::DenseNetwork& f, const Matrix& real, const Matrix& fake)
{
  check_critic(f, real);
  check_critic(f, fake);
  const Matrix fr = f.forward(real);
  const Matrix ff = f.forward(fake);
  return (fr.array() - 1.0).square().mean() + ff.array().square().mean();
}

double lsgan_generator_loss(const nn::DenseNetwork& f, const Matrix& fake)
{
  check_critic(f, fake);
  return (f.forward(fake).array() - 1.0).square().mean();
}

double wgan_gp_critic_loss(const nn::DenseNetwork& f, const Matrix& real, const Matrix& fake,
                           Rng& rng, double gp_weight)
{
  check_critic(f, real);
  check_critic(f, fake);
  require(real.rows() == fake.rows(), ErrorKind::contract,
          "WGAN-GP needs equally sized real and fake batches");
  const double score = f.forward(fake).mean() - f.forward(real).mean();
  return score + nn::gradient_norm_penalty(f, interpolate(real, fake, rng), gp_weight, nullptr);
}

double wgan_generator_loss(const nn::DenseNetwork& f, const Matrix& fake)
{
  check_critic(f, fake);
  return -f.forward(fake).mean();
}

DiscriminatorStep discriminator_loss_grad(const LossConfig& config, const nn::DenseNetwork& f,
                                          const Matrix& real, const Matrix& fake, Rng& rng)
{
  check_critic(f, real);
  check_critic(f, fake);
  DiscriminatorStep step;
  step.grads = nn::zeros_like(f.parameters());
  const double nr = static_cast<double>(real.rows());
  const double nf = static_cast<double>(fake.rows());

  nn::DenseNetwork::Tape tape_real, tape_fake;
  const Matrix fr = f.forward(real, tape_real);
  const Matrix ff = f.forward(fake, tape_fake);

  if (config.kind == LossKind::lsgan) {
    step.loss = (fr.array() - 1.0).square().mean() + ff.array().square().mean();
    f.backward(tape_real, (2.0 / nr) * (fr.array() - 1.0).matrix(), &step.grads);
    f.backward(tape_fake, (2.0 / nf) * ff, &step.grads);
  } else {
    require(real.rows() == fake.rows(), ErrorKind::contract,
            "WGAN-GP needs equally sized real and fake batches");
    step.loss = ff.mean() - fr.mean();
    f.backward(tape_real, Matrix::Constant(real.rows(), 1, -1.0 / nr), &step.grads);
    f.backward(tape_fake, Matrix::Constant(fake.rows(), 1, 1.0 / nf), &step.grads);
    step.loss += nn::gradient_norm_penalty(f, interpolate(real, fake, rng), config.gp_weight,
                                           &step.grads);
  }
  if (!std::isfinite(step.loss))
    fail(ErrorKind::numerical, "non-finite discriminator loss");
  return step;
}

GeneratorSignal generator_loss_grad(const LossConfig& config, const nn::DenseNetwork& f,
                                    const Matrix& fake)
{
  check_critic(f, fake);
  const double k = static_cast<double>(fake.rows());
  nn::DenseNetwork::Tape tape;
  const Matrix ff = f.forward(fake, tape);
  GeneratorSignal out;
  Matrix grad_score;
  if (config.kind == LossKind::lsgan) {
    out.loss = (ff.array() - 1.0).square().mean();
    grad_score = (2.0 / k) * (ff.array() - 1.0).matrix();
  } else {
    out.loss = -ff.mean();
    grad_score = Matrix::Constant(fake.rows(), 1, -1.0 / k);
  }
  if (!std::isfinite(out.loss))
    fail(ErrorKind::numerical, "non-finite generator loss");
  out.grad_fake = f.backward(tape, grad_score, nullptr);
  return out;
}

} // namespace mgan::losses

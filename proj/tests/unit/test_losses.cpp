#include "helpers.hpp"

#include "mgan/error.hpp"
#include "mgan/losses.hpp"

#include <doctest.h>

using namespace mgan;
using namespace mgan::losses;
using namespace testing;

namespace {

nn::DenseNetwork constant_net(int dim, double c)
{
  nn::DenseNetwork f({dim, 3, 1});
  f.parameters()[1].bias(0) = c;
  return f;
}

nn::DenseNetwork linear_net(const Vector& a)
{
  nn::DenseNetwork f({static_cast<int>(a.size()), 1});
  f.parameters()[0].weight.row(0) = a.transpose();
  return f;
}

} // namespace

TEST_CASE("LSGAN values for a constant discriminator")
{
  Rng rng(1);
  const Matrix real = random_matrix(rng, 10, 2);
  const Matrix fake = random_matrix(rng, 10, 2);
  for (double c : {0.0, 0.25, 1.0, -0.5}) {
    const auto f = constant_net(2, c);
    CHECK(lsgan_discriminator_loss(f, real, fake) == doctest::Approx((c - 1) * (c - 1) + c * c));
    CHECK(lsgan_generator_loss(f, fake) == doctest::Approx((c - 1) * (c - 1)));
  }
  // The optimum over constants is c = 1/2 with value 1/2.
  CHECK(lsgan_discriminator_loss(constant_net(2, 0.5), real, fake) == doctest::Approx(0.5));
}

TEST_CASE("WGAN-GP: linear critic values and the unit-norm penalty")
{
  Rng rng(2);
  const Matrix real = random_matrix(rng, 20, 3);
  const Matrix fake = random_matrix(rng, 20, 3);
  Vector a(3);
  a << 0.6, 0.0, 0.8;
  const auto f = linear_net(a);
  const double gap = (fake * a).mean() - (real * a).mean();
  CHECK(wgan_gp_critic_loss(f, real, fake, rng, 10.0) == doctest::Approx(gap).epsilon(1e-12));
  CHECK(wgan_generator_loss(f, fake) == doctest::Approx(-(fake * a).mean()));

  // f(z) = 2z: gradient norm 2, penalty 10 * (2 - 1)^2.
  const auto twice = linear_net(Vector::Constant(1, 2.0));
  const Matrix same = random_matrix(rng, 8, 1);
  CHECK(wgan_gp_critic_loss(twice, same, same, rng, 10.0) == doctest::Approx(10.0));

  LossConfig bad;
  bad.kind = LossKind::wgan_gp;
  bad.gp_weight = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("discriminator gradients match central differences of the loss")
{
  Rng rng(3);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + static_cast<int>(rng.index(3));
    auto f = random_network({d, 5, 4, 1}, rng);
    const Matrix real = random_matrix(rng, 6, d);
    const Matrix fake = random_matrix(rng, 6, d);
    LossConfig cfg;
    cfg.kind = t % 2 ? LossKind::lsgan : LossKind::wgan_gp;
    const Rng start = rng;
    Rng r = start;
    const auto step = discriminator_loss_grad(cfg, f, real, fake, r);
    const auto fd = fd_params(f.parameters(), [&] {
      Rng again = start;
      return cfg.kind == LossKind::lsgan ? lsgan_discriminator_loss(f, real, fake)
                                         : wgan_gp_critic_loss(f, real, fake, again, cfg.gp_weight);
    });
    Rng again = start;
    const double value = cfg.kind == LossKind::lsgan ? lsgan_discriminator_loss(f, real, fake)
                                                     : wgan_gp_critic_loss(f, real, fake, again, cfg.gp_weight);
    CHECK(step.loss == doctest::Approx(value).epsilon(1e-12));
    worst = std::max(worst, rel_error(flatten(step.grads), fd));
    rng = r;
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("generator signal is the gradient with respect to the fake samples only")
{
  Rng rng(4);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = 1 + static_cast<int>(rng.index(3));
    const auto f = random_network({d, 6, 1}, rng);
    Matrix fake = random_matrix(rng, 5, d);
    LossConfig cfg;
    cfg.kind = t % 2 ? LossKind::lsgan : LossKind::wgan_gp;
    const auto f_before = f;
    const auto sig = generator_loss_grad(cfg, f, fake);
    CHECK(f == f_before);
    auto value = [&] {
      return cfg.kind == LossKind::lsgan ? lsgan_generator_loss(f, fake) : wgan_generator_loss(f, fake);
    };
    CHECK(sig.loss == doctest::Approx(value()).epsilon(1e-12));
    REQUIRE(sig.grad_fake.rows() == fake.rows());
    REQUIRE(sig.grad_fake.cols() == fake.cols());
    std::vector<double> fd;
    for (Eigen::Index i = 0; i < fake.rows(); ++i)
      for (Eigen::Index j = 0; j < fake.cols(); ++j) {
        const double keep = fake(i, j);
        fake(i, j) = keep + 1e-6;
        const double up = value();
        fake(i, j) = keep - 1e-6;
        const double down = value();
        fake(i, j) = keep;
        fd.push_back((up - down) / 2e-6);
      }
    worst = std::max(worst, rel_error(as_vector(sig.grad_fake), fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("discriminator step touches no generator quantity and is deterministic")
{
  Rng rng(5);
  const auto f = random_network({2, 4, 1}, rng);
  const Matrix real = random_matrix(rng, 7, 2);
  const Matrix fake = random_matrix(rng, 7, 2);
  for (auto kind : {LossKind::lsgan, LossKind::wgan_gp}) {
    LossConfig cfg;
    cfg.kind = kind;
    Rng a(9), b(9);
    const auto s1 = discriminator_loss_grad(cfg, f, real, fake, a);
    const auto s2 = discriminator_loss_grad(cfg, f, real, fake, b);
    CHECK(s1.loss == s2.loss);
    CHECK(flatten(s1.grads) == flatten(s2.grads));
    CHECK(s1.grads.size() == f.parameters().size());
  }
}

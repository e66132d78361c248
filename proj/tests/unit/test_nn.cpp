#include "helpers.hpp"

#include "mgan/error.hpp"
#include "mgan/nn.hpp"

#include <doctest.h>

#include <sstream>

using namespace mgan;
using namespace testing;

TEST_CASE("init_network shapes and zero biases")
{
  const auto net = nn::init_network({2, 256, 512, 128, 1}, 3);
  REQUIRE(net.num_layers() == 4);
  const std::pair<int, int> shapes[] = {{256, 2}, {512, 256}, {128, 512}, {1, 128}};
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(net.parameters()[l].weight.rows() == shapes[l].first);
    CHECK(net.parameters()[l].weight.cols() == shapes[l].second);
    CHECK(net.parameters()[l].bias.isZero(0.0));
  }
}

TEST_CASE("init_network is deterministic per seed")
{
  CHECK(nn::init_network({3, 16, 2}, 11) == nn::init_network({3, 16, 2}, 11));
  CHECK_FALSE(nn::init_network({3, 16, 2}, 11) == nn::init_network({3, 16, 2}, 12));
}

TEST_CASE("init_network first-layer std matches the leaky-ReLU He rule")
{
  const auto net = nn::init_network({2, 50000, 1}, 5);
  const Matrix& w = net.parameters()[0].weight;
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / (w.size() - 1));
  const double expected = std::sqrt(2.0 / ((1.0 + 0.04) * 2.0));
  CHECK(std::abs(sd / expected - 1.0) < 0.02);
}

TEST_CASE("invalid layer sizes are configuration errors")
{
  CHECK_THROWS_AS(nn::init_network({3}, 0), Error);
  try {
    nn::init_network({3, 0, 1}, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("forward: zero network, leaky slope, identity layer")
{
  nn::DenseNetwork zero({3, 5, 2});
  CHECK(zero.forward_one(Vector::Constant(3, 1.7)).isZero(0.0));

  nn::DenseNetwork leaky({1, 1, 1});
  leaky.parameters()[0].weight(0, 0) = 1.0;
  leaky.parameters()[1].weight(0, 0) = 1.0;
  CHECK(leaky.forward_one(Vector::Constant(1, -1.0))(0) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(leaky.forward_one(Vector::Constant(1, 2.0))(0) == 2.0);

  nn::DenseNetwork id({3, 3});
  id.parameters()[0].weight = Matrix::Identity(3, 3);
  Rng rng(1);
  const Matrix x = random_matrix(rng, 7, 3);
  CHECK(id.forward(x) == x);
}

TEST_CASE("forward is pure and rejects bad shapes")
{
  Rng rng(2);
  const auto net = random_network({4, 8, 3}, rng);
  const Matrix x = random_matrix(rng, 5, 4);
  CHECK(net.forward(x) == net.forward(x));
  try {
    net.forward(random_matrix(rng, 5, 3));
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape);
  }
}

TEST_CASE("non-finite activations report the layer")
{
  nn::DenseNetwork net({1, 2, 1});
  net.parameters()[0].weight.setConstant(1e200);
  net.parameters()[1].weight.setConstant(1e200);
  try {
    net.forward(Matrix::Constant(1, 1, 1e200));
    FAIL("expected a numerical error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numerical);
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
}

TEST_CASE("grad_params: quadratic loss on a linear 1-1 net")
{
  nn::DenseNetwork net({1, 1});
  net.parameters()[0].weight(0, 0) = 1.7;
  const auto g = nn::grad_params(net, Matrix::Constant(1, 1, 1.0), [](const Matrix& out) {
    return nn::LossEval{0.5 * out.squaredNorm(), out};
  });
  CHECK(g[0].weight(0, 0) == doctest::Approx(1.7));
}

TEST_CASE("grad_params: zero loss gives zero gradients")
{
  Rng rng(3);
  const auto net = random_network({3, 6, 2}, rng);
  const auto g = nn::grad_params(net, random_matrix(rng, 4, 3),
                                 [](const Matrix& out) { return nn::LossEval{0.0, Matrix::Zero(out.rows(), out.cols())}; });
  for (double v : flatten(g))
    CHECK(v == 0.0);
}

TEST_CASE("grad_params matches central differences on random networks")
{
  Rng rng(101);
  int trials = 0;
  double worst = 0.0;
  for (int t = 0; t < 120; ++t) {
    const int in = 1 + static_cast<int>(rng.index(4));
    const int out = 1 + static_cast<int>(rng.index(3));
    std::vector<int> sizes{in};
    const int hidden = 1 + static_cast<int>(rng.index(3));
    for (int h = 0; h < hidden; ++h)
      sizes.push_back(2 + static_cast<int>(rng.index(7)));
    sizes.push_back(out);
    auto net = random_network(sizes, rng);
    const Matrix batch = random_matrix(rng, 1 + static_cast<Eigen::Index>(rng.index(6)), in);
    const Matrix target = random_matrix(rng, batch.rows(), out);
    auto loss = [&](const Matrix& o) {
      const Matrix r = o - target;
      return nn::LossEval{0.5 * r.squaredNorm() + (o.array() * target.array()).sum(), r + target};
    };
    const auto g = nn::grad_params(net, batch, loss);
    const auto fd = fd_params(net.parameters(), [&] { return loss(net.forward(batch)).value; });
    const double err = rel_error(flatten(g), fd);
    worst = std::max(worst, err);
    ++trials;
  }
  CHECK(trials >= 100);
  CHECK(worst < 1e-5);
}

TEST_CASE("grad_input: linear, constant and random networks")
{
  nn::DenseNetwork lin({3, 1});
  lin.parameters()[0].weight << 0.5, -2.0, 3.0;
  const Vector a = lin.parameters()[0].weight.row(0).transpose();
  Rng rng(4);
  for (int i = 0; i < 5; ++i)
    CHECK(nn::grad_input(lin, Vector(random_matrix(rng, 3, 1))) == a);

  nn::DenseNetwork constant({3, 4, 1});
  constant.parameters()[1].bias(0) = 2.5;
  CHECK(nn::grad_input(constant, Vector(Vector::Ones(3))).isZero(0.0));

  nn::DenseNetwork vec({3, 2});
  try {
    nn::grad_input(vec, Vector(Vector::Ones(3)));
    FAIL("expected a contract error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::contract);
  }

  double worst = 0.0;
  for (int t = 0; t < 120; ++t) {
    const int in = 1 + static_cast<int>(rng.index(5));
    const auto net = random_network({in, 3 + static_cast<int>(rng.index(6)), 4, 1}, rng);
    Vector x = random_matrix(rng, in, 1);
    const Vector g = nn::grad_input(net, x);
    std::vector<double> fd;
    for (int j = 0; j < in; ++j) {
      const double keep = x(j);
      x(j) = keep + 1e-6;
      const double up = net.forward_one(x)(0);
      x(j) = keep - 1e-6;
      const double down = net.forward_one(x)(0);
      x(j) = keep;
      fd.push_back((up - down) / 2e-6);
    }
    worst = std::max(worst, rel_error({g.data(), g.data() + g.size()}, fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gradient_norm_penalty parameter gradient matches central differences")
{
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int in = 1 + static_cast<int>(rng.index(4));
    auto net = random_network({in, 2 + static_cast<int>(rng.index(6)), 3 + static_cast<int>(rng.index(4)), 1}, rng);
    const Matrix pts = random_matrix(rng, 1 + static_cast<Eigen::Index>(rng.index(5)), in);
    auto grads = nn::zeros_like(net.parameters());
    nn::gradient_norm_penalty(net, pts, 10.0, &grads);
    const auto fd = fd_params(net.parameters(), [&] { return nn::gradient_norm_penalty(net, pts, 10.0, nullptr); });
    worst = std::max(worst, rel_error(flatten(grads), fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("Adam: first step, zero gradients, scalar convergence")
{
  nn::Parameters p(1);
  p[0].weight = Matrix::Constant(1, 1, 0.0);
  p[0].bias = Vector::Zero(1);
  nn::AdamConfig cfg;
  nn::AdamState adam(p, cfg);
  auto g = nn::zeros_like(p);
  g[0].weight(0, 0) = 0.37;
  adam.step(p, g);
  CHECK(adam.step_count() == 1);
  CHECK(std::abs(p[0].weight(0, 0) + cfg.learning_rate) <= cfg.learning_rate * cfg.epsilon / 0.37 + 1e-18);

  nn::Parameters q = p;
  nn::AdamState idle(q, cfg);
  for (int i = 0; i < 10; ++i)
    idle.step(q, nn::zeros_like(q));
  CHECK(q[0].weight == p[0].weight);
  CHECK(idle.step_count() == 10);

  nn::Parameters w(1);
  w[0].weight = Matrix::Zero(1, 1);
  w[0].bias = Vector::Zero(1);
  nn::AdamConfig fast;
  fast.learning_rate = 0.1;
  nn::AdamState opt(w, fast);
  for (int i = 0; i < 200; ++i) {
    auto gw = nn::zeros_like(w);
    gw[0].weight(0, 0) = w[0].weight(0, 0) - 3.0;
    opt.step(w, gw);
  }
  CHECK(std::abs(w[0].weight(0, 0) - 3.0) < 1e-2);
}

TEST_CASE("Adam rejects mismatched gradient shapes")
{
  nn::Parameters p(1);
  p[0].weight = Matrix::Zero(2, 2);
  p[0].bias = Vector::Zero(2);
  nn::AdamState adam(p, {});
  nn::Parameters bad(1);
  bad[0].weight = Matrix::Zero(2, 3);
  bad[0].bias = Vector::Zero(2);
  try {
    adam.step(p, bad);
    FAIL("expected a contract error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::contract);
  }
}

TEST_CASE("network records round-trip and reject corruption")
{
  Rng rng(9);
  const auto net = random_network({3, 7, 2}, rng);
  std::stringstream ss;
  nn::write_network(ss, net);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "MGAN");
  std::stringstream in(bytes);
  CHECK(nn::read_network(in) == net);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(nn::read_network(truncated), Error);
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream wrong(bad);
  try {
    nn::read_network(wrong);
    FAIL("expected an I/O error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

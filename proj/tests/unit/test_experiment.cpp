#include "mgan/error.hpp"
#include "mgan/experiment.hpp"

#include <doctest.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mgan;
using namespace mgan::experiment;
namespace fs = std::filesystem;

namespace {

struct TempDir
{
  fs::path path;
  TempDir()
  {
    std::string tmpl = (fs::temp_directory_path() / "mgan_test_XXXXXX").string();
    path = ::mkdtemp(tmpl.data());
  }
  ~TempDir()
  {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string read_file(const fs::path& p)
{
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t data_lines(const fs::path& p)
{
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    n += !line.empty() && line[0] != '#';
  return n;
}

ErrorKind kind_of(const std::function<void()>& fn)
{
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io;
}

ExperimentConfig tiny(const fs::path& dir, const std::string& problem = "synthetic-4")
{
  auto cfg = parse_config(R"({"problem": ")" + problem + R"(",
    "dataset": {"N": 300, "seed": 3},
    "train": {"epochs": 2, "batch_size": 50, "generator_hidden": [8], "discriminator_hidden": [8],
              "monotonicity_pairs": 200, "keep_last": 2, "seed": 3},
    "evaluate": {"samples": 2000, "grid_points": 40, "seed": 3},
    "mcmc": {"length": 3000, "burn_in": 500, "pilot_length": 500, "seed": 3}})");
  cfg.output_dir = dir.string();
  return cfg;
}

} // namespace

TEST_CASE("config round-trips through JSON")
{
  ExperimentConfig cfg;
  cfg.problem = "bod";
  cfg.train.lambda = 0.25;
  cfg.train.map = trainer::MapKind::triangular;
  cfg.train.loss.kind = losses::LossKind::wgan_gp;
  cfg.evaluate.x_star = {{0.1, 0.2, 0.3, 0.4, 0.5}};
  cfg.evaluate.bandwidth = "cv-5fold";
  cfg.mcmc.thin = 20;
  cfg.set_seed(99);
  const auto back = parse_config(serialize_config(cfg));
  CHECK(back == cfg);
  CHECK(back.train.seed == 99);
  CHECK(back.dataset.seed == 99);
}

TEST_CASE("config parsing is strict")
{
  CHECK(kind_of([] { parse_config(R"({"bogus": 1})"); }) == ErrorKind::config);
  CHECK(kind_of([] { parse_config(R"({"train": {"epochs": "ten"}})"); }) == ErrorKind::config);
  CHECK(kind_of([] { parse_config(R"({"train": {"lambda": -1}})"); }) == ErrorKind::config);
  CHECK(kind_of([] { parse_config(R"({"problem": "nope"})"); }) == ErrorKind::config);
  CHECK(kind_of([] { parse_config("{not json"); }) == ErrorKind::config);
  CHECK(kind_of([] { load_config("/nonexistent/config.json"); }) == ErrorKind::io);
}

TEST_CASE("problem dimensions and default conditioning points")
{
  CHECK(problem_dims(problems::ProblemId::synthetic5) == std::pair{1, 1});
  CHECK(problem_dims(problems::ProblemId::banana) == std::pair{0, 2});
  CHECK(problem_dims(problems::ProblemId::bod) == std::pair{5, 2});
  CHECK(problem_dims(problems::ProblemId::darcy) == std::pair{16, 2});
  ExperimentConfig cfg;
  CHECK(conditioning_points(cfg).size() == 3);
  cfg.problem = "bod";
  REQUIRE(conditioning_points(cfg).size() == 1);
  CHECK(conditioning_points(cfg)[0].size() == 5);
}

TEST_CASE("generation is byte-reproducible")
{
  TempDir a, b;
  auto ca = tiny(a.path);
  auto cb = tiny(b.path);
  ca.dataset.N = cb.dataset.N = 50000;
  ca.dataset.seed = cb.dataset.seed = 7;
  const auto pa = cmd_generate(ca);
  const auto pb = cmd_generate(cb);
  CHECK(fnv1a_file(pa) == fnv1a_file(pb));
  CHECK(data_lines(pa) == 50001);
  CHECK(fs::exists(a.path / "data" / "manifest.json"));

  cb.dataset.format = "binary";
  const auto bin = cmd_generate(cb);
  CHECK(fs::path(bin).extension() == ".bin");
}

TEST_CASE("an occupied experiment directory is refused")
{
  TempDir dir;
  const auto lock = dir.path / ".mgan.lock";
  const int fd = ::open(lock.c_str(), O_CREAT | O_RDWR, 0644);
  REQUIRE(fd >= 0);
  REQUIRE(::flock(fd, LOCK_EX | LOCK_NB) == 0);
  // flock locks belong to the open file description, so a second open conflicts.
  CHECK(kind_of([&] { cmd_generate(tiny(dir.path)); }) == ErrorKind::io);
  ::close(fd);
  CHECK_NOTHROW(cmd_generate(tiny(dir.path)));
}

TEST_CASE("train writes history, checkpoints and labels the run")
{
  TempDir dir;
  auto cfg = tiny(dir.path);
  cfg.train.lambda = 0.0;
  const auto data = cmd_generate(cfg);
  const auto final_path = cmd_train(cfg, data);
  CHECK(fs::exists(final_path));
  const auto history = read_file(dir.path / "train" / "history.csv");
  CHECK(history.rfind("# run=cgan", 0) == 0);
  CHECK(data_lines(dir.path / "train" / "history.csv") == 1 + 2);
  CHECK(fs::exists(dir.path / "train" / "checkpoints" / "epoch_0001.mgtm"));
  CHECK(fs::exists(dir.path / "train" / "checkpoints" / "epoch_0002.mgtm"));
  CHECK(fs::exists(dir.path / "train" / "discriminator.mgan"));

  std::istringstream rows(history);
  std::string line;
  std::getline(rows, line);
  std::getline(rows, line);
  CHECK(line == "epoch,gen_loss,disc_loss,penalty,mono_prob");
  while (std::getline(rows, line)) {
    const double mono = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(mono >= 0.0);
    CHECK(mono <= 1.0);
  }
}

TEST_CASE("train rejects a dataset of the wrong shape before training")
{
  TempDir a, b;
  const auto banana = cmd_generate(tiny(a.path, "banana"));
  CHECK(kind_of([&] { cmd_train(tiny(b.path), banana); }) == ErrorKind::config);
  CHECK_FALSE(fs::exists(b.path / "train" / "history.csv"));
}

TEST_CASE("generate, train and evaluate are reproducible end to end")
{
  std::string metrics[2];
  for (int k = 0; k < 2; ++k) {
    TempDir dir;
    auto cfg = tiny(dir.path);
    const auto data = cmd_generate(cfg);
    cmd_train(cfg, data);
    const auto rows = cmd_evaluate(cfg, (dir.path / "train").string());
    bool has_kl = false;
    for (const auto& r : rows)
      has_kl = has_kl || r.metric == "joint_kl";
    CHECK(has_kl);
    metrics[k] = read_file(dir.path / "evaluate" / "metrics.csv");
    CHECK(fs::exists(dir.path / "evaluate" / "samples_x0.csv"));
  }
  CHECK(metrics[0] == metrics[1]);
  CHECK(metrics[0].rfind("metric,value,std,scale_factor", 0) == 0);
}

TEST_CASE("evaluate rejects metrics the problem cannot provide")
{
  TempDir dir;
  auto cfg = tiny(dir.path, "banana");
  cfg.evaluate.metrics = {"mmd"};
  CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::config);
  CHECK(kind_of([&] { cmd_evaluate(cfg, (dir.path / "train").string()); }) == ErrorKind::config);
}

TEST_CASE("MCMC chains are reproducible and need a posterior")
{
  TempDir a, b;
  const auto ca = cmd_mcmc(tiny(a.path, "bod"));
  const auto cb = cmd_mcmc(tiny(b.path, "bod"));
  REQUIRE(ca.size() == 1);
  CHECK(fnv1a_file(ca[0]) == fnv1a_file(cb[0]));
  CHECK(data_lines(ca[0]) == 1 + 3000);
  CHECK(read_file(a.path / "mcmc" / "manifest.json").find("acceptance") != std::string::npos);

  TempDir c;
  CHECK(kind_of([&] { cmd_mcmc(tiny(c.path)); }) == ErrorKind::config);
}

TEST_CASE("KR oracle table")
{
  TempDir dir;
  const auto path = cmd_kr_oracle(tiny(dir.path, "synthetic-6"));
  std::ifstream in(path);
  std::string line;
  do
    std::getline(in, line);
  while (line.rfind('#', 0) == 0);
  CHECK(line == "x,u,y_true,degenerate");
  CHECK(data_lines(path) > 10);
  TempDir other;
  CHECK(kind_of([&] { cmd_kr_oracle(tiny(other.path, "bod")); }) == ErrorKind::config);
}

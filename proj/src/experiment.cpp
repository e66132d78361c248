#include "mgan/experiment.hpp"

#include "mgan/error.hpp"
#include "mgan/metrics.hpp"
#include "mgan/oracles.hpp"
#include "mgan/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace mgan::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using problems::ProblemId;

namespace {

// ---------------------------------------------------------------------------
// Strict JSON reading

class Reader
{
public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where))
  {
    require(obj_.is_object(), ErrorKind::config, where_ + " must be an object");
  }

  ~Reader() noexcept(false)
  {
    if (std::uncaught_exceptions() > 0)
      return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key()))
        fail(ErrorKind::config, "unknown key '" + it.key() + "' in " + where_);
  }

  const json* find(const std::string& key)
  {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& key, T& out)
  {
    if (const json* v = find(key))
      out = convert<T>(*v, where_ + "." + key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <class T>
  static T convert(const json& v, const std::string& where)
  {
    if constexpr (std::is_same_v<T, bool>) {
      require(v.is_boolean(), ErrorKind::config, where + " must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      require(v.is_string(), ErrorKind::config, where + " must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      require(v.is_number(), ErrorKind::config, where + " must be a number");
      return v.get<double>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0), ErrorKind::config,
              where + " must be a non-negative integer");
      return static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_integral_v<T>) {
      require(v.is_number_integer(), ErrorKind::config, where + " must be an integer");
      return static_cast<T>(v.get<std::int64_t>());
    } else {
      require(v.is_array(), ErrorKind::config, where + " must be a list");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string loss_name(losses::LossKind k) { return k == losses::LossKind::lsgan ? "lsgan" : "wgan-gp"; }

losses::LossKind parse_loss(const std::string& s)
{
  if (s == "lsgan")
    return losses::LossKind::lsgan;
  if (s == "wgan-gp")
    return losses::LossKind::wgan_gp;
  fail(ErrorKind::config, "train.loss must be 'lsgan' or 'wgan-gp', got '" + s + "'");
}

std::string map_name(trainer::MapKind k) { return k == trainer::MapKind::block ? "block" : "triangular"; }

trainer::MapKind parse_map(const std::string& s)
{
  if (s == "block")
    return trainer::MapKind::block;
  if (s == "triangular")
    return trainer::MapKind::triangular;
  fail(ErrorKind::config, "train.map must be 'block' or 'triangular', got '" + s + "'");
}

json train_to_json(const trainer::TrainConfig& t)
{
  return json{{"loss", loss_name(t.loss.kind)},
              {"gp_weight", t.loss.gp_weight},
              {"lambda", t.lambda},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"learning_rate", t.adam.learning_rate},
              {"beta1", t.adam.beta1},
              {"beta2", t.adam.beta2},
              {"epsilon", t.adam.epsilon},
              {"critic_updates", t.critic_updates},
              {"seed", t.seed},
              {"map", map_name(t.map)},
              {"reverse_order", t.reverse_order},
              {"generator_hidden", t.generator_hidden},
              {"discriminator_hidden", t.discriminator_hidden},
              {"leaky_slope", t.leaky_slope},
              {"standardize", t.standardize},
              {"monotonicity_pairs", t.monotonicity_pairs},
              {"keep_last", t.keep_last}};
}

void train_from_json(const json& j, trainer::TrainConfig& t)
{
  Reader r(j, "train");
  if (const json* v = r.find("loss"))
    t.loss.kind = parse_loss(Reader::convert<std::string>(*v, r.path("loss")));
  r.get("gp_weight", t.loss.gp_weight);
  r.get("lambda", t.lambda);
  r.get("batch_size", t.batch_size);
  r.get("epochs", t.epochs);
  r.get("learning_rate", t.adam.learning_rate);
  r.get("beta1", t.adam.beta1);
  r.get("beta2", t.adam.beta2);
  r.get("epsilon", t.adam.epsilon);
  r.get("critic_updates", t.critic_updates);
  r.get("seed", t.seed);
  if (const json* v = r.find("map"))
    t.map = parse_map(Reader::convert<std::string>(*v, r.path("map")));
  r.get("reverse_order", t.reverse_order);
  r.get("generator_hidden", t.generator_hidden);
  r.get("discriminator_hidden", t.discriminator_hidden);
  r.get("leaky_slope", t.leaky_slope);
  r.get("standardize", t.standardize);
  r.get("monotonicity_pairs", t.monotonicity_pairs);
  r.get("keep_last", t.keep_last);
}

json to_json(const ExperimentConfig& c)
{
  const auto& d = c.dataset;
  const auto& e = c.evaluate;
  const auto& m = c.mcmc;
  return json{{"problem", c.problem},
              {"output_dir", c.output_dir},
              {"dataset",
               {{"N", d.N}, {"seed", d.seed}, {"format", d.format}, {"darcy_grid", d.darcy_grid},
                {"banana_reverse", d.banana_reverse}}},
              {"train", train_to_json(c.train)},
              {"evaluate",
               {{"x_star", e.x_star},
                {"x_star_parameters", e.x_star_parameters},
                {"metrics", e.metrics},
                {"samples", e.samples},
                {"grid_points", e.grid_points},
                {"bandwidth", e.bandwidth},
                {"seed", e.seed},
                {"reference_chains", e.reference_chains},
                {"dump_samples", e.dump_samples}}},
              {"mcmc",
               {{"length", m.length},
                {"burn_in", m.burn_in},
                {"thin", m.thin},
                {"initial", m.initial},
                {"proposal_std", m.proposal_std},
                {"tune", m.tune},
                {"pilot_length", m.pilot_length},
                {"seed", m.seed}}}};
}

// ---------------------------------------------------------------------------
// Files

void ensure_dir(const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out)
    fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header, const std::string& comment)
{
  std::string s;
  if (!comment.empty())
    s += "# " + comment + "\n";
  for (std::size_t j = 0; j < header.size(); ++j)
    s += header[j] + (j + 1 < header.size() ? "," : "\n");
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      s += format_double(m(i, j));
      s += (j + 1 < m.cols() ? ',' : '\n');
    }
  return s;
}

std::vector<std::string> y_header(int m)
{
  std::vector<std::string> h;
  for (int j = 1; j <= m; ++j)
    h.push_back("y" + std::to_string(j));
  return h;
}

std::string vector_text(const Vector& v)
{
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i)
    s += (i ? " " : "") + format_double(v(i));
  return s + ")";
}

// One experiment directory is owned by one process.
class DirLock
{
public:
  explicit DirLock(const fs::path& dir)
  {
    ensure_dir(dir);
    const auto path = (dir / ".mgan.lock").string();
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0)
      fail(ErrorKind::io, "cannot open lockfile '" + path + "'");
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fail(ErrorKind::io, "experiment directory '" + dir.string() + "' is in use by another process");
    }
  }
  ~DirLock()
  {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

private:
  int fd_ = -1;
};

void write_manifest(const fs::path& dir, const std::string& stage, const ExperimentConfig& cfg, json extra)
{
  json j{{"stage", stage}, {"version", "0.1.0"}, {"config", to_json(cfg)}};
  for (auto it = extra.begin(); it != extra.end(); ++it)
    j[it.key()] = it.value();
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

problems::DarcyGrid darcy_grid(const ExperimentConfig& cfg)
{
  problems::DarcyGrid g;
  g.interior = cfg.dataset.darcy_grid;
  return g;
}

// ---------------------------------------------------------------------------
// Metric catalogue

struct MetricInfo
{
  std::string name;
  double scale;
};

std::vector<MetricInfo> supported_metrics(ProblemId id)
{
  if (problems::is_synthetic(id))
    return {{"joint_kl", 1e3},        {"joint_rel_l2", 10.0},   {"joint_kl_analytic", 1e3},
            {"joint_rel_l2_analytic", 10.0}, {"cond_kl", 1e3}, {"cond_rel_l2", 10.0},
            {"cond_ks", 1.0},         {"mono_prob", 100.0}};
  if (id == ProblemId::banana)
    return {{"joint_kl", 1.0}, {"joint_rel_l2", 1.0}, {"mono_prob", 100.0}};
  return {{"rel_l2", 1.0},   {"kl", 1e3},       {"mmd", 1.0},       {"mmd_prior_control", 1.0},
          {"moments", 1.0},  {"mono_prob", 100.0}};
}

double metric_scale(ProblemId id, const std::string& name)
{
  for (const auto& m : supported_metrics(id))
    if (m.name == name)
      return m.scale;
  return 1.0;
}

std::vector<std::string> selected_metrics(const ExperimentConfig& cfg)
{
  if (!cfg.evaluate.metrics.empty())
    return cfg.evaluate.metrics;
  std::vector<std::string> out;
  for (const auto& m : supported_metrics(cfg.problem_id()))
    out.push_back(m.name);
  return out;
}

// ---------------------------------------------------------------------------
// MCMC helpers

oracles::McmcConfig mcmc_config(const ExperimentConfig& cfg, const Vector& x_star, std::size_t index)
{
  const auto id = cfg.problem_id();
  oracles::McmcConfig mc;
  mc.length = cfg.mcmc.length;
  mc.burn_in = cfg.mcmc.burn_in;
  mc.thin = cfg.mcmc.thin;
  mc.seed = mix_seed(cfg.mcmc.seed, 0x3c3c + index);
  Vector init(2), prop(2);
  if (id == ProblemId::bod) {
    mc.log_density = [x_star](const Vector& rho) { return oracles::bod_log_posterior(rho, x_star); };
    init << 0.0, 0.0;
    prop << 0.5, 0.5;
  } else if (id == ProblemId::darcy) {
    const auto grid = darcy_grid(cfg);
    mc.log_density = [x_star, grid](const Vector& ab) { return oracles::darcy_log_posterior(ab, x_star, grid); };
    init << 4.0, 14.0;
    prop << 0.05, 0.3;
  } else {
    fail(ErrorKind::config, "no MCMC posterior for problem '" + cfg.problem + "'");
  }
  if (!cfg.mcmc.initial.empty())
    init = Eigen::Map<const Vector>(cfg.mcmc.initial.data(), 2);
  if (!cfg.mcmc.proposal_std.empty())
    prop = Eigen::Map<const Vector>(cfg.mcmc.proposal_std.data(), 2);
  mc.initial = init;
  mc.proposal_std = prop;
  return mc;
}

struct ChainResult
{
  oracles::McmcChain chain;
  int tuning_rounds = 0;
};

ChainResult run_chain(const ExperimentConfig& cfg, const Vector& x_star, std::size_t index)
{
  auto mc = mcmc_config(cfg, x_star, index);
  ChainResult out;
  if (cfg.mcmc.tune) {
    const auto tuned = oracles::tune_proposal(mc, cfg.mcmc.pilot_length);
    mc.proposal_std = tuned.proposal_std;
    out.tuning_rounds = tuned.rounds;
  }
  try {
    out.chain = oracles::mcmc_sample(mc);
  } catch (const Error& e) {
    fail(e.kind(), "MCMC at x*" + std::to_string(index) + ": " + e.what());
  }
  return out;
}

Matrix read_chain(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::io, "cannot open reference chain '" + path + "'");
  return read_dataset_csv(in, 0).y;
}

std::vector<fs::path> checkpoint_files(const std::string& path)
{
  std::vector<fs::path> out;
  if (fs::is_directory(path)) {
    fs::path dir = path;
    if (fs::is_directory(dir / "checkpoints"))
      dir /= "checkpoints";
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("epoch_", 0) == 0 && e.path().extension() == ".mgtm")
        out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty() && fs::exists(fs::path(path) / "final.mgtm"))
      out.push_back(fs::path(path) / "final.mgtm");
  } else if (fs::exists(path)) {
    out.push_back(path);
  }
  require(!out.empty(), ErrorKind::io, "no checkpoints found at '" + path + "'");
  return out;
}

} // namespace

// ---------------------------------------------------------------------------

ProblemId ExperimentConfig::problem_id() const { return problems::parse_problem(problem); }

std::pair<int, int> problem_dims(ProblemId id)
{
  switch (id) {
  case ProblemId::banana: return {0, 2};
  case ProblemId::bod: return {problems::kBodObservations, 2};
  case ProblemId::darcy: return {problems::kDarcyObservations, 2};
  default: return {1, 1};
  }
}

void ExperimentConfig::validate() const
{
  const auto id = problem_id();
  const auto [n, m] = problem_dims(id);
  require(!output_dir.empty(), ErrorKind::config, "output_dir must not be empty");
  require(dataset.N >= 1, ErrorKind::config, "dataset.N must be positive");
  require(dataset.format == "csv" || dataset.format == "binary", ErrorKind::config,
          "dataset.format must be 'csv' or 'binary'");
  require(dataset.darcy_grid >= 3, ErrorKind::config, "dataset.darcy_grid must be at least 3");
  train.validate();
  require(evaluate.samples >= 2, ErrorKind::config, "evaluate.samples must be at least 2");
  require(evaluate.grid_points >= 2, ErrorKind::config, "evaluate.grid_points must be at least 2");
  metrics::KdeConfig::parse(evaluate.bandwidth);
  std::set<std::string> known;
  for (const auto& mi : supported_metrics(id))
    known.insert(mi.name);
  for (const auto& name : evaluate.metrics)
    require(known.count(name) > 0, ErrorKind::config,
            "metric '" + name + "' is not available for problem '" + problem + "'");
  for (const auto& x : evaluate.x_star)
    require(static_cast<int>(x.size()) == n, ErrorKind::config,
            "evaluate.x_star entries need " + std::to_string(n) + " values");
  if (!evaluate.x_star_parameters.empty()) {
    require(id == ProblemId::bod || id == ProblemId::darcy, ErrorKind::config,
            "evaluate.x_star_parameters applies to bod and darcy only");
    for (const auto& p : evaluate.x_star_parameters)
      require(static_cast<int>(p.size()) == m, ErrorKind::config, "evaluate.x_star_parameters entries need 2 values");
  }
  require(mcmc.length >= 1 && mcmc.thin >= 1 && mcmc.pilot_length >= 1, ErrorKind::config,
          "mcmc.length, mcmc.thin and mcmc.pilot_length must be positive");
  require(mcmc.initial.empty() || mcmc.initial.size() == 2, ErrorKind::config, "mcmc.initial needs 2 values");
  require(mcmc.proposal_std.empty() || mcmc.proposal_std.size() == 2, ErrorKind::config,
          "mcmc.proposal_std needs 2 values");
}

void ExperimentConfig::set_seed(std::uint64_t seed)
{
  dataset.seed = seed;
  train.seed = seed;
  evaluate.seed = seed;
  mcmc.seed = seed;
}

ExperimentConfig parse_config(const std::string& json_text)
{
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    Reader r(j, "config");
    r.get("problem", c.problem);
    r.get("output_dir", c.output_dir);
    if (const json* d = r.find("dataset")) {
      Reader rd(*d, "dataset");
      rd.get("N", c.dataset.N);
      rd.get("seed", c.dataset.seed);
      rd.get("format", c.dataset.format);
      rd.get("darcy_grid", c.dataset.darcy_grid);
      rd.get("banana_reverse", c.dataset.banana_reverse);
    }
    if (const json* t = r.find("train"))
      train_from_json(*t, c.train);
    if (const json* e = r.find("evaluate")) {
      Reader re(*e, "evaluate");
      re.get("x_star", c.evaluate.x_star);
      re.get("x_star_parameters", c.evaluate.x_star_parameters);
      re.get("metrics", c.evaluate.metrics);
      re.get("samples", c.evaluate.samples);
      re.get("grid_points", c.evaluate.grid_points);
      re.get("bandwidth", c.evaluate.bandwidth);
      re.get("seed", c.evaluate.seed);
      re.get("reference_chains", c.evaluate.reference_chains);
      re.get("dump_samples", c.evaluate.dump_samples);
    }
    if (const json* m = r.find("mcmc")) {
      Reader rm(*m, "mcmc");
      rm.get("length", c.mcmc.length);
      rm.get("burn_in", c.mcmc.burn_in);
      rm.get("thin", c.mcmc.thin);
      rm.get("initial", c.mcmc.initial);
      rm.get("proposal_std", c.mcmc.proposal_std);
      rm.get("tune", c.mcmc.tune);
      rm.get("pilot_length", c.mcmc.pilot_length);
      rm.get("seed", c.mcmc.seed);
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::io, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::vector<Vector> conditioning_points(const ExperimentConfig& cfg)
{
  const auto id = cfg.problem_id();
  std::vector<Vector> out;
  for (const auto& x : cfg.evaluate.x_star)
    out.push_back(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())));
  for (const auto& p : cfg.evaluate.x_star_parameters) {
    if (id == ProblemId::bod)
      out.push_back(problems::bod_forward(p[0], p[1], nullptr, false));
    else
      out.push_back(
        problems::darcy_observe(problems::darcy_solve(p[0], p[1], darcy_grid(cfg)), nullptr, false));
  }
  if (!out.empty())
    return out;
  switch (id) {
  case ProblemId::banana: return {Vector(0)};
  case ProblemId::bod: return {problems::bod_reference_observation()};
  case ProblemId::darcy:
    for (const auto& p : problems::darcy_reference_parameters())
      out.push_back(
        problems::darcy_observe(problems::darcy_solve(p[0], p[1], darcy_grid(cfg)), nullptr, false));
    return out;
  default:
    for (double x : {-2.0, 0.0, 2.0})
      out.push_back(Vector::Constant(1, x));
    return out;
  }
}

int worker_threads()
{
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("MGAN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    require(end && *end == '\0' && v >= 1, ErrorKind::config, "MGAN_THREADS must be a positive integer");
    n = std::min<int>(n, static_cast<int>(v));
  }
  return n;
}

std::uint64_t fnv1a_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::io, "cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// generate

std::string cmd_generate(const ExperimentConfig& cfg)
{
  cfg.validate();
  const fs::path root = cfg.output_dir;
  DirLock lock(root);
  const fs::path dir = root / "data";
  ensure_dir(dir);
  const auto id = cfg.problem_id();
  Rng rng(cfg.dataset.seed);
  JointDataset data;
  switch (id) {
  case ProblemId::synthetic4: data = problems::gen_synthetic(4, cfg.dataset.N, rng); break;
  case ProblemId::synthetic5: data = problems::gen_synthetic(5, cfg.dataset.N, rng); break;
  case ProblemId::synthetic6: data = problems::gen_synthetic(6, cfg.dataset.N, rng); break;
  case ProblemId::banana: data = problems::gen_banana(cfg.dataset.N, rng, cfg.dataset.banana_reverse); break;
  case ProblemId::bod: data = problems::gen_bod(cfg.dataset.N, rng); break;
  case ProblemId::darcy:
    data = problems::gen_darcy(cfg.dataset.N, rng, darcy_grid(cfg), worker_threads());
    break;
  }
  data.problem = cfg.problem;
  data.seed = cfg.dataset.seed;
  const fs::path path = dir / (cfg.dataset.format == "csv" ? "dataset.csv" : "dataset.bin");
  save_dataset(path.string(), data);
  write_manifest(dir, "generate", cfg,
                 {{"dataset", path.string()},
                  {"rows", data.size()},
                  {"n", data.n()},
                  {"m", data.m()},
                  {"fnv1a", fnv1a_file(path.string())}});
  return path.string();
}

// ---------------------------------------------------------------------------
// train

std::string cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path, const ProgressFn& progress)
{
  cfg.validate();
  const auto id = cfg.problem_id();
  const auto [n, m] = problem_dims(id);
  JointDataset data = load_dataset(dataset_path);
  require(data.n() == n && data.m() == m, ErrorKind::config,
          "dataset '" + dataset_path + "' has n=" + std::to_string(data.n()) + ", m=" + std::to_string(data.m()) +
            " but problem '" + cfg.problem + "' needs n=" + std::to_string(n) + ", m=" + std::to_string(m));
  require(data.problem.empty() || data.problem == cfg.problem, ErrorKind::config,
          "dataset was generated for problem '" + data.problem + "', config names '" + cfg.problem + "'");

  const fs::path root = cfg.output_dir;
  DirLock lock(root);
  const fs::path dir = root / "train";
  const fs::path ckdir = dir / "checkpoints";
  ensure_dir(ckdir);
  for (const auto& e : fs::directory_iterator(ckdir))
    if (e.path().extension() == ".mgtm")
      fs::remove(e.path());

  const fs::path history_path = dir / "history.csv";
  std::ofstream history(history_path, std::ios::trunc);
  if (!history)
    fail(ErrorKind::io, "cannot open '" + history_path.string() + "' for writing");
  history << "# run=" << (cfg.train.lambda == 0.0 ? "cgan" : "mgan") << " lambda=" << format_double(cfg.train.lambda)
          << " problem=" << cfg.problem << "\n";
  history << "epoch,gen_loss,disc_loss,penalty,mono_prob\n";
  history.flush();

  const auto t0 = std::chrono::steady_clock::now();
  auto on_epoch = [&](const trainer::EpochRecord& r) {
    history << r.epoch << ',' << format_double(r.gen_loss) << ',' << format_double(r.disc_loss) << ','
            << format_double(r.penalty) << ',' << format_double(r.mono_prob) << '\n';
    history.flush();
    if (!history)
      fail(ErrorKind::io, "failed writing '" + history_path.string() + "'");
    if (progress) {
      std::ostringstream os;
      os << "epoch " << r.epoch << "/" << cfg.train.epochs << " gen " << r.gen_loss << " disc " << r.disc_loss
         << " penalty " << r.penalty << " mono " << r.mono_prob << " (" << r.wall_seconds << " s)";
      progress(os.str());
    }
  };
  const auto result = trainer::train(cfg.train, data, on_epoch);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json saved = json::array();
  for (const auto& snap : result.snapshots) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.mgtm", snap.epoch);
    transport::save_checkpoint((ckdir / name).string(), snap.checkpoint);
    saved.push_back((ckdir / name).string());
  }
  const fs::path final_path = dir / "final.mgtm";
  transport::save_checkpoint(final_path.string(), result.generator);
  {
    const fs::path dpath = dir / "discriminator.mgan";
    std::ofstream out(dpath, std::ios::binary | std::ios::trunc);
    if (!out)
      fail(ErrorKind::io, "cannot open '" + dpath.string() + "' for writing");
    nn::write_network(out, result.discriminator);
    if (!out)
      fail(ErrorKind::io, "failed writing '" + dpath.string() + "'");
  }
  write_manifest(dir, "train", cfg,
                 {{"dataset", dataset_path},
                  {"dataset_fnv1a", fnv1a_file(dataset_path)},
                  {"run", cfg.train.lambda == 0.0 ? "cgan" : "mgan"},
                  {"final_checkpoint", final_path.string()},
                  {"checkpoints", saved},
                  {"generator_updates", result.history.generator_updates},
                  {"discriminator_updates", result.history.discriminator_updates},
                  {"final_mono_prob", result.history.epochs.empty() ? 0.0 : result.history.epochs.back().mono_prob},
                  {"wall_seconds", seconds}});
  return final_path.string();
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

class MetricTable
{
public:
  void add(const std::string& name, double value, double scale)
  {
    if (!values_.count(name))
      order_.push_back(name);
    values_[name].push_back(value);
    scale_[name] = scale;
  }

  std::vector<MetricRow> rows() const
  {
    std::vector<MetricRow> out;
    for (const auto& name : order_) {
      const auto& v = values_.at(name);
      double mean = 0.0;
      for (double x : v)
        mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v)
        var += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      out.push_back({name, mean, sd, scale_.at(name)});
    }
    return out;
  }

private:
  std::vector<std::string> order_;
  std::map<std::string, std::vector<double>> values_;
  std::map<std::string, double> scale_;
};

bool wants(const std::vector<std::string>& list, const std::string& name)
{
  return std::find(list.begin(), list.end(), name) != list.end();
}

std::string at_point(const std::string& name, std::size_t k) { return name + "@x" + std::to_string(k); }

// Conditioning rows for the monotonicity diagnostic.
Matrix diagnostic_x(const ExperimentConfig& cfg, Rng& rng)
{
  const auto id = cfg.problem_id();
  switch (id) {
  case ProblemId::banana: return Matrix(10000, 0);
  case ProblemId::bod: return problems::gen_bod(10000, rng).x;
  case ProblemId::darcy: return problems::gen_darcy(500, rng, darcy_grid(cfg), worker_threads()).x;
  default: {
    Matrix x(10000, 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      x(i, 0) = rng.uniform(-3.0, 3.0);
    return x;
  }
  }
}

double checkpoint_mono_prob(const transport::MapCheckpoint& ck, const Matrix& x, std::uint64_t seed)
{
  auto xs = std::make_shared<const Matrix>(ck.scaling.is_identity() ? x : ck.scaling.encode_x(x));
  transport::ReferenceSampler sampler(xs, transport::output_dim(ck.map));
  Rng rng(seed);
  return transport::monotonicity_probability(ck.map, sampler, 10000, rng);
}

} // namespace

std::vector<MetricRow> cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                                    const ProgressFn& progress)
{
  cfg.validate();
  const auto id = cfg.problem_id();
  const auto [n, m] = problem_dims(id);
  const auto files = checkpoint_files(checkpoint_path);
  std::vector<transport::MapCheckpoint> ckpts;
  for (const auto& f : files) {
    ckpts.push_back(transport::load_checkpoint(f.string()));
    require(transport::input_dim(ckpts.back().map) == n && transport::output_dim(ckpts.back().map) == m,
            ErrorKind::config, "checkpoint '" + f.string() + "' does not match problem '" + cfg.problem + "'");
  }
  const auto selected = selected_metrics(cfg);
  const auto points = conditioning_points(cfg);
  const std::size_t N = cfg.evaluate.samples;
  const auto kde = metrics::KdeConfig::parse(cfg.evaluate.bandwidth);
  const std::uint64_t seed = cfg.evaluate.seed;
  auto say = [&](const std::string& s) {
    if (progress)
      progress(s);
  };

  const fs::path root = cfg.output_dir;
  DirLock lock(root);
  const fs::path dir = root / "evaluate";
  ensure_dir(dir);

  MetricTable table;
  json extra = json::object();
  auto scale = [&](const std::string& name) { return metric_scale(id, name); };

  if (wants(selected, "mono_prob")) {
    Rng xr(mix_seed(seed, 0xd1));
    const Matrix x = diagnostic_x(cfg, xr);
    for (const auto& ck : ckpts)
      table.add("mono_prob", checkpoint_mono_prob(ck, x, mix_seed(seed, 0xd2)), scale("mono_prob"));
  }

  if (problems::is_synthetic(id)) {
    const oracles::AnalyticConditional law(id);
    const int number = id == ProblemId::synthetic4 ? 4 : id == ProblemId::synthetic5 ? 5 : 6;
    const bool joint = wants(selected, "joint_kl") || wants(selected, "joint_rel_l2") ||
                       wants(selected, "joint_kl_analytic") || wants(selected, "joint_rel_l2_analytic");
    if (joint) {
      say("building joint reference densities");
      Rng ref_rng(mix_seed(seed, 0x5c07));
      const Matrix ref = problems::gen_synthetic(number, N, ref_rng).joint();
      const Vector h = metrics::resolve_bandwidth(ref, kde);
      const auto grid = metrics::DensityGrid::bounding(ref, cfg.evaluate.grid_points);
      const auto smooth = metrics::smoothed_joint_density(law, h, grid);
      const auto exact = metrics::tabulate([&](std::span<const double> p) { return law.joint_density(p); }, grid);
      extra["joint_bandwidth"] = {h(0), h(1)};
      Rng xr(mix_seed(seed, 0x10));
      Matrix x(static_cast<Eigen::Index>(N), 1);
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        x(i, 0) = xr.uniform(-3.0, 3.0);
      for (std::size_t c = 0; c < ckpts.size(); ++c) {
        Rng ur(mix_seed(seed, 0x11));
        Matrix z(x.rows(), 2);
        z.col(0) = x.col(0);
        z.col(1) = transport::sample_outputs(ckpts[c].map, x, ur, &ckpts[c].scaling).col(0);
        const auto est = metrics::kde_on_grid(z, h, grid);
        if (wants(selected, "joint_kl"))
          table.add("joint_kl", metrics::kl_grid(smooth, est), scale("joint_kl"));
        if (wants(selected, "joint_rel_l2"))
          table.add("joint_rel_l2", metrics::relative_l2(est, smooth), scale("joint_rel_l2"));
        if (wants(selected, "joint_kl_analytic"))
          table.add("joint_kl_analytic", metrics::kl_grid(exact, est), scale("joint_kl_analytic"));
        if (wants(selected, "joint_rel_l2_analytic"))
          table.add("joint_rel_l2_analytic", metrics::relative_l2(est, exact), scale("joint_rel_l2_analytic"));
        say("joint metrics for " + files[c].filename().string());
      }
    }
    const bool cond = wants(selected, "cond_kl") || wants(selected, "cond_rel_l2") || wants(selected, "cond_ks");
    for (std::size_t k = 0; cond && k < points.size(); ++k) {
      const double xs = points[k](0);
      if (law.degenerate(xs)) {
        extra["degenerate_points"].push_back(k);
        continue;
      }
      Rng ref_rng(mix_seed(seed, 0x20 + k));
      Matrix ref(static_cast<Eigen::Index>(N), 1);
      for (Eigen::Index i = 0; i < ref.rows(); ++i)
        ref(i, 0) = oracles::kr_map(number, xs, ref_rng.normal()).y;
      const Vector h = metrics::resolve_bandwidth(ref, kde);
      const auto grid = metrics::DensityGrid::bounding(ref, cfg.evaluate.grid_points);
      const auto smooth = metrics::smoothed_conditional_density(law, xs, h(0), grid);
      for (std::size_t c = 0; c < ckpts.size(); ++c) {
        Rng ur(mix_seed(seed, 0x30 + k));
        const Matrix y = transport::conditional_sample(ckpts[c].map, points[k], N, ur, &ckpts[c].scaling);
        if (wants(selected, "cond_kl") || wants(selected, "cond_rel_l2")) {
          const auto est = metrics::kde_on_grid(y, h, grid);
          if (wants(selected, "cond_kl"))
            table.add(at_point("cond_kl", k), metrics::kl_grid(smooth, est), scale("cond_kl"));
          if (wants(selected, "cond_rel_l2"))
            table.add(at_point("cond_rel_l2", k), metrics::relative_l2(est, smooth), scale("cond_rel_l2"));
        }
        if (wants(selected, "cond_ks")) {
          std::vector<double> v(y.data(), y.data() + y.size());
          table.add(at_point("cond_ks", k), metrics::ks_statistic(v, [&](double t) { return law.cdf(xs, t); }),
                    scale("cond_ks"));
        }
      }
    }
  } else if (id == ProblemId::banana) {
    const oracles::AnalyticConditional law(id);
    const bool joint = wants(selected, "joint_kl") || wants(selected, "joint_rel_l2");
    if (joint) {
      Rng ref_rng(mix_seed(seed, 0x5c07));
      const Matrix ref = problems::gen_banana(N, ref_rng).y;
      const auto grid = metrics::DensityGrid::bounding(ref, cfg.evaluate.grid_points);
      const auto truth = metrics::tabulate([&](std::span<const double> p) { return law.joint_density(p); }, grid);
      for (std::size_t c = 0; c < ckpts.size(); ++c) {
        Rng ur(mix_seed(seed, 0x11));
        Matrix y = transport::sample_outputs(ckpts[c].map, Matrix(static_cast<Eigen::Index>(N), 0), ur,
                                             &ckpts[c].scaling);
        if (cfg.dataset.banana_reverse)
          y.col(0).swap(y.col(1));
        const auto est = metrics::kde_density(y, kde, grid);
        if (wants(selected, "joint_kl"))
          table.add("joint_kl", metrics::kl_grid(truth, est), scale("joint_kl"));
        if (wants(selected, "joint_rel_l2"))
          table.add("joint_rel_l2", metrics::relative_l2(est, truth), scale("joint_rel_l2"));
        say("joint metrics for " + files[c].filename().string());
      }
    }
  } else {
    require(cfg.evaluate.reference_chains.empty() || cfg.evaluate.reference_chains.size() == points.size(),
            ErrorKind::config, "evaluate.reference_chains must list one chain per conditioning point");
    for (std::size_t k = 0; k < points.size(); ++k) {
      Matrix chain;
      if (!cfg.evaluate.reference_chains.empty()) {
        chain = read_chain(cfg.evaluate.reference_chains[k]);
      } else {
        say("running reference MCMC at x*" + std::to_string(k));
        const auto run = run_chain(cfg, points[k], k);
        chain = run.chain.samples;
        extra["mcmc_acceptance"].push_back(run.chain.acceptance_rate);
      }
      require(chain.cols() == 2 && chain.rows() >= 4, ErrorKind::config, "reference chain must have two columns");
      const Vector h = metrics::resolve_bandwidth(chain, kde);
      const auto grid = metrics::DensityGrid::bounding(chain, cfg.evaluate.grid_points);
      const auto truth = metrics::kde_on_grid(chain, h, grid);
      // One kernel width per point so the MGAN and prior-control MMDs are comparable.
      metrics::MmdOptions mmd_opts;
      mmd_opts.bandwidth = metrics::median_heuristic(chain, chain);
      extra["mmd_bandwidth"].push_back(mmd_opts.bandwidth);
      if (wants(selected, "moments")) {
        const auto mom = metrics::sample_moments(chain);
        for (int j = 0; j < 2; ++j) {
          const std::string s = "_y" + std::to_string(j + 1);
          table.add(at_point("mcmc_mean" + s, k), mom.mean(j), 1.0);
          table.add(at_point("mcmc_variance" + s, k), mom.variance(j), 1.0);
          table.add(at_point("mcmc_skewness" + s, k), mom.skewness(j), 1.0);
          table.add(at_point("mcmc_kurtosis" + s, k), mom.kurtosis(j), 1.0);
        }
      }
      if (wants(selected, "mmd_prior_control")) {
        Matrix prior(static_cast<Eigen::Index>(N), 2);
        Rng pr(mix_seed(seed, 0x40 + k));
        for (Eigen::Index i = 0; i < prior.rows(); ++i) {
          if (id == ProblemId::bod) {
            prior(i, 0) = pr.normal();
            prior(i, 1) = pr.normal();
          } else {
            prior(i, 0) = pr.uniform(3.0, 5.0);
            prior(i, 1) = pr.uniform(12.0, 16.0);
          }
        }
        table.add(at_point("mmd_prior_control", k), metrics::mmd(chain, prior, mmd_opts), 1.0);
      }
      for (std::size_t c = 0; c < ckpts.size(); ++c) {
        Rng ur(mix_seed(seed, 0x30 + k));
        const Matrix y = transport::conditional_sample(ckpts[c].map, points[k], N, ur, &ckpts[c].scaling);
        if (wants(selected, "rel_l2") || wants(selected, "kl")) {
          const auto est = metrics::kde_on_grid(y, h, grid);
          if (wants(selected, "rel_l2"))
            table.add(at_point("rel_l2", k), metrics::relative_l2(est, truth), scale("rel_l2"));
          if (wants(selected, "kl"))
            table.add(at_point("kl", k), metrics::kl_grid(truth, est), scale("kl"));
        }
        if (wants(selected, "mmd"))
          table.add(at_point("mmd", k), metrics::mmd(y, chain, mmd_opts), scale("mmd"));
        if (wants(selected, "moments")) {
          const auto mom = metrics::sample_moments(y);
          for (int j = 0; j < 2; ++j) {
            const std::string s = "_y" + std::to_string(j + 1);
            table.add(at_point("mean" + s, k), mom.mean(j), 1.0);
            table.add(at_point("variance" + s, k), mom.variance(j), 1.0);
            table.add(at_point("skewness" + s, k), mom.skewness(j), 1.0);
            table.add(at_point("kurtosis" + s, k), mom.kurtosis(j), 1.0);
          }
        }
      }
      say("posterior metrics at x*" + std::to_string(k));
    }
  }

  // Sample dumps from the newest checkpoint.
  json dumps = json::array();
  if (cfg.evaluate.dump_samples) {
    const auto& ck = ckpts.back();
    const auto hash = fnv1a_file(files.back().string());
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
    for (std::size_t k = 0; k < points.size(); ++k) {
      Rng ur(mix_seed(seed, 0x30 + k));
      Matrix y = transport::conditional_sample(ck.map, points[k], N, ur, &ck.scaling);
      if (id == ProblemId::banana && cfg.dataset.banana_reverse)
        y.col(0).swap(y.col(1));
      const fs::path p = dir / ("samples_x" + std::to_string(k) + ".csv");
      write_text(p, matrix_csv(y, y_header(m),
                               "x*=" + vector_text(points[k]) + " checkpoint=" + files.back().filename().string() +
                                 " fnv1a=" + hex));
      dumps.push_back(p.string());
    }
  }

  const auto rows = table.rows();
  std::string csv = "metric,value,std,scale_factor\n";
  for (const auto& r : rows)
    csv += r.metric + "," + format_double(r.value) + "," + format_double(r.std) + "," +
           format_double(r.scale_factor) + "\n";
  write_text(dir / "metrics.csv", csv);
  json ck_list = json::array();
  for (const auto& f : files)
    ck_list.push_back(f.string());
  json pts = json::array();
  for (const auto& p : points)
    pts.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  extra["checkpoints"] = ck_list;
  extra["conditioning_points"] = pts;
  extra["sample_dumps"] = dumps;
  extra["bandwidth"] = kde.to_string();
  write_manifest(dir, "evaluate", cfg, extra);
  return rows;
}

// ---------------------------------------------------------------------------
// mcmc

std::vector<std::string> cmd_mcmc(const ExperimentConfig& cfg, const ProgressFn& progress)
{
  cfg.validate();
  const auto id = cfg.problem_id();
  require(id == ProblemId::bod || id == ProblemId::darcy, ErrorKind::config,
          "no MCMC posterior for problem '" + cfg.problem + "'");
  const auto points = conditioning_points(cfg);
  const fs::path root = cfg.output_dir;
  DirLock lock(root);
  const fs::path dir = root / "mcmc";
  ensure_dir(dir);
  std::vector<std::string> paths;
  json chains = json::array();
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (progress)
      progress("MCMC at x*" + std::to_string(k));
    const auto run = run_chain(cfg, points[k], k);
    const fs::path p = dir / ("chain_" + std::to_string(k) + ".csv");
    write_text(p, matrix_csv(run.chain.samples, y_header(2),
                             "x*=" + vector_text(points[k]) +
                               " acceptance=" + format_double(run.chain.acceptance_rate)));
    paths.push_back(p.string());
    const Vector& ps = run.chain.proposal_std;
    chains.push_back({{"path", p.string()},
                      {"x_star", std::vector<double>(points[k].data(), points[k].data() + points[k].size())},
                      {"seed", mix_seed(cfg.mcmc.seed, 0x3c3c + k)},
                      {"acceptance_rate", run.chain.acceptance_rate},
                      {"proposal_std", std::vector<double>(ps.data(), ps.data() + ps.size())},
                      {"tuning_rounds", run.tuning_rounds},
                      {"length", run.chain.samples.rows()},
                      {"burn_in", cfg.mcmc.burn_in},
                      {"thin", cfg.mcmc.thin},
                      {"evaluations", run.chain.evaluations}});
  }
  write_manifest(dir, "mcmc", cfg, {{"chains", chains}});
  return paths;
}

// ---------------------------------------------------------------------------
// kr-oracle

std::string cmd_kr_oracle(const ExperimentConfig& cfg, const std::string& checkpoint_path)
{
  cfg.validate();
  const auto id = cfg.problem_id();
  require(problems::is_synthetic(id), ErrorKind::config, "KR oracle exists for the synthetic problems only");
  const int number = id == ProblemId::synthetic4 ? 4 : id == ProblemId::synthetic5 ? 5 : 6;
  std::vector<double> xs;
  for (const auto& x : cfg.evaluate.x_star)
    xs.push_back(x[0]);
  if (xs.empty())
    for (int i = 0; i <= 60; ++i)
      xs.push_back(-3.0 + 0.1 * i);
  std::vector<double> us;
  for (int i = 0; i <= 60; ++i)
    us.push_back(-3.0 + 0.1 * i);

  std::optional<transport::MapCheckpoint> ck;
  if (!checkpoint_path.empty()) {
    ck = transport::load_checkpoint(checkpoint_path);
    require(transport::input_dim(ck->map) == 1 && transport::output_dim(ck->map) == 1, ErrorKind::config,
            "checkpoint does not match a synthetic problem");
  }
  const fs::path root = cfg.output_dir;
  DirLock lock(root);
  const fs::path dir = root / "kr";
  ensure_dir(dir);

  Matrix out(static_cast<Eigen::Index>(xs.size() * us.size()), ck ? 5 : 4);
  Eigen::Index r = 0;
  for (double x : xs)
    for (double u : us) {
      const auto kr = oracles::kr_map(number, x, u);
      out(r, 0) = x;
      out(r, 1) = u;
      out(r, 2) = kr.y;
      out(r, 3) = kr.degenerate ? 1.0 : 0.0;
      ++r;
    }
  std::vector<std::string> header{"x", "u", "y_true", "degenerate"};
  if (ck) {
    Matrix w(out.rows(), 2);
    w.col(0) = out.col(0);
    w.col(1) = out.col(1);
    if (!ck->scaling.is_identity())
      w.col(0) = ck->scaling.encode_x(Matrix(out.col(0))).col(0);
    Matrix y = transport::map_output(ck->map, w);
    if (!ck->scaling.is_identity())
      y = ck->scaling.decode_y(y);
    out.col(4) = y.col(0);
    header.push_back("y_map");
  }
  const fs::path p = dir / "kr_map.csv";
  write_text(p, matrix_csv(out, header, "problem=" + cfg.problem));
  write_manifest(dir, "kr-oracle", cfg, {{"grid", p.string()}, {"checkpoint", checkpoint_path}});
  return p.string();
}

} // namespace mgan::experiment

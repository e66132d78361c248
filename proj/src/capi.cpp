#include "mgan/mgan.h"

#include "mgan/dataset.hpp"
#include "mgan/error.hpp"
#include "mgan/experiment.hpp"
#include "mgan/transport.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

struct mgan_config
{
  mgan::experiment::ExperimentConfig cfg;
};

struct mgan_dataset
{
  mgan::JointDataset data;
};

struct mgan_map
{
  mgan::transport::MapCheckpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

mgan_status status_of(mgan::ErrorKind k)
{
  switch (k) {
  case mgan::ErrorKind::config: return MGAN_ERR_CONFIG;
  case mgan::ErrorKind::shape: return MGAN_ERR_SHAPE;
  case mgan::ErrorKind::contract: return MGAN_ERR_CONTRACT;
  case mgan::ErrorKind::numerical: return MGAN_ERR_NUMERICAL;
  case mgan::ErrorKind::domain: return MGAN_ERR_DOMAIN;
  case mgan::ErrorKind::io: return MGAN_ERR_IO;
  }
  return MGAN_ERR_INTERNAL;
}

template <class F>
mgan_status guarded(F&& body)
{
  try {
    g_last_error.clear();
    body();
    return MGAN_OK;
  } catch (const mgan::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MGAN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MGAN_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MGAN_ERR_INTERNAL;
  }
}

mgan_status bad_argument(const char* what)
{
  g_last_error = what;
  return MGAN_ERR_ARGUMENT;
}

char* dup_string(const std::string& s)
{
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p)
    throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

mgan::experiment::ProgressFn wrap(mgan_progress_fn fn, void* user)
{
  if (!fn)
    return {};
  return [fn, user](const std::string& msg) { fn(msg.c_str(), user); };
}

} // namespace

extern "C" {

const char* mgan_version(void) { return "0.1.0"; }

const char* mgan_last_error(void) { return g_last_error.c_str(); }

const char* mgan_status_name(mgan_status status)
{
  switch (status) {
  case MGAN_OK: return "ok";
  case MGAN_ERR_CONFIG: return "configuration error";
  case MGAN_ERR_SHAPE: return "shape error";
  case MGAN_ERR_CONTRACT: return "contract error";
  case MGAN_ERR_NUMERICAL: return "numerical error";
  case MGAN_ERR_DOMAIN: return "domain error";
  case MGAN_ERR_IO: return "I/O error";
  case MGAN_ERR_ARGUMENT: return "invalid argument";
  case MGAN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int mgan_exit_code(mgan_status status)
{
  switch (status) {
  case MGAN_OK: return 0;
  case MGAN_ERR_CONFIG:
  case MGAN_ERR_SHAPE:
  case MGAN_ERR_CONTRACT:
  case MGAN_ERR_DOMAIN:
  case MGAN_ERR_ARGUMENT: return 2;
  case MGAN_ERR_NUMERICAL: return 3;
  case MGAN_ERR_IO: return 4;
  default: return 1;
  }
}

void mgan_string_free(char* s) { std::free(s); }

mgan_status mgan_config_parse(const char* json, mgan_config** out)
{
  if (!json || !out)
    return bad_argument("mgan_config_parse: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mgan_config{mgan::experiment::parse_config(json)}; });
}

mgan_status mgan_config_load(const char* path, mgan_config** out)
{
  if (!path || !out)
    return bad_argument("mgan_config_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mgan_config{mgan::experiment::load_config(path)}; });
}

mgan_status mgan_config_serialize(const mgan_config* cfg, char** out_json)
{
  if (!cfg || !out_json)
    return bad_argument("mgan_config_serialize: null argument");
  return guarded([&] { *out_json = dup_string(mgan::experiment::serialize_config(cfg->cfg)); });
}

mgan_status mgan_config_set_seed(mgan_config* cfg, uint64_t seed)
{
  if (!cfg)
    return bad_argument("mgan_config_set_seed: null config");
  return guarded([&] { cfg->cfg.set_seed(seed); });
}

mgan_status mgan_config_set_output_dir(mgan_config* cfg, const char* dir)
{
  if (!cfg || !dir)
    return bad_argument("mgan_config_set_output_dir: null argument");
  return guarded([&] {
    mgan::require(*dir != '\0', mgan::ErrorKind::config, "output directory must not be empty");
    cfg->cfg.output_dir = dir;
  });
}

void mgan_config_free(mgan_config* cfg) { delete cfg; }

mgan_status mgan_cmd_generate(const mgan_config* cfg, char** out_dataset_path)
{
  if (!cfg)
    return bad_argument("mgan_cmd_generate: null config");
  return guarded([&] {
    const auto path = mgan::experiment::cmd_generate(cfg->cfg);
    if (out_dataset_path)
      *out_dataset_path = dup_string(path);
  });
}

mgan_status mgan_cmd_train(const mgan_config* cfg, const char* dataset_path, mgan_progress_fn progress, void* user,
                           char** out_checkpoint_path)
{
  if (!cfg || !dataset_path)
    return bad_argument("mgan_cmd_train: null argument");
  return guarded([&] {
    const auto path = mgan::experiment::cmd_train(cfg->cfg, dataset_path, wrap(progress, user));
    if (out_checkpoint_path)
      *out_checkpoint_path = dup_string(path);
  });
}

mgan_status mgan_cmd_evaluate(const mgan_config* cfg, const char* checkpoint_path, mgan_progress_fn progress,
                              void* user)
{
  if (!cfg || !checkpoint_path)
    return bad_argument("mgan_cmd_evaluate: null argument");
  return guarded([&] { mgan::experiment::cmd_evaluate(cfg->cfg, checkpoint_path, wrap(progress, user)); });
}

mgan_status mgan_cmd_mcmc(const mgan_config* cfg, mgan_progress_fn progress, void* user)
{
  if (!cfg)
    return bad_argument("mgan_cmd_mcmc: null config");
  return guarded([&] { mgan::experiment::cmd_mcmc(cfg->cfg, wrap(progress, user)); });
}

mgan_status mgan_cmd_kr_oracle(const mgan_config* cfg, const char* checkpoint_path, char** out_path)
{
  if (!cfg)
    return bad_argument("mgan_cmd_kr_oracle: null config");
  return guarded([&] {
    const auto path = mgan::experiment::cmd_kr_oracle(cfg->cfg, checkpoint_path ? checkpoint_path : "");
    if (out_path)
      *out_path = dup_string(path);
  });
}

mgan_status mgan_dataset_load(const char* path, int n, mgan_dataset** out)
{
  if (!path || !out)
    return bad_argument("mgan_dataset_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mgan_dataset{mgan::load_dataset(path, n)}; });
}

mgan_status mgan_dataset_shape(const mgan_dataset* data, size_t* rows, int* n, int* m)
{
  if (!data)
    return bad_argument("mgan_dataset_shape: null dataset");
  if (rows)
    *rows = data->data.size();
  if (n)
    *n = data->data.n();
  if (m)
    *m = data->data.m();
  return MGAN_OK;
}

mgan_status mgan_dataset_copy(const mgan_dataset* data, double* out, size_t capacity)
{
  if (!data || !out)
    return bad_argument("mgan_dataset_copy: null argument");
  return guarded([&] {
    const mgan::Matrix z = data->data.joint();
    mgan::require(capacity >= static_cast<size_t>(z.size()), mgan::ErrorKind::shape,
                  "output buffer holds " + std::to_string(capacity) + " doubles, need " + std::to_string(z.size()));
    std::memcpy(out, z.data(), sizeof(double) * static_cast<size_t>(z.size()));
  });
}

void mgan_dataset_free(mgan_dataset* data) { delete data; }

mgan_status mgan_map_load(const char* path, mgan_map** out)
{
  if (!path || !out)
    return bad_argument("mgan_map_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mgan_map{mgan::transport::load_checkpoint(path)}; });
}

mgan_status mgan_map_shape(const mgan_map* map, int* n, int* m)
{
  if (!map)
    return bad_argument("mgan_map_shape: null map");
  if (n)
    *n = mgan::transport::input_dim(map->ckpt.map);
  if (m)
    *m = mgan::transport::output_dim(map->ckpt.map);
  return MGAN_OK;
}

mgan_status mgan_map_sample(const mgan_map* map, const double* x_star, size_t count, uint64_t seed, double* out)
{
  if (!map || !out)
    return bad_argument("mgan_map_sample: null argument");
  const int n = mgan::transport::input_dim(map->ckpt.map);
  if (n > 0 && !x_star)
    return bad_argument("mgan_map_sample: x_star is null");
  return guarded([&] {
    mgan::Vector x = n > 0 ? mgan::Vector(Eigen::Map<const mgan::Vector>(x_star, n)) : mgan::Vector(0);
    mgan::Rng rng(seed);
    const mgan::Matrix y = mgan::transport::conditional_sample(map->ckpt.map, x, count, rng, &map->ckpt.scaling);
    std::memcpy(out, y.data(), sizeof(double) * static_cast<size_t>(y.size()));
  });
}

mgan_status mgan_map_apply(const mgan_map* map, const double* w, size_t rows, double* out)
{
  if (!map || !w || !out)
    return bad_argument("mgan_map_apply: null argument");
  return guarded([&] {
    const int d = mgan::transport::input_dim(map->ckpt.map) + mgan::transport::output_dim(map->ckpt.map);
    const mgan::Matrix in = Eigen::Map<const mgan::Matrix>(w, static_cast<Eigen::Index>(rows), d);
    const mgan::Matrix z = mgan::transport::apply_map(map->ckpt.map, in);
    std::memcpy(out, z.data(), sizeof(double) * static_cast<size_t>(z.size()));
  });
}

void mgan_map_free(mgan_map* map) { delete map; }

} // extern "C"

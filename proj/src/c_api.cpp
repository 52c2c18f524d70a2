#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "simprov/errors.hpp"
#include "simprov/harness.hpp"
#include "simprov/simprov.h"

struct simprov_config {
  simprov::harness::ExperimentConfig cfg;
};

struct simprov_model {
  simprov::nn::MlpModel model;
  std::vector<std::uint64_t> seeds;
};

struct simprov_dataset {
  simprov::data::DomainDataset ds;
};

namespace {

using namespace simprov;

thread_local std::string g_last_error;

simprov_status fail(simprov_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

simprov_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::Input: return SIMPROV_ERR_INPUT;
    case ErrorKind::Shape: return SIMPROV_ERR_SHAPE;
    case ErrorKind::Numeric: return SIMPROV_ERR_NUMERIC;
    case ErrorKind::Parse: return SIMPROV_ERR_PARSE;
    case ErrorKind::Schema: return SIMPROV_ERR_SCHEMA;
    case ErrorKind::Config: return SIMPROV_ERR_CONFIG;
    case ErrorKind::Io: return SIMPROV_ERR_IO;
  }
  return SIMPROV_ERR_INTERNAL;
}

template <class F>
simprov_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return SIMPROV_OK;
  } catch (const Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SIMPROV_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SIMPROV_ERR_INTERNAL, e.what());
  }
}

std::vector<data::DomainDataset> load_train_dir(const std::filesystem::path& dir) {
  std::vector<data::DomainDataset> out;
  for (std::size_t e = 0;; ++e) {
    const auto p = dir / ("train_" + std::to_string(e) + ".csv");
    if (!std::filesystem::exists(p)) break;
    out.push_back(data::load_csv(p));
  }
  if (out.empty()) throw IoError("no train_<e>.csv files in '" + dir.string() + "'");
  return out;
}

}  // namespace

#define REQUIRE_ARG(cond, what) \
  if (!(cond)) return fail(SIMPROV_ERR_ARGUMENT, what)

extern "C" {

const char* simprov_version(void) { return "0.1.0"; }

const char* simprov_last_error(void) { return g_last_error.c_str(); }

const char* simprov_status_name(simprov_status s) {
  switch (s) {
    case SIMPROV_OK: return "ok";
    case SIMPROV_ERR_ARGUMENT: return "argument error";
    case SIMPROV_ERR_INPUT: return "input error";
    case SIMPROV_ERR_SHAPE: return "shape error";
    case SIMPROV_ERR_NUMERIC: return "numeric error";
    case SIMPROV_ERR_PARSE: return "parse error";
    case SIMPROV_ERR_SCHEMA: return "schema error";
    case SIMPROV_ERR_CONFIG: return "config error";
    case SIMPROV_ERR_IO: return "io error";
    case SIMPROV_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

simprov_status simprov_config_default(simprov_config** out) {
  REQUIRE_ARG(out, "out is null");
  *out = nullptr;
  return guarded([&] { *out = new simprov_config{harness::default_experiment_config()}; });
}

simprov_status simprov_config_load(const char* path, simprov_config** out) {
  REQUIRE_ARG(path && out, "path or out is null");
  *out = nullptr;
  return guarded([&] { *out = new simprov_config{harness::load_config(path)}; });
}

simprov_status simprov_config_parse(const char* json_text, simprov_config** out) {
  REQUIRE_ARG(json_text && out, "json_text or out is null");
  *out = nullptr;
  return guarded([&] { *out = new simprov_config{harness::parse_config(json_text)}; });
}

simprov_status simprov_config_set_seed(simprov_config* cfg, uint64_t master_seed) {
  REQUIRE_ARG(cfg, "config is null");
  cfg->cfg.master_seed = master_seed;
  return SIMPROV_OK;
}

simprov_status simprov_config_set_output_dir(simprov_config* cfg, const char* dir) {
  REQUIRE_ARG(cfg && dir, "config or dir is null");
  cfg->cfg.output_dir = dir;
  return SIMPROV_OK;
}

simprov_status simprov_config_set_trials(simprov_config* cfg, size_t n_trials) {
  REQUIRE_ARG(cfg, "config is null");
  REQUIRE_ARG(n_trials >= 1, "n_trials must be >= 1");
  cfg->cfg.n_trials = n_trials;
  return SIMPROV_OK;
}

simprov_status simprov_config_hash(const simprov_config* cfg, char* buf, size_t buf_len) {
  REQUIRE_ARG(cfg && buf, "config or buf is null");
  REQUIRE_ARG(buf_len >= 17, "buffer needs at least 17 bytes");
  return guarded([&] {
    const std::string h = harness::config_hash(cfg->cfg);
    std::memcpy(buf, h.c_str(), h.size() + 1);
  });
}

simprov_status simprov_config_to_json(const simprov_config* cfg, char* buf, size_t buf_len, size_t* needed) {
  REQUIRE_ARG(cfg, "config is null");
  return guarded([&] {
    const std::string text = harness::config_to_json(cfg->cfg);
    if (needed) *needed = text.size() + 1;
    if (!buf) return;
    if (buf_len < text.size() + 1) throw InputError("buffer too small for config JSON");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

void simprov_config_free(simprov_config* cfg) { delete cfg; }

simprov_status simprov_generate_data(const simprov_config* cfg, const char* dir) {
  REQUIRE_ARG(cfg && dir, "config or dir is null");
  return guarded([&] {
    const std::filesystem::path out(dir);
    std::filesystem::create_directories(out);
    const auto bench = harness::trial_benchmark(cfg->cfg, harness::trial_seed(cfg->cfg, 0));
    for (std::size_t e = 0; e < bench.train.size(); ++e) {
      data::save_csv(data::generate_domain(bench.train[e]), out / ("train_" + std::to_string(e) + ".csv"));
    }
    data::save_csv(data::generate_domain(bench.target), out / "target.csv");
    data::save_csv(data::generate_domain(bench.target_eval), out / "target_eval.csv");
  });
}

simprov_status simprov_dataset_load(const char* csv_path, simprov_dataset** out) {
  REQUIRE_ARG(csv_path && out, "path or out is null");
  *out = nullptr;
  return guarded([&] { *out = new simprov_dataset{data::load_csv(csv_path)}; });
}

size_t simprov_dataset_rows(const simprov_dataset* ds) { return ds ? ds->ds.size() : 0; }
size_t simprov_dataset_cols(const simprov_dataset* ds) { return ds ? ds->ds.feature_dim() : 0; }
void simprov_dataset_free(simprov_dataset* ds) { delete ds; }

simprov_status simprov_train_base(const simprov_config* cfg, const char* data_dir, simprov_model** out) {
  REQUIRE_ARG(cfg && data_dir && out, "config, data_dir or out is null");
  *out = nullptr;
  return guarded([&] {
    const auto train = load_train_dir(data_dir);
    const auto tc = harness::trial_base_config(cfg->cfg, harness::trial_seed(cfg->cfg, 0));
    *out = new simprov_model{harness::train_base(cfg->cfg.base_method, train, tc), {tc.seed}};
  });
}

simprov_status simprov_adapt(const simprov_config* cfg, const simprov_model* base, const char* data_dir,
                             const char* history_path, simprov_model** out) {
  REQUIRE_ARG(cfg && base && data_dir && out, "config, base, data_dir or out is null");
  *out = nullptr;
  return guarded([&] {
    const std::filesystem::path dir(data_dir);
    const auto train = load_train_dir(dir);
    const Matrix x_target = data::load_features_csv(dir / "target.csv");
    const auto ac = harness::trial_adapt_config(cfg->cfg, harness::trial_seed(cfg->cfg, 0));
    std::ofstream hist;
    if (history_path) {
      hist.open(history_path, std::ios::binary | std::ios::trunc);
      if (!hist) throw IoError(std::string("cannot write '") + history_path + "'");
    }
    auto observer = [&](const adapt::IterationRecord& r, const nn::MlpModel&) {
      if (!hist.is_open()) return;
      nlohmann::ordered_json j{{"t", r.t},
                               {"d_rand", r.d_rand},
                               {"train_acc", r.train_acc},
                               {"n_selected", r.n_selected},
                               {"mean_kappa", r.mean_kappa},
                               {"accepted", r.accepted}};
      hist << j.dump() << '\n';
    };
    auto res = adapt::simprov_adapt(base->model, train, x_target, ac, observer);
    auto seeds = base->seeds;
    seeds.push_back(ac.seed);
    *out = new simprov_model{std::move(res.final_model), std::move(seeds)};
  });
}

size_t simprov_model_input_dim(const simprov_model* m) { return m ? m->model.input_dim() : 0; }
size_t simprov_model_n_classes(const simprov_model* m) { return m ? m->model.n_classes : 0; }

simprov_status simprov_model_forward(const simprov_model* m, const double* x, size_t rows, size_t cols,
                                     double* logits, size_t logits_len) {
  REQUIRE_ARG(m && x && logits, "model, x or logits is null");
  REQUIRE_ARG(logits_len >= rows * m->model.n_classes, "logits buffer too small");
  return guarded([&] {
    Matrix in(rows, cols, std::vector<double>(x, x + rows * cols));
    const Matrix out = nn::forward(m->model, in);
    std::memcpy(logits, out.data().data(), out.size() * sizeof(double));
  });
}

simprov_status simprov_model_accuracy(const simprov_model* m, const simprov_dataset* ds, double* acc) {
  REQUIRE_ARG(m && ds && acc, "model, dataset or acc is null");
  return guarded([&] { *acc = nn::accuracy(m->model, ds->ds.features(), ds->ds.labels()); });
}

simprov_status simprov_model_save(const simprov_model* m, const simprov_config* cfg, const char* path) {
  REQUIRE_ARG(m && path, "model or path is null");
  return guarded([&] {
    harness::CheckpointMeta meta;
    if (cfg) meta.config_hash = harness::config_hash(cfg->cfg);
    meta.seeds = m->seeds;
    harness::save_checkpoint(m->model, path, meta);
  });
}

simprov_status simprov_model_load(const char* path, simprov_model** out) {
  REQUIRE_ARG(path && out, "path or out is null");
  *out = nullptr;
  return guarded([&] {
    harness::CheckpointMeta meta;
    auto model = harness::load_checkpoint(path, &meta);
    *out = new simprov_model{std::move(model), std::move(meta.seeds)};
  });
}

void simprov_model_free(simprov_model* m) { delete m; }

simprov_status simprov_run_experiment(const simprov_config* cfg, size_t* failed_trials) {
  REQUIRE_ARG(cfg, "config is null");
  return guarded([&] {
    const auto s = harness::run_experiment(cfg->cfg);
    if (failed_trials) *failed_trials = s.failed_trials;
  });
}

simprov_status simprov_emit_plot_data(const char* metrics_path, const char* kind, const char* out_csv) {
  REQUIRE_ARG(metrics_path && kind && out_csv, "metrics_path, kind or out_csv is null");
  return guarded([&] {
    harness::emit_plot_data(metrics_path, harness::plot_kind_from_string(kind), out_csv);
  });
}

}  // extern "C"

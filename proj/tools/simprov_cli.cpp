// Command-line front end. Talks to the library only through the C interface.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "simprov/simprov.h"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct ConfigDeleter {
  void operator()(simprov_config* c) const { simprov_config_free(c); }
};
struct ModelDeleter {
  void operator()(simprov_model* m) const { simprov_model_free(m); }
};
struct DatasetDeleter {
  void operator()(simprov_dataset* d) const { simprov_dataset_free(d); }
};
using ConfigPtr = std::unique_ptr<simprov_config, ConfigDeleter>;
using ModelPtr = std::unique_ptr<simprov_model, ModelDeleter>;
using DatasetPtr = std::unique_ptr<simprov_dataset, DatasetDeleter>;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

struct CallFailed {
  int code;
};

int code_for(simprov_status s) {
  return (s == SIMPROV_ERR_ARGUMENT || s == SIMPROV_ERR_CONFIG) ? kUsage : kFailure;
}

void check(simprov_status s, const char* what) {
  if (s == SIMPROV_OK) return;
  std::fprintf(stderr, "simprov: %s failed (%s): %s\n", what, simprov_status_name(s), simprov_last_error());
  throw CallFailed{code_for(s)};
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON experiment config (defaults when omitted)");
  sub->add_option("--seed", c.seed, "Master seed override");
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
}

ConfigPtr load(const Common& c) {
  simprov_config* raw = nullptr;
  const simprov_status s = c.config.empty() ? simprov_config_default(&raw) : simprov_config_load(c.config.c_str(), &raw);
  if (s != SIMPROV_OK) {
    // An unreadable or invalid config is the caller's mistake, whatever the cause.
    std::fprintf(stderr, "simprov: config (%s): %s\n", simprov_status_name(s), simprov_last_error());
    throw CallFailed{kUsage};
  }
  ConfigPtr cfg(raw);
  if (c.seed) check(simprov_config_set_seed(cfg.get(), *c.seed), "seed override");
  check(simprov_config_set_output_dir(cfg.get(), c.out.c_str()), "output dir");
  return cfg;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) {
    std::fprintf(stderr, "simprov: cannot create '%s': %s\n", p.string().c_str(), ec.message().c_str());
    throw CallFailed{kFailure};
  }
}

// Uses --data when given, otherwise generates the datasets under <out>/data.
std::string data_dir(const simprov_config* cfg, const Common& c, const std::string& data) {
  if (!data.empty()) return data;
  const std::string dir = (fs::path(c.out) / "data").string();
  check(simprov_generate_data(cfg, dir.c_str()), "data generation");
  return dir;
}

ModelPtr load_model(const std::string& path) {
  simprov_model* raw = nullptr;
  check(simprov_model_load(path.c_str(), &raw), "checkpoint load");
  return ModelPtr(raw);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simprov: iterative self-distillation with MC-dropout pseudo-labels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", simprov_version());

  Common gen_c, base_c, adapt_c, eval_c, run_c, plot_c;
  std::string base_data, adapt_data, adapt_model, eval_model, eval_data, plot_metrics, plot_kind = "all";
  std::optional<std::size_t> run_trials;

  auto* gen = app.add_subcommand("gen-data", "Write train/target/target_eval CSVs for the master seed");
  add_common(gen, gen_c);

  auto* base = app.add_subcommand("train-base", "Train the configured base model and save base.ckpt");
  add_common(base, base_c);
  base->add_option("--data", base_data, "Directory holding train_<e>.csv");

  auto* ad = app.add_subcommand("adapt", "Adapt a base checkpoint to the target features");
  add_common(ad, adapt_c);
  ad->add_option("--model", adapt_model, "Base checkpoint")->required();
  ad->add_option("--data", adapt_data, "Directory holding train_<e>.csv and target.csv");

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a labelled CSV");
  add_common(ev, eval_c);
  ev->add_option("--model", eval_model, "Checkpoint")->required();
  ev->add_option("--data", eval_data, "Labelled dataset CSV")->required();

  auto* run = app.add_subcommand("run-experiment", "Run all trials and write metrics.jsonl and summary.json");
  add_common(run, run_c);
  run->add_option("--trials", run_trials, "Override n_trials");

  auto* plots = app.add_subcommand("emit-plots", "Turn a metrics stream into plot CSVs");
  add_common(plots, plot_c);
  plots->add_option("--metrics", plot_metrics, "metrics.jsonl (default <out>/metrics.jsonl)");
  plots->add_option("--kind", plot_kind, "deepness, drand_scatter or all")
      ->check(CLI::IsMember({"deepness", "drand_scatter", "all"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      auto cfg = load(gen_c);
      check(simprov_generate_data(cfg.get(), gen_c.out.c_str()), "data generation");
      std::printf("wrote datasets to %s\n", gen_c.out.c_str());
    } else if (*base) {
      auto cfg = load(base_c);
      ensure_dir(base_c.out);
      const std::string dir = data_dir(cfg.get(), base_c, base_data);
      simprov_model* raw = nullptr;
      check(simprov_train_base(cfg.get(), dir.c_str(), &raw), "base training");
      ModelPtr model(raw);
      const std::string path = (fs::path(base_c.out) / "base.ckpt").string();
      check(simprov_model_save(model.get(), cfg.get(), path.c_str()), "checkpoint save");
      std::printf("wrote %s\n", path.c_str());
    } else if (*ad) {
      auto cfg = load(adapt_c);
      ensure_dir(adapt_c.out);
      const std::string dir = data_dir(cfg.get(), adapt_c, adapt_data);
      auto base_model = load_model(adapt_model);
      const std::string hist = (fs::path(adapt_c.out) / "history.jsonl").string();
      simprov_model* raw = nullptr;
      check(simprov_adapt(cfg.get(), base_model.get(), dir.c_str(), hist.c_str(), &raw), "adaptation");
      ModelPtr model(raw);
      const std::string path = (fs::path(adapt_c.out) / "adapted.ckpt").string();
      check(simprov_model_save(model.get(), cfg.get(), path.c_str()), "checkpoint save");
      std::printf("wrote %s and %s\n", path.c_str(), hist.c_str());
    } else if (*ev) {
      auto cfg = load(eval_c);
      ensure_dir(eval_c.out);
      auto model = load_model(eval_model);
      simprov_dataset* raw = nullptr;
      check(simprov_dataset_load(eval_data.c_str(), &raw), "dataset load");
      DatasetPtr ds(raw);
      double acc = 0.0;
      check(simprov_model_accuracy(model.get(), ds.get(), &acc), "evaluation");
      const fs::path path = fs::path(eval_c.out) / "evaluation.json";
      std::ofstream f(path);
      f.precision(17);
      f << "{\"model\": \"" << eval_model << "\", \"data\": \"" << eval_data << "\", \"rows\": "
        << simprov_dataset_rows(ds.get()) << ", \"accuracy\": " << acc << "}\n";
      if (!f) {
        std::fprintf(stderr, "simprov: cannot write %s\n", path.string().c_str());
        return kFailure;
      }
      std::printf("accuracy %.6f on %zu rows\n", acc, simprov_dataset_rows(ds.get()));
    } else if (*run) {
      auto cfg = load(run_c);
      if (run_trials) check(simprov_config_set_trials(cfg.get(), *run_trials), "trial override");
      std::size_t failed = 0;
      check(simprov_run_experiment(cfg.get(), &failed), "experiment");
      std::printf("wrote %s/metrics.jsonl and %s/summary.json\n", run_c.out.c_str(), run_c.out.c_str());
      if (failed > 0) {
        std::fprintf(stderr, "simprov: %zu trial(s) failed; see summary.json\n", failed);
        return kFailure;
      }
    } else if (*plots) {
      auto cfg = load(plot_c);
      ensure_dir(plot_c.out);
      const std::string metrics =
          plot_metrics.empty() ? (fs::path(plot_c.out) / "metrics.jsonl").string() : plot_metrics;
      for (const char* kind : {"deepness", "drand_scatter"}) {
        if (plot_kind != "all" && plot_kind != kind) continue;
        const std::string path = (fs::path(plot_c.out) / (std::string(kind) + ".csv")).string();
        check(simprov_emit_plot_data(metrics.c_str(), kind, path.c_str()), "plot data");
        std::printf("wrote %s\n", path.c_str());
      }
    }
  } catch (const CallFailed& f) {
    return f.code;
  }
  return kOk;
}

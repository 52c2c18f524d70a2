#pragma once

// Experiment runner and persistence: JSON config, JSON-lines metrics, summary
// documents, text checkpoints and plot-data CSVs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simprov/adaptation.hpp"
#include "simprov/base_trainers.hpp"
#include "simprov/domains.hpp"
#include "simprov/neural.hpp"

namespace simprov::harness {

enum class BaseMethod { Erm, Irm, GroupDro };

std::string_view to_string(BaseMethod m) noexcept;
// Throws ConfigError on an unknown name.
BaseMethod base_method_from_string(std::string_view name);

struct ExperimentConfig {
  // Domain seeds are not part of the config; each trial derives them from its trial seed.
  std::vector<data::DomainSpec> train_domains;
  data::DomainSpec target;
  data::DomainSpec target_eval;
  BaseMethod base_method = BaseMethod::Irm;
  std::vector<BaseMethod> baselines;  // extra base models scored alongside, never adapted
  train::TrainConfig base;
  adapt::AdaptConfig adapt;
  std::size_t n_trials = 5;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = "out";
  bool record_timing = false;  // wall_ms goes to timing.jsonl, never into metrics.jsonl

  void validate() const;
};

ExperimentConfig default_experiment_config();

// Nested JSON document; every section and key is optional, unknown keys are errors.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);
// FNV-1a over the canonical JSON rendering, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial) noexcept;
data::BenchmarkSpec trial_benchmark(const ExperimentConfig& cfg, std::uint64_t seed);
train::TrainConfig trial_base_config(const ExperimentConfig& cfg, std::uint64_t seed);
adapt::AdaptConfig trial_adapt_config(const ExperimentConfig& cfg, std::uint64_t seed);

nn::MlpModel train_base(BaseMethod method, const std::vector<data::DomainDataset>& train,
                        const train::TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRecord {
  std::size_t trial = 0;
  std::string method;  // base method name
  std::string phase;   // "base" or "adapt"
  std::size_t t = 0;
  double d_rand = 0.0;
  double train_acc = 0.0;
  double target_acc = 0.0;  // scored on target_eval only
  std::size_t n_selected = 0;
  double mean_kappa = 0.0;
  bool accepted = false;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

std::string to_json_line(const MetricsRecord& r);
MetricsRecord parse_metrics_line(std::string_view line);
// Blank lines are skipped; a malformed line raises ParseError with its line number.
std::vector<MetricsRecord> load_metrics(const std::filesystem::path& path);

enum class PlotKind { Deepness, DrandScatter };
// Throws InputError for an unknown kind.
PlotKind plot_kind_from_string(std::string_view kind);

// deepness: D,mean_target_acc,std,n_trials   (teacher accuracy after D iterations)
// drand_scatter: trial,t,d_rand,target_acc   (one row per adaptation iteration)
std::string plot_csv(const std::vector<MetricsRecord>& records, PlotKind kind);
void emit_plot_data(const std::filesystem::path& metrics, PlotKind kind, const std::filesystem::path& out_csv);

// Teacher target accuracy after each iteration count D = 0..max_t for one trial.
std::vector<double> deepness_series(const std::vector<MetricsRecord>& trial_records);

// ---------------------------------------------------------------------------
// Summary

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single trial
  std::size_t n = 0;
};

Stat mean_std(const std::vector<double>& values);

struct TrialSummary {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double base_target_acc = 0.0;
  double final_target_acc = 0.0;
  double base_d_rand = 0.0;
  double final_d_rand = 0.0;
  std::size_t iterations = 0;
  std::vector<std::pair<std::string, double>> baselines;  // method -> target accuracy
};

struct Summary {
  std::string config_hash;
  std::string base_method;
  std::size_t n_trials = 0;
  bool single_trial = false;
  std::size_t failed_trials = 0;
  Stat base;
  Stat simprov;
  std::vector<std::pair<std::string, Stat>> baselines;
  // Trial whose adapted model has the largest d_rand, reported separately from the per-trial statistics.
  std::optional<TrialSummary> best_by_d_rand;
  std::vector<TrialSummary> trials;
};

std::string summary_to_json(const Summary& s);

// Runs every trial, writing metrics.jsonl and summary.json (plus timing.jsonl when
// enabled) under cfg.output_dir. A failing trial is recorded and the rest continue.
Summary run_experiment(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointMeta {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;  // seeds consumed to produce the model
  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

inline constexpr int kCheckpointVersion = 1;

std::string checkpoint_to_string(const nn::MlpModel& model, const CheckpointMeta& meta = {});
// Throws SchemaError for an unsupported version and ParseError (with byte offset) otherwise.
nn::MlpModel parse_checkpoint(std::string_view text, CheckpointMeta* meta = nullptr);
// Written to a temporary sibling and renamed into place.
void save_checkpoint(const nn::MlpModel& model, const std::filesystem::path& path, const CheckpointMeta& meta = {});
nn::MlpModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace simprov::harness

#include <chrono>
#include <fstream>

#include <json.hpp>

#include "simprov/errors.hpp"
#include "simprov/harness.hpp"

namespace simprov::harness {

using ojson = nlohmann::ordered_json;

namespace {

ojson stat_json(const Stat& s) { return ojson{{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

ojson trial_json(const TrialSummary& t) {
  ojson j{{"trial", t.trial},
          {"seed", t.seed},
          {"ok", t.ok},
          {"base_target_acc", t.base_target_acc},
          {"final_target_acc", t.final_target_acc},
          {"base_d_rand", t.base_d_rand},
          {"final_d_rand", t.final_d_rand},
          {"iterations", t.iterations}};
  if (!t.ok) j["error"] = t.error;
  ojson b = ojson::object();
  for (const auto& [name, acc] : t.baselines) b[name] = acc;
  j["baselines"] = b;
  return j;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  return f;
}

}  // namespace

std::string summary_to_json(const Summary& s) {
  ojson j;
  j["config_hash"] = s.config_hash;
  j["base_method"] = s.base_method;
  j["n_trials"] = s.n_trials;
  j["single_trial"] = s.single_trial;
  j["failed_trials"] = s.failed_trials;
  j["base"] = stat_json(s.base);
  j["simprov"] = stat_json(s.simprov);
  ojson b = ojson::object();
  for (const auto& [name, st] : s.baselines) b[name] = stat_json(st);
  j["baselines"] = b;
  j["best_by_d_rand"] = s.best_by_d_rand ? trial_json(*s.best_by_d_rand) : ojson(nullptr);
  ojson trials = ojson::array();
  for (const auto& t : s.trials) trials.push_back(trial_json(t));
  j["trials"] = trials;
  return j.dump(2) + "\n";
}

Summary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.output_dir.string() + "'");

  Summary summary;
  summary.config_hash = config_hash(cfg);
  summary.base_method = std::string(to_string(cfg.base_method));
  summary.n_trials = cfg.n_trials;
  summary.single_trial = cfg.n_trials == 1;

  {
    auto f = open_out(cfg.output_dir / "config.json");
    f << config_to_json(cfg);
  }
  auto metrics = open_out(cfg.output_dir / "metrics.jsonl");
  std::ofstream timing;
  if (cfg.record_timing) timing = open_out(cfg.output_dir / "timing.jsonl");

  const std::string method = summary.base_method;
  for (std::size_t trial = 0; trial < cfg.n_trials; ++trial) {
    TrialSummary ts;
    ts.trial = trial;
    auto last = std::chrono::steady_clock::now();
    auto log_time = [&](const ojson& fields) {
      if (!cfg.record_timing) return;
      const auto now = std::chrono::steady_clock::now();
      ojson j = fields;
      j["wall_ms"] = std::chrono::duration<double, std::milli>(now - last).count();
      last = now;
      timing << j.dump() << '\n';
      timing.flush();
    };
    ts.seed = trial_seed(cfg, trial);
    try {
      const data::BenchmarkSpec bench = trial_benchmark(cfg, ts.seed);
      std::vector<data::DomainDataset> train;
      for (const auto& spec : bench.train) train.push_back(data::generate_domain(spec));
      // The adaptation path only ever sees the target feature matrix.
      const Matrix x_target = data::generate_domain(bench.target).features();

      const train::TrainConfig base_cfg = trial_base_config(cfg, ts.seed);
      const nn::MlpModel base = train_base(cfg.base_method, train, base_cfg);

      // Scoring split; generated after training so nothing upstream can depend on it.
      const data::DomainDataset eval = data::generate_domain(bench.target_eval);
      const Matrix x_eval = eval.features();
      const std::vector<int> y_eval = eval.labels();

      auto observer = [&](const adapt::IterationRecord& it, const nn::MlpModel& candidate) {
        MetricsRecord r;
        r.trial = trial;
        r.method = method;
        r.phase = it.t == 0 ? "base" : "adapt";
        r.t = it.t;
        r.d_rand = it.d_rand;
        r.train_acc = it.train_acc;
        r.target_acc = nn::accuracy(candidate, x_eval, y_eval);
        r.n_selected = it.n_selected;
        r.mean_kappa = it.mean_kappa;
        r.accepted = it.accepted;
        metrics << to_json_line(r) << '\n';
        metrics.flush();
        log_time(ojson{{"trial", trial}, {"phase", r.phase}, {"t", it.t}});
      };
      const adapt::AdaptResult res =
          adapt::simprov_adapt(base, train, x_target, trial_adapt_config(cfg, ts.seed), observer);

      ts.base_target_acc = nn::accuracy(base, x_eval, y_eval);
      ts.final_target_acc = nn::accuracy(res.final_model, x_eval, y_eval);
      ts.base_d_rand = res.state.history.front().d_rand;
      ts.final_d_rand = res.state.best_d_rand;
      ts.iterations = res.state.history.size() - 1;
      for (BaseMethod b : cfg.baselines) {
        const nn::MlpModel m = train_base(b, train, base_cfg);
        ts.baselines.emplace_back(std::string(to_string(b)), nn::accuracy(m, x_eval, y_eval));
      }
      if (!cfg.baselines.empty()) log_time(ojson{{"trial", trial}, {"phase", "baselines"}});
      ts.ok = true;
    } catch (const std::exception& e) {
      ts.ok = false;
      ts.error = e.what();
      ++summary.failed_trials;
    }
    summary.trials.push_back(std::move(ts));
  }
  if (!metrics) throw IoError("write failed for metrics stream");

  std::vector<double> base_acc, final_acc;
  for (const auto& t : summary.trials) {
    if (!t.ok) continue;
    base_acc.push_back(t.base_target_acc);
    final_acc.push_back(t.final_target_acc);
    if (!summary.best_by_d_rand || t.final_d_rand > summary.best_by_d_rand->final_d_rand) summary.best_by_d_rand = t;
  }
  summary.base = mean_std(base_acc);
  summary.simprov = mean_std(final_acc);
  for (BaseMethod b : cfg.baselines) {
    const std::string name(to_string(b));
    std::vector<double> acc;
    for (const auto& t : summary.trials) {
      for (const auto& [n, a] : t.baselines) {
        if (n == name) acc.push_back(a);
      }
    }
    summary.baselines.emplace_back(name, mean_std(acc));
  }

  auto f = open_out(cfg.output_dir / "summary.json");
  f << summary_to_json(summary);
  return summary;
}

}  // namespace simprov::harness

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "simprov/errors.hpp"
#include "simprov/harness.hpp"

using namespace simprov;
using namespace simprov::harness;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "experiment": {"n_trials": 2, "master_seed": 4, "baselines": ["erm"]},
  "data": {"train": [{"n_samples": 150}, {"n_samples": 150}],
           "target": {"n_samples": 150}, "target_eval": {"n_samples": 150}},
  "base": {"epochs": 12, "penalty_warmup": 3, "hidden": [8]},
  "adapt": {"deepness": 3, "patience": 2, "student": {"epochs": 2, "hidden": [8]}}
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("simprov_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config: defaults round trip through JSON") {
  const auto d = default_experiment_config();
  const auto back = parse_config(config_to_json(d));
  CHECK(config_to_json(back) == config_to_json(d));
  CHECK(config_hash(back) == config_hash(d));
  CHECK(config_hash(d).size() == 16);
  CHECK(parse_config("{}").n_trials == 5);
  CHECK(d.base_method == BaseMethod::Irm);
  CHECK(d.adapt.confirmations == 10);
}

TEST_CASE("config: every section is read") {
  const auto c = parse_config(kTiny);
  CHECK(c.n_trials == 2);
  CHECK(c.master_seed == 4);
  REQUIRE(c.baselines.size() == 1);
  CHECK(c.baselines[0] == BaseMethod::Erm);
  CHECK(c.train_domains[1].n_samples == 150);
  CHECK(c.train_domains[1].spur_flip_prob == 0.2);
  CHECK(c.base.epochs == 12);
  CHECK(c.base.hidden == std::vector<std::size_t>{8});
  CHECK(c.adapt.student.epochs == 2);
  CHECK(c.adapt.deepness == 3);
}

TEST_CASE("config: unknown keys and bad values are hard errors") {
  CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"adapt": {"deepnes": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"adapt": {"student": {"lr": 0.1, "epoch": 2}}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"data": {"target": {"sigma": 1}}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": {"n_trials": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": {"n_trials": -2}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": {"base_method": "vrex"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"base": {"lr": "fast"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"adapt": {"select_fraction": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"data": {"target": {"d_inv": 4}}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  try {
    parse_config(R"({"adapt": {"student": {"epoch": 2}}})");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("adapt.student.epoch") != std::string::npos);
  }
}

TEST_CASE("config hash tracks content, not the output location") {
  auto a = parse_config(kTiny);
  auto b = a;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.adapt.alpha = 0.5;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("trial seeds are master + index") {
  auto c = parse_config(kTiny);
  CHECK(trial_seed(c, 0) == 4);
  CHECK(trial_seed(c, 3) == 7);
  const auto b0 = trial_benchmark(c, 4), b1 = trial_benchmark(c, 5);
  CHECK(b0.target.seed != b1.target.seed);
  CHECK(b0.target.seed != b0.target_eval.seed);
}

TEST_CASE("metrics lines round trip") {
  MetricsRecord r{3, "irm", "adapt", 5, 0.1 + 0.2, 0.6, 0.7123456789012345, 75, -0.0625, true};
  const auto line = to_json_line(r);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(parse_metrics_line(line) == r);
  CHECK_THROWS_AS(parse_metrics_line("{\"trial\": 1}"), ParseError);
  CHECK_THROWS_AS(parse_metrics_line("garbage"), ParseError);

  const fs::path p = scratch("m.jsonl");
  {
    std::ofstream f(p);
    f << line << "\n\n" << line << "\n{oops\n";
  }
  try {
    load_metrics(p);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("plot data") {
  CHECK(plot_csv({}, PlotKind::Deepness) == "D,mean_target_acc,std,n_trials\n");
  CHECK(plot_csv({}, PlotKind::DrandScatter) == "trial,t,d_rand,target_acc\n");
  CHECK_THROWS_AS(plot_kind_from_string("histogram"), InputError);

  std::vector<MetricsRecord> recs = {
      {0, "irm", "base", 0, 0.2, 0.7, 0.6, 0, 0, true},  {0, "irm", "adapt", 1, 0.1, 0.6, 0.5, 5, 0, false},
      {0, "irm", "adapt", 2, 0.3, 0.8, 0.8, 5, 0, true}, {1, "irm", "base", 0, 0.2, 0.7, 0.7, 0, 0, true},
      {1, "irm", "adapt", 1, 0.3, 0.8, 0.9, 5, 0, true},
  };
  CHECK(deepness_series({recs[0], recs[1], recs[2]}) == std::vector<double>{0.6, 0.6, 0.8});
  const std::string scatter = plot_csv(recs, PlotKind::DrandScatter);
  CHECK(std::count(scatter.begin(), scatter.end(), '\n') == 1 + 3);
  const std::string deep = plot_csv(recs, PlotKind::Deepness);
  std::istringstream in(deep);
  std::string line;
  std::getline(in, line);
  std::vector<double> means;
  std::vector<std::size_t> counts;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string d, mean, sd, n;
    std::getline(row, d, ',');
    std::getline(row, mean, ',');
    std::getline(row, sd, ',');
    std::getline(row, n, ',');
    means.push_back(std::stod(mean));
    counts.push_back(std::stoul(n));
  }
  REQUIRE(means.size() == 3);
  CHECK(means[0] == doctest::Approx(0.65));
  CHECK(means[1] == doctest::Approx(0.75));  // trial 0 keeps 0.6, trial 1 moved to 0.9
  CHECK(means[2] == doctest::Approx(0.85));  // trial 1 stopped early and keeps its teacher
  CHECK(counts == std::vector<std::size_t>{2, 2, 2});
}

TEST_CASE("mean and sample std") {
  const Stat one = mean_std({0.7});
  CHECK(one.mean == 0.7);
  CHECK(one.std == 0.0);
  const Stat s = mean_std({0.6, 0.7, 0.8});
  CHECK(s.mean == doctest::Approx(0.7));
  CHECK(s.std == doctest::Approx(0.1));
}

TEST_CASE("checkpoint round trip is bit exact") {
  nn::Architecture arch{13, {32, 32}, 2};
  arch.activation = nn::Activation::Tanh;
  arch.dropout_rate = 0.2;
  const auto m = nn::init_model(arch, 99);
  CheckpointMeta meta{"0123456789abcdef", {1, 18446744073709551615ull}};
  const fs::path p = scratch("m.ckpt");
  save_checkpoint(m, p, meta);
  CHECK_FALSE(fs::exists(p.string() + ".tmp"));
  CheckpointMeta back_meta;
  const auto back = load_checkpoint(p, &back_meta);
  CHECK(back == m);
  CHECK(back_meta == meta);
  Matrix probe(5, 13);
  for (std::size_t i = 0; i < probe.size(); ++i) probe.data()[i] = std::sin(1.0 + i);
  CHECK(nn::forward(back, probe) == nn::forward(m, probe));
}

TEST_CASE("default-size checkpoint footprint") {
  const auto m = nn::init_model(nn::Architecture{13, {32, 32}, 2}, 1);
  const std::string text = checkpoint_to_string(m);
  const double per_param = static_cast<double>(text.size()) / static_cast<double>(m.parameter_count());
  MESSAGE("default checkpoint: " << text.size() << " bytes for " << m.parameter_count() << " parameters");
  CHECK(per_param > 10.0);
  CHECK(per_param < 30.0);
}

TEST_CASE("corrupt checkpoints are rejected with an offset") {
  const auto m = nn::init_model(nn::Architecture{4, {3}, 2}, 1);
  const std::string text = checkpoint_to_string(m);
  for (std::size_t cut : {text.size() / 4, text.size() / 2, text.size() - 5}) {
    try {
      parse_checkpoint(text.substr(0, cut));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  }
  std::string bad = text;
  bad.replace(bad.find("w ") + 2, 1, "#");
  CHECK_THROWS_AS(parse_checkpoint(bad), ParseError);
  std::string v2 = text;
  v2.replace(0, std::string("simprov-checkpoint 1").size(), "simprov-checkpoint 2");
  CHECK_THROWS_AS(parse_checkpoint(v2), SchemaError);
  CHECK_THROWS_AS(load_checkpoint(scratch("absent.ckpt")), IoError);
}

TEST_CASE("experiment: summary, metrics, determinism") {
  auto cfg = parse_config(kTiny);
  cfg.output_dir = scratch("exp_a");
  const Summary s = run_experiment(cfg);
  CHECK(s.failed_trials == 0);
  CHECK_FALSE(s.single_trial);
  REQUIRE(s.trials.size() == 2);
  CHECK(s.trials[1].seed == 5);
  REQUIRE(s.baselines.size() == 1);
  CHECK(s.baselines[0].first == "erm");
  CHECK(s.best_by_d_rand.has_value());
  CHECK(fs::exists(cfg.output_dir / "summary.json"));
  CHECK_FALSE(fs::exists(cfg.output_dir / "timing.jsonl"));

  const auto recs = load_metrics(cfg.output_dir / "metrics.jsonl");
  std::map<std::size_t, std::vector<MetricsRecord>> by_trial;
  for (const auto& r : recs) by_trial[r.trial].push_back(r);
  std::vector<double> base, fin;
  for (const auto& [t, rs] : by_trial) {
    CHECK(rs.front().phase == "base");
    CHECK(rs.size() == s.trials[t].iterations + 1);
    base.push_back(rs.front().target_acc);
    fin.push_back(deepness_series(rs).back());
  }
  // Independent recomputation of the summary statistics from the stream.
  auto sample_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (v.size() - 1));
  };
  CHECK(std::abs(s.base.std - sample_std(base)) < 1e-12);
  CHECK(std::abs(s.simprov.std - sample_std(fin)) < 1e-12);
  CHECK(std::abs(s.simprov.mean - (fin[0] + fin[1]) / 2) < 1e-12);

  auto again = cfg;
  again.output_dir = scratch("exp_b");
  again.record_timing = true;
  run_experiment(again);
  CHECK(slurp(cfg.output_dir / "metrics.jsonl") == slurp(again.output_dir / "metrics.jsonl"));
  CHECK(fs::exists(again.output_dir / "timing.jsonl"));
}

TEST_CASE("experiment: single trial flag and failing trials") {
  auto cfg = parse_config(kTiny);
  cfg.n_trials = 1;
  cfg.baselines.clear();
  cfg.output_dir = scratch("exp_single");
  const auto one = run_experiment(cfg);
  CHECK(one.single_trial);
  CHECK(one.simprov.std == 0.0);
  CHECK(summary_to_json(one).find("\"single_trial\": true") != std::string::npos);

  cfg.n_trials = 2;
  cfg.base.lr = 1e300;
  cfg.output_dir = scratch("exp_fail");
  const auto bad = run_experiment(cfg);
  CHECK(bad.failed_trials == 2);
  REQUIRE(bad.trials.size() == 2);
  CHECK_FALSE(bad.trials[1].ok);
  CHECK_FALSE(bad.trials[1].error.empty());
  CHECK(bad.base.n == 0);
}

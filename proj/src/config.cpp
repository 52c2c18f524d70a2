#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "simprov/errors.hpp"
#include "simprov/harness.hpp"
#include "simprov/rng.hpp"

namespace simprov::harness {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(BaseMethod m) noexcept {
  switch (m) {
    case BaseMethod::Erm: return "erm";
    case BaseMethod::Irm: return "irm";
    case BaseMethod::GroupDro: return "groupdro";
  }
  return "irm";
}

BaseMethod base_method_from_string(std::string_view name) {
  if (name == "erm") return BaseMethod::Erm;
  if (name == "irm") return BaseMethod::Irm;
  if (name == "groupdro") return BaseMethod::GroupDro;
  throw ConfigError("unknown base method '" + std::string(name) + "' (expected erm, irm or groupdro)");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  const auto bench = data::default_benchmark_spec(0);
  cfg.train_domains = bench.train;
  cfg.target = bench.target;
  cfg.target_eval = bench.target_eval;
  for (auto* s : {&cfg.target, &cfg.target_eval}) s->seed = 0;
  for (auto& s : cfg.train_domains) s.seed = 0;
  return cfg;
}

void ExperimentConfig::validate() const {
  if (train_domains.empty()) throw ConfigError("at least one training domain is required");
  const std::size_t dim = target.feature_dim();
  for (const auto& d : train_domains) {
    d.validate();
    if (d.feature_dim() != dim) throw ConfigError("training domain '" + d.domain_id + "' has a different feature dim");
  }
  target.validate();
  target_eval.validate();
  if (target_eval.feature_dim() != dim) throw ConfigError("target_eval has a different feature dim");
  if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
  base.validate();
  adapt.validate();
}

namespace {

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError(where(key) + ": expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(where(key) + ": expected a string");
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where(it.key()) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_domain(const json& j, const std::string& path, data::DomainSpec& s) {
  Reader r(j, path);
  r.get("domain_id", s.domain_id);
  r.get("n_samples", s.n_samples);
  r.get("spur_flip_prob", s.spur_flip_prob);
  r.get("label_noise", s.label_noise);
  r.get("d_inv", s.d_inv);
  r.get("d_spur", s.d_spur);
  r.get("signal_mean", s.signal_mean);
  r.get("noise_sigma", s.noise_sigma);
  r.finish();
}

void read_train(const json& j, const std::string& path, train::TrainConfig& c) {
  Reader r(j, path);
  r.get("lr", c.lr);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lambda", c.lambda);
  r.get("penalty_warmup", c.penalty_warmup);
  r.get("dro_eta", c.dro_eta);
  r.get("weight_decay", c.weight_decay);
  r.get("dropout", c.dropout);
  std::string opt(nn::to_string(c.optimizer));
  r.get("optimizer", opt);
  try {
    c.optimizer = nn::optimizer_from_string(opt);
  } catch (const InputError& e) {
    throw ConfigError(r.where("optimizer") + ": " + e.what());
  }
  std::string act(nn::to_string(c.activation));
  r.get("activation", act);
  try {
    c.activation = nn::activation_from_string(act);
  } catch (const InputError& e) {
    throw ConfigError(r.where("activation") + ": " + e.what());
  }
  if (const json* h = r.child("hidden")) {
    if (!h->is_array()) throw ConfigError(r.where("hidden") + ": expected an array of widths");
    c.hidden.clear();
    for (const auto& w : *h) {
      if (!w.is_number_unsigned() || w.get<std::size_t>() == 0) {
        throw ConfigError(r.where("hidden") + ": widths must be positive integers");
      }
      c.hidden.push_back(w.get<std::size_t>());
    }
  }
  r.finish();
}

void read_adapt(const json& j, const std::string& path, adapt::AdaptConfig& a) {
  Reader r(j, path);
  r.get("confirmations", a.confirmations);
  r.get("dropout", a.dropout);
  r.get("select_fraction", a.select_fraction);
  r.get("alpha", a.alpha);
  r.get("deepness", a.deepness);
  r.get("patience", a.patience);
  std::string mode = a.confidence_mode == adapt::ConfidenceMode::IndexVariance ? "variance" : "disagreement";
  r.get("confidence", mode);
  if (mode == "variance") a.confidence_mode = adapt::ConfidenceMode::IndexVariance;
  else if (mode == "disagreement") a.confidence_mode = adapt::ConfidenceMode::Disagreement;
  else throw ConfigError(r.where("confidence") + ": expected 'variance' or 'disagreement'");
  std::string pooling = a.pooling == adapt::AccuracyPooling::Pooled ? "pooled" : "domain_mean";
  r.get("d_rand_pooling", pooling);
  if (pooling == "pooled") a.pooling = adapt::AccuracyPooling::Pooled;
  else if (pooling == "domain_mean") a.pooling = adapt::AccuracyPooling::DomainMean;
  else throw ConfigError(r.where("d_rand_pooling") + ": expected 'pooled' or 'domain_mean'");
  if (const json* s = r.child("student")) read_train(*s, r.where("student"), a.student);
  r.finish();
}

ojson domain_json(const data::DomainSpec& s) {
  return ojson{{"domain_id", s.domain_id},     {"n_samples", s.n_samples}, {"spur_flip_prob", s.spur_flip_prob},
               {"label_noise", s.label_noise}, {"d_inv", s.d_inv},         {"d_spur", s.d_spur},
               {"signal_mean", s.signal_mean}, {"noise_sigma", s.noise_sigma}};
}

ojson train_json(const train::TrainConfig& c) {
  return ojson{{"lr", c.lr},
               {"epochs", c.epochs},
               {"batch_size", c.batch_size},
               {"lambda", c.lambda},
               {"penalty_warmup", c.penalty_warmup},
               {"dro_eta", c.dro_eta},
               {"weight_decay", c.weight_decay},
               {"dropout", c.dropout},
               {"optimizer", std::string(nn::to_string(c.optimizer))},
               {"activation", std::string(nn::to_string(c.activation))},
               {"hidden", c.hidden}};
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg = default_experiment_config();
  Reader r(root, "");
  if (const json* e = r.child("experiment")) {
    Reader er(*e, "experiment");
    er.get("n_trials", cfg.n_trials);
    er.get("master_seed", cfg.master_seed);
    std::string method(to_string(cfg.base_method));
    er.get("base_method", method);
    cfg.base_method = base_method_from_string(method);
    if (const json* b = er.child("baselines")) {
      if (!b->is_array()) throw ConfigError("experiment.baselines: expected an array");
      cfg.baselines.clear();
      for (const auto& m : *b) {
        if (!m.is_string()) throw ConfigError("experiment.baselines: expected method names");
        cfg.baselines.push_back(base_method_from_string(m.get<std::string>()));
      }
    }
    std::string out = cfg.output_dir.string();
    er.get("output_dir", out);
    cfg.output_dir = out;
    er.get("record_timing", cfg.record_timing);
    er.finish();
  }
  if (const json* d = r.child("data")) {
    Reader dr(*d, "data");
    if (const json* t = dr.child("train")) {
      if (!t->is_array() || t->empty()) throw ConfigError("data.train: expected a non-empty array");
      std::vector<data::DomainSpec> specs;
      for (std::size_t i = 0; i < t->size(); ++i) {
        data::DomainSpec s = i < cfg.train_domains.size() ? cfg.train_domains[i] : cfg.train_domains.back();
        s.domain_id = "train_" + std::to_string(i);
        read_domain((*t)[i], "data.train[" + std::to_string(i) + "]", s);
        specs.push_back(s);
      }
      cfg.train_domains = std::move(specs);
    }
    if (const json* t = dr.child("target")) read_domain(*t, "data.target", cfg.target);
    if (const json* t = dr.child("target_eval")) read_domain(*t, "data.target_eval", cfg.target_eval);
    dr.finish();
  }
  if (const json* b = r.child("base")) read_train(*b, "base", cfg.base);
  if (const json* a = r.child("adapt")) read_adapt(*a, "adapt", cfg.adapt);
  r.finish();
  try {
    cfg.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  ojson root;
  std::vector<std::string> baselines;
  for (auto m : cfg.baselines) baselines.emplace_back(to_string(m));
  root["experiment"] = ojson{{"n_trials", cfg.n_trials},
                             {"master_seed", cfg.master_seed},
                             {"base_method", std::string(to_string(cfg.base_method))},
                             {"baselines", baselines},
                             {"output_dir", cfg.output_dir.string()},
                             {"record_timing", cfg.record_timing}};
  ojson train = ojson::array();
  for (const auto& d : cfg.train_domains) train.push_back(domain_json(d));
  root["data"] = ojson{{"train", train}, {"target", domain_json(cfg.target)}, {"target_eval", domain_json(cfg.target_eval)}};
  root["base"] = train_json(cfg.base);
  const auto& a = cfg.adapt;
  root["adapt"] = ojson{{"confirmations", a.confirmations},
                        {"dropout", a.dropout},
                        {"select_fraction", a.select_fraction},
                        {"alpha", a.alpha},
                        {"deepness", a.deepness},
                        {"patience", a.patience},
                        {"confidence", a.confidence_mode == adapt::ConfidenceMode::IndexVariance ? "variance" : "disagreement"},
                        {"d_rand_pooling", a.pooling == adapt::AccuracyPooling::Pooled ? "pooled" : "domain_mean"},
                        {"student", train_json(a.student)}};
  return root.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  // The output location does not change any result, so it is left out of the hash.
  ExperimentConfig c = cfg;
  c.output_dir = "";
  const std::string text = config_to_json(c);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial) noexcept {
  return cfg.master_seed + trial;
}

data::BenchmarkSpec trial_benchmark(const ExperimentConfig& cfg, std::uint64_t seed) {
  data::BenchmarkSpec b;
  b.train = cfg.train_domains;
  for (std::size_t e = 0; e < b.train.size(); ++e) b.train[e].seed = derive_seed(seed, 100 + e);
  b.target = cfg.target;
  b.target.seed = derive_seed(seed, 200);
  b.target_eval = cfg.target_eval;
  b.target_eval.seed = derive_seed(seed, 201);
  return b;
}

train::TrainConfig trial_base_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  train::TrainConfig c = cfg.base;
  c.seed = derive_seed(seed, 300);
  return c;
}

adapt::AdaptConfig trial_adapt_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  adapt::AdaptConfig a = cfg.adapt;
  a.seed = derive_seed(seed, 400);
  return a;
}

nn::MlpModel train_base(BaseMethod method, const std::vector<data::DomainDataset>& train,
                        const train::TrainConfig& cfg) {
  switch (method) {
    case BaseMethod::Erm: return train::train_erm(train, cfg);
    case BaseMethod::Irm: return train::train_irm(train, cfg);
    case BaseMethod::GroupDro: return train::train_groupdro(train, cfg);
  }
  throw ConfigError("unknown base method");
}

}  // namespace simprov::harness

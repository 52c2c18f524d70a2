#include "simprov/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "simprov/errors.hpp"
#include "simprov/rng.hpp"

namespace simprov::adapt {

AdaptConfig::AdaptConfig() {
  student.dropout = 0.2;
}

void AdaptConfig::validate() const {
  if (confirmations < 1) throw ConfigError("confirmations (m) must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(select_fraction > 0.0 && select_fraction <= 1.0)) throw ConfigError("select_fraction must lie in (0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (deepness < 1) throw ConfigError("deepness must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  student.validate();
}

int majority_vote(std::span<const int> votes, std::size_t k) {
  if (votes.empty()) throw InputError("majority_vote: empty vote set");
  std::vector<std::size_t> counts(k, 0);
  for (int v : votes) {
    if (v < 0 || static_cast<std::size_t>(v) >= k) throw InputError("majority_vote: vote outside [0, k)");
    ++counts[static_cast<std::size_t>(v)];
  }
  // max_element returns the first maximum, i.e. the smallest tied class.
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

double confidence(std::span<const int> votes) {
  if (votes.empty()) throw InputError("confidence: empty vote set");
  const double n = static_cast<double>(votes.size());
  double mean = 0.0;
  for (int v : votes) mean += v;
  mean /= n;
  double var = 0.0;
  for (int v : votes) var += (v - mean) * (v - mean);
  return -(var / n);
}

double disagreement_confidence(std::span<const int> votes) {
  if (votes.empty()) throw InputError("confidence: empty vote set");
  const int top = *std::max_element(votes.begin(), votes.end());
  const int mode = majority_vote(votes, static_cast<std::size_t>(top) + 1);
  const auto hits = std::count(votes.begin(), votes.end(), mode);
  return -(1.0 - static_cast<double>(hits) / static_cast<double>(votes.size()));
}

std::vector<PseudoLabelRecord> mc_pseudo_label(const nn::MlpModel& model, const Matrix& x_target,
                                               std::size_t m, double dropout, std::uint64_t seed,
                                               ConfidenceMode mode) {
  if (m < 1) throw InputError("mc_pseudo_label: m must be >= 1");
  nn::MlpModel mc = model;
  mc.dropout_rate = dropout;
  mc.validate();

  const std::size_t n = x_target.rows();
  std::vector<PseudoLabelRecord> records(n);
  for (std::size_t j = 0; j < n; ++j) {
    records[j].sample_index = j;
    records[j].votes.reserve(m);
  }
  // Votes are appended in pass order.
  for (std::size_t pass = 0; pass < m; ++pass) {
    const nn::DropoutMask mask = nn::sample_mask(mc, n, derive_seed(seed, pass));
    const auto labels = nn::argmax_rows(nn::forward(mc, x_target, &mask));
    for (std::size_t j = 0; j < n; ++j) records[j].votes.push_back(labels[j]);
  }
  for (auto& r : records) {
    r.label = majority_vote(r.votes, mc.n_classes);
    r.kappa = mode == ConfidenceMode::IndexVariance ? confidence(r.votes) : disagreement_confidence(r.votes);
  }
  return records;
}

SelectedBatch select_top(std::span<const PseudoLabelRecord> records, const Matrix& x_target, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw InputError("select_top: q must lie in (0, 1]");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].kappa != records[b].kappa) return records[a].kappa > records[b].kappa;
    return records[a].sample_index < records[b].sample_index;
  });
  const auto want = static_cast<std::size_t>(std::ceil(q * static_cast<double>(records.size())));
  order.resize(std::min(want, records.size()));

  SelectedBatch out;
  out.indices.reserve(order.size());
  out.labels.reserve(order.size());
  for (std::size_t i : order) {
    out.indices.push_back(records[i].sample_index);
    out.labels.push_back(records[i].label);
  }
  out.features = x_target.gather_rows(out.indices);
  return out;
}

nn::MlpModel distill_student(const SelectedBatch& selected, const std::vector<data::DomainDataset>* source,
                             double alpha, const train::TrainConfig& cfg, std::uint64_t seed) {
  if (selected.labels.empty()) throw InputError("distill_student: empty selection");
  if (selected.features.rows() != selected.labels.size()) throw InputError("distill_student: ragged selection");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("distill_student: alpha must lie in [0, 1]");

  train::TrainConfig scfg = cfg;
  scfg.seed = seed;

  const bool use_source = source != nullptr && !source->empty() && alpha < 1.0;
  const bool use_target = !use_source || alpha > 0.0;

  std::vector<train::LabeledGroup> groups;
  std::vector<double> weights;
  if (use_target) {
    groups.push_back({selected.features, selected.labels});
    weights.push_back(use_source ? alpha : 1.0);
  }
  if (use_source) {
    train::LabeledGroup pooled;
    std::vector<Matrix> feats;
    std::vector<const Matrix*> parts;
    for (const auto& d : *source) {
      feats.push_back(d.features());
      const auto y = d.labels();
      pooled.y.insert(pooled.y.end(), y.begin(), y.end());
    }
    for (const auto& f : feats) parts.push_back(&f);
    pooled.x = Matrix::vstack(parts);
    groups.push_back(std::move(pooled));
    weights.push_back(use_target ? 1.0 - alpha : 1.0);
  }
  return train::fit(groups, scfg, [&](const train::BatchView& b) { return train::weighted_group_risk(b, weights); });
}

double d_rand_from_accuracy(double accuracy, std::size_t k) {
  if (k < 2) throw InputError("d_rand: k must be >= 2");
  return std::abs(accuracy - 1.0 / static_cast<double>(k));
}

double training_accuracy(const nn::MlpModel& model, const std::vector<data::DomainDataset>& train,
                         AccuracyPooling pooling) {
  std::size_t total = 0;
  std::size_t hits = 0;
  double domain_sum = 0.0;
  std::size_t domains = 0;
  for (const auto& d : train) {
    if (d.size() == 0) continue;
    const auto pred = nn::predict(model, d.features());
    std::size_t h = 0;
    for (std::size_t i = 0; i < d.size(); ++i) h += pred[i] == d.samples[i].y ? 1 : 0;
    hits += h;
    total += d.size();
    domain_sum += static_cast<double>(h) / static_cast<double>(d.size());
    ++domains;
  }
  if (total == 0) throw InputError("d_rand: no training samples");
  return pooling == AccuracyPooling::Pooled ? static_cast<double>(hits) / static_cast<double>(total)
                                            : domain_sum / static_cast<double>(domains);
}

double d_rand(const nn::MlpModel& model, const std::vector<data::DomainDataset>& train, std::size_t k,
              AccuracyPooling pooling) {
  if (k != model.n_classes) throw InputError("d_rand: k must equal model n_classes");
  return d_rand_from_accuracy(training_accuracy(model, train, pooling), k);
}

AdaptResult simprov_adapt(const nn::MlpModel& base, const std::vector<data::DomainDataset>& train,
                          const Matrix& x_target, const AdaptConfig& cfg, const IterationObserver& observer) {
  cfg.validate();
  base.validate();
  if (x_target.rows() == 0) throw InputError("simprov_adapt: empty target set");
  if (x_target.cols() != base.input_dim()) throw ShapeError("simprov_adapt: target feature dim mismatch");
  const std::size_t k = base.n_classes;

  AdaptResult out;
  AdaptationState& st = out.state;
  st.teacher = base;
  {
    IterationRecord r;
    r.t = 0;
    r.train_acc = training_accuracy(base, train, cfg.pooling);
    r.d_rand = d_rand_from_accuracy(r.train_acc, k);
    r.accepted = true;
    st.best_d_rand = r.d_rand;
    st.history.push_back(r);
    if (observer) observer(r, base);
  }

  train::TrainConfig student_cfg = cfg.student;
  student_cfg.n_classes = k;

  std::size_t rejections = 0;
  for (std::size_t t = 1; t <= cfg.deepness; ++t) {
    st.t = t;
    const auto records = mc_pseudo_label(st.teacher, x_target, cfg.confirmations, cfg.dropout,
                                         derive_seed(cfg.seed, 1000 + t), cfg.confidence_mode);
    const SelectedBatch batch = select_top(records, x_target, cfg.select_fraction);
    const nn::MlpModel student =
        distill_student(batch, &train, cfg.alpha, student_cfg, derive_seed(cfg.seed, 2000 + t));

    IterationRecord r;
    r.t = t;
    r.n_selected = batch.indices.size();
    double kappa_sum = 0.0;
    for (const auto& rec : records) kappa_sum += rec.kappa;
    r.mean_kappa = kappa_sum / static_cast<double>(records.size());
    r.train_acc = training_accuracy(student, train, cfg.pooling);
    r.d_rand = d_rand_from_accuracy(r.train_acc, k);
    r.accepted = r.d_rand > st.best_d_rand;
    st.history.push_back(r);
    if (observer) observer(r, student);

    if (r.accepted) {
      st.teacher = student;
      st.best_d_rand = r.d_rand;
      rejections = 0;
    } else if (++rejections >= cfg.patience) {
      break;
    }
  }
  out.final_model = st.teacher;
  return out;
}

}  // namespace simprov::adapt

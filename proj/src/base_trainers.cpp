#include "simprov/base_trainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "simprov/errors.hpp"
#include "simprov/rng.hpp"

namespace simprov::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(dro_eta >= 0.0) || !std::isfinite(dro_eta)) throw ConfigError("dro_eta must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  for (auto h : hidden)
    if (h == 0) throw ConfigError("hidden widths must be positive");
}

double irm_lambda_at(const TrainConfig& cfg, std::size_t epoch) noexcept {
  return epoch < cfg.penalty_warmup ? std::min(1.0, cfg.lambda) : cfg.lambda;
}

namespace {

// Scalar-scale derivative g = (1/n) sum_i sum_c z_ic (p_ic - 1[y_i = c]) over the given rows.
double scale_derivative(const Matrix& logits, const Matrix& probs, std::span<const int> labels,
                        std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  double g = 0.0;
  for (std::size_t i : rows) {
    auto z = logits.row(i);
    auto p = probs.row(i);
    for (std::size_t c = 0; c < z.size(); ++c) {
      g += z[c] * (p[c] - (labels[i] == static_cast<int>(c) ? 1.0 : 0.0));
    }
  }
  return g / static_cast<double>(rows.size());
}

// Adds coef * d(g^2)/dz for the given rows into out.
void add_penalty_grad(Matrix& out, double coef, const Matrix& logits, const Matrix& probs,
                      std::span<const int> labels, std::span<const std::size_t> rows) {
  if (rows.empty()) return;
  const double g = scale_derivative(logits, probs, labels, rows);
  const double factor = coef * 2.0 * g / static_cast<double>(rows.size());
  for (std::size_t i : rows) {
    auto z = logits.row(i);
    auto p = probs.row(i);
    double zbar = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) zbar += p[c] * z[c];
    auto o = out.row(i);
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double resid = p[c] - (labels[i] == static_cast<int>(c) ? 1.0 : 0.0);
      o[c] += factor * (resid + p[c] * (z[c] - zbar));
    }
  }
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

std::vector<std::vector<std::size_t>> rows_by_group(const BatchView& b) {
  std::vector<std::vector<std::size_t>> rows(b.n_groups);
  for (std::size_t i = 0; i < b.group.size(); ++i) rows[b.group[i]].push_back(i);
  return rows;
}

void check_domains(const std::vector<data::DomainDataset>& train, std::size_t min_domains, const char* who) {
  if (train.size() < min_domains) {
    throw InputError(std::string(who) + " needs at least " + std::to_string(min_domains) + " training domain(s)");
  }
  const std::size_t dim = train.front().feature_dim();
  for (const auto& d : train) {
    if (d.feature_dim() != dim) throw InputError(std::string(who) + ": inconsistent feature dimensions");
    if (d.size() == 0) throw InputError(std::string(who) + ": empty training domain '" + d.spec.domain_id + "'");
  }
}

}  // namespace

double irm_penalty(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw InputError("label count does not match logits");
  const Matrix probs = nn::softmax(logits);
  const auto rows = all_rows(labels.size());
  const double g = scale_derivative(logits, probs, labels, rows);
  return g * g;
}

double irm_penalty(const nn::MlpModel& model, const Matrix& x, std::span<const int> labels) {
  return irm_penalty(nn::forward(model, x), labels);
}

Matrix irm_penalty_grad(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw InputError("label count does not match logits");
  Matrix out(logits.rows(), logits.cols());
  const Matrix probs = nn::softmax(logits);
  add_penalty_grad(out, 1.0, logits, probs, labels, all_rows(labels.size()));
  return out;
}

void update_group_weights(std::vector<double>& q, std::span<const double> risks, double eta) {
  if (q.size() != risks.size()) throw InputError("group weight / risk length mismatch");
  double sum = 0.0;
  for (std::size_t e = 0; e < q.size(); ++e) {
    q[e] *= std::exp(eta * risks[e]);
    sum += q[e];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericError("group weights degenerated");
  for (double& v : q) v /= sum;
}

ObjectiveResult weighted_group_risk(const BatchView& b, std::span<const double> group_weights) {
  if (group_weights.size() != b.n_groups) throw InputError("one weight per group required");
  const auto rows = rows_by_group(b);
  ObjectiveResult out;
  out.dlogits = nn::softmax(b.logits);
  out.report.risks.assign(b.n_groups, 0.0);
  out.report.penalties.assign(b.n_groups, 0.0);
  for (std::size_t g = 0; g < b.n_groups; ++g) {
    if (rows[g].empty()) continue;
    const double row_weight = group_weights[g] / static_cast<double>(rows[g].size());
    double risk = 0.0;
    for (std::size_t i : rows[g]) {
      auto z = b.logits.row(i);
      const double zmax = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double v : z) s += std::exp(v - zmax);
      risk += zmax + std::log(s) - z[static_cast<std::size_t>(b.labels[i])];
      auto d = out.dlogits.row(i);
      d[static_cast<std::size_t>(b.labels[i])] -= 1.0;
      for (double& v : d) v *= row_weight;
    }
    risk /= static_cast<double>(rows[g].size());
    out.report.risks[g] = risk;
    out.loss += group_weights[g] * risk;
  }
  double total = 0.0;
  for (double r : out.report.risks) total += r;
  out.report.total = total;
  return out;
}

std::vector<LabeledGroup> to_groups(const std::vector<data::DomainDataset>& domains) {
  std::vector<LabeledGroup> groups;
  groups.reserve(domains.size());
  for (const auto& d : domains) groups.push_back({d.features(), d.labels()});
  return groups;
}

nn::MlpModel fit(const std::vector<LabeledGroup>& groups, const TrainConfig& cfg, const Objective& objective,
                 const TrainObserver& observer) {
  cfg.validate();
  if (groups.empty()) throw InputError("fit needs at least one group");

  std::vector<const Matrix*> parts;
  std::vector<int> labels;
  std::vector<std::size_t> group_of;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].x.rows() != groups[g].y.size()) throw InputError("group features/labels length mismatch");
    parts.push_back(&groups[g].x);
    labels.insert(labels.end(), groups[g].y.begin(), groups[g].y.end());
    group_of.insert(group_of.end(), groups[g].x.rows(), g);
  }
  const Matrix pooled = Matrix::vstack(parts);
  if (pooled.rows() == 0) throw InputError("fit needs at least one sample");

  nn::Architecture arch;
  arch.input_dim = pooled.cols();
  arch.hidden = cfg.hidden;
  arch.n_classes = cfg.n_classes;
  arch.activation = cfg.activation;
  arch.dropout_rate = cfg.dropout;
  nn::MlpModel model = nn::init_model(arch, cfg.seed);

  nn::OptimizerConfig opt;
  opt.kind = cfg.optimizer;
  opt.lr = cfg.lr;
  nn::OptimizerState state;

  const std::size_t n = pooled.rows();
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
  std::vector<std::size_t> order = all_rows(n);
  Rng shuffler(derive_seed(cfg.seed, 0x5B));

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!full_batch) shuffler.shuffle(order.begin(), order.end());
    const std::size_t bs = full_batch ? n : cfg.batch_size;
    for (std::size_t start = 0; start < n; start += bs, ++step) {
      const std::size_t end = std::min(n, start + bs);
      Matrix xb;
      std::vector<int> yb;
      std::vector<std::size_t> gb;
      if (!full_batch) {
        std::span<const std::size_t> idx(order.data() + start, end - start);
        xb = pooled.gather_rows(idx);
        for (std::size_t i : idx) {
          yb.push_back(labels[i]);
          gb.push_back(group_of[i]);
        }
      }
      const Matrix& x = full_batch ? pooled : xb;
      std::span<const int> y = full_batch ? std::span<const int>(labels) : std::span<const int>(yb);
      std::span<const std::size_t> grp =
          full_batch ? std::span<const std::size_t>(group_of) : std::span<const std::size_t>(gb);

      nn::DropoutMask mask;
      const bool use_mask = cfg.dropout > 0.0;
      if (use_mask) mask = nn::sample_mask(model, x.rows(), derive_seed(cfg.seed, 0x6000 + step));
      const nn::ForwardTrace trace = nn::forward_trace(model, x, use_mask ? &mask : nullptr);

      ObjectiveResult res = objective(BatchView{trace.logits, y, grp, groups.size(), epoch});
      if (!std::isfinite(res.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      }
      nn::Gradients grads = nn::backprop(model, trace, use_mask ? &mask : nullptr, res.dlogits);
      if (cfg.weight_decay > 0.0) {
        const double wd = cfg.weight_decay * res.scale;
        for (std::size_t l = 0; l < grads.size(); ++l) {
          auto g = grads[l].weight.data();
          auto w = model.layers[l].weight.data();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += wd * w[i];
        }
      }
      nn::opt_step(model, grads, state, opt);
      if (observer) {
        observer(StepInfo{epoch, step, std::move(res.report), std::move(res.group_weights)});
      }
    }
  }
  return model;
}

nn::MlpModel train_erm(const std::vector<data::DomainDataset>& train, const TrainConfig& cfg,
                       const TrainObserver& observer) {
  check_domains(train, 1, "train_erm");
  std::vector<LabeledGroup> pooled(1);
  std::vector<const Matrix*> parts;
  std::vector<Matrix> feats;
  feats.reserve(train.size());
  for (const auto& d : train) {
    feats.push_back(d.features());
    const auto y = d.labels();
    pooled[0].y.insert(pooled[0].y.end(), y.begin(), y.end());
  }
  for (const auto& f : feats) parts.push_back(&f);
  pooled[0].x = Matrix::vstack(parts);
  const double one[] = {1.0};
  return fit(pooled, cfg, [&](const BatchView& b) { return weighted_group_risk(b, one); }, observer);
}

nn::MlpModel train_irm(const std::vector<data::DomainDataset>& train, const TrainConfig& cfg,
                       const TrainObserver& observer) {
  check_domains(train, 1, "train_irm");
  const auto groups = to_groups(train);
  const std::vector<double> uniform(groups.size(), 1.0 / static_cast<double>(groups.size()));
  return fit(
      groups, cfg,
      [&](const BatchView& b) {
        ObjectiveResult res = weighted_group_risk(b, uniform);
        const double lam = irm_lambda_at(cfg, b.epoch);
        res.report.lambda = lam;
        if (lam == 0.0) return res;
        const Matrix probs = nn::softmax(b.logits);
        const auto rows = rows_by_group(b);
        double penalty_sum = 0.0;
        for (std::size_t g = 0; g < b.n_groups; ++g) {
          const double d = scale_derivative(b.logits, probs, b.labels, rows[g]);
          res.report.penalties[g] = d * d;
          penalty_sum += d * d;
          add_penalty_grad(res.dlogits, uniform[g] * lam, b.logits, probs, b.labels, rows[g]);
          res.loss += uniform[g] * lam * d * d;
        }
        res.report.total += lam * penalty_sum;
        if (lam > 1.0) {
          for (double& v : res.dlogits.data()) v /= lam;
          res.loss /= lam;
          res.scale = 1.0 / lam;
        }
        return res;
      },
      observer);
}

nn::MlpModel train_groupdro(const std::vector<data::DomainDataset>& train, const TrainConfig& cfg,
                            const TrainObserver& observer) {
  check_domains(train, 1, "train_groupdro");
  const auto groups = to_groups(train);
  std::vector<double> q(groups.size(), 1.0 / static_cast<double>(groups.size()));
  const std::vector<double> ones(groups.size(), 1.0);
  return fit(
      groups, cfg,
      [&](const BatchView& b) {
        const auto risks = weighted_group_risk(b, ones).report.risks;
        update_group_weights(q, risks, cfg.dro_eta);
        ObjectiveResult res = weighted_group_risk(b, q);
        res.group_weights = q;
        return res;
      },
      observer);
}

}  // namespace simprov::train

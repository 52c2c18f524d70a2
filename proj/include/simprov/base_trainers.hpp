#pragma once

// Base (teacher-seed) trainers: pooled ERM, IRMv1-style invariance penalty and
// GroupDRO worst-case reweighting. All three share one pooled-batch engine.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "simprov/domains.hpp"
#include "simprov/neural.hpp"

namespace simprov::train {

struct TrainConfig {
  double lr = 0.01;
  std::size_t epochs = 300;
  std::size_t batch_size = 0;  // 0 = full batch
  double lambda = 1e4;
  std::size_t penalty_warmup = 75;
  double dro_eta = 0.01;
  std::uint64_t seed = 0;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double weight_decay = 1e-3;
  double dropout = 0.0;  // dropout rate active while training
  std::vector<std::size_t> hidden = {32, 32};
  std::size_t n_classes = 2;
  nn::Activation activation = nn::Activation::Relu;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RiskReport {
  std::vector<double> risks;      // R^e, mean cross-entropy per domain
  std::vector<double> penalties;  // IRM penalty per domain (zero when unused)
  double lambda = 0.0;            // penalty weight in effect
  double total = 0.0;             // sum_e R^e + lambda * sum_e penalty_e
};

struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;
  RiskReport report;
  std::vector<double> group_weights;  // GroupDRO only
};

using TrainObserver = std::function<void(const StepInfo&)>;

// Penalty of one domain batch: g^2 with g = d/dw mean CE(w * logits, y) at w = 1.
double irm_penalty(const Matrix& logits, std::span<const int> labels);
double irm_penalty(const nn::MlpModel& model, const Matrix& x, std::span<const int> labels);
// d penalty / d logits.
Matrix irm_penalty_grad(const Matrix& logits, std::span<const int> labels);

// q_e <- q_e exp(eta R^e), renormalised.
void update_group_weights(std::vector<double>& q, std::span<const double> risks, double eta);

// Penalty weight at a given epoch: min(1, lambda) during warmup, lambda afterwards.
double irm_lambda_at(const TrainConfig& cfg, std::size_t epoch) noexcept;

nn::MlpModel train_erm(const std::vector<data::DomainDataset>& train, const TrainConfig& cfg,
                       const TrainObserver& observer = {});
nn::MlpModel train_irm(const std::vector<data::DomainDataset>& train, const TrainConfig& cfg,
                       const TrainObserver& observer = {});
nn::MlpModel train_groupdro(const std::vector<data::DomainDataset>& train, const TrainConfig& cfg,
                            const TrainObserver& observer = {});

// ---------------------------------------------------------------------------
// Shared engine, also used by the student trainer.

struct LabeledGroup {
  Matrix x;
  std::vector<int> y;
};

struct BatchView {
  const Matrix& logits;
  std::span<const int> labels;
  std::span<const std::size_t> group;  // group index per row
  std::size_t n_groups;
  std::size_t epoch;
};

struct ObjectiveResult {
  double loss = 0.0;
  Matrix dlogits;
  double scale = 1.0;  // multiplier applied to the weight-decay term
  RiskReport report;
  std::vector<double> group_weights;
};

using Objective = std::function<ObjectiveResult(const BatchView&)>;

// Trains a freshly initialised model (seeded by cfg.seed) on the concatenation of
// the groups. Throws NumericError when the loss or a gradient becomes non-finite.
nn::MlpModel fit(const std::vector<LabeledGroup>& groups, const TrainConfig& cfg, const Objective& objective,
                 const TrainObserver& observer = {});

std::vector<LabeledGroup> to_groups(const std::vector<data::DomainDataset>& domains);

// Per-group mean cross-entropy and its logit gradient, row weights w_g / n_g.
ObjectiveResult weighted_group_risk(const BatchView& batch, std::span<const double> group_weights);

}  // namespace simprov::train

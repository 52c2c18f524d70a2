#pragma once

// Target-domain adaptation: MC-dropout pseudo-labels fused by majority vote,
// variance-based confidence, confidence-ranked selection, student distillation
// and the distance-from-chance gate that decides whether a student replaces the
// teacher. Nothing in here reads target-domain labels; the target is a bare
// feature matrix.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "simprov/base_trainers.hpp"
#include "simprov/domains.hpp"
#include "simprov/neural.hpp"

namespace simprov::adapt {

enum class ConfidenceMode {
  IndexVariance,  // kappa = -Var(votes) over class indices
  Disagreement,   // kappa = -(1 - mode count / m); ordering-free for k > 2
};

enum class AccuracyPooling {
  Pooled,      // accuracy over all training samples together
  DomainMean,  // mean of per-domain accuracies
};

struct PseudoLabelRecord {
  std::size_t sample_index = 0;
  std::vector<int> votes;
  int label = 0;
  double kappa = 0.0;
};

struct SelectedBatch {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

struct AdaptConfig {
  std::size_t confirmations = 10;  // m
  double dropout = 0.2;            // d used for MC passes
  double select_fraction = 0.5;    // q
  double alpha = 1.0;              // weight of the target pseudo-label loss
  std::size_t deepness = 10;       // D
  std::size_t patience = 3;        // R
  train::TrainConfig student;
  std::uint64_t seed = 0;
  ConfidenceMode confidence_mode = ConfidenceMode::IndexVariance;
  AccuracyPooling pooling = AccuracyPooling::Pooled;

  AdaptConfig();
  void validate() const;
  friend bool operator==(const AdaptConfig&, const AdaptConfig&) = default;
};

struct IterationRecord {
  std::size_t t = 0;
  double d_rand = 0.0;
  bool accepted = false;
  std::size_t n_selected = 0;
  double mean_kappa = 0.0;
  double train_acc = 0.0;
};

struct AdaptationState {
  std::size_t t = 0;
  nn::MlpModel teacher;
  double best_d_rand = 0.0;
  std::vector<IterationRecord> history;  // history[0] is the base model (t = 0)
};

struct AdaptResult {
  nn::MlpModel final_model;
  AdaptationState state;
};

// Called once per iteration (t = 0 included) with the candidate model of that
// iteration. Used by the harness to score candidates; never feeds back.
using IterationObserver = std::function<void(const IterationRecord&, const nn::MlpModel& candidate)>;

// Throws InputError for empty votes or a vote outside [0, k). Ties go to the smallest class.
int majority_vote(std::span<const int> votes, std::size_t k);
// Negative population variance of the votes as integers.
double confidence(std::span<const int> votes);
double disagreement_confidence(std::span<const int> votes);

std::vector<PseudoLabelRecord> mc_pseudo_label(const nn::MlpModel& model, const Matrix& x_target,
                                               std::size_t m, double dropout, std::uint64_t seed,
                                               ConfidenceMode mode = ConfidenceMode::IndexVariance);

// The ceil(q n) records with the greatest kappa, ties by ascending sample index.
SelectedBatch select_top(std::span<const PseudoLabelRecord> records, const Matrix& x_target, double q);

// Fresh student trained on alpha * CE(target pseudo-labels) + (1 - alpha) * CE(source labels).
// With alpha == 1 or no source only the target term is used; with alpha == 0 only the source.
nn::MlpModel distill_student(const SelectedBatch& selected, const std::vector<data::DomainDataset>* source,
                             double alpha, const train::TrainConfig& cfg, std::uint64_t seed);

double d_rand_from_accuracy(double accuracy, std::size_t k);
double training_accuracy(const nn::MlpModel& model, const std::vector<data::DomainDataset>& train,
                         AccuracyPooling pooling = AccuracyPooling::Pooled);
double d_rand(const nn::MlpModel& model, const std::vector<data::DomainDataset>& train, std::size_t k,
              AccuracyPooling pooling = AccuracyPooling::Pooled);

AdaptResult simprov_adapt(const nn::MlpModel& base, const std::vector<data::DomainDataset>& train,
                          const Matrix& x_target, const AdaptConfig& cfg,
                          const IterationObserver& observer = {});

}  // namespace simprov::adapt

#pragma once

// Minimal feed-forward classifier: explicit seedable dropout masks, analytic
// backpropagation and first-order optimizers. Everything above this layer is
// framework-free.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "simprov/matrix.hpp"

namespace simprov::nn {

enum class Activation { Relu, Tanh };

std::string_view to_string(Activation a) noexcept;
// Throws InputError for an unknown name.
Activation activation_from_string(std::string_view name);

struct Layer {
  Matrix weight;              // in x out
  std::vector<double> bias;   // out

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Representation layers and the classifier head live in one stack; the last
// layer emits n_classes logits. Dropout touches hidden activations only.
struct MlpModel {
  std::vector<Layer> layers;
  Activation activation = Activation::Relu;
  double dropout_rate = 0.0;
  std::size_t n_classes = 2;

  std::size_t input_dim() const noexcept { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t hidden_count() const noexcept { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t parameter_count() const noexcept;

  // Throws ShapeError if the layer chain is broken or the head width != n_classes,
  // InputError if dropout_rate is outside [0, 1) or n_classes < 2.
  void validate() const;

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {32, 32};
  std::size_t n_classes = 2;
  Activation activation = Activation::Relu;
  double dropout_rate = 0.0;
};

// Weights ~ U(+-sqrt(6 / (fan_in + fan_out))), biases zero.
MlpModel init_model(const Architecture& arch, std::uint64_t seed);

// One matrix per hidden layer, batch_rows x width, entries in {0, 1/(1-d)}.
struct DropoutMask {
  std::vector<Matrix> layers;
  std::uint64_t seed = 0;
};

DropoutMask sample_mask(const MlpModel& model, std::size_t batch_rows, std::uint64_t seed);

// Logits (n x k). Without a mask this is the evaluation-mode pass.
Matrix forward(const MlpModel& model, const Matrix& x, const DropoutMask* mask = nullptr);

// Activations kept for backpropagation.
struct ForwardTrace {
  std::vector<Matrix> inputs;      // input to each layer (masked for hidden layers)
  std::vector<Matrix> pre;         // pre-activation of each hidden layer
  Matrix logits;
};

ForwardTrace forward_trace(const MlpModel& model, const Matrix& x, const DropoutMask* mask = nullptr);

using Gradients = std::vector<Layer>;

Gradients zeros_like(const MlpModel& model);
bool all_finite(const Gradients& g) noexcept;
// acc += scale * g
void add_scaled(Gradients& acc, const Gradients& g, double scale);

// Parameter gradients given dLoss/dLogits for a traced batch.
Gradients backprop(const MlpModel& model, const ForwardTrace& trace, const DropoutMask* mask,
                   const Matrix& dlogits);

struct CrossEntropy {
  double mean_loss = 0.0;
  std::vector<double> per_sample;
};

Matrix softmax(const Matrix& logits);
// Throws InputError when a label is outside [0, k) or lengths differ.
CrossEntropy softmax_ce(const Matrix& logits, std::span<const int> labels);
// d(mean CE)/d logits = (softmax - onehot) / n
Matrix softmax_ce_grad(const Matrix& logits, std::span<const int> labels);

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

LossAndGrads backward(const MlpModel& model, const Matrix& x, std::span<const int> labels,
                      const DropoutMask* mask = nullptr);

std::vector<int> argmax_rows(const Matrix& logits);
std::vector<int> predict(const MlpModel& model, const Matrix& x);
double accuracy(const MlpModel& model, const Matrix& x, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind k) noexcept;
OptimizerKind optimizer_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.01;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::size_t step = 0;
  Gradients first;   // momentum / first moment
  Gradients second;  // Adam second moment
};

// Updates model parameters in place. Throws NumericError (leaving the model and
// state untouched) if any gradient entry is non-finite, ShapeError on mismatch.
void opt_step(MlpModel& model, const Gradients& grads, OptimizerState& state, const OptimizerConfig& cfg);

}  // namespace simprov::nn

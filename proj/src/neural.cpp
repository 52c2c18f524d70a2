#include "simprov/neural.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simprov/errors.hpp"
#include "simprov/rng.hpp"

namespace simprov::nn {

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "relu";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw InputError("unknown activation '" + std::string(name) + "'");
}

std::size_t MlpModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpModel::validate() const {
  if (layers.empty()) throw ShapeError("model has no layers");
  if (n_classes < 2) throw InputError("n_classes must be >= 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InputError("dropout_rate must lie in [0, 1)");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.cols()) {
      throw ShapeError("layer " + std::to_string(l) + ": bias length does not match weight columns");
    }
    if (l + 1 < layers.size() && layers[l].weight.cols() != layers[l + 1].weight.rows()) {
      throw ShapeError("layer " + std::to_string(l + 1) + ": input dim " +
                       std::to_string(layers[l + 1].weight.rows()) + " does not chain with output dim " +
                       std::to_string(layers[l].weight.cols()));
    }
  }
  if (layers.back().weight.cols() != n_classes) {
    throw ShapeError("final layer width " + std::to_string(layers.back().weight.cols()) +
                     " != n_classes " + std::to_string(n_classes));
  }
}

MlpModel init_model(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0) throw InputError("input_dim must be positive");
  MlpModel m;
  m.activation = arch.activation;
  m.dropout_rate = arch.dropout_rate;
  m.n_classes = arch.n_classes;

  std::vector<std::size_t> dims;
  dims.push_back(arch.input_dim);
  dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
  dims.push_back(arch.n_classes);

  Rng rng(derive_seed(seed, 0x1417));
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    if (out == 0) throw InputError("layer width must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer layer{Matrix(in, out), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    m.layers.push_back(std::move(layer));
  }
  m.validate();
  return m;
}

DropoutMask sample_mask(const MlpModel& model, std::size_t batch_rows, std::uint64_t seed) {
  const double d = model.dropout_rate;
  if (!(d >= 0.0 && d < 1.0)) throw InputError("dropout_rate must lie in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - d);
  DropoutMask mask;
  mask.seed = seed;
  Rng rng(derive_seed(seed, 0xD5));
  for (std::size_t l = 0; l < model.hidden_count(); ++l) {
    Matrix m(batch_rows, model.layers[l].weight.cols());
    for (double& v : m.data()) {
      if (d == 0.0) {
        v = 1.0;
      } else {
        v = rng.uniform() < d ? 0.0 : keep_scale;
      }
    }
    mask.layers.push_back(std::move(m));
  }
  return mask;
}

namespace {

void check_input(const MlpModel& model, const Matrix& x, const DropoutMask* mask) {
  if (model.layers.empty()) throw ShapeError("model has no layers");
  if (x.cols() != model.input_dim()) {
    throw ShapeError("layer 0: input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(model.input_dim()));
  }
  if (mask == nullptr) return;
  if (mask->layers.size() != model.hidden_count()) {
    throw ShapeError("dropout mask has " + std::to_string(mask->layers.size()) + " layers, model has " +
                     std::to_string(model.hidden_count()) + " hidden layers");
  }
  for (std::size_t l = 0; l < mask->layers.size(); ++l) {
    const Matrix& m = mask->layers[l];
    if (m.rows() != x.rows() || m.cols() != model.layers[l].weight.cols()) {
      throw ShapeError("layer " + std::to_string(l) + ": dropout mask is " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", activation is " + std::to_string(x.rows()) + "x" +
                       std::to_string(model.layers[l].weight.cols()));
    }
  }
}

Matrix affine(const Layer& layer, const Matrix& in, std::size_t index) {
  if (in.cols() != layer.weight.rows()) {
    throw ShapeError("layer " + std::to_string(index) + ": input dim " + std::to_string(in.cols()) +
                     " != weight rows " + std::to_string(layer.weight.rows()));
  }
  Matrix z = matmul(in, layer.weight);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
  }
  return z;
}

double activate(Activation a, double z) noexcept {
  return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the pre-activation.
double activate_grad(Activation a, double z) noexcept {
  if (a == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

}  // namespace

ForwardTrace forward_trace(const MlpModel& model, const Matrix& x, const DropoutMask* mask) {
  check_input(model, x, mask);
  ForwardTrace trace;
  trace.inputs.reserve(model.layers.size());
  trace.inputs.push_back(x);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Matrix z = affine(model.layers[l], trace.inputs.back(), l);
    if (l + 1 == model.layers.size()) {
      trace.logits = std::move(z);
      break;
    }
    Matrix h(z.rows(), z.cols());
    auto zd = z.data();
    auto hd = h.data();
    for (std::size_t i = 0; i < zd.size(); ++i) hd[i] = activate(model.activation, zd[i]);
    if (mask != nullptr) {
      auto md = mask->layers[l].data();
      for (std::size_t i = 0; i < hd.size(); ++i) hd[i] *= md[i];
    }
    trace.pre.push_back(std::move(z));
    trace.inputs.push_back(std::move(h));
  }
  return trace;
}

Matrix forward(const MlpModel& model, const Matrix& x, const DropoutMask* mask) {
  check_input(model, x, mask);
  Matrix a = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Matrix z = affine(model.layers[l], a, l);
    if (l + 1 == model.layers.size()) return z;
    auto zd = z.data();
    for (double& v : zd) v = activate(model.activation, v);
    if (mask != nullptr) {
      auto md = mask->layers[l].data();
      for (std::size_t i = 0; i < zd.size(); ++i) zd[i] *= md[i];
    }
    a = std::move(z);
  }
  return a;
}

Gradients zeros_like(const MlpModel& model) {
  Gradients g;
  g.reserve(model.layers.size());
  for (const auto& l : model.layers) {
    g.push_back(Layer{Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
  }
  return g;
}

bool all_finite(const Gradients& g) noexcept {
  for (const auto& l : g) {
    if (!l.weight.all_finite()) return false;
    for (double b : l.bias)
      if (!std::isfinite(b)) return false;
  }
  return true;
}

void add_scaled(Gradients& acc, const Gradients& g, double scale) {
  if (acc.size() != g.size()) throw ShapeError("gradient layer count mismatch");
  for (std::size_t l = 0; l < g.size(); ++l) {
    auto a = acc[l].weight.data();
    auto b = g[l].weight.data();
    if (a.size() != b.size() || acc[l].bias.size() != g[l].bias.size()) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
    for (std::size_t i = 0; i < g[l].bias.size(); ++i) acc[l].bias[i] += scale * g[l].bias[i];
  }
}

Gradients backprop(const MlpModel& model, const ForwardTrace& trace, const DropoutMask* mask,
                   const Matrix& dlogits) {
  const std::size_t L = model.layers.size();
  if (dlogits.rows() != trace.logits.rows() || dlogits.cols() != trace.logits.cols()) {
    throw ShapeError("dlogits shape does not match traced logits");
  }
  Gradients grads(L);
  Matrix dz = dlogits;
  for (std::size_t l = L; l-- > 0;) {
    const Matrix& a = trace.inputs[l];
    grads[l].weight = matmul_tn(a, dz);
    grads[l].bias.assign(dz.cols(), 0.0);
    for (std::size_t i = 0; i < dz.rows(); ++i) {
      auto r = dz.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) grads[l].bias[j] += r[j];
    }
    if (l == 0) break;
    Matrix da = matmul_nt(dz, model.layers[l].weight);
    const Matrix& pre = trace.pre[l - 1];
    auto dad = da.data();
    auto pd = pre.data();
    for (std::size_t i = 0; i < dad.size(); ++i) dad[i] *= activate_grad(model.activation, pd[i]);
    if (mask != nullptr) {
      auto md = mask->layers[l - 1].data();
      for (std::size_t i = 0; i < dad.size(); ++i) dad[i] *= md[i];
    }
    dz = std::move(da);
  }
  return grads;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    auto out = p.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      out[c] = std::exp(z[c] - zmax);
      s += out[c];
    }
    for (double& v : out) v /= s;
  }
  return p;
}

namespace {

void check_labels(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw InputError("label count " + std::to_string(labels.size()) + " != batch rows " +
                     std::to_string(logits.rows()));
  }
  const auto k = static_cast<int>(logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw InputError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

CrossEntropy softmax_ce(const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  CrossEntropy out;
  out.per_sample.resize(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - zmax);
    const double loss = zmax + std::log(s) - z[static_cast<std::size_t>(labels[i])];
    out.per_sample[i] = loss;
    total += loss;
  }
  out.mean_loss = labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
  return out;
}

Matrix softmax_ce_grad(const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  Matrix g = softmax(logits);
  const double inv_n = labels.empty() ? 0.0 : 1.0 / static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto r = g.row(i);
    r[static_cast<std::size_t>(labels[i])] -= 1.0;
    for (double& v : r) v *= inv_n;
  }
  return g;
}

LossAndGrads backward(const MlpModel& model, const Matrix& x, std::span<const int> labels,
                      const DropoutMask* mask) {
  if (labels.size() != x.rows()) throw InputError("label count does not match batch rows");
  ForwardTrace trace = forward_trace(model, x, mask);
  LossAndGrads out;
  out.loss = softmax_ce(trace.logits, labels).mean_loss;
  out.grads = backprop(model, trace, mask, softmax_ce_grad(trace.logits, labels));
  return out;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    out[i] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

std::vector<int> predict(const MlpModel& model, const Matrix& x) { return argmax_rows(forward(model, x)); }

double accuracy(const MlpModel& model, const Matrix& x, std::span<const int> labels) {
  if (labels.size() != x.rows()) throw InputError("label count does not match batch rows");
  if (labels.empty()) return 0.0;
  const auto pred = predict(model, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace simprov::nn

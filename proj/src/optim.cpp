#include <cmath>
#include <string>

#include "simprov/errors.hpp"
#include "simprov/neural.hpp"

namespace simprov::nn {

std::string_view to_string(OptimizerKind k) noexcept { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw InputError("unknown optimizer '" + std::string(name) + "'");
}

namespace {

template <class Fn>
void for_each_param(MlpModel& model, const Gradients& grads, Gradients& s1, Gradients& s2, Fn&& fn) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto w = model.layers[l].weight.data();
    auto g = grads[l].weight.data();
    auto m = s1[l].weight.data();
    auto v = s2[l].weight.data();
    for (std::size_t i = 0; i < w.size(); ++i) fn(w[i], g[i], m[i], v[i]);
    auto& b = model.layers[l].bias;
    for (std::size_t i = 0; i < b.size(); ++i) fn(b[i], grads[l].bias[i], s1[l].bias[i], s2[l].bias[i]);
  }
}

}  // namespace

void opt_step(MlpModel& model, const Gradients& grads, OptimizerState& state, const OptimizerConfig& cfg) {
  if (grads.size() != model.layers.size()) throw ShapeError("gradient layer count does not match model");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (grads[l].weight.rows() != model.layers[l].weight.rows() ||
        grads[l].weight.cols() != model.layers[l].weight.cols() ||
        grads[l].bias.size() != model.layers[l].bias.size()) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
    }
  }
  if (!all_finite(grads)) throw NumericError("non-finite gradient entry; step aborted");
  if (state.first.size() != model.layers.size()) {
    state.first = zeros_like(model);
    state.second = zeros_like(model);
    state.step = 0;
  }
  ++state.step;

  if (cfg.kind == OptimizerKind::Sgd) {
    const double lr = cfg.lr;
    const double mu = cfg.momentum;
    for_each_param(model, grads, state.first, state.second, [&](double& p, double g, double& m, double&) {
      if (mu == 0.0) {
        p -= lr * g;
      } else {
        m = mu * m + g;
        p -= lr * m;
      }
    });
    return;
  }

  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double lr = cfg.lr;
  const double eps = cfg.eps;
  for_each_param(model, grads, state.first, state.second, [&](double& p, double g, double& m, double& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
  });
}

}  // namespace simprov::nn

#pragma once

// Reference implementations used only by the tests. They share no code with the
// library beyond the model/matrix containers, so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "simprov/neural.hpp"

namespace oracle {

using simprov::Matrix;
using simprov::nn::MlpModel;

// Loop-only forward pass; mask entries multiply hidden activations.
inline std::vector<std::vector<double>> naive_forward(const MlpModel& m, const Matrix& x,
                                                const simprov::nn::DropoutMask* mask = nullptr) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> h(x.row(r).begin(), x.row(r).end());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const auto& L = m.layers[l];
      std::vector<double> next(L.weight.cols());
      for (std::size_t j = 0; j < next.size(); ++j) {
        double s = L.bias[j];
        for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * L.weight(i, j);
        next[j] = s;
      }
      if (l + 1 < m.layers.size()) {
        for (std::size_t j = 0; j < next.size(); ++j) {
          double a = m.activation == simprov::nn::Activation::Relu ? (next[j] > 0 ? next[j] : 0.0) : std::tanh(next[j]);
          if (mask) a *= mask->layers[l](r, j);
          next[j] = a;
        }
      }
      h = std::move(next);
    }
    out.push_back(std::move(h));
  }
  return out;
}

inline double ce_row(const std::vector<double>& z, int y, double w = 1.0) {
  double mx = -INFINITY;
  for (double v : z) mx = std::max(mx, w * v);
  double s = 0.0;
  for (double v : z) s += std::exp(w * v - mx);
  return -(w * z[static_cast<std::size_t>(y)] - mx - std::log(s));
}

inline double mean_ce(const std::vector<std::vector<double>>& logits, std::span<const int> y, double w = 1.0) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += ce_row(logits[i], y[i], w);
  return s / static_cast<double>(logits.size());
}

inline double loss(const MlpModel& m, const Matrix& x, std::span<const int> y,
                   const simprov::nn::DropoutMask* mask = nullptr) {
  return mean_ce(naive_forward(m, x, mask), y);
}

// Central finite differences over every parameter, in layer order (weights then bias).
inline std::vector<double> fd_gradient(MlpModel m, const Matrix& x, std::span<const int> y,
                                       const simprov::nn::DropoutMask* mask = nullptr, double eps = 1e-5) {
  std::vector<double> g;
  auto probe = [&](double& p) {
    const double keep = p;
    p = keep + eps;
    const double up = loss(m, x, y, mask);
    p = keep - eps;
    const double down = loss(m, x, y, mask);
    p = keep;
    g.push_back((up - down) / (2 * eps));
  };
  for (auto& L : m.layers) {
    for (double& w : L.weight.data()) probe(w);
    for (double& b : L.bias) probe(b);
  }
  return g;
}

inline std::vector<double> flatten(const simprov::nn::Gradients& g) {
  std::vector<double> out;
  for (const auto& L : g) {
    out.insert(out.end(), L.weight.data().begin(), L.weight.data().end());
    out.insert(out.end(), L.bias.begin(), L.bias.end());
  }
  return out;
}

// |a - n| <= 1e-7, or relative error below tol.
inline bool grad_close(double a, double n, double tol = 1e-4) {
  const double diff = std::abs(a - n);
  if (diff <= 1e-7) return true;
  return diff / std::max(std::abs(a), std::abs(n)) < tol;
}

// Squared finite-difference derivative of w -> mean CE(w * logits, y) at w = 1.
inline double irm_penalty_fd(const Matrix& logits, std::span<const int> y, double eps = 1e-5) {
  std::vector<std::vector<double>> z;
  for (std::size_t r = 0; r < logits.rows(); ++r) z.emplace_back(logits.row(r).begin(), logits.row(r).end());
  const double g = (mean_ce(z, y, 1 + eps) - mean_ce(z, y, 1 - eps)) / (2 * eps);
  return g * g;
}

inline int brute_vote(std::span<const int> votes, std::size_t k) {
  std::vector<std::size_t> count(k, 0);
  for (int v : votes) ++count[static_cast<std::size_t>(v)];
  int best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (count[c] > count[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

inline double population_variance(std::span<const int> v) {
  double mean = 0.0;
  for (int x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (int x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) ma += ra[i], mb += rb[i];
  ma /= ra.size();
  mb /= rb.size();
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return (da > 0 && db > 0) ? num / std::sqrt(da * db) : 0.0;
}

}  // namespace oracle

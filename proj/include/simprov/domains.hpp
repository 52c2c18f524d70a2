#pragma once

// Synthetic multi-domain benchmark with one invariant channel and one spurious
// ("color") channel whose agreement with the label changes per domain.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simprov/matrix.hpp"

namespace simprov::data {

struct DomainSpec {
  std::string domain_id = "domain";
  std::size_t n_samples = 2000;
  double spur_flip_prob = 0.1;  // P(spurious channel disagrees with the label)
  double label_noise = 0.25;    // P(label disagrees with the latent digit class)
  std::size_t d_inv = 5;
  std::size_t d_spur = 5;
  double signal_mean = 1.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;

  // Throws InputError when a probability leaves [0, 1], a dim is zero, sigma < 0,
  // or the id is empty or contains a comma or newline.
  void validate() const;
  std::size_t feature_dim() const noexcept { return d_inv + d_spur; }

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct Sample {
  std::vector<double> x;
  int y = 0;
  std::string domain_id;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DomainDataset {
  DomainSpec spec;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t feature_dim() const noexcept;
  Matrix features() const;
  std::vector<int> labels() const;
};

// Per sample: z ~ B(0.5); y = z xor B(eta); c = y xor B(p_e);
// x_inv = (2z-1) mu + N(0, sigma^2), x_spur = (2c-1) mu + N(0, sigma^2).
DomainDataset generate_domain(const DomainSpec& spec);

// Same as generate_domain but also returns the latent z per sample (test oracles only).
DomainDataset generate_domain(const DomainSpec& spec, std::vector<int>* latent_digit);

struct BenchmarkSpec {
  std::vector<DomainSpec> train;
  DomainSpec target;
  DomainSpec target_eval;
};

struct Benchmark {
  std::vector<DomainDataset> train;
  DomainDataset target;
  DomainDataset target_eval;
};

// Two training domains (p_e 0.1 and 0.2), target p_e 0.9, eta 0.25 everywhere.
// Per-domain seeds are derived from master_seed; target_eval is an independent
// same-spec draw used only for scoring.
BenchmarkSpec default_benchmark_spec(std::uint64_t master_seed);
Benchmark generate_benchmark(const BenchmarkSpec& spec);
Benchmark default_benchmark(std::uint64_t master_seed);

// CSV with '#' metadata lines carrying the spec, header domain_id,y,x_0..x_{D-1},
// reals written with 17 significant digits.
void save_csv(const DomainDataset& ds, const std::filesystem::path& path);
std::string to_csv(const DomainDataset& ds);
// Throws ParseError citing the 1-based line number of the first bad line.
DomainDataset load_csv(const std::filesystem::path& path);
DomainDataset parse_csv(const std::string& text);

// Unlabeled view of a dataset file: feature matrix only, the label column is skipped.
Matrix load_features_csv(const std::filesystem::path& path);

}  // namespace simprov::data

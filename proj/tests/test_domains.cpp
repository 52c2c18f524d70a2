#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "simprov/domains.hpp"
#include "simprov/errors.hpp"

using namespace simprov;
using namespace simprov::data;

namespace {

DomainSpec spec_with(double p_e, double eta, double sigma, std::size_t n, std::uint64_t seed) {
  DomainSpec s;
  s.spur_flip_prob = p_e;
  s.label_noise = eta;
  s.noise_sigma = sigma;
  s.n_samples = n;
  s.seed = seed;
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("simprov_test_domains_" + name);
}

}  // namespace

TEST_CASE("noise-free construction: spurious signs equal 2y-1") {
  const auto ds = generate_domain(spec_with(0.0, 0.0, 0.0, 500, 1));
  for (const auto& s : ds.samples) {
    for (std::size_t d = ds.spec.d_inv; d < ds.spec.feature_dim(); ++d) {
      CHECK(s.x[d] == (2.0 * s.y - 1.0) * ds.spec.signal_mean);
    }
  }
}

TEST_CASE("spurious agreement frequency tracks 1 - p_e") {
  const auto ds = generate_domain(spec_with(0.1, 0.25, 0.0, 100000, 2));
  const std::size_t first_spur = ds.spec.d_inv;
  std::size_t agree = 0;
  double corr = 0.0;
  for (const auto& s : ds.samples) {
    double m = 0;
    for (std::size_t d = first_spur; d < ds.spec.feature_dim(); ++d) m += s.x[d];
    const int c = m > 0;
    agree += c == s.y;
    corr += (2.0 * c - 1) * (2.0 * s.y - 1);
  }
  const double p = static_cast<double>(agree) / 100000;
  CHECK(p >= 0.895);
  CHECK(p <= 0.905);
  CHECK(std::abs(corr / 100000 - 0.8) <= 0.01);
}

TEST_CASE("a reader of the latent digit scores 1 - eta") {
  std::vector<int> z;
  const auto ds = generate_domain(spec_with(0.5, 0.25, 0.0, 100000, 3), &z);
  REQUIRE(z.size() == ds.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    hit += z[i] == ds.samples[i].y;
    CHECK(ds.samples[i].x[0] == (2.0 * z[i] - 1.0) * ds.spec.signal_mean);
  }
  CHECK(std::abs(static_cast<double>(hit) / 100000 - 0.75) <= 0.005);
}

TEST_CASE("generation is a pure function of the domain spec") {
  const DomainSpec s = spec_with(0.2, 0.25, 0.7, 300, 42);
  const auto a = generate_domain(s), b = generate_domain(s);
  CHECK(a.samples == b.samples);
  CHECK(to_csv(a) == to_csv(b));
  DomainSpec t = s;
  t.seed = 43;
  CHECK_FALSE(generate_domain(t).samples == a.samples);
  for (const auto& smp : a.samples) {
    CHECK(smp.domain_id == s.domain_id);
    CHECK(smp.x.size() == s.feature_dim());
  }
}

TEST_CASE("default benchmark layout") {
  const auto spec = default_benchmark_spec(0);
  REQUIRE(spec.train.size() == 2);
  CHECK(spec.train[0].spur_flip_prob == 0.1);
  CHECK(spec.train[1].spur_flip_prob == 0.2);
  CHECK(spec.target.spur_flip_prob == 0.9);
  CHECK(spec.target_eval.spur_flip_prob == 0.9);
  for (const auto* s : {&spec.train[0], &spec.train[1], &spec.target, &spec.target_eval}) {
    CHECK(s->label_noise == 0.25);
  }
  CHECK(spec.target.seed != spec.target_eval.seed);

  const auto bench = generate_benchmark(spec);
  // Correlation of the spurious channel with the label: about 0.9, 0.8 and 0.1.
  auto color_agreement = [](const DomainDataset& ds) {
    std::size_t agree = 0;
    for (const auto& s : ds.samples) {
      double m = 0;
      for (std::size_t d = ds.spec.d_inv; d < ds.spec.feature_dim(); ++d) m += s.x[d];
      agree += (m > 0) == (s.y == 1);
    }
    return static_cast<double>(agree) / static_cast<double>(ds.size());
  };
  CHECK(std::abs(color_agreement(bench.train[0]) - 0.9) < 0.03);
  CHECK(std::abs(color_agreement(bench.train[1]) - 0.8) < 0.03);
  CHECK(std::abs(color_agreement(bench.target) - 0.1) < 0.03);

  // target_eval is its own draw: no feature row is shared with the target split.
  std::set<std::vector<double>> rows;
  for (const auto& s : bench.target.samples) rows.insert(s.x);
  for (const auto& s : bench.target_eval.samples) CHECK(rows.count(s.x) == 0);
}

TEST_CASE("same master seed regenerates identical bytes") {
  const auto a = default_benchmark(5), b = default_benchmark(5);
  for (std::size_t e = 0; e < a.train.size(); ++e) CHECK(to_csv(a.train[e]) == to_csv(b.train[e]));
  CHECK(to_csv(a.target) == to_csv(b.target));
  CHECK(to_csv(a.target_eval) == to_csv(b.target_eval));
  CHECK(to_csv(default_benchmark(6).target) != to_csv(a.target));
}

TEST_CASE("csv round trip") {
  const auto ds = generate_domain(spec_with(0.2, 0.25, 0.7, 50, 9));
  const auto path = temp_path("rt.csv");
  save_csv(ds, path);
  const auto back = load_csv(path);
  CHECK(back.samples == ds.samples);
  CHECK(back.spec == ds.spec);
  const Matrix x = load_features_csv(path);
  CHECK(x == ds.features());
  std::filesystem::remove(path);
}

TEST_CASE("empty dataset writes a header-only file") {
  DomainSpec s = spec_with(0.1, 0.25, 0.7, 0, 1);
  const auto ds = generate_domain(s);
  CHECK(ds.size() == 0);
  const std::string text = to_csv(ds);
  const auto back = parse_csv(text);
  CHECK(back.size() == 0);
  CHECK(text.find("domain_id,y,x_0") != std::string::npos);
}

TEST_CASE("malformed rows cite their line number") {
  const auto ds = generate_domain(spec_with(0.1, 0.25, 0.7, 30, 4));
  std::istringstream in(to_csv(ds));
  std::string line, out;
  for (int n = 1; std::getline(in, line); ++n) {
    if (n == 17) line += ",1.0";
    out += line + "\n";
  }
  try {
    parse_csv(out);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 17") != std::string::npos);
  }

  std::string bad_label = to_csv(ds);
  const auto pos = bad_label.find("\ndomain,") + 8;
  bad_label[pos] = '7';
  CHECK_THROWS_AS(parse_csv(bad_label), ParseError);
  CHECK_THROWS_AS(parse_csv("not a dataset\n"), ParseError);
  CHECK_THROWS_AS(load_csv(temp_path("missing.csv")), IoError);
}

TEST_CASE("domain spec validation") {
  DomainSpec s;
  s.spur_flip_prob = 1.5;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = DomainSpec{};
  s.d_inv = 0;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = DomainSpec{};
  s.noise_sigma = -1;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = DomainSpec{};
  s.domain_id = "a,b";
  CHECK_THROWS_AS(s.validate(), InputError);
}

#include "simprov/domains.hpp"

#include <charconv>
#include <cmath>
#include <type_traits>
#include <fstream>
#include <sstream>
#include <string_view>
#include <system_error>

#include "simprov/errors.hpp"
#include "simprov/rng.hpp"

namespace simprov::data {

void DomainSpec::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (domain_id.empty()) throw InputError("domain_id must be non-empty");
  if (domain_id.find_first_of(",\n\r") != std::string::npos) {
    throw InputError("domain_id must not contain commas or newlines");
  }
  if (!prob(spur_flip_prob)) throw InputError("spur_flip_prob must lie in [0, 1]");
  if (!prob(label_noise)) throw InputError("label_noise must lie in [0, 1]");
  if (d_inv < 1 || d_spur < 1) throw InputError("d_inv and d_spur must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InputError("noise_sigma must be >= 0");
  if (!std::isfinite(signal_mean)) throw InputError("signal_mean must be finite");
}

std::size_t DomainDataset::feature_dim() const noexcept {
  return samples.empty() ? spec.feature_dim() : samples.front().x.size();
}

Matrix DomainDataset::features() const {
  Matrix m(samples.size(), feature_dim());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto r = m.row(i);
    std::copy(samples[i].x.begin(), samples[i].x.end(), r.begin());
  }
  return m;
}

std::vector<int> DomainDataset::labels() const {
  std::vector<int> y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) y[i] = samples[i].y;
  return y;
}

DomainDataset generate_domain(const DomainSpec& spec, std::vector<int>* latent_digit) {
  spec.validate();
  DomainDataset ds;
  ds.spec = spec;
  ds.samples.reserve(spec.n_samples);
  if (latent_digit != nullptr) latent_digit->assign(spec.n_samples, 0);

  Rng rng(derive_seed(spec.seed, 0xDA7A));
  const double mu = spec.signal_mean;
  const double sigma = spec.noise_sigma;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const int z = rng.bernoulli(0.5) ? 1 : 0;
    const int y = z ^ (rng.bernoulli(spec.label_noise) ? 1 : 0);
    const int c = y ^ (rng.bernoulli(spec.spur_flip_prob) ? 1 : 0);
    Sample s;
    s.y = y;
    s.domain_id = spec.domain_id;
    s.x.resize(spec.feature_dim());
    for (std::size_t j = 0; j < spec.d_inv; ++j) s.x[j] = (2.0 * z - 1.0) * mu + sigma * rng.normal();
    for (std::size_t j = 0; j < spec.d_spur; ++j) {
      s.x[spec.d_inv + j] = (2.0 * c - 1.0) * mu + sigma * rng.normal();
    }
    ds.samples.push_back(std::move(s));
    if (latent_digit != nullptr) (*latent_digit)[i] = z;
  }
  return ds;
}

DomainDataset generate_domain(const DomainSpec& spec) { return generate_domain(spec, nullptr); }

BenchmarkSpec default_benchmark_spec(std::uint64_t master_seed) {
  BenchmarkSpec b;
  const double train_flip[] = {0.1, 0.2};
  for (std::size_t e = 0; e < 2; ++e) {
    DomainSpec s;
    s.domain_id = "train_" + std::to_string(e);
    s.spur_flip_prob = train_flip[e];
    s.seed = derive_seed(master_seed, 100 + e);
    b.train.push_back(s);
  }
  b.target.domain_id = "target";
  b.target.spur_flip_prob = 0.9;
  b.target.seed = derive_seed(master_seed, 200);
  b.target_eval = b.target;
  b.target_eval.domain_id = "target_eval";
  b.target_eval.seed = derive_seed(master_seed, 201);
  return b;
}

Benchmark generate_benchmark(const BenchmarkSpec& spec) {
  if (spec.train.empty()) throw InputError("benchmark needs at least one training domain");
  Benchmark b;
  for (const auto& s : spec.train) b.train.push_back(generate_domain(s));
  b.target = generate_domain(spec.target);
  b.target_eval = generate_domain(spec.target_eval);
  const std::size_t dim = spec.target.feature_dim();
  for (const auto& s : spec.train) {
    if (s.feature_dim() != dim) throw InputError("benchmark domains disagree on feature dimension");
  }
  if (spec.target_eval.feature_dim() != dim) throw InputError("target_eval feature dimension differs");
  return b;
}

Benchmark default_benchmark(std::uint64_t master_seed) {
  return generate_benchmark(default_benchmark_spec(master_seed));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void append_real(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

template <class T>
void append_meta(std::string& out, std::string_view key, const T& value) {
  out += "# ";
  out += key;
  out += '=';
  if constexpr (std::is_same_v<T, double>) {
    append_real(out, value);
  } else if constexpr (std::is_same_v<T, std::string>) {
    out += value;
  } else {
    out += std::to_string(value);
  }
  out += '\n';
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

double parse_real(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(line, "bad real '" + std::string(s) + "'");
  return v;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(line, "bad integer '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

constexpr std::string_view kMagic = "# simprov-dataset v1";

}  // namespace

std::string to_csv(const DomainDataset& ds) {
  const auto& s = ds.spec;
  std::string out;
  out += kMagic;
  out += '\n';
  append_meta(out, "domain_id", s.domain_id);
  append_meta(out, "n_samples", ds.samples.size());
  append_meta(out, "spur_flip_prob", s.spur_flip_prob);
  append_meta(out, "label_noise", s.label_noise);
  append_meta(out, "d_inv", s.d_inv);
  append_meta(out, "d_spur", s.d_spur);
  append_meta(out, "signal_mean", s.signal_mean);
  append_meta(out, "noise_sigma", s.noise_sigma);
  append_meta(out, "seed", s.seed);

  const std::size_t dim = ds.feature_dim();
  out += "domain_id,y";
  for (std::size_t j = 0; j < dim; ++j) out += ",x_" + std::to_string(j);
  out += '\n';
  for (const auto& smp : ds.samples) {
    out += smp.domain_id;
    out += ',';
    out += std::to_string(smp.y);
    for (double v : smp.x) {
      out += ',';
      append_real(out, v);
    }
    out += '\n';
  }
  return out;
}

void save_csv(const DomainDataset& ds, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << to_csv(ds);
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

struct ParsedCsv {
  DomainDataset ds;
  Matrix features;
};

ParsedCsv parse_impl(const std::string& text, bool want_labels) {
  ParsedCsv out;
  DomainSpec& spec = out.ds.spec;
  std::size_t declared_rows = 0;
  bool have_declared = false;
  std::size_t dim = 0;
  bool header_seen = false;
  std::vector<double> flat;
  std::size_t rows = 0;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    if (line.front() == '#') {
      if (header_seen) fail(line_no, "metadata line after header");
      if (line_no == 1) {
        if (line != kMagic) fail(line_no, "missing dataset magic line");
        continue;
      }
      auto body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) fail(line_no, "metadata line without '='");
      const auto key = body.substr(0, eq);
      const auto val = body.substr(eq + 1);
      if (key == "domain_id") spec.domain_id = std::string(val);
      else if (key == "n_samples") { declared_rows = parse_int<std::size_t>(val, line_no); have_declared = true; }
      else if (key == "spur_flip_prob") spec.spur_flip_prob = parse_real(val, line_no);
      else if (key == "label_noise") spec.label_noise = parse_real(val, line_no);
      else if (key == "d_inv") spec.d_inv = parse_int<std::size_t>(val, line_no);
      else if (key == "d_spur") spec.d_spur = parse_int<std::size_t>(val, line_no);
      else if (key == "signal_mean") spec.signal_mean = parse_real(val, line_no);
      else if (key == "noise_sigma") spec.noise_sigma = parse_real(val, line_no);
      else if (key == "seed") spec.seed = parse_int<std::uint64_t>(val, line_no);
      else fail(line_no, "unknown metadata key '" + std::string(key) + "'");
      continue;
    }

    if (line_no == 1) fail(line_no, "missing dataset magic line");
    const auto fields = split(line, ',');
    if (!header_seen) {
      if (fields.size() < 3 || fields[0] != "domain_id" || fields[1] != "y") {
        fail(line_no, "expected header 'domain_id,y,x_0,...'");
      }
      dim = fields.size() - 2;
      for (std::size_t j = 0; j < dim; ++j) {
        if (fields[j + 2] != "x_" + std::to_string(j)) fail(line_no, "bad header column '" + std::string(fields[j + 2]) + "'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != dim + 2) {
      fail(line_no, "expected " + std::to_string(dim + 2) + " columns, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) fail(line_no, "empty domain_id");
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = parse_real(fields[j + 2], line_no);
      if (!std::isfinite(v)) fail(line_no, "non-finite feature");
      flat.push_back(v);
    }
    if (want_labels) {
      Sample s;
      s.domain_id = std::string(fields[0]);
      s.y = parse_int<int>(fields[1], line_no);
      if (s.y != 0 && s.y != 1) fail(line_no, "label must be 0 or 1");
      s.x.assign(flat.end() - static_cast<std::ptrdiff_t>(dim), flat.end());
      out.ds.samples.push_back(std::move(s));
    }
    ++rows;
  }
  if (!header_seen) fail(line_no + 1, "missing header line");
  if (have_declared && declared_rows != rows) {
    fail(line_no, "metadata declares " + std::to_string(declared_rows) + " samples, file has " + std::to_string(rows));
  }
  spec.n_samples = rows;
  out.features = Matrix(rows, dim, std::move(flat));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

DomainDataset parse_csv(const std::string& text) { return parse_impl(text, true).ds; }

DomainDataset load_csv(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

Matrix load_features_csv(const std::filesystem::path& path) {
  return std::move(parse_impl(read_file(path), false).features);
}

}  // namespace simprov::data

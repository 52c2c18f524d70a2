#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "simprov/errors.hpp"
#include "simprov/harness.hpp"

// Text layout, one directive per line:
//   simprov-checkpoint <version>
//   activation <relu|tanh>
//   dropout <hexfloat>
//   n_classes <int>
//   config_hash <token|->
//   seeds <count> <u64>...
//   layers <count>
//   layer <in> <out>
//   w <hexfloat x in*out, row-major>
//   b <hexfloat x out>
//   end
// Hex floats make the round trip exact.

namespace simprov::harness {

namespace {

void put_real(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, " %a", v);
  out += buf;
}

class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("checkpoint byte " + std::to_string(pos_) + ": " + what);
  }

  std::string_view token() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) fail("unexpected end of file");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view word) {
    const std::size_t at = skip_ws();
    if (token() != word) {
      pos_ = at;
      fail("expected '" + std::string(word) + "'");
    }
  }

  std::uint64_t integer() {
    const std::size_t at = skip_ws();
    const std::string tok(token());
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (tok.empty() || tok[0] == '-' || end != tok.c_str() + tok.size() || errno != 0) {
      pos_ = at;
      fail("expected an integer, got '" + tok + "'");
    }
    return v;
  }

  double real() {
    const std::size_t at = skip_ws();
    const std::string tok(token());
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size()) {
      pos_ = at;
      fail("expected a real number, got '" + tok + "'");
    }
    return v;
  }

 private:
  std::size_t skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_to_string(const nn::MlpModel& model, const CheckpointMeta& meta) {
  model.validate();
  std::string out = "simprov-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  out += "activation " + std::string(nn::to_string(model.activation)) + "\n";
  out += "dropout";
  put_real(out, model.dropout_rate);
  out += "\nn_classes " + std::to_string(model.n_classes) + "\n";
  out += "config_hash " + (meta.config_hash.empty() ? std::string("-") : meta.config_hash) + "\n";
  out += "seeds " + std::to_string(meta.seeds.size());
  for (auto s : meta.seeds) out += " " + std::to_string(s);
  out += "\nlayers " + std::to_string(model.layers.size()) + "\n";
  for (const auto& l : model.layers) {
    out += "layer " + std::to_string(l.weight.rows()) + " " + std::to_string(l.weight.cols()) + "\nw";
    for (double v : l.weight.data()) put_real(out, v);
    out += "\nb";
    for (double v : l.bias) put_real(out, v);
    out += "\n";
  }
  out += "end\n";
  return out;
}

nn::MlpModel parse_checkpoint(std::string_view text, CheckpointMeta* meta) {
  Scanner s(text);
  s.expect("simprov-checkpoint");
  const std::uint64_t version = s.integer();
  if (version != static_cast<std::uint64_t>(kCheckpointVersion)) {
    throw SchemaError("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  nn::MlpModel m;
  s.expect("activation");
  try {
    m.activation = nn::activation_from_string(s.token());
  } catch (const InputError& e) {
    s.fail(e.what());
  }
  s.expect("dropout");
  m.dropout_rate = s.real();
  s.expect("n_classes");
  m.n_classes = s.integer();
  s.expect("config_hash");
  CheckpointMeta md;
  md.config_hash = std::string(s.token());
  if (md.config_hash == "-") md.config_hash.clear();
  s.expect("seeds");
  const std::uint64_t n_seeds = s.integer();
  if (n_seeds > text.size()) s.fail("seed count is implausible");
  for (std::uint64_t i = 0; i < n_seeds; ++i) md.seeds.push_back(s.integer());
  s.expect("layers");
  const std::uint64_t n_layers = s.integer();
  if (n_layers == 0 || n_layers > text.size()) s.fail("layer count is implausible");
  for (std::uint64_t li = 0; li < n_layers; ++li) {
    s.expect("layer");
    const std::uint64_t in = s.integer();
    const std::uint64_t out = s.integer();
    if (in == 0 || out == 0 || in * out > text.size()) s.fail("layer shape is implausible");
    s.expect("w");
    std::vector<double> w(in * out);
    for (auto& v : w) v = s.real();
    s.expect("b");
    std::vector<double> b(out);
    for (auto& v : b) v = s.real();
    m.layers.push_back(nn::Layer{Matrix(in, out, std::move(w)), std::move(b)});
  }
  s.expect("end");
  try {
    m.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint describes an invalid model: ") + e.what());
  }
  if (meta) *meta = std::move(md);
  return m;
}

void save_checkpoint(const nn::MlpModel& model, const std::filesystem::path& path, const CheckpointMeta& meta) {
  const std::string text = checkpoint_to_string(model, meta);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + tmp.string() + "'");
    f << text;
    f.flush();
    if (!f) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into '" + path.string() + "'");
  }
}

nn::MlpModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str(), meta);
}

}  // namespace simprov::harness

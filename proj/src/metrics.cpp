#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "simprov/errors.hpp"
#include "simprov/harness.hpp"

namespace simprov::harness {

using ojson = nlohmann::ordered_json;

std::string to_json_line(const MetricsRecord& r) {
  ojson j{{"trial", r.trial},           {"method", r.method},
          {"phase", r.phase},           {"t", r.t},
          {"d_rand", r.d_rand},         {"train_acc", r.train_acc},
          {"target_acc", r.target_acc}, {"n_selected", r.n_selected},
          {"mean_kappa", r.mean_kappa}, {"accepted", r.accepted}};
  return j.dump();
}

MetricsRecord parse_metrics_line(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line.begin(), line.end());
  } catch (const ojson::parse_error& e) {
    throw ParseError(std::string("metrics record is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("metrics record must be a JSON object");
  MetricsRecord r;
  try {
    r.trial = j.at("trial").get<std::size_t>();
    r.method = j.at("method").get<std::string>();
    r.phase = j.at("phase").get<std::string>();
    r.t = j.at("t").get<std::size_t>();
    r.d_rand = j.at("d_rand").get<double>();
    r.train_acc = j.at("train_acc").get<double>();
    r.target_acc = j.at("target_acc").get<double>();
    r.n_selected = j.at("n_selected").get<std::size_t>();
    r.mean_kappa = j.at("mean_kappa").get<double>();
    r.accepted = j.at("accepted").get<bool>();
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("metrics record: ") + e.what());
  }
  if (r.phase != "base" && r.phase != "adapt") throw ParseError("metrics record: unknown phase '" + r.phase + "'");
  return r;
}

std::vector<MetricsRecord> load_metrics(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open metrics file '" + path.string() + "'");
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_metrics_line(line));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

PlotKind plot_kind_from_string(std::string_view kind) {
  if (kind == "deepness") return PlotKind::Deepness;
  if (kind == "drand_scatter") return PlotKind::DrandScatter;
  throw InputError("unknown plot kind '" + std::string(kind) + "' (expected deepness or drand_scatter)");
}

std::vector<double> deepness_series(const std::vector<MetricsRecord>& trial_records) {
  std::vector<double> series;
  for (const auto& r : trial_records) {
    if (r.phase == "base") {
      series.assign(1, r.target_acc);
      continue;
    }
    if (series.empty()) throw InputError("adaptation record precedes the base record");
    while (series.size() < r.t) series.push_back(series.back());
    series.push_back(r.accepted ? r.target_acc : series.back());
  }
  return series;
}

Stat mean_std(const std::vector<double>& values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  return s;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string plot_csv(const std::vector<MetricsRecord>& records, PlotKind kind) {
  std::ostringstream out;
  if (kind == PlotKind::DrandScatter) {
    out << "trial,t,d_rand,target_acc\n";
    for (const auto& r : records) {
      if (r.phase != "adapt") continue;
      out << r.trial << ',' << r.t << ',' << fmt(r.d_rand) << ',' << fmt(r.target_acc) << '\n';
    }
    return out.str();
  }

  out << "D,mean_target_acc,std,n_trials\n";
  std::map<std::size_t, std::vector<MetricsRecord>> by_trial;
  for (const auto& r : records) by_trial[r.trial].push_back(r);
  std::vector<std::vector<double>> series;
  std::size_t longest = 0;
  for (const auto& [trial, recs] : by_trial) {
    series.push_back(deepness_series(recs));
    longest = std::max(longest, series.back().size());
  }
  // A trial that stopped early keeps its last teacher for larger D.
  for (std::size_t d = 0; d < longest; ++d) {
    std::vector<double> col;
    for (const auto& s : series) {
      if (!s.empty()) col.push_back(d < s.size() ? s[d] : s.back());
    }
    const Stat st = mean_std(col);
    out << d << ',' << fmt(st.mean) << ',' << fmt(st.std) << ',' << st.n << '\n';
  }
  return out.str();
}

void emit_plot_data(const std::filesystem::path& metrics, PlotKind kind, const std::filesystem::path& out_csv) {
  const std::string text = plot_csv(load_metrics(metrics), kind);
  std::ofstream f(out_csv, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + out_csv.string() + "'");
  f << text;
  if (!f) throw IoError("write failed for '" + out_csv.string() + "'");
}

}  // namespace simprov::harness

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "simprov/simprov.h"

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "experiment": {"n_trials": 1},
  "data": {"train": [{"n_samples": 200}, {"n_samples": 200}],
           "target": {"n_samples": 200}, "target_eval": {"n_samples": 200}},
  "base": {"epochs": 15, "penalty_warmup": 4, "hidden": [8]},
  "adapt": {"deepness": 3, "patience": 2, "student": {"epochs": 3, "hidden": [8]}}
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("simprov_test_capi_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

simprov_config* tiny() {
  simprov_config* c = nullptr;
  REQUIRE(simprov_config_parse(kTiny, &c) == SIMPROV_OK);
  return c;
}

}  // namespace

TEST_CASE("status codes and last error") {
  simprov_config* c = nullptr;
  CHECK(simprov_config_parse("{\"nope\": 1}", &c) == SIMPROV_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(simprov_last_error()).find("nope") != std::string::npos);
  CHECK(simprov_config_load("/nonexistent/cfg.json", &c) == SIMPROV_ERR_IO);
  CHECK(simprov_config_default(nullptr) == SIMPROV_ERR_ARGUMENT);
  CHECK(simprov_config_set_seed(nullptr, 1) == SIMPROV_ERR_ARGUMENT);
  CHECK(std::string(simprov_status_name(SIMPROV_ERR_SCHEMA)) == "schema error");
  CHECK(simprov_emit_plot_data("x", "pie", "y") != SIMPROV_OK);
  simprov_config_free(nullptr);
  simprov_model_free(nullptr);
  simprov_dataset_free(nullptr);
}

TEST_CASE("config handle") {
  simprov_config* c = tiny();
  char small[8];
  CHECK(simprov_config_hash(c, small, sizeof small) == SIMPROV_ERR_ARGUMENT);
  char h1[17], h2[17];
  CHECK(simprov_config_hash(c, h1, sizeof h1) == SIMPROV_OK);
  CHECK(std::strlen(h1) == 16);
  CHECK(simprov_config_set_seed(c, 9) == SIMPROV_OK);
  CHECK(simprov_config_hash(c, h2, sizeof h2) == SIMPROV_OK);
  CHECK(std::string(h1) != std::string(h2));
  size_t need = 0;
  CHECK(simprov_config_to_json(c, nullptr, 0, &need) == SIMPROV_OK);
  std::vector<char> buf(need);
  CHECK(simprov_config_to_json(c, buf.data(), buf.size(), nullptr) == SIMPROV_OK);
  CHECK(std::string(buf.data()).find("\"master_seed\": 9") != std::string::npos);
  CHECK(simprov_config_set_trials(c, 0) == SIMPROV_ERR_ARGUMENT);
  simprov_config_free(c);
}

TEST_CASE("adaptation never needs the evaluation split") {
  simprov_config* c = tiny();
  const fs::path with = scratch("with"), without = scratch("without");
  REQUIRE(simprov_generate_data(c, with.string().c_str()) == SIMPROV_OK);
  REQUIRE(simprov_generate_data(c, without.string().c_str()) == SIMPROV_OK);
  CHECK(slurp(with / "target.csv") == slurp(without / "target.csv"));
  fs::remove(without / "target_eval.csv");

  simprov_model *b1 = nullptr, *b2 = nullptr, *a1 = nullptr, *a2 = nullptr;
  REQUIRE(simprov_train_base(c, with.string().c_str(), &b1) == SIMPROV_OK);
  REQUIRE(simprov_train_base(c, without.string().c_str(), &b2) == SIMPROV_OK);
  REQUIRE(simprov_adapt(c, b1, with.string().c_str(), nullptr, &a1) == SIMPROV_OK);
  const std::string hist = (without / "history.jsonl").string();
  REQUIRE(simprov_adapt(c, b2, without.string().c_str(), hist.c_str(), &a2) == SIMPROV_OK);
  CHECK_FALSE(fs::exists(without / "target_eval.csv"));
  CHECK(fs::file_size(hist) > 0);

  const fs::path p1 = with / "a.ckpt", p2 = without / "a.ckpt";
  REQUIRE(simprov_model_save(a1, c, p1.string().c_str()) == SIMPROV_OK);
  REQUIRE(simprov_model_save(a2, c, p2.string().c_str()) == SIMPROV_OK);
  CHECK(slurp(p1) == slurp(p2));

  // Scoring is where the labels come in.
  simprov_dataset* eval = nullptr;
  REQUIRE(simprov_dataset_load((with / "target_eval.csv").string().c_str(), &eval) == SIMPROV_OK);
  CHECK(simprov_dataset_rows(eval) == 200);
  double acc = -1;
  CHECK(simprov_model_accuracy(a1, eval, &acc) == SIMPROV_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  simprov_dataset_free(eval);
  simprov_model_free(b1);
  simprov_model_free(b2);
  simprov_model_free(a1);
  simprov_model_free(a2);
  simprov_config_free(c);
}

TEST_CASE("model handle: forward, save, load") {
  simprov_config* c = tiny();
  const fs::path dir = scratch("model");
  REQUIRE(simprov_generate_data(c, dir.string().c_str()) == SIMPROV_OK);
  simprov_model* m = nullptr;
  REQUIRE(simprov_train_base(c, dir.string().c_str(), &m) == SIMPROV_OK);
  CHECK(simprov_model_input_dim(m) == 10);
  CHECK(simprov_model_n_classes(m) == 2);

  std::vector<double> x(3 * 10);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i % 7) - 0.3;
  std::vector<double> out1(6), out2(6);
  CHECK(simprov_model_forward(m, x.data(), 3, 10, out1.data(), 5) == SIMPROV_ERR_ARGUMENT);
  CHECK(simprov_model_forward(m, x.data(), 3, 12, out1.data(), 6) == SIMPROV_ERR_SHAPE);
  REQUIRE(simprov_model_forward(m, x.data(), 3, 10, out1.data(), 6) == SIMPROV_OK);

  const std::string path = (dir / "m.ckpt").string();
  REQUIRE(simprov_model_save(m, nullptr, path.c_str()) == SIMPROV_OK);
  simprov_model* back = nullptr;
  REQUIRE(simprov_model_load(path.c_str(), &back) == SIMPROV_OK);
  REQUIRE(simprov_model_forward(back, x.data(), 3, 10, out2.data(), 6) == SIMPROV_OK);
  CHECK(std::memcmp(out1.data(), out2.data(), 6 * sizeof(double)) == 0);

  std::ofstream(dir / "trunc.ckpt") << slurp(path).substr(0, 200);
  simprov_model* none = nullptr;
  CHECK(simprov_model_load((dir / "trunc.ckpt").string().c_str(), &none) == SIMPROV_ERR_PARSE);
  CHECK(none == nullptr);

  simprov_model_free(back);
  simprov_model_free(m);
  simprov_config_free(c);
}

TEST_CASE("experiment and plots through the C interface") {
  simprov_config* c = tiny();
  const fs::path dir = scratch("exp");
  simprov_config_set_output_dir(c, dir.string().c_str());
  size_t failed = 99;
  REQUIRE(simprov_run_experiment(c, &failed) == SIMPROV_OK);
  CHECK(failed == 0);
  const std::string metrics = (dir / "metrics.jsonl").string();
  const std::string csv = (dir / "deepness.csv").string();
  CHECK(simprov_emit_plot_data(metrics.c_str(), "deepness", csv.c_str()) == SIMPROV_OK);
  CHECK(slurp(csv).rfind("D,mean_target_acc,std,n_trials\n", 0) == 0);
  CHECK(simprov_emit_plot_data(metrics.c_str(), "bars", csv.c_str()) == SIMPROV_ERR_INPUT);
  simprov_config_free(c);
}

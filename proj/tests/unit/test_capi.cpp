#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdcal/fdcal.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Str {
  char* p = nullptr;
  ~Str() { fdcal_string_free(p); }
  json parse() const { return json::parse(p); }
};

struct Ds {
  fdcal_dataset* p = nullptr;
  ~Ds() { fdcal_dataset_free(p); }
};

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fdcal_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSpec = R"({"model": "underwood", "params": {"v_f": 80, "k_0": 30}, "n": 200, "seed": 3,
  "noise_sd": 3, "residual_kernel": {"variance": 25, "lengthscale": 10},
  "sampler": {"low_weight": 0.5, "k_min": 1}})";

void synth(Ds& ds) { REQUIRE(fdcal_dataset_synthesize(kSpec, &ds.p, nullptr) == FDCAL_OK); }

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" FDCAL_CLI_PATH "' " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::strlen(fdcal_version()) > 0);
  CHECK(std::string(fdcal_status_name(FDCAL_OK)) == "ok");
  CHECK(std::string(fdcal_status_name(FDCAL_ERR_NOT_CONVERGED)) != "ok");
  fdcal_string_free(nullptr);
}

TEST_CASE("datasets from arrays are sorted and summarized") {
  const double k[] = {30.0, 10.0, 20.0};
  const double v[] = {40.0, 60.0, 50.0};
  Ds ds;
  REQUIRE(fdcal_dataset_from_arrays(k, v, 3, &ds.p) == FDCAL_OK);
  CHECK(fdcal_dataset_size(ds.p) == 3);
  double kk = 0, vv = 0;
  REQUIRE(fdcal_dataset_get(ds.p, 0, &kk, &vv) == FDCAL_OK);
  CHECK(kk == 10.0);
  CHECK(vv == 60.0);
  CHECK(fdcal_dataset_get(ds.p, 3, &kk, &vv) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(fdcal_last_error()) > 0);

  const double edges[] = {0.0, 15.0, 30.0};
  size_t counts[2] = {};
  REQUIRE(fdcal_dataset_histogram(ds.p, edges, 3, counts) == FDCAL_OK);
  CHECK(counts[0] == 1);
  CHECK(counts[1] == 2);

  Str summary;
  REQUIRE(fdcal_dataset_summary(ds.p, &summary.p) == FDCAL_OK);
  CHECK(summary.parse()["n"] == 3);
}

TEST_CASE("invalid observations are rejected with a message") {
  const double k[] = {10.0, -1.0};
  const double v[] = {50.0, 40.0};
  fdcal_dataset* out = nullptr;
  CHECK(fdcal_dataset_from_arrays(k, v, 2, &out) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(out == nullptr);
  CHECK(std::string(fdcal_last_error()).size() > 0);
  CHECK(fdcal_dataset_from_arrays(nullptr, v, 2, &out) == FDCAL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("csv round-trip and load errors") {
  Ds ds;
  synth(ds);
  const auto dir = scratch("csv");
  const auto path = (dir / "d.csv").string();
  REQUIRE(fdcal_dataset_write_csv(ds.p, path.c_str()) == FDCAL_OK);
  Ds back;
  Str stats;
  REQUIRE(fdcal_dataset_load_csv(path.c_str(), nullptr, nullptr, &back.p, &stats.p) == FDCAL_OK);
  CHECK(stats.parse()["accepted_rows"] == 200);
  REQUIRE(fdcal_dataset_size(back.p) == 200);
  for (size_t i = 0; i < 200; i += 37) {
    double k1, v1, k2, v2;
    fdcal_dataset_get(ds.p, i, &k1, &v1);
    fdcal_dataset_get(back.p, i, &k2, &v2);
    CHECK(k1 == k2);
    CHECK(v1 == v2);
  }
  fdcal_dataset* none = nullptr;
  CHECK(fdcal_dataset_load_csv((dir / "missing.csv").string().c_str(), nullptr, nullptr, &none, nullptr) ==
        FDCAL_ERR_IO);
  std::ofstream(dir / "bad.csv") << "k,v\n1,2\n";
  CHECK(fdcal_dataset_load_csv((dir / "bad.csv").string().c_str(), nullptr, nullptr, &none, nullptr) ==
        FDCAL_ERR_PARSE);
  CHECK(fdcal_dataset_synthesize("{not json", &none, nullptr) == FDCAL_ERR_PARSE);
  CHECK(fdcal_dataset_synthesize(R"({"model": "nope", "params": {}})", &none, nullptr) ==
        FDCAL_ERR_INVALID_ARGUMENT);
  fs::remove_all(dir);
}

TEST_CASE("synthesis is deterministic and reports its truth") {
  Ds a, b;
  Str truth;
  REQUIRE(fdcal_dataset_synthesize(kSpec, &a.p, &truth.p) == FDCAL_OK);
  REQUIRE(fdcal_dataset_synthesize(kSpec, &b.p, nullptr) == FDCAL_OK);
  for (size_t i = 0; i < fdcal_dataset_size(a.p); ++i) {
    double k1, v1, k2, v2;
    fdcal_dataset_get(a.p, i, &k1, &v1);
    fdcal_dataset_get(b.p, i, &k2, &v2);
    REQUIRE(k1 == k2);
    REQUIRE(v1 == v2);
  }
  const auto t = truth.parse();
  CHECK(t["model"] == "underwood");
  CHECK(t["params"]["v_f"] == 80.0);
}

TEST_CASE("model evaluation through the c interface") {
  const double p[] = {100.0, 150.0};
  double v = 0;
  REQUIRE(fdcal_model_speed("greenshields", p, 2, 75.0, &v) == FDCAL_OK);
  CHECK(v == doctest::Approx(50.0));
  CHECK(fdcal_model_speed("greenshields", p, 3, 75.0, &v) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(fdcal_model_speed("greenberg", p, 2, 0.0, &v) == FDCAL_ERR_DOMAIN);
  CHECK(fdcal_model_speed("unknown", p, 2, 1.0, &v) == FDCAL_ERR_INVALID_ARGUMENT);
  size_t n = 0;
  REQUIRE(fdcal_model_param_count("3pl", &n) == FDCAL_OK);
  CHECK(n == 3);
  const char* name = nullptr;
  REQUIRE(fdcal_model_param_name("newell", 2, &name) == FDCAL_OK);
  CHECK(std::string(name) == "lambda");
  CHECK(fdcal_model_param_name("newell", 3, &name) == FDCAL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("single fits return their record") {
  Ds ds;
  synth(ds);
  Str out;
  REQUIRE(fdcal_fit(ds.p, "underwood", "wls", nullptr, &out.p) == FDCAL_OK);
  const auto r = out.parse();
  CHECK(r["method"] == "wls");
  CHECK(r["params"]["v_f"].get<double>() > 50.0);
  char* none = nullptr;
  CHECK(fdcal_fit(ds.p, "underwood", "bayes", nullptr, &none) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(fdcal_fit(ds.p, "underwood", "ls", R"({"seed": -1})", &none) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(fdcal_fit(ds.p, "underwood", "ls", R"({"unknown_key": 1})", &none) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(none == nullptr);
}

TEST_CASE("calibration writes its outputs") {
  Ds ds;
  synth(ds);
  const auto dir = scratch("calibrate");
  Str report;
  const char* cfg = R"({"models": ["underwood", "newell"], "methods": ["ls", "wls", "gp-mle"], "seed": 2})";
  REQUIRE(fdcal_calibrate(ds.p, cfg, dir.string().c_str(), &report.p) == FDCAL_OK);
  const auto r = report.parse();
  CHECK(r["fits"].size() == 6);
  CHECK(json::parse(slurp(dir / "report.json")) == r);
  for (const auto& f : r["files"]) CHECK(fs::exists(dir / f.get<std::string>()));

  for (const char* fmt : {"text", "csv", "json"}) {
    Str rendered;
    REQUIRE(fdcal_report_render((dir / "report.json").string().c_str(), fmt, &rendered.p) == FDCAL_OK);
    CHECK(std::strlen(rendered.p) > 100);
  }
  char* none = nullptr;
  CHECK(fdcal_report_render((dir / "report.json").string().c_str(), "pdf", &none) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(fdcal_report_render((dir / "nope.json").string().c_str(), "text", &none) == FDCAL_ERR_IO);
  std::ofstream(dir / "broken.json") << "{\"schema_version\": ";
  CHECK(fdcal_report_render((dir / "broken.json").string().c_str(), "text", &none) == FDCAL_ERR_PARSE);
  fs::remove_all(dir);
}

TEST_CASE("sampling exposes chains and diagnostics") {
  Ds ds;
  synth(ds);
  fdcal_chain* c = nullptr;
  REQUIRE(fdcal_sample(ds.p, "underwood", R"({"burn_in": 60, "draws": 40, "chains": 2, "seed": 4})", &c) ==
          FDCAL_OK);
  CHECK(fdcal_chain_count(c) == 2);
  CHECK(fdcal_chain_draws(c) == 40);
  const size_t cols = fdcal_chain_columns(c);
  CHECK(cols >= 4);
  bool saw_vf = false;
  for (size_t j = 0; j < cols; ++j) {
    const char* name = nullptr;
    REQUIRE(fdcal_chain_column_name(c, j, &name) == FDCAL_OK);
    if (std::string(name) == "v_f") {
      saw_vf = true;
      double x = 0;
      REQUIRE(fdcal_chain_value(c, 1, 39, j, &x) == FDCAL_OK);
      CHECK(std::isfinite(x));
      CHECK(x > 0.0);
    }
  }
  CHECK(saw_vf);
  double x;
  CHECK(fdcal_chain_value(c, 2, 0, 0, &x) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(fdcal_chain_value(c, 0, 40, 0, &x) == FDCAL_ERR_INVALID_ARGUMENT);
  Str diag;
  REQUIRE(fdcal_chain_diagnostics(c, &diag.p) == FDCAL_OK);
  CHECK(diag.parse().is_object());
  CHECK(fdcal_chain_ok(c) != 0);
  const auto dir = scratch("chain");
  REQUIRE(fdcal_chain_write(c, dir.string().c_str()) == FDCAL_OK);
  CHECK(fs::exists(dir / "diagnostics.json"));
  fdcal_chain_free(c);
  fs::remove_all(dir);

  fdcal_chain* none = nullptr;
  CHECK(fdcal_sample(ds.p, "underwood", R"({"draws": 0})", &none) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(none == nullptr);
}

TEST_CASE("equal-tailed intervals through the c interface") {
  const double s[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  double lo = 0, hi = 0;
  REQUIRE(fdcal_eti(s, 11, 0.8, &lo, &hi) == FDCAL_OK);
  CHECK(lo == doctest::Approx(2.0));
  CHECK(hi == doctest::Approx(10.0));
  CHECK(fdcal_eti(s, 0, 0.8, &lo, &hi) == FDCAL_ERR_INVALID_ARGUMENT);
  CHECK(fdcal_eti(s, 11, 1.2, &lo, &hi) == FDCAL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("cli synth is deterministic") {
  const auto dir = scratch("cli_synth");
  const std::string common = "synth --model underwood --vf 80 --k0 30 --n 300 --seed 11 --ell 10 --sigma2 25";
  REQUIRE(run_cli(common + " --output-dir '" + (dir / "a").string() + "'") == 0);
  REQUIRE(run_cli(common + " --output-dir '" + (dir / "b").string() + "'") == 0);
  CHECK(slurp(dir / "a" / "synth.csv") == slurp(dir / "b" / "synth.csv"));
  CHECK(slurp(dir / "a" / "synth_truth.json") == slurp(dir / "b" / "synth_truth.json"));
  CHECK(slurp(dir / "a" / "synth.csv").size() > 1000);
  fs::remove_all(dir);
}

TEST_CASE("cli usage errors exit with code 2") {
  const auto dir = scratch("cli_usage");
  const auto out = " --output-dir '" + dir.string() + "'";
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("synth --model greenshields --vf 90 --kj 150 --noise-sd -1" + out) == 2);
  CHECK(run_cli("synth --model greenshields --vf 90" + out) == 2);
  CHECK(run_cli("calibrate --data '" + (dir / "missing.csv").string() + "'" + out) == 2);
  CHECK(run_cli("calibrate --data x.csv --draws 0" + out) == 2);
  CHECK(run_cli("report '" + (dir / "missing.json").string() + "'") == 2);
  CHECK(run_cli("--version") == 0);
  fs::remove_all(dir);
}

TEST_CASE("cli calibrate, report and configuration files") {
  const auto dir = scratch("cli_calibrate");
  const auto data = dir / "synth.csv";
  REQUIRE(run_cli("synth --model underwood --vf 80 --k0 30 --n 250 --ell 10 --sigma2 25 --low-weight 0.5 --k-min 1 "
                  "--output-dir '" + dir.string() + "'") == 0);
  const auto before = slurp(data);
  const auto out = dir / "run";
  REQUIRE(run_cli("calibrate --data '" + data.string() + "' --models underwood greenshields --methods ls wls "
                  "--seed 3 --output-dir '" + out.string() + "'") == 0);
  CHECK(slurp(data) == before);
  const auto report = json::parse(slurp(out / "report.json"));
  CHECK(report["fits"].size() == 4);
  CHECK(report["config"]["seed"] == 3);
  for (const char* fmt : {"text", "csv", "json"}) {
    CHECK(run_cli(std::string("report --format ") + fmt + " '" + (out / "report.json").string() + "'") == 0);
  }

  std::ofstream(dir / "cfg.ini") << "[calibrate]\nseed = 5\nmodels = [\"newell\"]\nmethods = [\"ls\"]\n";
  const auto cfg_out = dir / "cfg_run";
  REQUIRE(run_cli("--config '" + (dir / "cfg.ini").string() + "' calibrate --data '" + data.string() +
                  "' --seed 8 --output-dir '" + cfg_out.string() + "'") == 0);
  const auto cfg_report = json::parse(slurp(cfg_out / "report.json"));
  CHECK(cfg_report["config"]["seed"] == 8);
  CHECK(cfg_report["config"]["models"] == json::array({"newell"}));

  const auto env_out = dir / "env_out";
  REQUIRE(run_cli("synth --model greenshields --vf 90 --kj 150 --n 40", "FDCAL_OUTPUT_DIR='" + env_out.string() + "'") ==
          0);
  CHECK(fs::exists(env_out / "synth.csv"));
  fs::remove_all(dir);
}

// fdcal command-line front end over the C API.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdcal/fdcal.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Owned {
  char* p = nullptr;
  ~Owned() { fdcal_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

int exit_code(fdcal_status s) {
  switch (s) {
    case FDCAL_OK: return kExitOk;
    case FDCAL_ERR_INVALID_ARGUMENT:
    case FDCAL_ERR_PARSE:
    case FDCAL_ERR_IO: return kExitUsage;
    default: return kExitFailure;
  }
}

int report_error(fdcal_status s) {
  std::cerr << "fdcal: " << fdcal_status_name(s) << ": " << fdcal_last_error() << "\n";
  return exit_code(s);
}

std::string default_output_dir() {
  const char* env = std::getenv("FDCAL_OUTPUT_DIR");
  return env && *env ? env : "fdcal-out";
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string model = "underwood";
  std::map<std::string, double> params;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  double noise_sd = 3.0;
  std::optional<double> ell, sigma2;
  double k_s = 0.0;
  double low_weight = 0.87, k_min = 0.0, k_split = 20.0, k_max = 150.0;
  std::string out_dir;
  std::string name = "synth";
};

int cmd_synth(const SynthArgs& a) {
  if (!(a.noise_sd >= 0.0)) {
    std::cerr << "fdcal: --noise-sd must be non-negative\n";
    return kExitUsage;
  }
  if (a.ell.has_value() != a.sigma2.has_value()) {
    std::cerr << "fdcal: --ell and --sigma2 must be given together\n";
    return kExitUsage;
  }
  std::size_t count = 0;
  if (auto s = fdcal_model_param_count(a.model.c_str(), &count); s != FDCAL_OK) return report_error(s);
  json params = json::object();
  for (std::size_t i = 0; i < count; ++i) {
    const char* name = nullptr;
    fdcal_model_param_name(a.model.c_str(), i, &name);
    const auto it = a.params.find(name);
    if (it == a.params.end()) {
      std::cerr << "fdcal: model " << a.model << " needs parameter " << name << "\n";
      return kExitUsage;
    }
    params[name] = it->second;
  }
  json spec = {{"model", a.model},
               {"params", params},
               {"n", a.n},
               {"seed", a.seed},
               {"noise_sd", a.noise_sd},
               {"k_s", a.k_s},
               {"sampler",
                {{"low_weight", a.low_weight}, {"k_min", a.k_min}, {"k_split", a.k_split}, {"k_max", a.k_max}}}};
  spec["residual_kernel"] = a.ell ? json{{"variance", *a.sigma2}, {"lengthscale", *a.ell}} : json();

  fdcal_dataset* ds = nullptr;
  Owned truth;
  if (auto s = fdcal_dataset_synthesize(spec.dump().c_str(), &ds, &truth.p); s != FDCAL_OK) return report_error(s);
  const std::string dir = a.out_dir.empty() ? default_output_dir() : a.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto csv = (std::filesystem::path(dir) / (a.name + ".csv")).string();
  const auto truth_path = (std::filesystem::path(dir) / (a.name + "_truth.json")).string();
  const auto s = fdcal_dataset_write_csv(ds, csv.c_str());
  fdcal_dataset_free(ds);
  if (s != FDCAL_OK) return report_error(s);
  std::ofstream tf(truth_path, std::ios::binary);
  tf << truth.str();
  if (!tf) {
    std::cerr << "fdcal: cannot write " << truth_path << "\n";
    return kExitFailure;
  }
  const auto t = json::parse(truth.str());
  std::printf("wrote %s (n=%zu, share below %g veh/km: %.3f, clamped: %zu)\n", csv.c_str(),
              t["n"].get<std::size_t>(), a.k_split, t["share_below_split"].get<double>(),
              t["clamped_count"].get<std::size_t>());
  std::printf("wrote %s\n", truth_path.c_str());
  return kExitOk;
}

// ---- shared run options ---------------------------------------------------

struct RunArgs {
  std::string data;
  std::string synth_spec;
  std::string density_column = "density";
  std::string speed_column = "speed";
  std::vector<std::string> models;
  std::vector<std::string> methods;
  std::optional<std::size_t> inducing;
  std::optional<int> burn_in, draws, max_depth, chains;
  std::optional<double> target_accept, k_s;
  std::optional<std::string> noise;
  std::optional<std::uint64_t> seed;
  std::vector<double> bin_edges, eti_levels;
  std::optional<std::size_t> grid_points;
  std::optional<unsigned> threads;
  bool no_adapt_metric = false;
  bool diagonal_metric = false;
  std::string out_dir;
};

void add_run_options(CLI::App* cmd, RunArgs& a, bool multi_model) {
  auto* src = cmd->add_option_group("input");
  src->add_option("--data", a.data, "CSV with a header row");
  src->add_option("--synth-spec", a.synth_spec, "JSON synthesis spec used instead of --data");
  src->require_option(1);
  cmd->add_option("--density-column", a.density_column, "density column name")->capture_default_str();
  cmd->add_option("--speed-column", a.speed_column, "speed column name")->capture_default_str();
  if (multi_model) {
    cmd->add_option("--models", a.models, "subset of greenshields,greenberg,underwood,northwestern,newell,3pl")
        ->delimiter(',');
    cmd->add_option("--methods", a.methods, "subset of ls,wls,gp-mle,gp-mcmc")->delimiter(',');
  }
  cmd->add_option("--inducing", a.inducing, "number of inducing points (20)");
  cmd->add_option("--burn-in", a.burn_in, "NUTS burn-in iterations (2000)");
  cmd->add_option("--draws", a.draws, "NUTS collected draws (3000)");
  cmd->add_option("--target-accept", a.target_accept, "dual-averaging target (0.8)");
  cmd->add_option("--max-depth", a.max_depth, "maximum tree depth (10)");
  cmd->add_option("--chains", a.chains, "independent chains (1)");
  cmd->add_option("--noise", a.noise, "student-t or gaussian (student-t)");
  cmd->add_option("--seed", a.seed, "run seed (0)");
  cmd->add_option("--bin-edges", a.bin_edges, "RMSE bin edges (0,15,...,150)")->delimiter(',');
  cmd->add_option("--eti-levels", a.eti_levels, "envelope levels (0.5,0.8,0.95)")->delimiter(',');
  cmd->add_option("--grid-points", a.grid_points, "curve grid size (200)");
  cmd->add_option("--ks", a.k_s, "Greenberg density shift k_s (0)");
  cmd->add_option("--threads", a.threads, "worker threads (number of processors)");
  cmd->add_flag("--no-adapt-metric", a.no_adapt_metric, "keep the starting metric through burn-in");
  cmd->add_flag("--diagonal-metric", a.diagonal_metric, "adapt a diagonal rather than dense metric");
  cmd->add_option("--output-dir", a.out_dir, "output directory (FDCAL_OUTPUT_DIR or ./fdcal-out)");
}

json run_config(const RunArgs& a) {
  json c = json::object();
  if (!a.models.empty()) c["models"] = a.models;
  if (!a.methods.empty()) c["methods"] = a.methods;
  if (a.inducing) c["inducing"] = *a.inducing;
  if (a.burn_in) c["burn_in"] = *a.burn_in;
  if (a.draws) c["draws"] = *a.draws;
  if (a.target_accept) c["target_accept"] = *a.target_accept;
  if (a.max_depth) c["max_depth"] = *a.max_depth;
  if (a.chains) c["chains"] = *a.chains;
  if (a.noise) c["noise"] = *a.noise;
  if (a.seed) c["seed"] = *a.seed;
  if (!a.bin_edges.empty()) c["bin_edges"] = a.bin_edges;
  if (!a.eti_levels.empty()) c["eti_levels"] = a.eti_levels;
  if (a.grid_points) c["grid_points"] = *a.grid_points;
  if (a.k_s) c["k_s"] = *a.k_s;
  if (a.threads) c["threads"] = *a.threads;
  if (a.no_adapt_metric) c["adapt_metric"] = false;
  if (a.diagonal_metric) c["dense_metric"] = false;
  return c;
}

fdcal_status open_dataset(const RunArgs& a, fdcal_dataset** ds) {
  if (!a.data.empty()) {
    Owned stats;
    const auto s = fdcal_dataset_load_csv(a.data.c_str(), a.density_column.c_str(), a.speed_column.c_str(),
                                          ds, &stats.p);
    if (s == FDCAL_OK) {
      const auto j = json::parse(stats.str());
      std::printf("loaded %s: %zu rows, %zu rejected, %zu accepted\n", a.data.c_str(),
                  j["raw_rows"].get<std::size_t>(), j["rejected_rows"].get<std::size_t>(),
                  j["accepted_rows"].get<std::size_t>());
    }
    return s;
  }
  std::ifstream in(a.synth_spec, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "fdcal: cannot open %s\n", a.synth_spec.c_str());
    return FDCAL_ERR_IO;
  }
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fdcal_dataset_synthesize(text.c_str(), ds, nullptr);
}

int cmd_calibrate(const RunArgs& a) {
  fdcal_dataset* ds = nullptr;
  if (auto s = open_dataset(a, &ds); s != FDCAL_OK) return report_error(s);
  const std::string dir = a.out_dir.empty() ? default_output_dir() : a.out_dir;
  Owned report;
  const auto s = fdcal_calibrate(ds, run_config(a).dump().c_str(), dir.c_str(), &report.p);
  fdcal_dataset_free(ds);
  if (s != FDCAL_OK && s != FDCAL_ERR_NOT_CONVERGED) return report_error(s);

  const auto path = (std::filesystem::path(dir) / "report.json").string();
  Owned text;
  if (auto r = fdcal_report_render(path.c_str(), "text", &text.p); r == FDCAL_OK) std::cout << text.str();
  std::printf("\nreport written to %s\n", path.c_str());
  if (s == FDCAL_ERR_NOT_CONVERGED) {
    std::cerr << "fdcal: " << fdcal_last_error() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_sample(const RunArgs& a, const std::string& model) {
  fdcal_dataset* ds = nullptr;
  if (auto s = open_dataset(a, &ds); s != FDCAL_OK) return report_error(s);
  fdcal_chain* chain = nullptr;
  const auto s = fdcal_sample(ds, model.c_str(), run_config(a).dump().c_str(), &chain);
  fdcal_dataset_free(ds);
  if (s != FDCAL_OK) return report_error(s);
  const std::string dir = a.out_dir.empty() ? default_output_dir() : a.out_dir;
  const auto w = fdcal_chain_write(chain, dir.c_str());
  Owned diag;
  fdcal_chain_diagnostics(chain, &diag.p);
  const bool ok = fdcal_chain_ok(chain);
  fdcal_chain_free(chain);
  if (w != FDCAL_OK) return report_error(w);

  const auto d = json::parse(diag.str());
  for (const auto& c : d["per_chain"]) {
    std::printf("chain seed %llu: %lld draws, acceptance %.3f, divergences %d, step %.4g\n",
                static_cast<unsigned long long>(c["seed"].get<std::uint64_t>()), c["draws"].get<long long>(),
                c["acceptance_rate"].get<double>(), c["divergences"].get<int>(), c["step_size"].get<double>());
  }
  std::printf("stationary: %s\n", d["stationary"].get<bool>() ? "yes" : "no");
  if (d.contains("rhat_max")) std::printf("max split R-hat: %.4f\n", d["rhat_max"].get<double>());
  for (const auto& [k, v] : d["posterior_mean"].items()) {
    const auto& e = d["eti_95"][k];
    std::printf("  %-12s mean %-12.6g 95%% [%.6g, %.6g]\n", k.c_str(), v.get<double>(), e[0].get<double>(),
                e[1].get<double>());
  }
  std::printf("outputs in %s\n", dir.c_str());
  if (!ok) {
    std::cerr << "fdcal: " << d.value("error", "sampling failed") << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_report(const std::string& path, const std::string& format) {
  Owned out;
  if (auto s = fdcal_report_render(path.c_str(), format.c_str(), &out.p); s != FDCAL_OK) {
    std::cerr << "fdcal: " << fdcal_last_error() << "\n";
    return kExitUsage;
  }
  std::cout << out.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speed-density fundamental diagram calibration"};
  app.set_version_flag("--version", std::string(fdcal_version()));
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and its ground truth");
  synth->add_option("--model", sa.model, "truth model")->capture_default_str();
  const std::vector<std::pair<std::string, std::string>> param_flags = {
      {"--vf", "v_f"}, {"--v0", "v_0"}, {"--kj", "k_j"}, {"--k0", "k_0"},
      {"--lambda", "lambda"}, {"--kc", "k_c"}, {"--theta-l", "theta_l"}};
  for (const auto& [flag, name] : param_flags) {
    synth->add_option_function<double>(flag, [&sa, name = name](double v) { sa.params[name] = v; },
                                       "model parameter " + name);
  }
  synth->add_option("--n", sa.n, "number of observations")->capture_default_str();
  synth->add_option("--seed", sa.seed, "random seed")->capture_default_str();
  synth->add_option("--noise-sd", sa.noise_sd, "observation noise sd (km/h)")->capture_default_str();
  synth->add_option("--ell", sa.ell, "residual GP lengthscale");
  synth->add_option("--sigma2", sa.sigma2, "residual GP variance");
  synth->add_option("--ks", sa.k_s, "Greenberg density shift");
  synth->add_option("--low-weight", sa.low_weight, "share of densities below the split")->capture_default_str();
  synth->add_option("--k-min", sa.k_min, "lowest sampled density")->capture_default_str();
  synth->add_option("--k-split", sa.k_split, "density splitting the two sampling ranges")->capture_default_str();
  synth->add_option("--k-max", sa.k_max, "highest sampled density")->capture_default_str();
  synth->add_option("--output-dir", sa.out_dir, "output directory (FDCAL_OUTPUT_DIR or ./fdcal-out)");
  synth->add_option("--name", sa.name, "file stem")->capture_default_str();

  RunArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "fit every requested (model, method) pair");
  add_run_options(calibrate, ca, true);

  RunArgs sma;
  std::string sample_model = "underwood";
  auto* sample = app.add_subcommand("sample", "NUTS over the sparse GP for one model");
  add_run_options(sample, sma, false);
  sample->add_option("--model", sample_model, "model")->capture_default_str();

  std::string report_path, report_format = "text";
  auto* report = app.add_subcommand("report", "print a saved calibration report");
  report->add_option("report", report_path, "report.json")->required();
  report->add_option("--format", report_format, "text, csv or json")
      ->check(CLI::IsMember({"text", "csv", "json"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*calibrate) return cmd_calibrate(ca);
    if (*sample) return cmd_sample(sma, sample_model);
    if (*report) return cmd_report(report_path, report_format);
  } catch (const std::exception& e) {
    std::cerr << "fdcal: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

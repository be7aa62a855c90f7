#include "fdcal/fdcal.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <new>
#include <optional>
#include <string>

#include <json.hpp>

#include "analysis.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "fd_models.hpp"
#include "report.hpp"
#include "runner.hpp"

struct fdcal_dataset {
  fdcal::Dataset data;
  std::optional<fdcal::LoadStats> stats;
};

struct fdcal_chain {
  fdcal::SampleOutput out;
};

namespace {

thread_local std::string g_last_error;

fdcal_status status_of(fdcal::ErrorCode c) {
  switch (c) {
    case fdcal::ErrorCode::InvalidArgument: return FDCAL_ERR_INVALID_ARGUMENT;
    case fdcal::ErrorCode::Io: return FDCAL_ERR_IO;
    case fdcal::ErrorCode::Parse: return FDCAL_ERR_PARSE;
    case fdcal::ErrorCode::Domain: return FDCAL_ERR_DOMAIN;
    case fdcal::ErrorCode::Numerical: return FDCAL_ERR_NUMERICAL;
    case fdcal::ErrorCode::NotConverged: return FDCAL_ERR_NOT_CONVERGED;
  }
  return FDCAL_ERR_INTERNAL;
}

fdcal_status fail(fdcal_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
fdcal_status guarded(F&& f) {
  try {
    return f();
  } catch (const fdcal::Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const nlohmann::json::parse_error& e) {
    return fail(FDCAL_ERR_PARSE, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(FDCAL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FDCAL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FDCAL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FDCAL_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void require(bool cond, const char* what) {
  if (!cond) throw fdcal::InvalidArgument(what);
}

nlohmann::json parse_json_arg(const char* text, const char* what) {
  if (!text || !*text) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw fdcal::ParseError(std::string(what) + ": " + e.what());
  }
}

fdcal::RunConfig config_arg(const char* json) {
  auto cfg = fdcal::run_config_from_json(parse_json_arg(json, "configuration"));
  cfg.validate();
  return cfg;
}

}  // namespace

extern "C" {

const char* fdcal_version(void) { return FDCAL_VERSION_STRING; }

const char* fdcal_last_error(void) { return g_last_error.c_str(); }

const char* fdcal_status_name(fdcal_status status) {
  switch (status) {
    case FDCAL_OK: return "ok";
    case FDCAL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FDCAL_ERR_IO: return "i/o error";
    case FDCAL_ERR_PARSE: return "parse error";
    case FDCAL_ERR_DOMAIN: return "domain error";
    case FDCAL_ERR_NUMERICAL: return "numerical error";
    case FDCAL_ERR_NOT_CONVERGED: return "not converged";
    case FDCAL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void fdcal_string_free(char* s) { std::free(s); }

fdcal_status fdcal_dataset_load_csv(const char* path, const char* density_column,
                                    const char* speed_column, fdcal_dataset** out,
                                    char** load_stats_json) {
  return guarded([&] {
    require(path && out, "path and out must be non-null");
    fdcal::CsvSchema schema;
    if (density_column) schema.density_column = density_column;
    if (speed_column) schema.speed_column = speed_column;
    auto loaded = fdcal::load_csv(path, schema);
    char* stats = nullptr;
    if (load_stats_json) {
      stats = dup_string(nlohmann::json{{"raw_rows", loaded.stats.raw_rows},
                                        {"rejected_rows", loaded.stats.rejected_rows},
                                        {"accepted_rows", loaded.stats.accepted_rows}}
                             .dump());
    }
    *out = new fdcal_dataset{std::move(loaded.data), loaded.stats};
    if (load_stats_json) *load_stats_json = stats;
    return FDCAL_OK;
  });
}

fdcal_status fdcal_dataset_from_arrays(const double* density, const double* speed, size_t n,
                                       fdcal_dataset** out) {
  return guarded([&] {
    require(out && (n == 0 || (density && speed)), "arrays and out must be non-null");
    std::vector<fdcal::Observation> obs(n);
    for (size_t i = 0; i < n; ++i) obs[i] = {density[i], speed[i]};
    *out = new fdcal_dataset{fdcal::Dataset(std::move(obs)), std::nullopt};
    return FDCAL_OK;
  });
}

fdcal_status fdcal_dataset_synthesize(const char* spec_json, fdcal_dataset** out, char** truth_json) {
  return guarded([&] {
    require(spec_json && out, "spec and out must be non-null");
    fdcal::SynthSpec spec;
    try {
      spec = fdcal::synth_spec_from_json(parse_json_arg(spec_json, "synth spec"));
    } catch (const nlohmann::json::exception& e) {
      throw fdcal::InvalidArgument(std::string("synth spec: ") + e.what());
    }
    auto result = fdcal::synthesize(spec);
    char* truth = truth_json ? dup_string(fdcal::ground_truth_json(spec, result).dump(2) + "\n") : nullptr;
    *out = new fdcal_dataset{std::move(result.data), std::nullopt};
    if (truth_json) *truth_json = truth;
    return FDCAL_OK;
  });
}

fdcal_status fdcal_dataset_write_csv(const fdcal_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds && path, "dataset and path must be non-null");
    fdcal::write_csv(ds->data, path);
    return FDCAL_OK;
  });
}

size_t fdcal_dataset_size(const fdcal_dataset* ds) { return ds ? ds->data.size() : 0; }

fdcal_status fdcal_dataset_get(const fdcal_dataset* ds, size_t i, double* density, double* speed) {
  return guarded([&] {
    require(ds && density && speed, "arguments must be non-null");
    const auto o = ds->data.at(i);
    *density = o.density;
    *speed = o.speed;
    return FDCAL_OK;
  });
}

fdcal_status fdcal_dataset_histogram(const fdcal_dataset* ds, const double* edges, size_t n_edges,
                                     size_t* counts) {
  return guarded([&] {
    require(ds && edges && counts, "arguments must be non-null");
    const auto c = fdcal::histogram(ds->data, std::vector<double>(edges, edges + n_edges));
    std::copy(c.begin(), c.end(), counts);
    return FDCAL_OK;
  });
}

fdcal_status fdcal_dataset_summary(const fdcal_dataset* ds, char** json) {
  return guarded([&] {
    require(ds && json, "arguments must be non-null");
    *json = dup_string(fdcal::dataset_summary(ds->data, ds->stats ? &*ds->stats : nullptr).dump());
    return FDCAL_OK;
  });
}

void fdcal_dataset_free(fdcal_dataset* ds) { delete ds; }

fdcal_status fdcal_model_speed(const char* model, const double* params, size_t n_params, double k,
                               double* speed) {
  return guarded([&] {
    require(model && params && speed, "arguments must be non-null");
    const auto kind = fdcal::parse_model(model);
    require(n_params == fdcal::param_count(kind), "wrong parameter count for the model");
    Eigen::VectorXd b(static_cast<Eigen::Index>(n_params));
    for (size_t i = 0; i < n_params; ++i) b[static_cast<Eigen::Index>(i)] = params[i];
    *speed = fdcal::evaluate(fdcal::ParamVector(kind, b), k);
    return FDCAL_OK;
  });
}

fdcal_status fdcal_model_param_count(const char* model, size_t* count) {
  return guarded([&] {
    require(model && count, "arguments must be non-null");
    *count = fdcal::param_count(fdcal::parse_model(model));
    return FDCAL_OK;
  });
}

fdcal_status fdcal_model_param_name(const char* model, size_t i, const char** name) {
  return guarded([&] {
    require(model && name, "arguments must be non-null");
    const auto names = fdcal::param_names(fdcal::parse_model(model));
    require(i < names.size(), "parameter index out of range");
    // names are views of string literals, hence NUL-terminated
    *name = names[i].data();
    return FDCAL_OK;
  });
}

fdcal_status fdcal_fit(const fdcal_dataset* ds, const char* model, const char* method,
                       const char* options_json, char** result_json) {
  return guarded([&] {
    require(ds && model && method && result_json, "arguments must be non-null");
    auto cfg = config_arg(options_json);
    cfg.models = {fdcal::parse_model(model)};
    cfg.methods = {fdcal::parse_method(method)};
    const auto out = fdcal::run_calibration(ds->data, cfg);
    const auto& rec = out.report.at("fits").at(0);
    if (rec.at("status") == "failed") {
      const auto kind = rec.value("error_kind", "internal");
      fdcal_status s = FDCAL_ERR_INTERNAL;
      if (kind == "invalid_argument") s = FDCAL_ERR_INVALID_ARGUMENT;
      else if (kind == "domain") s = FDCAL_ERR_DOMAIN;
      else if (kind == "numerical") s = FDCAL_ERR_NUMERICAL;
      return fail(s, rec.value("error", "fit failed"));
    }
    *result_json = dup_string(rec.dump(2));
    if (!out.all_converged) return fail(FDCAL_ERR_NOT_CONVERGED, "fit did not converge");
    return FDCAL_OK;
  });
}

fdcal_status fdcal_calibrate(const fdcal_dataset* ds, const char* config_json, const char* out_dir,
                             char** report_json) {
  return guarded([&] {
    require(ds, "dataset must be non-null");
    const auto cfg = config_arg(config_json);
    const auto out = fdcal::run_calibration(ds->data, cfg, ds->stats ? &*ds->stats : nullptr);
    if (out_dir) fdcal::write_outputs(out, out_dir);
    if (report_json) *report_json = dup_string(fdcal::serialize_report(out.report));
    if (!out.all_converged) return fail(FDCAL_ERR_NOT_CONVERGED, "one or more fits failed or did not converge");
    return FDCAL_OK;
  });
}

fdcal_status fdcal_sample(const fdcal_dataset* ds, const char* model, const char* config_json,
                          fdcal_chain** out) {
  return guarded([&] {
    require(ds && model && out, "arguments must be non-null");
    const auto cfg = config_arg(config_json);
    const auto kind = fdcal::parse_model(model);
    auto s = fdcal::sample_model(ds->data, kind, cfg);
    s.diagnostics["config"] = fdcal::to_json(cfg);
    *out = new fdcal_chain{std::move(s)};
    return FDCAL_OK;
  });
}

size_t fdcal_chain_count(const fdcal_chain* c) { return c ? c->out.rows.size() : 0; }

size_t fdcal_chain_draws(const fdcal_chain* c) {
  return c && !c->out.rows.empty() ? static_cast<size_t>(c->out.rows[0].rows()) : 0;
}

size_t fdcal_chain_columns(const fdcal_chain* c) { return c ? c->out.columns.size() : 0; }

fdcal_status fdcal_chain_column_name(const fdcal_chain* c, size_t col, const char** name) {
  return guarded([&] {
    require(c && name, "arguments must be non-null");
    require(col < c->out.columns.size(), "column index out of range");
    *name = c->out.columns[col].c_str();
    return FDCAL_OK;
  });
}

fdcal_status fdcal_chain_value(const fdcal_chain* c, size_t chain, size_t i, size_t col, double* value) {
  return guarded([&] {
    require(c && value, "arguments must be non-null");
    require(chain < c->out.rows.size(), "chain index out of range");
    const auto& r = c->out.rows[chain];
    require(i < static_cast<size_t>(r.rows()) && col < static_cast<size_t>(r.cols()), "index out of range");
    *value = r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
    return FDCAL_OK;
  });
}

fdcal_status fdcal_chain_diagnostics(const fdcal_chain* c, char** json) {
  return guarded([&] {
    require(c && json, "arguments must be non-null");
    *json = dup_string(c->out.diagnostics.dump(2));
    return FDCAL_OK;
  });
}

int fdcal_chain_ok(const fdcal_chain* c) { return c && c->out.ok ? 1 : 0; }

fdcal_status fdcal_chain_write(const fdcal_chain* c, const char* dir) {
  return guarded([&] {
    require(c && dir, "arguments must be non-null");
    auto files = c->out.files;
    files.push_back({"diagnostics.json", c->out.diagnostics.dump(2) + "\n"});
    fdcal::write_files(files, dir);
    return FDCAL_OK;
  });
}

void fdcal_chain_free(fdcal_chain* c) { delete c; }

fdcal_status fdcal_eti(const double* samples, size_t n, double level, double* lower, double* upper) {
  return guarded([&] {
    require(lower && upper && (n == 0 || samples), "arguments must be non-null");
    const auto [lo, hi] = fdcal::eti(std::vector<double>(samples, samples + n), level);
    *lower = lo;
    *upper = hi;
    return FDCAL_OK;
  });
}

fdcal_status fdcal_report_render(const char* report_path, const char* format, char** out) {
  return guarded([&] {
    require(report_path && out, "arguments must be non-null");
    const auto fmt = fdcal::parse_report_format(format ? format : "text");
    const auto report = fdcal::load_report(report_path);
    *out = dup_string(fdcal::render_report(report, fmt));
    return FDCAL_OK;
  });
}

}  // extern "C"

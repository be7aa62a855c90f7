#include "report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "error.hpp"

namespace fdcal {

namespace {

constexpr int kSchemaVersion = 1;

std::string num(const nlohmann::json& v, const char* spec = "%.4g") {
  if (!v.is_number()) return "-";
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v.get<double>());
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string params_text(const nlohmann::json& p) {
  std::string s;
  for (const auto& [k, v] : p.items()) {
    if (!s.empty()) s += ' ';
    s += k + '=' + num(v, "%.5g");
  }
  return s;
}

void render_text(const nlohmann::json& r, std::ostream& os) {
  const auto& ds = r.at("dataset");
  os << "dataset: n=" << ds.value("n", 0);
  if (ds.contains("min_density")) {
    os << " density=[" << num(ds["min_density"]) << ", " << num(ds["max_density"]) << "]"
       << " share<20=" << num(ds["share_below_20"], "%.3f");
  }
  if (ds.contains("raw_rows")) os << " raw=" << ds["raw_rows"] << " rejected=" << ds["rejected_rows"];
  os << "\nseed: " << r.at("config").value("seed", 0) << "\n\nfits\n";
  os << pad("model", 14) << pad("method", 9) << pad("status", 15) << pad("objective", 13) << "params\n";
  for (const auto& f : r.at("fits")) {
    os << pad(f.at("model").get<std::string>(), 14) << pad(f.at("method").get<std::string>(), 9)
       << pad(f.at("status").get<std::string>(), 15) << pad(num(f.value("objective", nlohmann::json())), 13);
    if (f.contains("params")) {
      os << params_text(f["params"]);
    } else {
      os << f.value("error", "");
    }
    os << '\n';
  }

  // One row per hyperparameter per method, one column per model.
  const auto& hyper = r.at("hyper_table");
  if (!hyper.empty()) {
    std::vector<std::string> models;
    for (const auto& h : hyper) {
      const auto m = h.at("model").get<std::string>();
      if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
    }
    os << "\nkernel hyperparameters\n" << pad("", 20);
    for (const auto& m : models) os << pad(m, 14);
    os << '\n';
    for (const char* method : {"mle", "mcmc"}) {
      for (const char* q : {"lengthscale", "variance"}) {
        bool any = false;
        std::string line = pad(std::string(q) + " (" + method + ")", 20);
        for (const auto& m : models) {
          std::string cell = "-";
          for (const auto& h : hyper) {
            if (h["model"] == m && h["method"] == method) {
              cell = num(h[q], "%.2f");
              any = true;
            }
          }
          line += pad(cell, 14);
        }
        if (any) os << line << '\n';
      }
    }
  }

  os << "\nbinned RMSE (km/h)\n";
  bool header = false;
  for (const auto& f : r.at("fits")) {
    if (!f.contains("rmse_bins")) continue;
    const auto& b = f["rmse_bins"];
    if (!header) {
      os << pad("model/method", 24);
      const auto& e = b.at("edges");
      for (std::size_t j = 0; j + 1 < e.size(); ++j) os << pad(num(e[j], "%g") + "-" + num(e[j + 1], "%g"), 9);
      os << '\n';
      header = true;
    }
    os << pad(f["model"].get<std::string>() + "/" + f["method"].get<std::string>(), 24);
    for (const auto& x : b.at("rmse")) os << pad(num(x, "%.2f"), 9);
    os << '\n';
  }
}

void render_csv(const nlohmann::json& r, std::ostream& os) {
  os << "table,model,method,quantity,value\n";
  for (const auto& f : r.at("fits")) {
    const auto model = f.at("model").get<std::string>();
    const auto method = f.at("method").get<std::string>();
    os << "fit," << model << ',' << method << ",status," << f.at("status").get<std::string>() << '\n';
    if (f.contains("objective")) os << "fit," << model << ',' << method << ",objective," << num(f["objective"], "%.17g") << '\n';
    if (f.contains("params")) {
      for (const auto& [k, v] : f["params"].items()) {
        os << "fit," << model << ',' << method << ',' << k << ',' << num(v, "%.17g") << '\n';
      }
    }
    if (f.contains("rmse_bins")) {
      const auto& b = f["rmse_bins"];
      const auto& e = b.at("edges");
      for (std::size_t j = 0; j + 1 < e.size(); ++j) {
        const auto& x = b.at("rmse")[j];
        os << "rmse," << model << ',' << method << ",bin_" << num(e[j], "%g") << '_' << num(e[j + 1], "%g") << ','
           << (x.is_null() ? std::string() : num(x, "%.17g")) << '\n';
      }
    }
  }
  for (const auto& h : r.at("hyper_table")) {
    for (const char* q : {"lengthscale", "variance"}) {
      os << "hyper," << h.at("model").get<std::string>() << ',' << h.at("method").get<std::string>() << ','
         << q << ',' << num(h.at(q), "%.17g") << '\n';
    }
  }
}

}  // namespace

ReportFormat parse_report_format(std::string_view name) {
  if (name == "text") return ReportFormat::Text;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  throw InvalidArgument("unknown report format '" + std::string(name) + "' (text, csv, json)");
}

std::string serialize_report(const nlohmann::json& report) { return report.dump(2) + "\n"; }

nlohmann::json parse_report(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("corrupt report: ") + e.what());
  }
  validate_report(j);
  return j;
}

nlohmann::json load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str());
}

void validate_report(const nlohmann::json& r) {
  if (!r.is_object() || !r.contains("schema_version")) throw InvalidArgument("not a calibration report");
  if (r["schema_version"] != kSchemaVersion) {
    throw InvalidArgument("unsupported report schema version " + r["schema_version"].dump());
  }
  for (const char* key : {"config", "dataset", "fits", "hyper_table"}) {
    if (!r.contains(key)) throw InvalidArgument(std::string("report is missing '") + key + "'");
  }
  std::set<std::pair<std::string, std::string>> present;
  try {
    for (const auto& f : r["fits"]) {
      f.at("status").get<std::string>();
      present.emplace(f.at("model").get<std::string>(), f.at("method").get<std::string>());
    }
    for (const auto& m : r["config"].at("models")) {
      for (const auto& k : r["config"].at("methods")) {
        if (!present.count({m.get<std::string>(), k.get<std::string>()})) {
          throw InvalidArgument("report lacks the fit " + m.get<std::string>() + "/" + k.get<std::string>());
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed report: ") + e.what());
  }
}

std::string render_report(const nlohmann::json& report, ReportFormat format) {
  validate_report(report);
  if (format == ReportFormat::Json) return serialize_report(report);
  std::ostringstream os;
  try {
    if (format == ReportFormat::Text) {
      render_text(report, os);
    } else {
      render_csv(report, os);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed report: ") + e.what());
  }
  return os.str();
}

}  // namespace fdcal

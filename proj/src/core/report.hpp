#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace fdcal {

enum class ReportFormat { Text, Csv, Json };
ReportFormat parse_report_format(std::string_view name);

// Canonical text form: two-space indent, sorted keys, trailing newline.
std::string serialize_report(const nlohmann::json& report);

// Throws ParseError carrying the parse location, or InvalidArgument when the
// document is not a calibration report.
nlohmann::json parse_report(const std::string& text);
nlohmann::json load_report(const std::string& path);

// Schema version and one fit record per requested (model, method) pair.
void validate_report(const nlohmann::json& report);

std::string render_report(const nlohmann::json& report, ReportFormat format);

}  // namespace fdcal

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace kpa {

struct ReportRow {
  std::string experiment;  // Baseline, Approach 1, Approach 2
  std::string template_name;
  std::string generator;
  std::string model;
  std::optional<double> in_domain;
  std::optional<double> cross_domain;
};

/// One row per (experiment, template, generator, model); the in-domain and
/// cross-domain runs of the same system share a row.
std::vector<ReportRow> collect_report_rows(std::span<const nlohmann::json> run_records);

/// Pipe table with a header row; missing cells are "-".
std::string render_report_table(std::span<const ReportRow> rows);
nlohmann::ordered_json report_json(std::span<const ReportRow> rows);

}  // namespace kpa

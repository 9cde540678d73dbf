#include "kpa/report.hpp"

#include <algorithm>
#include <tuple>

#include "fmt/format.h"
#include "kpa/error.hpp"

namespace kpa {
namespace {

int rank_of(std::span<const std::string_view> order, const std::string& value) {
  const auto it = std::find(order.begin(), order.end(), value);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

constexpr std::array<std::string_view, 3> kExperiments{"Baseline", "Approach 1", "Approach 2"};
constexpr std::array<std::string_view, 2> kGenerators{"T5-small", "BART-large"};
constexpr std::array<std::string_view, 8> kModels{"T5-small",    "T5-base", "BERT-base", "BERT-large",
                                                  "Naive Bayes", "SVM",     "Decision Tree", "BART-large"};

// Classifier columns of Approach 2 list the classical learners first.
int model_rank(const ReportRow& row) {
  if (row.experiment == "Approach 2") {
    constexpr std::array<std::string_view, 5> order{"Naive Bayes", "SVM", "Decision Tree", "T5-small", "BERT-base"};
    return rank_of(order, row.model);
  }
  return rank_of(kModels, row.model);
}

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : "-"; }

}  // namespace

std::vector<ReportRow> collect_report_rows(std::span<const nlohmann::json> run_records) {
  std::vector<ReportRow> rows;
  for (const auto& record : run_records) {
    try {
      const auto& r = record.at("row");
      ReportRow key{r.at("experiment").get<std::string>(), r.at("template").get<std::string>(),
                    r.at("generator").get<std::string>(), r.at("model").get<std::string>(), {}, {}};
      const bool in_domain = r.at("domain").get<std::string>() == "in_domain";
      const double f1 = record.at("evaluation").at("test").at("macro_f1").get<double>();
      auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& row) {
        return std::tie(row.experiment, row.template_name, row.generator, row.model) ==
                   std::tie(key.experiment, key.template_name, key.generator, key.model) &&
               !(in_domain ? row.in_domain : row.cross_domain);
      });
      if (it == rows.end()) it = rows.insert(rows.end(), key);
      (in_domain ? it->in_domain : it->cross_domain) = f1;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ArtifactCorrupt, std::string("run record: ") + e.what());
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    const auto key = [](const ReportRow& r) {
      return std::make_tuple(rank_of(kExperiments, r.experiment), r.template_name, rank_of(kGenerators, r.generator),
                             model_rank(r));
    };
    return key(a) < key(b);
  });
  return rows;
}

std::string render_report_table(std::span<const ReportRow> rows) {
  const std::array<std::string, 6> header{"Experiment", "Prompt Template", "PLM for Intermediary Text",
                                          "Model",      "in-domain",       "cross-domain"};
  std::vector<std::array<std::string, 6>> body;
  for (const auto& r : rows) {
    body.push_back({r.experiment, r.template_name, r.generator, r.model, cell(r.in_domain), cell(r.cross_domain)});
  }
  std::array<std::size_t, 6> width{};
  for (std::size_t c = 0; c < 6; ++c) {
    width[c] = header[c].size();
    for (const auto& line : body) width[c] = std::max(width[c], line[c].size());
  }
  const auto format_line = [&](const std::array<std::string, 6>& cells) {
    std::string out = "|";
    for (std::size_t c = 0; c < 6; ++c) out += " " + cells[c] + std::string(width[c] - cells[c].size(), ' ') + " |";
    return out + "\n";
  };
  std::string out = format_line(header) + "|";
  for (std::size_t c = 0; c < 6; ++c) out += std::string(width[c] + 2, '-') + "|";
  out += "\n";
  for (const auto& line : body) out += format_line(line);
  return out;
}

nlohmann::ordered_json report_json(std::span<const ReportRow> rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row{{"experiment", r.experiment},
                               {"template", r.template_name},
                               {"generator", r.generator},
                               {"model", r.model},
                               {"in_domain_f1", nullptr},
                               {"cross_domain_f1", nullptr}};
    if (r.in_domain) row["in_domain_f1"] = *r.in_domain;
    if (r.cross_domain) row["cross_domain_f1"] = *r.cross_domain;
    out.push_back(row);
  }
  return out;
}

}  // namespace kpa

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "banditmatch/trainer.hpp"

namespace bmatch {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError("report: bad number '" + s + "'", line);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("report: bad number '" + s + "'", line);
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string metric_cells(const MetricSummary& s) {
  std::string out;
  for (const world::MeanStd* m : {&s.turns, &s.match, &s.inform_recall, &s.inform_f1, &s.success_pct}) {
    out += "," + num(m->mean) + "," + num(m->std);
  }
  return out;
}

const char* kMetricHeader =
    "turn_mean,turn_std,match_mean,match_std,inform_recall_mean,inform_recall_std,inform_f1_mean,inform_f1_std,"
    "success_mean,success_std";

void check_method_name(const std::string& name) {
  if (name.find_first_of(",\"\n") != std::string::npos) {
    throw UsageError("method name '" + name + "' cannot be written to CSV");
  }
}

nlohmann::ordered_json mean_std_json(const world::MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

}  // namespace

ReportRow report_row(const ExperimentReport& report) { return {report.method, report.runs.size(), report.summary}; }

std::string report_csv_header() { return std::string("method,runs,") + kMetricHeader + "\n"; }

std::string reports_to_csv(const std::vector<ExperimentReport>& reports) {
  std::string out = report_csv_header();
  for (const auto& r : reports) {
    check_method_name(r.method);
    out += r.method + "," + std::to_string(r.runs.size()) + metric_cells(r.summary) + "\n";
  }
  return out;
}

std::vector<ReportRow> reports_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line) || line + "\n" != report_csv_header()) {
    throw ParseError("report: unexpected header", 1);
  }
  ++lineno;
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 12) throw ParseError("report: expected 12 columns", lineno);
    ReportRow row;
    row.method = cells[0];
    row.runs = static_cast<std::size_t>(parse_double(cells[1], lineno));
    world::MeanStd* fields[] = {&row.summary.turns, &row.summary.match, &row.summary.inform_recall,
                                &row.summary.inform_f1, &row.summary.success_pct};
    for (std::size_t k = 0; k < 5; ++k) {
      fields[k]->mean = parse_double(cells[2 + 2 * k], lineno);
      fields[k]->std = parse_double(cells[3 + 2 * k], lineno);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
  std::string out = std::string("sl_percent,method,runs,") + kMetricHeader + "\n";
  for (const auto& p : points) {
    check_method_name(p.report.method);
    out += std::to_string(p.percent) + "," + p.report.method + "," + std::to_string(p.report.runs.size()) +
           metric_cells(p.report.summary) + "\n";
  }
  return out;
}

std::string report_to_json(const std::vector<ExperimentReport>& reports) {
  nlohmann::ordered_json j;
  j["format"] = "banditmatch.report";
  j["version"] = 1;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json e;
    e["method"] = r.method;
    auto runs = nlohmann::ordered_json::array();
    for (const auto& a : r.runs) {
      runs.push_back({{"episodes", a.count},
                      {"turn", mean_std_json(a.turns)},
                      {"match", mean_std_json(a.match)},
                      {"inform_recall", mean_std_json(a.inform_recall)},
                      {"inform_precision", mean_std_json(a.inform_precision)},
                      {"inform_f1", mean_std_json(a.inform_f1)},
                      {"success_pct", mean_std_json(a.success_pct)}});
    }
    e["runs"] = std::move(runs);
    e["summary"] = {{"turn", mean_std_json(r.summary.turns)},
                    {"match", mean_std_json(r.summary.match)},
                    {"inform_recall", mean_std_json(r.summary.inform_recall)},
                    {"inform_f1", mean_std_json(r.summary.inform_f1)},
                    {"success_pct", mean_std_json(r.summary.success_pct)}};
    if (!r.config_echo.empty()) e["config"] = r.config_echo;
    if (!r.train_log_path.empty()) e["train_log"] = r.train_log_path;
    arr.push_back(std::move(e));
  }
  j["reports"] = std::move(arr);
  return j.dump(2) + "\n";
}

std::string reports_to_table(const std::vector<ExperimentReport>& reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-14s %-16s %-16s %-16s %-14s\n", static_cast<int>(width), "method", "Turn",
                "Match", "Inform Rec", "Inform F1", "Success");
  out += buf;
  for (const auto& r : reports) {
    const auto& s = r.summary;
    std::snprintf(buf, sizeof buf, "%-*s  %-14s %-16s %-16s %-16s %-14s\n", static_cast<int>(width), r.method.c_str(),
                  world::format_mean_std(s.turns, 2, 2).c_str(), world::format_mean_std(s.match, 3, 3).c_str(),
                  world::format_mean_std(s.inform_recall, 3, 3).c_str(),
                  world::format_mean_std(s.inform_f1, 3, 3).c_str(),
                  world::format_mean_std(s.success_pct, 1, 2).c_str());
    out += buf;
  }
  return out;
}

}  // namespace bmatch

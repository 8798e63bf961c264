#include "hiermil/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "hiermil/common.hpp"

using nlohmann::json;

namespace hiermil {

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

namespace {

constexpr const char* kMetricNames[4] = {"CorLoc@0.5", "CorLoc@0.7",
                                         "mAP@0.5", "mAP@0.7"};

std::optional<double> metric_of(const ClassEval& e, int metric) {
  switch (metric) {
    case 0: return e.corloc_05;
    case 1: return e.corloc_07;
    case 2: return e.ap_05;
    default: return e.ap_07;
  }
}

std::string cell(const std::optional<double>& v) {
  return v ? format_percent(*v) : std::string("-");
}

void append_row(std::string* out, const std::string& head,
                const std::vector<std::string>& cells,
                const std::vector<std::size_t>& widths,
                std::size_t head_width) {
  out->append(head);
  out->append(head_width > head.size() ? head_width - head.size() : 0, ' ');
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string& c = cells[i];
    out->append(2 + (widths[i] > c.size() ? widths[i] - c.size() : 0), ' ');
    out->append(c);
  }
  out->push_back('\n');
}

}  // namespace

std::string render_report_text(const EvalReport& report) {
  std::vector<std::string> labels;
  bool any_oracle = false;
  for (const EvalColumn& col : report.columns) {
    labels.push_back(col.oracle ? col.label + "*" : col.label);
    any_oracle = any_oracle || col.oracle;
  }

  // Rows: lambda plus the four metrics, aggregated over classes.
  std::vector<std::vector<std::string>> rows(5);
  for (const EvalColumn& col : report.columns) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", col.lambda);
    rows[0].push_back(buf);
    const ClassEval agg = col.aggregates();
    for (int m = 0; m < 4; ++m) rows[m + 1].push_back(cell(metric_of(agg, m)));
  }

  std::size_t head_width = std::string("CorLoc@0.5 (%)").size();
  std::vector<std::size_t> widths(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    widths[i] = labels[i].size();
    for (const auto& row : rows) widths[i] = std::max(widths[i], row[i].size());
  }

  std::string out;
  append_row(&out, "strategy", labels, widths, head_width);
  append_row(&out, "lambda", rows[0], widths, head_width);
  for (int m = 0; m < 4; ++m) {
    append_row(&out, std::string(kMetricNames[m]) + " (%)", rows[m + 1],
               widths, head_width);
  }
  if (any_oracle) {
    out += "\n(*) oracle: picks its source class using ground truth\n";
  }

  // Per-class detail, one block per metric.
  for (int m = 0; m < 4; ++m) {
    out += "\n";
    out += kMetricNames[m];
    out += " per class (%)\n";
    std::size_t name_width = std::string("class").size();
    for (const auto& [cls, name] : report.class_names) {
      name_width = std::max(name_width, name.size());
    }
    append_row(&out, "class", labels, widths, name_width);
    for (const auto& [cls, name] : report.class_names) {
      std::vector<std::string> cells;
      for (const EvalColumn& col : report.columns) {
        auto it = col.per_class.find(cls);
        cells.push_back(it == col.per_class.end()
                            ? std::string("-")
                            : cell(metric_of(it->second, m)));
      }
      append_row(&out, name, cells, widths, name_width);
    }
  }
  return out;
}

namespace {

json eval_to_json(const ClassEval& e) {
  json j = json::object();
  if (e.corloc_05) j["corloc_05"] = *e.corloc_05;
  if (e.corloc_07) j["corloc_07"] = *e.corloc_07;
  if (e.ap_05) j["ap_05"] = *e.ap_05;
  if (e.ap_07) j["ap_07"] = *e.ap_07;
  return j;
}

ClassEval eval_from_json(const json& j) {
  ClassEval e;
  if (j.contains("corloc_05")) e.corloc_05 = j["corloc_05"].get<double>();
  if (j.contains("corloc_07")) e.corloc_07 = j["corloc_07"].get<double>();
  if (j.contains("ap_05")) e.ap_05 = j["ap_05"].get<double>();
  if (j.contains("ap_07")) e.ap_07 = j["ap_07"].get<double>();
  return e;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  j["format"] = "hiermil-report";
  j["version"] = 1;
  json classes = json::object();
  for (const auto& [cls, name] : report.class_names) {
    classes[std::to_string(cls)] = name;
  }
  j["classes"] = classes;
  json columns = json::array();
  for (const EvalColumn& col : report.columns) {
    json entry;
    entry["strategy"] = col.label;
    entry["lambda"] = col.lambda;
    entry["oracle"] = col.oracle;
    json per_class = json::object();
    for (const auto& [cls, eval] : col.per_class) {
      per_class[std::to_string(cls)] = eval_to_json(eval);
    }
    entry["per_class"] = per_class;
    entry["aggregate"] = eval_to_json(col.aggregates());
    columns.push_back(entry);
  }
  j["columns"] = columns;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
  if (j.value("format", "") != "hiermil-report" || j.value("version", 0) != 1) {
    throw DataError("not a hiermil-report v1 record");
  }
  EvalReport report;
  for (const auto& [key, value] : j.at("classes").items()) {
    report.class_names[std::stoi(key)] = value.get<std::string>();
  }
  for (const json& entry : j.at("columns")) {
    EvalColumn col;
    col.label = entry.at("strategy").get<std::string>();
    col.lambda = entry.at("lambda").get<double>();
    col.oracle = entry.at("oracle").get<bool>();
    for (const auto& [key, value] : entry.at("per_class").items()) {
      col.per_class[std::stoi(key)] = eval_from_json(value);
    }
    report.columns.push_back(std::move(col));
  }
  return report;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "class,strategy,lambda,oracle,corloc_05,corloc_07,ap_05,ap_07\n";
  auto emit = [&](const std::string& cls_name, const EvalColumn& col,
                  const ClassEval& e) {
    out << cls_name << ',' << col.label << ',' << format_double(col.lambda)
        << ',' << (col.oracle ? 1 : 0);
    for (int m = 0; m < 4; ++m) {
      const std::optional<double> v = metric_of(e, m);
      out << ',' << (v ? format_double(*v) : "");
    }
    out << '\n';
  };
  for (const EvalColumn& col : report.columns) {
    for (const auto& [cls, eval] : col.per_class) {
      auto it = report.class_names.find(cls);
      emit(it == report.class_names.end() ? std::to_string(cls) : it->second,
           col, eval);
    }
    emit("MEAN", col, col.aggregates());
  }
  return out.str();
}

}  // namespace hiermil

#pragma once

#include <string>

#include "hiermil/metrics.hpp"

namespace hiermil {

// "0.703" -> "70.3": display form of every metric in the text table.
std::string format_percent(double fraction);

// Aligned metric-by-strategy table with per-class detail underneath.
// Oracle columns are starred.
std::string render_report_text(const EvalReport& report);

// Structured forms keep full precision. JSON round-trips losslessly.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string report_to_csv(const EvalReport& report);

}  // namespace hiermil

#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "mmem/cvharness.hpp"

namespace mmem {

// Metrics report: {"schema", "rows": [{endpoint, model, metrics: [{metric,
// point, ci_lo, ci_hi, n, horizon?, ...}]}]}, one row per (endpoint, model).
nlohmann::json metrics_report(std::span<const EndpointReport> reports);

// patient_id, fold, one column per model, time, event.
void write_predictions_csv(std::ostream& out, const PooledPredictions& pooled);

// endpoint, model, group, time, survival, at_risk
void write_km_csv(std::ostream& out, std::span<const EndpointReport> reports);

// endpoint, model, horizon_years, fpr, tpr, threshold
void write_roc_csv(std::ostream& out, std::span<const EndpointReport> reports);

// Step plots of the low/high risk Kaplan-Meier curves of one model.
std::string km_svg(const ModelMetrics& m, const std::string& title);
// ROC curves of every model at one horizon.
std::string roc_svg(const EndpointReport& report, double horizon_years, const std::string& title);

}  // namespace mmem

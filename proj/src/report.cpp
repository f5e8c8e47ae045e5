#include "mmem/report.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

#include "mmem/text.hpp"

namespace mmem {

using nlohmann::json;

namespace {

json interval(std::string metric, double point, double lo, double hi, std::size_t n) {
  return json{{"metric", std::move(metric)}, {"point", point}, {"ci_lo", lo}, {"ci_hi", hi}, {"n", n}};
}

}  // namespace

json metrics_report(std::span<const EndpointReport> reports) {
  json rows = json::array();
  for (const auto& rep : reports) {
    for (const auto& m : rep.models) {
      json metrics = json::array();
      json c = interval("c_index", m.cindex.point, m.cindex.lo, m.cindex.hi, rep.n_patients);
      c["n_boot_defined"] = m.cindex.n_defined;
      if (m.vs_fused) {
        c["t_vs_mmem"] = m.vs_fused->t;
        c["p_vs_mmem"] = m.vs_fused->p;
        c["t_test_degenerate"] = m.vs_fused->degenerate;
      }
      metrics.push_back(std::move(c));
      if (m.logrank) {
        metrics.push_back({{"metric", "logrank"},
                           {"chi2", m.logrank->chi2},
                           {"p", m.logrank->p},
                           {"n_low", m.km_low.at_risk.empty() ? 0 : m.km_low.at_risk.front()},
                           {"n_high", m.km_high.at_risk.empty() ? 0 : m.km_high.at_risk.front()}});
      }
      for (const auto& h : m.horizons) {
        json a;
        const auto n = static_cast<std::size_t>(h.n_positive + h.n_negative);
        if (h.auc) {
          a = interval("auroc", h.auc->auc_a, h.auc->ci_lo, h.auc->ci_hi, n);
          a["variance"] = h.auc->var_a;
        } else {
          a = json{{"metric", "auroc"}, {"point", nullptr}, {"ci_lo", nullptr}, {"ci_hi", nullptr}, {"n", n}};
        }
        a["horizon"] = h.years;
        a["n_positive"] = h.n_positive;
        a["n_negative"] = h.n_negative;
        a["n_excluded"] = h.n_excluded;
        if (h.vs_fused && h.vs_fused->p) {
          a["z_vs_mmem"] = *h.vs_fused->z;
          a["p_vs_mmem"] = *h.vs_fused->p;
        }
        metrics.push_back(std::move(a));
      }
      rows.push_back({{"endpoint", std::string(to_string(rep.endpoint))}, {"model", m.model}, {"metrics", metrics}});
    }
  }
  return json{{"schema", "mmem-report/1"}, {"rows", rows}};
}

void write_predictions_csv(std::ostream& out, const PooledPredictions& p) {
  out << "patient_id,fold";
  for (const auto& m : p.model_names) out << ',' << csv_escape(m);
  out << ",time,event\n";
  for (std::size_t i = 0; i < p.patient_ids.size(); ++i) {
    out << csv_escape(p.patient_ids[i]) << ',' << p.fold[i];
    for (Eigen::Index k = 0; k < p.risks.cols(); ++k) out << ',' << format_double(p.risks(static_cast<Eigen::Index>(i), k));
    out << ',' << format_double(p.outcomes[i].time) << ',' << (p.outcomes[i].event ? 1 : 0) << '\n';
  }
}

void write_km_csv(std::ostream& out, std::span<const EndpointReport> reports) {
  out << "endpoint,model,group,time,survival,at_risk\n";
  for (const auto& rep : reports) {
    for (const auto& m : rep.models) {
      for (const auto* g : {&m.km_low, &m.km_high}) {
        const char* name = g == &m.km_low ? "low" : "high";
        for (std::size_t i = 0; i < g->times.size(); ++i) {
          out << to_string(rep.endpoint) << ',' << csv_escape(m.model) << ',' << name << ','
              << format_double(g->times[i]) << ',' << format_double(g->survival[i]) << ',' << g->at_risk[i] << '\n';
        }
      }
    }
  }
}

void write_roc_csv(std::ostream& out, std::span<const EndpointReport> reports) {
  out << "endpoint,model,horizon_years,fpr,tpr,threshold\n";
  for (const auto& rep : reports) {
    for (const auto& m : rep.models) {
      for (const auto& h : m.horizons) {
        for (const auto& pt : h.roc) {
          out << to_string(rep.endpoint) << ',' << csv_escape(m.model) << ',' << format_double(h.years) << ','
              << format_double(pt.fpr) << ',' << format_double(pt.tpr) << ',' << format_double(pt.threshold) << '\n';
        }
      }
    }
  }
}

namespace {

constexpr double kW = 480, kH = 360, kPad = 40;
const char* const kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << title << "</text>\n"
    << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kW - 2 * kPad << "\" height=\"" << kH - 2 * kPad
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  return s.str();
}

std::string px(double fx, double fy) {
  return format_double(kPad + fx * (kW - 2 * kPad)) + "," + format_double(kH - kPad - fy * (kH - 2 * kPad));
}

}  // namespace

std::string km_svg(const ModelMetrics& m, const std::string& title) {
  double t_max = 1.0;
  for (const auto* g : {&m.km_low, &m.km_high}) {
    if (!g->times.empty()) t_max = std::max(t_max, g->times.back());
  }
  std::string svg = header(title);
  int colour = 0;
  for (const auto* g : {&m.km_low, &m.km_high}) {
    std::string pts = px(0.0, 1.0);
    double s = 1.0;
    for (std::size_t i = 0; i < g->times.size(); ++i) {
      pts += " " + px(g->times[i] / t_max, s);
      s = g->survival[i];
      pts += " " + px(g->times[i] / t_max, s);
    }
    pts += " " + px(1.0, s);
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(kColours[colour]) + "\" points=\"" + pts + "\"/>\n";
    svg += "<text x=\"" + format_double(kW - kPad - 60) + "\" y=\"" + format_double(kPad + 16 + 16 * colour) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + kColours[colour] + "\">" +
           (g == &m.km_low ? "low risk" : "high risk") + "</text>\n";
    ++colour;
  }
  return svg + "</svg>\n";
}

std::string roc_svg(const EndpointReport& report, double horizon_years, const std::string& title) {
  std::string svg = header(title);
  svg += "<line x1=\"" + format_double(kPad) + "\" y1=\"" + format_double(kH - kPad) + "\" x2=\"" +
         format_double(kW - kPad) + "\" y2=\"" + format_double(kPad) + "\" stroke=\"#999\" stroke-dasharray=\"4\"/>\n";
  std::size_t colour = 0;
  for (const auto& m : report.models) {
    for (const auto& h : m.horizons) {
      if (h.years != horizon_years || h.roc.empty()) continue;
      std::string pts;
      for (const auto& p : h.roc) pts += (pts.empty() ? "" : " ") + px(p.fpr, p.tpr);
      const char* c = kColours[colour % std::size(kColours)];
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" points=\"" + pts + "\"/>\n";
      svg += "<text x=\"" + format_double(kW - kPad - 150) + "\" y=\"" +
             format_double(kH - kPad - 12 - 14 * static_cast<double>(colour)) +
             "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + c + "\">" + m.model + "</text>\n";
    }
    ++colour;
  }
  return svg + "</svg>\n";
}

}  // namespace mmem

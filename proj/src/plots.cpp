#include "dermbench/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace dermbench {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(double v, int decimals = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

}  // namespace

std::string render_svg(const LinePlot& plot) {
    const auto& f = plot.frame;
    std::ostringstream s;
    s << R"(<?xml version="1.0" encoding="UTF-8"?>)" << "\n";
    s << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << fmt(f.width, 0) << R"(" height=")" << fmt(f.height, 0)
      << R"(" viewBox="0 0 )" << fmt(f.width, 0) << ' ' << fmt(f.height, 0) << R"(" font-family="sans-serif" font-size="12">)"
      << "\n";
    s << R"(<rect x="0" y="0" width=")" << fmt(f.width, 0) << R"(" height=")" << fmt(f.height, 0)
      << R"(" fill="white"/>)" << "\n";
    s << R"(<text x=")" << fmt(f.width / 2) << R"(" y="24" text-anchor="middle" font-size="15">)" << escape(plot.title)
      << "</text>\n";

    const double x0 = f.px(f.x_min), x1 = f.px(f.x_max), y0 = f.py(f.y_min), y1 = f.py(f.y_max);
    s << R"(<g class="axes" stroke="black" fill="none">)" << "\n";
    s << R"(<rect x=")" << fmt(x0) << R"(" y=")" << fmt(y1) << R"(" width=")" << fmt(x1 - x0) << R"(" height=")"
      << fmt(y0 - y1) << R"("/>)" << "\n";
    s << "</g>\n";

    s << R"(<g class="ticks" fill="black">)" << "\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = f.x_min + (f.x_max - f.x_min) * i / 5.0;
        const double yv = f.y_min + (f.y_max - f.y_min) * i / 5.0;
        s << R"(<line x1=")" << fmt(f.px(xv)) << R"(" y1=")" << fmt(y0) << R"(" x2=")" << fmt(f.px(xv)) << R"(" y2=")"
          << fmt(y0 + 5) << R"(" stroke="black"/>)";
        s << R"(<text x=")" << fmt(f.px(xv)) << R"(" y=")" << fmt(y0 + 18) << R"(" text-anchor="middle">)"
          << tick_label(xv) << "</text>\n";
        s << R"(<line x1=")" << fmt(x0 - 5) << R"(" y1=")" << fmt(f.py(yv)) << R"(" x2=")" << fmt(x0) << R"(" y2=")"
          << fmt(f.py(yv)) << R"(" stroke="black"/>)";
        s << R"(<text x=")" << fmt(x0 - 8) << R"(" y=")" << fmt(f.py(yv) + 4) << R"(" text-anchor="end">)"
          << tick_label(yv) << "</text>\n";
    }
    s << "</g>\n";
    s << R"(<text class="x-label" x=")" << fmt((x0 + x1) / 2) << R"(" y=")" << fmt(f.height - 16)
      << R"(" text-anchor="middle">)" << escape(plot.x_label) << "</text>\n";
    s << R"(<text class="y-label" x="18" y=")" << fmt((y0 + y1) / 2) << R"(" text-anchor="middle" transform="rotate(-90 18 )"
      << fmt((y0 + y1) / 2) << ")\">" << escape(plot.y_label) << "</text>\n";

    if (plot.chance_diagonal) {
        s << R"(<line class="chance" x1=")" << fmt(x0) << R"(" y1=")" << fmt(y0) << R"(" x2=")" << fmt(x1) << R"(" y2=")"
          << fmt(y1) << R"(" stroke="#999999" stroke-dasharray="4 4"/>)" << "\n";
    }

    for (std::size_t i = 0; i < plot.series.size(); ++i) {
        const auto& ser = plot.series[i];
        const char* color = kPalette[i % std::size(kPalette)];
        s << R"(<polyline class="series" data-label=")" << escape(ser.label) << R"(" fill="none" stroke=")" << color
          << R"(" stroke-width="2")" << (ser.dashed ? R"( stroke-dasharray="6 3")" : "") << R"( points=")";
        for (std::size_t p = 0; p < ser.x.size(); ++p) {
            if (p) s << ' ';
            s << fmt(f.px(ser.x[p])) << ',' << fmt(f.py(ser.y[p]));
        }
        s << R"("/>)" << "\n";
        if (ser.markers) {
            for (std::size_t p = 0; p < ser.x.size(); ++p) {
                s << R"(<circle cx=")" << fmt(f.px(ser.x[p])) << R"(" cy=")" << fmt(f.py(ser.y[p])) << R"(" r="3" fill=")"
                  << color << R"("/>)" << "\n";
            }
        }
        const double ly = f.top + 16 + 18.0 * static_cast<double>(i);
        const double lx = x1 - 230;
        s << R"(<line x1=")" << fmt(lx) << R"(" y1=")" << fmt(ly) << R"(" x2=")" << fmt(lx + 20) << R"(" y2=")" << fmt(ly)
          << R"(" stroke=")" << color << R"(" stroke-width="2"/>)";
        s << R"(<text class="legend" x=")" << fmt(lx + 26) << R"(" y=")" << fmt(ly + 4) << R"(">)" << escape(ser.label)
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string render_roc_svg(const EvaluationReport& report) {
    LinePlot plot;
    plot.title = "ROC curve: " + report.classifier + (report.backend.empty() ? "" : " (" + report.backend + ")");
    plot.x_label = "False positive rate";
    plot.y_label = "True positive rate";
    plot.chance_diagonal = true;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        if (!report.roc[k]) continue;
        PlotSeries s;
        s.label = std::string(to_string(kClassOrder[k])) + " (AUROC " + fmt(*report.per_class[k].auroc) + ")";
        s.x = report.roc[k]->fpr;
        s.y = report.roc[k]->tpr;
        plot.series.push_back(std::move(s));
    }
    if (report.macro_auroc) plot.title += ", macro AUROC " + fmt(*report.macro_auroc);
    return render_svg(plot);
}

std::string render_pr_svg(const EvaluationReport& report) {
    LinePlot plot;
    plot.title = "Precision-recall curve: " + report.classifier + (report.backend.empty() ? "" : " (" + report.backend + ")");
    plot.x_label = "Recall";
    plot.y_label = "Precision";
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        if (!report.pr[k]) continue;
        PlotSeries s;
        s.label = std::string(to_string(kClassOrder[k])) + " (AP " + fmt(average_precision(*report.pr[k])) + ")";
        s.x = report.pr[k]->recall;
        s.y = report.pr[k]->precision;
        plot.series.push_back(std::move(s));
    }
    return render_svg(plot);
}

std::string render_learning_curve_svg(const std::string& title, const std::vector<double>& sizes,
                                      const std::vector<double>& train_accuracy,
                                      const std::vector<double>& test_accuracy) {
    LinePlot plot;
    plot.title = title;
    plot.x_label = "Training set size";
    plot.y_label = "Accuracy";
    if (!sizes.empty()) {
        const double hi = *std::max_element(sizes.begin(), sizes.end());
        plot.frame.x_min = 0.0;
        plot.frame.x_max = hi > 0.0 ? hi * 1.05 : 1.0;
    }
    double lo = 1.0;
    for (double v : train_accuracy) lo = std::min(lo, v);
    for (double v : test_accuracy) lo = std::min(lo, v);
    plot.frame.y_min = std::max(0.0, std::floor(lo * 10.0 - 1.0) / 10.0);
    plot.frame.y_max = 1.0;
    if (plot.frame.y_min >= plot.frame.y_max) plot.frame.y_min = 0.0;
    plot.series.push_back({"train", sizes, train_accuracy, true, true});
    plot.series.push_back({"test", sizes, test_accuracy, true, false});
    return render_svg(plot);
}

void emit_report_plots(const EvaluationReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_text_file((std::filesystem::path(dir) / "roc.svg").string(), render_roc_svg(report));
    write_text_file((std::filesystem::path(dir) / "pr.svg").string(), render_pr_svg(report));
}

}  // namespace dermbench

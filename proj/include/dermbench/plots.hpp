#pragma once

// Self-contained SVG line plots for ROC, precision-recall and learning curves.

#include <string>
#include <vector>

#include "dermbench/evalmetrics.hpp"

namespace dermbench {

/// Maps data coordinates to SVG pixels for a fixed-size canvas.
struct PlotFrame {
    double width = 640.0;
    double height = 480.0;
    double left = 72.0;
    double right = 24.0;
    double top = 44.0;
    double bottom = 60.0;
    double x_min = 0.0, x_max = 1.0;
    double y_min = 0.0, y_max = 1.0;

    double px(double x) const { return left + (x - x_min) / (x_max - x_min) * (width - left - right); }
    double py(double y) const { return top + (y_max - y) / (y_max - y_min) * (height - top - bottom); }
};

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool markers = false;
    bool dashed = false;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    PlotFrame frame;
    std::vector<PlotSeries> series;
    bool chance_diagonal = false;
};

/// Each series becomes <polyline class="series" data-label="..."> with points
/// rounded to 3 decimals.
std::string render_svg(const LinePlot& plot);

std::string render_roc_svg(const EvaluationReport& report);
std::string render_pr_svg(const EvaluationReport& report);
std::string render_learning_curve_svg(const std::string& title, const std::vector<double>& sizes,
                                      const std::vector<double>& train_accuracy,
                                      const std::vector<double>& test_accuracy);

/// Writes roc.svg and pr.svg into `dir`.
void emit_report_plots(const EvaluationReport& report, const std::string& dir);

}  // namespace dermbench

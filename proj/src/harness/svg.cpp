#include "erracc/harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace erracc::harness {

namespace {

constexpr int kPanelW = 320;
constexpr int kPanelH = 260;
constexpr int kMarginL = 52;
constexpr int kMarginR = 12;
constexpr int kMarginT = 36;
constexpr int kMarginB = 40;
constexpr int kGap = 18;

const std::vector<std::string> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Panel {
    std::string metric;
    std::string title;
};

const std::vector<Panel> kPanels = {{"rmse", "Ensemble-mean RMSE"},
                                    {"spread_skill", "Spread/skill"},
                                    {"err_acc_gauss", "Error accumulation"}};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Range {
    double lo = 0.0, hi = 1.0;
    void expand(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
};

}  // namespace

int write_report(const std::filesystem::path& out_dir,
                 const std::vector<metrics::MetricCurve>& curves) {
    std::filesystem::create_directories(out_dir);

    // group curves by (system, variable), preserving first-appearance order
    std::vector<std::pair<std::string, std::string>> groups;
    for (const auto& c : curves) {
        const std::pair<std::string, std::string> key{c.system, c.variable};
        if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
    }

    int written = 0;
    for (const auto& [system, variable] : groups) {
        // model order: first appearance within this group
        std::vector<std::string> models;
        for (const auto& c : curves)
            if (c.system == system && c.variable == variable &&
                std::find(models.begin(), models.end(), c.model) == models.end())
                models.push_back(c.model);

        const int width = kMarginL + kPanelW + kGap + (kPanelW + kGap) * 2 + kMarginR;
        const int height = kMarginT + kPanelH + kMarginB;
        std::ostringstream svg;
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
        svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

        // legend along the top
        int lx = kMarginL;
        for (std::size_t m = 0; m < models.size(); ++m) {
            const auto& color = kPalette[m % kPalette.size()];
            svg << "<rect x=\"" << lx << "\" y=\"8\" width=\"14\" height=\"4\" fill=\"" << color
                << "\"/>\n";
            svg << "<text x=\"" << lx + 18 << "\" y=\"14\">" << models[m] << "</text>\n";
            lx += 24 + static_cast<int>(models[m].size()) * 7;
        }

        bool any_panel = false;
        for (std::size_t p = 0; p < kPanels.size(); ++p) {
            const int x0 = kMarginL + static_cast<int>(p) * (kPanelW + kGap);
            const int y0 = kMarginT;

            // collect this panel's curves
            std::vector<const metrics::MetricCurve*> panel_curves;
            Range xr, yr;
            bool first = true;
            for (const auto& c : curves) {
                if (c.system != system || c.variable != variable || c.metric != kPanels[p].metric)
                    continue;
                panel_curves.push_back(&c);
                for (std::size_t i = 0; i < c.lead.size(); ++i) {
                    if (first) {
                        xr.lo = xr.hi = c.lead[i];
                        yr.lo = yr.hi = std::isfinite(c.value[i]) ? c.value[i] : 0.0;
                        first = false;
                    }
                    xr.expand(c.lead[i]);
                    yr.expand(c.value[i]);
                    yr.expand(c.lo[i]);
                    yr.expand(c.hi[i]);
                }
            }
            if (yr.hi <= yr.lo) yr.hi = yr.lo + 1.0;
            if (xr.hi <= xr.lo) xr.hi = xr.lo + 1.0;
            if (!panel_curves.empty()) any_panel = true;

            auto sx = [&](double v) {
                return x0 + (v - xr.lo) / (xr.hi - xr.lo) * kPanelW;
            };
            auto sy = [&](double v) {
                return y0 + kPanelH - (v - yr.lo) / (yr.hi - yr.lo) * kPanelH;
            };

            svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << kPanelW
                << "\" height=\"" << kPanelH << "\" fill=\"none\" stroke=\"#444\"/>\n";
            svg << "<text x=\"" << x0 + kPanelW / 2 << "\" y=\"" << y0 - 6
                << "\" text-anchor=\"middle\">" << kPanels[p].title << "</text>\n";

            // axis ticks: min/mid/max
            for (double q : {0.0, 0.5, 1.0}) {
                const double xv = xr.lo + q * (xr.hi - xr.lo);
                const double yv = yr.lo + q * (yr.hi - yr.lo);
                svg << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << y0 + kPanelH + 14
                    << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
                svg << "<text x=\"" << x0 - 4 << "\" y=\"" << fmt(sy(yv) + 4)
                    << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
            }
            svg << "<text x=\"" << x0 + kPanelW / 2 << "\" y=\"" << y0 + kPanelH + 30
                << "\" text-anchor=\"middle\">lead time (steps)</text>\n";

            for (const auto* c : panel_curves) {
                const auto mi = std::distance(models.begin(),
                                              std::find(models.begin(), models.end(), c->model));
                const auto& color = kPalette[static_cast<std::size_t>(mi) % kPalette.size()];

                // confidence band polygon where present
                std::ostringstream band;
                bool has_band = false;
                for (std::size_t i = 0; i < c->lead.size(); ++i) {
                    if (!std::isfinite(c->lo[i]) || !std::isfinite(c->hi[i])) continue;
                    has_band = true;
                }
                if (has_band) {
                    band << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" "
                         << "stroke=\"none\" points=\"";
                    for (std::size_t i = 0; i < c->lead.size(); ++i)
                        if (std::isfinite(c->lo[i]))
                            band << fmt(sx(c->lead[i])) << ',' << fmt(sy(c->lo[i])) << ' ';
                    for (std::size_t i = c->lead.size(); i-- > 0;)
                        if (std::isfinite(c->hi[i]))
                            band << fmt(sx(c->lead[i])) << ',' << fmt(sy(c->hi[i])) << ' ';
                    band << "\"/>\n";
                    svg << band.str();
                }

                svg << "<polyline fill=\"none\" stroke=\"" << color
                    << "\" stroke-width=\"1.5\" points=\"";
                for (std::size_t i = 0; i < c->lead.size(); ++i)
                    if (std::isfinite(c->value[i]))
                        svg << fmt(sx(c->lead[i])) << ',' << fmt(sy(c->value[i])) << ' ';
                svg << "\"/>\n";
            }
        }
        svg << "</svg>\n";

        if (!any_panel) continue;  // nothing to draw for this group
        const auto path = out_dir / ("fig_" + system + "_" + variable + ".svg");
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + path.string());
        out << svg.str();
        ++written;
    }
    return written;
}

}  // namespace erracc::harness

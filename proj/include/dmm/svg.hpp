#pragma once

#include <string>
#include <vector>

#include "dmm/io.hpp"
#include "dmm/linalg.hpp"

namespace dmm {

// Self-contained SVG 1.1 scatter plot; no plotting dependency. Canvas, point
// radius and colors are fixed constants.
inline std::string svg_scatter(const std::vector<Vec>& points, double lo, double hi,
                               const std::string& title = "") {
    const double canvas = 480.0;
    const double margin = 28.0;
    const double inner = canvas - 2.0 * margin;
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"480\" height=\"480\" "
           "viewBox=\"0 0 480 480\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"480\" height=\"480\" fill=\"#ffffff\"/>\n";
    out += "<rect x=\"" + format_double(margin) + "\" y=\"" + format_double(margin) + "\" width=\"" +
           format_double(inner) + "\" height=\"" + format_double(inner) +
           "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    if (!title.empty())
        out += "<text x=\"240\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"13\" fill=\"#222222\">" + title + "</text>\n";
    const double span = hi - lo;
    for (const Vec& p : points) {
        if (p.empty()) continue;
        const double x = (p[0] - lo) / span;
        const double y = (p.size() > 1 ? (p[1] - lo) / span : 0.5);
        if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) continue;
        out += "<circle cx=\"" + format_double(margin + x * inner) + "\" cy=\"" +
               format_double(canvas - margin - y * inner) +
               "\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace dmm

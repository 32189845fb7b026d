#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "flowattr/detail/strings.hpp"
#include "flowattr/geometry.hpp"
#include "flowattr/graph.hpp"
#include "flowattr/layout.hpp"
#include "flowattr/styles.hpp"

namespace flowattr {

struct RenderedChart {
    std::string svg;
    RegionMap regions;
};

namespace svg_detail {

inline constexpr double kMargin = 24;
inline constexpr double kLoopSpacing = 10;

inline std::string xml_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::vector<std::string> wrap(std::string_view text, std::size_t width, std::size_t max_lines) {
    std::vector<std::string> lines;
    std::string current;
    std::size_t pos = 0;
    bool truncated = false;
    while (pos < text.size()) {
        while (pos < text.size() && text[pos] == ' ') ++pos;
        std::size_t end = text.find(' ', pos);
        if (end == std::string_view::npos) end = text.size();
        if (pos == end) break;
        std::string word(text.substr(pos, end - pos));
        pos = end;
        if (word.size() > width) word = word.substr(0, width - 3) + "...";
        if (current.empty()) {
            current = word;
        } else if (current.size() + 1 + word.size() <= width) {
            current += ' ';
            current += word;
        } else {
            lines.push_back(current);
            current = word;
            if (lines.size() == max_lines) {
                truncated = true;
                break;
            }
        }
    }
    if (!truncated && !current.empty()) lines.push_back(current);
    if (truncated) {
        auto& last = lines.back();
        if (last.size() + 3 > width) last.resize(width - 3);
        last += "...";
    }
    return lines;
}

inline std::string num(double v) { return flowattr::detail::format_number(v); }

inline std::string points_attr(const std::vector<Point>& pts) {
    std::string s;
    for (const auto& p : pts) {
        if (!s.empty()) s += ' ';
        s += num(p.x) + "," + num(p.y);
    }
    return s;
}

struct Route {
    std::vector<Point> points;
    std::string label;
};

// Elbow route in layout coordinates. Back edges and self loops detour around
// the far side of the drawing on a lane of their own.
inline Route route(const Placement& s, const Placement& t, bool back, int lane, Direction dir, const Box& extent) {
    Route r;
    const Box a = s.box();
    const Box b = t.box();
    const bool horizontal = dir == Direction::left_right || dir == Direction::right_left;
    if (!back && s.layer < t.layer) {
        Point from, to;
        switch (dir) {
            case Direction::top_down: from = {s.center.x, a.bottom()}; to = {t.center.x, b.y}; break;
            case Direction::bottom_up: from = {s.center.x, a.y}; to = {t.center.x, b.bottom()}; break;
            case Direction::left_right: from = {a.right(), s.center.y}; to = {b.x, t.center.y}; break;
            case Direction::right_left: from = {a.x, s.center.y}; to = {b.right(), t.center.y}; break;
        }
        if (horizontal) {
            double mid = (from.x + to.x) / 2;
            r.points = {from, {mid, from.y}, {mid, to.y}, to};
        } else {
            double mid = (from.y + to.y) / 2;
            r.points = {from, {from.x, mid}, {to.x, mid}, to};
        }
        return r;
    }
    double offset = kLoopSpacing * (lane + 1);
    if (horizontal) {
        double lane_y = extent.bottom() + offset;
        Point from{s.center.x, a.bottom()}, to{t.center.x, b.bottom()};
        if (s.label == t.label) {
            from.x -= s.width / 4;
            to.x += t.width / 4;
        }
        r.points = {from, {from.x, lane_y}, {to.x, lane_y}, to};
    } else {
        double lane_x = extent.right() + offset;
        Point from{a.right(), s.center.y}, to{b.right(), t.center.y};
        if (s.label == t.label) {
            from.y -= s.height / 4;
            to.y += t.height / 4;
        }
        r.points = {from, {lane_x, from.y}, {lane_x, to.y}, to};
    }
    return r;
}

}  // namespace svg_detail

/// Renders the chart as a standalone SVG document. Region geometry is taken
/// from the same numbers written into the document.
inline RenderedChart render_svg(const FlowChart& chart, const Layout& layout, const StyleSpec& style,
                                bool overlay_labels) {
    using namespace svg_detail;
    if (layout.nodes.size() != chart.node_count()) {
        throw GraphError(GraphErrorKind::invalid_argument, "layout does not cover the chart");
    }
    if (style.colors.empty()) throw GraphError(GraphErrorKind::invalid_argument, "style has no colors");

    const Box extent = layout.extent();
    const auto edges = chart.edges();
    std::vector<Route> routes;
    int lane = 0;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto& s = layout.at(edges[i].from);
        const auto& t = layout.at(edges[i].to);
        bool back = layout.back_edge[i] || s.layer >= t.layer;
        auto r = route(s, t, back, back ? lane : 0, layout.direction, extent);
        if (back) ++lane;
        if (edges[i].condition.kind() != Condition::Kind::unconditional) r.label = edges[i].condition.display();
        routes.push_back(std::move(r));
    }

    double x0 = extent.x, y0 = extent.y, x1 = extent.right(), y1 = extent.bottom();
    for (const auto& r : routes) {
        for (const auto& p : r.points) {
            x0 = std::min(x0, p.x);
            y0 = std::min(y0, p.y);
            x1 = std::max(x1, p.x);
            y1 = std::max(y1, p.y);
        }
    }
    const double dx = kMargin - x0;
    const double dy = kMargin - y0;
    const double width = x1 - x0 + 2 * kMargin;
    const double height = y1 - y0 + 2 * kMargin;

    RenderedChart out;
    out.regions.canvas_width = width;
    out.regions.canvas_height = height;

    std::string family(to_string(style.family));
    std::string s;
    s += R"(<svg xmlns="http://www.w3.org/2000/svg" class="flowchart style-)" + family + R"(" width=")" + num(width) +
         R"(" height=")" + num(height) + R"(" viewBox="0 0 )" + num(width) + " " + num(height) +
         R"(" data-style-version=")" + std::to_string(styles::kTableVersion) + R"(" data-seed=")" +
         std::to_string(style.seed) + "\">\n";
    s += "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"8\" "
         "markerHeight=\"8\" orient=\"auto\"><path d=\"M0,0 L10,5 L0,10 z\" fill=\"" + style.stroke +
         "\"/></marker></defs>\n";
    s += "<style>\n";
    s += ".style-" + family + " { font-family: Helvetica, Arial, sans-serif; }\n";
    s += ".style-" + family + " .shape { stroke: " + style.stroke + "; stroke-width: 1.5; }\n";
    for (std::size_t i = 0; i < style.colors.size(); ++i) {
        s += ".style-" + family + " .fill-" + std::to_string(i) + " .shape { fill: " + style.colors[i] + "; }\n";
    }
    s += ".style-" + family + " .statement { fill: #000000; font-size: 12px; text-anchor: middle; }\n";
    s += ".style-" + family + " .edge { fill: none; stroke: " + style.stroke +
         "; stroke-width: 1.5; marker-end: url(#arrow); }\n";
    s += ".style-" + family + " .edge-label { fill: #000000; font-size: 11px; text-anchor: middle; }\n";
    s += ".overlay-label { fill: #FF0000; font-weight: bold; font-size: 14px; }\n";
    s += "</style>\n";

    s += "<g class=\"edges\">\n";
    for (std::size_t i = 0; i < routes.size(); ++i) {
        auto pts = routes[i].points;
        for (auto& p : pts) p = {p.x + dx, p.y + dy};
        s += "<polyline class=\"edge\" data-from=\"" + edges[i].from.str() + "\" data-to=\"" + edges[i].to.str() +
             "\" points=\"" + points_attr(pts) + "\"/>\n";
        if (!routes[i].label.empty()) {
            std::size_t k = (pts.size() - 2) / 2;
            Point mid{(pts[k].x + pts[k + 1].x) / 2, (pts[k].y + pts[k + 1].y) / 2};
            s += "<text class=\"edge-label\" x=\"" + num(mid.x) + "\" y=\"" + num(mid.y - 3) + "\">" +
                 xml_escape(routes[i].label) + "</text>\n";
        }
    }
    s += "</g>\n<g class=\"nodes\">\n";

    std::size_t node_index = 0;
    for (const auto& p : layout.nodes) {
        const Box b{p.center.x - p.width / 2 + dx, p.center.y - p.height / 2 + dy, p.width, p.height};
        const std::size_t colour = node_index % style.colors.size();
        const std::string& fill = style.colors[colour];
        Region region{p.label, RegionShape::rect, b, std::nullopt};
        s += "<g class=\"node fill-" + std::to_string(colour) + "\" data-label=\"" + p.label.str() + "\">";
        std::string paint = "fill=\"" + fill + "\" stroke=\"" + style.stroke + "\"";
        std::string rect_attrs = "x=\"" + num(b.x) + "\" y=\"" + num(b.y) + "\" width=\"" + num(b.width) +
                                 "\" height=\"" + num(b.height) + "\"";
        switch (p.shape) {
            case Shape::diamond: {
                Polygon poly{{b.x + b.width / 2, b.y}, {b.right(), b.y + b.height / 2},
                             {b.x + b.width / 2, b.bottom()}, {b.x, b.y + b.height / 2}};
                s += "<polygon class=\"shape\" points=\"" + points_attr(poly) + "\" " + paint + "/>";
                region.shape_kind = RegionShape::diamond;
                region.polygon = std::move(poly);
                break;
            }
            case Shape::rounded:
                s += "<rect class=\"shape\" " + rect_attrs + " rx=\"10\" " + paint + "/>";
                region.shape_kind = RegionShape::rounded;
                break;
            case Shape::stadium:
                s += "<rect class=\"shape\" " + rect_attrs + " rx=\"" + num(b.height / 2) + "\" " + paint + "/>";
                region.shape_kind = RegionShape::stadium;
                break;
            default:
                s += "<rect class=\"shape\" " + rect_attrs + " " + paint + "/>";
                break;
        }
        const bool diamond = p.shape == Shape::diamond;
        auto lines = wrap(chart.statement(p.label), diamond ? 16 : 22, diamond ? 3 : 2);
        if (!lines.empty()) {
            const double line_h = 14;
            double first = b.y + b.height / 2 - line_h * static_cast<double>(lines.size() - 1) / 2 + 4;
            s += "<text class=\"statement\" x=\"" + num(b.x + b.width / 2) + "\" y=\"" + num(first) + "\">";
            for (std::size_t i = 0; i < lines.size(); ++i) {
                s += "<tspan x=\"" + num(b.x + b.width / 2) + "\" y=\"" +
                     num(first + line_h * static_cast<double>(i)) + "\">" + xml_escape(lines[i]) + "</tspan>";
            }
            s += "</text>";
        }
        s += "</g>\n";
        out.regions.add(std::move(region));
        ++node_index;
    }
    s += "</g>\n";

    if (overlay_labels) {
        s += "<g class=\"overlay\">\n";
        for (const auto& r : out.regions.regions()) {
            s += "<text class=\"overlay-label\" x=\"" + num(r.bbox.x + 3) + "\" y=\"" + num(r.bbox.y + 14) + "\">" +
                 r.label.str() + "</text>\n";
        }
        s += "</g>\n";
    }
    s += "</svg>\n";
    out.svg = std::move(s);
    return out;
}

}  // namespace flowattr

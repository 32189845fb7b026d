#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "json.hpp"

#include "flowattr/graph.hpp"

namespace flowattr {

class GeometryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Point {
    double x = 0;
    double y = 0;

    bool operator==(const Point&) const = default;
};

/// Axis-aligned box, (x, y) is the top-left corner.
struct Box {
    double x = 0;
    double y = 0;
    double width = 0;
    double height = 0;

    double area() const { return width * height; }
    double right() const { return x + width; }
    double bottom() const { return y + height; }
    bool contains(const Point& p) const { return p.x >= x && p.x <= right() && p.y >= y && p.y <= bottom(); }

    bool operator==(const Box&) const = default;
};

using Polygon = std::vector<Point>;
using Geometry = std::variant<Box, Polygon>;

namespace geom {

inline double signed_area(const Polygon& p) {
    double s = 0;
    for (std::size_t i = 0, n = p.size(); i < n; ++i) {
        const auto& a = p[i];
        const auto& b = p[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    return s / 2;
}

inline double area(const Polygon& p) { return std::abs(signed_area(p)); }

inline Polygon to_polygon(const Box& b) {
    return {{b.x, b.y}, {b.right(), b.y}, {b.right(), b.bottom()}, {b.x, b.bottom()}};
}

inline Polygon counter_clockwise(Polygon p) {
    if (signed_area(p) < 0) std::reverse(p.begin(), p.end());
    return p;
}

inline double cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool is_convex(const Polygon& p) {
    bool pos = false, neg = false;
    for (std::size_t i = 0, n = p.size(); i < n; ++i) {
        double c = cross(p[i], p[(i + 1) % n], p[(i + 2) % n]);
        pos |= c > 0;
        neg |= c < 0;
    }
    return !(pos && neg);
}

/// Sutherland-Hodgman: clips any simple `subject` against a convex `clip`.
inline Polygon clip_convex(const Polygon& subject, const Polygon& clip_in) {
    Polygon clip = counter_clockwise(clip_in);
    Polygon out = counter_clockwise(subject);
    for (std::size_t i = 0, n = clip.size(); i < n && !out.empty(); ++i) {
        const Point& a = clip[i];
        const Point& b = clip[(i + 1) % n];
        Polygon input = std::move(out);
        out.clear();
        auto inside = [&](const Point& p) { return cross(a, b, p) >= 0; };
        auto intersect = [&](const Point& p, const Point& q) {
            double cp = cross(a, b, p);
            double cq = cross(a, b, q);
            double t = cp / (cp - cq);
            return Point{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
        };
        for (std::size_t k = 0, m = input.size(); k < m; ++k) {
            const Point& cur = input[k];
            const Point& prev = input[(k + m - 1) % m];
            if (inside(cur)) {
                if (!inside(prev)) out.push_back(intersect(prev, cur));
                out.push_back(cur);
            } else if (inside(prev)) {
                out.push_back(intersect(prev, cur));
            }
        }
    }
    return out;
}

inline double boost_intersection_area(const Polygon& a, const Polygon& b) {
    namespace bg = boost::geometry;
    using BPoint = bg::model::d2::point_xy<double>;
    using BPolygon = bg::model::polygon<BPoint>;
    auto convert = [](const Polygon& p) {
        BPolygon out;
        for (const auto& v : p) bg::append(out.outer(), BPoint(v.x, v.y));
        bg::correct(out);
        return out;
    };
    std::vector<BPolygon> parts;
    bg::intersection(convert(a), convert(b), parts);
    double total = 0;
    for (const auto& part : parts) total += bg::area(part);
    return total;
}

inline void check(const Box& b) {
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.width) || !std::isfinite(b.height) ||
        b.width <= 0 || b.height <= 0) {
        throw GeometryError("degenerate box: width and height must be positive");
    }
}

inline void check(const Polygon& p) {
    if (p.size() < 3) throw GeometryError("degenerate polygon: fewer than 3 vertices");
    for (const auto& v : p) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw GeometryError("degenerate polygon: non-finite vertex");
    }
    if (area(p) <= 0) throw GeometryError("degenerate polygon: zero area");
}

inline Box bounds(const Polygon& p) {
    auto [minx, maxx] = std::minmax_element(p.begin(), p.end(), [](auto& a, auto& b) { return a.x < b.x; });
    auto [miny, maxy] = std::minmax_element(p.begin(), p.end(), [](auto& a, auto& b) { return a.y < b.y; });
    return {minx->x, miny->y, maxx->x - minx->x, maxy->y - miny->y};
}

}  // namespace geom

inline double area(const Geometry& g) {
    return std::visit([](const auto& v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Box>) {
            return v.area();
        } else {
            return geom::area(v);
        }
    }, g);
}

/// Intersection over union. Exact for two boxes; polygons are clipped with
/// Sutherland-Hodgman when either side is convex, otherwise with
/// Boost.Geometry's general boolean operations.
inline double iou(const Geometry& a, const Geometry& b) {
    std::visit([](const auto& v) { geom::check(v); }, a);
    std::visit([](const auto& v) { geom::check(v); }, b);
    double inter = 0;
    if (std::holds_alternative<Box>(a) && std::holds_alternative<Box>(b)) {
        const auto& p = std::get<Box>(a);
        const auto& q = std::get<Box>(b);
        double w = std::min(p.right(), q.right()) - std::max(p.x, q.x);
        double h = std::min(p.bottom(), q.bottom()) - std::max(p.y, q.y);
        inter = (w > 0 && h > 0) ? w * h : 0.0;
    } else {
        auto as_polygon = [](const Geometry& g) {
            return std::holds_alternative<Box>(g) ? geom::to_polygon(std::get<Box>(g)) : std::get<Polygon>(g);
        };
        Polygon pa = as_polygon(a);
        Polygon pb = as_polygon(b);
        if (geom::is_convex(pb)) {
            inter = geom::area(geom::clip_convex(pa, pb));
        } else if (geom::is_convex(pa)) {
            inter = geom::area(geom::clip_convex(pb, pa));
        } else {
            inter = geom::boost_intersection_area(pa, pb);
        }
    }
    double uni = area(a) + area(b) - inter;
    return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

enum class RegionShape { rect, diamond, rounded, stadium };

inline std::string_view to_string(RegionShape s) {
    switch (s) {
        case RegionShape::rect: return "rect";
        case RegionShape::diamond: return "diamond";
        case RegionShape::rounded: return "rounded";
        case RegionShape::stadium: return "stadium";
    }
    return "rect";
}

inline std::optional<RegionShape> region_shape_from_string(std::string_view s) {
    for (auto r : {RegionShape::rect, RegionShape::diamond, RegionShape::rounded, RegionShape::stadium}) {
        if (to_string(r) == s) return r;
    }
    return std::nullopt;
}

/// Pixel-space geometry of one node.
struct Region {
    NodeLabel label;
    RegionShape shape_kind = RegionShape::rect;
    Box bbox;
    std::optional<Polygon> polygon;

    Geometry geometry() const { return polygon ? Geometry{*polygon} : Geometry{bbox}; }

    bool operator==(const Region&) const = default;
};

/// Label -> region, in node insertion order.
class RegionMap {
public:
    double canvas_width = 0;
    double canvas_height = 0;

    void add(Region r) {
        geom::check(r.bbox);
        if (r.polygon) {
            geom::check(*r.polygon);
            constexpr double eps = 1e-9;
            for (const auto& v : *r.polygon) {
                if (v.x < r.bbox.x - eps || v.x > r.bbox.right() + eps || v.y < r.bbox.y - eps ||
                    v.y > r.bbox.bottom() + eps) {
                    throw GeometryError("polygon of '" + r.label.str() + "' leaves its bbox");
                }
            }
        }
        if (index_.contains(r.label.str())) throw GeometryError("duplicate region for '" + r.label.str() + "'");
        index_.emplace(r.label.str(), regions_.size());
        regions_.push_back(std::move(r));
    }

    const Region* find(const NodeLabel& label) const {
        auto it = index_.find(label.str());
        return it == index_.end() ? nullptr : &regions_[it->second];
    }

    const std::vector<Region>& regions() const noexcept { return regions_; }
    std::size_t size() const noexcept { return regions_.size(); }
    bool empty() const noexcept { return regions_.empty(); }

    bool operator==(const RegionMap& o) const {
        return canvas_width == o.canvas_width && canvas_height == o.canvas_height && regions_ == o.regions_;
    }

private:
    std::vector<Region> regions_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline nlohmann::ordered_json polygon_to_json(const Polygon& p) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& v : p) out.push_back({v.x, v.y});
    return out;
}

inline Polygon polygon_from_json(const nlohmann::ordered_json& j) {
    Polygon p;
    for (const auto& v : j) p.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    return p;
}

inline nlohmann::ordered_json box_to_json(const Box& b) { return {b.x, b.y, b.width, b.height}; }

inline Box box_from_json(const nlohmann::ordered_json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

inline nlohmann::ordered_json region_to_json(const Region& r) {
    nlohmann::ordered_json j = {{"shape_kind", to_string(r.shape_kind)}, {"bbox", box_to_json(r.bbox)}};
    if (r.polygon) j["polygon"] = polygon_to_json(*r.polygon);
    return j;
}

/// {canvas:[w,h], nodes:{label:{shape_kind, bbox:[x,y,w,h], polygon?}}}
inline nlohmann::ordered_json to_json(const RegionMap& m) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::object();
    for (const auto& r : m.regions()) nodes[r.label.str()] = region_to_json(r);
    return {{"canvas", {m.canvas_width, m.canvas_height}}, {"nodes", std::move(nodes)}};
}

inline RegionMap region_map_from_json(const nlohmann::ordered_json& j) {
    RegionMap m;
    m.canvas_width = j.at("canvas").at(0).get<double>();
    m.canvas_height = j.at("canvas").at(1).get<double>();
    for (const auto& [label, r] : j.at("nodes").items()) {
        auto kind_name = r.at("shape_kind").get<std::string>();
        auto kind = region_shape_from_string(kind_name);
        if (!kind) throw GeometryError("unknown shape_kind '" + kind_name + "'");
        Region region{NodeLabel(label), *kind, box_from_json(r.at("bbox")), std::nullopt};
        if (r.contains("polygon")) region.polygon = polygon_from_json(r.at("polygon"));
        m.add(std::move(region));
    }
    return m;
}

}  // namespace flowattr

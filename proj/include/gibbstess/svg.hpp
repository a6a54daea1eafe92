#pragma once

// Deterministic SVG rendering of tessellations.
//
// The picture is a plain map of the space-time window: x1 runs left to right,
// time runs bottom to top. Cells are filled with a color hashed from the mark
// (the same mark always gets the same color, in any diagram, on any run),
// edges are drawn as black segments, and vertices as circles whose CSS class
// records their kind (coag / frag / boundary / meeting). Output is a pure
// function of the tessellation and style structs, byte for byte.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>

#include "gibbstess/tessellation.hpp"

namespace gibbstess {

struct SvgStyle {
    double width_px = 640.0;       // image width; height follows the window aspect
    double stroke_px = 1.5;        // edge stroke width
    double vertex_radius_px = 4.0;
    bool show_vertices = true;
    bool show_edges = true;
    double cell_opacity = 0.55;
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mark_hash(const Mark& m) {
    std::uint64_t a = 0, b = 0;
    std::memcpy(&a, &m.rho1, sizeof(double));
    std::memcpy(&b, &m.rho2, sizeof(double));
    return mix64(a ^ mix64(b));
}

// Stable, readable fill color per mark: full hue wheel, mid saturation and
// lightness so black edges and labels stay visible.
inline std::string mark_color(const Mark& m) {
    const std::uint64_t h = mark_hash(m);
    const unsigned hue = static_cast<unsigned>(h % 360ull);
    const unsigned sat = 45u + static_cast<unsigned>((h >> 16) % 30ull);
    const unsigned lig = 58u + static_cast<unsigned>((h >> 32) % 20ull);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "hsl(%u,%u%%,%u%%)", hue, sat, lig);
    return buf;
}

inline void append_num(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    out += buf;
}

}  // namespace detail

inline std::string render_svg(const Tessellation& tess, const SvgStyle& style = SvgStyle{}) {
    Box2 win = tess.window;
    if (!win.valid()) win = Box2{0.0, 1.0, 0.0, 1.0};  // empty diagrams still render

    const double W = style.width_px;
    const double H = W * win.height() / win.width();
    auto px = [&](double x) { return (x - win.x_lo) / win.width() * W; };
    auto py = [&](double t) { return (win.t_hi - t) / win.height() * H; };

    std::string svg;
    svg.reserve(4096);
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 ";
    detail::append_num(svg, W);
    svg += " ";
    detail::append_num(svg, H);
    svg += "\">\n";
    svg +=
        "<style>.edge{stroke:#1a1a1a;fill:none}"
        ".vertex.coag{fill:#1f4fd8;stroke:#ffffff}"
        ".vertex.frag{fill:#d8321f;stroke:#ffffff}"
        ".vertex.boundary{fill:#777777;stroke:#ffffff}"
        ".vertex.meeting{fill:#222222;stroke:#ffffff}</style>\n";

    svg += "<rect x=\"0\" y=\"0\" width=\"";
    detail::append_num(svg, W);
    svg += "\" height=\"";
    detail::append_num(svg, H);
    svg += "\" fill=\"#fcfcfa\" stroke=\"#1a1a1a\"/>\n";

    svg += "<g class=\"cells\" fill-opacity=\"";
    detail::append_num(svg, style.cell_opacity);
    svg += "\">\n";
    for (const TessCell& c : tess.cells) {
        svg += "<polygon points=\"";
        for (std::size_t i = 0; i < c.poly.size(); ++i) {
            if (i > 0) svg += " ";
            detail::append_num(svg, px(c.poly[i].x));
            svg += ",";
            detail::append_num(svg, py(c.poly[i].y));
        }
        svg += "\" fill=\"" + detail::mark_color(c.mark) + "\"/>\n";
    }
    svg += "</g>\n";

    if (style.show_edges) {
        svg += "<g class=\"edges\" stroke-width=\"";
        detail::append_num(svg, style.stroke_px);
        svg += "\">\n";
        for (const TessEdge& e : tess.edges) {
            svg += "<line class=\"edge\" x1=\"";
            detail::append_num(svg, px(e.p0.x));
            svg += "\" y1=\"";
            detail::append_num(svg, py(e.p0.y));
            svg += "\" x2=\"";
            detail::append_num(svg, px(e.p1.x));
            svg += "\" y2=\"";
            detail::append_num(svg, py(e.p1.y));
            svg += "\"/>\n";
        }
        svg += "</g>\n";
    }

    if (style.show_vertices) {
        svg += "<g class=\"vertices\">\n";
        for (const TessVertex& v : tess.vertices) {
            svg += "<circle class=\"vertex ";
            svg += vertex_kind_label(v.kind);
            svg += "\" cx=\"";
            detail::append_num(svg, px(v.p.x));
            svg += "\" cy=\"";
            detail::append_num(svg, py(v.p.y));
            svg += "\" r=\"";
            detail::append_num(svg, style.vertex_radius_px);
            svg += "\"/>\n";
        }
        svg += "</g>\n";
    }

    svg += "</svg>\n";
    return svg;
}

}  // namespace gibbstess

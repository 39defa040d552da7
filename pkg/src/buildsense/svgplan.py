"""On-demand SVG floor plans from stored crate geometry.

No static SVG files exist anywhere: every request renders the current
store state. Each crate becomes a ``<g><polygon/></g>`` group whose points
are ``scale * (location + boundary point)`` in SVG's y-down frame, with the
crate identity and hierarchy attached as ``data-*`` attributes and a
``<title>`` child for hover text.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

from .model import CrateRecord

SVG_NS = "http://www.w3.org/2000/svg"


def _fmt(value: float) -> str:
    text = f"{value:.4f}".rstrip("0").rstrip(".")
    return text if text not in ("", "-0") else "0"


def polygon_points(crate: CrateRecord, scale: float) -> list[tuple[float, float]]:
    loc = crate.acp_location
    ox = loc.x or 0.0
    oy = loc.y or 0.0
    return [(scale * (ox + bx), scale * (oy + by)) for bx, by in crate.acp_boundary.boundary]


def floor_svg(crates: list[CrateRecord], floor: int, scale: float) -> str:
    """Render the floor document; crates with GPS-only locations are skipped."""
    svg = ET.Element("svg", {"xmlns": SVG_NS})
    drawable = [c for c in crates if not c.acp_location.is_gps]
    all_points: list[tuple[float, float]] = []
    if not drawable:
        ET.SubElement(svg, "g")
    for crate in sorted(drawable, key=lambda c: c.crate_id):
        points = polygon_points(crate, scale)
        all_points.extend(points)
        group = ET.SubElement(svg, "g")
        polygon = ET.SubElement(group, "polygon", {
            "id": crate.crate_id,
            "data-crate_type": crate.crate_type,
            "data-parent_crate": crate.parent_crate_id or "",
            "data-floor_number": str(floor),
            "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points),
        })
        title = ET.SubElement(polygon, "title")
        title.text = crate.crate_id
    if all_points:
        xs = [p[0] for p in all_points]
        ys = [p[1] for p in all_points]
        min_x, min_y = min(xs), min(ys)
        width = max(xs) - min_x or 1.0
        height = max(ys) - min_y or 1.0
    else:
        min_x = min_y = 0.0
        width = height = 1.0
    svg.set("viewBox", f"{_fmt(min_x)} {_fmt(min_y)} {_fmt(width)} {_fmt(height)}")
    return ET.tostring(svg, encoding="unicode")

/** Coordinate helpers: lat/lng projection, polygon mathematics. */

import type { CrateDoc } from "./types.js";

const METERS_PER_DEG_LAT = 111_320;

export interface XY {
  x: number;
  y: number;
}

/** Equirectangular projection around an anchor, metres on both axes, y down. */
export function projectLatLng(
  anchorLat: number,
  anchorLng: number,
  lat: number,
  lng: number,
): XY {
  const mPerDegLng = METERS_PER_DEG_LAT * Math.cos((anchorLat * Math.PI) / 180);
  return {
    x: (lng - anchorLng) * mPerDegLng,
    y: -(lat - anchorLat) * METERS_PER_DEG_LAT,
  };
}

/**
 * Building footprint in projected metres: the boundary is in building-local
 * units anchored at the crate's GPS position (one unit treated as a metre).
 */
export function buildingFootprint(crate: CrateDoc, anchorLat: number, anchorLng: number): XY[] {
  const loc = crate.acp_location;
  if (loc.acp_lat === undefined || loc.acp_lng === undefined) return [];
  const at = projectLatLng(anchorLat, anchorLng, loc.acp_lat, loc.acp_lng);
  return crate.acp_boundary.boundary.map(([bx, by]) => ({ x: at.x + bx, y: at.y + by }));
}

export function centroid(points: XY[]): XY {
  if (points.length === 0) return { x: 0, y: 0 };
  const sum = points.reduce((acc, p) => ({ x: acc.x + p.x, y: acc.y + p.y }), { x: 0, y: 0 });
  return { x: sum.x / points.length, y: sum.y / points.length };
}

export function bounds(points: XY[]): { minX: number; minY: number; maxX: number; maxY: number } {
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  return {
    minX: Math.min(...xs),
    minY: Math.min(...ys),
    maxX: Math.max(...xs),
    maxY: Math.max(...ys),
  };
}

export function pointsAttr(points: XY[]): string {
  return points.map((p) => `${round3(p.x)},${round3(p.y)}`).join(" ");
}

export function parsePointsAttr(attr: string): XY[] {
  return attr
    .trim()
    .split(/\s+/)
    .map((pair) => {
      const [x, y] = pair.split(",").map(Number);
      return { x: x ?? 0, y: y ?? 0 };
    });
}

/** Oblique 2.5D projection used by the building template's floor stack. */
export function oblique(x: number, y: number, lift: number): XY {
  return { x: x + y * 0.45, y: y * 0.5 - lift };
}

function round3(v: number): number {
  return Math.round(v * 1000) / 1000;
}

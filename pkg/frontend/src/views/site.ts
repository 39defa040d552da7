/** Site template: buildings as footprint polygons on a local vector map. */

import { clear, el, errorBanner, notice, svg } from "../dom.js";
import { bounds, buildingFootprint, centroid, pointsAttr } from "../geo.js";
import type { CrateDoc } from "../types.js";
import { longName, walkCrates, type MountedView, type ViewContext } from "./common.js";

export function renderSite(root: HTMLElement, ctx: ViewContext): MountedView {
  let cancelled = false;

  async function load(): Promise<void> {
    clear(root);
    root.append(el("h2", {}, "Site"));
    const mapBox = el("div", { class: "map-box" });
    root.append(mapBox);
    let tree: CrateDoc;
    try {
      tree = await ctx.api.getCrate(ctx.rootCrate, 32);
    } catch (err) {
      mapBox.append(errorBanner(`Could not load building metadata: ${err}`, load));
      return;
    }
    if (cancelled) return;

    const buildings: CrateDoc[] = [];
    walkCrates(tree, (crate) => {
      if (crate.crate_type === "building") buildings.push(crate);
    });
    const located = buildings.filter((b) => b.acp_location.acp_lat !== undefined);
    if (located.length === 0) {
      mapBox.append(notice("No buildings with map coordinates in this site."));
      return;
    }

    const anchorLat = avg(located.map((b) => b.acp_location.acp_lat ?? 0));
    const anchorLng = avg(located.map((b) => b.acp_location.acp_lng ?? 0));
    const footprints = located.map((b) => ({
      crate: b,
      points: buildingFootprint(b, anchorLat, anchorLng),
    }));
    const all = footprints.flatMap((f) => f.points);
    const box = bounds(all);
    const margin = Math.max((box.maxX - box.minX) * 0.25, (box.maxY - box.minY) * 0.25, 40);
    const viewBox = `${box.minX - margin} ${box.minY - margin} ` +
      `${box.maxX - box.minX + 2 * margin} ${box.maxY - box.minY + 2 * margin}`;

    const map = svg("svg", { class: "site-map", viewBox });
    drawGrid(map, box, margin);
    for (const { crate, points } of footprints) {
      const group = svg("g", { class: "building-group" });
      const polygon = svg("polygon", {
        class: "building-footprint",
        points: pointsAttr(points),
        "data-crate_id": crate.crate_id,
        onclick: () => ctx.navigate({ template: "building", crateId: crate.crate_id }),
      });
      polygon.append(svg("title", {}, longName(crate)));
      const at = centroid(points);
      group.append(polygon, svg("text", {
        class: "building-label",
        x: at.x,
        y: at.y,
      }, crate.crate_id));
      map.append(group);
      void addSensorBadge(ctx, crate, group, at.x, at.y);
    }
    mapBox.append(map);
    root.append(notice("Click a building to inspect its floors."));
  }

  void load();
  return { destroy: () => { cancelled = true; } };
}

/** Aggregated sensor count per building, shown as a cluster badge. */
async function addSensorBadge(
  ctx: ViewContext,
  crate: CrateDoc,
  group: SVGElement,
  x: number,
  y: number,
): Promise<void> {
  try {
    const sensors = await ctx.api.sensorsInCrate(crate.crate_id);
    if (sensors.length === 0) return;
    group.append(
      svg("circle", { class: "sensor-badge", cx: x, cy: y - 14, r: 9 }),
      svg("text", { class: "sensor-badge-count", x, y: y - 11 }, String(sensors.length)),
    );
  } catch {
    // badge is decoration; the map stays useful without it
  }
}

function drawGrid(map: SVGElement, box: ReturnType<typeof bounds>, margin: number): void {
  const step = 25;
  const x0 = Math.floor((box.minX - margin) / step) * step;
  const x1 = box.maxX + margin;
  const y0 = Math.floor((box.minY - margin) / step) * step;
  const y1 = box.maxY + margin;
  for (let x = x0; x <= x1; x += step) {
    map.append(svg("line", { class: "grid-line", x1: x, y1: y0, x2: x, y2: y1 }));
  }
  for (let y = y0; y <= y1; y += step) {
    map.append(svg("line", { class: "grid-line", x1: x0, y1: y, x2: x1, y2: y }));
  }
}

function avg(values: number[]): number {
  return values.reduce((a, b) => a + b, 0) / Math.max(values.length, 1);
}

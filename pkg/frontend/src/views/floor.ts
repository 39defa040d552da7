/** Floor template: server-rendered SVG plan, heat-map fills, hover readouts. */

import { heatColor, legendStops, NEUTRAL_FILL } from "../colors.js";
import { clear, el, errorBanner, notice, svg, SVG_NS } from "../dom.js";
import { centroid, parsePointsAttr } from "../geo.js";
import type { ReadingDoc, SensorDoc } from "../types.js";
import type { MountedView, ViewContext } from "./common.js";

const DEFAULT_FEATURE = "co2";

interface RoomData {
  polygon: SVGPolygonElement;
  sensors: SensorDoc[];
  latest: Map<string, ReadingDoc>;
}

export function renderFloor(root: HTMLElement, ctx: ViewContext, floor: number): MountedView {
  let cancelled = false;
  let feature = DEFAULT_FEATURE;
  const rooms = new Map<string, RoomData>();

  async function load(): Promise<void> {
    clear(root);
    root.append(el("h2", {}, `Floor ${floor}`));
    let svgText: string;
    try {
      svgText = await ctx.api.getFloorSvg(floor);
    } catch (err) {
      root.append(errorBanner(`Could not load floor plan: ${err}`, load));
      return;
    }
    if (cancelled) return;

    const holder = el("div", { class: "plan-box" });
    holder.innerHTML = svgText;
    const plan = holder.querySelector("svg");
    if (!plan) {
      root.append(errorBanner("Floor endpoint returned no SVG.", load));
      return;
    }
    const polygons = [...plan.querySelectorAll("polygon")];
    if (polygons.length === 0) {
      root.append(notice(`No crates on floor ${floor}.`));
      return;
    }

    const controls = el("div", { class: "controls" });
    const picker = el("select", { class: "feature-picker" });
    controls.append(el("label", {}, "Heat-map feature: "), picker);
    const legend = el("div", { class: "legend" });
    const tooltip = el("div", { class: "tooltip", style: "display:none" });
    root.append(controls, legend, holder, tooltip);

    rooms.clear();
    let floorCrateId: string | null = null;
    for (const polygon of polygons) {
      const crateId = polygon.getAttribute("id") ?? "";
      const crateType = polygon.getAttribute("data-crate_type");
      if (crateType === "floor") {
        floorCrateId = crateId;
        polygon.classList.add("floor-outline");
        continue;
      }
      polygon.classList.add("room-poly");
      polygon.setAttribute("fill", NEUTRAL_FILL);
      polygon.addEventListener("click", () =>
        ctx.navigate({ template: "floorspace", crateId }));
      rooms.set(crateId, { polygon, sensors: [], latest: new Map() });
    }

    // sensor metadata for everything on the floor, grouped per room
    const featureNames = new Set([DEFAULT_FEATURE]);
    if (floorCrateId) {
      try {
        const sensors = await ctx.api.sensorsInCrate(floorCrateId);
        if (cancelled) return;
        for (const sensor of sensors) {
          sensor.features.forEach((f) => featureNames.add(f));
          const home = sensor.acp_location.parent_crate_id;
          if (home && rooms.has(home)) {
            rooms.get(home)!.sensors.push(sensor);
          }
        }
      } catch {
        root.insertBefore(
          errorBanner("Sensor metadata unavailable; heat-map disabled.", load), holder);
      }
    }

    for (const name of [...featureNames].sort()) {
      picker.append(el("option", { value: name }, name));
    }
    picker.value = feature = featureNames.has(feature) ? feature : DEFAULT_FEATURE;
    picker.addEventListener("change", () => {
      feature = picker.value;
      drawLegend(legend, feature);
      repaint();
    });

    await refreshLatest();
    if (cancelled) return;
    drawLegend(legend, feature);
    repaint();
    placeSensorIcons(plan, tooltip);
  }

  async function refreshLatest(): Promise<void> {
    const jobs: Promise<void>[] = [];
    for (const room of rooms.values()) {
      for (const sensor of room.sensors) {
        jobs.push(
          ctx.api.latestReading(sensor.acp_id).then((reading) => {
            if (reading) room.latest.set(sensor.acp_id, reading);
          }).catch(() => undefined),
        );
      }
    }
    await Promise.all(jobs);
  }

  /** Latest per-room value: newest reading among the room's sensors. */
  function roomValue(room: RoomData): number | null {
    let bestTs = -1;
    let value: number | null = null;
    for (const reading of room.latest.values()) {
      const v = reading.features[feature];
      const ts = parseFloat(reading.acp_ts);
      if (v !== undefined && ts > bestTs) {
        bestTs = ts;
        value = v;
      }
    }
    return value;
  }

  function repaint(): void {
    for (const room of rooms.values()) {
      const value = roomValue(room);
      room.polygon.setAttribute(
        "fill", value === null ? NEUTRAL_FILL : heatColor(feature, value));
      room.polygon.setAttribute("data-room_value", value === null ? "" : String(value));
    }
  }

  function placeSensorIcons(plan: SVGSVGElement, tooltip: HTMLElement): void {
    for (const [crateId, room] of rooms) {
      const points = parsePointsAttr(room.polygon.getAttribute("points") ?? "");
      if (points.length === 0) continue;
      const at = centroid(points);
      room.sensors.forEach((sensor, idx) => {
        const icon = document.createElementNS(SVG_NS, "circle");
        icon.setAttribute("class", "sensor-icon");
        icon.setAttribute("cx", String(at.x + idx * 14));
        icon.setAttribute("cy", String(at.y));
        icon.setAttribute("r", "6");
        icon.setAttribute("data-acp_id", sensor.acp_id);
        icon.addEventListener("mouseenter", () => {
          void showTooltip(tooltip, sensor, crateId);
        });
        icon.addEventListener("mouseleave", () => {
          tooltip.style.display = "none";
        });
        icon.addEventListener("click", () =>
          ctx.navigate({ template: "sensor", acpId: sensor.acp_id }));
        plan.append(icon);
      });
    }
  }

  async function showTooltip(tooltip: HTMLElement, sensor: SensorDoc, crateId: string): Promise<void> {
    tooltip.style.display = "block";
    tooltip.textContent = `${sensor.acp_id} (${crateId}): loading...`;
    const reading = await ctx.api.latestReading(sensor.acp_id).catch(() => null);
    if (tooltip.style.display === "none") return;
    if (!reading) {
      tooltip.textContent = `${sensor.acp_id}: no readings yet`;
      return;
    }
    const parts = Object.entries(reading.features)
      .map(([name, value]) => `${name} ${value}`).join(", ");
    tooltip.textContent = `${sensor.acp_id} @ ${reading.acp_ts}: ${parts}`;
  }

  function drawLegend(legend: HTMLElement, featureName: string): void {
    clear(legend);
    legend.append(el("span", { class: "legend-title" }, `${featureName}: `));
    for (const stop of legendStops(featureName)) {
      legend.append(
        el("span", { class: "legend-stop", style: `background:${stop.color}` }),
        el("span", { class: "legend-value" }, String(Math.round(stop.value))),
      );
    }
  }

  void load();
  return { destroy: () => { cancelled = true; } };
}

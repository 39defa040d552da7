/** Floorspace template: one crate zoomed in, with its description and sensors. */

import { clear, el, errorBanner, notice } from "../dom.js";
import { bounds, parsePointsAttr } from "../geo.js";
import type { CrateDoc } from "../types.js";
import { longName, type MountedView, type ViewContext } from "./common.js";

export function renderFloorspace(root: HTMLElement, ctx: ViewContext, crateId: string): MountedView {
  let cancelled = false;

  async function load(): Promise<void> {
    clear(root);
    let crate: CrateDoc;
    try {
      crate = await ctx.api.getCrate(crateId);
    } catch (err) {
      root.append(errorBanner(`Could not load crate ${crateId}: ${err}`, load));
      return;
    }
    if (cancelled) return;
    root.append(el("h2", {}, `${longName(crate)} (${crate.crate_id})`));
    root.append(el("p", { class: "crate-description" },
                   crate.description || "No description recorded."));

    const floor = crate.acp_location.f;
    if (floor !== undefined) {
      try {
        const svgText = await ctx.api.getFloorSvg(floor);
        if (cancelled) return;
        const holder = el("div", { class: "plan-box zoomed" });
        holder.innerHTML = svgText;
        const plan = holder.querySelector("svg");
        const target = plan?.querySelector(`polygon[id="${cssEscape(crateId)}"]`);
        if (plan && target) {
          for (const polygon of plan.querySelectorAll("polygon")) {
            polygon.classList.add(polygon === target ? "room-focus" : "room-dimmed");
          }
          const pts = parsePointsAttr(target.getAttribute("points") ?? "");
          if (pts.length > 0) {
            const box = bounds(pts);
            const margin = Math.max(box.maxX - box.minX, box.maxY - box.minY) * 0.15 + 8;
            plan.setAttribute("viewBox",
              `${box.minX - margin} ${box.minY - margin} ` +
              `${box.maxX - box.minX + 2 * margin} ${box.maxY - box.minY + 2 * margin}`);
          }
          root.append(holder);
        }
      } catch {
        root.append(notice("Floor plan unavailable for this crate."));
      }
    }

    try {
      const sensors = await ctx.api.sensorsInCrate(crateId);
      if (cancelled) return;
      if (sensors.length === 0) {
        root.append(notice("No sensors deployed in this crate."));
        return;
      }
      const table = el("table", { class: "sensor-table" },
        el("tr", {}, el("th", {}, "sensor"), el("th", {}, "type"),
           el("th", {}, "features"), el("th", {}, "owner")));
      for (const sensor of sensors) {
        table.append(el("tr", { class: "sensor-row" },
          el("td", {},
             el("a", {
               href: `#/sensor/${encodeURIComponent(sensor.acp_id)}`,
               class: "sensor-link",
             }, sensor.acp_id)),
          el("td", {}, sensor.acp_type),
          el("td", {}, sensor.features.join(", ")),
          el("td", {}, sensor.owner)));
      }
      root.append(el("h3", {}, "Deployed sensors"), table);
    } catch (err) {
      root.append(errorBanner(`Sensor list unavailable: ${err}`, load));
    }
  }

  void load();
  return { destroy: () => { cancelled = true; } };
}

function cssEscape(value: string): string {
  return value.replace(/"/g, '\\"');
}

/** Building template: floors as a clickable extruded 2.5D stack. */

import { clear, el, errorBanner, notice, svg } from "../dom.js";
import { oblique, pointsAttr } from "../geo.js";
import type { CrateDoc } from "../types.js";
import { longName, type MountedView, type ViewContext } from "./common.js";

const FLOOR_LIFT = 46;

export function renderBuilding(root: HTMLElement, ctx: ViewContext, crateId: string): MountedView {
  let cancelled = false;

  async function load(): Promise<void> {
    clear(root);
    let building: CrateDoc;
    try {
      building = await ctx.api.getCrate(crateId, 1);
    } catch (err) {
      root.append(errorBanner(`Could not load building ${crateId}: ${err}`, load));
      return;
    }
    if (cancelled) return;
    root.append(el("h2", {}, `Building ${longName(building)}`));

    const floors = (building.children ?? [])
      .filter((c) => c.crate_type === "floor")
      .sort((a, b) => (a.acp_location.f ?? 0) - (b.acp_location.f ?? 0));
    if (floors.length === 0) {
      root.append(notice("This building has no floor crates yet."));
      return;
    }

    const stack = svg("svg", { class: "floor-stack", viewBox: stackViewBox(floors) });
    // painter's order: ground floor first so upper floors overlap it
    floors.forEach((floor, idx) => {
      const boundary = floor.acp_boundary.boundary;
      const floorNumber = floor.acp_location.f ?? idx;
      const group = svg("g", {
        class: "floor-slab",
        onclick: () => ctx.navigate({ template: "floor", floor: floorNumber }),
      });
      if (boundary.length >= 3) {
        const lift = idx * FLOOR_LIFT;
        const top = boundary.map(([x, y]) => oblique(x, y, lift));
        const skirt = boundary.map(([x, y]) => oblique(x, y, lift - 8));
        group.append(
          svg("polygon", { class: "floor-side", points: pointsAttr(skirt) }),
          svg("polygon", {
            class: "floor-top",
            points: pointsAttr(top),
            "data-floor_number": String(floorNumber),
          }),
          svg("text", { class: "floor-label", x: top[0]?.x ?? 0, y: (top[0]?.y ?? 0) - 4 },
              `${floor.crate_id} (floor ${floorNumber})`),
        );
      } else {
        // degenerate geometry: flat placeholder, still navigable
        const y = -idx * FLOOR_LIFT;
        group.append(
          svg("rect", { class: "floor-placeholder", x: 0, y: y - 24, width: 160, height: 24 }),
          svg("text", { class: "floor-label", x: 4, y: y - 8 },
              `${floor.crate_id} (no boundary)`),
        );
      }
      stack.append(group);
    });
    root.append(stack, notice("Click a floor to open its plan."));
  }

  void load();
  return { destroy: () => { cancelled = true; } };
}

function stackViewBox(floors: CrateDoc[]): string {
  let minX = 0, minY = 0, maxX = 1, maxY = 1;
  floors.forEach((floor, idx) => {
    for (const [x, y] of floor.acp_boundary.boundary) {
      const p = oblique(x, y, idx * FLOOR_LIFT);
      minX = Math.min(minX, p.x);
      minY = Math.min(minY, p.y);
      maxX = Math.max(maxX, p.x);
      maxY = Math.max(maxY, p.y);
    }
  });
  const margin = 30;
  return `${minX - margin} ${minY - margin} ${maxX - minX + 2 * margin} ${maxY - minY + 2 * margin}`;
}

/** App shell: hash router, breadcrumbs, view lifecycle. */

import { ApiClient } from "./api.js";
import { clear, el } from "./dom.js";
import { RtClient } from "./rt.js";
import { hashFor, parseHash, requiredTokens, type ViewState } from "./state.js";
import type { MountedView, ViewContext } from "./views/common.js";
import { renderBuilding } from "./views/building.js";
import { renderFloor } from "./views/floor.js";
import { renderFloorspace } from "./views/floorspace.js";
import { renderSensor } from "./views/sensor.js";
import { renderSite } from "./views/site.js";

export interface AppOptions {
  api?: ApiClient;
  rt?: RtClient;
  rootCrate?: string;
}

export interface App {
  navigate(state: ViewState): void;
  currentState(): ViewState;
  rt: RtClient;
  destroy(): void;
}

export function startApp(container: HTMLElement, opts: AppOptions = {}): App {
  const api = opts.api ?? new ApiClient();
  const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/rtmonitor/WS`;
  const rt = opts.rt ?? new RtClient(wsUrl);
  rt.connect();

  const params = new URLSearchParams(location.search);
  const rootCrate = opts.rootCrate ?? params.get("root") ?? "WGB";

  clear(container);
  const crumbs = el("nav", { class: "crumbs" });
  const viewRoot = el("main", { class: "view-root" });
  container.append(el("header", { class: "app-header" },
                      el("h1", {}, "buildsense"), crumbs), viewRoot);

  let mounted: MountedView | null = null;
  let state: ViewState = { template: "site" };

  const ctx: ViewContext = {
    api,
    rt,
    rootCrate,
    navigate: (next) => {
      location.hash = hashFor(next);
    },
  };

  function mount(next: ViewState): void {
    mounted?.destroy();
    state = next;
    drawCrumbs();
    switch (next.template) {
      case "site":
        mounted = renderSite(viewRoot, ctx);
        break;
      case "building":
        mounted = renderBuilding(viewRoot, ctx, next.crateId ?? rootCrate);
        break;
      case "floor":
        mounted = renderFloor(viewRoot, ctx, next.floor ?? 0);
        break;
      case "floorspace":
        mounted = renderFloorspace(viewRoot, ctx, next.crateId ?? rootCrate);
        break;
      case "sensor":
        mounted = renderSensor(viewRoot, ctx, next.acpId ?? "");
        break;
    }
    const leaked = rt.tokens().filter((t) => !requiredTokens(state).includes(t));
    if (leaked.length > 0) {
      // views must drop their tokens on destroy; anything left is a bug
      console.warn("leaked subscriptions after navigation:", leaked);
      leaked.forEach((t) => rt.unsubscribe(t));
    }
  }

  function drawCrumbs(): void {
    clear(crumbs);
    const add = (label: string, target?: ViewState) => {
      if (target) {
        crumbs.append(el("a", {
          href: hashFor(target),
          class: "crumb",
        }, label), el("span", { class: "crumb-sep" }, " / "));
      } else {
        crumbs.append(el("span", { class: "crumb current" }, label));
      }
    };
    add("site", state.template === "site" ? undefined : { template: "site" });
    if (state.template === "building") add(state.crateId ?? "");
    if (state.template === "floor") add(`floor ${state.floor}`);
    if (state.template === "floorspace") add(state.crateId ?? "");
    if (state.template === "sensor") add(state.acpId ?? "");
  }

  function onHashChange(): void {
    mount(parseHash(location.hash));
  }

  window.addEventListener("hashchange", onHashChange);
  mount(parseHash(location.hash));

  return {
    navigate: ctx.navigate,
    currentState: () => state,
    rt,
    destroy: () => {
      window.removeEventListener("hashchange", onHashChange);
      mounted?.destroy();
      mounted = null;
      rt.close();
    },
  };
}

// browser entry point; tests drive startApp directly
if (typeof document !== "undefined" && document.getElementById("app")) {
  startApp(document.getElementById("app")!);
}

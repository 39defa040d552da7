/** View-state machine: which template is mounted and what it points at. */

export type Template = "site" | "building" | "floor" | "floorspace" | "sensor";

export interface ViewState {
  template: Template;
  crateId?: string;
  floor?: number;
  acpId?: string;
}

export const TEMPLATE_ORDER: Template[] = ["site", "building", "floor", "floorspace", "sensor"];

export function hashFor(state: ViewState): string {
  switch (state.template) {
    case "site":
      return "#/site";
    case "building":
      return `#/building/${encodeURIComponent(state.crateId ?? "")}`;
    case "floor":
      return `#/floor/${state.floor ?? 0}`;
    case "floorspace":
      return `#/floorspace/${encodeURIComponent(state.crateId ?? "")}`;
    case "sensor":
      return `#/sensor/${encodeURIComponent(state.acpId ?? "")}`;
  }
}

export function parseHash(hash: string): ViewState {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  const [kind, arg] = [parts[0] ?? "site", parts[1] ? decodeURIComponent(parts[1]) : undefined];
  switch (kind) {
    case "building":
      return arg ? { template: "building", crateId: arg } : { template: "site" };
    case "floor": {
      const floor = Number(arg);
      return Number.isInteger(floor) ? { template: "floor", floor } : { template: "site" };
    }
    case "floorspace":
      return arg ? { template: "floorspace", crateId: arg } : { template: "site" };
    case "sensor":
      return arg ? { template: "sensor", acpId: arg } : { template: "site" };
    default:
      return { template: "site" };
  }
}

/**
 * Tokens a mounted template is allowed to hold. Only the sensor template
 * keeps a live subscription; everything else is pull-based, so after any
 * navigation the client registry must equal exactly this set.
 */
export function requiredTokens(state: ViewState): string[] {
  if (state.template === "sensor" && state.acpId) {
    return [`sensor:${state.acpId}`];
  }
  return [];
}

/** Hierarchy position of a template, for breadcrumb/back navigation. */
export function templateDepth(template: Template): number {
  return TEMPLATE_ORDER.indexOf(template);
}

import type { ApiClient } from "../api.js";
import type { RtClient } from "../rt.js";
import type { ViewState } from "../state.js";
import type { CrateDoc } from "../types.js";

export interface ViewContext {
  api: ApiClient;
  rt: RtClient;
  navigate(state: ViewState): void;
  rootCrate: string;
}

export interface MountedView {
  destroy(): void;
}

export function walkCrates(root: CrateDoc, visit: (crate: CrateDoc) => void): void {
  visit(root);
  for (const child of root.children ?? []) {
    walkCrates(child, visit);
  }
}

export function longName(crate: CrateDoc): string {
  return crate["long-name"] || crate.crate_id;
}

/** Wire documents served by the platform API. */

export interface LocationDoc {
  system: string;
  acp_lat?: number;
  acp_lng?: number;
  acp_alt?: number;
  x?: number;
  y?: number;
  f?: number;
  zf?: number;
  parent_crate_id?: string;
}

export interface BoundaryDoc {
  system: string;
  boundary: [number, number][];
}

export interface CrateDoc {
  crate_id: string;
  parent_crate_id?: string;
  crate_type: string;
  "long-name": string;
  description: string;
  acp_location: LocationDoc;
  acp_boundary: BoundaryDoc;
  acp_ts: string;
  children?: CrateDoc[];
}

export interface SensorDoc {
  acp_id: string;
  acp_type: string;
  owner: string;
  source: string;
  features: string[];
  acp_location: LocationDoc;
  acp_ts: string;
}

export interface ReadingDoc {
  acp_id: string;
  acp_ts: string;
  features: Record<string, number>;
  acp_type?: string;
  parent_crate_id?: string;
  acp_location?: LocationDoc;
}

export type FilterOp = "==" | "!=" | "<" | "<=" | ">" | ">=";

export interface Filter {
  field: string;
  op: FilterOp;
  value: string | number;
}

export interface RtStatusDoc {
  sessions: { session_id: string; tokens: string[]; queued: number; pushed: number }[];
  pushed_total: number;
  overflows: number;
}

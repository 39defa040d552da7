import type { CrateDoc, ReadingDoc, RtStatusDoc, SensorDoc } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public url: string, message: string) {
    super(`${status} ${url}: ${message}`);
  }
}

/** Thin typed client over the five documented endpoint families. */
export class ApiClient {
  constructor(private base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const url = `${this.base}${path}`;
    const resp = await fetch(url);
    if (!resp.ok) {
      throw new ApiError(resp.status, url, await resp.text());
    }
    return (await resp.json()) as T;
  }

  getCrate(crateId: string, childrenDepth?: number): Promise<CrateDoc> {
    const suffix = childrenDepth === undefined ? "" : `/${childrenDepth}`;
    return this.getJson(`/api/bim/get/${encodeURIComponent(crateId)}${suffix}`);
  }

  async getFloorSvg(floor: number): Promise<string> {
    const url = `${this.base}/api/space/get_bim_floor_number/${floor}`;
    const resp = await fetch(url);
    if (!resp.ok) {
      throw new ApiError(resp.status, url, await resp.text());
    }
    return resp.text();
  }

  getSensor(acpId: string): Promise<SensorDoc> {
    return this.getJson(`/api/sensors/get/${encodeURIComponent(acpId)}`);
  }

  sensorsInCrate(crateId: string): Promise<SensorDoc[]> {
    return this.getJson(`/api/sensors/bim/get/${encodeURIComponent(crateId)}`);
  }

  async latestReading(acpId: string): Promise<ReadingDoc | null> {
    try {
      return await this.getJson<ReadingDoc>(`/api/readings/get/${encodeURIComponent(acpId)}`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return null;
      throw err;
    }
  }

  readingsRange(acpId: string, fromTs: number, toTs: number): Promise<ReadingDoc[]> {
    const params = `from=${fromTs.toFixed(6)}&to=${toTs.toFixed(6)}`;
    return this.getJson(`/api/readings/get/${encodeURIComponent(acpId)}?${params}`);
  }

  rtStatus(): Promise<RtStatusDoc> {
    return this.getJson("/rtmonitor/status");
  }
}

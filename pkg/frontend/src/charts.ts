/** Pure geometry for the sensor template's time-series chart. */

export interface ChartPoint {
  t: number; // epoch seconds
  v: number;
}

export interface ChartGeometry {
  linePoints: string;
  xTicks: { x: number; label: string }[];
  yTicks: { y: number; label: string }[];
  gapLines: number[]; // x positions of reconnect gaps
  toX(t: number): number;
  toY(v: number): number;
}

export interface ChartOptions {
  width: number;
  height: number;
  padding: number;
  tMin: number;
  tMax: number;
  gaps?: number[]; // epoch seconds of websocket gaps inside the window
}

export function chartGeometry(points: ChartPoint[], opts: ChartOptions): ChartGeometry {
  const { width, height, padding } = opts;
  const tSpan = Math.max(opts.tMax - opts.tMin, 1e-9);
  let vMin = Math.min(...points.map((p) => p.v));
  let vMax = Math.max(...points.map((p) => p.v));
  if (points.length === 0) {
    vMin = 0;
    vMax = 1;
  }
  if (vMin === vMax) {
    vMin -= 1;
    vMax += 1;
  }
  const innerW = width - 2 * padding;
  const innerH = height - 2 * padding;
  const toX = (t: number) => padding + ((t - opts.tMin) / tSpan) * innerW;
  const toY = (v: number) => padding + innerH - ((v - vMin) / (vMax - vMin)) * innerH;

  const ordered = [...points].sort((a, b) => a.t - b.t);
  const linePoints = ordered.map((p) => `${toX(p.t).toFixed(1)},${toY(p.v).toFixed(1)}`).join(" ");

  const xTicks = [];
  for (let i = 0; i <= 4; i++) {
    const t = opts.tMin + (tSpan * i) / 4;
    xTicks.push({ x: toX(t), label: formatTime(t) });
  }
  const yTicks = [];
  for (let i = 0; i <= 3; i++) {
    const v = vMin + ((vMax - vMin) * i) / 3;
    yTicks.push({ y: toY(v), label: formatValue(v) });
  }
  const gapLines = (opts.gaps ?? [])
    .filter((t) => t >= opts.tMin && t <= opts.tMax)
    .map((t) => toX(t));
  return { linePoints, xTicks, yTicks, gapLines, toX, toY };
}

function formatTime(epochSeconds: number): string {
  const d = new Date(epochSeconds * 1000);
  return `${pad(d.getUTCHours())}:${pad(d.getUTCMinutes())}`;
}

function formatValue(v: number): string {
  const magnitude = Math.abs(v);
  if (magnitude >= 100) return v.toFixed(0);
  if (magnitude >= 1) return v.toFixed(1);
  return v.toFixed(2);
}

function pad(n: number): string {
  return n.toString().padStart(2, "0");
}

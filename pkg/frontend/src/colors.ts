/** Linear heat-map scale with fixed per-feature ranges. */

export const FEATURE_RANGES: Record<string, [number, number]> = {
  co2: [350, 1500],
  temperature: [10, 35],
  humidity: [0, 100],
  motion: [0, 4],
  light: [0, 500],
  vdd: [3400, 3700],
};

const COLD: [number, number, number] = [49, 130, 189];   // blue
const HOT: [number, number, number] = [222, 45, 38];     // red

export const NEUTRAL_FILL = "rgb(226,232,240)";

export function featureRange(feature: string): [number, number] {
  return FEATURE_RANGES[feature] ?? [0, 1];
}

/** Position of a value in its feature range, clamped to [0, 1]. */
export function normalize(feature: string, value: number): number {
  const [lo, hi] = featureRange(feature);
  if (hi === lo) return 0;
  return Math.min(1, Math.max(0, (value - lo) / (hi - lo)));
}

export function heatColor(feature: string, value: number): string {
  const t = normalize(feature, value);
  const channel = (i: number) => Math.round(COLD[i]! + (HOT[i]! - COLD[i]!) * t);
  return `rgb(${channel(0)},${channel(1)},${channel(2)})`;
}

export interface LegendStop {
  value: number;
  color: string;
}

export function legendStops(feature: string, count = 5): LegendStop[] {
  const [lo, hi] = featureRange(feature);
  const stops: LegendStop[] = [];
  for (let i = 0; i < count; i++) {
    const value = lo + ((hi - lo) * i) / (count - 1);
    stops.push({ value, color: heatColor(feature, value) });
  }
  return stops;
}

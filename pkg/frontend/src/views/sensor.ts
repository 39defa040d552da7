/** Sensor template: historical time-series plus live-appended points. */

import { chartGeometry, type ChartPoint } from "../charts.js";
import { clear, el, errorBanner, notice, svg } from "../dom.js";
import type { ReadingDoc, SensorDoc } from "../types.js";
import type { MountedView, ViewContext } from "./common.js";

const CHART_W = 720;
const CHART_H = 260;
const PAD = 36;

const TIMEFRAMES: Record<string, number> = {
  "last hour": 3600,
  "last 24 h": 86_400,
  "last 7 days": 7 * 86_400,
};

export function renderSensor(root: HTMLElement, ctx: ViewContext, acpId: string): MountedView {
  const token = `sensor:${acpId}`;
  let cancelled = false;
  let feature = "";
  let points: ChartPoint[] = [];
  let windowEnd = Date.now() / 1000;
  let windowSpan = TIMEFRAMES["last 24 h"]!;
  const gaps: number[] = [];
  let chartBox: HTMLElement | null = null;
  let liveBadge: HTMLElement | null = null;

  const dropGapListener = ctx.rt.onGap((atMs) => {
    gaps.push(atMs / 1000);
    if (liveBadge) liveBadge.textContent = "live (reconnecting...)";
    redraw();
  });

  async function load(): Promise<void> {
    clear(root);
    let meta: SensorDoc;
    try {
      meta = await ctx.api.getSensor(acpId);
    } catch (err) {
      root.append(errorBanner(`Unknown sensor ${acpId}: ${err}`, load));
      return;
    }
    if (cancelled) return;
    feature = feature || meta.features[0] || "value";

    root.append(el("h2", {}, `Sensor ${acpId}`));
    root.append(el("p", { class: "sensor-meta" },
      `type ${meta.acp_type} | owner ${meta.owner} | source ${meta.source}` +
      (meta.acp_location.parent_crate_id ? ` | crate ${meta.acp_location.parent_crate_id}` : "")));

    const controls = el("div", { class: "controls" });
    const featurePicker = el("select", { class: "feature-picker" });
    for (const name of meta.features) {
      featurePicker.append(el("option", { value: name }, name));
    }
    featurePicker.value = feature;
    featurePicker.addEventListener("change", () => {
      feature = featurePicker.value;
      void refetch();
    });

    const framePicker = el("select", { class: "timeframe-picker" });
    for (const label of Object.keys(TIMEFRAMES)) {
      framePicker.append(el("option", { value: label }, label));
    }
    framePicker.value = "last 24 h";
    framePicker.addEventListener("change", () => {
      windowSpan = TIMEFRAMES[framePicker.value] ?? 86_400;
      windowEnd = Date.now() / 1000;
      void refetch();
    });

    liveBadge = el("span", { class: "live-badge" }, "live");
    controls.append(
      el("label", {}, "Feature: "), featurePicker,
      el("label", {}, " Timeframe: "), framePicker,
      liveBadge,
    );
    chartBox = el("div", { class: "chart-box" });
    root.append(controls, chartBox);

    await refetch();
    if (cancelled) return;

    // live path: new readings append without refetching history
    ctx.rt.subscribeSensor(token, acpId, onLiveReading);
  }

  async function refetch(): Promise<void> {
    windowEnd = Date.now() / 1000;
    let from = windowEnd - windowSpan;
    let history: ReadingDoc[] = [];
    try {
      history = await ctx.api.readingsRange(acpId, from, windowEnd);
      if (history.length === 0) {
        // nothing recent: center the window on the newest stored reading
        const latest = await ctx.api.latestReading(acpId);
        if (latest) {
          const ts = parseFloat(latest.acp_ts);
          from = ts - windowSpan / 2;
          windowEnd = ts + windowSpan / 2;
          history = await ctx.api.readingsRange(acpId, from, windowEnd);
        }
      }
    } catch {
      history = [];
    }
    if (cancelled) return;
    points = history
      .filter((r) => r.features[feature] !== undefined)
      .map((r) => ({ t: parseFloat(r.acp_ts), v: r.features[feature]! }));
    redraw();
  }

  function onLiveReading(doc: ReadingDoc): void {
    const v = doc.features[feature];
    if (v === undefined) return;
    const t = parseFloat(doc.acp_ts);
    points.push({ t, v });
    if (t > windowEnd) windowEnd = t;
    if (liveBadge) liveBadge.textContent = "live";
    redraw();
  }

  function redraw(): void {
    if (!chartBox) return;
    clear(chartBox);
    if (points.length === 0) {
      chartBox.append(notice("No readings in this timeframe."));
      return;
    }
    const geometry = chartGeometry(points, {
      width: CHART_W, height: CHART_H, padding: PAD,
      tMin: windowEnd - windowSpan, tMax: windowEnd,
      gaps,
    });
    const chart = svg("svg", {
      class: "ts-chart",
      viewBox: `0 0 ${CHART_W} ${CHART_H}`,
      "data-points": String(points.length),
    });
    chart.append(svg("rect", { class: "chart-bg", x: PAD, y: PAD,
                               width: CHART_W - 2 * PAD, height: CHART_H - 2 * PAD }));
    for (const tick of geometry.xTicks) {
      chart.append(
        svg("line", { class: "tick-line", x1: tick.x, y1: PAD, x2: tick.x, y2: CHART_H - PAD }),
        svg("text", { class: "tick-label", x: tick.x, y: CHART_H - PAD + 14 }, tick.label),
      );
    }
    for (const tick of geometry.yTicks) {
      chart.append(
        svg("line", { class: "tick-line", x1: PAD, y1: tick.y, x2: CHART_W - PAD, y2: tick.y }),
        svg("text", { class: "tick-label y", x: PAD - 4, y: tick.y + 3 }, tick.label),
      );
    }
    for (const x of geometry.gapLines) {
      chart.append(svg("line", { class: "gap-line", x1: x, y1: PAD, x2: x, y2: CHART_H - PAD }));
    }
    chart.append(svg("polyline", { class: "ts-line", points: geometry.linePoints }));
    const last = points[points.length - 1];
    if (last) {
      chart.append(svg("circle", {
        class: "ts-last", cx: geometry.toX(last.t), cy: geometry.toY(last.v), r: 3.5,
      }));
    }
    chartBox.append(chart);
  }

  void load();
  return {
    destroy: () => {
      cancelled = true;
      dropGapListener();
      ctx.rt.unsubscribe(token);
    },
  };
}

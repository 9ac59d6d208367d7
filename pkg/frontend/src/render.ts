/**
 * 2-D canvas rendering: commanded (dashed) vs adapted (solid) pose traces,
 * torque bars against the limit line, and margin gauges. No 3-D.
 */

import { TelemetryFrame } from "./protocol.js";
import { TelemetryHistory, TracePoint, torqueBars } from "./state.js";

export interface Range {
  min: number;
  max: number;
}

/** Tight range over a set of values with a small symmetric pad. */
export function valueRange(values: number[], minSpan = 1e-3): Range {
  if (values.length === 0) return { min: -1, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (max - min < minSpan) {
    const mid = 0.5 * (min + max);
    min = mid - minSpan / 2;
    max = mid + minSpan / 2;
  }
  const pad = 0.05 * (max - min);
  return { min: min - pad, max: max + pad };
}

export function toCanvasY(value: number, range: Range, height: number): number {
  return height * (1 - (value - range.min) / (range.max - range.min));
}

const CHANNEL_LABELS = ["roll", "pitch", "yaw", "x", "y", "z"];
const CHANNEL_UNITS = ["rad", "rad", "rad", "m", "m", "m"];

export function drawTraces(
  ctx: CanvasRenderingContext2D,
  history: TelemetryHistory,
  channel: number,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const points = history.traces.toArray();
  if (points.length < 2) return;
  const values: number[] = [];
  for (const p of points) {
    values.push(p.commanded[channel] ?? 0, p.adapted[channel] ?? 0, p.measured[channel] ?? 0);
  }
  const range = valueRange(values);
  const t0 = points[0]!.time;
  const t1 = points[points.length - 1]!.time;
  const span = Math.max(t1 - t0, 1e-9);
  const x = (t: number) => ((t - t0) / span) * width;

  const drawSeries = (
    pick: (p: TracePoint) => number,
    stroke: string,
    dash: number[],
  ) => {
    ctx.save();
    ctx.strokeStyle = stroke;
    ctx.setLineDash(dash);
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    points.forEach((p, i) => {
      const px = x(p.time);
      const py = toCanvasY(pick(p), range, height);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    ctx.restore();
  };

  drawSeries((p) => p.measured[channel] ?? 0, "#888888", []);
  drawSeries((p) => p.commanded[channel] ?? 0, "#d08b1f", [6, 4]); // dashed
  drawSeries((p) => p.adapted[channel] ?? 0, "#2b7bd3", []); // solid

  ctx.fillStyle = "#aaaaaa";
  ctx.font = "11px sans-serif";
  ctx.fillText(
    `${CHANNEL_LABELS[channel]} (${CHANNEL_UNITS[channel]})`,
    6,
    14,
  );
}

export function drawTorqueBars(
  ctx: CanvasRenderingContext2D,
  frame: TelemetryFrame,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const bars = torqueBars(frame);
  const n = bars.length;
  const gap = 4;
  const barWidth = (width - gap * (n + 1)) / n;
  const usable = height - 18;
  bars.forEach((ratio, i) => {
    const clamped = Math.min(ratio, 1.0);
    const h = clamped * usable;
    const xPos = gap + i * (barWidth + gap);
    ctx.fillStyle =
      ratio > frame.torque_ratio ? "#d9483b" : ratio > 0.75 * frame.torque_ratio ? "#d0a41f" : "#3f9c54";
    ctx.fillRect(xPos, usable - h, barWidth, h);
    ctx.fillStyle = "#aaaaaa";
    ctx.font = "9px sans-serif";
    ctx.fillText(String(i), xPos + barWidth / 2 - 3, height - 5);
  });
  // limit line at torque_ratio of the hardware maximum (full scale = 1.0)
  const yLimit = usable * (1 - frame.torque_ratio);
  ctx.save();
  ctx.strokeStyle = "#d9483b";
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(0, yLimit);
  ctx.lineTo(width, yLimit);
  ctx.stroke();
  ctx.restore();
}

export interface GaugeSpec {
  label: string;
  value: number;
  fullScale: number; // value rendering as a full bar
}

export function gaugeFill(value: number, fullScale: number): number {
  if (fullScale <= 0) return 0;
  return Math.max(0, Math.min(1, value / fullScale));
}

export function drawGauge(
  ctx: CanvasRenderingContext2D,
  spec: GaugeSpec,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const critical = spec.value <= 0;
  const fill = gaugeFill(spec.value, spec.fullScale);
  ctx.fillStyle = "#2a2a2a";
  ctx.fillRect(0, 6, width, height - 12);
  ctx.fillStyle = critical ? "#d9483b" : fill < 0.25 ? "#d0a41f" : "#3f9c54";
  ctx.fillRect(0, 6, fill * width, height - 12);
  ctx.fillStyle = critical ? "#ff8c80" : "#cccccc";
  ctx.font = "11px sans-serif";
  ctx.fillText(
    `${spec.label}: ${spec.value.toFixed(3)}${critical ? "  CRITICAL" : ""}`,
    6,
    height / 2 + 4,
  );
}

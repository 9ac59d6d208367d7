import { describe, expect, it } from "vitest";

import { parseServerFrame, TelemetryFrame } from "../src/protocol.js";
import { RingBuffer, TelemetryHistory, torqueBars } from "../src/state.js";
import { gaugeFill, toCanvasY, valueRange } from "../src/render.js";

function telemetry(overrides: Record<string, unknown> = {}): TelemetryFrame {
  const pose = { quat: [1, 0, 0, 0], trans: [0.5, 0.0, 0.4] };
  const frame = parseServerFrame(
    JSON.stringify({
      v: 1,
      type: "telemetry",
      cycle: 0,
      time: 0,
      commanded: pose,
      adapted: pose,
      measured: pose,
      tau: new Array(14).fill(0),
      tau_limit: new Array(14).fill(78.3),
      torque_ratio: 0.9,
      friction_margin: 2.0,
      cop_margin: 0.5,
      clamped: false,
      qp_status: "optimal",
      compute_us: 100,
      ...overrides,
    }),
  );
  if (frame.type !== "telemetry") throw new Error("fixture must be telemetry");
  return frame;
}

describe("RingBuffer", () => {
  it("keeps only the newest items at capacity", () => {
    const buf = new RingBuffer<number>(3);
    [1, 2, 3, 4, 5].forEach((v) => buf.push(v));
    expect(buf.toArray()).toEqual([3, 4, 5]);
    expect(buf.last()).toBe(5);
    expect(buf.length).toBe(3);
  });

  it("rejects nonsense capacity", () => {
    expect(() => new RingBuffer(0)).toThrow();
  });
});

describe("TelemetryHistory", () => {
  it("converts poses into rpy+xyz channels", () => {
    const history = new TelemetryHistory(10);
    history.push(telemetry({ time: 0.02 }));
    const point = history.traces.last()!;
    expect(point.time).toBeCloseTo(0.02);
    expect(point.commanded.slice(3)).toEqual([0.5, 0.0, 0.4]);
    expect(point.commanded.slice(0, 3)).toEqual([0, 0, 0]);
    expect(history.latest!.qp_status).toBe("optimal");
  });

  it("bounds its memory", () => {
    const history = new TelemetryHistory(5);
    for (let i = 0; i < 20; i += 1) history.push(telemetry({ time: i }));
    expect(history.traces.length).toBe(5);
    expect(history.framesSeen).toBe(20);
  });
});

describe("torqueBars", () => {
  it("normalizes against the hardware maximum, limit line at the ratio", () => {
    // tau_limit is the enforced limit (ratio * max); a torque exactly at the
    // enforced limit must render at the ratio of full scale
    const frame = telemetry({
      tau: new Array(14).fill(78.3),
      tau_limit: new Array(14).fill(78.3),
      torque_ratio: 0.9,
    });
    const bars = torqueBars(frame);
    expect(bars[0]).toBeCloseTo(0.9, 12);
  });

  it("uses magnitude", () => {
    const tau = new Array(14).fill(0);
    tau[2] = -43.5; // half of 87
    const frame = telemetry({
      tau,
      tau_limit: new Array(14).fill(0.9 * 87),
      torque_ratio: 0.9,
    });
    expect(torqueBars(frame)[2]).toBeCloseTo(0.5, 12);
  });
});

describe("render helpers", () => {
  it("valueRange pads and never collapses", () => {
    const r = valueRange([1, 1, 1]);
    expect(r.max).toBeGreaterThan(r.min);
    const wide = valueRange([0, 10]);
    expect(wide.min).toBeLessThan(0);
    expect(wide.max).toBeGreaterThan(10);
  });

  it("toCanvasY maps min to the bottom and max to the top", () => {
    const range = { min: 0, max: 1 };
    expect(toCanvasY(0, range, 100)).toBe(100);
    expect(toCanvasY(1, range, 100)).toBe(0);
  });

  it("gaugeFill clamps to [0, 1] and floors negatives", () => {
    expect(gaugeFill(-2, 5)).toBe(0);
    expect(gaugeFill(2.5, 5)).toBeCloseTo(0.5);
    expect(gaugeFill(99, 5)).toBe(1);
  });
});

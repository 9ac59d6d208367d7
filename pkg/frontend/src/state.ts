/**
 * Client-side telemetry history: fixed-capacity ring buffers feeding the
 * trace plots, plus the latest frame for the instantaneous readouts.
 */

import { TelemetryFrame, quatToRpy } from "./protocol.js";

export interface TracePoint {
  time: number;
  commanded: [number, number, number, number, number, number]; // rpy + xyz
  adapted: [number, number, number, number, number, number];
  measured: [number, number, number, number, number, number];
}

export class RingBuffer<T> {
  private items: T[] = [];

  constructor(readonly capacity: number) {
    if (capacity < 1) throw new Error("capacity must be >= 1");
  }

  push(item: T): void {
    this.items.push(item);
    if (this.items.length > this.capacity) {
      this.items.splice(0, this.items.length - this.capacity);
    }
  }

  toArray(): readonly T[] {
    return this.items;
  }

  get length(): number {
    return this.items.length;
  }

  last(): T | undefined {
    return this.items[this.items.length - 1];
  }

  clear(): void {
    this.items = [];
  }
}

function poseChannels(p: {
  quat: [number, number, number, number];
  trans: [number, number, number];
}): [number, number, number, number, number, number] {
  const [roll, pitch, yaw] = quatToRpy(p.quat);
  return [roll, pitch, yaw, p.trans[0], p.trans[1], p.trans[2]];
}

export class TelemetryHistory {
  readonly traces: RingBuffer<TracePoint>;
  latest: TelemetryFrame | null = null;
  framesSeen = 0;

  constructor(capacity = 600) {
    this.traces = new RingBuffer<TracePoint>(capacity);
  }

  push(frame: TelemetryFrame): void {
    this.latest = frame;
    this.framesSeen += 1;
    this.traces.push({
      time: frame.time,
      commanded: poseChannels(frame.commanded),
      adapted: poseChannels(frame.adapted),
      measured: poseChannels(frame.measured),
    });
  }

  clear(): void {
    this.traces.clear();
    this.latest = null;
  }
}

/** Torque bar values normalized to the hardware maximum.
 *
 * Telemetry carries the enforced limit (torque_ratio * tau_max), so the
 * hardware maximum is tau_limit / torque_ratio and the limit line sits at
 * exactly torque_ratio of full scale.
 */
export function torqueBars(frame: TelemetryFrame): number[] {
  return frame.tau.map((t, i) => {
    const limit = frame.tau_limit[i] ?? 0;
    const hardwareMax = limit / frame.torque_ratio;
    return hardwareMax > 0 ? Math.abs(t) / hardwareMax : 0;
  });
}

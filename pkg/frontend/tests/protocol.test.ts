import { describe, expect, it } from "vitest";

import {
  buildCommand,
  clampToBounds,
  parseServerFrame,
  quatToRpy,
  SchemaError,
  Vec6,
} from "../src/protocol.js";

function telemetryFixture(overrides: Record<string, unknown> = {}): string {
  const pose = { quat: [1, 0, 0, 0], trans: [0.5, 0.0, 0.4] };
  return JSON.stringify({
    v: 1,
    type: "telemetry",
    cycle: 40,
    time: 0.04,
    commanded: pose,
    adapted: pose,
    measured: pose,
    tau: new Array(14).fill(1.5),
    tau_limit: new Array(14).fill(78.3),
    torque_ratio: 0.9,
    friction_margin: 2.5,
    cop_margin: 0.3,
    clamped: false,
    qp_status: "optimal",
    compute_us: 450.0,
    ...overrides,
  });
}

describe("parseServerFrame", () => {
  it("accepts a well-formed telemetry frame", () => {
    const frame = parseServerFrame(telemetryFixture());
    expect(frame.type).toBe("telemetry");
    if (frame.type !== "telemetry") return;
    expect(frame.cycle).toBe(40);
    expect(frame.tau).toHaveLength(14);
    expect(frame.torque_ratio).toBeCloseTo(0.9);
    expect(frame.commanded.trans).toEqual([0.5, 0.0, 0.4]);
  });

  it("accepts an error frame", () => {
    const frame = parseServerFrame(
      JSON.stringify({ v: 1, type: "error", message: "boom" }),
    );
    expect(frame).toEqual({ v: 1, type: "error", message: "boom" });
  });

  it("rejects invalid JSON", () => {
    expect(() => parseServerFrame("{nope")).toThrow(SchemaError);
  });

  it("rejects wrong protocol version", () => {
    expect(() => parseServerFrame(telemetryFixture({ v: 2 }))).toThrow(
      /version/,
    );
  });

  it("rejects unknown frame types", () => {
    expect(() => parseServerFrame(telemetryFixture({ type: "pose" }))).toThrow(
      /type/,
    );
  });

  it("rejects a short torque vector", () => {
    expect(() =>
      parseServerFrame(telemetryFixture({ tau: [1, 2, 3] })),
    ).toThrow(/tau/);
  });

  it("rejects non-finite pose entries", () => {
    expect(() =>
      parseServerFrame(
        telemetryFixture({
          adapted: { quat: [1, 0, 0, 0], trans: [null, 0, 0] },
        }),
      ),
    ).toThrow(/adapted/);
  });

  it("rejects a non-positive torque ratio", () => {
    expect(() =>
      parseServerFrame(telemetryFixture({ torque_ratio: 0 })),
    ).toThrow(/torque_ratio/);
  });
});

describe("clampToBounds", () => {
  it("clamps twist components at 1.0 rad/s and 0.5 m/s", () => {
    const v: Vec6 = [3, -3, 0.5, 2, -2, 0.1];
    expect(clampToBounds(v, "twist")).toEqual([1, -1, 0.5, 0.5, -0.5, 0.1]);
  });

  it("clamps pose components at pi rad and 0.5 m", () => {
    const v: Vec6 = [4, -4, 1.5, 0.7, -0.7, 0.2];
    const out = clampToBounds(v, "pose");
    expect(out[0]).toBeCloseTo(Math.PI);
    expect(out[1]).toBeCloseTo(-Math.PI);
    expect(out[2]).toBeCloseTo(1.5);
    expect(out.slice(3)).toEqual([0.5, -0.5, 0.2]);
  });

  it("replaces non-finite values with zero", () => {
    const v: Vec6 = [NaN, Infinity, 0, -Infinity, 0, 0];
    expect(clampToBounds(v, "twist")).toEqual([0, 0, 0, 0, 0, 0]);
  });
});

describe("buildCommand", () => {
  it("produces a schema-conforming, clamped frame", () => {
    const frame = buildCommand(7, "bimanual", "twist", [0, 0, 0, 2, 0, 0], [
      0, 0, 0, 0, 0, 0,
    ]);
    expect(frame).toEqual({
      v: 1,
      type: "command",
      seq: 7,
      mode: "bimanual",
      command: "twist",
      left: [0, 0, 0, 0.5, 0, 0],
      right: [0, 0, 0, 0, 0, 0],
    });
  });

  it("rejects negative sequence numbers", () => {
    expect(() =>
      buildCommand(-1, "bimanual", "twist", [0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0]),
    ).toThrow(SchemaError);
  });
});

describe("quatToRpy", () => {
  it("identity quaternion maps to zero angles", () => {
    expect(quatToRpy([1, 0, 0, 0])).toEqual([0, 0, 0]);
  });

  it("pure yaw rotation", () => {
    const half = Math.PI / 8;
    const [roll, pitch, yaw] = quatToRpy([Math.cos(half), 0, 0, Math.sin(half)]);
    expect(roll).toBeCloseTo(0, 12);
    expect(pitch).toBeCloseTo(0, 12);
    expect(yaw).toBeCloseTo(Math.PI / 4, 12);
  });

  it("pure roll rotation", () => {
    const half = 0.3;
    const [roll, pitch, yaw] = quatToRpy([Math.cos(half), Math.sin(half), 0, 0]);
    expect(roll).toBeCloseTo(0.6, 12);
    expect(pitch).toBeCloseTo(0, 12);
    expect(yaw).toBeCloseTo(0, 12);
  });
});

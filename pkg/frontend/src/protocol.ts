/**
 * Wire schema of the teleoperation bridge: newline-delimited JSON frames
 * over a WebSocket, versioned with `v: 1`.
 *
 * Client -> server: command frames with a monotonically increasing `seq`.
 * Server -> client: telemetry frames (decimated control cycles) and error
 * frames for malformed input.
 */

export const PROTOCOL_VERSION = 1;

export const TWIST_ANGULAR_MAX = 1.0; // rad/s per component
export const TWIST_LINEAR_MAX = 0.5; // m/s per component
export const POSE_ANGULAR_MAX = Math.PI; // rad per component
export const POSE_LINEAR_MAX = 0.5; // m per component

export type Mode = "bimanual" | "independent";
export type CommandMode = "twist" | "pose";

/** (angular; linear) 6-vector, matching the bridge ordering. */
export type Vec6 = [number, number, number, number, number, number];

export interface CommandFrame {
  v: number;
  type: "command";
  seq: number;
  mode: Mode;
  command: CommandMode;
  left: Vec6;
  right: Vec6;
}

export interface PoseFields {
  quat: [number, number, number, number]; // w, x, y, z
  trans: [number, number, number];
}

export interface TelemetryFrame {
  v: number;
  type: "telemetry";
  cycle: number;
  time: number;
  commanded: PoseFields;
  adapted: PoseFields;
  measured: PoseFields;
  tau: number[];
  tau_limit: number[];
  torque_ratio: number;
  friction_margin: number;
  cop_margin: number;
  clamped: boolean;
  qp_status: string;
  compute_us: number;
}

export interface ErrorFrame {
  v: number;
  type: "error";
  message: string;
}

export type ServerFrame = TelemetryFrame | ErrorFrame;

export class SchemaError extends Error {}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function asNumberArray(x: unknown, n: number, name: string): number[] {
  if (!Array.isArray(x) || x.length !== n || !x.every(isFiniteNumber)) {
    throw new SchemaError(`${name} must be a finite ${n}-vector`);
  }
  return x as number[];
}

function asPoseFields(x: unknown, name: string): PoseFields {
  if (typeof x !== "object" || x === null) {
    throw new SchemaError(`${name} must be an object`);
  }
  const obj = x as Record<string, unknown>;
  return {
    quat: asNumberArray(obj.quat, 4, `${name}.quat`) as PoseFields["quat"],
    trans: asNumberArray(obj.trans, 3, `${name}.trans`) as PoseFields["trans"],
  };
}

/** Parse and validate one server frame; throws SchemaError on violations. */
export function parseServerFrame(text: string): ServerFrame {
  let msg: unknown;
  try {
    msg = JSON.parse(text);
  } catch {
    throw new SchemaError("invalid JSON");
  }
  if (typeof msg !== "object" || msg === null) {
    throw new SchemaError("frame must be an object");
  }
  const obj = msg as Record<string, unknown>;
  if (obj.v !== PROTOCOL_VERSION) {
    throw new SchemaError(`unsupported protocol version ${String(obj.v)}`);
  }
  if (obj.type === "error") {
    if (typeof obj.message !== "string") {
      throw new SchemaError("error frame must carry a message");
    }
    return { v: PROTOCOL_VERSION, type: "error", message: obj.message };
  }
  if (obj.type !== "telemetry") {
    throw new SchemaError(`unexpected frame type ${String(obj.type)}`);
  }
  if (!isFiniteNumber(obj.cycle) || !isFiniteNumber(obj.time)) {
    throw new SchemaError("telemetry must carry numeric cycle and time");
  }
  const tau = asNumberArray(obj.tau, 14, "tau");
  const tauLimit = asNumberArray(obj.tau_limit, 14, "tau_limit");
  if (!isFiniteNumber(obj.torque_ratio) || obj.torque_ratio <= 0) {
    throw new SchemaError("torque_ratio must be a positive number");
  }
  if (!isFiniteNumber(obj.friction_margin) || !isFiniteNumber(obj.cop_margin)) {
    throw new SchemaError("margins must be numbers");
  }
  if (typeof obj.clamped !== "boolean" || typeof obj.qp_status !== "string") {
    throw new SchemaError("clamped/qp_status malformed");
  }
  return {
    v: PROTOCOL_VERSION,
    type: "telemetry",
    cycle: obj.cycle,
    time: obj.time,
    commanded: asPoseFields(obj.commanded, "commanded"),
    adapted: asPoseFields(obj.adapted, "adapted"),
    measured: asPoseFields(obj.measured, "measured"),
    tau,
    tau_limit: tauLimit,
    torque_ratio: obj.torque_ratio,
    friction_margin: obj.friction_margin,
    cop_margin: obj.cop_margin,
    clamped: obj.clamped,
    qp_status: obj.qp_status,
    compute_us: isFiniteNumber(obj.compute_us) ? obj.compute_us : 0,
  };
}

function clampComponent(value: number, bound: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(bound, Math.max(-bound, value));
}

/** Clamp a 6-vector to the schema bounds of the given command mode. */
export function clampToBounds(v: Vec6, commandMode: CommandMode): Vec6 {
  const angMax = commandMode === "twist" ? TWIST_ANGULAR_MAX : POSE_ANGULAR_MAX;
  const linMax = commandMode === "twist" ? TWIST_LINEAR_MAX : POSE_LINEAR_MAX;
  return [
    clampComponent(v[0], angMax),
    clampComponent(v[1], angMax),
    clampComponent(v[2], angMax),
    clampComponent(v[3], linMax),
    clampComponent(v[4], linMax),
    clampComponent(v[5], linMax),
  ];
}

/** Build a validated, bounds-clamped command frame. */
export function buildCommand(
  seq: number,
  mode: Mode,
  commandMode: CommandMode,
  left: Vec6,
  right: Vec6,
): CommandFrame {
  if (!Number.isInteger(seq) || seq < 0) {
    throw new SchemaError("seq must be a non-negative integer");
  }
  return {
    v: PROTOCOL_VERSION,
    type: "command",
    seq,
    mode,
    command: commandMode,
    left: clampToBounds(left, commandMode),
    right: clampToBounds(right, commandMode),
  };
}

/** Roll/pitch/yaw (XYZ, rad) of a unit quaternion (w, x, y, z). */
export function quatToRpy(q: [number, number, number, number]): [number, number, number] {
  const [w, x, y, z] = q;
  const roll = Math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y));
  const s = 2 * (w * y - z * x);
  const pitch = Math.abs(s) >= 1 ? Math.sign(s) * (Math.PI / 2) : Math.asin(s);
  const yaw = Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
  return [roll, pitch, yaw];
}

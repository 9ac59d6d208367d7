/**
 * Keyboard teleoperation: held keys map to a twist command for the held
 * object. The mapping is documented in the panel itself (see app.ts).
 *
 *   W/S  +x / -x      A/D  +y / -y      R/F  +z / -z       (linear, m/s)
 *   I/K  +roll/-roll  J/L  +yaw/-yaw    U/O  +pitch/-pitch (angular, rad/s)
 */

import { Vec6 } from "./protocol.js";

export const KEY_HELP: ReadonlyArray<[string, string]> = [
  ["W / S", "forward / back (x)"],
  ["A / D", "left / right (y)"],
  ["R / F", "up / down (z)"],
  ["I / K", "roll + / -"],
  ["U / O", "pitch + / -"],
  ["J / L", "yaw + / -"],
];

export const LINEAR_RATE = 0.1; // m/s per held key
export const ANGULAR_RATE = 0.3; // rad/s per held key

const KEY_AXES: Record<string, { axis: number; sign: number }> = {
  i: { axis: 0, sign: +1 },
  k: { axis: 0, sign: -1 },
  u: { axis: 1, sign: +1 },
  o: { axis: 1, sign: -1 },
  j: { axis: 2, sign: +1 },
  l: { axis: 2, sign: -1 },
  w: { axis: 3, sign: +1 },
  s: { axis: 3, sign: -1 },
  a: { axis: 4, sign: +1 },
  d: { axis: 4, sign: -1 },
  r: { axis: 5, sign: +1 },
  f: { axis: 5, sign: -1 },
};

export class KeyTracker {
  private held = new Set<string>();

  keyDown(key: string): boolean {
    const k = key.toLowerCase();
    if (!(k in KEY_AXES)) return false;
    this.held.add(k);
    return true;
  }

  keyUp(key: string): boolean {
    const k = key.toLowerCase();
    if (!(k in KEY_AXES)) return false;
    this.held.delete(k);
    return true;
  }

  releaseAll(): void {
    this.held.clear();
  }

  get anyHeld(): boolean {
    return this.held.size > 0;
  }

  /** Current twist from the held keys, (angular; linear) ordering. */
  twist(): Vec6 {
    const v: Vec6 = [0, 0, 0, 0, 0, 0];
    for (const key of this.held) {
      const m = KEY_AXES[key];
      if (m === undefined) continue;
      const rate = m.axis < 3 ? ANGULAR_RATE : LINEAR_RATE;
      v[m.axis] = (v[m.axis] ?? 0) + m.sign * rate;
    }
    return v;
  }
}
